//! Nested-dissection ordering on the symmetrized sparsity graph.
//!
//! Separators are BFS level sets rooted at a pseudo-peripheral vertex, which
//! on the regular-grid stencils used here yields straight or diagonal cuts.
//! The result is an assembly tree of supernodes stored in postorder.

use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone)]
pub(crate) struct Supernode {
    /// Vertices eliminated at this node, in elimination order.
    pub pivots: Vec<usize>,
    pub children: Vec<usize>,
}

/// Supernodes in postorder: every child precedes its parent and each
/// subtree occupies a contiguous index range.
#[derive(Debug, Clone)]
pub(crate) struct AssemblyTree {
    pub nodes: Vec<Supernode>,
}

/// Symmetric adjacency structure without self loops.
pub(crate) struct Graph {
    xadj: Vec<usize>,
    adj: Vec<usize>,
}

impl Graph {
    pub fn from_pattern<T: Scalar>(a: &CsrMatrix<T>) -> Self {
        let n = a.nrows();
        let mut deg = vec![0usize; n + 1];
        for (r, c, _) in a.iter() {
            if r != c {
                deg[r + 1] += 1;
                deg[c + 1] += 1;
            }
        }
        for i in 0..n {
            deg[i + 1] += deg[i];
        }
        let mut next = deg.clone();
        let mut adj = vec![0usize; deg[n]];
        for (r, c, _) in a.iter() {
            if r != c {
                adj[next[r]] = c;
                next[r] += 1;
                adj[next[c]] = r;
                next[c] += 1;
            }
        }
        // dedupe each list
        let mut xadj = Vec::with_capacity(n + 1);
        let mut out = Vec::with_capacity(adj.len());
        xadj.push(0);
        for v in 0..n {
            let list = &mut adj[deg[v]..deg[v + 1]];
            list.sort_unstable();
            let mut last = usize::MAX;
            for &u in list.iter() {
                if u != last {
                    out.push(u);
                    last = u;
                }
            }
            xadj.push(out.len());
        }
        Graph { xadj, adj: out }
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[self.xadj[v]..self.xadj[v + 1]]
    }

    pub fn len(&self) -> usize {
        self.xadj.len() - 1
    }
}

struct Dissector<'g> {
    graph: &'g Graph,
    leaf_size: usize,
    /// membership generation per vertex
    member: Vec<u32>,
    visited: Vec<u32>,
    generation: u32,
    nodes: Vec<Supernode>,
}

pub(crate) fn nested_dissection(graph: &Graph, leaf_size: usize) -> AssemblyTree {
    let n = graph.len();
    let mut d = Dissector {
        graph,
        leaf_size: leaf_size.max(1),
        member: vec![0; n],
        visited: vec![0; n],
        generation: 0,
        nodes: Vec::new(),
    };
    d.dissect((0..n).collect());
    AssemblyTree { nodes: d.nodes }
}

impl Dissector<'_> {
    fn next_generation(&mut self) -> u32 {
        self.generation += 1;
        self.generation
    }

    /// Returns the roots of the subforest built for `verts`.
    fn dissect(&mut self, verts: Vec<usize>) -> Vec<usize> {
        if verts.is_empty() {
            return Vec::new();
        }
        let comps = self.components(&verts);
        comps
            .into_iter()
            .map(|c| self.dissect_connected(c))
            .collect()
    }

    fn components(&mut self, verts: &[usize]) -> Vec<Vec<usize>> {
        let g = self.next_generation();
        for &v in verts {
            self.member[v] = g;
        }
        let seen = self.next_generation();
        let mut comps = Vec::new();
        let mut queue = Vec::new();
        for &s in verts {
            if self.visited[s] == seen {
                continue;
            }
            queue.clear();
            queue.push(s);
            self.visited[s] = seen;
            let mut head = 0;
            while head < queue.len() {
                let v = queue[head];
                head += 1;
                for &u in self.graph.neighbors(v) {
                    if self.member[u] == g && self.visited[u] != seen {
                        self.visited[u] = seen;
                        queue.push(u);
                    }
                }
            }
            comps.push(queue.clone());
        }
        comps
    }

    /// BFS level structure of a connected vertex set (membership must be marked).
    fn levels(&mut self, start: usize, g: u32) -> Vec<Vec<usize>> {
        let seen = self.next_generation();
        let mut levels = vec![vec![start]];
        self.visited[start] = seen;
        loop {
            let mut next = Vec::new();
            for &v in levels.last().unwrap() {
                for &u in self.graph.neighbors(v) {
                    if self.member[u] == g && self.visited[u] != seen {
                        self.visited[u] = seen;
                        next.push(u);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            levels.push(next);
        }
        levels
    }

    fn dissect_connected(&mut self, comp: Vec<usize>) -> usize {
        if comp.len() <= self.leaf_size {
            return self.push_leaf(comp);
        }
        let g = self.next_generation();
        for &v in &comp {
            self.member[v] = g;
        }
        // pseudo-peripheral start vertex
        let mut start = comp[0];
        let mut levels = self.levels(start, g);
        for _ in 0..4 {
            let last = levels.last().unwrap();
            let cand = *last
                .iter()
                .min_by_key(|&&v| self.graph.neighbors(v).len())
                .unwrap();
            let trial = self.levels(cand, g);
            if trial.len() > levels.len() {
                start = cand;
                levels = trial;
            } else {
                break;
            }
        }
        let _ = start;
        if levels.len() < 3 {
            return self.push_leaf(comp);
        }
        let half = comp.len() / 2;
        let mut acc = 0;
        let mut cut = 1;
        for (l, lev) in levels.iter().enumerate() {
            acc += lev.len();
            if acc >= half {
                cut = l;
                break;
            }
        }
        let cut = cut.clamp(1, levels.len() - 2);

        // Thin the separator: a level-`cut` vertex with no neighbor beyond the
        // cut can join the near side without reconnecting the two parts.
        let beyond = self.next_generation();
        for &v in &levels[cut + 1] {
            self.visited[v] = beyond;
        }
        let mut part_a: Vec<usize> = levels[..cut].concat();
        let mut sep = Vec::with_capacity(levels[cut].len());
        for &v in &levels[cut] {
            if self.graph.neighbors(v).iter().any(|&u| self.visited[u] == beyond) {
                sep.push(v);
            } else {
                part_a.push(v);
            }
        }
        let part_b: Vec<usize> = levels[cut + 1..].concat();

        let mut children = self.dissect(part_a);
        children.extend(self.dissect(part_b));
        self.nodes.push(Supernode {
            pivots: sep,
            children,
        });
        self.nodes.len() - 1
    }

    fn push_leaf(&mut self, mut verts: Vec<usize>) -> usize {
        verts.sort_unstable();
        self.nodes.push(Supernode {
            pivots: verts,
            children: Vec::new(),
        });
        self.nodes.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_laplacian(nz: usize, nx: usize) -> CsrMatrix<f64> {
        let mut t = Vec::new();
        for ix in 0..nx {
            for iz in 0..nz {
                let i = iz + ix * nz;
                t.push((i, i, 4.0));
                if iz + 1 < nz {
                    t.push((i, i + 1, -1.0));
                    t.push((i + 1, i, -1.0));
                }
                if ix + 1 < nx {
                    t.push((i, i + nz, -1.0));
                    t.push((i + nz, i, -1.0));
                }
            }
        }
        CsrMatrix::from_triplets(nz * nx, nz * nx, &t).unwrap()
    }

    #[test]
    fn every_vertex_is_eliminated_exactly_once() {
        let a = grid_laplacian(23, 31);
        let g = Graph::from_pattern(&a);
        let tree = nested_dissection(&g, 16);
        let mut seen = vec![0u8; a.nrows()];
        for node in &tree.nodes {
            for &v in &node.pivots {
                seen[v] += 1;
            }
        }
        assert!(seen.iter().all(|&s| s == 1));
    }

    #[test]
    fn children_precede_parents() {
        let a = grid_laplacian(17, 19);
        let tree = nested_dissection(&Graph::from_pattern(&a), 8);
        for (id, node) in tree.nodes.iter().enumerate() {
            for &c in &node.children {
                assert!(c < id);
            }
        }
    }

    #[test]
    fn separators_disconnect_the_halves() {
        // no edge may join two different child subtrees of the same node
        let a = grid_laplacian(20, 20);
        let g = Graph::from_pattern(&a);
        let tree = nested_dissection(&g, 10);
        let mut owner = vec![usize::MAX; a.nrows()];
        fn mark(tree: &AssemblyTree, id: usize, tag: usize, owner: &mut [usize]) {
            for &v in &tree.nodes[id].pivots {
                owner[v] = tag;
            }
            for &c in &tree.nodes[id].children {
                mark(tree, c, tag, owner);
            }
        }
        for node in &tree.nodes {
            if node.children.len() < 2 {
                continue;
            }
            owner.iter_mut().for_each(|o| *o = usize::MAX);
            for (k, &c) in node.children.iter().enumerate() {
                mark(&tree, c, k, &mut owner);
            }
            for v in 0..a.nrows() {
                for &u in g.neighbors(v) {
                    if owner[v] != usize::MAX && owner[u] != usize::MAX {
                        assert_eq!(owner[v], owner[u]);
                    }
                }
            }
        }
    }
}
