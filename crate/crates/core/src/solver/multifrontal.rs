//! Multifrontal sparse direct factorization.
//!
//! Two kernels share one symbolic phase:
//! * `General`: `P A = L U` with partial pivoting restricted to the fully
//!   summed rows of each front (no delayed pivots).
//! * `Hermitian`: `A = L D L^H` without pivoting, for Hermitian positive
//!   definite matrices. Only lower triangles of the fronts are touched.

use crate::error::{Error, Result};
use crate::scalar::{RealScalar, Scalar};
use crate::sparse::CsrMatrix;
use num_traits::{Float, Zero};

use super::ordering::{nested_dissection, AssemblyTree, Graph};

const LEAF_SIZE: usize = 48;
/// A pivot is accepted in place if it is at least this fraction of the
/// largest candidate in its column.
const PIVOT_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    General,
    Hermitian,
}

#[derive(Debug, Clone)]
struct FrontFactor<T> {
    pivots: Vec<usize>,
    update: Vec<usize>,
    /// `nf x ns` column-major; unit diagonal implied.
    lower: Vec<T>,
    /// General: `ns x nf` column-major upper factor rows.
    upper: Vec<T>,
    /// Hermitian: pivots of `D`.
    diag: Vec<T>,
    /// General: factored row `k` came from local row `perm[k]`.
    perm: Vec<usize>,
}

impl<T> FrontFactor<T> {
    #[inline]
    fn ns(&self) -> usize {
        self.pivots.len()
    }
    #[inline]
    fn nf(&self) -> usize {
        self.pivots.len() + self.update.len()
    }
}

/// A reusable sparse factorization. Immutable once built; solves only need `&self`.
#[derive(Debug, Clone)]
pub struct Factorization<T> {
    n: usize,
    kind: FactorKind,
    fronts: Vec<FrontFactor<T>>,
}

struct Symbolic {
    tree: AssemblyTree,
    updates: Vec<Vec<usize>>,
}

fn symbolic<T: Scalar>(a: &CsrMatrix<T>) -> Symbolic {
    let n = a.nrows();
    let graph = Graph::from_pattern(a);
    let tree = nested_dissection(&graph, LEAF_SIZE);
    let mut position = vec![0usize; n];
    let mut next = 0;
    for node in &tree.nodes {
        for &v in &node.pivots {
            position[v] = next;
            next += 1;
        }
    }
    let mut updates: Vec<Vec<usize>> = Vec::with_capacity(tree.nodes.len());
    let mut mark = vec![usize::MAX; n];
    for (id, node) in tree.nodes.iter().enumerate() {
        let last = node
            .pivots
            .iter()
            .map(|&v| position[v])
            .max()
            .unwrap_or(0);
        let mut set = Vec::new();
        let mut consider = |u: usize, set: &mut Vec<usize>| {
            if position[u] > last && mark[u] != id {
                mark[u] = id;
                set.push(u);
            }
        };
        for &v in &node.pivots {
            for &u in graph.neighbors(v) {
                consider(u, &mut set);
            }
        }
        for &c in &node.children {
            for &u in &updates[c] {
                consider(u, &mut set);
            }
        }
        set.sort_unstable_by_key(|&u| position[u]);
        updates.push(set);
    }
    Symbolic { tree, updates }
}

impl<T: Scalar> Factorization<T> {
    /// LU factorization of a general square matrix.
    pub fn lu(a: &CsrMatrix<T>) -> Result<Self> {
        Self::build(a, FactorKind::General)
    }

    /// `L D L^H` factorization of a Hermitian positive definite matrix.
    pub fn ldlh(a: &CsrMatrix<T>) -> Result<Self> {
        Self::build(a, FactorKind::Hermitian)
    }

    pub fn kind(&self) -> FactorKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored factor entries (both triangles for LU).
    pub fn factor_nnz(&self) -> usize {
        self.fronts
            .iter()
            .map(|f| f.lower.len() + f.upper.len() + f.diag.len())
            .sum()
    }

    fn build(a: &CsrMatrix<T>, kind: FactorKind) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                what: "factorization requires a square matrix; columns",
                expected: a.nrows(),
                got: a.ncols(),
            });
        }
        let n = a.nrows();
        let sym = symbolic(a);
        let at = a.transpose();
        let eps: f64 = num_traits::ToPrimitive::to_f64(&T::Real::epsilon()).unwrap();
        let amax: f64 = num_traits::ToPrimitive::to_f64(&a.max_abs()).unwrap();
        let tol = T::Real::lit(16.0 * (n.max(1) as f64) * eps * amax);

        let mut local = vec![usize::MAX; n];
        let mut pending: Vec<Option<Vec<T>>> = vec![None; sym.tree.nodes.len()];
        let mut fronts = Vec::with_capacity(sym.tree.nodes.len());
        let mut step = 0usize;

        for (id, node) in sym.tree.nodes.iter().enumerate() {
            let pivots = node.pivots.clone();
            let update = sym.updates[id].clone();
            let ns = pivots.len();
            let nt = update.len();
            let nf = ns + nt;
            for (k, &v) in pivots.iter().chain(update.iter()).enumerate() {
                local[v] = k;
            }
            let mut f = vec![T::zero(); nf * nf];
            let hermitian = kind == FactorKind::Hermitian;

            // original entries: rows of S (all front columns), then columns of S (rows in T)
            for (ls, &v) in pivots.iter().enumerate() {
                let (cols, vals) = a.row(v);
                for (&j, &x) in cols.iter().zip(vals) {
                    let lj = local[j];
                    if lj == usize::MAX || (hermitian && lj > ls) {
                        continue;
                    }
                    f[ls + lj * nf] += x;
                }
                let (rows, vals) = at.row(v);
                for (&i, &x) in rows.iter().zip(vals) {
                    let li = local[i];
                    if li != usize::MAX && li >= ns {
                        f[li + ls * nf] += x;
                    }
                }
            }
            // extend-add of children's Schur complements
            for &c in &node.children {
                let cu = &sym.updates[c];
                let block = pending[c].take().expect("child update present");
                let m = cu.len();
                let map: Vec<usize> = cu.iter().map(|&u| local[u]).collect();
                for (cj, &lj) in map.iter().enumerate() {
                    let ci0 = if hermitian { cj } else { 0 };
                    for ci in ci0..m {
                        f[map[ci] + lj * nf] += block[ci + cj * m];
                    }
                }
            }

            let factor = match kind {
                FactorKind::General => factor_front_lu(&mut f, nf, ns, tol, step)?,
                FactorKind::Hermitian => {
                    factor_front_ldlh(&mut f, nf, ns, T::Real::min_positive_value(), step)?
                }
            };
            let (lower, upper, diag, perm) = factor;
            if nt > 0 {
                let mut schur = vec![T::zero(); nt * nt];
                for j in 0..nt {
                    let src = &f[ns + (ns + j) * nf..ns + (ns + j) * nf + nt];
                    schur[j * nt..(j + 1) * nt].copy_from_slice(src);
                }
                pending[id] = Some(schur);
            }
            for &v in pivots.iter().chain(update.iter()) {
                local[v] = usize::MAX;
            }
            step += ns;
            fronts.push(FrontFactor {
                pivots,
                update,
                lower,
                upper,
                diag,
                perm,
            });
        }
        Ok(Self { n, kind, fronts })
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [T]) {
        assert_eq!(x.len(), self.n, "right-hand side length");
        match self.kind {
            FactorKind::General => self.solve_lu(x),
            FactorKind::Hermitian => self.solve_ldlh(x),
        }
    }

    /// Solves `A^H x = b`.
    pub fn solve_conj_transpose(&self, b: &[T]) -> Vec<T> {
        match self.kind {
            FactorKind::Hermitian => self.solve(b),
            FactorKind::General => {
                let mut x: Vec<T> = b.iter().map(|v| v.conj()).collect();
                self.solve_lu_transpose(&mut x);
                x.iter_mut().for_each(|v| *v = v.conj());
                x
            }
        }
    }

    /// Solves `A^T x = b`.
    pub fn solve_transpose(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        match self.kind {
            FactorKind::General => self.solve_lu_transpose(&mut x),
            FactorKind::Hermitian => {
                // A^T = conj(A) for Hermitian A
                x.iter_mut().for_each(|v| *v = v.conj());
                self.solve_ldlh(&mut x);
                x.iter_mut().for_each(|v| *v = v.conj());
            }
        }
        x
    }

    fn solve_lu(&self, x: &mut [T]) {
        let mut w = Vec::new();
        for fr in &self.fronts {
            let (ns, nf) = (fr.ns(), fr.nf());
            w.clear();
            w.extend(fr.perm.iter().map(|&p| x[fr.pivots[p]]));
            for k in 0..ns {
                let wk = w[k];
                if wk == T::zero() {
                    continue;
                }
                let col = &fr.lower[k * nf..(k + 1) * nf];
                for i in k + 1..ns {
                    w[i] -= col[i] * wk;
                }
                for (t, &u) in fr.update.iter().enumerate() {
                    x[u] -= col[ns + t] * wk;
                }
            }
            for (k, &v) in fr.pivots.iter().enumerate() {
                x[v] = w[k];
            }
        }
        for fr in self.fronts.iter().rev() {
            let ns = fr.ns();
            w.clear();
            w.extend(fr.pivots.iter().map(|&v| x[v]));
            for (t, &u) in fr.update.iter().enumerate() {
                let xu = x[u];
                if xu == T::zero() {
                    continue;
                }
                let col = &fr.upper[(ns + t) * ns..(ns + t + 1) * ns];
                for i in 0..ns {
                    w[i] -= col[i] * xu;
                }
            }
            for k in (0..ns).rev() {
                let col = &fr.upper[k * ns..(k + 1) * ns];
                w[k] /= col[k];
                let wk = w[k];
                for i in 0..k {
                    w[i] -= col[i] * wk;
                }
            }
            for (k, &v) in fr.pivots.iter().enumerate() {
                x[v] = w[k];
            }
        }
    }

    fn solve_lu_transpose(&self, x: &mut [T]) {
        let mut w = Vec::new();
        // U^T sweep, children first
        for fr in &self.fronts {
            let ns = fr.ns();
            w.clear();
            w.extend(fr.pivots.iter().map(|&v| x[v]));
            for k in 0..ns {
                let col = &fr.upper[k * ns..(k + 1) * ns];
                let mut s = w[k];
                for i in 0..k {
                    s -= col[i] * w[i];
                }
                w[k] = s / col[k];
            }
            for (t, &u) in fr.update.iter().enumerate() {
                let col = &fr.upper[(ns + t) * ns..(ns + t + 1) * ns];
                let mut s = T::zero();
                for i in 0..ns {
                    s += col[i] * w[i];
                }
                x[u] -= s;
            }
            for (k, &v) in fr.pivots.iter().enumerate() {
                x[v] = w[k];
            }
        }
        // L^T sweep, parents first, then undo the row permutation
        for fr in self.fronts.iter().rev() {
            let (ns, nf) = (fr.ns(), fr.nf());
            w.clear();
            w.extend(fr.pivots.iter().map(|&v| x[v]));
            for k in (0..ns).rev() {
                let col = &fr.lower[k * nf..(k + 1) * nf];
                let mut s = w[k];
                for (t, &u) in fr.update.iter().enumerate() {
                    s -= col[ns + t] * x[u];
                }
                for i in k + 1..ns {
                    s -= col[i] * w[i];
                }
                w[k] = s;
            }
            for (k, &p) in fr.perm.iter().enumerate() {
                x[fr.pivots[p]] = w[k];
            }
        }
    }

    fn solve_ldlh(&self, x: &mut [T]) {
        let mut w = Vec::new();
        for fr in &self.fronts {
            let (ns, nf) = (fr.ns(), fr.nf());
            w.clear();
            w.extend(fr.pivots.iter().map(|&v| x[v]));
            for k in 0..ns {
                let wk = w[k];
                if wk == T::zero() {
                    continue;
                }
                let col = &fr.lower[k * nf..(k + 1) * nf];
                for i in k + 1..ns {
                    w[i] -= col[i] * wk;
                }
                for (t, &u) in fr.update.iter().enumerate() {
                    x[u] -= col[ns + t] * wk;
                }
            }
            for (k, &v) in fr.pivots.iter().enumerate() {
                x[v] = w[k] / fr.diag[k];
            }
        }
        for fr in self.fronts.iter().rev() {
            let (ns, nf) = (fr.ns(), fr.nf());
            w.clear();
            w.extend(fr.pivots.iter().map(|&v| x[v]));
            for k in (0..ns).rev() {
                let col = &fr.lower[k * nf..(k + 1) * nf];
                let mut s = w[k];
                for (t, &u) in fr.update.iter().enumerate() {
                    s -= col[ns + t].conj() * x[u];
                }
                for i in k + 1..ns {
                    s -= col[i].conj() * w[i];
                }
                w[k] = s;
            }
            for (k, &v) in fr.pivots.iter().enumerate() {
                x[v] = w[k];
            }
        }
    }
}

type FrontParts<T> = (Vec<T>, Vec<T>, Vec<T>, Vec<usize>);

/// Partial LU of the leading `ns` columns of a dense `nf x nf` front, followed
/// by the Schur-complement update of the trailing block.
fn factor_front_lu<T: Scalar>(
    f: &mut [T],
    nf: usize,
    ns: usize,
    tol: T::Real,
    step: usize,
) -> Result<FrontParts<T>> {
    let mut perm: Vec<usize> = (0..ns).collect();
    let threshold = T::Real::lit(PIVOT_THRESHOLD);
    for k in 0..ns {
        let mut best = k;
        let mut best_abs = T::Real::zero();
        for r in k..ns {
            let v = f[r + k * nf].modulus();
            if v > best_abs {
                best_abs = v;
                best = r;
            }
        }
        if f[k + k * nf].modulus() >= threshold * best_abs {
            best = k;
        }
        let piv_abs = f[best + k * nf].modulus();
        if !(piv_abs > tol) {
            return Err(Error::SingularPivot { pivot: step + k });
        }
        if best != k {
            for j in 0..nf {
                f.swap(k + j * nf, best + j * nf);
            }
            perm.swap(k, best);
        }
        let inv = T::one() / f[k + k * nf];
        for i in k + 1..nf {
            f[i + k * nf] *= inv;
        }
        // update remaining panel columns
        for j in k + 1..ns {
            let u = f[k + j * nf];
            if u == T::zero() {
                continue;
            }
            let (left, right) = f.split_at_mut(j * nf);
            let lcol = &left[k * nf..(k + 1) * nf];
            let col = &mut right[..nf];
            for i in k + 1..nf {
                col[i] -= lcol[i] * u;
            }
        }
    }
    let nt = nf - ns;
    // U_ST = L_SS^{-1} F_ST, then F_TT -= L_TS U_ST
    for j in ns..nf {
        let (left, right) = f.split_at_mut(j * nf);
        let col = &mut right[..nf];
        for k in 0..ns {
            let u = col[k];
            if u == T::zero() {
                continue;
            }
            let lcol = &left[k * nf..(k + 1) * nf];
            for i in k + 1..ns {
                col[i] -= lcol[i] * u;
            }
        }
    }
    if nt > 0 {
        schur_update(f, nf, ns, false);
    }
    let mut lower = vec![T::zero(); nf * ns];
    for k in 0..ns {
        lower[k * nf..(k + 1) * nf].copy_from_slice(&f[k * nf..(k + 1) * nf]);
    }
    let mut upper = vec![T::zero(); ns * nf];
    for j in 0..nf {
        upper[j * ns..(j + 1) * ns].copy_from_slice(&f[j * nf..j * nf + ns]);
    }
    Ok((lower, upper, Vec::new(), perm))
}

/// `F_TT -= L_TS * W` with `W` held in rows `0..ns` of the trailing columns.
fn schur_update<T: Scalar>(f: &mut [T], nf: usize, ns: usize, lower_only: bool) {
    const KB: usize = 64;
    let mut k0 = 0;
    while k0 < ns {
        let k1 = (k0 + KB).min(ns);
        for j in ns..nf {
            let (left, right) = f.split_at_mut(j * nf);
            let col = &mut right[..nf];
            let i0 = if lower_only { j } else { ns };
            for k in k0..k1 {
                let u = col[k];
                if u == T::zero() {
                    continue;
                }
                let lcol = &left[k * nf..(k + 1) * nf];
                for (ci, li) in col[i0..].iter_mut().zip(&lcol[i0..]) {
                    *ci -= *li * u;
                }
            }
        }
        k0 = k1;
    }
}

/// `L D L^H` of the leading `ns` columns; only the lower triangle of `f` is read.
fn factor_front_ldlh<T: Scalar>(
    f: &mut [T],
    nf: usize,
    ns: usize,
    tol: T::Real,
    step: usize,
) -> Result<FrontParts<T>> {
    let mut diag = Vec::with_capacity(ns);
    for k in 0..ns {
        let d = f[k + k * nf];
        if !(d.real() > tol && d.real().is_finite()) {
            return Err(Error::SingularPivot { pivot: step + k });
        }
        let d = T::from_real(d.real());
        diag.push(d);
        let inv = T::one() / d;
        for j in k + 1..ns {
            let c = f[j + k * nf].conj() * inv;
            if c == T::zero() {
                continue;
            }
            let (left, right) = f.split_at_mut(j * nf);
            let lcol = &left[k * nf..(k + 1) * nf];
            let col = &mut right[..nf];
            for i in j..nf {
                col[i] -= lcol[i] * c;
            }
        }
        for i in k + 1..nf {
            f[i + k * nf] *= inv;
        }
    }
    let nt = nf - ns;
    if nt > 0 {
        // W[k, j] = d_k conj(L[j, k]) stored in the (unused) upper rows of column j
        for j in ns..nf {
            for k in 0..ns {
                f[k + j * nf] = diag[k] * f[j + k * nf].conj();
            }
        }
        schur_update(f, nf, ns, true);
    }
    let mut lower = vec![T::zero(); nf * ns];
    for k in 0..ns {
        lower[k * nf..(k + 1) * nf].copy_from_slice(&f[k * nf..(k + 1) * nf]);
    }
    Ok((lower, Vec::new(), diag, Vec::new()))
}
