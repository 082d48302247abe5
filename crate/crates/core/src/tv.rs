//! Difference operators, box projection, the isotropic TV proximity operator
//! and the bookkeeping of the split variables `p = [p0; p1; p2]` and their
//! scaled duals `q`.
//!
//! `grad1` differentiates laterally (along x), `grad2` in depth (along z).
//! Differences are unscaled forward differences whose last plane along the
//! axis is zero, so `grad^T grad` is the graph Laplacian of the grid.

use serde::{Deserialize, Serialize};

use crate::grid::{Bounds, Grid};
use crate::scalar::RealScalar;

pub fn grad1<T: RealScalar>(grid: &Grid, m: &[T]) -> Vec<T> {
    let nz = grid.nz;
    let mut out = vec![T::zero(); m.len()];
    for i in 0..nz * (grid.nx - 1) {
        out[i] = m[i + nz] - m[i];
    }
    out
}

pub fn grad2<T: RealScalar>(grid: &Grid, m: &[T]) -> Vec<T> {
    let nz = grid.nz;
    let mut out = vec![T::zero(); m.len()];
    for ix in 0..grid.nx {
        let c = ix * nz;
        for iz in 0..nz - 1 {
            out[c + iz] = m[c + iz + 1] - m[c + iz];
        }
    }
    out
}

pub fn grad1_adjoint<T: RealScalar>(grid: &Grid, w: &[T]) -> Vec<T> {
    let nz = grid.nz;
    let mut out = vec![T::zero(); w.len()];
    for i in 0..nz * (grid.nx - 1) {
        out[i + nz] += w[i];
        out[i] -= w[i];
    }
    out
}

pub fn grad2_adjoint<T: RealScalar>(grid: &Grid, w: &[T]) -> Vec<T> {
    let nz = grid.nz;
    let mut out = vec![T::zero(); w.len()];
    for ix in 0..grid.nx {
        let c = ix * nz;
        for iz in 0..nz - 1 {
            out[c + iz + 1] += w[c + iz];
            out[c + iz] -= w[c + iz];
        }
    }
    out
}

/// Sum over cells of `sqrt((grad1 m)^2 + (grad2 m)^2)`.
pub fn tv_norm<T: RealScalar>(grid: &Grid, m: &[T]) -> T {
    let g1 = grad1(grid, m);
    let g2 = grad2(grid, m);
    g1.iter().zip(&g2).map(|(a, b)| a.hypot(*b)).sum()
}

/// Elementwise `min(max(x, lower), upper)`.
pub fn project_box(x: &[f64], bounds: &Bounds) -> Vec<f64> {
    assert_eq!(x.len(), bounds.len(), "project_box: length");
    x.iter()
        .zip(bounds.lower.iter().zip(&bounds.upper))
        .map(|(&v, (&l, &u))| v.max(l).min(u))
        .collect()
}

/// Vector soft thresholding of the cellwise pairs `(z1_i, z2_i)`.
pub fn prox_isotropic_tv<T: RealScalar>(z1: &[T], z2: &[T], threshold: T) -> (Vec<T>, Vec<T>) {
    assert_eq!(z1.len(), z2.len(), "prox_isotropic_tv: length");
    let mut p1 = Vec::with_capacity(z1.len());
    let mut p2 = Vec::with_capacity(z1.len());
    for (&a, &b) in z1.iter().zip(z2) {
        let r = a.hypot(b);
        if r > threshold && r > T::zero() {
            let s = (r - threshold) / r;
            p1.push(a * s);
            p2.push(b * s);
        } else {
            p1.push(T::zero());
            p2.push(T::zero());
        }
    }
    (p1, p2)
}

/// Largest cellwise magnitude `max_i |(z1_i, z2_i)|`.
pub fn max_magnitude<T: RealScalar>(z1: &[T], z2: &[T]) -> T {
    z1.iter()
        .zip(z2)
        .map(|(a, b)| a.hypot(*b))
        .fold(T::zero(), T::max)
}

/// Penalty weights of the split constraints: `gamma0` on `p0 = m`, `gamma`
/// on both gradient components.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GammaWeights {
    pub gamma0: f64,
    pub gamma: f64,
}

/// How the soft-threshold level of the TV proximity step is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ThresholdPolicy {
    /// Fraction of `max |(z1, z2)|` of the current prox argument.
    FractionOfMax(f64),
    Absolute(f64),
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::FractionOfMax(0.02)
    }
}

impl ThresholdPolicy {
    pub fn resolve(&self, z1: &[f64], z2: &[f64]) -> f64 {
        match *self {
            ThresholdPolicy::FractionOfMax(f) => f * max_magnitude(z1, z2),
            ThresholdPolicy::Absolute(t) => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitState {
    pub p0: Vec<f64>,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub q0: Vec<f64>,
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
}

impl SplitState {
    pub fn zeros(n: usize) -> Self {
        Self {
            p0: vec![0.0; n],
            p1: vec![0.0; n],
            p2: vec![0.0; n],
            q0: vec![0.0; n],
            q1: vec![0.0; n],
            q2: vec![0.0; n],
        }
    }

    /// `p = grad m` (with `p0` projected when bounds are given) and `q = 0`,
    /// so the first model update is not pulled towards zero.
    pub fn from_model(grid: &Grid, m: &[f64], bounds: Option<&Bounds>) -> Self {
        let n = m.len();
        Self {
            p0: bounds.map_or_else(|| m.to_vec(), |b| project_box(m, b)),
            p1: grad1(grid, m),
            p2: grad2(grid, m),
            q0: vec![0.0; n],
            q1: vec![0.0; n],
            q2: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.p0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p0.is_empty()
    }
}

/// Prox arguments `(m - q0, grad1 m - q1, grad2 m - q2)`.
pub fn prox_arguments(grid: &Grid, m: &[f64], state: &SplitState) -> [Vec<f64>; 3] {
    let sub = |a: Vec<f64>, b: &[f64]| a.into_iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
    [
        sub(m.to_vec(), &state.q0),
        sub(grad1(grid, m), &state.q1),
        sub(grad2(grid, m), &state.q2),
    ]
}

/// `p0 = proj(m - q0)` (identity without bounds) and
/// `(p1, p2) = prox(grad m - q, threshold)`; `q` is untouched.
pub fn update_p(
    grid: &Grid,
    m_new: &[f64],
    state: &SplitState,
    bounds: Option<&Bounds>,
    threshold: f64,
) -> SplitState {
    let [z0, z1, z2] = prox_arguments(grid, m_new, state);
    let p0 = match bounds {
        Some(b) => project_box(&z0, b),
        None => z0,
    };
    let (p1, p2) = prox_isotropic_tv(&z1, &z2, threshold);
    SplitState {
        p0,
        p1,
        p2,
        ..state.clone()
    }
}

/// `q_j += weight * (p_j - grad_j m)` with `grad_0` the identity.
pub fn update_q(grid: &Grid, state: &SplitState, m_new: &[f64], weight: f64) -> SplitState {
    let step = |q: &[f64], p: &[f64], g: &[f64]| -> Vec<f64> {
        q.iter()
            .zip(p.iter().zip(g))
            .map(|(&q, (&p, &g))| q + weight * (p - g))
            .collect()
    };
    SplitState {
        q0: step(&state.q0, &state.p0, m_new),
        q1: step(&state.q1, &state.p1, &grad1(grid, m_new)),
        q2: step(&state.q2, &state.p2, &grad2(grid, m_new)),
        ..state.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g() -> Grid {
        Grid::new(4, 5, 1.0, 1.0).unwrap()
    }

    #[test]
    fn ramp_differences() {
        let g = g();
        let m: Vec<f64> = (0..g.len()).map(|i| 3.0 * g.coords(i).1 as f64).collect();
        let d1 = grad1(&g, &m);
        for i in 0..g.len() {
            let expect = if g.coords(i).1 == g.nx - 1 { 0.0 } else { 3.0 };
            assert_eq!(d1[i], expect);
        }
        assert!(grad2(&g, &m).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prox_scalar_example() {
        let (p1, p2) = prox_isotropic_tv(&[3.0f64, 0.3, 0.0], &[4.0, 0.4, 0.0], 1.0);
        assert!((p1[0] - 2.4).abs() < 1e-15 && (p2[0] - 3.2).abs() < 1e-15);
        assert_eq!((p1[1], p2[1]), (0.0, 0.0));
        assert_eq!((p1[2], p2[2]), (0.0, 0.0));
    }

    #[test]
    fn prox_in_single_precision() {
        let (p1, p2) = prox_isotropic_tv(&[3.0f32], &[4.0f32], 1.0);
        assert!((p1[0] - 2.4).abs() < 1e-6 && (p2[0] - 3.2).abs() < 1e-6);
    }

    #[test]
    fn update_q_half_step() {
        let g = Grid::new(3, 3, 1.0, 1.0).unwrap();
        let mut s = SplitState::zeros(9);
        s.p0 = vec![2.0; 9];
        let s = update_q(&g, &s, &[0.0; 9], 0.5);
        assert!(s.q0.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn threshold_policies() {
        let z1 = [3.0, 0.0];
        let z2 = [4.0, 1.0];
        assert!((ThresholdPolicy::FractionOfMax(0.02).resolve(&z1, &z2) - 0.1).abs() < 1e-16);
        assert_eq!(ThresholdPolicy::Absolute(7.0).resolve(&z1, &z2), 7.0);
    }
}
