//! Frequency-domain Helmholtz operator `A(m) = Lap + diag(w^2 sx sz m)` with
//! perfectly matched layers realized by complex coordinate stretching.
//!
//! The stretched equation is multiplied through by `sx sz`, which gives the
//! symmetric form `d/dx (sz/sx d/dx) + d/dz (sx/sz d/dz) + w^2 sx sz m`.
//! Stretch factors on the half nodes are shared by both neighbours, so the
//! assembled matrix is exactly complex symmetric. Outside the grid the field
//! is zero.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Model};
use crate::sparse::CsrMatrix;

/// Multiplier of `v_max / L` in the default peak damping.
pub const DEFAULT_SIGMA_FACTOR: f64 = 90.0;
pub const DEFAULT_PML_CELLS: usize = 10;
pub const DEFAULT_PML_EXPONENT: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmlProfile {
    pub n_pml: usize,
    /// Peak damping in 1/s.
    pub sigma_max: f64,
    pub exponent: f64,
}

impl PmlProfile {
    /// Default profile for a medium whose fastest velocity is `v_max`.
    /// The layer thickness is taken along the coarser axis.
    pub fn for_velocity(grid: &Grid, v_max: f64) -> Self {
        Self::with_factor(grid, v_max, DEFAULT_PML_CELLS, DEFAULT_SIGMA_FACTOR)
    }

    pub fn with_factor(grid: &Grid, v_max: f64, n_pml: usize, factor: f64) -> Self {
        let thickness = n_pml as f64 * grid.dz.max(grid.dx);
        let sigma_max = if n_pml == 0 { 0.0 } else { factor * v_max / thickness };
        Self {
            n_pml,
            sigma_max,
            exponent: DEFAULT_PML_EXPONENT,
        }
    }

    pub fn none() -> Self {
        Self {
            n_pml: 0,
            sigma_max: 0.0,
            exponent: DEFAULT_PML_EXPONENT,
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.sigma_max >= 0.0 && self.sigma_max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "pml sigma_max must be >= 0, got {}",
                self.sigma_max
            )));
        }
        if !(self.exponent >= 1.0 && self.exponent.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "pml exponent must be >= 1, got {}",
                self.exponent
            )));
        }
        if 2 * self.n_pml >= grid.nz || 2 * self.n_pml >= grid.nx {
            return Err(Error::InvalidConfig(format!(
                "pml of {} cells does not fit a {}x{} grid",
                self.n_pml, grid.nz, grid.nx
            )));
        }
        Ok(())
    }

    /// Stretch factor `1 + i sigma / w` at fractional node position `pos`
    /// along an axis of `n` nodes.
    fn stretch(&self, pos: f64, n: usize, omega: f64) -> Complex64 {
        if self.n_pml == 0 || self.sigma_max == 0.0 {
            return Complex64::new(1.0, 0.0);
        }
        let np = self.n_pml as f64;
        let cells = (np - pos).max(pos - ((n - 1) as f64 - np)).clamp(0.0, np);
        let sigma = self.sigma_max * (cells / np).powf(self.exponent);
        Complex64::new(1.0, sigma / omega)
    }

    /// Stretch factors on the nodes and on the half nodes `i + 1/2`
    /// (index `i + 1` in the second vector, `0` for `-1/2`).
    fn axis(&self, n: usize, omega: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        let nodes = (0..n).map(|i| self.stretch(i as f64, n, omega)).collect();
        let halves = (0..=n)
            .map(|i| self.stretch(i as f64 - 0.5, n, omega))
            .collect();
        (nodes, halves)
    }
}

/// Finite-difference stencil of the operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    /// Second-order 5-point Laplacian with a lumped mass term.
    FivePoint,
    /// Weighted cross/rotated 9-point Laplacian with the mass term spread over
    /// the 3x3 neighbourhood (optimal weights of Jo, Shin and Suh, 1996).
    /// Requires `dz == dx`.
    #[default]
    NinePoint,
}

// Jo, Shin & Suh (1996) optimal weights
const NINE_CROSS_WEIGHT: f64 = 0.5461;
const NINE_MASS_CENTRE: f64 = 0.6248;
const NINE_MASS_EDGE: f64 = 0.09381;
const NINE_MASS_CORNER: f64 = (1.0 - NINE_MASS_CENTRE - 4.0 * NINE_MASS_EDGE) / 4.0;

/// The PML-stretched 5-point Laplacian.
pub fn assemble_laplacian(grid: &Grid, omega: f64, pml: &PmlProfile) -> Result<CsrMatrix<Complex64>> {
    Ok(assemble_parts(grid, omega, pml, Stencil::FivePoint)?.0)
}

type Parts = (CsrMatrix<Complex64>, Vec<Complex64>, Option<CsrMatrix<f64>>);

fn assemble_parts(grid: &Grid, omega: f64, pml: &PmlProfile, stencil: Stencil) -> Result<Parts> {
    grid.validate()?;
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidInput(format!("angular frequency must be positive, got {omega}")));
    }
    pml.validate(grid)?;
    if stencil == Stencil::NinePoint && grid.dz != grid.dx {
        return Err(Error::InvalidConfig(format!(
            "the nine-point stencil needs square cells, got dz = {}, dx = {}",
            grid.dz, grid.dx
        )));
    }
    let (nz, nx) = (grid.nz, grid.nx);
    let (sz, sz_half) = pml.axis(nz, omega);
    let (sx, sx_half) = pml.axis(nx, omega);
    let idz2 = 1.0 / (grid.dz * grid.dz);
    let idx2 = 1.0 / (grid.dx * grid.dx);
    let cross = match stencil {
        Stencil::FivePoint => 1.0,
        Stencil::NinePoint => NINE_CROSS_WEIGHT,
    };

    let mut triplets = Vec::with_capacity(9 * grid.len());
    let mut mass = Vec::with_capacity(grid.len());
    for ix in 0..nx {
        for iz in 0..nz {
            let row = grid.index(iz, ix);
            // d/dz (sx/sz d/dz) through the half nodes above and below, and
            // d/dx (sz/sx d/dx) through the half nodes left and right
            let cz_up = sx[ix] / sz_half[iz] * idz2 * cross;
            let cz_dn = sx[ix] / sz_half[iz + 1] * idz2 * cross;
            let cx_lt = sz[iz] / sx_half[ix] * idx2 * cross;
            let cx_rt = sz[iz] / sx_half[ix + 1] * idx2 * cross;
            if ix > 0 {
                triplets.push((row, grid.index(iz, ix - 1), cx_lt));
            }
            if iz > 0 {
                triplets.push((row, row - 1, cz_up));
            }
            triplets.push((row, row, -(cz_up + cz_dn + cx_lt + cx_rt)));
            if iz + 1 < nz {
                triplets.push((row, row + 1, cz_dn));
            }
            if ix + 1 < nx {
                triplets.push((row, grid.index(iz, ix + 1), cx_rt));
            }
            mass.push(sx[ix] * sz[iz] * (omega * omega));
        }
    }

    let spread = match stencil {
        Stencil::FivePoint => None,
        Stencil::NinePoint => {
            add_cell_terms(grid, &sz_half, &sx_half, 1.0 - cross, &mut triplets);
            Some(mass_spread(grid)?)
        }
    };
    let lap = CsrMatrix::from_triplets(grid.len(), grid.len(), &triplets)?;
    Ok((lap, mass, spread))
}

/// Cell-centred form `-sum_cells (a gx_i gx_j + b gz_i gz_j)` with the
/// bilinear cell gradient; on square cells and without stretching it is the
/// rotated 5-point Laplacian. Cells straddling the boundary see zero field
/// outside.
fn add_cell_terms(
    grid: &Grid,
    sz_half: &[Complex64],
    sx_half: &[Complex64],
    weight: f64,
    triplets: &mut Vec<(usize, usize, Complex64)>,
) {
    let (nz, nx) = (grid.nz as isize, grid.nx as isize);
    // corners NW, NE, SW, SE as (dz, dx) offsets from the cell's top-left node
    const CORNERS: [(isize, isize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];
    let gx = [-1.0, 1.0, -1.0, 1.0].map(|v| v / (2.0 * grid.dx));
    let gz = [-1.0, -1.0, 1.0, 1.0].map(|v| v / (2.0 * grid.dz));
    for cx in -1..nx {
        for cz in -1..nz {
            let szc = sz_half[(cz + 1) as usize];
            let sxc = sx_half[(cx + 1) as usize];
            let a = szc / sxc * weight;
            let b = sxc / szc * weight;
            for (p, &(oz, ox)) in CORNERS.iter().enumerate() {
                let (iz, ix) = (cz + oz, cx + ox);
                if iz < 0 || ix < 0 || iz >= nz || ix >= nx {
                    continue;
                }
                let row = grid.index(iz as usize, ix as usize);
                for (q, &(pz, px)) in CORNERS.iter().enumerate() {
                    let (jz, jx) = (cz + pz, cx + px);
                    if jz < 0 || jx < 0 || jz >= nz || jx >= nx {
                        continue;
                    }
                    let v = -(a * (gx[p] * gx[q]) + b * (gz[p] * gz[q]));
                    if v != Complex64::new(0.0, 0.0) {
                        triplets.push((row, grid.index(jz as usize, jx as usize), v));
                    }
                }
            }
        }
    }
}

/// Off-diagonal mass-spreading weights (edge and corner neighbours).
fn mass_spread(grid: &Grid) -> Result<CsrMatrix<f64>> {
    let (nz, nx) = (grid.nz as isize, grid.nx as isize);
    let mut triplets = Vec::with_capacity(8 * grid.len());
    for ix in 0..nx {
        for iz in 0..nz {
            let row = grid.index(iz as usize, ix as usize);
            for dx in -1..=1isize {
                for dz in -1..=1isize {
                    let (jz, jx) = (iz + dz, ix + dx);
                    if (dz == 0 && dx == 0) || jz < 0 || jx < 0 || jz >= nz || jx >= nx {
                        continue;
                    }
                    let w = if dz == 0 || dx == 0 { NINE_MASS_EDGE } else { NINE_MASS_CORNER };
                    triplets.push((row, grid.index(jz as usize, jx as usize), w));
                }
            }
        }
    }
    CsrMatrix::from_triplets(grid.len(), grid.len(), &triplets)
}

/// Helmholtz operator at one angular frequency; immutable once built.
///
/// With the 5-point stencil the mass term is `diag(mass_weights o m)`. The
/// 9-point stencil spreads it symmetrically: entry `(i, j)` of the mass
/// matrix is `w_ij (c_i m_i + c_j m_j) / 2` with `c = mass_weights`, which
/// keeps `A(m)` complex symmetric and linear in `m`.
#[derive(Debug, Clone)]
pub struct HelmholtzOperator {
    pub grid: Grid,
    /// Angular frequency in rad/s.
    pub omega: f64,
    pub pml: PmlProfile,
    pub stencil: Stencil,
    pub laplacian: CsrMatrix<Complex64>,
    /// Diagonal of `w^2 C`; equals `w^2` outside the layers.
    pub mass_weights: Vec<Complex64>,
    spread: Option<CsrMatrix<f64>>,
}

impl HelmholtzOperator {
    pub fn new(grid: Grid, omega: f64, pml: PmlProfile) -> Result<Self> {
        Self::with_stencil(grid, omega, pml, Stencil::default())
    }

    pub fn with_stencil(grid: Grid, omega: f64, pml: PmlProfile, stencil: Stencil) -> Result<Self> {
        let (laplacian, mass_weights, spread) = assemble_parts(&grid, omega, &pml, stencil)?;
        Ok(Self {
            grid,
            omega,
            pml,
            stencil,
            laplacian,
            mass_weights,
            spread,
        })
    }

    pub fn from_frequency(grid: Grid, hz: f64, pml: PmlProfile, stencil: Stencil) -> Result<Self> {
        Self::with_stencil(grid, 2.0 * std::f64::consts::PI * hz, pml, stencil)
    }

    pub fn n(&self) -> usize {
        self.grid.len()
    }

    fn centre_weight(&self) -> f64 {
        match self.spread {
            Some(_) => NINE_MASS_CENTRE,
            None => 1.0,
        }
    }

    /// `A(m)` for a model on this operator's grid.
    pub fn assemble_a(&self, m: &Model) -> Result<CsrMatrix<Complex64>> {
        if m.grid != self.grid {
            return Err(Error::InvalidInput(format!(
                "model grid {:?} does not match operator grid {:?}",
                m.grid, self.grid
            )));
        }
        self.assemble_a_values(&m.values)
    }

    /// `A(m)` from raw squared-slowness values (which may be nonphysical).
    pub fn assemble_a_values(&self, m: &[f64]) -> Result<CsrMatrix<Complex64>> {
        self.grid.check_len("model values", m.len())?;
        let cm: Vec<Complex64> = self.mass_weights.iter().zip(m).map(|(w, &v)| w * v).collect();
        let c0 = self.centre_weight();
        let diag: Vec<Complex64> = cm.iter().map(|v| v * c0).collect();
        let a = self.laplacian.add_diagonal(&diag)?;
        match &self.spread {
            None => Ok(a),
            Some(w) => {
                let triplets: Vec<_> = w
                    .iter()
                    .map(|(i, j, wij)| (i, j, (cm[i] + cm[j]) * (0.5 * wij)))
                    .collect();
                let off = CsrMatrix::from_triplets(self.n(), self.n(), &triplets)?;
                a.add_scaled(Complex64::new(1.0, 0.0), &off, Complex64::new(1.0, 0.0))
            }
        }
    }

    /// The matrix `L(u)` with `A(m) u = Lap u + L(u) m`; diagonal for the
    /// 5-point stencil.
    pub fn apply_l(&self, u: &[Complex64]) -> Result<CsrMatrix<Complex64>> {
        self.grid.check_len("wavefield", u.len())?;
        match &self.spread {
            None => Ok(CsrMatrix::from_diagonal(&self.l_diagonal(u)?)),
            Some(w) => {
                let c0 = self.centre_weight();
                let mut diag: Vec<Complex64> = u.iter().map(|v| v * c0).collect();
                let mut triplets = Vec::with_capacity(w.nnz() + self.n());
                for (i, j, wij) in w.iter() {
                    diag[i] += u[j] * (0.5 * wij);
                    triplets.push((i, j, self.mass_weights[j] * u[j] * (0.5 * wij)));
                }
                for (i, d) in diag.iter().enumerate() {
                    triplets.push((i, i, self.mass_weights[i] * d));
                }
                CsrMatrix::from_triplets(self.n(), self.n(), &triplets)
            }
        }
    }

    /// Diagonal entries of `L(u)`.
    pub fn l_diagonal(&self, u: &[Complex64]) -> Result<Vec<Complex64>> {
        self.grid.check_len("wavefield", u.len())?;
        match &self.spread {
            None => Ok(self.mass_weights.iter().zip(u).map(|(w, v)| w * v).collect()),
            Some(_) => Ok(self.apply_l(u)?.diagonal()),
        }
    }

    /// Point source at node `index` consistent with this stencil: the discrete
    /// delta `amplitude / (dz dx)`, spread with the mass weights when the mass
    /// term is spread so the far-field amplitude matches the continuum.
    pub fn point_source(&self, index: usize, amplitude: Complex64) -> Vec<Complex64> {
        let mut b = point_source(&self.grid, index, amplitude);
        if let Some(w) = &self.spread {
            let peak = b[index];
            b[index] = peak * self.centre_weight();
            let (cols, vals) = w.row(index);
            for (&j, &wij) in cols.iter().zip(vals) {
                b[j] = peak * wij;
            }
        }
        b
    }

    /// `A(m) u` without forming `A(m)`.
    pub fn apply_a(&self, m: &[f64], u: &[Complex64]) -> Vec<Complex64> {
        let mut y = self.laplacian.mul_vec(u);
        let c0 = self.centre_weight();
        let cm: Vec<Complex64> = self.mass_weights.iter().zip(m).map(|(w, &v)| w * v).collect();
        for ((y, c), ui) in y.iter_mut().zip(&cm).zip(u) {
            *y += c * ui * c0;
        }
        if let Some(w) = &self.spread {
            for (i, j, wij) in w.iter() {
                y[i] += (cm[i] + cm[j]) * u[j] * (0.5 * wij);
            }
        }
        y
    }
}

/// Discrete delta at node `index` carrying `amplitude`, i.e. `amplitude / (dz dx)`.
pub fn point_source(grid: &Grid, index: usize, amplitude: Complex64) -> Vec<Complex64> {
    let mut b = vec![Complex64::new(0.0, 0.0); grid.len()];
    b[index] = amplitude / (grid.dz * grid.dx);
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_stencil_without_pml() {
        let g = Grid::new(5, 6, 2.0, 4.0).unwrap();
        let lap = assemble_laplacian(&g, 1.0, &PmlProfile::none()).unwrap();
        let r = g.index(2, 3);
        let c = |v: f64| Complex64::new(v, 0.0);
        assert_eq!(lap.get(r, r - 1), c(0.25));
        assert_eq!(lap.get(r, r + 1), c(0.25));
        assert_eq!(lap.get(r, r - 5), c(1.0 / 16.0));
        assert_eq!(lap.get(r, r + 5), c(1.0 / 16.0));
        assert_eq!(lap.get(r, r), c(-0.5 - 0.125));
        assert_eq!(lap.row(r).0.len(), 5);
    }

    #[test]
    fn five_point_symmetric_with_pml() {
        let g = Grid::new(30, 25, 10.0, 12.0).unwrap();
        let pml = PmlProfile::for_velocity(&g, 3000.0);
        let op = HelmholtzOperator::from_frequency(g, 5.0, pml, Stencil::FivePoint).unwrap();
        assert_eq!(op.laplacian.transpose(), op.laplacian);
        let w2 = op.omega * op.omega;
        let centre = g.index(15, 12);
        assert_eq!(op.mass_weights[centre], Complex64::new(w2, 0.0));
        assert!(op.mass_weights[0].im.abs() > 0.0);
        assert!((0..g.len()).all(|r| op.laplacian.row(r).0.len() <= 5));
        let mut u = vec![Complex64::new(0.0, 0.0); g.len()];
        u[centre] = Complex64::new(1.0, 0.0);
        assert_eq!(op.apply_l(&u).unwrap().get(centre, centre), Complex64::new(w2, 0.0));
    }

    #[test]
    fn nine_point_symmetric_with_pml() {
        let g = Grid::new(30, 25, 10.0, 10.0).unwrap();
        let pml = PmlProfile::for_velocity(&g, 3000.0);
        let op = HelmholtzOperator::from_frequency(g, 5.0, pml, Stencil::NinePoint).unwrap();
        let a = op
            .assemble_a_values(&(0..g.len()).map(|i| 1e-7 * (1.0 + (i % 7) as f64)).collect::<Vec<_>>())
            .unwrap();
        assert_eq!(a.transpose(), a);
        assert!((0..g.len()).all(|r| a.row(r).0.len() <= 9));
    }

    #[test]
    fn nine_point_interior_weights() {
        let g = Grid::new(5, 5, 2.0, 2.0).unwrap();
        let lap = assemble_parts(&g, 1.0, &PmlProfile::none(), Stencil::NinePoint).unwrap().0;
        let r = g.index(2, 2);
        let h2 = 4.0;
        let a = NINE_CROSS_WEIGHT;
        let close = |x: Complex64, y: f64| (x - y).norm() < 1e-15;
        assert!(close(lap.get(r, r), -4.0 * a / h2 - 2.0 * (1.0 - a) / h2));
        assert!(close(lap.get(r, r + 1), a / h2));
        assert!(close(lap.get(r, r + 6), (1.0 - a) / (2.0 * h2)));
        // constants are annihilated away from the boundary
        let row_sum: Complex64 = lap.row(r).1.iter().sum();
        assert!(row_sum.norm() < 1e-15);
    }

    #[test]
    fn nine_point_needs_square_cells() {
        let g = Grid::new(10, 10, 1.0, 2.0).unwrap();
        assert!(HelmholtzOperator::new(g, 1.0, PmlProfile::none()).is_err());
    }

    #[test]
    fn oversized_pml_rejected() {
        let g = Grid::new(20, 40, 1.0, 1.0).unwrap();
        let pml = PmlProfile {
            n_pml: 10,
            sigma_max: 1.0,
            exponent: 2.0,
        };
        assert!(matches!(HelmholtzOperator::new(g, 1.0, pml), Err(Error::InvalidConfig(_))));
        assert!(HelmholtzOperator::new(g, 0.0, PmlProfile::none()).is_err());
    }

    #[test]
    fn zero_model_gives_laplacian() {
        let g = Grid::new(6, 7, 1.0, 1.0).unwrap();
        for st in [Stencil::FivePoint, Stencil::NinePoint] {
            let op = HelmholtzOperator::with_stencil(g, 2.0, PmlProfile::none(), st).unwrap();
            let a = op.assemble_a_values(&vec![0.0; g.len()]).unwrap();
            assert_eq!(a.to_dense(), op.laplacian.to_dense());
        }
    }
}
