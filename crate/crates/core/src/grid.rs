//! Regular 2D grids, squared-slowness models, bound sets and the synthetic
//! model builders.
//!
//! Every grid vector is stored column-major with depth fastest: node
//! `(iz, ix)` lives at `iz + ix * nz`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tv;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nz: usize,
    pub nx: usize,
    /// Depth spacing in metres.
    pub dz: f64,
    /// Lateral spacing in metres.
    pub dx: f64,
}

impl Grid {
    pub fn new(nz: usize, nx: usize, dz: f64, dx: f64) -> Result<Self> {
        let g = Self { nz, nx, dz, dx };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nz < 3 || self.nx < 3 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 3x3 nodes, got nz = {}, nx = {}",
                self.nz, self.nx
            )));
        }
        if !(self.dz > 0.0 && self.dz.is_finite()) {
            return Err(Error::InvalidInput(format!("dz must be positive, got {}", self.dz)));
        }
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return Err(Error::InvalidInput(format!("dx must be positive, got {}", self.dx)));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nz * self.nx
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, iz: usize, ix: usize) -> usize {
        iz + ix * self.nz
    }

    /// Inverse of [`Grid::index`]: `(iz, ix)`.
    #[inline]
    pub fn coords(&self, i: usize) -> (usize, usize) {
        (i % self.nz, i / self.nz)
    }

    /// Physical extent `(depth, width)` in metres, node to node.
    pub fn extent(&self) -> (f64, f64) {
        ((self.nz - 1) as f64 * self.dz, (self.nx - 1) as f64 * self.dx)
    }

    /// The same spacing with `n` extra nodes on every side.
    pub fn padded(&self, n: usize) -> Self {
        Self {
            nz: self.nz + 2 * n,
            nx: self.nx + 2 * n,
            ..*self
        }
    }

    pub fn check_len(&self, what: &'static str, got: usize) -> Result<()> {
        if got != self.len() {
            return Err(Error::DimensionMismatch {
                what,
                expected: self.len(),
                got,
            });
        }
        Ok(())
    }
}

/// Squared slowness (s²/m²) on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Model {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        grid.check_len("model values", values.len())?;
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "squared slowness must be finite and positive, got {v} at node {i}"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Builds a model without the positivity check. Iterates of an inversion
    /// are not guaranteed to stay positive, so they are carried this way.
    pub fn unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        Self { grid, values }
    }

    pub fn constant(grid: Grid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()])
    }

    pub fn from_velocity(grid: Grid, v: &[f64]) -> Result<Self> {
        velocity_to_slowness2(grid, v)
    }

    pub fn velocity(&self) -> Result<Vec<f64>> {
        slowness2_to_velocity(self)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn tv_norm(&self) -> f64 {
        tv_norm(self)
    }

    /// Extends the model by `n` nodes per side, replicating edge values.
    pub fn pad_edge(&self, n: usize) -> Self {
        let g = self.grid;
        let pg = g.padded(n);
        let mut values = Vec::with_capacity(pg.len());
        for ix in 0..pg.nx {
            let sx = ix.saturating_sub(n).min(g.nx - 1);
            for iz in 0..pg.nz {
                let sz = iz.saturating_sub(n).min(g.nz - 1);
                values.push(self.values[g.index(sz, sx)]);
            }
        }
        Self { grid: pg, values }
    }

    /// Removes `n` nodes from every side.
    pub fn crop(&self, n: usize) -> Result<Self> {
        let g = self.grid;
        if 2 * n + 3 > g.nz.min(g.nx) {
            return Err(Error::InvalidInput(format!(
                "cannot crop {n} nodes per side from a {}x{} grid",
                g.nz, g.nx
            )));
        }
        let cg = Grid {
            nz: g.nz - 2 * n,
            nx: g.nx - 2 * n,
            ..g
        };
        let mut values = Vec::with_capacity(cg.len());
        for ix in 0..cg.nx {
            let start = g.index(n, ix + n);
            values.extend_from_slice(&self.values[start..start + cg.nz]);
        }
        Ok(Self { grid: cg, values })
    }
}

/// Box set `m_l <= m <= m_u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                what: "upper bound",
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (i, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l > 0.0 && l <= u) {
                return Err(Error::InvalidInput(format!(
                    "invalid bounds [{l}, {u}] at node {i}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(n: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; n], vec![upper; n])
    }

    /// The extreme values of `m`, applied everywhere.
    pub fn from_model_range(m: &Model) -> Result<Self> {
        Self::uniform(m.values.len(), m.min(), m.max())
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.len()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| l <= v && v <= u)
    }
}

pub fn velocity_to_slowness2(grid: Grid, v: &[f64]) -> Result<Model> {
    grid.check_len("velocity grid", v.len())?;
    let mut values = Vec::with_capacity(v.len());
    for (i, &vi) in v.iter().enumerate() {
        if !(vi > 0.0 && vi.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "velocity must be finite and positive, got {vi} at node {i}"
            )));
        }
        values.push(1.0 / (vi * vi));
    }
    Ok(Model { grid, values })
}

pub fn slowness2_to_velocity(m: &Model) -> Result<Vec<f64>> {
    m.values
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            if s > 0.0 && s.is_finite() {
                Ok(1.0 / s.sqrt())
            } else {
                Err(Error::InvalidInput(format!(
                    "squared slowness must be finite and positive, got {s} at node {i}"
                )))
            }
        })
        .collect()
}

/// True model and the two starting models of the inclusion experiment.
#[derive(Debug, Clone)]
pub struct InclusionModels {
    pub truth: Model,
    pub gradient_start: Model,
    pub homogeneous_start: Model,
}

pub const INCLUSION_WIDTH_M: f64 = 1500.0;
pub const INCLUSION_DEPTH_M: f64 = 1000.0;
const BOX_WIDTH_M: f64 = 200.0;
const BOX_HEIGHT_M: f64 = 300.0;
const BOX_CENTER_X_M: f64 = 750.0;
const BOX_CENTER_Z_M: f64 = 500.0;
const BACKGROUND_TOP: f64 = 1500.0;
const BACKGROUND_BOTTOM: f64 = 3500.0;
const BOX_VELOCITY: f64 = 5000.0;
const HOMOGENEOUS_VELOCITY: f64 = 2200.0;

/// Closed index range `(iz0, iz1, ix0, ix1)` of the high-velocity box.
///
/// The box geometry is fixed on the 1.5 km x 1.0 km reference domain and
/// scaled with the grid extent, so rescaled grids keep the same picture.
pub fn inclusion_box(grid: &Grid) -> Result<(usize, usize, usize, usize)> {
    let (depth, width) = grid.extent();
    let sx = width / INCLUSION_WIDTH_M;
    let sz = depth / INCLUSION_DEPTH_M;
    let node = |pos: f64, h: f64| (pos / h).round() as usize;
    let ix0 = node((BOX_CENTER_X_M - BOX_WIDTH_M / 2.0) * sx, grid.dx);
    let ix1 = node((BOX_CENTER_X_M + BOX_WIDTH_M / 2.0) * sx, grid.dx);
    let iz0 = node((BOX_CENTER_Z_M - BOX_HEIGHT_M / 2.0) * sz, grid.dz);
    let iz1 = node((BOX_CENTER_Z_M + BOX_HEIGHT_M / 2.0) * sz, grid.dz);
    if ix0 == 0 || iz0 == 0 || ix1 >= grid.nx - 1 || iz1 >= grid.nz - 1 || ix1 <= ix0 || iz1 <= iz0 {
        return Err(Error::InvalidInput(format!(
            "grid {}x{} is too small to hold the inclusion",
            grid.nz, grid.nx
        )));
    }
    Ok((iz0, iz1, ix0, ix1))
}

pub fn make_inclusion_model(grid: Grid) -> Result<InclusionModels> {
    grid.validate()?;
    let (iz0, iz1, ix0, ix1) = inclusion_box(&grid)?;
    let (depth, _) = grid.extent();
    let background: Vec<f64> = (0..grid.len())
        .map(|i| {
            let z = grid.coords(i).0 as f64 * grid.dz;
            BACKGROUND_TOP + (BACKGROUND_BOTTOM - BACKGROUND_TOP) * z / depth
        })
        .collect();
    let mut truth = background.clone();
    for ix in ix0..=ix1 {
        for iz in iz0..=iz1 {
            truth[grid.index(iz, ix)] = BOX_VELOCITY;
        }
    }
    Ok(InclusionModels {
        truth: velocity_to_slowness2(grid, &truth)?,
        gradient_start: velocity_to_slowness2(grid, &background)?,
        homogeneous_start: velocity_to_slowness2(grid, &vec![HOMOGENEOUS_VELOCITY; grid.len()])?,
    })
}

/// Gaussian smoothing of the velocity with standard deviation `radius`
/// metres, reflecting at the edges.
pub fn smooth_model(m: &Model, radius: f64) -> Result<Model> {
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::InvalidInput(format!("smoothing radius must be >= 0, got {radius}")));
    }
    if radius == 0.0 {
        return Ok(m.clone());
    }
    let g = m.grid;
    let mut v = m.velocity()?;
    let kz = gaussian_kernel(radius / g.dz);
    let kx = gaussian_kernel(radius / g.dx);
    let mut line = Vec::new();
    for ix in 0..g.nx {
        let col = &mut v[ix * g.nz..(ix + 1) * g.nz];
        line.clear();
        line.extend_from_slice(col);
        convolve_reflect(&line, &kz, col);
    }
    let mut out = vec![0.0; g.nx];
    for iz in 0..g.nz {
        line.clear();
        line.extend((0..g.nx).map(|ix| v[g.index(iz, ix)]));
        convolve_reflect(&line, &kx, &mut out);
        for (ix, &o) in out.iter().enumerate() {
            v[g.index(iz, ix)] = o;
        }
    }
    velocity_to_slowness2(g, &v)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let half = (4.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-half..=half)
        .map(|j| (-0.5 * (j as f64 / sigma).powi(2)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= s);
    k
}

// Half-sample symmetric extension: x[-1] = x[0], x[n] = x[n-1].
fn reflect(i: isize, n: isize) -> usize {
    let period = 2 * n;
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - 1 - j;
    }
    j as usize
}

fn convolve_reflect(x: &[f64], k: &[f64], out: &mut [f64]) {
    let n = x.len() as isize;
    let half = (k.len() / 2) as isize;
    for (i, o) in out.iter_mut().enumerate() {
        *o = k
            .iter()
            .enumerate()
            .map(|(j, w)| w * x[reflect(i as isize + j as isize - half, n)])
            .sum();
    }
}

/// Isotropic TV norm with the unit-spacing forward differences of [`tv`].
pub fn tv_norm(m: &Model) -> f64 {
    tv::tv_norm(&m.grid, &m.values)
}
