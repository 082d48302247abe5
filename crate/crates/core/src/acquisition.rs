//! Sources, receivers, the sampling operator, source spectra, synthetic data
//! and noise.
//!
//! Positions are physical coordinates in metres measured from the first node
//! inside the absorbing layers: a computational grid carrying `n_pml` layer
//! cells per side maps `(x, z)` to node `(n_pml + z/dz, n_pml + x/dx)`.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Model};
use crate::helmholtz::{HelmholtzOperator, PmlProfile, Stencil};
use crate::scalar::norm2;
use crate::solver::factor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Position {
    /// Lateral coordinate in metres.
    pub x: f64,
    /// Depth in metres.
    pub z: f64,
}

impl Position {
    pub fn new(x: f64, z: f64) -> Self {
        Self { x, z }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Survey {
    pub sources: Vec<Position>,
    pub receivers: Vec<Position>,
    /// Frequencies in Hz.
    pub frequencies: Vec<f64>,
    /// Dominant frequency of the Ricker source signature in Hz.
    pub ricker_peak_hz: f64,
}

impl Survey {
    pub fn validate(&self, physical: &Grid) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::InvalidInput("survey has no sources".into()));
        }
        if self.receivers.is_empty() {
            return Err(Error::InvalidInput("survey has no receivers".into()));
        }
        if self.frequencies.is_empty() {
            return Err(Error::InvalidInput("survey has no frequencies".into()));
        }
        if let Some(f) = self.frequencies.iter().find(|f| !(**f > 0.0 && f.is_finite())) {
            return Err(Error::InvalidInput(format!("frequency must be positive, got {f}")));
        }
        if !(self.ricker_peak_hz > 0.0 && self.ricker_peak_hz.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "ricker peak frequency must be positive, got {}",
                self.ricker_peak_hz
            )));
        }
        for p in self.sources.iter().chain(&self.receivers) {
            nearest_node(physical, 0, *p)?;
        }
        Ok(())
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn n_receivers(&self) -> usize {
        self.receivers.len()
    }
}

/// Nearest node of `grid` to `pos`, whose origin sits `pad` nodes in from
/// the grid corner. Exact midpoints go to the lower index.
pub fn nearest_node(grid: &Grid, pad: usize, pos: Position) -> Result<usize> {
    let (depth, width) = grid.extent();
    let (depth, width) = (
        depth - 2.0 * pad as f64 * grid.dz,
        width - 2.0 * pad as f64 * grid.dx,
    );
    let eps = 1e-9 * grid.dz.max(grid.dx);
    if !(pos.x >= -eps && pos.x <= width + eps && pos.z >= -eps && pos.z <= depth + eps) {
        return Err(Error::InvalidInput(format!(
            "position ({}, {}) m lies outside the {} m x {} m domain",
            pos.x, pos.z, width, depth
        )));
    }
    let snap = |t: f64, n: usize| ((t - 0.5).ceil().max(0.0) as usize).min(n - 1);
    let iz = snap(pos.z / grid.dz, grid.nz - 2 * pad) + pad;
    let ix = snap(pos.x / grid.dx, grid.nx - 2 * pad) + pad;
    Ok(grid.index(iz, ix))
}

/// Receiver node indices on a grid without absorbing layers.
pub fn sampling_indices(survey: &Survey, grid: &Grid) -> Result<Vec<usize>> {
    survey.receivers.iter().map(|&p| nearest_node(grid, 0, p)).collect()
}

/// Ricker amplitude spectrum `(2/sqrt(pi)) f^2/f0^3 exp(-f^2/f0^2)`.
pub fn ricker_amplitude(f: f64, f_dom: f64) -> f64 {
    2.0 / std::f64::consts::PI.sqrt() * f * f / f_dom.powi(3) * (-(f * f) / (f_dom * f_dom)).exp()
}

/// How the wave equation is discretized on the computational grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretization {
    pub pml: PmlProfile,
    #[serde(default)]
    pub stencil: Stencil,
}

impl Discretization {
    pub fn operator(&self, grid: Grid, hz: f64) -> Result<HelmholtzOperator> {
        HelmholtzOperator::from_frequency(grid, hz, self.pml, self.stencil)
    }
}

/// Node indices of sources and receivers on a computational grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMap {
    pub sources: Vec<usize>,
    pub receivers: Vec<usize>,
}

impl NodeMap {
    pub fn new(survey: &Survey, grid: &Grid, pad: usize) -> Result<Self> {
        Ok(Self {
            sources: survey
                .sources
                .iter()
                .map(|&p| nearest_node(grid, pad, p))
                .collect::<Result<_>>()?,
            receivers: survey
                .receivers
                .iter()
                .map(|&p| nearest_node(grid, pad, p))
                .collect::<Result<_>>()?,
        })
    }
}

/// Source vectors `b` of every source at the operator's frequency.
pub fn source_vectors(op: &HelmholtzOperator, hz: f64, survey: &Survey, nodes: &NodeMap) -> Vec<Vec<Complex64>> {
    let amp = Complex64::new(ricker_amplitude(hz, survey.ricker_peak_hz), 0.0);
    nodes.sources.iter().map(|&s| op.point_source(s, amp)).collect()
}

/// Receiver samples `P u`.
pub fn sample(u: &[Complex64], receivers: &[usize]) -> Vec<Complex64> {
    receivers.iter().map(|&r| u[r]).collect()
}

/// Recorded data, one gather of `M` receivers per (frequency, source).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSet {
    pub frequencies: Vec<f64>,
    pub n_sources: usize,
    pub n_receivers: usize,
    /// `gathers[f][s]` is the gather of source `s` at frequency `f`.
    pub gathers: Vec<Vec<Vec<Complex64>>>,
    pub snr_db: Option<f64>,
    pub noise_seed: Option<u64>,
    /// L2 norm of the injected noise per gather, when noise was added here.
    pub noise_norms: Option<Vec<Vec<f64>>>,
}

impl DataSet {
    pub fn gather(&self, f: usize, s: usize) -> &[Complex64] {
        &self.gathers[f][s]
    }

    pub fn frequency_index(&self, hz: f64) -> Option<usize> {
        self.frequencies.iter().position(|&f| (f - hz).abs() <= 1e-9 * hz.max(1.0))
    }

    pub fn is_empty(&self) -> bool {
        self.gathers.iter().all(|g| g.is_empty())
    }

    /// Norm of the injected noise over the listed frequencies, if known.
    pub fn noise_norm(&self, freqs: &[f64]) -> Option<f64> {
        let norms = self.noise_norms.as_ref()?;
        let mut sq = 0.0;
        for &hz in freqs {
            let fi = self.frequency_index(hz)?;
            sq += norms[fi].iter().map(|n| n * n).sum::<f64>();
        }
        Some(sq.sqrt())
    }

    /// Injected noise norm relative to the data norm over the listed
    /// frequencies, on the same scale as the relative data residual.
    pub fn noise_level(&self, freqs: &[f64]) -> Option<f64> {
        let noise = self.noise_norm(freqs)?;
        let mut sq = 0.0;
        for &hz in freqs {
            let fi = self.frequency_index(hz)?;
            sq += self.gathers[fi].iter().flatten().map(|v| v.norm_sqr()).sum::<f64>();
        }
        (sq > 0.0).then(|| noise / sq.sqrt())
    }

    /// Scales every datum by `alpha`.
    pub fn scaled(&self, alpha: Complex64) -> Self {
        let mut out = self.clone();
        for g in out.gathers.iter_mut().flatten() {
            g.iter_mut().for_each(|v| *v *= alpha);
        }
        out
    }
}

/// Noise-free data `d = P A(m)^{-1} b` for every (frequency, source).
/// `m` lives on the computational grid, which carries `disc.pml.n_pml`
/// absorbing cells on each side of the physical domain.
pub fn forward_model(m: &Model, survey: &Survey, disc: &Discretization) -> Result<DataSet> {
    forward_model_scaled(m, survey, disc, Complex64::new(1.0, 0.0))
}

/// [`forward_model`] with every source multiplied by `scale`.
pub fn forward_model_scaled(
    m: &Model,
    survey: &Survey,
    disc: &Discretization,
    scale: Complex64,
) -> Result<DataSet> {
    let grid = m.grid;
    let nodes = NodeMap::new(survey, &grid, disc.pml.n_pml)?;
    let gathers = survey
        .frequencies
        .iter()
        .map(|&hz| {
            let op = disc.operator(grid, hz)?;
            let a = op.assemble_a(m)?;
            let lu = factor(&a)?;
            let sources = source_vectors(&op, hz, survey, &nodes);
            Ok(sources
                .par_iter()
                .map(|b| {
                    let b: Vec<Complex64> = b.iter().map(|v| v * scale).collect();
                    sample(&lu.solve(&b), &nodes.receivers)
                })
                .collect())
        })
        .collect::<Result<Vec<Vec<Vec<Complex64>>>>>()?;
    Ok(DataSet {
        frequencies: survey.frequencies.clone(),
        n_sources: survey.n_sources(),
        n_receivers: survey.n_receivers(),
        gathers,
        snr_db: None,
        noise_seed: None,
        noise_norms: None,
    })
}

/// Adds circular complex Gaussian noise scaled per gather so that the
/// expected signal-to-noise ratio is `snr_db`. `+inf` returns the data as is.
pub fn add_noise(data: &DataSet, snr_db: f64, seed: u64) -> Result<DataSet> {
    if data.is_empty() {
        return Err(Error::InvalidInput("cannot add noise to empty data".into()));
    }
    if snr_db == f64::INFINITY {
        return Ok(data.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidInput(format!("snr must be finite or +inf, got {snr_db}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = data.clone();
    let mut norms = Vec::with_capacity(data.gathers.len());
    for freq in out.gathers.iter_mut() {
        let mut row = Vec::with_capacity(freq.len());
        for g in freq.iter_mut() {
            let signal = norm2(g);
            let per_component =
                signal / (2.0 * g.len() as f64 * 10f64.powf(snr_db / 10.0)).sqrt();
            let noise: Vec<Complex64> = (0..g.len())
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(re, im) * per_component
                })
                .collect();
            row.push(norm2(&noise));
            g.iter_mut().zip(&noise).for_each(|(v, n)| *v += n);
        }
        norms.push(row);
    }
    out.snr_db = Some(snr_db);
    out.noise_seed = Some(seed);
    out.noise_norms = Some(norms);
    Ok(out)
}

/// Surface acquisition of the inclusion experiment on a `width` x `depth`
/// domain: five sources and 65 receivers evenly spread on `z = 0`.
pub fn inclusion_survey(width: f64, spacing: f64) -> Survey {
    let spread = |n: usize| -> Vec<Position> {
        (0..n)
            .map(|i| {
                let x = width * i as f64 / (n - 1) as f64;
                // snap to the grid so every position is an exact node
                Position::new((x / spacing).round() * spacing, 0.0)
            })
            .collect()
    };
    let sources = (0..5)
        .map(|i| Position::new(((width * (i as f64 + 0.5) / 5.0) / spacing).round() * spacing, 0.0))
        .collect();
    Survey {
        sources,
        receivers: spread(65),
        frequencies: vec![2.5, 5.0, 7.0],
        ricker_peak_hz: 5.0,
    }
}
