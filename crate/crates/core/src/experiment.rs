//! The inclusion experiment: a 5 km/s box in a linear-gradient background,
//! surface acquisition, three simultaneous frequencies and the six
//! WRI/IR-WRI configurations from two starting models.

use serde::{Deserialize, Serialize};

use crate::acquisition::{add_noise, forward_model, inclusion_survey, DataSet, Discretization, Survey};
use crate::continuation::BatchSchedule;
use crate::error::Result;
use crate::grid::{make_inclusion_model, Bounds, Grid, InclusionModels, INCLUSION_DEPTH_M, INCLUSION_WIDTH_M};
use crate::helmholtz::{PmlProfile, Stencil, DEFAULT_PML_CELLS, DEFAULT_SIGMA_FACTOR};
use crate::solver::Backend;
use crate::wri::{Flags, InversionSetup, Mode, PenaltyConfig};

pub const INCLUSION_ITERATIONS: usize = 70;

/// Fastest velocity met by the absorbing layers (the background at depth).
const EDGE_VELOCITY: f64 = 3500.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    /// The background without the box.
    Gradient,
    /// Uniform 2.2 km/s.
    Homogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularization {
    None,
    Bounds,
    /// Bounds and TV.
    Btv,
}

impl Regularization {
    pub fn flags(self) -> Flags {
        Flags {
            bounds_on: self != Regularization::None,
            tv_on: self == Regularization::Btv,
        }
    }
}

/// Physical-grid models with data recorded from the truth.
#[derive(Debug, Clone)]
pub struct InclusionExperiment {
    pub physical: Grid,
    pub models: InclusionModels,
    pub survey: Survey,
    pub disc: Discretization,
    pub data: DataSet,
    /// True minimum and maximum squared slowness.
    pub bounds: Bounds,
}

impl InclusionExperiment {
    /// The reference 1.5 km x 1.0 km experiment at `spacing` metres.
    /// `snr_db = None` keeps the data noise free.
    pub fn new(spacing: f64, stencil: Stencil, snr_db: Option<f64>, seed: u64) -> Result<Self> {
        let nx = (INCLUSION_WIDTH_M / spacing).round() as usize + 1;
        let nz = (INCLUSION_DEPTH_M / spacing).round() as usize + 1;
        let physical = Grid::new(nz, nx, spacing, spacing)?;
        let models = make_inclusion_model(physical)?;
        let pad = DEFAULT_PML_CELLS;
        let disc = Discretization {
            pml: PmlProfile::with_factor(&physical, EDGE_VELOCITY, pad, DEFAULT_SIGMA_FACTOR),
            stencil,
        };
        let (_, width) = physical.extent();
        let survey = inclusion_survey(width, spacing);
        survey.validate(&physical)?;
        let clean = forward_model(&models.truth.pad_edge(pad), &survey, &disc)?;
        let data = match snr_db {
            Some(snr) => add_noise(&clean, snr, seed)?,
            None => clean,
        };
        let bounds = Bounds::from_model_range(&models.truth)?;
        Ok(Self {
            physical,
            models,
            survey,
            disc,
            data,
            bounds,
        })
    }

    pub fn start_model(&self, start: Start) -> &crate::grid::Model {
        match start {
            Start::Gradient => &self.models.gradient_start,
            Start::Homogeneous => &self.models.homogeneous_start,
        }
    }

    /// One of the twelve runs: 70 iterations over the three frequencies at once.
    pub fn setup(&self, start: Start, mode: Mode, reg: Regularization) -> InversionSetup {
        InversionSetup {
            mode,
            flags: reg.flags(),
            penalty: inclusion_penalty(start, self.data.snr_db.is_some()),
            schedule: BatchSchedule::simultaneous(&self.survey.frequencies, INCLUSION_ITERATIONS),
            disc: self.disc,
            backend: Backend::Direct,
            bounds: Some(self.bounds.clone()),
            truth: Some(self.models.truth.clone()),
            noise_tolerance: false,
            seed: 0,
        }
    }
}

/// Penalties of the inclusion runs. From the gradient start gamma stays at
/// `0.01 zeta` with no damping; from the homogeneous start gamma halves
/// every 10 iterations from `zeta` down to `0.01 zeta` and the model
/// system is damped by `0.01 zeta`.
pub fn inclusion_penalty(start: Start, noisy: bool) -> PenaltyConfig {
    let base = PenaltyConfig {
        lambda_frac: if noisy { 1e-3 } else { 1e-5 },
        ..PenaltyConfig::default()
    };
    match start {
        Start::Gradient => PenaltyConfig {
            gamma_over_lambda1_init: 0.01,
            gamma_floor: 0.01,
            gamma_decay_every: 0,
            gamma_decay_factor: 1.0,
            damping_frac: 0.0,
            ..base
        },
        Start::Homogeneous => PenaltyConfig {
            gamma_over_lambda1_init: 1.0,
            gamma_floor: 0.01,
            gamma_decay_every: 10,
            gamma_decay_factor: 2.0,
            damping_frac: 0.01,
            ..base
        },
    }
}
