//! JSON run configuration of an inversion, its validation, and the driver
//! that runs it and writes the final model, the metrics log and a manifest.
//!
//! Model files hold the physical domain only; the absorbing layers copy the
//! nearest edge values of the model during the solves.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acquisition::{DataSet, Discretization, Survey};
use crate::continuation::{make_schedule, BatchSchedule, Path as Pass};
use crate::error::{Error, Result};
use crate::grid::{Bounds, Grid, Model};
use crate::helmholtz::{PmlProfile, Stencil, DEFAULT_PML_CELLS, DEFAULT_SIGMA_FACTOR};
use crate::io;
use crate::solver::Backend;
use crate::wri::{run_inversion, run_paths, BatchRecord, Flags, InversionResult, InversionSetup, Mode, PenaltyConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Starting squared slowness (grid file).
    pub initial_model: PathBuf,
    /// Directory holding `survey.json` and the data files.
    pub data_dir: PathBuf,
    /// True model, enabling the error metrics.
    #[serde(default)]
    pub truth_model: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub mode: Mode,
    pub flags: Flags,
    #[serde(default)]
    pub bounds: Option<BoundsSpec>,
    #[serde(default)]
    pub penalty: PenaltyConfig,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub discretization: DiscretizationConfig,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundsSpec {
    /// Minimum and maximum of the true model.
    TruthRange,
    /// Uniform velocity limits in m/s.
    Velocity { min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FrequencyPlan {
    /// A single batch.
    Simultaneous { frequencies: Vec<f64> },
    /// Overlapping batches on a regular frequency lattice.
    Sweep {
        f_start: f64,
        f_end: f64,
        df: f64,
        batch_size: usize,
        overlap: usize,
    },
    Explicit { batches: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub frequencies: FrequencyPlan,
    pub k_max: usize,
    #[serde(default)]
    pub eps_b: f64,
    #[serde(default)]
    pub eps_d: f64,
    /// Use the injected noise norm of each batch, relative to its data
    /// norm, as the data tolerance.
    #[serde(default)]
    pub noise_tolerance: bool,
    /// Restart passes; empty means one pass over all batches.
    #[serde(default)]
    pub paths: Vec<Pass>,
}

impl ScheduleConfig {
    pub fn resolve(&self) -> Result<BatchSchedule> {
        let batches = match &self.frequencies {
            FrequencyPlan::Simultaneous { frequencies } => vec![frequencies.clone()],
            FrequencyPlan::Sweep {
                f_start,
                f_end,
                df,
                batch_size,
                overlap,
            } => make_schedule(*f_start, *f_end, *df, *batch_size, *overlap)?,
            FrequencyPlan::Explicit { batches } => batches.clone(),
        };
        let sched = BatchSchedule {
            batches,
            k_max: self.k_max,
            eps_b: self.eps_b,
            eps_d: self.eps_d,
        };
        sched.validate()?;
        Ok(sched)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationConfig {
    pub n_pml: usize,
    /// Peak layer damping in units of `v / thickness`.
    pub sigma_factor: f64,
    /// Velocity setting the layer damping; the fastest velocity on the
    /// boundary of the starting model when absent.
    pub pml_velocity: Option<f64>,
    pub stencil: Stencil,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        Self {
            n_pml: DEFAULT_PML_CELLS,
            sigma_factor: DEFAULT_SIGMA_FACTOR,
            pml_velocity: None,
            stencil: Stencil::default(),
        }
    }
}

impl DiscretizationConfig {
    /// The discretization of a physical grid; `edge_model` supplies the
    /// layer velocity when none is configured.
    pub fn resolve(&self, physical: &Grid, edge_model: &Model) -> Result<(Discretization, f64)> {
        if !(self.sigma_factor >= 0.0 && self.sigma_factor.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma_factor must be >= 0, got {}", self.sigma_factor)));
        }
        let v = match self.pml_velocity {
            Some(v) if v > 0.0 && v.is_finite() => v,
            Some(v) => return Err(Error::InvalidConfig(format!("pml_velocity must be positive, got {v}"))),
            None => boundary_velocity(edge_model),
        };
        let disc = Discretization {
            pml: PmlProfile::with_factor(physical, v, self.n_pml, self.sigma_factor),
            stencil: self.stencil,
        };
        disc.pml.validate(&physical.padded(self.n_pml))?;
        Ok((disc, v))
    }
}

/// Fastest velocity on the outer ring of nodes.
pub fn boundary_velocity(m: &Model) -> f64 {
    let g = m.grid;
    (0..g.len())
        .filter(|&i| {
            let (iz, ix) = g.coords(i);
            iz == 0 || ix == 0 || iz == g.nz - 1 || ix == g.nx - 1
        })
        .map(|i| 1.0 / m.values[i].sqrt())
        .fold(0.0, f64::max)
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn require_file(what: &str, p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{what} not found: {}", p.display())))
    }
}

/// What `invert` writes next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub version: String,
    /// The configuration with paths made absolute and defaults filled in.
    pub config: RunConfig,
    pub schedule: BatchSchedule,
    pub pml: PmlProfile,
    pub passes: Vec<PassRecord>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassRecord {
    pub start_hz: f64,
    pub iterations: usize,
    pub batches: Vec<BatchRecord>,
}

/// A validated configuration with every input loaded.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub config: RunConfig,
    pub physical: Grid,
    pub initial: Model,
    pub data: DataSet,
    pub survey: Survey,
    pub setup: InversionSetup,
}

impl RunConfig {
    /// Reads a run configuration, or the configuration recorded in a run
    /// manifest. Relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig = match serde_json::from_str::<RunConfig>(&text) {
            Ok(c) => c,
            Err(first) => match serde_json::from_str::<RunManifest>(&text) {
                Ok(m) => m.config,
                Err(_) => return Err(Error::InvalidConfig(format!("{}: {first}", path.display()))),
            },
        };
        let base = path.parent().unwrap_or(Path::new("."));
        config.initial_model = resolve_path(base, &config.initial_model);
        config.data_dir = resolve_path(base, &config.data_dir);
        config.output_dir = resolve_path(base, &config.output_dir);
        config.truth_model = config.truth_model.map(|p| resolve_path(base, &p));
        Ok(config)
    }

    /// Checks the configuration and loads the inputs without solving anything.
    pub fn prepare(&self) -> Result<PreparedRun> {
        self.penalty.validate()?;
        let schedule = self.schedule.resolve()?;
        require_file("initial model", &self.initial_model)?;
        require_file("survey manifest", &self.data_dir.join(io::DATA_MANIFEST))?;
        if let Some(t) = &self.truth_model {
            require_file("truth model", t)?;
        }
        if self.flags.bounds_on && self.bounds.is_none() {
            return Err(Error::InvalidConfig("bounds_on requires a bounds entry".into()));
        }

        let initial = io::read_model(&self.initial_model)?;
        let physical = initial.grid;
        let (data, survey) = io::read_dataset(&self.data_dir)?;
        survey.validate(&physical)?;
        let truth = match &self.truth_model {
            Some(p) => {
                let t = io::read_model(p)?;
                if t.grid != physical {
                    return Err(Error::InvalidConfig("truth and initial models differ in grid".into()));
                }
                Some(t)
            }
            None => None,
        };

        let (disc, v) = self.discretization.resolve(&physical, &initial)?;
        let bounds = match self.bounds {
            None => None,
            Some(BoundsSpec::TruthRange) => match &truth {
                Some(t) => Some(Bounds::from_model_range(t)?),
                None => {
                    return Err(Error::InvalidConfig("truth_range bounds need a truth_model".into()));
                }
            },
            Some(BoundsSpec::Velocity { min, max }) => {
                if !(min > 0.0 && min <= max && max.is_finite()) {
                    return Err(Error::InvalidConfig(format!("velocity bounds need 0 < min <= max, got {min}, {max}")));
                }
                Some(Bounds::uniform(initial.grid.len(), 1.0 / (max * max), 1.0 / (min * min))?)
            }
        };

        let setup = InversionSetup {
            mode: self.mode,
            flags: self.flags,
            penalty: self.penalty,
            schedule,
            disc,
            backend: self.backend,
            bounds,
            truth,
            noise_tolerance: self.schedule.noise_tolerance,
            seed: self.seed,
        };
        setup.validate(&initial, &data, &survey)?;
        for p in &self.schedule.paths {
            if setup.schedule.starting_at(p.start_hz).batches.is_empty() {
                return Err(Error::InvalidConfig(format!("no batch starts at or above {} Hz", p.start_hz)));
            }
        }

        let mut config = self.clone();
        config.discretization.pml_velocity = Some(v);
        Ok(PreparedRun {
            config,
            physical,
            initial,
            data,
            survey,
            setup,
        })
    }
}

pub const FINAL_MODEL: &str = "final_model.bin";
pub const METRICS: &str = "metrics.csv";
pub const MANIFEST: &str = "manifest.json";

impl PreparedRun {
    /// Runs every pass and writes the outputs.
    pub fn execute(&self) -> Result<RunManifest> {
        let results: Vec<(f64, InversionResult)> = if self.config.schedule.paths.is_empty() {
            let first = self.setup.schedule.batches[0].iter().cloned().fold(f64::INFINITY, f64::min);
            vec![(first, run_inversion(&self.setup, &self.initial, &self.data, &self.survey)?)]
        } else {
            let res = run_paths(&self.setup, &self.config.schedule.paths, &self.initial, &self.data, &self.survey)?;
            self.config.schedule.paths.iter().map(|p| p.start_hz).zip(res).collect()
        };

        let out = &self.config.output_dir;
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let mut outputs = Vec::new();
        let mut metrics = Vec::new();
        let mut passes = Vec::new();
        let many = results.len() > 1;
        for (k, (start_hz, res)) in results.iter().enumerate() {
            if many {
                let name = format!("model_pass{}.bin", k + 1);
                io::write_model(&out.join(&name), &res.model)?;
                outputs.push(name);
            }
            let offset = metrics.len();
            metrics.extend(res.metrics.iter().cloned().map(|mut m| {
                m.iter += offset;
                m
            }));
            passes.push(PassRecord {
                start_hz: *start_hz,
                iterations: res.metrics.len(),
                batches: res.batches.clone(),
            });
        }
        let last = &results.last().expect("at least one pass").1;
        io::write_model(&out.join(FINAL_MODEL), &last.model)?;
        io::write_metrics_csv(&out.join(METRICS), &metrics)?;
        outputs.push(FINAL_MODEL.into());
        outputs.push(METRICS.into());
        let manifest = RunManifest {
            version: io::VERSION.to_string(),
            config: self.config.clone(),
            schedule: self.setup.schedule.clone(),
            pml: self.setup.disc.pml,
            passes,
            outputs,
        };
        io::write_json(&out.join(MANIFEST), &manifest)?;
        Ok(manifest)
    }
}
