use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use irwri::acquisition::{add_noise, forward_model, inclusion_survey, Survey};
use irwri::config::{DiscretizationConfig, RunConfig};
use irwri::error::{Error, Result};
use irwri::grid::{make_inclusion_model, velocity_to_slowness2, Grid, Model, INCLUSION_DEPTH_M, INCLUSION_WIDTH_M};
use irwri::helmholtz::Stencil;
use irwri::io;

#[derive(Parser)]
#[command(name = "irwri", version, about = "Frequency-domain WRI and IR-WRI with bound and TV constraints")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or import a squared-slowness model.
    Model {
        #[command(subcommand)]
        kind: ModelKind,
    },
    /// Record synthetic data from a model.
    Forward(ForwardArgs),
    /// Run an inversion described by a JSON config (or a run manifest).
    Invert {
        #[arg(long)]
        config: PathBuf,
    },
    /// Merge metrics CSVs side by side.
    Report {
        #[arg(long)]
        out: PathBuf,
        /// Inputs as `path` or `label=path`.
        inputs: Vec<String>,
    },
}

#[derive(Args, Clone, Copy)]
struct Spacing {
    /// Lateral spacing in metres.
    #[arg(long, default_value_t = 10.0)]
    dx: f64,
    /// Depth spacing in metres.
    #[arg(long, default_value_t = 10.0)]
    dz: f64,
    /// Domain width in metres.
    #[arg(long, default_value_t = INCLUSION_WIDTH_M)]
    width: f64,
    /// Domain depth in metres.
    #[arg(long, default_value_t = INCLUSION_DEPTH_M)]
    depth: f64,
}

impl Spacing {
    fn grid(self) -> Result<Grid> {
        for (flag, v) in [("--dx", self.dx), ("--dz", self.dz), ("--width", self.width), ("--depth", self.depth)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{flag} must be positive, got {v}")));
            }
        }
        let nx = (self.width / self.dx).round() as usize + 1;
        let nz = (self.depth / self.dz).round() as usize + 1;
        Grid::new(nz, nx, self.dz, self.dx)
    }
}

#[derive(Subcommand)]
enum ModelKind {
    /// True model, both starting models and the surface survey into a directory.
    Inclusion {
        #[command(flatten)]
        spacing: Spacing,
        #[arg(long)]
        out: PathBuf,
    },
    /// Velocity increasing linearly with depth.
    Gradient {
        #[command(flatten)]
        spacing: Spacing,
        #[arg(long, default_value_t = 1500.0)]
        v_top: f64,
        #[arg(long, default_value_t = 3500.0)]
        v_bottom: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Constant velocity.
    Homogeneous {
        #[command(flatten)]
        spacing: Spacing,
        #[arg(long, default_value_t = 2200.0)]
        velocity: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-emit a grid file, or a raw little-endian f64 file with explicit
    /// dimensions, in canonical form.
    Import {
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Values are velocities in m/s rather than squared slowness.
        #[arg(long)]
        velocity: bool,
        /// Dimensions of a raw payload without sidecar: nz nx dz dx.
        #[arg(long, num_args = 4, value_names = ["NZ", "NX", "DZ", "DX"])]
        raw: Option<Vec<f64>>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StencilArg {
    FivePoint,
    NinePoint,
}

#[derive(Args)]
struct ForwardArgs {
    #[arg(long)]
    model: PathBuf,
    /// Survey JSON (positions in metres, frequencies in Hz).
    #[arg(long)]
    survey: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Signal-to-noise ratio in dB; noise free when absent.
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "nine-point")]
    stencil: StencilArg,
    #[arg(long, default_value_t = DiscretizationConfig::default().n_pml)]
    n_pml: usize,
    #[arg(long, default_value_t = DiscretizationConfig::default().sigma_factor)]
    sigma_factor: f64,
    /// Velocity setting the layer damping (fastest boundary velocity by default).
    #[arg(long)]
    pml_velocity: Option<f64>,
}

fn model_inclusion(spacing: Spacing, out: &Path) -> Result<()> {
    let grid = spacing.grid()?;
    let models = make_inclusion_model(grid)?;
    io::write_model(&out.join("true.bin"), &models.truth)?;
    io::write_model(&out.join("gradient_start.bin"), &models.gradient_start)?;
    io::write_model(&out.join("homogeneous_start.bin"), &models.homogeneous_start)?;
    let (_, width) = grid.extent();
    io::write_json(&out.join("inclusion_survey.json"), &inclusion_survey(width, spacing.dx))
}

fn model_import(from: &Path, out: &Path, velocity: bool, raw: Option<Vec<f64>>) -> Result<()> {
    let (grid, values) = match raw {
        Some(dims) => {
            let to_count = |v: f64, flag: &str| -> Result<usize> {
                if v >= 3.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::InvalidInput(format!("--raw {flag} must be an integer >= 3, got {v}")))
                }
            };
            let grid = Grid::new(to_count(dims[0], "nz")?, to_count(dims[1], "nx")?, dims[2], dims[3])?;
            let bytes = std::fs::read(from).map_err(|e| Error::Io {
                path: from.to_path_buf(),
                source: e,
            })?;
            if bytes.len() != 8 * grid.len() {
                return Err(Error::Format {
                    path: from.to_path_buf(),
                    reason: format!("{} bytes, expected {}", bytes.len(), 8 * grid.len()),
                });
            }
            let values = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            (grid, values)
        }
        None => {
            let (header, values) = io::read_real_grid(from)?;
            (header.grid()?, values)
        }
    };
    let model = if velocity {
        velocity_to_slowness2(grid, &values)?
    } else {
        Model::new(grid, values)?
    };
    io::write_model(out, &model)
}

fn forward(args: &ForwardArgs) -> Result<()> {
    let physical = io::read_model(&args.model)?;
    let survey: Survey = io::read_json(&args.survey)?;
    survey.validate(&physical.grid)?;
    let disc_cfg = DiscretizationConfig {
        n_pml: args.n_pml,
        sigma_factor: args.sigma_factor,
        pml_velocity: args.pml_velocity,
        stencil: match args.stencil {
            StencilArg::FivePoint => Stencil::FivePoint,
            StencilArg::NinePoint => Stencil::NinePoint,
        },
    };
    let (disc, _) = disc_cfg.resolve(&physical.grid, &physical)?;
    let mut data = forward_model(&physical.pad_edge(args.n_pml), &survey, &disc)?;
    if let Some(snr) = args.snr {
        data = add_noise(&data, snr, args.seed)?;
    }
    io::write_dataset(&args.out, &data, &survey)
}

fn report(out: &Path, inputs: &[String]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::InvalidInput("report needs at least one metrics CSV".into()));
    }
    let tables = inputs
        .iter()
        .map(|arg| {
            let (label, path) = match arg.split_once('=') {
                Some((l, p)) => (l.to_string(), PathBuf::from(p)),
                None => (arg.trim_end_matches(".csv").to_string(), PathBuf::from(arg)),
            };
            Ok((label, io::read_csv(&path)?))
        })
        .collect::<Result<Vec<_>>>()?;
    io::write_csv(out, &io::merge_metrics(&tables)?)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidInput("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Model { kind } => match kind {
            ModelKind::Inclusion { spacing, out } => model_inclusion(spacing, &out),
            ModelKind::Gradient {
                spacing,
                v_top,
                v_bottom,
                out,
            } => {
                let grid = spacing.grid()?;
                let (depth, _) = grid.extent();
                let v: Vec<f64> = (0..grid.len())
                    .map(|i| v_top + (v_bottom - v_top) * grid.coords(i).0 as f64 * grid.dz / depth)
                    .collect();
                io::write_model(&out, &velocity_to_slowness2(grid, &v)?)
            }
            ModelKind::Homogeneous { spacing, velocity, out } => {
                let grid = spacing.grid()?;
                io::write_model(&out, &velocity_to_slowness2(grid, &vec![velocity; grid.len()])?)
            }
            ModelKind::Import {
                from,
                out,
                velocity,
                raw,
            } => model_import(&from, &out, velocity, raw),
        },
        Command::Forward(args) => forward(&args),
        Command::Invert { config } => {
            let prepared = RunConfig::load(&config)?.prepare()?;
            let manifest = prepared.execute()?;
            let out = &prepared.config.output_dir;
            for name in &manifest.outputs {
                println!("{}", out.join(name).display());
            }
            Ok(())
        }
        Command::Report { out, inputs } => report(&out, &inputs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
