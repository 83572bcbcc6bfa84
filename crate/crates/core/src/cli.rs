//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::io::{load_map, load_signal, save_map, save_projections, save_signal, window_cpmg, MapFile};
use crate::metrics::{relative_error, residual_norm};
use crate::model::{
    add_noise, forward_model, make_phantom, AcquisitionGrid, KernelPair, PhantomKind, RelaxationGrid,
};
use crate::upen::{
    default_alpha_grid, optimal_alpha_search, tikhonov_solve, upen_run, ConstraintMode, Preset,
    UpenConfig,
};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "upen2d", version, about = "T1-T2 relaxation map inversion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize noisy IR-CPMG data from a phantom.
    Simulate {
        #[arg(long, default_value = "p1")]
        phantom: PhantomKind,
        #[arg(long, default_value_t = 128)]
        m1: usize,
        #[arg(long, default_value_t = 128)]
        m2: usize,
        #[arg(long, default_value_t = 64)]
        nx: usize,
        #[arg(long, default_value_t = 64)]
        ny: usize,
        /// Noise norm `||e||`.
        #[arg(long, default_value_t = 1e-2)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth map; defaults to `<out>.truth`.
        #[arg(long)]
        truth_out: Option<PathBuf>,
    },
    /// Average the echo axis into geometrically widening windows.
    Window {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 146)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Invert data with locally adapted regularization.
    Invert {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 64)]
        nx: usize,
        #[arg(long, default_value_t = 73)]
        ny: usize,
        #[arg(long)]
        beta0: Option<f64>,
        #[arg(long)]
        betap: Option<f64>,
        #[arg(long)]
        betac: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        rho: f64,
        #[arg(long, default_value = "nonneg")]
        mode: ConstraintMode,
        /// Defaults to `lownoise` when the file records a noise level of at
        /// most 1e-3 and to `sim` otherwise.
        #[arg(long)]
        preset: Option<Preset>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        lambda_out: Option<PathBuf>,
        /// Known distribution, used only to report the relative error.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Single-parameter Tikhonov inversion.
    Tikhonov {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, required_unless_present = "search", conflicts_with = "search")]
        alpha: Option<f64>,
        /// Pick alpha on a log grid by minimizing the error against `--truth`.
        #[arg(long, requires = "truth")]
        search: bool,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        nx: usize,
        #[arg(long, default_value_t = 73)]
        ny: usize,
        #[arg(long)]
        preset: Option<Preset>,
    },
    /// Write the T1 and T2 sum projections of a map.
    Project {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                msg.push_str(&format!(": {s}"));
                source = s.source();
            }
            eprintln!("{msg}");
            1
        }
    }
}

fn default_truth_path(out: &Path) -> PathBuf {
    let mut p = out.as_os_str().to_owned();
    p.push(".truth");
    PathBuf::from(p)
}

fn load_truth(path: &Path, relax: &RelaxationGrid) -> Result<MapFile> {
    let truth = load_map(path)?;
    if truth.grid != *relax {
        return Err(Error::InvalidParameter {
            name: "truth",
            reason: format!(
                "map grid is {}x{}, inversion grid is {}x{} (grids must match exactly)",
                truth.grid.nx(),
                truth.grid.ny(),
                relax.nx(),
                relax.ny()
            ),
        });
    }
    Ok(truth)
}

fn config_for(preset: Option<Preset>, noise: Option<f64>) -> UpenConfig {
    let preset = preset.unwrap_or_else(|| noise.map_or(Preset::Simulated, Preset::for_noise_level));
    UpenConfig::preset(preset)
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate {
            phantom,
            m1,
            m2,
            nx,
            ny,
            noise,
            seed,
            out,
            truth_out,
        } => {
            let grid = AcquisitionGrid::default_ir_cpmg(m1, m2)?;
            let relax = RelaxationGrid::log_spaced(nx, ny)?;
            let kp = KernelPair::from_grids(&grid, &relax);
            let truth = make_phantom(phantom, &relax);
            let sig = add_noise(&forward_model(&kp, &truth)?, noise, seed)?;
            save_signal(&out, &grid, &sig)?;
            let truth_path = truth_out.unwrap_or_else(|| default_truth_path(&out));
            save_map(
                &truth_path,
                &MapFile {
                    grid: relax,
                    distribution: truth,
                    lambda: None,
                },
            )?;
            println!("signal={}", out.display());
            println!("truth={}", truth_path.display());
        }
        Command::Window { input, points, out } => {
            let (grid, sig) = load_signal(&input)?;
            let (wgrid, wsig, plan) = window_cpmg(&grid, &sig, points)?;
            save_signal(&out, &wgrid, &wsig)?;
            let edges: Vec<String> = plan.edges().iter().map(usize::to_string).collect();
            println!("points={}", plan.len());
            println!("edges={}", edges.join(","));
        }
        Command::Invert {
            input,
            nx,
            ny,
            beta0,
            betap,
            betac,
            rho,
            mode,
            preset,
            out,
            lambda_out,
            truth,
        } => {
            let (grid, sig) = load_signal(&input)?;
            let relax = RelaxationGrid::log_spaced(nx, ny)?;
            let truth = truth.map(|p| load_truth(&p, &relax)).transpose()?;
            let mut cfg = config_for(preset, sig.noise_level());
            cfg.beta0 = beta0.unwrap_or(cfg.beta0);
            cfg.beta_p = betap.unwrap_or(cfg.beta_p);
            cfg.beta_c = betac.unwrap_or(cfg.beta_c);
            cfg.rho = rho;
            cfg.mode = mode;
            let kp = KernelPair::from_grids(&grid, &relax);
            let start = Instant::now();
            let result = upen_run(&kp, sig.as_slice(), &cfg)?;
            let elapsed = start.elapsed().as_secs_f64();
            save_map(
                &out,
                &MapFile {
                    grid: relax.clone(),
                    distribution: result.distribution.clone(),
                    lambda: None,
                },
            )?;
            if let Some(path) = lambda_out {
                save_map(
                    &path,
                    &MapFile {
                        grid: relax,
                        distribution: result.distribution.clone(),
                        lambda: Some(result.lambda.clone()),
                    },
                )?;
            }
            println!("k_upen={}", result.iterations());
            println!("it_cg={}", result.cg_iterations());
            println!("res={:e}", result.residual_norm());
            if let Some(t) = &truth {
                let err = relative_error(result.distribution.as_slice(), t.distribution.as_slice())?;
                println!("err={err:e}");
            }
            println!("termination={}", result.termination);
            println!("wall_time_s={elapsed:.3}");
        }
        Command::Tikhonov {
            input,
            alpha,
            search,
            truth,
            out,
            nx,
            ny,
            preset,
        } => {
            let (grid, sig) = load_signal(&input)?;
            let truth = truth.map(|p| load_map(&p)).transpose()?;
            // A search needs the truth grid; otherwise use the requested size.
            let relax = match (&truth, search) {
                (Some(t), true) => t.grid.clone(),
                _ => RelaxationGrid::log_spaced(nx, ny)?,
            };
            let cfg = config_for(preset, sig.noise_level());
            let kp = KernelPair::from_grids(&grid, &relax);
            let s = sig.as_slice();
            let start = Instant::now();
            let (alpha, dist, report) = if search {
                let t = truth.as_ref().expect("clap enforces --truth with --search");
                let found =
                    optimal_alpha_search(&kp, s, &t.distribution, &default_alpha_grid(), &cfg)?;
                (found.alpha, found.distribution, found.report)
            } else {
                let alpha = alpha.expect("clap enforces --alpha without --search");
                let (dist, report) = tikhonov_solve(&kp, s, alpha, &cfg)?;
                (alpha, dist, report)
            };
            let elapsed = start.elapsed().as_secs_f64();
            if let Some(path) = &out {
                save_map(
                    path,
                    &MapFile {
                        grid: relax.clone(),
                        distribution: dist.clone(),
                        lambda: None,
                    },
                )?;
            }
            println!("alpha={alpha:e}");
            println!("it_cg={}", report.cg_iterations);
            println!("res={:e}", residual_norm(&kp, dist.as_slice(), s)?);
            if let Some(t) = truth.as_ref().filter(|t| t.grid == relax) {
                let err = relative_error(dist.as_slice(), t.distribution.as_slice())?;
                println!("err={err:e}");
            }
            println!("wall_time_s={elapsed:.3}");
        }
        Command::Project { input, out } => {
            let map = load_map(&input)?;
            save_projections(&out, &map)?;
        }
    }
    Ok(())
}

impl clap::ValueEnum for PhantomKind {
    fn value_variants<'a>() -> &'a [Self] {
        &[PhantomKind::TwoPeaks, PhantomKind::PeaksWithPlateau]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            PhantomKind::TwoPeaks => "p1",
            PhantomKind::PeaksWithPlateau => "p2",
        }))
    }
}

impl clap::ValueEnum for ConstraintMode {
    fn value_variants<'a>() -> &'a [Self] {
        &[
            ConstraintMode::NonNegative,
            ConstraintMode::LowerBound,
            ConstraintMode::Unconstrained,
        ]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            ConstraintMode::NonNegative => "nonneg",
            ConstraintMode::LowerBound => "bound",
            ConstraintMode::Unconstrained => "unconstrained",
        }))
    }
}

impl clap::ValueEnum for Preset {
    fn value_variants<'a>() -> &'a [Self] {
        &[Preset::Simulated, Preset::LowNoise, Preset::Measured]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            Preset::Simulated => "sim",
            Preset::LowNoise => "lownoise",
            Preset::Measured => "real",
        }))
    }
}
