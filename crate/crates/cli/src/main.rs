use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod figures;
mod manifest;
mod plot;

use config::{config_err, AnalysisSpec, ConfigError, Overrides, RunConfig};

/// Squeezed-state array simulations and their analysis.
#[derive(Parser)]
#[command(name = "squeezelab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// RNG master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of shots (trajectories for loss scans); overrides the config.
    #[arg(long)]
    shots: Option<usize>,
    /// Worker threads. Output does not depend on this.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root for default output directories.
    #[arg(long, env = "SQUEEZELAB_OUT", default_value = "runs", hide_env_values = true)]
    out_root: PathBuf,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, shots: self.shots }
    }

    fn dir(&self, config_dir: Option<&Path>, default: &str) -> PathBuf {
        self.out.clone().or_else(|| config_dir.map(Path::to_path_buf)).unwrap_or_else(|| self.out_root.join(default))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured experiment and write its shot records.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Apply estimators to a shot-record CSV.
    Analyze {
        /// Shot-record CSV.
        input: PathBuf,
        /// Analysis spec JSON.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Field sensitivity against interrogation time.
    Scan {
        #[arg(long)]
        config: PathBuf,
        /// Interrogation times, µs.
        #[arg(long, value_delimiter = ',', default_value = "150,250,342,500")]
        t_int_us: Vec<f64>,
        /// Readout phases per fringe.
        #[arg(long, default_value_t = 5)]
        phases: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Regenerate the data and plot for one figure.
    Reproduce {
        /// One of fig1b, fig1c, fig2b, fig2c, fig3b, fig4a, fig4b, supp2, supp4, supp5, loss-floor.
        target: String,
        #[command(flatten)]
        common: Common,
    },
    /// Squeezing with particle loss on a single site.
    LossFloor {
        /// Config whose `loss` and `lattice` sections are used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        atoms: usize,
        /// Last time, ms.
        #[arg(long, default_value_t = 60.0)]
        t_max_ms: f64,
        /// Time step, ms.
        #[arg(long, default_value_t = 2.0)]
        dt_ms: f64,
        #[command(flatten)]
        common: Common,
    },
}

fn load(path: &Path, common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    cfg.apply(&common.overrides());
    cfg.validate()?;
    Ok(cfg)
}

fn main_inner(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, common } => {
            let cfg = load(&config, &common)?;
            let dir = common.dir(cfg.output_dir.as_deref(), &cfg.run_id);
            commands::simulate(&cfg, common.workers, &dir)
        }
        Command::Analyze { input, config, common } => {
            let mut spec = AnalysisSpec::load(&config)?;
            if let Some(s) = common.seed {
                spec.bootstrap.seed = s;
            }
            commands::analyze(&input, &spec, &common.dir(None, "analysis"))
        }
        Command::Scan { config, t_int_us, phases, common } => {
            let cfg = load(&config, &common)?;
            let dir = common.dir(cfg.output_dir.as_deref(), &format!("{}-scan", cfg.run_id));
            let t_ints: Vec<f64> = t_int_us.iter().map(|t| t * 1e-6).collect();
            commands::scan(&cfg, &t_ints, phases, common.workers, &dir)
        }
        Command::Reproduce { target, common } => {
            let opts = figures::Options { shots: common.shots, seed: common.seed, workers: common.workers };
            figures::reproduce(&target, &opts, &common.dir(None, &target))
        }
        Command::LossFloor { config, atoms, t_max_ms, dt_ms, common } => {
            let cfg = match &config {
                Some(p) => load(p, &common)?,
                None => RunConfig::default(),
            };
            if !(dt_ms > 0.0 && t_max_ms >= 0.0) {
                return Err(config_err("--dt-ms must be > 0 and --t-max-ms >= 0"));
            }
            let steps = (t_max_ms / dt_ms).round() as usize;
            let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt_ms * 1e-3).collect();
            let mut loss = cfg.loss.clone();
            if let Some(n) = common.shots {
                loss.n_trajectories = n;
            }
            let seed = common.seed.unwrap_or(cfg.master_seed);
            commands::loss_floor(atoms, &times, &loss, &cfg.lattice, seed, &common.dir(None, "loss-floor"))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
