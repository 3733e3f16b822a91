use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use echelon::model::GenerationRanges;
use echelon_cli::config::{InstanceSource, RunConfig};
use echelon_cli::formats::load_json;
use echelon_cli::pipeline;
use echelon_cli::exit;

/// Three-echelon supply chain network design: exact MILP stage, stockout
/// analytics and noise-injection ensembles.
///
/// Log verbosity is controlled by the RUST_LOG environment variable
/// (error, warn, info, debug, trace).
#[derive(Parser)]
#[command(name = "echelon", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance file from a seed.
    Generate {
        #[arg(long)]
        seed: u64,
        /// Shorthand setting plants, warehouses and customers at once.
        #[arg(long)]
        size: Option<usize>,
        #[arg(long, default_value_t = 5)]
        plants: usize,
        #[arg(long, default_value_t = 5)]
        warehouses: usize,
        #[arg(long, default_value_t = 5)]
        customers: usize,
        /// Optional JSON file with sampling ranges.
        #[arg(long)]
        ranges: Option<PathBuf>,
        #[arg(long, default_value = "instance.json")]
        out: PathBuf,
    },
    /// Validate an instance file and list every violation.
    Validate { instance: PathBuf },
    /// Solve the network design stage and run the service analytics.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value = "runs/solve")]
        out_dir: PathBuf,
        /// Run configuration file; flags override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        time_limit: Option<f64>,
        #[arg(long)]
        gap: Option<f64>,
        #[arg(long)]
        node_limit: Option<usize>,
        #[arg(long)]
        safety_factor: Option<f64>,
        /// Also export the model in LP text format.
        #[arg(long)]
        emit_lp: bool,
    },
    /// Run the noise ensembles against a prior solve's artifacts.
    Perturb {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Outer replicate count.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scale of every configured noise spec.
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Dump raw replicate tensors as little-endian binary files.
        #[arg(long)]
        dump_tensors: bool,
    },
    /// Re-render CSV deliverables from stored artifacts.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Generate (or load), solve, perturb and report in one run.
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Shorthand setting all three set sizes of the generated instance.
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        time_limit: Option<f64>,
        #[arg(long)]
        dump_tensors: bool,
        #[arg(long)]
        emit_lp: bool,
    },
}

fn load_config(path: &Option<PathBuf>) -> anyhow::Result<RunConfig> {
    match path {
        Some(p) => load_json(p),
        None => Ok(RunConfig::default()),
    }
}

fn override_scales(cfg: &mut RunConfig, scale: Option<f64>) {
    if let Some(s) = scale {
        for labeled in cfg.noise.specs.iter_mut() {
            labeled.spec.scale = s;
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Generate {
            seed,
            size,
            plants,
            warehouses,
            customers,
            ranges,
            out,
        } => {
            let (ni, nj, nk) = match size {
                Some(s) => (s, s, s),
                None => (plants, warehouses, customers),
            };
            let ranges = match ranges {
                Some(path) => load_json::<GenerationRanges>(&path)?,
                None => GenerationRanges::default(),
            };
            pipeline::cmd_generate(seed, ni, nj, nk, &ranges, &out)
        }
        Command::Validate { instance } => pipeline::cmd_validate(&instance),
        Command::Solve {
            instance,
            out_dir,
            config,
            time_limit,
            gap,
            node_limit,
            safety_factor,
            emit_lp,
        } => {
            let mut cfg = load_config(&config)?;
            cfg.instance = InstanceSource::File { path: instance };
            cfg.output_dir = out_dir;
            if let Some(t) = time_limit {
                cfg.solver.time_limit_seconds = t;
            }
            if let Some(g) = gap {
                cfg.solver.gap_tolerance = g;
            }
            if let Some(n) = node_limit {
                cfg.solver.node_limit = n;
            }
            if let Some(z) = safety_factor {
                cfg.stage2.safety_factor = z;
            }
            pipeline::cmd_solve(&cfg, emit_lp)
        }
        Command::Perturb {
            run_dir,
            config,
            n,
            seed,
            scale,
            workers,
            dump_tensors,
        } => {
            // Reuse the run's stored config unless one is given explicitly.
            let stored = run_dir.join("config.json");
            let mut cfg = match (&config, stored.exists()) {
                (Some(path), _) => load_json(path)?,
                (None, true) => load_json(&stored)?,
                (None, false) => RunConfig::default(),
            };
            cfg.output_dir = run_dir;
            if let Some(n) = n {
                cfg.noise.n = n;
            }
            if let Some(s) = seed {
                cfg.noise.seed = s;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            override_scales(&mut cfg, scale);
            pipeline::cmd_perturb(&cfg, dump_tensors)
        }
        Command::Report { run_dir } => pipeline::cmd_report(&run_dir),
        Command::Pipeline {
            config,
            seed,
            size,
            out_dir,
            n,
            scale,
            workers,
            time_limit,
            dump_tensors,
            emit_lp,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                if let InstanceSource::Generate { seed, .. } = &mut cfg.instance {
                    *seed = s;
                }
            }
            if let Some(s) = size {
                if let InstanceSource::Generate {
                    n_plants,
                    n_warehouses,
                    n_customers,
                    ..
                } = &mut cfg.instance
                {
                    *n_plants = s;
                    *n_warehouses = s;
                    *n_customers = s;
                }
            }
            if let Some(dir) = out_dir {
                cfg.output_dir = dir;
            }
            if let Some(n) = n {
                cfg.noise.n = n;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(t) = time_limit {
                cfg.solver.time_limit_seconds = t;
            }
            override_scales(&mut cfg, scale);
            pipeline::cmd_pipeline(&cfg, dump_tensors, emit_lp)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            exit::CONFIG
        }
    };
    ExitCode::from(code as u8)
}
