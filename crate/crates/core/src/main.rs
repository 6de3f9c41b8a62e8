use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rodservo::feature::{
    fit_feature_model, generate_dataset, load_dataset, load_model, save_dataset, save_model, DEFAULT_DATASET_SIZE,
    DEFAULT_FEATURE_DIM,
};
use rodservo::servo::{self, sweep, RunConfig};
use rodservo::world::WorldConfig;
use rodservo::Error;

#[derive(Parser)]
#[command(name = "rodservo", version, about = "Shape servoing of a simulated elastic rod")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random-walk shape dataset.
    GenData(GenDataArgs),
    /// Fit the PCA feature model to a dataset.
    FitFeature(FitFeatureArgs),
    /// Run one closed-loop servo experiment.
    Run(RunArgs),
    /// Run a parameter grid, one log per cell.
    Sweep(RunArgs),
    /// Report the Jacobian estimate error against a finite-difference oracle.
    OracleCheck(OracleArgs),
}

#[derive(Args)]
struct Common {
    /// Run seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct GenDataArgs {
    /// Configuration file; only the world section is used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_DATASET_SIZE)]
    samples: usize,
    #[arg(long, default_value = "dataset.txt")]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct FitFeatureArgs {
    #[arg(long, default_value = "dataset.txt")]
    data: PathBuf,
    /// Feature dimension.
    #[arg(long, default_value_t = DEFAULT_FEATURE_DIM)]
    p: usize,
    #[arg(long, default_value = "feature_model.txt")]
    out: PathBuf,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Step log path for run, output directory for sweep.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the observed centerline of every step.
    #[arg(long)]
    dump_shapes: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    config: PathBuf,
    /// Step log to check the replay against.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Report file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of final steps in the median.
    #[arg(long, default_value_t = 50)]
    window: usize,
    #[command(flatten)]
    common: Common,
}

/// Bad input (exit 2) or a failure while running (exit 1).
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn usage(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }

    fn runtime(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig, Failure> {
    let mut config = RunConfig::load(path).map_err(Failure::usage)?;
    if let Some(seed) = seed {
        config.run.seed = seed;
    }
    Ok(config)
}

fn ensure_parent(path: &Path) -> Result<(), Failure> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => std::fs::create_dir_all(dir).map_err(|e| {
            Failure::runtime(Error::Io {
                path: dir.to_path_buf(),
                source: e,
            })
        }),
        None => Ok(()),
    }
}

fn gen_data(args: GenDataArgs) -> Result<(), Failure> {
    let world = match &args.config {
        Some(path) => load_config(path, None)?.world,
        None => WorldConfig::default(),
    };
    let seed = args.common.seed.unwrap_or(world.seed);
    let dataset = generate_dataset(&world, args.samples, seed).map_err(Failure::usage)?;
    ensure_parent(&args.out)?;
    save_dataset(&dataset, &args.out).map_err(Failure::runtime)?;
    if !args.common.quiet {
        eprintln!("wrote {} samples to {}", dataset.len(), args.out.display());
    }
    Ok(())
}

fn fit_feature(args: FitFeatureArgs) -> Result<(), Failure> {
    let dataset = load_dataset(&args.data).map_err(Failure::usage)?;
    let model = fit_feature_model(&dataset, args.p).map_err(Failure::runtime)?;
    ensure_parent(&args.out)?;
    save_model(&model, &args.out).map_err(Failure::runtime)?;
    if !args.quiet {
        eprintln!("wrote p = {} feature model to {}", model.p(), args.out.display());
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut config = load_config(&args.config, args.common.seed)?;
    if let Some(out) = args.out {
        config.run.log_path = out;
    }
    let model = load_model(&config.run.feature_model_path).map_err(Failure::usage)?;
    let outcome = servo::simulate(&config, &model).map_err(Failure::runtime)?;
    servo::write_outputs(&outcome, &config.run.log_path, args.dump_shapes).map_err(Failure::runtime)?;
    if !args.common.quiet {
        let s = &outcome.summary;
        eprintln!(
            "steps_taken = {}, initial_t1 = {:.6e}, final_t1 = {:.6e}, converged = {}, log = {}",
            s.steps_taken,
            s.initial_t1,
            s.final_t1,
            s.converged,
            config.run.log_path.display()
        );
    }
    Ok(())
}

fn run_sweep(args: RunArgs) -> Result<(), Failure> {
    let config = load_config(&args.config, args.common.seed)?;
    let model = load_model(&config.run.feature_model_path).map_err(Failure::usage)?;
    let out_dir = args.out.unwrap_or_else(|| PathBuf::from("sweep"));
    let results = sweep::run_sweep(&config, &model, &out_dir, args.dump_shapes).map_err(Failure::runtime)?;
    if !args.common.quiet {
        for r in &results {
            eprintln!(
                "cell {:03}: steps_taken = {}, final_t1 = {:.6e}, converged = {}",
                r.cell.index, r.steps_taken, r.final_t1, r.converged
            );
        }
        eprintln!("wrote {} logs to {}", results.len(), out_dir.display());
    }
    Ok(())
}

fn oracle_check(args: OracleArgs) -> Result<(), Failure> {
    let config = load_config(&args.config, args.common.seed)?;
    let model = load_model(&config.run.feature_model_path).map_err(Failure::usage)?;
    let logged = match &args.log {
        Some(path) => Some(servo::log::read_step_log(path).map_err(Failure::usage)?),
        None => None,
    };
    let outcome = servo::simulate(&config, &model).map_err(Failure::runtime)?;
    if let Some(logged) = logged {
        if logged.len() != outcome.records.len() {
            return Err(Failure::Runtime(format!(
                "log has {} rows but the replay produced {}",
                logged.len(),
                outcome.records.len()
            )));
        }
        if let Some((a, _)) = logged.iter().zip(&outcome.records).find(|(a, b)| a != b) {
            return Err(Failure::Runtime(format!("log diverges from the replay at step {}", a.k)));
        }
    }
    let rows = servo::oracle_errors(&outcome, &model).map_err(Failure::runtime)?;
    let mut report = String::from("k,frobenius_error,relative_error\n");
    for r in &rows {
        writeln!(report, "{},{:.16e},{:.16e}", r.k, r.frobenius, r.relative).unwrap();
    }
    match &args.out {
        Some(path) => {
            ensure_parent(path)?;
            std::fs::write(path, &report).map_err(|e| {
                Failure::runtime(Error::Io {
                    path: path.clone(),
                    source: e,
                })
            })?
        }
        None => print!("{report}"),
    }
    if !args.common.quiet {
        match servo::tail_median(&rows, args.window) {
            Some(m) => eprintln!(
                "median relative error over the last {} steps: {m:.6e}",
                rows.len().min(args.window)
            ),
            None => eprintln!("no steps to compare"),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::FitFeature(a) => fit_feature(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => run_sweep(a),
        Command::OracleCheck(a) => oracle_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
