use std::path::{Path, PathBuf};
use std::process::ExitCode;

use asymcost::data::SynthConfig;
use asymcost::experiment::{self, emit_report, read_report, Experiment, ExperimentConfig};
use asymcost::models::{build_library, ModelLibrary};
use asymcost::{verify, Error};
use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "asymcost", version, about = "Forecasting with asymmetric error costs")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Config override `section.key=value`; repeatable, last wins.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Write the synthetic dataset and its schema.
    Synth,
    /// Fit the model library and save it as a bundle.
    Train,
    /// Choose ensemble members and markdowns on validation data.
    Select,
    /// Run the full asymmetry sweep and write all reports.
    Sweep,
    /// Print the tables of an existing report directory.
    Report,
    /// Run the built-in self checks.
    Verify,
}

enum Failure {
    Run(Error),
    Verification(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn exit_code(e: &Error) -> (u8, &'static str) {
    match e {
        Error::Config(_) => (2, "config"),
        Error::SingularDesign { .. } | Error::Convergence { .. } | Error::Training(_) => (4, "numerical"),
        _ => (3, "data"),
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let needs_file = !matches!(cli.command, Command::Synth | Command::Report | Command::Verify);
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path, &cli.overrides)?,
        None if needs_file => {
            return Err(Error::Config(format!(
                "{:?} requires --config",
                cli.command
            )))
        }
        None => ExperimentConfig::parse_with_overrides("", &cli.overrides)?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn library_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output.dir.join("library")
}

fn cmd_synth(cfg: &ExperimentConfig) -> Result<(), Error> {
    let synth: SynthConfig = experiment::synth_config(cfg);
    let raw = asymcost::data::synth_raw(&synth)?;
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    raw.write_csv(dir.join("cars.csv"))?;
    let schema_path = dir.join("cars.schema");
    std::fs::write(&schema_path, raw.schema.render())
        .map_err(|e| Error::io(&schema_path, e))?;
    println!("wrote {} rows to {}", raw.n_rows(), dir.join("cars.csv").display());
    Ok(())
}

fn prepare(cfg: &ExperimentConfig, reuse_bundle: bool) -> Result<Experiment, Error> {
    let dataset = experiment::load_dataset(cfg)?;
    let splits = experiment::prepare_splits(cfg, &dataset)?;
    let bundle = library_dir(cfg);
    let library = if reuse_bundle && bundle.join("library.json").exists() {
        log::info!("using library bundle {}", bundle.display());
        ModelLibrary::load_bundle(&bundle)?
    } else {
        build_library(&splits, &cfg.effective_library(), true, experiment::library_seed(cfg))?
    };
    Experiment::with_library(cfg, &dataset, splits, library)
}

fn cmd_train(cfg: &ExperimentConfig) -> Result<(), Error> {
    let exp = prepare(cfg, false)?;
    let dir = library_dir(cfg);
    exp.library.save_bundle(&dir)?;
    println!("fitted {} models; bundle written to {}", exp.library.len(), dir.display());
    Ok(())
}

fn cmd_select(cfg: &ExperimentConfig) -> Result<(), Error> {
    let exp = prepare(cfg, true)?;
    let manifest = exp.selection_manifest();
    let path = cfg.output.dir.join("selection.txt");
    std::fs::create_dir_all(&cfg.output.dir).map_err(|e| Error::io(&cfg.output.dir, e))?;
    std::fs::write(&path, &manifest).map_err(|e| Error::io(&path, e))?;
    println!("selection manifest written to {}", path.display());
    Ok(())
}

fn cmd_sweep(cfg: &ExperimentConfig) -> Result<(), Error> {
    let exp = prepare(cfg, true)?;
    let out = exp.run()?;
    emit_report(&out, &cfg.output.dir)?;
    print!("{}", out.table4.to_text(6));
    print!("{}", out.table5.to_text(6));
    println!("reports written to {}", cfg.output.dir.display());
    Ok(())
}

fn cmd_report(dir: &Path) -> Result<(), Error> {
    for table in read_report(dir)? {
        println!("{}", table.to_text(6));
    }
    Ok(())
}

fn cmd_verify() -> Result<(), Failure> {
    let checks = verify::run_all();
    for c in &checks {
        println!("{}", c.line());
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Verification(failed));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli);
    let seed = cfg.as_ref().map_or(cli.seed.unwrap_or(experiment::DEFAULT_SEED), |c| c.seed);
    println!("asymcost {} seed={seed}", env!("CARGO_PKG_VERSION"));
    let cfg = cfg?;
    match cli.command {
        Command::Synth => cmd_synth(&cfg)?,
        Command::Train => cmd_train(&cfg)?,
        Command::Select => cmd_select(&cfg)?,
        Command::Sweep => cmd_sweep(&cfg)?,
        Command::Report => cmd_report(&cfg.output.dir)?,
        Command::Verify => cmd_verify()?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error[config]: --jobs must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(e)) => {
            let (code, kind) = exit_code(&e);
            eprintln!("error[{kind}]: {e}");
            ExitCode::from(code)
        }
        Err(Failure::Verification(n)) => {
            eprintln!("error[verification]: {n} check(s) failed");
            ExitCode::from(5)
        }
    }
}
