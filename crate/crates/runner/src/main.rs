use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dce_runner::config::{Pipeline, ScenarioConfig};
use dce_runner::{run_pipeline, RunError, EXIT_CROSSCHECK_FAILED};

/// Entropy production in an oscillating-mirror cavity.
///
/// Settings come from the config file, then `DCE_*` environment variables
/// (`DCE_PHYSICS__EPSILON=2e-3`), then the flags below.
#[derive(Parser, Debug)]
#[command(name = "dce", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Integration tolerance for the backend(s) this command runs.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Closed-form N and S_d over p and tau.
    SweepEntropy,
    /// Compare closed form, Fock oracle, field oracle and Gaussian pipeline.
    Crosscheck,
    /// Amplitude equations with asymptote residuals.
    Resonance,
    /// Per-mode Gaussian statistics.
    Gaussian,
    /// Exact mode-function Bogoliubov coefficients.
    FieldOracle,
    /// Exact Fock-space evolution of the vacuum.
    FockOracle,
    /// Parse and validate the configuration, then print it with defaults.
    ValidateConfig,
}

fn pipeline_of(c: Command) -> Option<Pipeline> {
    match c {
        Command::SweepEntropy => Some(Pipeline::ShortTime),
        Command::Crosscheck => Some(Pipeline::Crosscheck),
        Command::Resonance => Some(Pipeline::Resonance),
        Command::Gaussian => Some(Pipeline::Gaussian),
        Command::FieldOracle => Some(Pipeline::FieldOracle),
        Command::FockOracle => Some(Pipeline::FockOracle),
        Command::ValidateConfig => None,
    }
}

fn apply_flags(cli: &Cli, cfg: &mut ScenarioConfig, pipeline: Option<Pipeline>) {
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.display().to_string();
    }
    if let Some(tol) = cli.tol {
        let t = &mut cfg.tolerances;
        match pipeline {
            Some(Pipeline::Resonance) | Some(Pipeline::Gaussian) => t.resonance = tol,
            Some(Pipeline::FieldOracle) => t.field = tol,
            Some(Pipeline::FockOracle) => t.fock = tol,
            Some(Pipeline::Crosscheck) => {
                t.field = tol;
                t.fock = tol;
            }
            Some(Pipeline::ShortTime) | None => {}
        }
    }
}

fn run(cli: &Cli) -> Result<i32, RunError> {
    let mut cfg = ScenarioConfig::load(cli.config.as_deref(), std::env::vars())?;
    let pipeline = pipeline_of(cli.command).or(cfg.pipeline);
    apply_flags(cli, &mut cfg, pipeline);
    let Some(pipeline) = pipeline_of(cli.command) else {
        let cfg = match cfg.pipeline {
            Some(p) => cfg.for_pipeline(p)?,
            None => {
                cfg.validate()?;
                cfg
            }
        };
        print!("{}", cfg.to_toml_string());
        return Ok(0);
    };
    let cfg = cfg.for_pipeline(pipeline)?;
    let report = run_pipeline(&cfg)?;
    let dir = PathBuf::from(&cfg.output_dir);
    report.write(&dir)?;
    log::info!("{} finished in {:.2} s; output in {}", pipeline.name(), report.wall_time_s, dir.display());
    Ok(match (pipeline, report.passed) {
        (Pipeline::Crosscheck, Some(false)) => EXIT_CROSSCHECK_FAILED,
        _ => 0,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
