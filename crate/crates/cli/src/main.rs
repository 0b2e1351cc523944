use clap::{Parser, Subcommand};
use dumbbell_cli::config::{ExperimentConfig, Tier};
use dumbbell_cli::pipeline::{run, Task};
use dumbbell_cli::report::{check_line, write_outputs};
use dumbbell_cli::PipelineError;
use std::path::PathBuf;
use std::process::ExitCode;

/// Verification pipeline for weighted Dirichlet eigenfunctions on dumbbell domains.
#[derive(Debug, Parser)]
#[command(name = "dumbbell", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment configuration; defaults are used for anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replace the eps ladder by a single channel width.
    #[arg(long, global = true)]
    eps: Option<f64>,
    #[arg(long, global = true, value_enum)]
    tier: Option<Tier>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Single-threaded run with byte-identical outputs.
    #[arg(long, global = true)]
    serial: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cross-section eigenpair and half-sphere angular data.
    CrossSection,
    /// Dumbbell eigenvalues along the eps ladder against the limit spectra.
    Spectra,
    /// Frequency profiles, the right-junction limit and robustness checks.
    Frequency,
    /// Junction profiles, their frequencies and the envelope bounds.
    Profiles,
    /// H_U asymptotics, beta, nodal scan and blow-up comparisons.
    Blowup,
    /// Oracles, Kelvin and Pohozaev identities and refinement rates.
    Identities,
    /// Every acceptance check.
    FullReport,
    /// Print the effective configuration as TOML.
    PrintConfig,
}

fn effective_config(cli: &Cli) -> Result<ExperimentConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(eps) = cli.eps {
        cfg.sampling.eps_ladder = vec![eps];
    }
    if let Some(tier) = cli.tier {
        cfg.tier = tier;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    cfg.output.serial |= cli.serial;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<bool, PipelineError> {
    let cfg = effective_config(cli)?;
    let task = match cli.command {
        Command::CrossSection => Task::CrossSection,
        Command::Spectra => Task::Spectra,
        Command::Frequency => Task::Frequency,
        Command::Profiles => Task::Profiles,
        Command::Blowup => Task::Blowup,
        Command::Identities => Task::Identities,
        Command::FullReport => Task::FullReport,
        Command::PrintConfig => {
            cfg.validate()?;
            print!("{}", cfg.to_toml());
            return Ok(true);
        }
    };
    let report = if cfg.output.serial {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("single-thread pool");
        pool.install(|| run(&cfg, task))?
    } else {
        run(&cfg, task)?
    };
    for c in &report.checks {
        println!("{}", check_line(c));
    }
    let written = write_outputs(&cfg, task, &report, &cfg.output.dir)?;
    println!(
        "wrote {} files to {}",
        written.len(),
        cfg.output.dir.display()
    );
    Ok(report.all_passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
