use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use starris_cli::config::ExperimentConfig;
use starris_cli::run::{self, RunFlags, VERIFY_TOL};
use starris_cli::{CliError, Scheme};

#[derive(Parser)]
#[command(name = "starris", version, about = "STAR-RIS MIMO downlink experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the protocols listed in the config and write one CSV row per cell.
    Run(RunArgs),
    /// Run ES, MS, TS and the reflect-only baseline on identical draws.
    Compare(RunArgs),
    /// Check a config without solving anything.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// CSV destination, overriding the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for trials.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Recompute the WSR of sampled rows from their stored configurations.
    #[arg(long)]
    verify: bool,
    /// Replaces `base_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Record wall-clock time per cell; without it `wall_ms` is 0 and the
    /// CSV is reproducible byte for byte.
    #[arg(long)]
    timing: bool,
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, CliError> {
    let config = ExperimentConfig::load(path)?;
    let problems = config.validate();
    if problems.is_empty() {
        Ok(config)
    } else {
        let list: Vec<String> = problems.iter().map(|p| p.to_string()).collect();
        Err(CliError::Config(list.join("; ")))
    }
}

fn run(args: &RunArgs, compare: bool) -> Result<(), CliError> {
    let mut config = load(&args.config)?;
    if let Some(seed) = args.seed {
        config.base_seed = seed;
    }
    let schemes: Vec<Scheme> = if compare { Scheme::COMPARE.to_vec() } else { config.protocols.clone() };
    let out = args.out.clone().or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("results.csv"));
    let io = |e: std::io::Error| CliError::Io(format!("writing {}: {e}", out.display()));
    // Opened up front so an unwritable path fails before any solve.
    let mut file = std::fs::File::create(&out).map_err(io)?;
    let results = run::execute(&config, &schemes, RunFlags { jobs: args.jobs, timing: args.timing })?;
    file.write_all(run::csv(&config, &results).as_bytes()).map_err(io)?;
    print!("{}", run::summary(&config, &results));
    println!("wrote {} rows to {}", results.len(), out.display());
    if args.verify {
        let v = run::verify(&config, &results)?;
        println!("verify: {} rows recomputed, max |ΔWSR| = {:.3e}", v.rows.len(), v.max_error);
        for msg in &v.violations {
            println!("verify: {msg}");
        }
        if !(v.max_error <= VERIFY_TOL) || !v.violations.is_empty() {
            return Err(CliError::Solver("verification failed".into()));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args, false),
        Command::Compare(args) => run(args, true),
        Command::ValidateConfig { config } => ExperimentConfig::load(config).and_then(|c| {
            let problems = c.validate();
            if problems.is_empty() {
                println!("{}: valid", config.display());
                Ok(())
            } else {
                for p in &problems {
                    println!("{p}");
                }
                Err(CliError::Config(format!("{} violation(s)", problems.len())))
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("starris: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
