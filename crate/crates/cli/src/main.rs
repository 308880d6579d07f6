use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pnest::experiments::{preset, run_scenario, verify, ExperimentConfig, VerifyOptions, SCENARIOS};
use pnest::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(name = "pnest", version, about = "Phase noise estimation experiments for coded OFDM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a study and write its CSV artifact.
    Run {
        /// TOML config file; its `scenario` key selects the preset it overrides.
        #[arg(long, conflicts_with = "scenario")]
        config: Option<PathBuf>,
        /// Run a built-in preset without a config file.
        #[arg(long)]
        scenario: Option<String>,
        /// Output directory; defaults to the config's `out` key.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the self-check suites.
    Verify {
        /// Fewer random instances.
        #[arg(long)]
        quick: bool,
        /// Corrupt the duality-gap fixtures; the run must then fail.
        #[arg(long)]
        inject_fault: bool,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// List the built-in scenarios.
    ListScenarios,
    /// Print a preset as a TOML config.
    ShowConfig { scenario: String },
}

fn fail(code: u8, err: &Error) -> ExitCode {
    match err {
        Error::Config(items) => {
            eprintln!("invalid configuration:");
            for i in items {
                eprintln!("  - {i}");
            }
        }
        other => eprintln!("error: {other}"),
    }
    ExitCode::from(code)
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) | Error::InvalidDimension(_) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn load(config: Option<PathBuf>, scenario: Option<String>) -> pnest::Result<ExperimentConfig> {
    match (config, scenario) {
        (Some(path), _) => ExperimentConfig::from_file(&path),
        (None, Some(id)) => preset(&id),
        (None, None) => Err(Error::Config(vec!["pass --config <file> or --scenario <id>".into()])),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run { config, scenario, out } => {
            let cfg = match load(config, scenario) {
                Ok(c) => c,
                Err(e) => return fail(exit_code(&e), &e),
            };
            let Some(dir) = out.or_else(|| cfg.out.clone().map(PathBuf::from)) else {
                let e = Error::Config(vec!["no output directory: pass --out or set `out`".into()]);
                return fail(EXIT_VALIDATION, &e);
            };
            if let Err(e) = cfg.validate() {
                return fail(EXIT_VALIDATION, &e);
            }
            match run_scenario(&cfg, &dir) {
                Ok(paths) => {
                    for p in paths {
                        println!("{}", p.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(exit_code(&e), &e),
            }
        }
        Command::Verify { quick, inject_fault, seed } => match verify(VerifyOptions { quick, inject_fault, seed }) {
            Ok(report) => {
                print!("{report}");
                if report.passed() {
                    println!("all suites passed");
                    ExitCode::SUCCESS
                } else {
                    println!("verification failed");
                    ExitCode::from(EXIT_VERIFY)
                }
            }
            Err(e) => fail(EXIT_RUNTIME, &e),
        },
        Command::ListScenarios => {
            for s in SCENARIOS.iter() {
                println!("{:<20} {}", s.id, s.description);
            }
            ExitCode::SUCCESS
        }
        Command::ShowConfig { scenario } => match preset(&scenario) {
            Ok(cfg) => {
                print!("{}", cfg.to_toml());
                ExitCode::SUCCESS
            }
            Err(e) => fail(EXIT_VALIDATION, &e),
        },
    }
}
