use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use stakeclaim_core::golden;
use stakeclaim_core::scenario::{run, RunOutput, Scenario, ScenarioError};

#[derive(Parser, Debug)]
#[command(
    name = "stakeclaim",
    version,
    about = "Run zero-trust validator staking scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario and write report plus event log.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Override the horizon.
        #[arg(long)]
        epochs: Option<u64>,
        /// Override the recorded seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a scenario file and list every violation.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run every bundled scenario into DIR/<name>/.
    Golden {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

const EXIT_INVALID: u8 = 1;
const EXIT_VIOLATION: u8 = 2;

fn init_logging() {
    let level = match std::env::var("STAKECLAIM_LOG").as_deref() {
        Ok("trace") => "stakeclaim_core=trace",
        Ok("events") => "stakeclaim_core=debug",
        _ => "off",
    };
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::new(level))
        .with_writer(std::io::stderr)
        .with_target(false)
        .init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            out,
            format,
            epochs,
            seed,
        } => cmd_run(&scenario, &out, format, epochs, seed),
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Golden { out, format } => cmd_golden(&out, format),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}

fn print_violations(path: &Path, err: &ScenarioError) {
    match err {
        ScenarioError::Invalid(list) => {
            eprintln!("{}: {} violation(s)", path.display(), list.len());
            for v in list {
                eprintln!("  - {v}");
            }
        }
        other => eprintln!("{}: {other}", path.display()),
    }
}

fn load(path: &Path) -> Result<std::result::Result<Scenario, ScenarioError>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Scenario::load(&text))
}

fn write_outputs(out: &Path, output: &RunOutput, format: Format) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let (name, body) = match format {
        Format::Json => ("report.json", output.report_json()),
        Format::Csv => ("report.csv", output.report_csv()),
    };
    fs::write(out.join(name), body)?;
    fs::write(out.join("events.jsonl"), output.events_jsonl())?;
    Ok(())
}

/// Prints violations to stderr; returns the exit code for the run.
fn finish(output: &RunOutput) -> u8 {
    let report = &output.report;
    if report.is_clean() {
        return 0;
    }
    for v in &report.violations {
        eprintln!(
            "violation at epoch {}: {} ({})",
            v.epoch, v.invariant, v.detail
        );
    }
    for f in &report.conservation.failures {
        eprintln!("conservation replay: {f}");
    }
    EXIT_VIOLATION
}

fn cmd_run(
    path: &Path,
    out: &Path,
    format: Format,
    epochs: Option<u64>,
    seed: Option<u64>,
) -> Result<u8> {
    let mut scenario = match load(path)? {
        Ok(s) => s,
        Err(err) => {
            print_violations(path, &err);
            return Ok(EXIT_INVALID);
        }
    };
    if let Some(epochs) = epochs {
        scenario.horizon = epochs;
    }
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let output = run(&scenario);
    write_outputs(out, &output, format)?;
    Ok(finish(&output))
}

fn cmd_validate(path: &Path) -> Result<u8> {
    match load(path)? {
        Ok(_) => {
            println!("{}: ok", path.display());
            Ok(0)
        }
        Err(err) => {
            print_violations(path, &err);
            Ok(EXIT_INVALID)
        }
    }
}

fn cmd_golden(out: &Path, format: Format) -> Result<u8> {
    let mut code = 0;
    for name in golden::names() {
        let scenario = golden::scenario(name)?;
        let output = run(&scenario);
        write_outputs(&out.join(name), &output, format)?;
        let status = finish(&output);
        println!(
            "{name}: {} events, digest {}",
            output.report.event_count, output.report.event_digest
        );
        code = code.max(status);
    }
    Ok(code)
}
