use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use qutrit_teleport::montecarlo::Execution;
use qutrit_teleport::num_complex::Complex64;
use qutrit_teleport::verify::{run_suites, Suite, VerifyOptions};
use qutrit_teleport::{
    analytics, Error, Format, MatrixSource, Mode, Protocol, QutritState, RunReport, SchmidtVector, SweepReport,
};

/// Schmidt coefficients typed on the command line may be off by rounding.
const SCHMIDT_INPUT_TOL: f64 = 1e-6;
const STATE_INPUT_TOL: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "qtele", version, about = "Probabilistic qutrit teleportation through a two-ququart channel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the protocol for one channel and input state.
    Run(RunArgs),
    /// Tabulate the total success probability over a grid of channels.
    Sweep(SweepArgs),
    /// Run the built-in verification suites.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Json => Format::Json,
            OutputFormat::Csv => Format::Csv,
        }
    }
}

#[derive(clap::Args)]
struct RunArgs {
    /// Schmidt coefficients a0,a1,a2,a3 in ascending order.
    #[arg(long, allow_hyphen_values = true)]
    schmidt: String,
    /// Input state as re,im pairs for α, β, γ (six numbers).
    #[arg(long, allow_hyphen_values = true)]
    state: String,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "json")]
    format: OutputFormat,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Teleport the qubit β|1⟩ + γ|2⟩ (α must be zero), correcting outcomes 9–12 too.
    #[arg(long)]
    qubit: bool,
    /// Number of leading trial traces to include in the report.
    #[arg(long, default_value_t = 10)]
    trace_sample: usize,
}

#[derive(clap::Args)]
struct SweepArgs {
    /// Grid resolution K: squared coefficients are multiples of 1/K.
    #[arg(long, default_value_t = 10)]
    resolution: usize,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct VerifyArgs {
    /// Run only this suite; repeat to select several.
    #[arg(long = "suite", value_name = "NAME")]
    suites: Vec<String>,
    /// Use the correction matrices exactly as printed, misprints included.
    #[arg(long)]
    as_printed: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per channel in the Monte-Carlo suite.
    #[arg(long)]
    trials: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

enum Failure {
    /// Exit status 2: the input was rejected.
    Input(anyhow::Error),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::Validation(_)) => Failure::Input(e),
            _ => Failure::Other(e),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn invalid(msg: String) -> Failure {
    Failure::Input(anyhow::anyhow!(msg))
}

fn parse_numbers(flag: &str, text: &str, count: usize) -> Result<Vec<f64>, Failure> {
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| invalid(format!("--{flag}: malformed number '{}'", s.trim()))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != count {
        return Err(invalid(format!("--{flag}: expected {count} numbers, got {}", values.len())));
    }
    Ok(values)
}

fn parse_schmidt(text: &str, notes: &mut Vec<String>) -> Result<SchmidtVector, Failure> {
    let v = parse_numbers("schmidt", text, 4)?;
    let (a, rescaled) = SchmidtVector::renormalized([v[0], v[1], v[2], v[3]], SCHMIDT_INPUT_TOL)?;
    if rescaled {
        notes.push(format!("Schmidt coefficients renormalized to {a}"));
    }
    Ok(a)
}

fn parse_state(text: &str, notes: &mut Vec<String>) -> Result<QutritState, Failure> {
    let v = parse_numbers("state", text, 6)?;
    let amps = [Complex64::new(v[0], v[1]), Complex64::new(v[2], v[3]), Complex64::new(v[4], v[5])];
    let (psi, rescaled) = QutritState::renormalized(amps, STATE_INPUT_TOL)?;
    if rescaled {
        notes.push("input state renormalized".to_string());
    }
    Ok(psi)
}

fn emit(text: &str, out: Option<&PathBuf>) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, Failure> {
    let mut notes = Vec::new();
    let a = parse_schmidt(&args.schmidt, &mut notes)?;
    let psi = parse_state(&args.state, &mut notes)?;
    if args.trials == 0 {
        return Err(invalid("--trials must be at least 1".into()));
    }
    let mode = if args.qubit { Mode::Qubit } else { Mode::Qutrit };
    for note in &notes {
        eprintln!("note: {note}");
    }
    let protocol = Protocol::new(&psi, &a, mode)?;
    let empirical = protocol.run(args.trials, args.seed, Execution::Parallel)?;
    let report = RunReport::build(&protocol, empirical, &psi, &a, args.seed, args.trace_sample, notes)?;
    emit(&report.encode(args.format.into())?, args.out.as_ref())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode, Failure> {
    let rows = analytics::sweep(args.resolution)?;
    let report = SweepReport::new(args.resolution, rows);
    emit(&report.encode(args.format.into())?, args.out.as_ref())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode, Failure> {
    let suites = if args.suites.is_empty() {
        Suite::ALL.to_vec()
    } else {
        args.suites.iter().map(|s| s.parse::<Suite>()).collect::<Result<Vec<_>, _>>()?
    };
    let defaults = VerifyOptions::default();
    let opts = VerifyOptions {
        source: if args.as_printed { MatrixSource::AsPrinted } else { MatrixSource::Repaired },
        seed: args.seed.unwrap_or(defaults.seed),
        trials: args.trials.unwrap_or(defaults.trials),
        ..defaults
    };
    let start = Instant::now();
    let report = run_suites(&suites, &opts);
    for check in &report.checks {
        let status = if check.passed { "PASS" } else { "FAIL" };
        println!("{status} [{}] {}: {}", check.suite, check.name, check.detail);
    }
    for (suite, elapsed) in &report.durations {
        let ok = report.checks.iter().filter(|c| c.suite == *suite).all(|c| c.passed);
        println!("suite {suite}: {} in {:.2?}", if ok { "ok" } else { "FAILED" }, elapsed);
    }
    let failed: Vec<_> = report.failures().collect();
    println!("{} checks, {} failed, {:.2?}", report.checks.len(), failed.len(), start.elapsed());
    if failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for c in failed {
            eprintln!("failed: [{}] {}", c.suite, c.name);
        }
        Ok(ExitCode::from(1))
    }
}
