use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use metathresh_core::exec::ExecMode;
use metathresh_core::harness::{self, output, ExperimentSpec, HarnessError, DEFAULT_CONFIG};

/// Simulate metacognitive monitoring and measure detection thresholds.
#[derive(Parser, Debug)]
#[command(name = "metathresh", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the task on a random signal trace and write the event log.
    Simulate(Common),
    /// Measure the untrained task's thresholds by constant stimuli.
    Threshold(Common),
    /// Train with periodic frozen-policy threshold probes.
    Stages(Common),
    /// Compare each speed-up mechanism with the baseline.
    Ablate(Common),
    /// Check the config and exit.
    Validate(Common),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Args, Debug)]
struct Common {
    /// Config file; built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Run this single seed instead of the configured list.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Run every trial on the calling thread.
    #[arg(long)]
    sequential: bool,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(c) => Failure::Config(c.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(common: &Common) -> Result<(ExperimentSpec, Vec<u8>), Failure> {
    let bytes = match &common.config {
        Some(path) => fs::read(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?,
        None => DEFAULT_CONFIG.as_bytes().to_vec(),
    };
    let text = String::from_utf8(bytes.clone()).map_err(|_| Failure::Config("config is not UTF-8".into()))?;
    let mut spec = ExperimentSpec::parse(&text).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(seed) = common.seed {
        spec.seeds = vec![seed];
    }
    Ok((spec, bytes))
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))
}

fn run(command: Command) -> Result<(), Failure> {
    let (name, common) = match &command {
        Command::Simulate(c) => ("simulate", c),
        Command::Threshold(c) => ("threshold", c),
        Command::Stages(c) => ("stages", c),
        Command::Ablate(c) => ("ablate", c),
        Command::Validate(c) => ("validate", c),
    };
    let Format::Csv = common.format;
    let (spec, bytes) = load(common)?;
    let mode = if common.sequential {
        ExecMode::Sequential
    } else {
        ExecMode::Parallel
    };
    let out = &common.out;
    match command {
        Command::Validate(_) => {
            println!("config ok: {} ({} seeds)", spec.name, spec.seeds.len());
            return Ok(());
        }
        Command::Simulate(_) => {
            let runs = harness::run_simulation(&spec, mode)?;
            prepare_out(out)?;
            output::write_simulation(out, &runs)?;
            for r in &runs {
                println!("seed {}: {} of {} events detected", r.seed, r.detected, r.events);
            }
        }
        Command::Threshold(_) => {
            let ms = harness::run_threshold(&spec, mode)?;
            prepare_out(out)?;
            let refs: Vec<_> = ms.iter().collect();
            output::write_psychometric(out, &refs)?;
            output::write_thresholds(out, &refs)?;
        }
        Command::Stages(_) => {
            let report = harness::run_stages_experiment(&spec, mode)?;
            prepare_out(out)?;
            output::write_stages(out, &report)?;
        }
        Command::Ablate(_) => {
            let report = harness::run_ablation(&spec, mode)?;
            prepare_out(out)?;
            output::write_ablation(out, &report)?;
        }
    }
    output::write_manifest(out, name, &bytes, &spec.seeds)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            if !matches!(e.kind(), ErrorKind::MissingSubcommand | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
