use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptiflow::mesh::TransportKind;
use adaptiflow::scenarios::{diff_timelines, load_scenario_file, run_with, RunOptions, ScenarioReport};
use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "adaptiflow", version, about = "Run and inspect adaptation scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Transport {
    Loopback,
    Socket,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and print its report.
    Run {
        /// Scenario file, or the name of a shipped scenario.
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 300.0)]
        horizon_s: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use the wall clock instead of virtual time.
        #[arg(long)]
        live: bool,
        /// Polling interval; overrides EVENT_LISTENING_INTERVAL_MS and the document.
        #[arg(long)]
        interval_ms: Option<u64>,
        /// Load profile file or shipped profile name.
        #[arg(long)]
        profile: Option<String>,
        #[arg(long, value_enum, default_value_t = Transport::Loopback)]
        transport: Transport,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario document without running it.
    Validate { file: PathBuf },
    /// Compare the adaptation timelines of two reports.
    Diff { a: PathBuf, b: PathBuf },
}

fn read_report(path: &Path) -> Result<ScenarioReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ScenarioReport::from_json(&text)?)
}

fn main() -> Result<ExitCode> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Run {
            scenario,
            horizon_s,
            seed,
            live,
            interval_ms,
            profile,
            transport,
            out,
        } => {
            let spec = load_scenario_file(&scenario)?;
            let opts = RunOptions {
                horizon_s,
                seed,
                interval_ms,
                profile,
                transport: match transport {
                    Transport::Loopback => TransportKind::Loopback,
                    Transport::Socket => TransportKind::Socket,
                },
                live,
                base_dir: scenario.parent().map(Path::to_path_buf),
            };
            let report = run_with(&spec, &opts)?;
            eprint!("{}", report.render_timeline());
            for a in &report.assertions {
                eprintln!(
                    "{} {:?}: {}",
                    if a.passed { "ok  " } else { "FAIL" },
                    a.assertion,
                    a.detail
                );
            }
            match out {
                Some(path) => {
                    std::fs::write(&path, report.to_json()).with_context(|| format!("writing {}", path.display()))?
                }
                None => println!("{}", report.to_json()),
            }
            Ok(if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Validate { file } => {
            let spec = load_scenario_file(&file)?;
            println!(
                "{}: {} node(s), {} assertion(s)",
                spec.name(),
                spec.document.nodes.len(),
                spec.document.assertions.len()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Diff { a, b } => {
            let diff = diff_timelines(&read_report(&a)?, &read_report(&b)?);
            print!("{diff}");
            Ok(if diff.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}
