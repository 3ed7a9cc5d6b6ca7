//! `rsee`: run actuator scenarios from JSON documents.
//!
//! Exit status is 0 on success, 1 when the input is rejected and 2 when a
//! simulation or analysis fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rsee_core::scenario::{
    self, parse_document, BatchReport, RunSummary, Scenario, ScenarioDoc, ScenarioError, ScenarioKind,
};
use serde_json::Value;

#[derive(Debug, Parser)]
#[command(name = "rsee", version, about = "Rotary series elastic actuator simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario document (JSON); a directory of documents for `batch`.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Overrides the document seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Format of the metrics printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the scenario described by --config (default: sinusoid tracking).
    Run,
    /// Run every document in a directory, or the interaction battery when
    /// no --config is given.
    Batch,
    /// Torque and stiffness map over pre-tension or offset.
    Sweep,
    /// Frequency response of the torque loop.
    Bode {
        /// Closed-loop response instead of the open loop.
        #[arg(long)]
        closed: bool,
    },
    /// Fit the quasi-static model to synthetic torque-deflection data.
    Fit,
    /// Search for the configuration that best matches a target profile.
    Search,
    /// Print the normalized scenario document.
    PrintConfig,
}

enum Failure {
    Input(String),
    Run(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let msg = match &e {
            ScenarioError::Simulation {
                partial: Some(path), ..
            } => format!("{e} (partial record: {})", path.display()),
            _ => e.to_string(),
        };
        if e.is_validation() {
            Failure::Input(msg)
        } else {
            Failure::Run(msg)
        }
    }
}

fn read_document(path: Option<&Path>) -> Result<ScenarioDoc, Failure> {
    match path {
        None => Ok(ScenarioDoc::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
            Ok(parse_document(&text)?)
        }
    }
}

fn scenario_for(common: &Common, kind: Option<ScenarioKind>) -> Result<Scenario, Failure> {
    let mut doc = read_document(common.config.as_deref())?;
    if let Some(k) = kind {
        doc.kind = k;
    }
    if let Some(seed) = common.seed {
        doc.seed = seed;
    }
    Ok(Scenario::from_doc(&doc)?)
}

fn print_metrics(summary: &RunSummary, format: Format) {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(summary).expect("summary serializes")),
        Format::Csv => {
            println!("metric,value");
            for (k, v) in &summary.metrics {
                println!("{k},{}", value_text(v));
            }
        }
    }
}

fn value_text(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn print_batch(report: &BatchReport, format: Format) {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(report).expect("report serializes")),
        Format::Csv => {
            println!("name,kind,metric,value");
            for e in &report.entries {
                match (&e.summary, &e.error) {
                    (Some(s), _) => {
                        for (k, v) in &s.metrics {
                            println!("{},{},{k},{}", e.name, e.kind.as_str(), value_text(v));
                        }
                    }
                    (None, Some(err)) => println!("{},{},error,\"{}\"", e.name, e.kind.as_str(), err.replace('"', "'")),
                    (None, None) => {}
                }
            }
        }
    }
}

fn batch_scenarios(common: &Common) -> Result<Vec<Scenario>, Failure> {
    let mut scenarios = match common.config.as_deref() {
        None => scenario::phri_battery(),
        Some(p) if p.is_dir() => scenario::load_dir(p).map_err(|e| match e {
            ScenarioError::Io(m) => Failure::Input(m),
            other => other.into(),
        })?,
        Some(p) => vec![Scenario::from_doc(&read_document(Some(p))?)?],
    };
    if let Some(seed) = common.seed {
        for s in &mut scenarios {
            let mut doc = s.doc.clone();
            doc.seed = seed;
            *s = Scenario::from_doc(&doc)?;
        }
    }
    Ok(scenarios)
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let common = &cli.common;
    let kind = match cli.command {
        Command::Run | Command::Batch | Command::PrintConfig => None,
        Command::Sweep => Some(ScenarioKind::SweepMap),
        Command::Bode { closed: false } => Some(ScenarioKind::BodeOpen),
        Command::Bode { closed: true } => Some(ScenarioKind::BodeClosed),
        Command::Fit => Some(ScenarioKind::QuasiStatic),
        Command::Search => Some(ScenarioKind::DesignSearch),
    };
    match cli.command {
        Command::PrintConfig => {
            let s = scenario_for(common, None)?;
            println!("{}", serde_json::to_string_pretty(&s.doc).expect("documents serialize"));
        }
        Command::Batch => {
            let scenarios = batch_scenarios(common)?;
            let report = scenario::batch(&scenarios, &common.out)?;
            if !common.quiet {
                print_batch(&report, common.format);
            }
            if report.failures > 0 {
                return Err(Failure::Run(format!(
                    "{} of {} scenarios failed",
                    report.failures,
                    report.entries.len()
                )));
            }
        }
        _ => {
            let s = scenario_for(common, kind)?;
            let summary = scenario::run(&s, &common.out)?;
            if !common.quiet {
                print_metrics(&summary, common.format);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
