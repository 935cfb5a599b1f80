//! `dualtri`: run a scenario command and write plot-ready tables.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use dualtri::scenario::{self, Command, OutputFormat, RunOptions};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    SegmentTorque,
    EnergyCurve,
    Equilibria,
    ForceDeflection,
    StiffnessProfile,
    BucklingReport,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::SegmentTorque => Command::SegmentTorque,
            Cmd::EnergyCurve => Command::EnergyCurve,
            Cmd::Equilibria => Command::Equilibria,
            Cmd::ForceDeflection => Command::ForceDeflection,
            Cmd::StiffnessProfile => Command::StiffnessProfile,
            Cmd::BucklingReport => Command::BucklingReport,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Statics, buckling and stiffness of a three-segment tensegrity manipulator.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Args {
    /// Analysis to run.
    #[arg(value_enum)]
    command: Cmd,

    /// Scenario JSON file (a run summary is accepted too).
    #[arg(long)]
    scenario: PathBuf,

    /// Override a scenario value, e.g. `--set controls.l0=0.6`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,

    #[arg(long, value_enum, default_value = "csv")]
    format: Format,

    /// Accept grid points that failed to converge instead of exiting with an error.
    #[arg(long)]
    keep_going: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let options = RunOptions {
        out_dir: args.out,
        format: match args.format {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        },
        keep_going: args.keep_going,
    };
    let result = scenario::load_scenario(&args.scenario, &args.overrides)
        .and_then(|sc| scenario::run(args.command.into(), &sc, &options));
    match result {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            for f in &outcome.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
