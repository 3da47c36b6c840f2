//! Command-line front end for the oppsync simulator.
//!
//! Subcommands cover the whole experiment loop:
//! * `gen` writes a contact trace and an app scenario for one of the
//!   built-in shapes;
//! * `sim` plays the two files through the deterministic engine and writes
//!   the event log plus a summary;
//! * `report` turns a log into per-metric CSV files and a JSON summary;
//! * `check` replays a log and verifies every protocol invariant;
//! * `sweep` runs the relay-ratio study across seeds, in parallel.
//!
//! Every flag can also be set in a TOML file passed via `--config`;
//! explicit flags win. Outputs land in `--out-dir`, the `OPPSYNC_OUT_DIR`
//! environment variable, or the current directory, in that order.
//!
//! Exit codes: 0 success, 1 usage error, 2 unreadable or malformed input,
//! 3 violated protocol invariant.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use oppsync::crdt::PayloadKind;

use config::{resolve_out_dir, Fail, FileConfig, Mode, PropagationKind, Selection, Shape};

#[derive(Parser)]
#[command(
    name = "oppsync",
    version,
    about = "Relay-based CRDT synchronization simulator"
)]
struct Cli {
    /// TOML file providing defaults for any flag; explicit flags win.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory output files are written to.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a contact trace and an app scenario
    Gen(GenArgs),
    /// Run one simulation over a trace and a scenario
    Sim(SimArgs),
    /// Turn a run log into CSV metrics and a JSON summary
    Report(DirArgs),
    /// Replay a run log and verify every protocol invariant
    Check(DirArgs),
    /// Run the relay-ratio study on churn scenarios across seeds
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Scenario family to generate
    #[arg(long, value_enum)]
    shape: Option<Shape>,
    /// Master seed for all generator randomness
    #[arg(long)]
    seed: Option<u64>,
    /// Number of replica nodes
    #[arg(long)]
    replicas: Option<usize>,
    /// Number of dedicated relay vehicles (bus and disaster shapes)
    #[arg(long)]
    relays: Option<usize>,
    /// Pedestrian arrivals per second (churn shape)
    #[arg(long)]
    rate: Option<f64>,
    /// Scenario length in seconds
    #[arg(long)]
    duration_s: Option<u64>,
    /// Updates issued per replica
    #[arg(long)]
    updates: Option<usize>,
    /// Last instant updates may happen, leaving a cool-down tail
    #[arg(long)]
    update_until_s: Option<u64>,
}

/// Protocol and link knobs shared by `sim` and `sweep`.
#[derive(Args)]
struct ProtocolFlags {
    /// Protocol variant
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// How change notices reach standing neighbors
    #[arg(long, value_enum)]
    propagation: Option<PropagationKind>,
    /// Notice period for periodic propagation, in ms
    #[arg(long)]
    period_ms: Option<u64>,
    /// Batch selection strategy of relays
    #[arg(long, value_enum)]
    selection: Option<Selection>,
    /// Replica payload: gcounter, ormap-set-wins or ormap-del-wins
    #[arg(long, value_parser = parse_payload)]
    payload: Option<PayloadKind>,
    /// Fixed link delay per message, in ms
    #[arg(long)]
    base_latency_ms: Option<u64>,
    /// Extra delay per KiB of payload, in ms
    #[arg(long)]
    latency_per_kb_ms: Option<u64>,
    /// Hard horizon in ms; defaults to the end of the inputs
    #[arg(long)]
    end_at_ms: Option<u64>,
    /// Re-check protocol invariants after every event
    #[arg(long)]
    validate: bool,
}

#[derive(Args)]
struct SimArgs {
    /// Contact trace file
    #[arg(long)]
    trace: Option<PathBuf>,
    /// App scenario file
    #[arg(long)]
    app: Option<PathBuf>,
    /// Fraction of undeclared nodes acting as relays; trace roles apply
    /// when absent
    #[arg(long)]
    relay_ratio: Option<f64>,
    #[command(flatten)]
    protocol: ProtocolFlags,
}

#[derive(Args)]
struct DirArgs {
    /// Directory holding log.txt; defaults to the output directory
    dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Relay ratios to compare
    #[arg(long, value_delimiter = ',')]
    ratios: Option<Vec<f64>>,
    /// Number of seeds per ratio
    #[arg(long)]
    seeds: Option<u64>,
    /// First seed; seeds count up from here
    #[arg(long)]
    seed: Option<u64>,
    /// Replicas in the generated churn scenarios
    #[arg(long)]
    replicas: Option<usize>,
    /// Pedestrian arrivals per second
    #[arg(long)]
    rate: Option<f64>,
    /// Scenario length in seconds
    #[arg(long)]
    duration_s: Option<u64>,
    /// Updates issued per replica
    #[arg(long)]
    updates: Option<usize>,
    /// Last instant updates may happen
    #[arg(long)]
    update_until_s: Option<u64>,
    #[command(flatten)]
    protocol: ProtocolFlags,
}

fn parse_payload(s: &str) -> Result<PayloadKind, String> {
    s.parse()
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let out_dir = resolve_out_dir(cli.out_dir, &file);
    match cli.command {
        Command::Gen(args) => commands::gen(args, &file, &out_dir),
        Command::Sim(args) => commands::sim(
            args.trace,
            args.app,
            args.relay_ratio,
            &args.protocol,
            &file,
            &out_dir,
        ),
        Command::Report(args) => commands::report(args.dir, &out_dir),
        Command::Check(args) => commands::check(args.dir, &out_dir),
        Command::Sweep(args) => commands::sweep(args, &file, &out_dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests travel the error path but are not
            // failures.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(match e.downcast_ref::<Fail>() {
                Some(Fail::Usage(_)) => 1,
                Some(Fail::Invariant(_)) => 3,
                Some(Fail::Input(_)) | None => 2,
            })
        }
    }
}
