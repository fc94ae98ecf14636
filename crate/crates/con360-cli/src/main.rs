//! `con360`: batch front end for the 360-degree conditioning pipeline.
//!
//! Exit codes: 0 success, 2 bad arguments, 3 I/O failure, 4 data validation.
//! Failures additionally emit a machine-readable JSON object on stderr.

mod cmd_cond;
mod cmd_dataset;
mod cmd_eval;
mod cmd_project;
mod util;

use clap::{Parser, Subcommand};
use con360::error::Error;

#[derive(Parser)]
#[command(name = "con360", version, about = "360-degree context conditioning pipeline")]
struct Cli {
    /// Worker threads; 0 = all cores. Never changes output bytes.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Place relative outputs under runs/<run-id>/.
    #[arg(long, global = true)]
    run_id: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spherical projections: cubemap and viewport extraction.
    #[command(subcommand)]
    Project(cmd_project::ProjectCmd),
    /// Conditioning chain: regions, BASD, stack, encode.
    #[command(subcommand)]
    Cond(cmd_cond::CondCmd),
    /// Metrics: S_KL, Fréchet distance, report aggregation.
    #[command(subcommand)]
    Eval(cmd_eval::EvalCmd),
    /// Dataset tooling: segment, split, validate, captions.
    #[command(subcommand)]
    Dataset(cmd_dataset::DatasetCmd),
}

/// Stable machine-readable tag for each error kind.
fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::OutOfBounds { .. } => "out_of_bounds",
        Error::InvalidInput(_) => "invalid_input",
        Error::Aspect { .. } => "aspect",
        Error::ProjectionDomain(_) => "projection_domain",
        Error::NoBoundary => "no_boundary",
        Error::UndefinedBoundary(_) => "undefined_boundary",
        Error::ShapeMismatch(_) => "shape_mismatch",
        Error::Domain(_) => "domain",
        Error::Parameter(_) => "parameter",
        Error::DegenerateCentroid { .. } => "degenerate_centroid",
        Error::Config(_) => "config",
        Error::InsufficientSamples { .. } => "insufficient_samples",
        Error::NpyFormat(_) => "npy_format",
        Error::UnsupportedLayout(_) => "unsupported_layout",
        Error::PgmFormat(_) => "pgm_format",
        Error::Manifest(_) => "manifest",
        Error::SchemaVersion { .. } => "schema_version",
        Error::JsonParse { .. } => "json_parse",
        Error::Io(_) => "io",
    }
}

/// 2 = usage, 3 = I/O, 4 = data validation.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => 3,
        Error::Parameter(_) => 2,
        _ => 4,
    }
}

fn dispatch(cli: Cli) -> con360::error::Result<()> {
    let run_id = cli.run_id.as_deref();
    match cli.command {
        Command::Project(cmd) => cmd_project::run(cmd, run_id),
        Command::Cond(cmd) => cmd_cond::run(cmd, run_id),
        Command::Eval(cmd) => cmd_eval::run(cmd, run_id),
        Command::Dataset(cmd) => cmd_dataset::run(cmd, run_id),
    }
}

fn main() {
    let cli = Cli::parse();
    if cli.threads > 0 {
        // worker count affects runtime only; all outputs are assembled in
        // deterministic index order
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    if let Err(e) = dispatch(cli) {
        let code = exit_code(&e);
        let payload = serde_json::json!({
            "error": {"kind": error_kind(&e), "message": e.to_string()},
            "exit_code": code,
        });
        eprintln!("{payload}");
        std::process::exit(code);
    }
}
