//! `eval` subcommands: saliency KL agreement, Fréchet distance between
//! embedding sets, and report aggregation.

use std::path::PathBuf;

use clap::{Args, Subcommand};
use con360::error::{Error, Result};
use con360::metrics::{frechet_distance, s_kl, to_prob_map, EmbeddingSet, ProbMap};
use ndarray::Array2;
use serde::Deserialize;
use serde_json::json;

use crate::util;

#[derive(Subcommand)]
pub enum EvalCmd {
    /// Symmetric per-frame KL between generated and reference saliency.
    Skl(SklArgs),
    /// Fréchet distance between two embedding sets.
    Frechet(FrechetArgs),
    /// Aggregate per-run metric JSON files into one summary table.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct SklArgs {
    /// Generated saliency NPY, (H, W) or (T, H, W).
    #[arg(long)]
    pub gen: PathBuf,
    /// Reference saliency NPY, same shape.
    #[arg(long)]
    pub tgt: PathBuf,
    /// Additive smoothing before normalization.
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    /// Report JSON path; stdout only if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct FrechetArgs {
    /// First embedding set NPY, (N, D).
    #[arg(long)]
    pub a: PathBuf,
    /// Second embedding set NPY, (N, D).
    #[arg(long)]
    pub b: PathBuf,
    /// Report JSON path; stdout only if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Metric JSON files, each {"name", "s_kl"?, "fad"?, "fvd"?}.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Summary JSON path; stdout only if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cmd: EvalCmd, run_id: Option<&str>) -> Result<()> {
    match cmd {
        EvalCmd::Skl(args) => skl(args, run_id),
        EvalCmd::Frechet(args) => frechet(args, run_id),
        EvalCmd::Report(args) => report(args, run_id),
    }
}

fn load_prob_maps(path: &std::path::Path, eps: f64) -> Result<Vec<ProbMap>> {
    util::load_frames(path)?
        .iter()
        .map(|f| to_prob_map(&f.view(), eps))
        .collect()
}

fn emit(report: &serde_json::Value, out: Option<&PathBuf>, run_id: Option<&str>) -> Result<()> {
    let bytes = con360::io::manifest::to_canonical_json(report)?;
    print!("{}", String::from_utf8_lossy(&bytes));
    if let Some(out) = out {
        let out = util::resolve_output(out, run_id);
        con360::io::atomic_write(&out, &bytes)?;
    }
    Ok(())
}

fn skl(args: SklArgs, run_id: Option<&str>) -> Result<()> {
    let gen_path = util::resolve_input(&args.gen);
    let tgt_path = util::resolve_input(&args.tgt);
    let generated = load_prob_maps(&gen_path, args.eps)?;
    let reference = load_prob_maps(&tgt_path, args.eps)?;
    let value = s_kl(&generated, &reference)?;
    let report = json!({
        "metric": "s_kl",
        "value": value,
        "frames": generated.len(),
        "eps": args.eps,
        "inputs": {
            "gen": util::digest_file(&gen_path)?,
            "tgt": util::digest_file(&tgt_path)?,
        },
    });
    emit(&report, args.out.as_ref(), run_id)
}

fn load_embeddings(path: &std::path::Path, tag: &str) -> Result<EmbeddingSet> {
    let (shape, data) = util::load_f32(path)?;
    let [n, d] = shape.as_slice() else {
        return Err(Error::ShapeMismatch(format!(
            "{}: embeddings must be (N, D), got {shape:?}",
            path.display()
        )));
    };
    let arr = Array2::from_shape_vec((*n, *d), data.iter().map(|&v| v as f64).collect()).unwrap();
    EmbeddingSet::new(tag, arr)
}

fn frechet(args: FrechetArgs, run_id: Option<&str>) -> Result<()> {
    let a_path = util::resolve_input(&args.a);
    let b_path = util::resolve_input(&args.b);
    let a = load_embeddings(&a_path, "a")?;
    let b = load_embeddings(&b_path, "b")?;
    let value = frechet_distance(&a, &b)?;
    let report = json!({
        "metric": "frechet",
        "value": value,
        "samples": [a.len(), b.len()],
        "dim": a.dim(),
        "inputs": {
            "a": util::digest_file(&a_path)?,
            "b": util::digest_file(&b_path)?,
        },
    });
    emit(&report, args.out.as_ref(), run_id)
}

#[derive(Deserialize)]
struct RunMetrics {
    name: String,
    #[serde(default)]
    s_kl: Option<f64>,
    #[serde(default)]
    fad: Option<f64>,
    #[serde(default)]
    fvd: Option<f64>,
}

fn report(args: ReportArgs, run_id: Option<&str>) -> Result<()> {
    let mut rows = Vec::new();
    for path in &args.inputs {
        let path = util::resolve_input(path);
        let text = std::fs::read_to_string(&path)?;
        let run: RunMetrics = serde_json::from_str(&text).map_err(|e| Error::JsonParse {
            line: e.line(),
            column: e.column(),
            message: format!("{}: {e}", path.display()),
        })?;
        rows.push(run);
    }
    rows.sort_by(|a, b| a.name.cmp(&b.name));

    fn cell(v: Option<f64>) -> String {
        v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
    }
    eprintln!("{:<24} {:>10} {:>10} {:>10}", "Method", "S_KL", "FAD", "FVD");
    for r in &rows {
        eprintln!(
            "{:<24} {:>10} {:>10} {:>10}",
            r.name,
            cell(r.s_kl),
            cell(r.fad),
            cell(r.fvd)
        );
    }

    let report = json!({
        "columns": ["s_kl", "fad", "fvd"],
        "rows": rows
            .iter()
            .map(|r| json!({"name": r.name, "s_kl": r.s_kl, "fad": r.fad, "fvd": r.fvd}))
            .collect::<Vec<_>>(),
    });
    emit(&report, args.out.as_ref(), run_id)
}
