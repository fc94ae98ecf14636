//! `dataset` subcommands: segmentation, splits, validation, and the caption
//! export/ingest round trip.

use std::path::PathBuf;

use clap::{Args, Subcommand};
use con360::dataset::{
    export_caption_tasks, ingest_captions, segment_manifest, split_manifest, validate_targets,
    ClipRecord, Manifest, SegmentMedia,
};
use con360::error::{Error, Result};
use con360::io::manifest::{read_manifest, write_manifest};
use serde_json::json;

use crate::util;

#[derive(Subcommand)]
pub enum DatasetCmd {
    /// Cut every clip into fixed-length overlapping segments.
    Segment(SegmentArgs),
    /// Assign train/val splits at clip level, deterministically by seed.
    Split(SplitArgs),
    /// Check segment media against the target format; report-only.
    Validate(ValidateArgs),
    /// Caption task export and result ingestion.
    #[command(subcommand)]
    Captions(CaptionsCmd),
}

#[derive(Subcommand)]
pub enum CaptionsCmd {
    /// Render cube faces per timestamp and emit the captioning task list.
    Export(CaptionExportArgs),
    /// Fold caption results back into per-clip records.
    Ingest(CaptionIngestArgs),
}

#[derive(Args)]
pub struct SegmentArgs {
    /// Clip list: manifest JSON or a bare JSON array of clip records.
    #[arg(long)]
    pub clips: PathBuf,
    /// Segment length in seconds.
    #[arg(long, default_value_t = 4.0)]
    pub seg_len: f64,
    /// Overlap between consecutive segments in seconds.
    #[arg(long, default_value_t = 1.0)]
    pub overlap: f64,
    /// Output manifest JSON path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SplitArgs {
    /// Input manifest JSON.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Train fraction.
    #[arg(long, default_value_t = 0.85)]
    pub frac: f64,
    /// Shuffle seed.
    #[arg(long)]
    pub seed: u64,
    /// Output manifest JSON path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ValidateArgs {
    /// Segment media descriptors, JSON array.
    #[arg(long)]
    pub media: PathBuf,
    /// Report JSON path; stdout summary either way.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CaptionExportArgs {
    /// ERP frames NPY, (T, H, W).
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long, default_value_t = 8.0)]
    pub fps: f64,
    #[arg(long)]
    pub clip_id: String,
    /// Comma-separated timestamps in seconds; segment midpoint if omitted.
    #[arg(long)]
    pub timestamps: Option<String>,
    #[arg(long, default_value_t = 256)]
    pub face_size: usize,
    /// Output directory for face NPYs and tasks.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct CaptionIngestArgs {
    /// Caption results JSON.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output per-clip caption records JSON.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cmd: DatasetCmd, run_id: Option<&str>) -> Result<()> {
    match cmd {
        DatasetCmd::Segment(args) => segment(args, run_id),
        DatasetCmd::Split(args) => split(args, run_id),
        DatasetCmd::Validate(args) => validate(args, run_id),
        DatasetCmd::Captions(CaptionsCmd::Export(args)) => captions_export(args, run_id),
        DatasetCmd::Captions(CaptionsCmd::Ingest(args)) => captions_ingest(args, run_id),
    }
}

/// Accept either a full manifest or a bare JSON array of clip records.
fn load_clips(path: &std::path::Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::JsonParse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if value.is_array() {
        let clips: Vec<ClipRecord> =
            serde_json::from_value(value).map_err(|e| Error::Manifest(e.to_string()))?;
        Manifest::new(clips)
    } else {
        con360::io::manifest::manifest_from_json(&text)
    }
}

fn segment(args: SegmentArgs, run_id: Option<&str>) -> Result<()> {
    let clips_path = util::resolve_input(&args.clips);
    let out = util::resolve_output(&args.out, run_id);
    let manifest = load_clips(&clips_path)?;
    let (segmented, warnings) = segment_manifest(&manifest, args.seg_len, args.overlap)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    write_manifest(&segmented, &out)?;

    let mut sidecar = util::Sidecar::new(
        "dataset segment",
        json!({"seg_len": args.seg_len, "overlap": args.overlap, "warnings": warnings}),
    );
    sidecar.record_input(&clips_path)?;
    sidecar.record_output(&out.display().to_string());
    sidecar.write(&out)
}

fn split(args: SplitArgs, run_id: Option<&str>) -> Result<()> {
    let manifest_path = util::resolve_input(&args.manifest);
    let out = util::resolve_output(&args.out, run_id);
    let manifest = read_manifest(&manifest_path)?;
    let split = split_manifest(&manifest, args.frac, args.seed)?;
    write_manifest(&split, &out)?;

    let mut sidecar = util::Sidecar::new(
        "dataset split",
        json!({"frac": args.frac, "seed": args.seed}),
    );
    sidecar.record_input(&manifest_path)?;
    sidecar.record_output(&out.display().to_string());
    sidecar.write(&out)
}

fn validate(args: ValidateArgs, run_id: Option<&str>) -> Result<()> {
    let media_path = util::resolve_input(&args.media);
    let text = std::fs::read_to_string(&media_path)?;
    let media: Vec<SegmentMedia> = serde_json::from_str(&text).map_err(|e| Error::JsonParse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let report = validate_targets(&media);
    println!(
        "{} segments checked, {} flags",
        media.len(),
        report.flags.len()
    );
    for f in &report.flags {
        println!(
            "  {} segment {}: {} ({})",
            f.clip_id, f.segment_index, f.field, f.detail
        );
    }
    if let Some(out) = &args.out {
        let out = util::resolve_output(out, run_id);
        util::write_json(&out, &report)?;
        let mut sidecar = util::Sidecar::new("dataset validate", json!({}));
        sidecar.record_input(&media_path)?;
        sidecar.record_output(&out.display().to_string());
        sidecar.write(&out)?;
    }
    Ok(())
}

fn captions_export(args: CaptionExportArgs, run_id: Option<&str>) -> Result<()> {
    let frames_path = util::resolve_input(&args.frames);
    let out_dir = util::resolve_output(&args.out, run_id);
    let frames = util::load_frames(&frames_path)?;
    let duration = frames.len() as f64 / args.fps;

    let timestamps: Vec<f64> = match &args.timestamps {
        Some(list) => list
            .split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| Error::Parameter(format!("bad timestamp {t:?}")))
            })
            .collect::<Result<_>>()?,
        None => vec![duration / 2.0],
    };

    // nearest frame whose interval [t/fps, (t+1)/fps) contains the timestamp
    let tagged: Vec<(f64, Option<ndarray::Array2<f32>>)> = timestamps
        .iter()
        .map(|&ts| {
            let idx = (ts * args.fps).floor();
            if ts < 0.0 || idx < 0.0 || idx as usize >= frames.len() {
                (ts, None)
            } else {
                (ts, Some(frames[idx as usize].clone()))
            }
        })
        .collect();

    let (tasks, warnings) =
        export_caption_tasks(&args.clip_id, &tagged, args.face_size, &out_dir)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    util::write_json(&out_dir.join("tasks.json"), &tasks)?;

    let mut sidecar = util::Sidecar::new(
        "dataset captions export",
        json!({
            "clip_id": args.clip_id,
            "fps": args.fps,
            "face_size": args.face_size,
            "timestamps": timestamps,
            "warnings": warnings,
        }),
    );
    sidecar.record_input(&frames_path)?;
    for t in &tasks {
        sidecar.record_output(&t.image_path);
    }
    sidecar.record_output("tasks.json");
    sidecar.write(&out_dir)
}

fn captions_ingest(args: CaptionIngestArgs, run_id: Option<&str>) -> Result<()> {
    let input = util::resolve_input(&args.input);
    let out = util::resolve_output(&args.out, run_id);
    let text = std::fs::read_to_string(&input)?;
    let (records, warnings) = ingest_captions(&text)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    util::write_json(&out, &records)?;

    let mut sidecar = util::Sidecar::new(
        "dataset captions ingest",
        json!({"warnings": warnings}),
    );
    sidecar.record_input(&input)?;
    sidecar.record_output(&out.display().to_string());
    sidecar.write(&out)
}
