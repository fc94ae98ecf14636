//! `cond` subcommands: the saliency -> regions -> BASD -> stack -> encode
//! conditioning chain. Every step is deterministic and writes a sidecar.

use std::path::PathBuf;

use clap::{Args, Subcommand};
use con360::basd::basd_for_fov;
use con360::conditioning::{
    map_encoder_forward, stack_maps, ConditioningStack, MapEncoderConfig, WeightStore,
};
use con360::error::{Error, Result};
use con360::geometry::{FovSpec, LatLon};
use con360::saliency::{
    normalize_minmax_raw, select_fovs_for_sequence, SaliencyFrame, SaliencySequence,
    ViewpointParams,
};
use ndarray::{Array2, Array4};
use serde_json::json;

use crate::util;

#[derive(Subcommand)]
pub enum CondCmd {
    /// Derive salient regions and target viewpoints from a saliency sequence.
    Regions(RegionsArgs),
    /// Build the signed boundary-distance map for a field of view.
    Basd(BasdArgs),
    /// Stack normalized saliency and BASD into the (T, 2, H, W) tensor.
    Stack(StackArgs),
    /// Run the Map Encoder forward pass over a conditioning stack.
    Encode(EncodeArgs),
}

#[derive(Args, Clone)]
pub struct RegionsArgs {
    /// Saliency NPY, (H, W) or (T, H, W).
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 8.0)]
    pub fps: f64,
    /// Threshold applied after min-max normalization.
    #[arg(long, default_value_t = 0.5)]
    pub tau: f32,
    /// Minimum region size as a fraction of all pixels.
    #[arg(long, default_value_t = 1e-4)]
    pub min_region_frac: f64,
    /// Viewpoint size in degrees, HxV.
    #[arg(long, default_value = "90x90")]
    pub fov: String,
    /// How many viewpoints to keep, by region mass.
    #[arg(long, default_value_t = 1)]
    pub top_k: usize,
    /// Output JSON path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct BasdArgs {
    /// Saliency NPY, used when --center auto.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 8.0)]
    pub fps: f64,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f32,
    #[arg(long, default_value_t = 1e-4)]
    pub min_region_frac: f64,
    /// Field-of-view size in degrees, HxV.
    #[arg(long, default_value = "90x90")]
    pub fov: String,
    /// "auto" (top-mass region centroid) or "lat,lon" in degrees.
    #[arg(long, default_value = "auto")]
    pub center: String,
    /// Output NPY path for the raw signed map, shape (H, W).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a 16-bit PGM visualization plus packing parameters.
    #[arg(long)]
    pub pgm: Option<PathBuf>,
}

#[derive(Args)]
pub struct StackArgs {
    /// Saliency NPY, (T, H, W).
    #[arg(long)]
    pub saliency: PathBuf,
    /// BASD NPY, (H, W) shared across frames or (T, H, W).
    #[arg(long)]
    pub basd: PathBuf,
    #[arg(long, default_value_t = 8.0)]
    pub fps: f64,
    /// Output NPY path, shape (T, 2, H, W).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EncodeArgs {
    /// Conditioning stack NPY, (T, 2, H, W).
    #[arg(long)]
    pub stack: PathBuf,
    #[arg(long, default_value_t = 8.0)]
    pub fps: f64,
    /// Weight directory (NPY files + index.json); zero weights if omitted.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Output directory, one NPY per injection site.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cmd: CondCmd, run_id: Option<&str>) -> Result<()> {
    match cmd {
        CondCmd::Regions(args) => regions(args, run_id),
        CondCmd::Basd(args) => basd(args, run_id),
        CondCmd::Stack(args) => stack(args, run_id),
        CondCmd::Encode(args) => encode(args, run_id),
    }
}

fn load_sequence(path: &std::path::Path, fps: f64) -> Result<SaliencySequence> {
    let frames = util::load_frames(path)?
        .into_iter()
        .map(SaliencyFrame::new)
        .collect::<Result<Vec<_>>>()?;
    SaliencySequence::new(frames, fps)
}

fn viewpoint_params(tau: f32, min_region_frac: f64, fov: &str, top_k: usize) -> Result<ViewpointParams> {
    let (h_deg, v_deg) = util::parse_fov_deg(fov)?;
    Ok(ViewpointParams {
        tau,
        min_region_frac,
        fov_w: h_deg.to_radians(),
        fov_h: v_deg.to_radians(),
        top_k,
    })
}

fn fov_json(fov: &FovSpec) -> serde_json::Value {
    json!({
        "lat_deg": fov.center.lat().to_degrees(),
        "lon_deg": fov.center.lon().to_degrees(),
        "hfov_deg": fov.hfov.to_degrees(),
        "vfov_deg": fov.vfov.to_degrees(),
        "roll_deg": fov.roll.to_degrees(),
    })
}

fn regions(args: RegionsArgs, run_id: Option<&str>) -> Result<()> {
    let input = util::resolve_input(&args.input);
    let out = util::resolve_output(&args.out, run_id);
    let seq = load_sequence(&input, args.fps)?;
    let params = viewpoint_params(args.tau, args.min_region_frac, &args.fov, args.top_k)?;
    let fovs = select_fovs_for_sequence(&seq, &params)?;

    let report = json!({
        "frames": seq.len(),
        "grid": {"width": seq.grid().width(), "height": seq.grid().height()},
        "fovs": fovs.iter().map(fov_json).collect::<Vec<_>>(),
    });
    util::write_json(&out, &report)?;

    let mut sidecar = util::Sidecar::new(
        "cond regions",
        json!({
            "fps": args.fps, "tau": args.tau,
            "min_region_frac": args.min_region_frac,
            "fov": args.fov, "top_k": args.top_k,
        }),
    );
    sidecar.record_input(&input)?;
    sidecar.record_output(&out.display().to_string());
    sidecar.write(&out)
}

/// Resolve the FoV center: explicit "lat,lon" degrees or the top-mass region
/// centroid of the temporally averaged saliency.
fn resolve_center(
    center: &str,
    seq: &SaliencySequence,
    params: &ViewpointParams,
) -> Result<LatLon> {
    if center.trim() == "auto" {
        let fovs = select_fovs_for_sequence(seq, params)?;
        let fov = fovs.first().ok_or_else(|| {
            Error::InvalidInput("no salient region found; pass --center lat,lon".into())
        })?;
        return Ok(fov.center);
    }
    let (lat, lon) = center
        .split_once(',')
        .ok_or_else(|| Error::Parameter(format!("--center must be auto or lat,lon, got {center:?}")))?;
    let lat: f64 = lat
        .trim()
        .parse()
        .map_err(|_| Error::Parameter(format!("bad latitude {lat:?}")))?;
    let lon: f64 = lon
        .trim()
        .parse()
        .map_err(|_| Error::Parameter(format!("bad longitude {lon:?}")))?;
    LatLon::new(lat.to_radians(), lon.to_radians())
}

fn basd(args: BasdArgs, run_id: Option<&str>) -> Result<()> {
    let input = util::resolve_input(&args.input);
    let out = util::resolve_output(&args.out, run_id);
    let seq = load_sequence(&input, args.fps)?;
    let params = viewpoint_params(args.tau, args.min_region_frac, &args.fov, 1)?;
    let center = resolve_center(&args.center, &seq, &params)?;
    let fov = FovSpec::new(center, params.fov_w, params.fov_h, 0.0)?;
    let grid = seq.grid();
    let map = basd_for_fov(&fov, grid)?;

    let (h, w) = map.values().dim();
    util::write_f32_npy(&out, vec![h, w], map.values().iter().copied().collect())?;

    let mut sidecar = util::Sidecar::new(
        "cond basd",
        json!({
            "fps": args.fps, "tau": args.tau,
            "min_region_frac": args.min_region_frac,
            "fov": args.fov, "center": args.center,
            "resolved_center": {
                "lat_deg": center.lat().to_degrees(),
                "lon_deg": center.lon().to_degrees(),
            },
        }),
    );
    sidecar.record_input(&input)?;
    sidecar.record_output(&out.display().to_string());

    if let Some(pgm_path) = &args.pgm {
        let pgm_path = util::resolve_output(pgm_path, run_id);
        let (img, packing) = con360::io::pgm::pack_signed_to_pgm16(&map.values().view())?;
        con360::io::pgm::write_pgm16(&img, &pgm_path)?;
        let mut packing_path = pgm_path.file_name().unwrap_or_default().to_os_string();
        packing_path.push(".packing.json");
        util::write_json(&pgm_path.with_file_name(packing_path), &packing)?;
        sidecar.record_output(&pgm_path.display().to_string());
    }
    sidecar.write(&out)
}

fn stack(args: StackArgs, run_id: Option<&str>) -> Result<()> {
    let saliency_path = util::resolve_input(&args.saliency);
    let basd_path = util::resolve_input(&args.basd);
    let out = util::resolve_output(&args.out, run_id);

    let raw_frames = util::load_frames(&saliency_path)?;
    let frames = raw_frames
        .iter()
        .map(|f| SaliencyFrame::new(normalize_minmax_raw(&f.view())))
        .collect::<Result<Vec<_>>>()?;
    let seq = SaliencySequence::new(frames, args.fps)?;

    let basd_frames = util::load_frames(&basd_path)?;
    let t = seq.len();
    let normalized: Vec<Array2<f32>> = match basd_frames.len() {
        1 => {
            let n = normalize_minmax_raw(&basd_frames[0].view());
            vec![n; t]
        }
        n if n == t => basd_frames
            .iter()
            .map(|f| normalize_minmax_raw(&f.view()))
            .collect(),
        n => {
            return Err(Error::ShapeMismatch(format!(
                "saliency has {t} frames, basd has {n}"
            )))
        }
    };

    let stack = stack_maps(&seq, &normalized)?;
    let dims = stack.tensor().dim();
    util::write_f32_npy(
        &out,
        vec![dims.0, dims.1, dims.2, dims.3],
        stack.tensor().iter().copied().collect(),
    )?;

    let mut sidecar = util::Sidecar::new("cond stack", json!({"fps": args.fps}));
    sidecar.record_input(&saliency_path)?;
    sidecar.record_input(&basd_path)?;
    sidecar.record_output(&out.display().to_string());
    sidecar.write(&out)
}

fn encode(args: EncodeArgs, run_id: Option<&str>) -> Result<()> {
    let stack_path = util::resolve_input(&args.stack);
    let out_dir = util::resolve_output(&args.out, run_id);
    std::fs::create_dir_all(&out_dir)?;

    let (shape, data) = util::load_f32(&stack_path)?;
    let [t, c, h, w] = shape.as_slice() else {
        return Err(Error::ShapeMismatch(format!(
            "stack must be (T, 2, H, W), got {shape:?}"
        )));
    };
    let tensor = Array4::from_shape_vec((*t, *c, *h, *w), data).unwrap();
    let stack = ConditioningStack::new(tensor, args.fps)?;

    let cfg = MapEncoderConfig::reference();
    let weights = match &args.weights {
        Some(dir) => WeightStore::load(&util::resolve_input(dir))?,
        None => WeightStore::zeros(&cfg),
    };
    let sites = map_encoder_forward(&stack, &cfg, &weights)?;

    let mut sidecar = util::Sidecar::new(
        "cond encode",
        json!({
            "fps": args.fps,
            "weights": args.weights.as_ref().map(|p| p.display().to_string()),
        }),
    );
    sidecar.record_input(&stack_path)?;
    if let Some(dir) = &args.weights {
        let dir = util::resolve_input(dir);
        sidecar.record_input(&dir.join("index.json"))?;
    }
    for (site, tensor) in &sites {
        let name = format!("{}.npy", site.name());
        let d = tensor.dim();
        util::write_f32_npy(
            &out_dir.join(&name),
            vec![d.0, d.1, d.2, d.3],
            tensor.iter().copied().collect(),
        )?;
        sidecar.record_output(&name);
    }
    sidecar.write(&out_dir)
}
