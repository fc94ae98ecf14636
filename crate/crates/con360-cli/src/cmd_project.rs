//! `project` subcommands: cubemap export and gnomonic viewport extraction.

use std::path::PathBuf;

use clap::{Args, Subcommand};
use con360::error::Result;
use con360::geometry::{erp_to_cubemap, extract_viewport, CubeFace, FovSpec, LatLon};
use serde_json::json;

use crate::util;

#[derive(Subcommand)]
pub enum ProjectCmd {
    /// Project ERP frames onto the six cube faces.
    Cube(CubeArgs),
    /// Extract a gnomonic viewport around a viewing direction.
    Viewport(ViewportArgs),
}

#[derive(Args)]
pub struct CubeArgs {
    /// Input ERP NPY, (H, W) or (T, H, W), width = 2 * height.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Edge length of each square face.
    #[arg(long, default_value_t = 256)]
    pub face_size: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ViewportArgs {
    /// Input ERP NPY, (H, W) or (T, H, W).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Viewpoint latitude, degrees.
    #[arg(long, default_value_t = 0.0)]
    pub lat: f64,
    /// Viewpoint longitude, degrees.
    #[arg(long, default_value_t = 0.0)]
    pub lon: f64,
    /// Horizontal field of view, degrees.
    #[arg(long, default_value_t = 90.0)]
    pub hfov: f64,
    /// Vertical field of view, degrees.
    #[arg(long, default_value_t = 90.0)]
    pub vfov: f64,
    /// Camera roll, degrees.
    #[arg(long, default_value_t = 0.0)]
    pub roll: f64,
    /// Viewport size as WxH.
    #[arg(long, default_value = "256x256")]
    pub out_size: String,
    /// Output NPY path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a 16-bit PGM preview of the first frame (values clamped
    /// to [0, 1]).
    #[arg(long)]
    pub pgm: Option<PathBuf>,
}

pub fn run(cmd: ProjectCmd, run_id: Option<&str>) -> Result<()> {
    match cmd {
        ProjectCmd::Cube(args) => cube(args, run_id),
        ProjectCmd::Viewport(args) => viewport(args, run_id),
    }
}

fn cube(args: CubeArgs, run_id: Option<&str>) -> Result<()> {
    let input = util::resolve_input(&args.input);
    let out_dir = util::resolve_output(&args.out, run_id);
    std::fs::create_dir_all(&out_dir)?;
    let frames = util::load_frames(&input)?;
    let multi = frames.len() > 1;

    let mut sidecar = util::Sidecar::new(
        "project cube",
        json!({"face_size": args.face_size}),
    );
    sidecar.record_input(&input)?;

    for (t, frame) in frames.iter().enumerate() {
        let faces = erp_to_cubemap(&frame.view(), args.face_size)?;
        for (face, img) in CubeFace::ALL.iter().zip(faces.iter()) {
            let name = if multi {
                format!("face_t{t:04}_{}.npy", face.name())
            } else {
                format!("face_{}.npy", face.name())
            };
            util::write_f32_npy(
                &out_dir.join(&name),
                vec![args.face_size, args.face_size],
                img.iter().copied().collect(),
            )?;
            sidecar.record_output(&name);
        }
    }
    sidecar.write(&out_dir)
}

fn viewport(args: ViewportArgs, run_id: Option<&str>) -> Result<()> {
    let input = util::resolve_input(&args.input);
    let out = util::resolve_output(&args.out, run_id);
    let (out_w, out_h) = util::parse_size(&args.out_size)?;
    let fov = FovSpec::new(
        LatLon::new(args.lat.to_radians(), args.lon.to_radians())?,
        args.hfov.to_radians(),
        args.vfov.to_radians(),
        args.roll.to_radians(),
    )?;
    let frames = util::load_frames(&input)?;

    let mut data = Vec::with_capacity(frames.len() * out_h * out_w);
    let mut first_view = None;
    for frame in &frames {
        let view = extract_viewport(&frame.view(), &fov, out_w, out_h)?;
        data.extend(view.iter().copied());
        if first_view.is_none() {
            first_view = Some(view);
        }
    }
    let shape = if frames.len() > 1 {
        vec![frames.len(), out_h, out_w]
    } else {
        vec![out_h, out_w]
    };
    util::write_f32_npy(&out, shape, data)?;

    let mut sidecar = util::Sidecar::new(
        "project viewport",
        json!({
            "lat": args.lat, "lon": args.lon,
            "hfov": args.hfov, "vfov": args.vfov, "roll": args.roll,
            "out_size": args.out_size,
        }),
    );
    sidecar.record_input(&input)?;
    sidecar.record_output(&out.display().to_string());

    if let Some(pgm_path) = &args.pgm {
        let pgm_path = util::resolve_output(pgm_path, run_id);
        let view = first_view.expect("at least one frame");
        let samples: Vec<u16> = view
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
            .collect();
        let img = con360::io::pgm::GrayImageFile::new16(out_w, out_h, samples)?;
        con360::io::pgm::write_pgm16(&img, &pgm_path)?;
        sidecar.record_output(&pgm_path.display().to_string());
    }
    sidecar.write(&out)
}
