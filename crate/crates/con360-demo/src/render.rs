//! RGBA rendering for the demo views. Pure functions over the library's
//! pipeline, unit-tested on the host.

use con360::basd::basd_for_fov;
use con360::error::{Error, Result};
use con360::geometry::{
    extract_viewport, latlon_to_erp_pixel, project_fov_boundary, ErpGrid, FovSpec, LatLon,
};
use con360::saliency::{select_fovs_for_sequence, SaliencyFrame, SaliencySequence, ViewpointParams};
use ndarray::Array2;

use crate::scene;

type Rgba = (usize, usize, Vec<u8>);

fn gray_to_rgba(img: &Array2<f32>) -> Rgba {
    let (h, w) = img.dim();
    let mut out = Vec::with_capacity(h * w * 4);
    for v in img.iter() {
        let b = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        out.extend_from_slice(&[b, b, b, 255]);
    }
    (w, h, out)
}

/// Blue-white-red diverging map over [-1, 1].
fn diverging(v: f32) -> [u8; 4] {
    let v = v.clamp(-1.0, 1.0);
    let (r, g, b) = if v < 0.0 {
        let t = 1.0 + v; // 0 at -1, 1 at 0
        (64.0 + 191.0 * t, 96.0 + 159.0 * t, 255.0)
    } else {
        let t = 1.0 - v;
        (255.0, 96.0 + 159.0 * t, 64.0 + 191.0 * t)
    };
    [r as u8, g as u8, b as u8, 255]
}

fn parse_fov(lat_deg: f64, lon_deg: f64, hfov_deg: f64, vfov_deg: f64) -> Result<FovSpec> {
    FovSpec::new(
        LatLon::new(lat_deg.to_radians(), lon_deg.to_radians())?,
        hfov_deg.to_radians(),
        vfov_deg.to_radians(),
        0.0,
    )
}

fn check_height(height: usize) -> Result<()> {
    if !(16..=1024).contains(&height) {
        return Err(Error::Parameter(format!(
            "height {height} outside [16, 1024]"
        )));
    }
    Ok(())
}

/// The synthetic panorama as a grayscale RGBA image.
pub fn render_scene(height: usize) -> Result<Rgba> {
    check_height(height)?;
    Ok(gray_to_rgba(&scene::panorama(height)))
}

/// Gnomonic viewport into the synthetic panorama.
pub fn render_viewport(
    lat_deg: f64,
    lon_deg: f64,
    hfov_deg: f64,
    vfov_deg: f64,
    out_size: usize,
) -> Result<Rgba> {
    check_height(out_size)?;
    let fov = parse_fov(lat_deg, lon_deg, hfov_deg, vfov_deg)?;
    let pano = scene::panorama(256);
    let view = extract_viewport(&pano.view(), &fov, out_size, out_size)?;
    Ok(gray_to_rgba(&view))
}

/// BASD heatmap: signed distance on a diverging colormap, FoV boundary in
/// near-white where the sign flips.
pub fn render_basd_heatmap(
    lat_deg: f64,
    lon_deg: f64,
    hfov_deg: f64,
    vfov_deg: f64,
    height: usize,
) -> Result<Rgba> {
    check_height(height)?;
    let fov = parse_fov(lat_deg, lon_deg, hfov_deg, vfov_deg)?;
    let grid = ErpGrid::new(2 * height, height)?;
    let map = basd_for_fov(&fov, grid)?;
    let peak = map
        .values()
        .iter()
        .fold(0.0f32, |a, &v| a.max(v.abs()))
        .max(1.0);
    let (h, w) = map.values().dim();
    let mut out = Vec::with_capacity(h * w * 4);
    for &v in map.values().iter() {
        out.extend_from_slice(&diverging(v / peak));
    }
    Ok((w, h, out))
}

fn draw_boundary(rgba: &mut [u8], w: usize, h: usize, fov: &FovSpec, color: [u8; 4]) -> Result<()> {
    let grid = ErpGrid::new(w, h)?;
    let boundary = project_fov_boundary(fov, grid, 4 * h.max(32))?;
    for p in &boundary.directions {
        let ll = con360::geometry::direction_to_latlon(*p);
        let (u, v) = latlon_to_erp_pixel(ll, grid);
        let c = (u.round().rem_euclid(w as f64)) as usize % w;
        let r = (v.round().clamp(0.0, (h - 1) as f64)) as usize;
        let at = (r * w + c) * 4;
        rgba[at..at + 4].copy_from_slice(&color);
    }
    Ok(())
}

/// Saliency map with the viewpoint derived at threshold `tau` drawn on top.
pub fn render_saliency_overlay(tau: f32, height: usize) -> Result<Rgba> {
    check_height(height)?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Parameter(format!("tau {tau} outside [0, 1]")));
    }
    let sal = scene::saliency(height);
    let frame = SaliencyFrame::new(sal.clone())?;
    let seq = SaliencySequence::new(vec![frame], 1.0)?;
    let params = ViewpointParams {
        tau,
        ..ViewpointParams::default()
    };
    let fovs = select_fovs_for_sequence(&seq, &params)?;

    let (w, h, mut rgba) = gray_to_rgba(&con360::saliency::normalize_minmax_raw(&sal.view()));
    if let Some(fov) = fovs.first() {
        draw_boundary(&mut rgba, w, h, fov, [255, 80, 40, 255])?;
        // mark the centroid
        let grid = ErpGrid::new(w, h)?;
        let (u, v) = latlon_to_erp_pixel(fov.center, grid);
        let (cu, cv) = (u.round() as isize, v.round() as isize);
        for (du, dv) in [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)] {
            let r = (cv + dv).clamp(0, h as isize - 1) as usize;
            let c = (cu + du).rem_euclid(w as isize) as usize;
            let at = (r * w + c) * 4;
            rgba[at..at + 4].copy_from_slice(&[40, 255, 120, 255]);
        }
    }
    Ok((w, h, rgba))
}
