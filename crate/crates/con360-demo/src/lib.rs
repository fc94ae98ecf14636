//! Browser demo: three interactive views over the con360 pipeline, rendered
//! to RGBA byte buffers. All rendering is plain Rust so the same functions
//! run (and are tested) on the host; `wasm-bindgen` only provides the
//! JavaScript boundary.

mod render;
mod scene;

use wasm_bindgen::prelude::wasm_bindgen;

pub use render::{render_basd_heatmap, render_saliency_overlay, render_scene, render_viewport};

/// RGBA frame handed to JavaScript: flat bytes plus dimensions.
#[wasm_bindgen]
pub struct Frame {
    width: usize,
    height: usize,
    rgba: Vec<u8>,
}

#[wasm_bindgen]
impl Frame {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }
}

fn frame(result: Result<(usize, usize, Vec<u8>), con360::Error>) -> Result<Frame, String> {
    result
        .map(|(width, height, rgba)| Frame {
            width,
            height,
            rgba,
        })
        .map_err(|e| e.to_string())
}

/// The synthetic ERP panorama used by every view.
#[wasm_bindgen]
pub fn scene_frame(height: usize) -> Result<Frame, String> {
    frame(render_scene(height))
}

/// Gnomonic viewport into the panorama. Angles in degrees.
#[wasm_bindgen]
pub fn viewport_frame(
    lat_deg: f64,
    lon_deg: f64,
    hfov_deg: f64,
    vfov_deg: f64,
    out_size: usize,
) -> Result<Frame, String> {
    frame(render_viewport(lat_deg, lon_deg, hfov_deg, vfov_deg, out_size))
}

/// Signed boundary-distance heatmap for a field of view. Angles in degrees.
#[wasm_bindgen]
pub fn basd_frame(
    lat_deg: f64,
    lon_deg: f64,
    hfov_deg: f64,
    vfov_deg: f64,
    height: usize,
) -> Result<Frame, String> {
    frame(render_basd_heatmap(lat_deg, lon_deg, hfov_deg, vfov_deg, height))
}

/// Saliency-driven viewpoint selection at threshold `tau`, with the derived
/// FoV boundary drawn over the saliency map.
#[wasm_bindgen]
pub fn saliency_frame(tau: f32, height: usize) -> Result<Frame, String> {
    frame(render_saliency_overlay(tau, height))
}
