//! Procedural ERP test content: a panorama with enough structure to make
//! projections legible, and a two-blob saliency field.

use ndarray::Array2;

/// Synthetic panorama luminance in [0, 1] on a 2:1 grid: smooth sky/ground
/// gradient, meridian/parallel grid lines, and a few bright landmarks.
pub fn panorama(height: usize) -> Array2<f32> {
    let width = 2 * height;
    Array2::from_shape_fn((height, width), |(r, c)| {
        let lat = 0.5 - (r as f32 + 0.5) / height as f32; // +0.5 top
        let lon = (c as f32 + 0.5) / width as f32; // 0..1 around

        // sky brighter than ground
        let mut v = 0.55 + 0.3 * (lat * std::f32::consts::PI).sin();

        // graticule every 30 degrees
        let lon_deg = lon * 360.0;
        let lat_deg = lat * 180.0;
        if (lon_deg / 30.0).fract().abs() < 0.02 || (lat_deg / 30.0).round() != 0.0
            && ((lat_deg / 30.0) - (lat_deg / 30.0).round()).abs() < 0.015
        {
            v -= 0.25;
        }

        // landmarks: bright blobs at fixed directions
        for (blat, blon, s) in [(0.05f32, 0.25f32, 600.0f32), (-0.1, 0.7, 900.0), (0.2, 0.55, 700.0)] {
            let dr = (lat - blat) * height as f32;
            let mut dc = (lon - blon).abs();
            dc = dc.min(1.0 - dc);
            let dc = dc * width as f32;
            v += 0.5 * (-(dr * dr + dc * dc) / s).exp();
        }
        v.clamp(0.0, 1.0)
    })
}

/// Two-blob saliency field on the same grid, min-max normalizable.
pub fn saliency(height: usize) -> Array2<f32> {
    let width = 2 * height;
    Array2::from_shape_fn((height, width), |(r, c)| {
        let g = |cr: f32, cc: f32, amp: f32, s: f32| {
            let dr = r as f32 - cr;
            let mut dc = (c as f32 - cc).abs();
            dc = dc.min(width as f32 - dc);
            amp * (-(dr * dr + dc * dc) / s).exp()
        };
        let h = height as f32;
        let w = width as f32;
        g(0.45 * h, 0.3 * w, 1.0, 0.02 * (h * w)) + g(0.3 * h, 0.8 * w, 0.45, 0.012 * (h * w))
    })
}
