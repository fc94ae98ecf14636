//! Post-processing of externally produced 360-degree saliency maps:
//! normalization, thresholding, wrap-aware connected components, spherical
//! centroids, and derivation of candidate viewpoints.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::geometry::{
    erp_pixel_to_latlon, latlon_to_direction, ErpGrid, FovSpec, LatLon,
};

/// A nonnegative heatmap over an ERP grid.
#[derive(Clone, Debug)]
pub struct SaliencyFrame {
    grid: ErpGrid,
    values: Array2<f32>,
}

impl SaliencyFrame {
    pub fn new(values: Array2<f32>) -> Result<Self> {
        let grid = ErpGrid::of_image(&values.view())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("saliency contains NaN/inf".into()));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput("saliency contains negatives".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> ErpGrid {
        self.grid
    }

    pub fn values(&self) -> &Array2<f32> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f32> {
        self.values
    }
}

/// An ordered sequence of saliency frames sharing one grid.
#[derive(Clone, Debug)]
pub struct SaliencySequence {
    frames: Vec<SaliencyFrame>,
    fps: f64,
}

impl SaliencySequence {
    pub fn new(frames: Vec<SaliencyFrame>, fps: f64) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidInput("empty saliency sequence".into()));
        }
        let grid = frames[0].grid;
        if frames.iter().any(|f| f.grid != grid) {
            return Err(Error::ShapeMismatch(
                "saliency frames disagree on grid size".into(),
            ));
        }
        if !(fps > 0.0) {
            return Err(Error::Parameter("fps must be positive".into()));
        }
        Ok(Self { frames, fps })
    }

    pub fn frames(&self) -> &[SaliencyFrame] {
        &self.frames
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn grid(&self) -> ErpGrid {
        self.frames[0].grid
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Mean over frames; used to pick one stable viewpoint per segment.
    pub fn temporal_average(&self) -> SaliencyFrame {
        let mut acc = Array2::<f32>::zeros(self.frames[0].values.dim());
        for f in &self.frames {
            acc += &f.values;
        }
        acc /= self.frames.len() as f32;
        SaliencyFrame {
            grid: self.frames[0].grid,
            values: acc,
        }
    }
}

/// Affine rescale to [0, 1]. A constant frame maps to all zeros.
pub fn normalize_minmax(frame: &SaliencyFrame) -> SaliencyFrame {
    let values = normalize_minmax_raw(&frame.values.view());
    SaliencyFrame {
        grid: frame.grid,
        values,
    }
}

/// [`normalize_minmax`] on a bare array; also used for BASD maps.
pub fn normalize_minmax_raw(values: &ArrayView2<f32>) -> Array2<f32> {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in values.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = hi - lo;
    if span <= 0.0 {
        return Array2::zeros(values.dim());
    }
    values.mapv(|v| ((v - lo) / span).clamp(0.0, 1.0))
}

/// Binary mask of pixels at or above `tau`. Input must be normalized.
pub fn threshold(frame: &SaliencyFrame, tau: f32) -> Result<Array2<bool>> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Parameter(format!("tau {tau} outside [0, 1]")));
    }
    if frame.values.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Domain(
            "threshold input must be normalized to [0, 1]".into(),
        ));
    }
    Ok(frame.values.mapv(|v| v >= tau))
}

/// Dense label map over a binary mask, 8-connectivity with columns 0 and
/// W-1 adjacent. Background is 0; labels start at 1 in raster order of each
/// region's first pixel.
#[derive(Clone, Debug)]
pub struct LabelMap {
    pub labels: Array2<u32>,
    pub count: usize,
}

pub fn connected_components_wrapped(mask: &ArrayView2<bool>) -> LabelMap {
    let (h, w) = mask.dim();
    let idx = |r: usize, c: usize| r * w + c;

    // union-find over flattened pixel indices
    let mut parent: Vec<u32> = (0..(h * w) as u32).collect();
    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }
    let union = |parent: &mut Vec<u32>, a: u32, b: u32| {
        let ra = find(parent, a);
        let rb = find(parent, b);
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent[hi as usize] = lo;
        }
    };

    for r in 0..h {
        for c in 0..w {
            if !mask[[r, c]] {
                continue;
            }
            let me = idx(r, c) as u32;
            let left = (c + w - 1) % w;
            if mask[[r, left]] {
                union(&mut parent, me, idx(r, left) as u32);
            }
            if r > 0 {
                let right = (c + 1) % w;
                for nc in [left, c, right] {
                    if mask[[r - 1, nc]] {
                        union(&mut parent, me, idx(r - 1, nc) as u32);
                    }
                }
            }
        }
    }

    let mut labels = Array2::<u32>::zeros((h, w));
    let mut next = 1u32;
    let mut root_label: std::collections::HashMap<u32, u32> = std::collections::HashMap::new();
    for r in 0..h {
        for c in 0..w {
            if !mask[[r, c]] {
                continue;
            }
            let root = find(&mut parent, idx(r, c) as u32);
            let label = *root_label.entry(root).or_insert_with(|| {
                let l = next;
                next += 1;
                l
            });
            labels[[r, c]] = label;
        }
    }
    LabelMap {
        labels,
        count: (next - 1) as usize,
    }
}

/// Bounding box in ERP pixel columns/rows. When `wrapped` is set the region
/// crosses the seam and `u_min > u_max` is permitted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ErpBBox {
    pub u_min: usize,
    pub v_min: usize,
    pub u_max: usize,
    pub v_max: usize,
    pub wrapped: bool,
}

/// A labeled salient region with its spherical centroid.
#[derive(Clone, Debug)]
pub struct SalientRegion {
    pub label: u32,
    pub pixel_count: usize,
    pub mass: f64,
    pub centroid: LatLon,
    pub erp_bbox: ErpBBox,
}

/// Saliency-weighted mean direction of a labeled region, as lat/lon.
pub fn region_centroid_spherical(
    labels: &LabelMap,
    frame: &SaliencyFrame,
    label: u32,
) -> Result<LatLon> {
    let (h, w) = labels.labels.dim();
    let grid = frame.grid;
    if (h, w) != frame.values.dim() {
        return Err(Error::ShapeMismatch("labels vs frame dims".into()));
    }
    let mut acc = nalgebra::Vector3::<f64>::zeros();
    let mut mass = 0.0f64;
    for v in 0..h {
        for u in 0..w {
            if labels.labels[[v, u]] == label {
                let wgt = frame.values[[v, u]] as f64;
                if wgt > 0.0 {
                    let d = latlon_to_direction(erp_pixel_to_latlon(u, v, grid)?);
                    acc += wgt * d.as_vector();
                    mass += wgt;
                }
            }
        }
    }
    if mass <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "region {label} empty or has zero mass"
        )));
    }
    let norm = acc.norm();
    if norm < 1e-9 {
        return Err(Error::DegenerateCentroid { norm });
    }
    Ok(crate::geometry::direction_to_latlon(
        crate::geometry::Direction::new(acc.x, acc.y, acc.z)?,
    ))
}

fn region_bbox(labels: &Array2<u32>, label: u32) -> ErpBBox {
    let (h, w) = labels.dim();
    let mut col_used = vec![false; w];
    let mut v_min = h;
    let mut v_max = 0;
    for v in 0..h {
        for u in 0..w {
            if labels[[v, u]] == label {
                col_used[u] = true;
                v_min = v_min.min(v);
                v_max = v_max.max(v);
            }
        }
    }
    // widest circular run of unused columns determines the horizontal extent
    let mut best_gap = 0usize;
    let mut best_end = 0usize; // last unused column of the best gap
    let mut run = 0usize;
    for i in 0..2 * w {
        if !col_used[i % w] {
            run += 1;
            if run > best_gap {
                best_gap = run.min(w);
                best_end = i % w;
            }
        } else {
            run = 0;
        }
    }
    if best_gap == 0 {
        return ErpBBox {
            u_min: 0,
            v_min,
            u_max: w - 1,
            v_max,
            wrapped: false,
        };
    }
    let u_min = (best_end + 1) % w;
    let u_max = (best_end + w - best_gap) % w;
    ErpBBox {
        u_min,
        v_min,
        u_max,
        v_max,
        wrapped: u_min > u_max,
    }
}

/// Build [`SalientRegion`] records for every label, dropping regions smaller
/// than `min_pixels` and regions with degenerate centroids.
pub fn extract_regions(
    labels: &LabelMap,
    frame: &SaliencyFrame,
    min_pixels: usize,
) -> Result<Vec<SalientRegion>> {
    let mut counts = vec![0usize; labels.count + 1];
    let mut masses = vec![0f64; labels.count + 1];
    for (l, s) in labels.labels.iter().zip(frame.values.iter()) {
        counts[*l as usize] += 1;
        masses[*l as usize] += *s as f64;
    }
    let mut out = Vec::new();
    for label in 1..=labels.count as u32 {
        let count = counts[label as usize];
        if count < min_pixels.max(1) || masses[label as usize] <= 0.0 {
            continue;
        }
        match region_centroid_spherical(labels, frame, label) {
            Ok(centroid) => out.push(SalientRegion {
                label,
                pixel_count: count,
                mass: masses[label as usize],
                centroid,
                erp_bbox: region_bbox(&labels.labels, label),
            }),
            Err(Error::DegenerateCentroid { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Turn the `top_k` regions by mass (ties to the smaller label) into target
/// viewpoints of the given angular size, roll 0.
pub fn regions_to_fovs(
    regions: &[SalientRegion],
    fov_w: f64,
    fov_h: f64,
    top_k: usize,
) -> Result<Vec<FovSpec>> {
    if top_k == 0 {
        return Err(Error::Parameter("top_k must be >= 1".into()));
    }
    let mut order: Vec<&SalientRegion> = regions.iter().collect();
    order.sort_by(|a, b| {
        b.mass
            .partial_cmp(&a.mass)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.label.cmp(&b.label))
    });
    order
        .into_iter()
        .take(top_k)
        .map(|r| FovSpec::new(r.centroid, fov_w, fov_h, 0.0))
        .collect()
}

/// Great-circle angle between two points, radians.
pub fn great_circle_angle(a: LatLon, b: LatLon) -> f64 {
    let da = latlon_to_direction(a);
    let db = latlon_to_direction(b);
    da.as_vector().dot(&db.as_vector()).clamp(-1.0, 1.0).acos()
}

/// Parameters for deriving viewpoints from a saliency sequence.
#[derive(Clone, Copy, Debug)]
pub struct ViewpointParams {
    /// Threshold applied after min-max normalization.
    pub tau: f32,
    /// Minimum region size as a fraction of total pixels.
    pub min_region_frac: f64,
    pub fov_w: f64,
    pub fov_h: f64,
    pub top_k: usize,
}

impl Default for ViewpointParams {
    fn default() -> Self {
        Self {
            tau: 0.5,
            min_region_frac: 1e-4,
            fov_w: std::f64::consts::FRAC_PI_2,
            fov_h: std::f64::consts::FRAC_PI_2,
            top_k: 1,
        }
    }
}

fn frame_regions(frame: &SaliencyFrame, params: &ViewpointParams) -> Result<Vec<SalientRegion>> {
    let norm = normalize_minmax(frame);
    let mask = threshold(&norm, params.tau)?;
    let labels = connected_components_wrapped(&mask.view());
    let min_pixels =
        ((params.min_region_frac * mask.len() as f64).ceil() as usize).max(1);
    extract_regions(&labels, &norm, min_pixels)
}

/// One stable set of viewpoints for a whole segment, derived from the
/// temporal average map.
pub fn select_fovs_for_sequence(
    seq: &SaliencySequence,
    params: &ViewpointParams,
) -> Result<Vec<FovSpec>> {
    let avg = seq.temporal_average();
    let regions = frame_regions(&avg, params)?;
    regions_to_fovs(&regions, params.fov_w, params.fov_h, params.top_k)
}

/// Per-frame viewpoints, one list per frame.
pub fn select_fovs_per_frame(
    seq: &SaliencySequence,
    params: &ViewpointParams,
) -> Result<Vec<Vec<FovSpec>>> {
    seq.frames()
        .iter()
        .map(|f| {
            let regions = frame_regions(f, params)?;
            regions_to_fovs(&regions, params.fov_w, params.fov_h, params.top_k)
        })
        .collect()
}

/// Associate regions across consecutive frames by nearest centroid within an
/// angular gate. Returns one track id per region per frame.
pub fn track_regions(
    per_frame: &[Vec<SalientRegion>],
    gate: f64,
) -> Vec<Vec<Option<usize>>> {
    let mut next_track = 0usize;
    let mut prev: Vec<(usize, LatLon)> = Vec::new(); // (track, centroid)
    let mut out = Vec::with_capacity(per_frame.len());
    for regions in per_frame {
        let mut assigned: Vec<Option<usize>> = vec![None; regions.len()];
        let mut taken = vec![false; prev.len()];
        // greedy by region mass, largest first
        let mut order: Vec<usize> = (0..regions.len()).collect();
        order.sort_by(|&a, &b| {
            regions[b]
                .mass
                .partial_cmp(&regions[a].mass)
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for ri in order {
            let mut best: Option<(usize, f64)> = None;
            for (pi, (_, c)) in prev.iter().enumerate() {
                if taken[pi] {
                    continue;
                }
                let ang = great_circle_angle(regions[ri].centroid, *c);
                if ang <= gate && best.map_or(true, |(_, ba)| ang < ba) {
                    best = Some((pi, ang));
                }
            }
            let track = match best {
                Some((pi, _)) => {
                    taken[pi] = true;
                    prev[pi].0
                }
                None => {
                    let t = next_track;
                    next_track += 1;
                    t
                }
            };
            assigned[ri] = Some(track);
        }
        prev = regions
            .iter()
            .zip(assigned.iter())
            .map(|(r, t)| (t.unwrap(), r.centroid))
            .collect();
        out.push(assigned);
    }
    out
}
