//! Spherical and planar coordinate math shared by the whole pipeline.
//!
//! Conventions (fixed, used everywhere):
//! - Right-handed frame, +x = front, +y = left, +z = up.
//! - Longitude in [-pi, pi), image left edge at lon = -pi; latitude in
//!   [-pi/2, pi/2], image top row at +pi/2.
//! - Pixel-center sampling: pixel (u, v) covers [u, u+1) x [v, v+1) and its
//!   center sits at continuous coordinate (u + 0.5 in formula space, i.e.
//!   continuous coordinate u at the center after the -0.5 shift below).
//! - Bilinear interpolation wraps horizontally and clamps vertically.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Matrix3, Vector3};
use ndarray::{Array2, Array3, ArrayView2, ArrayView3};

use crate::error::{Error, Result};

/// A point on the sphere in latitude/longitude radians.
///
/// `lat` lies in [-pi/2, pi/2]; `lon` is normalized into [-pi, pi).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatLon {
    lat: f64,
    lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(Error::InvalidInput("non-finite lat/lon".into()));
        }
        if !(-FRAC_PI_2..=FRAC_PI_2).contains(&lat) {
            return Err(Error::InvalidInput(format!(
                "latitude {lat} outside [-pi/2, pi/2]"
            )));
        }
        Ok(Self {
            lat,
            lon: wrap_lon(lon),
        })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Normalize a longitude into [-pi, pi).
pub fn wrap_lon(lon: f64) -> f64 {
    let mut l = (lon + PI).rem_euclid(TAU) - PI;
    // rem_euclid can return exactly TAU for inputs just below -pi due to
    // round-off; fold the closed end back.
    if l >= PI {
        l -= TAU;
    }
    l
}

/// A unit direction vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Direction {
    v: Vector3<f64>,
}

impl Direction {
    /// Build from components, normalizing. Zero-norm input is rejected.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let v = Vector3::new(x, y, z);
        let n = v.norm();
        if !n.is_finite() || n < 1e-15 {
            return Err(Error::InvalidInput("zero-norm direction".into()));
        }
        Ok(Self { v: v / n })
    }

    pub fn x(&self) -> f64 {
        self.v.x
    }
    pub fn y(&self) -> f64 {
        self.v.y
    }
    pub fn z(&self) -> f64 {
        self.v.z
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        self.v
    }

    pub(crate) fn from_unit(v: Vector3<f64>) -> Self {
        Self { v }
    }
}

/// Dimensions of an equirectangular grid. Width is always twice the height.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ErpGrid {
    width: usize,
    height: usize,
}

impl ErpGrid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 || width != 2 * height {
            return Err(Error::Aspect { width, height });
        }
        Ok(Self { width, height })
    }

    /// Grid matching an image's dimensions (rows x cols).
    pub fn of_image(img: &ArrayView2<f32>) -> Result<Self> {
        let (h, w) = img.dim();
        Self::new(w, h)
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
}

/// One face of the cubemap. Each face is a 90-degree gnomonic view with
/// roll 0, oriented per the frame convention above.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CubeFace {
    Front,
    Back,
    Left,
    Right,
    Top,
    Bottom,
}

impl CubeFace {
    pub const ALL: [CubeFace; 6] = [
        CubeFace::Front,
        CubeFace::Back,
        CubeFace::Left,
        CubeFace::Right,
        CubeFace::Top,
        CubeFace::Bottom,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CubeFace::Front => "front",
            CubeFace::Back => "back",
            CubeFace::Left => "left",
            CubeFace::Right => "right",
            CubeFace::Top => "top",
            CubeFace::Bottom => "bottom",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|f| f.name() == s)
    }

    /// View center of the face.
    pub fn center(&self) -> LatLon {
        let (lat, lon) = match self {
            CubeFace::Front => (0.0, 0.0),
            CubeFace::Back => (0.0, -PI),
            CubeFace::Left => (0.0, FRAC_PI_2),
            CubeFace::Right => (0.0, -FRAC_PI_2),
            CubeFace::Top => (FRAC_PI_2, 0.0),
            CubeFace::Bottom => (-FRAC_PI_2, 0.0),
        };
        LatLon { lat, lon }
    }

    pub fn fov(&self) -> FovSpec {
        FovSpec::new(self.center(), FRAC_PI_2, FRAC_PI_2, 0.0).expect("valid face fov")
    }
}

/// A target viewpoint: spherical center, horizontal/vertical field of view,
/// roll about the view axis. `hfov = 2*pi` together with `vfov = pi` denotes
/// the full sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FovSpec {
    pub center: LatLon,
    pub hfov: f64,
    pub vfov: f64,
    pub roll: f64,
}

impl FovSpec {
    pub fn new(center: LatLon, hfov: f64, vfov: f64, roll: f64) -> Result<Self> {
        if !(hfov > 0.0 && hfov <= TAU) {
            return Err(Error::Parameter(format!("hfov {hfov} outside (0, 2pi]")));
        }
        if !(vfov > 0.0 && vfov <= PI) {
            return Err(Error::Parameter(format!("vfov {vfov} outside (0, pi]")));
        }
        if !roll.is_finite() {
            return Err(Error::Parameter("non-finite roll".into()));
        }
        Ok(Self {
            center,
            hfov,
            vfov,
            roll,
        })
    }

    pub fn full_sphere() -> Self {
        Self {
            center: LatLon { lat: 0.0, lon: 0.0 },
            hfov: TAU,
            vfov: PI,
            roll: 0.0,
        }
    }

    pub fn is_full_sphere(&self) -> bool {
        self.hfov >= TAU && self.vfov >= PI
    }

    /// Rotation taking view-local coordinates (x' forward, y' left, z' up)
    /// to world coordinates.
    pub fn world_from_local(&self) -> Matrix3<f64> {
        yaw(self.center.lon) * pitch_up(self.center.lat) * roll_about_forward(self.roll)
    }
}

fn yaw(lon: f64) -> Matrix3<f64> {
    let (s, c) = lon.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Tilts the forward axis up by `lat`: (1,0,0) -> (cos lat, 0, sin lat).
fn pitch_up(lat: f64) -> Matrix3<f64> {
    let (s, c) = lat.sin_cos();
    Matrix3::new(c, 0.0, -s, 0.0, 1.0, 0.0, s, 0.0, c)
}

fn roll_about_forward(roll: f64) -> Matrix3<f64> {
    let (s, c) = roll.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Latitude/longitude of an ERP pixel center.
pub fn erp_pixel_to_latlon(u: usize, v: usize, grid: ErpGrid) -> Result<LatLon> {
    if u >= grid.width || v >= grid.height {
        return Err(Error::OutOfBounds {
            u,
            v,
            width: grid.width,
            height: grid.height,
        });
    }
    let lon = ((u as f64 + 0.5) / grid.width as f64 - 0.5) * TAU;
    let lat = (0.5 - (v as f64 + 0.5) / grid.height as f64) * PI;
    Ok(LatLon {
        lat,
        lon: wrap_lon(lon),
    })
}

/// Continuous ERP coordinates of a point; exact inverse of
/// [`erp_pixel_to_latlon`] at pixel centers. The top edge maps to v = -0.5
/// (pole rows sit half a pixel inside the frame).
pub fn latlon_to_erp_pixel(p: LatLon, grid: ErpGrid) -> (f64, f64) {
    let u = (p.lon / TAU + 0.5) * grid.width as f64 - 0.5;
    let v = (0.5 - p.lat / PI) * grid.height as f64 - 0.5;
    (u, v)
}

/// Unit direction of a lat/lon point.
pub fn latlon_to_direction(p: LatLon) -> Direction {
    let (slat, clat) = p.lat.sin_cos();
    let (slon, clon) = p.lon.sin_cos();
    Direction::from_unit(Vector3::new(clat * clon, clat * slon, slat))
}

/// Lat/lon of a unit direction. At the poles (|z| = 1) the longitude is 0.
pub fn direction_to_latlon(d: Direction) -> LatLon {
    let v = d.v;
    let lat = v.z.clamp(-1.0, 1.0).asin();
    let lon = if v.x == 0.0 && v.y == 0.0 {
        0.0
    } else {
        wrap_lon(v.y.atan2(v.x))
    };
    LatLon { lat, lon }
}

/// Angular frustum coordinates of a direction in a FoV's local frame:
/// `alpha` horizontal (positive to the right), `beta` vertical (positive up).
/// For directions in front of the camera these are atan of the gnomonic
/// plane coordinates.
pub fn fov_frustum_coords(d: Direction, fov: &FovSpec) -> (f64, f64) {
    let local = fov.world_from_local().transpose() * d.v;
    let alpha = (-local.y).atan2(local.x);
    let beta = local.z.atan2(local.x);
    (alpha, beta)
}

/// Whether a direction falls inside the FoV frustum (boundary inclusive).
pub fn is_inside_fov(d: Direction, fov: &FovSpec) -> bool {
    if fov.is_full_sphere() {
        return true;
    }
    let (alpha, beta) = fov_frustum_coords(d, fov);
    alpha.abs() <= fov.hfov / 2.0 && beta.abs() <= fov.vfov / 2.0
}

/// Bilinear sample at continuous ERP coordinates, wrapping horizontally and
/// clamping vertically. Integer coordinates hit pixel centers.
pub fn bilinear_sample_wrap(img: &ArrayView2<f32>, u: f64, v: f64) -> f32 {
    let (h, w) = img.dim();
    let wf = w as f64;
    let mut uw = u.rem_euclid(wf);
    if uw >= wf {
        // rem_euclid can round up to exactly wf for tiny negative inputs
        uw = 0.0;
    }
    let u0 = uw.floor();
    let fu = (uw - u0) as f32;
    let i0 = u0 as usize % w;
    let i1 = (i0 + 1) % w;

    let vc = v.clamp(0.0, (h - 1) as f64);
    let j0 = vc.floor() as usize;
    let j1 = (j0 + 1).min(h - 1);
    let fv = (vc - j0 as f64) as f32;

    let a = img[[j0, i0]] * (1.0 - fu) + img[[j0, i1]] * fu;
    let b = img[[j1, i0]] * (1.0 - fu) + img[[j1, i1]] * fu;
    a * (1.0 - fv) + b * fv
}

/// Render a gnomonic (perspective) viewport of an ERP frame.
///
/// Requires `hfov, vfov < pi`; wider frustums have no single tangent plane.
pub fn extract_viewport(
    frame: &ArrayView2<f32>,
    fov: &FovSpec,
    out_w: usize,
    out_h: usize,
) -> Result<Array2<f32>> {
    let grid = ErpGrid::of_image(frame)?;
    if fov.hfov >= PI || fov.vfov >= PI {
        return Err(Error::ProjectionDomain(format!(
            "gnomonic projection needs hfov, vfov < pi (got {}, {})",
            fov.hfov, fov.vfov
        )));
    }
    if out_w == 0 || out_h == 0 {
        return Err(Error::Parameter("zero output dimensions".into()));
    }
    let rot = fov.world_from_local();
    let half_w = (fov.hfov / 2.0).tan();
    let half_h = (fov.vfov / 2.0).tan();
    let mut out = Array2::zeros((out_h, out_w));
    for j in 0..out_h {
        let b = half_h * (1.0 - 2.0 * (j as f64 + 0.5) / out_h as f64);
        for i in 0..out_w {
            let a = half_w * (2.0 * (i as f64 + 0.5) / out_w as f64 - 1.0);
            let local = Vector3::new(1.0, -a, b);
            let world = rot * local;
            let p = direction_to_latlon(Direction::from_unit(world.normalize()));
            let (uu, vv) = latlon_to_erp_pixel(p, grid);
            out[[j, i]] = bilinear_sample_wrap(frame, uu, vv);
        }
    }
    Ok(out)
}

/// Project an ERP frame onto the six cube faces, in [`CubeFace::ALL`] order.
pub fn erp_to_cubemap(frame: &ArrayView2<f32>, face_size: usize) -> Result<[Array2<f32>; 6]> {
    ErpGrid::of_image(frame)?;
    if face_size == 0 {
        return Err(Error::Parameter("face_size must be >= 1".into()));
    }
    let mut faces: Vec<Array2<f32>> = Vec::with_capacity(6);
    for face in CubeFace::ALL {
        faces.push(extract_viewport(frame, &face.fov(), face_size, face_size)?);
    }
    Ok(faces.try_into().expect("six faces"))
}

/// Multi-channel variant of [`erp_to_cubemap`]; input is (C, H, W).
pub fn erp_to_cubemap_multi(
    frame: &ArrayView3<f32>,
    face_size: usize,
) -> Result<[Array3<f32>; 6]> {
    let (c, h, w) = frame.dim();
    ErpGrid::new(w, h)?;
    let mut out: Vec<Array3<f32>> = (0..6)
        .map(|_| Array3::zeros((c, face_size, face_size)))
        .collect();
    for ch in 0..c {
        let plane = frame.index_axis(ndarray::Axis(0), ch);
        let faces = erp_to_cubemap(&plane, face_size)?;
        for (fi, face) in faces.into_iter().enumerate() {
            out[fi].index_axis_mut(ndarray::Axis(0), ch).assign(&face);
        }
    }
    Ok(out.try_into().map_err(|_| ()).expect("six faces"))
}

/// FoV frustum boundary projected onto the ERP frame as continuous (u, v)
/// points, with the indices of segments that cross the lon = +-pi seam.
#[derive(Clone, Debug)]
pub struct BoundaryPolyline {
    /// Continuous ERP coordinates, ordered around the frustum boundary.
    pub points: Vec<(f64, f64)>,
    /// The corresponding directions, same order.
    pub directions: Vec<Direction>,
    /// Indices `i` such that the segment from point `i` to `i + 1` (cyclic)
    /// crosses the seam.
    pub seam_crossings: Vec<usize>,
}

impl BoundaryPolyline {
    pub fn crosses_seam(&self) -> bool {
        !self.seam_crossings.is_empty()
    }
}

/// Sample the four frustum edges uniformly in the viewport plane and project
/// each sample onto the ERP frame.
pub fn project_fov_boundary(
    fov: &FovSpec,
    grid: ErpGrid,
    samples_per_edge: usize,
) -> Result<BoundaryPolyline> {
    if fov.is_full_sphere() {
        return Err(Error::NoBoundary);
    }
    if samples_per_edge < 2 {
        return Err(Error::Parameter("samples_per_edge must be >= 2".into()));
    }
    if fov.hfov >= PI || fov.vfov >= PI {
        return Err(Error::ProjectionDomain(
            "frustum boundary needs hfov, vfov < pi".into(),
        ));
    }
    let rot = fov.world_from_local();
    let half_w = (fov.hfov / 2.0).tan();
    let half_h = (fov.vfov / 2.0).tan();

    // Local direction for frustum-edge parameters (a_t, b_t) in [-1, 1],
    // where +-1 on an axis is the edge of that axis. Uniform in the viewport
    // plane.
    let edge_dir = |a_t: f64, b_t: f64| -> Vector3<f64> {
        Vector3::new(1.0, -half_w * a_t, half_h * b_t).normalize()
    };

    let n = samples_per_edge;
    let mut dirs: Vec<Direction> = Vec::with_capacity(4 * (n - 1));
    let step = 2.0 / (n - 1) as f64;
    // Walk the boundary counterclockwise, dropping each edge's final sample
    // (it is the next edge's first).
    for k in 0..n - 1 {
        let t = -1.0 + step * k as f64;
        dirs.push(Direction::from_unit((rot * edge_dir(t, 1.0)).normalize()));
    }
    for k in 0..n - 1 {
        let t = 1.0 - step * k as f64;
        dirs.push(Direction::from_unit((rot * edge_dir(1.0, t)).normalize()));
    }
    for k in 0..n - 1 {
        let t = 1.0 - step * k as f64;
        dirs.push(Direction::from_unit((rot * edge_dir(t, -1.0)).normalize()));
    }
    for k in 0..n - 1 {
        let t = -1.0 + step * k as f64;
        dirs.push(Direction::from_unit((rot * edge_dir(-1.0, t)).normalize()));
    }

    let points: Vec<(f64, f64)> = dirs
        .iter()
        .map(|d| latlon_to_erp_pixel(direction_to_latlon(*d), grid))
        .collect();
    let half_w = grid.width as f64 / 2.0;
    let seam_crossings = (0..points.len())
        .filter(|&i| {
            let (u0, _) = points[i];
            let (u1, _) = points[(i + 1) % points.len()];
            (u1 - u0).abs() > half_w
        })
        .collect();
    Ok(BoundaryPolyline {
        points,
        directions: dirs,
        seam_crossings,
    })
}
