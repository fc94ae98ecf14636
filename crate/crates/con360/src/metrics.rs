//! Evaluation metrics: saliency KL and its symmetric average over frames,
//! and the Fréchet distance between Gaussians fitted to embedding sets.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// A discrete probability map over an ERP grid: non-negative f64 weights
/// summing to 1 within 1e-9.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMap {
    values: Array2<f64>,
}

impl ProbMap {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::Domain(
                "probability map entries must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = values.sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "probability map sums to {sum}, not 1"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// Turn a non-negative map into a probability map by additive smoothing:
/// (v + eps) / sum(v + eps). `eps` must be positive so the result has full
/// support and KL is always finite.
pub fn to_prob_map(map: &ArrayView2<f32>, eps: f64) -> Result<ProbMap> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
    }
    if map.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::Domain(
            "saliency values must be finite and non-negative".into(),
        ));
    }
    let mut values = map.mapv(|v| v as f64 + eps);
    let sum = values.sum();
    values.mapv_inplace(|v| v / sum);
    // renormalize exactly once more to absorb round-off
    let sum = values.sum();
    values.mapv_inplace(|v| v / sum);
    ProbMap::new(values)
}

/// KL(p || q) = sum p ln(p/q), with 0 ln 0 = 0. Both maps must share a shape;
/// q must have full support wherever p does (guaranteed by [`to_prob_map`]).
pub fn kl_divergence(p: &ProbMap, q: &ProbMap) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::ShapeMismatch(format!(
            "KL shapes {:?} vs {:?}",
            p.dim(),
            q.dim()
        )));
    }
    let mut acc = 0.0f64;
    for (&pv, &qv) in p.values().iter().zip(q.values().iter()) {
        if pv > 0.0 {
            if qv <= 0.0 {
                return Err(Error::Domain(
                    "KL undefined: p has mass where q is zero".into(),
                ));
            }
            acc += pv * (pv / qv).ln();
        }
    }
    Ok(acc)
}

/// Symmetric per-frame saliency agreement:
/// mean over frames of (KL(gen || ref) + KL(ref || gen)) / 2,
/// with the generated map as the first argument.
pub fn s_kl(generated: &[ProbMap], reference: &[ProbMap]) -> Result<f64> {
    if generated.is_empty() || generated.len() != reference.len() {
        return Err(Error::ShapeMismatch(format!(
            "frame counts {} vs {}",
            generated.len(),
            reference.len()
        )));
    }
    let mut acc = 0.0f64;
    for (g, r) in generated.iter().zip(reference.iter()) {
        acc += 0.5 * (kl_divergence(g, r)? + kl_divergence(r, g)?);
    }
    Ok(acc / generated.len() as f64)
}

/// A set of embedding vectors, one row per sample.
#[derive(Clone, Debug)]
pub struct EmbeddingSet {
    pub source: String,
    data: Array2<f64>,
}

impl EmbeddingSet {
    pub fn new(source: &str, data: Array2<f64>) -> Result<Self> {
        let (n, d) = data.dim();
        if n < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: n });
        }
        if d == 0 {
            return Err(Error::InvalidInput("zero-dimensional embeddings".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("embeddings must be finite".into()));
        }
        Ok(Self {
            source: source.to_string(),
            data,
        })
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }
}

/// Sample mean and unbiased (N-1) covariance, symmetrized.
pub struct GaussianFit {
    pub mean: Array1<f64>,
    pub cov: Array2<f64>,
}

pub fn gaussian_fit(set: &EmbeddingSet) -> GaussianFit {
    let (n, d) = set.data.dim();
    let mean = set.data.mean_axis(ndarray::Axis(0)).unwrap();
    let centered = &set.data - &mean.view().insert_axis(ndarray::Axis(0));
    let mut cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    // symmetrize to kill round-off asymmetry
    for i in 0..d {
        for j in 0..i {
            let s = 0.5 * (cov[[i, j]] + cov[[j, i]]);
            cov[[i, j]] = s;
            cov[[j, i]] = s;
        }
    }
    GaussianFit { mean, cov }
}

/// Principal square root of a symmetric PSD matrix via its eigendecomposition;
/// negative eigenvalues from round-off are clamped to zero. Asymmetric input
/// is a domain error.
pub fn matrix_sqrt_psd(m: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let (r, c) = m.dim();
    if r != c {
        return Err(Error::ShapeMismatch(format!("matrix sqrt of {r}x{c}")));
    }
    let mut max_asym = 0.0f64;
    let mut max_abs = 0.0f64;
    for i in 0..r {
        for j in 0..r {
            max_asym = max_asym.max((m[[i, j]] - m[[j, i]]).abs());
            max_abs = max_abs.max(m[[i, j]].abs());
        }
    }
    if max_asym > 1e-9 * max_abs.max(1.0) {
        return Err(Error::Domain(format!(
            "matrix sqrt needs a symmetric input (asymmetry {max_asym:.3e})"
        )));
    }
    let dm = DMatrix::from_fn(r, r, |i, j| 0.5 * (m[[i, j]] + m[[j, i]]));
    let eig = dm.symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    let result = q * DMatrix::from_diagonal(&sqrt_vals) * q.transpose();
    Ok(Array2::from_shape_fn((r, r), |(i, j)| result[(i, j)]))
}

/// Fréchet distance between the Gaussian fits of two embedding sets:
/// ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa^{1/2} Sb Sa^{1/2})^{1/2}).
pub fn frechet_distance(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!(
            "embedding dims {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let ga = gaussian_fit(a);
    let gb = gaussian_fit(b);
    frechet_from_fits(&ga, &gb)
}

pub fn frechet_from_fits(ga: &GaussianFit, gb: &GaussianFit) -> Result<f64> {
    let diff = &ga.mean - &gb.mean;
    let mean_term: f64 = diff.iter().map(|v| v * v).sum();

    let sa_half = matrix_sqrt_psd(&ga.cov.view())?;
    let inner = sa_half.dot(&gb.cov).dot(&sa_half);
    // symmetrize the product before the second root; it is symmetric in
    // exact arithmetic
    let d = inner.nrows();
    let inner_sym = Array2::from_shape_fn((d, d), |(i, j)| 0.5 * (inner[[i, j]] + inner[[j, i]]));
    let cross = matrix_sqrt_psd(&inner_sym.view())?;

    let trace: f64 = (0..d)
        .map(|i| ga.cov[[i, i]] + gb.cov[[i, i]] - 2.0 * cross[[i, i]])
        .sum();
    Ok((mean_term + trace).max(0.0))
}
