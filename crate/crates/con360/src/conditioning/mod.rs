//! Model-facing control tensors: the stacked saliency+BASD conditioning
//! tensor, a reference deterministic Map Encoder forward pass, and FiLM
//! modulation with the injection-site shape contract.
//!
//! The encoder path is: per-frame 2D conv chain with ReLU, an LSTM over the
//! frame axis at each surviving spatial location, then per injection site an
//! adaptive average pool and a 1x1 channel projection. FiLM parameters are
//! derived from the site features and applied as `(1 + gamma) * h + beta`,
//! so zero-initialized weights leave the modulated features untouched.

mod encoder;
mod weights;

pub use encoder::map_encoder_forward;
pub use weights::WeightStore;

use std::collections::BTreeMap;

use ndarray::{Array3, Array4, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::saliency::SaliencySequence;

/// Which U-Net the features are injected into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Audio,
    Video,
}

/// Where along the U-Net the injection happens: after the third and fourth
/// down-sampling blocks and, symmetrically, after the first and second
/// up-sampling blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Down3,
    Down4,
    Up1,
    Up2,
}

/// One of the eight feature-injection sites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InjectionSite {
    pub branch: Branch,
    pub stage: Stage,
}

impl InjectionSite {
    pub const ALL: [InjectionSite; 8] = {
        use Branch::*;
        use Stage::*;
        [
            InjectionSite { branch: Video, stage: Down3 },
            InjectionSite { branch: Video, stage: Down4 },
            InjectionSite { branch: Video, stage: Up1 },
            InjectionSite { branch: Video, stage: Up2 },
            InjectionSite { branch: Audio, stage: Down3 },
            InjectionSite { branch: Audio, stage: Down4 },
            InjectionSite { branch: Audio, stage: Up1 },
            InjectionSite { branch: Audio, stage: Up2 },
        ]
    };

    pub fn name(&self) -> String {
        let b = match self.branch {
            Branch::Audio => "audio",
            Branch::Video => "video",
        };
        let s = match self.stage {
            Stage::Down3 => "down3",
            Stage::Down4 => "down4",
            Stage::Up1 => "up1",
            Stage::Up2 => "up2",
        };
        format!("{b}_{s}")
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|s| s.name() == name)
    }
}

/// Time-major stack of normalized saliency (channel 0) and BASD (channel 1)
/// maps: shape (T, 2, H, W), values in [0, 1].
#[derive(Clone, Debug)]
pub struct ConditioningStack {
    tensor: Array4<f32>,
    fps: f64,
}

impl ConditioningStack {
    pub fn new(tensor: Array4<f32>, fps: f64) -> Result<Self> {
        let (_, c, _, _) = tensor.dim();
        if c != 2 {
            return Err(Error::ShapeMismatch(format!(
                "conditioning stack needs 2 channels, got {c}"
            )));
        }
        if tensor.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain(
                "conditioning stack values must lie in [0, 1]".into(),
            ));
        }
        if !(fps > 0.0) {
            return Err(Error::Parameter("fps must be positive".into()));
        }
        Ok(Self { tensor, fps })
    }

    pub fn tensor(&self) -> &Array4<f32> {
        &self.tensor
    }

    pub fn into_tensor(self) -> Array4<f32> {
        self.tensor
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn num_frames(&self) -> usize {
        self.tensor.dim().0
    }
}

/// Stack normalized saliency and BASD sequences along the channel axis.
/// Both inputs must already be min-max normalized to [0, 1] and agree on
/// (T, H, W).
pub fn stack_maps(sal: &SaliencySequence, basd: &[ndarray::Array2<f32>]) -> Result<ConditioningStack> {
    let t = sal.len();
    if basd.len() != t {
        return Err(Error::ShapeMismatch(format!(
            "saliency has {t} frames, basd has {}",
            basd.len()
        )));
    }
    let (h, w) = sal.frames()[0].values().dim();
    let mut tensor = Array4::<f32>::zeros((t, 2, h, w));
    for (i, (sf, bf)) in sal.frames().iter().zip(basd.iter()).enumerate() {
        if bf.dim() != (h, w) {
            return Err(Error::ShapeMismatch(format!(
                "basd frame {i} is {:?}, expected {:?}",
                bf.dim(),
                (h, w)
            )));
        }
        for (arr, ch) in [(sf.values(), 0usize), (bf, 1)] {
            if arr.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Domain(format!(
                    "channel {ch} of frame {i} is not normalized to [0, 1]"
                )));
            }
            tensor
                .index_axis_mut(Axis(0), i)
                .index_axis_mut(Axis(0), ch)
                .assign(arr);
        }
    }
    ConditioningStack::new(tensor, sal.fps())
}

/// One 2D convolution layer of the encoder chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Architecture of the Map Encoder and the per-site output contract.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapEncoderConfig {
    pub conv_specs: Vec<ConvSpec>,
    pub lstm_hidden: usize,
    /// Target (channels, height, width) per injection site.
    pub site_shapes: BTreeMap<String, (usize, usize, usize)>,
}

impl MapEncoderConfig {
    /// Smallest configuration exercising every component: three stride-2
    /// convs (2 -> 16 -> 32 -> 64, kernel 3), LSTM hidden 64, per-site 1x1
    /// projections.
    pub fn reference() -> Self {
        let conv_specs = vec![
            ConvSpec { in_ch: 2, out_ch: 16, kernel: 3, stride: 2 },
            ConvSpec { in_ch: 16, out_ch: 32, kernel: 3, stride: 2 },
            ConvSpec { in_ch: 32, out_ch: 64, kernel: 3, stride: 2 },
        ];
        let mut site_shapes = BTreeMap::new();
        for (site, shape) in [
            ("video_down3", (64, 8, 8)),
            ("video_down4", (128, 4, 4)),
            ("video_up1", (128, 8, 8)),
            ("video_up2", (64, 16, 16)),
            ("audio_down3", (64, 4, 16)),
            ("audio_down4", (128, 2, 8)),
            ("audio_up1", (128, 4, 16)),
            ("audio_up2", (64, 8, 32)),
        ] {
            site_shapes.insert(site.to_string(), shape);
        }
        Self {
            conv_specs,
            lstm_hidden: 64,
            site_shapes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_specs.is_empty() {
            return Err(Error::Config("empty conv chain".into()));
        }
        if self.conv_specs[0].in_ch != 2 {
            return Err(Error::Config(format!(
                "first conv must take 2 channels, takes {}",
                self.conv_specs[0].in_ch
            )));
        }
        for w in self.conv_specs.windows(2) {
            if w[0].out_ch != w[1].in_ch {
                return Err(Error::Config(format!(
                    "conv chain channel mismatch: {} -> {}",
                    w[0].out_ch, w[1].in_ch
                )));
            }
        }
        for c in &self.conv_specs {
            if c.kernel == 0 || c.stride == 0 || c.out_ch == 0 {
                return Err(Error::Config("conv spec with zero dimension".into()));
            }
        }
        if self.lstm_hidden == 0 {
            return Err(Error::Config("lstm_hidden must be positive".into()));
        }
        for site in InjectionSite::ALL {
            match self.site_shapes.get(&site.name()) {
                None => {
                    return Err(Error::Config(format!(
                        "site {} missing from site_shapes",
                        site.name()
                    )))
                }
                Some(&(c, h, w)) if c == 0 || h == 0 || w == 0 => {
                    return Err(Error::Config(format!(
                        "site {} has zero shape",
                        site.name()
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn site_shape(&self, site: InjectionSite) -> Result<(usize, usize, usize)> {
        self.site_shapes
            .get(&site.name())
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown site {}", site.name())))
    }

    /// Channel count after the conv chain (the LSTM input size).
    pub fn conv_out_channels(&self) -> usize {
        self.conv_specs.last().map(|c| c.out_ch).unwrap_or(0)
    }
}

/// Adaptive average pooling: output cell (i, j) averages the input window
/// rows [floor(i*h/oh), ceil((i+1)*h/oh)) x the analogous columns.
pub fn adaptive_avg_pool(x: &ArrayView3<f32>, out_h: usize, out_w: usize) -> Result<Array3<f32>> {
    let (c, h, w) = x.dim();
    if out_h == 0 || out_w == 0 {
        return Err(Error::Parameter("pool output dims must be >= 1".into()));
    }
    if out_h > h || out_w > w {
        return Err(Error::Parameter(format!(
            "pool output ({out_h}, {out_w}) exceeds input ({h}, {w})"
        )));
    }
    let mut out = Array3::<f32>::zeros((c, out_h, out_w));
    for i in 0..out_h {
        let r0 = i * h / out_h;
        let r1 = ((i + 1) * h).div_ceil(out_h);
        for j in 0..out_w {
            let c0 = j * w / out_w;
            let c1 = ((j + 1) * w).div_ceil(out_w);
            let count = ((r1 - r0) * (c1 - c0)) as f32;
            for ch in 0..c {
                let mut sum = 0.0f32;
                for r in r0..r1 {
                    for cc in c0..c1 {
                        sum += x[[ch, r, cc]];
                    }
                }
                out[[ch, i, j]] = sum / count;
            }
        }
    }
    Ok(out)
}

/// Per-channel FiLM coefficients for one frame at one site.
#[derive(Clone, Debug, PartialEq)]
pub struct FilmParams {
    pub site: InjectionSite,
    pub gamma_hat: Vec<f32>,
    pub beta_hat: Vec<f32>,
}

/// Derive per-frame FiLM parameters from site features: spatial mean over
/// (h, w), then a linear map to (gamma_hat, beta_hat).
///
/// `weight` is (2 * C_target, C_site); `bias` is (2 * C_target).
pub fn film_params(
    site: InjectionSite,
    site_features: &ndarray::ArrayView4<f32>,
    weight: &ArrayView2<f32>,
    bias: &[f32],
) -> Result<Vec<FilmParams>> {
    let (t, c_site, h, w) = site_features.dim();
    let (rows, cols) = weight.dim();
    if cols != c_site {
        return Err(Error::ShapeMismatch(format!(
            "film weight expects {cols} input channels, site has {c_site}"
        )));
    }
    if rows % 2 != 0 || bias.len() != rows {
        return Err(Error::ShapeMismatch(format!(
            "film weight rows {rows} must be even and match bias {}",
            bias.len()
        )));
    }
    let c_target = rows / 2;
    let mut out = Vec::with_capacity(t);
    let denom = (h * w) as f32;
    for ti in 0..t {
        let mut pooled = vec![0.0f32; c_site];
        for ci in 0..c_site {
            let mut sum = 0.0f32;
            for r in 0..h {
                for cc in 0..w {
                    sum += site_features[[ti, ci, r, cc]];
                }
            }
            pooled[ci] = sum / denom;
        }
        let mut gamma = vec![0.0f32; c_target];
        let mut beta = vec![0.0f32; c_target];
        for r in 0..rows {
            let mut acc = bias[r];
            for ci in 0..c_site {
                acc += weight[[r, ci]] * pooled[ci];
            }
            if r < c_target {
                gamma[r] = acc;
            } else {
                beta[r - c_target] = acc;
            }
        }
        out.push(FilmParams {
            site,
            gamma_hat: gamma,
            beta_hat: beta,
        });
    }
    Ok(out)
}

/// Average per-frame FiLM parameters into a single time-pooled set.
pub fn film_params_time_pooled(per_frame: &[FilmParams]) -> Result<FilmParams> {
    let first = per_frame
        .first()
        .ok_or_else(|| Error::InvalidInput("no film params to pool".into()))?;
    let c = first.gamma_hat.len();
    let mut gamma = vec![0.0f32; c];
    let mut beta = vec![0.0f32; c];
    for p in per_frame {
        if p.gamma_hat.len() != c {
            return Err(Error::ShapeMismatch("film params disagree on channels".into()));
        }
        for i in 0..c {
            gamma[i] += p.gamma_hat[i];
            beta[i] += p.beta_hat[i];
        }
    }
    let n = per_frame.len() as f32;
    for i in 0..c {
        gamma[i] /= n;
        beta[i] /= n;
    }
    Ok(FilmParams {
        site: first.site,
        gamma_hat: gamma,
        beta_hat: beta,
    })
}

/// Apply FiLM modulation: `out[c] = (1 + gamma_hat[c]) * h[c] + beta_hat[c]`.
pub fn film_apply(features: &ArrayView3<f32>, params: &FilmParams) -> Result<Array3<f32>> {
    let (c, _, _) = features.dim();
    if params.gamma_hat.len() != c || params.beta_hat.len() != c {
        return Err(Error::ShapeMismatch(format!(
            "film params have {} channels, features have {c}",
            params.gamma_hat.len()
        )));
    }
    let mut out = features.to_owned();
    for ch in 0..c {
        let g = 1.0 + params.gamma_hat[ch];
        let b = params.beta_hat[ch];
        out.index_axis_mut(Axis(0), ch).mapv_inplace(|v| g * v + b);
    }
    Ok(out)
}
