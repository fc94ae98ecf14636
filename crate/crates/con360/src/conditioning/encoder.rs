//! Reference Map Encoder forward pass. Pure given the weights; frame- and
//! location-parallel stages never change results bitwise because every
//! output element is accumulated independently in a fixed order.

use std::collections::BTreeMap;

use ndarray::{Array3, Array4, ArrayView2, ArrayView3, ArrayView4, Axis};
use rayon::prelude::*;

use super::{adaptive_avg_pool, ConditioningStack, InjectionSite, MapEncoderConfig, WeightStore};
use crate::error::{Error, Result};

/// 2D convolution with zero padding `kernel / 2` and the given stride.
pub(crate) fn conv2d(
    x: &ArrayView3<f32>,
    weight: &ArrayView4<f32>,
    bias: &[f32],
    stride: usize,
) -> Array3<f32> {
    let (in_ch, h, w) = x.dim();
    let (out_ch, win_ch, k, _) = weight.dim();
    debug_assert_eq!(in_ch, win_ch);
    let pad = k / 2;
    let out_h = (h + 2 * pad - k) / stride + 1;
    let out_w = (w + 2 * pad - k) / stride + 1;
    let mut out = Array3::<f32>::zeros((out_ch, out_h, out_w));
    for oc in 0..out_ch {
        for oy in 0..out_h {
            let y0 = (oy * stride) as isize - pad as isize;
            for ox in 0..out_w {
                let x0 = (ox * stride) as isize - pad as isize;
                let mut acc = bias[oc];
                for ic in 0..in_ch {
                    for ky in 0..k {
                        let y = y0 + ky as isize;
                        if y < 0 || y >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let xx = x0 + kx as isize;
                            if xx < 0 || xx >= w as isize {
                                continue;
                            }
                            acc += weight[[oc, ic, ky, kx]] * x[[ic, y as usize, xx as usize]];
                        }
                    }
                }
                out[[oc, oy, ox]] = acc;
            }
        }
    }
    out
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Unidirectional LSTM over the frame axis, run independently at each
/// spatial location on the channel vector. Gate order i, f, g, o.
fn lstm_over_time(
    frames: &[Array3<f32>],
    w_ih: &ArrayView2<f32>,
    w_hh: &ArrayView2<f32>,
    b_ih: &[f32],
    b_hh: &[f32],
) -> Array4<f32> {
    let t_len = frames.len();
    let (c_in, h, w) = frames[0].dim();
    let hidden = w_hh.dim().1;
    let mut out = Array4::<f32>::zeros((t_len, hidden, h, w));
    let locations: Vec<(usize, usize)> = (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .collect();
    let results: Vec<Vec<Vec<f32>>> = locations
        .par_iter()
        .map(|&(r, c)| {
            let mut hs = vec![0.0f32; hidden];
            let mut cs = vec![0.0f32; hidden];
            let mut per_t = Vec::with_capacity(t_len);
            for frame in frames {
                let mut gates = vec![0.0f32; 4 * hidden];
                for g in 0..4 * hidden {
                    let mut acc = b_ih[g] + b_hh[g];
                    for ci in 0..c_in {
                        acc += w_ih[[g, ci]] * frame[[ci, r, c]];
                    }
                    for hi in 0..hidden {
                        acc += w_hh[[g, hi]] * hs[hi];
                    }
                    gates[g] = acc;
                }
                for hi in 0..hidden {
                    let i = sigmoid(gates[hi]);
                    let f = sigmoid(gates[hidden + hi]);
                    let g = gates[2 * hidden + hi].tanh();
                    let o = sigmoid(gates[3 * hidden + hi]);
                    cs[hi] = f * cs[hi] + i * g;
                    hs[hi] = o * cs[hi].tanh();
                }
                per_t.push(hs.clone());
            }
            per_t
        })
        .collect();
    for (loc, per_t) in locations.iter().zip(results.iter()) {
        let (r, c) = *loc;
        for (t, hs) in per_t.iter().enumerate() {
            for hi in 0..hidden {
                out[[t, hi, r, c]] = hs[hi];
            }
        }
    }
    out
}

/// Run the full Map Encoder: conv chain with ReLU per frame, LSTM over the
/// frame axis, then per-site adaptive average pooling and 1x1 projection.
/// Output shapes follow the config's site contract exactly.
pub fn map_encoder_forward(
    stack: &ConditioningStack,
    cfg: &MapEncoderConfig,
    weights: &WeightStore,
) -> Result<BTreeMap<InjectionSite, Array4<f32>>> {
    cfg.validate()?;
    weights.validate_against(cfg)?;
    let t_len = stack.num_frames();

    // conv chain, frame-parallel
    let frames: Vec<Array3<f32>> = (0..t_len)
        .into_par_iter()
        .map(|t| {
            let mut x = stack.tensor().index_axis(Axis(0), t).to_owned();
            for (li, spec) in cfg.conv_specs.iter().enumerate() {
                let wgt = weights.get(&format!("conv{li}.weight"))?;
                let bias = weights.get(&format!("conv{li}.bias"))?;
                let wgt4 = wgt.view().into_dimensionality::<ndarray::Ix4>().unwrap();
                let bias1: Vec<f32> = bias.iter().copied().collect();
                let mut y = conv2d(&x.view(), &wgt4, &bias1, spec.stride);
                y.mapv_inplace(|v| v.max(0.0));
                x = y;
            }
            Ok(x)
        })
        .collect::<Result<Vec<_>>>()?;

    let w_ih = weights.get("lstm.w_ih")?;
    let w_hh = weights.get("lstm.w_hh")?;
    let b_ih: Vec<f32> = weights.get("lstm.b_ih")?.iter().copied().collect();
    let b_hh: Vec<f32> = weights.get("lstm.b_hh")?.iter().copied().collect();
    let lstm_out = lstm_over_time(
        &frames,
        &w_ih.view().into_dimensionality::<ndarray::Ix2>().unwrap(),
        &w_hh.view().into_dimensionality::<ndarray::Ix2>().unwrap(),
        &b_ih,
        &b_hh,
    );

    let mut sites = BTreeMap::new();
    for site in InjectionSite::ALL {
        let (c_site, sh, sw) = cfg.site_shape(site)?;
        let proj_w = weights.get(&format!("site.{}.proj.weight", site.name()))?;
        let proj_w = proj_w.view().into_dimensionality::<ndarray::Ix2>().unwrap();
        let proj_b: Vec<f32> = weights
            .get(&format!("site.{}.proj.bias", site.name()))?
            .iter()
            .copied()
            .collect();
        let hidden = cfg.lstm_hidden;
        let (_, _, fh, fw) = lstm_out.dim();
        if sh > fh || sw > fw {
            return Err(Error::Config(format!(
                "site {} target ({sh}, {sw}) exceeds encoder feature map ({fh}, {fw})",
                site.name()
            )));
        }
        let mut out = Array4::<f32>::zeros((t_len, c_site, sh, sw));
        for t in 0..t_len {
            let pooled = adaptive_avg_pool(&lstm_out.index_axis(Axis(0), t), sh, sw)?;
            for co in 0..c_site {
                for i in 0..sh {
                    for j in 0..sw {
                        let mut acc = proj_b[co];
                        for hi in 0..hidden {
                            acc += proj_w[[co, hi]] * pooled[[hi, i, j]];
                        }
                        out[[t, co, i, j]] = acc;
                    }
                }
            }
        }
        sites.insert(site, out);
    }
    Ok(sites)
}
