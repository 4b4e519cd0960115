//! RoIAlign with half-pixel aligned coordinates and bilinear sampling.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[allow(unused_imports)]
use num_traits::Float as _;

use crate::geometry::AxisBox;
use crate::net::tensor::Scalar;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiAlignConfig {
    /// Output bins per side.
    pub output: usize,
    /// Sample points per bin side.
    pub sampling: usize,
    /// Feature cells per image pixel (1 / stride).
    pub spatial_scale: f64,
}

/// One bilinear tap: four feature indices with weights.
#[derive(Debug, Clone, Copy)]
struct Tap {
    index: [usize; 4],
    weight: [f64; 4],
}

fn tap(y: f64, x: f64, h: usize, w: usize) -> Option<Tap> {
    if y < -1.0 || y > h as f64 || x < -1.0 || x > w as f64 {
        return None;
    }
    let (mut y, mut x) = (y.max(0.0), x.max(0.0));
    let (y0, y1) = if y as usize >= h - 1 {
        y = (h - 1) as f64;
        (h - 1, h - 1)
    } else {
        (y as usize, y as usize + 1)
    };
    let (x0, x1) = if x as usize >= w - 1 {
        x = (w - 1) as f64;
        (w - 1, w - 1)
    } else {
        (x as usize, x as usize + 1)
    };
    let (ly, lx) = (y - y0 as f64, x - x0 as f64);
    let (hy, hx) = (1.0 - ly, 1.0 - lx);
    Some(Tap {
        index: [y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1],
        weight: [hy * hx, hy * lx, ly * hx, ly * lx],
    })
}

impl Default for RoiAlignConfig {
    fn default() -> Self {
        Self { output: 7, sampling: 2, spatial_scale: 1.0 / 16.0 }
    }
}

/// A box in image pixels on batch image `batch`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Roi {
    pub batch: usize,
    pub rect: AxisBox,
}

/// Per-bin sample taps for each RoI, shared across channels.
fn taps(rois: &[Roi], (n, h, w): (usize, usize, usize), cfg: &RoiAlignConfig) -> Result<Vec<Vec<Tap>>> {
    let (out, s) = (cfg.output, cfg.sampling);
    let norm = 1.0 / (s * s) as f64;
    rois.iter()
        .map(|&Roi { batch, rect: roi }| {
            if batch >= n {
                return Err(Error::Shape(format!("RoI refers to image {batch} of a batch of {n}")));
            }
            if !(roi.w > 0.0 && roi.h > 0.0) || !roi.u.is_finite() || !roi.v.is_finite() {
                return Err(Error::InvalidGeometry("degenerate RoI"));
            }
            let [x1, y1, _, _] = roi.corners();
            let start_x = x1 * cfg.spatial_scale - 0.5;
            let start_y = y1 * cfg.spatial_scale - 0.5;
            let bin_w = roi.w * cfg.spatial_scale / out as f64;
            let bin_h = roi.h * cfg.spatial_scale / out as f64;
            let mut list = Vec::with_capacity(out * out * s * s);
            for by in 0..out {
                for bx in 0..out {
                    for sy in 0..s {
                        for sx in 0..s {
                            let y = start_y + (by as f64 + (sy as f64 + 0.5) / s as f64) * bin_h;
                            let x = start_x + (bx as f64 + (sx as f64 + 0.5) / s as f64) * bin_w;
                            let mut t = tap(y, x, h, w).unwrap_or(Tap { index: [0; 4], weight: [0.0; 4] });
                            t.weight.iter_mut().for_each(|wt| *wt *= norm);
                            list.push(t);
                        }
                    }
                }
            }
            Ok(list)
        })
        .collect()
}

/// `x`: `[N, C, H, W]`; returns `[M, C, out, out]`.
pub(crate) fn roi_align_forward<T: Scalar>(
    x: &[T],
    (n, c, h, w): (usize, usize, usize, usize),
    rois: &[Roi],
    cfg: &RoiAlignConfig,
) -> Result<Vec<T>> {
    let all = taps(rois, (n, h, w), cfg)?;
    let (bins, per_bin) = (cfg.output * cfg.output, cfg.sampling * cfg.sampling);
    let mut out = vec![T::zero(); rois.len() * c * bins];
    for (r, list) in all.iter().enumerate() {
        for ch in 0..c {
            let plane = &x[(rois[r].batch * c + ch) * h * w..][..h * w];
            let dst = &mut out[(r * c + ch) * bins..][..bins];
            for (bin, samples) in list.chunks(per_bin).enumerate() {
                let mut acc = 0.0;
                for t in samples {
                    for k in 0..4 {
                        acc += t.weight[k] * plane[t.index[k]].as_f64();
                    }
                }
                dst[bin] = T::from_f64(acc);
            }
        }
    }
    Ok(out)
}

pub(crate) fn roi_align_backward<T: Scalar>(
    dout: &[T],
    (n, c, h, w): (usize, usize, usize, usize),
    rois: &[Roi],
    cfg: &RoiAlignConfig,
) -> Result<Vec<T>> {
    let all = taps(rois, (n, h, w), cfg)?;
    let (bins, per_bin) = (cfg.output * cfg.output, cfg.sampling * cfg.sampling);
    let mut dx = vec![T::zero(); n * c * h * w];
    for (r, list) in all.iter().enumerate() {
        for ch in 0..c {
            let plane = &mut dx[(rois[r].batch * c + ch) * h * w..][..h * w];
            let src = &dout[(r * c + ch) * bins..][..bins];
            for (bin, samples) in list.chunks(per_bin).enumerate() {
                let g = src[bin];
                for t in samples {
                    for k in 0..4 {
                        plane[t.index[k]] += g * T::from_f64(t.weight[k]);
                    }
                }
            }
        }
    }
    Ok(dx)
}
