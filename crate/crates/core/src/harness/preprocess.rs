//! Hole filling and edge-preserving smoothing of raw depth.

#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::image::DepthImage;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BilateralConfig {
    /// Spatial standard deviation, pixels.
    pub sigma_space: f64,
    /// Range standard deviation, meters.
    pub sigma_range: f64,
    /// Window half-width, pixels.
    pub radius: usize,
}

impl Default for BilateralConfig {
    fn default() -> Self {
        Self { sigma_space: 5.0, sigma_range: 0.01, radius: 10 }
    }
}

/// Replace every hole with the value of its nearest valid pixel in
/// 4-connected steps; ties go to the neighbor reached first in row-major
/// order.
pub fn fill_holes(depth: &DepthImage) -> Result<DepthImage> {
    let (w, h) = (depth.width, depth.height);
    let mut out = depth.clone();
    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::new();
    for (i, &d) in depth.data.iter().enumerate() {
        if d > 0.0 {
            seen[i] = true;
            queue.push_back(i);
        }
    }
    if queue.is_empty() {
        return Err(Error::EmptyDepth);
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let neighbors = [
            (y > 0).then(|| i - w),
            (x > 0).then(|| i - 1),
            (x + 1 < w).then(|| i + 1),
            (y + 1 < h).then(|| i + w),
        ];
        for j in neighbors.into_iter().flatten() {
            if !seen[j] {
                seen[j] = true;
                out.data[j] = out.data[i];
                queue.push_back(j);
            }
        }
    }
    Ok(out)
}

/// Tabulated `exp(-t)` for `t = diff^2 / (2 sigma^2)`, linearly interpolated
/// and zero past the table end.
struct RangeKernel {
    scale: f64,
    table: Vec<f64>,
}

impl RangeKernel {
    const STEPS_PER_UNIT: f64 = 256.0;
    const CUTOFF: f64 = 20.0;

    fn new(sigma: f64) -> Self {
        let n = (Self::CUTOFF * Self::STEPS_PER_UNIT) as usize + 2;
        let table = (0..n).map(|i| (-(i as f64) / Self::STEPS_PER_UNIT).exp()).collect();
        Self { scale: Self::STEPS_PER_UNIT / (2.0 * sigma * sigma), table }
    }

    fn weight(&self, diff: f64) -> f64 {
        let pos = diff * diff * self.scale;
        if pos >= Self::CUTOFF * Self::STEPS_PER_UNIT {
            return 0.0;
        }
        let i = pos as usize;
        let frac = pos - i as f64;
        self.table[i] + (self.table[i + 1] - self.table[i]) * frac
    }
}

/// Bilateral filter of a hole-free image.
pub fn bilateral(depth: &DepthImage, cfg: &BilateralConfig) -> DepthImage {
    let (w, h, r) = (depth.width, depth.height, cfg.radius as isize);
    let side = 2 * cfg.radius + 1;
    let spatial: Vec<f64> = (0..side * side)
        .map(|k| {
            let (dy, dx) = ((k / side) as f64 - r as f64, (k % side) as f64 - r as f64);
            (-(dx * dx + dy * dy) / (2.0 * cfg.sigma_space * cfg.sigma_space)).exp()
        })
        .collect();
    let range = RangeKernel::new(cfg.sigma_range);
    let mut out = depth.clone();
    for y in 0..h {
        for x in 0..w {
            let center = depth.get(x, y) as f64;
            let (mut acc, mut norm) = (0.0, 0.0);
            let (y0, y1) = ((y as isize - r).max(0) as usize, (y as isize + r).min(h as isize - 1) as usize);
            let (x0, x1) = ((x as isize - r).max(0) as usize, (x as isize + r).min(w as isize - 1) as usize);
            for ny in y0..=y1 {
                let row = &depth.data[ny * w..][..w];
                let krow = (ny + cfg.radius - y) * side + cfg.radius;
                for nx in x0..=x1 {
                    let v = row[nx] as f64;
                    let diff = v - center;
                    let weight = spatial[krow + nx - x] * range.weight(diff);
                    acc += weight * v;
                    norm += weight;
                }
            }
            out.set(x, y, (acc / norm) as f32);
        }
    }
    out
}

/// Fill holes, then smooth with the bilateral filter.
pub fn preprocess_depth(depth: &DepthImage) -> Result<DepthImage> {
    preprocess_depth_with(depth, &BilateralConfig::default())
}

pub fn preprocess_depth_with(depth: &DepthImage, cfg: &BilateralConfig) -> Result<DepthImage> {
    Ok(bilateral(&fill_holes(depth)?, cfg))
}
