#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::image::DepthImage;

/// Simulated depth-sensor degradation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthNoise {
    /// Gaussian noise standard deviation, meters.
    pub sigma: f64,
    /// Noise multiplier for pixels near depth discontinuities.
    pub edge_gain: f64,
    /// Fraction of valid pixels turned into holes.
    pub dropout: f64,
    /// Share of holes placed near discontinuities (capped by how many such
    /// pixels exist).
    pub edge_share: f64,
    /// Depth jump between 4-neighbors that marks a discontinuity, meters.
    pub edge_step: f64,
    /// Chebyshev radius around discontinuities counted as "near".
    pub edge_radius: usize,
}

impl Default for DepthNoise {
    fn default() -> Self {
        Self {
            sigma: 0.002,
            edge_gain: 3.0,
            dropout: 0.05,
            edge_share: 0.75,
            edge_step: 0.005,
            edge_radius: 2,
        }
    }
}

/// Pixels within `radius` (Chebyshev) of a depth jump larger than `step`.
pub fn near_edge_mask(depth: &DepthImage, step: f64, radius: usize) -> Vec<bool> {
    let (w, h) = (depth.width, depth.height);
    let mut edge = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let d = depth.get(x, y);
            let mut jump = |nx: usize, ny: usize| {
                let n = depth.get(nx, ny);
                if d > 0.0 && n > 0.0 && (d as f64 - n as f64).abs() > step {
                    edge[y * w + x] = true;
                    edge[ny * w + nx] = true;
                }
            };
            if x + 1 < w {
                jump(x + 1, y);
            }
            if y + 1 < h {
                jump(x, y + 1);
            }
        }
    }
    let mut near = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if !edge[y * w + x] {
                continue;
            }
            for ny in y.saturating_sub(radius)..=(y + radius).min(h - 1) {
                for nx in x.saturating_sub(radius)..=(x + radius).min(w - 1) {
                    near[ny * w + nx] = true;
                }
            }
        }
    }
    near
}

/// Add Gaussian noise (amplified near discontinuities) and punch holes,
/// preferentially near discontinuities. Deterministic in `seed`.
pub fn corrupt_depth(depth: &DepthImage, seed: u64, noise: &DepthNoise) -> DepthImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let near = near_edge_mask(depth, noise.edge_step, noise.edge_radius);
    let mut out = depth.clone();
    if noise.sigma > 0.0 {
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        for (i, d) in out.data.iter_mut().enumerate() {
            if *d > 0.0 {
                let gain = if near[i] { noise.edge_gain } else { 1.0 };
                let v = *d as f64 + noise.sigma * gain * unit.sample(&mut rng);
                *d = v.clamp(super::render::MIN_RANGE, super::render::MAX_RANGE) as f32;
            }
        }
    }
    if noise.dropout > 0.0 {
        let valid: Vec<usize> = (0..depth.data.len()).filter(|&i| depth.data[i] > 0.0).collect();
        let total = (noise.dropout * valid.len() as f64).round() as usize;
        let (mut edge_px, mut flat_px): (Vec<usize>, Vec<usize>) = valid.into_iter().partition(|&i| near[i]);
        let n_edge = ((noise.edge_share * total as f64).round() as usize).min(edge_px.len());
        let n_flat = (total - n_edge).min(flat_px.len());
        let (edge_holes, _) = edge_px.partial_shuffle(&mut rng, n_edge);
        for &i in edge_holes.iter() {
            out.data[i] = 0.0;
        }
        let (flat_holes, _) = flat_px.partial_shuffle(&mut rng, n_flat);
        for &i in flat_holes.iter() {
            out.data[i] = 0.0;
        }
    }
    out
}
