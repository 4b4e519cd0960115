//! Local cross-modal attention: RGB queries attend to depth keys and values
//! in a `k x k` neighborhood, and the attended depth features are fused back
//! into the RGB stream.

#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::format;
use alloc::vec;

use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::{add_conv, Bound, Init, ParamStore};
use super::tensor::{Scalar, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcaConfig {
    /// Window size after each fused stage.
    pub kernels: [usize; 3],
    pub heads: usize,
    /// Attention width `C'` after each fused stage.
    pub embed_dims: [usize; 3],
    /// Positions are normalized to `(0, pe_scale]` before the sinusoids.
    pub pe_scale: f64,
}

impl Default for LcaConfig {
    fn default() -> Self {
        Self {
            kernels: [5, 3, 3],
            heads: 2,
            embed_dims: [8, 16, 32],
            pe_scale: core::f64::consts::TAU,
        }
    }
}

impl LcaConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.kernels.iter().find(|&&k| k % 2 == 0) {
            return Err(Error::Config(format!("attention window {k} must be odd")));
        }
        for &dim in &self.embed_dims {
            if self.heads == 0 || dim % self.heads != 0 {
                return Err(Error::Config(format!("embed dim {dim} is not divisible by {} heads", self.heads)));
            }
            if dim % 4 != 0 {
                return Err(Error::Config(format!("embed dim {dim} must be a multiple of 4")));
            }
        }
        if !(self.pe_scale > 0.0) {
            return Err(Error::Config("positional-encoding scale must be positive".into()));
        }
        Ok(())
    }
}

/// Fixed 2-D sinusoidal encoding `[dim, rows, cols]`. The first half of the
/// channels encodes the row, the second half the column.
pub fn sine_positional_encoding(rows: usize, cols: usize, dim: usize, scale: f64) -> Result<Tensor<f64>> {
    if dim == 0 || !dim.is_multiple_of(4) {
        return Err(Error::Config(format!("encoding width {dim} must be a positive multiple of 4")));
    }
    let half = dim / 2;
    let mut out = Tensor::zeros(&[dim, rows, cols]);
    for (axis, len) in [(0, rows), (1, cols)] {
        for pair in 0..half / 2 {
            let freq = 10000f64.powf(-((2 * pair) as f64) / half as f64);
            for i in 0..rows {
                for j in 0..cols {
                    let coord = if axis == 0 { i } else { j };
                    let pos = (coord + 1) as f64 / len as f64 * scale * freq;
                    let base = axis * half + 2 * pair;
                    out.data[(base * rows + i) * cols + j] = pos.sin();
                    out.data[((base + 1) * rows + i) * cols + j] = pos.cos();
                }
            }
        }
    }
    Ok(out)
}

/// Encoding replicated over a batch as a constant node.
fn encoding_node<T: Scalar>(g: &mut Graph<T>, n: usize, dim: usize, h: usize, w: usize, scale: f64) -> Result<Var> {
    let pe = sine_positional_encoding(h, w, dim, scale)?;
    let mut data = vec![T::zero(); n * pe.len()];
    for chunk in data.chunks_mut(pe.len()) {
        chunk.iter_mut().zip(&pe.data).for_each(|(d, &v)| *d = T::from_f64(v));
    }
    Ok(g.input(Tensor { shape: vec![n, dim, h, w], data }, false))
}

pub(crate) fn init_lca<T: Scalar>(p: &mut ParamStore<T>, init: &mut Init, name: &str, channels: usize, dim: usize) {
    add_conv(p, init, &format!("{name}.query"), dim, channels, 1);
    add_conv(p, init, &format!("{name}.key"), dim, channels, 1);
    add_conv(p, init, &format!("{name}.value"), dim, channels, 1);
    add_conv(p, init, &format!("{name}.out"), channels, dim, 1);
    add_conv(p, init, &format!("{name}.fuse"), channels, 2 * channels, 1);
}

fn conv1x1<T: Scalar>(g: &mut Graph<T>, p: &Bound, name: &str, x: Var) -> Result<Var> {
    let weight = p.var(&format!("{name}.weight"))?;
    let bias = p.var(&format!("{name}.bias"))?;
    g.conv2d(x, weight, Some(bias), 1, 0)
}

/// Output of one fusion block.
#[derive(Debug, Clone, Copy)]
pub struct LcaOutput {
    pub fused: Var,
    /// Attended, re-projected depth features `y`.
    pub refined: Var,
    pub attention: Var,
}

/// Fuse `x_rgb` with `x_depth` (both `[N, C, H, W]`) using the parameters
/// under `name` (`{name}.query`, `.key`, `.value`, `.out`, `.fuse`).
pub fn lca_forward<T: Scalar>(
    g: &mut Graph<T>,
    p: &Bound,
    name: &str,
    x_rgb: Var,
    x_depth: Var,
    kernel: usize,
    cfg: &LcaConfig,
) -> Result<LcaOutput> {
    if g.shape(x_rgb) != g.shape(x_depth) {
        return Err(Error::Shape(format!("RGB features {:?} vs depth features {:?}", g.shape(x_rgb), g.shape(x_depth))));
    }
    if kernel.is_multiple_of(2) {
        return Err(Error::Config(format!("attention window {kernel} must be odd")));
    }
    let (n, _, h, w) = g.value(x_rgb).dims4();
    let query = conv1x1(g, p, &format!("{name}.query"), x_rgb)?;
    let key = conv1x1(g, p, &format!("{name}.key"), x_depth)?;
    let value = conv1x1(g, p, &format!("{name}.value"), x_depth)?;
    let dim = g.shape(query)[1];
    if cfg.heads == 0 || !dim.is_multiple_of(cfg.heads) {
        return Err(Error::Config(format!("embed dim {dim} is not divisible by {} heads", cfg.heads)));
    }
    let pe = encoding_node(g, n, dim, h, w, cfg.pe_scale)?;
    let query = g.add(query, pe)?;
    let key = g.add(key, pe)?;
    let scale = T::from_f64(1.0 / ((dim / cfg.heads) as f64).sqrt());
    let attention = g.local_attention(query, key, value, kernel, cfg.heads, scale)?;
    let refined = conv1x1(g, p, &format!("{name}.out"), attention)?;
    let cat = g.concat(x_rgb, refined)?;
    let fused = conv1x1(g, p, &format!("{name}.fuse"), cat)?;
    Ok(LcaOutput { fused, refined, attention })
}

/// The fusion block with the depth path removed: `y = 0`.
pub(crate) fn rgb_only_fuse<T: Scalar>(g: &mut Graph<T>, p: &Bound, name: &str, x_rgb: Var) -> Result<Var> {
    let zeros = Tensor::zeros(g.shape(x_rgb));
    let zeros = g.input(zeros, false);
    let cat = g.concat(x_rgb, zeros)?;
    conv1x1(g, p, &format!("{name}.fuse"), cat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::gradcheck::check_gradients;
    use alloc::vec::Vec;

    /// Per-position attention straight from the definition, on NCHW data.
    fn oracle(q: &Tensor<f64>, k: &Tensor<f64>, v: &Tensor<f64>, kernel: usize, heads: usize) -> Tensor<f64> {
        let (n, c, h, w) = q.dims4();
        let at = |t: &Tensor<f64>, b: usize, ch: usize, y: usize, x: usize| t.data[((b * c + ch) * h + y) * w + x];
        let dh = c / heads;
        let r = (kernel / 2) as isize;
        let mut out = Tensor::zeros(&[n, c, h, w]);
        for b in 0..n {
            for head in 0..heads {
                for y in 0..h {
                    for x in 0..w {
                        let mut nbrs = Vec::new();
                        for dy in -r..=r {
                            for dx in -r..=r {
                                let (ny, nx) = (y as isize + dy, x as isize + dx);
                                if ny >= 0 && nx >= 0 && (ny as usize) < h && (nx as usize) < w {
                                    nbrs.push((ny as usize, nx as usize));
                                }
                            }
                        }
                        let logits: Vec<f64> = nbrs
                            .iter()
                            .map(|&(ny, nx)| {
                                (0..dh)
                                    .map(|d| at(q, b, head * dh + d, y, x) * at(k, b, head * dh + d, ny, nx))
                                    .sum::<f64>()
                                    / (dh as f64).sqrt()
                            })
                            .collect();
                        let z: f64 = logits.iter().map(|l| l.exp()).sum();
                        for d in 0..dh {
                            let ch = head * dh + d;
                            out.data[((b * c + ch) * h + y) * w + x] = nbrs
                                .iter()
                                .zip(&logits)
                                .map(|(&(ny, nx), l)| l.exp() / z * at(v, b, ch, ny, nx))
                                .sum();
                        }
                    }
                }
            }
        }
        out
    }

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        Init::new(seed).normal(shape, 1.0)
    }

    #[test]
    fn attention_matches_oracle() {
        for kernel in [1, 3, 5] {
            for heads in [1, 2] {
                let (q, k, v) = (random(&[1, 8, 6, 6], 1), random(&[1, 8, 6, 6], 2), random(&[1, 8, 6, 6], 3));
                let mut g = Graph::new();
                let (qv, kv, vv) = (g.input(q.clone(), false), g.input(k.clone(), false), g.input(v.clone(), false));
                let scale = 1.0 / ((8 / heads) as f64).sqrt();
                let out = g.local_attention(qv, kv, vv, kernel, heads, scale).unwrap();
                assert!(g.value(out).max_abs_diff(&oracle(&q, &k, &v, kernel, heads)) <= 1e-6);
                let weights = g.attention_weights(out).unwrap();
                for row in weights.chunks(kernel * kernel) {
                    assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
                }
            }
        }
    }

    fn block(channels: usize, dim: usize, seed: u64) -> ParamStore<f64> {
        let mut p = ParamStore::new();
        init_lca(&mut p, &mut Init::new(seed), "lca", channels, dim);
        p
    }

    #[test]
    fn single_cell_window_is_the_value_path() {
        let p = block(8, 4, 7);
        let cfg = LcaConfig { heads: 2, ..Default::default() };
        let xd = random(&[1, 8, 6, 6], 8);
        let run = |xr: Tensor<f64>| {
            let mut g = Graph::new();
            let b = p.bind(&mut g);
            let (r, d) = (g.input(xr, false), g.input(xd.clone(), false));
            let out = lca_forward(&mut g, &b, "lca", r, d, 1, &cfg).unwrap();
            // Value path alone: out(value(x_d)).
            let v = conv1x1(&mut g, &b, "lca.value", d).unwrap();
            let y = conv1x1(&mut g, &b, "lca.out", v).unwrap();
            (g.value(out.refined).clone(), g.value(y).clone())
        };
        let (a, direct) = run(random(&[1, 8, 6, 6], 9));
        let (b, _) = run(random(&[1, 8, 6, 6], 10));
        assert_eq!(a, direct);
        assert_eq!(a, b);
    }

    #[test]
    fn zero_depth_gives_zero_refinement() {
        let mut p = block(8, 4, 11);
        p.get_mut("lca.value.bias").unwrap().data.fill(0.0);
        p.get_mut("lca.out.bias").unwrap().data.fill(0.0);
        let xr = random(&[1, 8, 5, 7], 12);
        let mut g = Graph::new();
        let b = p.bind(&mut g);
        let (r, d) = (g.input(xr, false), g.input(Tensor::zeros(&[1, 8, 5, 7]), false));
        let out = lca_forward(&mut g, &b, "lca", r, d, 3, &LcaConfig::default()).unwrap();
        assert!(g.value(out.refined).data.iter().all(|&y| y == 0.0));
        let fused_direct = rgb_only_fuse(&mut g, &b, "lca", r).unwrap();
        assert_eq!(g.value(out.fused), g.value(fused_direct));
    }

    #[test]
    fn config_errors() {
        assert!(LcaConfig { kernels: [5, 4, 3], ..Default::default() }.validate().is_err());
        assert!(LcaConfig { heads: 3, ..Default::default() }.validate().is_err());
        assert!(sine_positional_encoding(4, 4, 6, 1.0).is_err());
        let p = block(8, 4, 1);
        let mut g = Graph::new();
        let b = p.bind(&mut g);
        let r = g.input(Tensor::zeros(&[1, 8, 4, 4]), false);
        let d = g.input(Tensor::zeros(&[1, 8, 4, 5]), false);
        assert!(lca_forward(&mut g, &b, "lca", r, d, 3, &LcaConfig::default()).is_err());
        let d = g.input(Tensor::zeros(&[1, 8, 4, 4]), false);
        assert!(lca_forward(&mut g, &b, "lca", r, d, 2, &LcaConfig::default()).is_err());
    }

    #[test]
    fn encoding_properties() {
        let pe = sine_positional_encoding(6, 6, 8, core::f64::consts::TAU).unwrap();
        assert!(pe.data.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(pe, sine_positional_encoding(6, 6, 8, core::f64::consts::TAU).unwrap());
        let vec_at = |p: usize| (0..8).map(|c| pe.data[c * 36 + p]).collect::<Vec<_>>();
        for a in 0..36 {
            for b in a + 1..36 {
                let d: f64 = vec_at(a).iter().zip(vec_at(b)).map(|(x, y)| (x - y).abs()).sum();
                assert!(d > 1e-9, "positions {a} and {b} collide");
            }
        }
    }

    #[test]
    fn lca_gradients() {
        let p = block(8, 4, 21);
        let names: Vec<alloc::string::String> = p.tensors.keys().cloned().collect();
        let mut inputs: Vec<Tensor<f64>> = p.tensors.values().cloned().collect();
        inputs.push(random(&[2, 8, 5, 6], 22));
        inputs.push(random(&[2, 8, 5, 6], 23));
        let probe = random(&[1, 8, 1, 1], 24);
        for kernel in [1, 3, 5] {
            let err = check_gradients(&inputs, 1e-5, |g, vars| {
                let b = Bound { vars: names.iter().cloned().zip(vars.iter().copied()).collect() };
                let n = vars.len();
                let out = lca_forward(g, &b, "lca", vars[n - 2], vars[n - 1], kernel, &LcaConfig::default())?;
                let w = g.input(probe.clone(), false);
                let y = g.conv2d(out.fused, w, None, 1, 0)?;
                let rows = g.to_rows(y, 1)?;
                let len = g.shape(rows)[0];
                g.smooth_l1(rows, vec![0.0; len], vec![1.0; len], len as f64)
            })
            .unwrap();
            assert!(err <= 1e-4, "kernel {kernel}: relative error {err}");
        }
    }
}
