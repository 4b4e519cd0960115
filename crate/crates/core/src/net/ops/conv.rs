//! 2-D convolution through im2col and gemm.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::net::tensor::{matmul, Mat, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub co: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn new(x: &[usize], weight: &[usize], stride: usize, pad: usize) -> Result<Self> {
        if x.len() != 4 || weight.len() != 4 {
            return Err(Error::Shape(format!("conv expects NCHW input and OIHW weight, got {x:?} / {weight:?}")));
        }
        let (n, c, h, w) = (x[0], x[1], x[2], x[3]);
        let (co, ci, kh, kw) = (weight[0], weight[1], weight[2], weight[3]);
        if ci != c {
            return Err(Error::Shape(format!("conv input has {c} channels, weight expects {ci}")));
        }
        if stride == 0 || h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(Error::Shape(format!("kernel {kh}x{kw} does not fit input {h}x{w} with pad {pad}")));
        }
        Ok(Self {
            n,
            c,
            h,
            w,
            co,
            kh,
            kw,
            stride,
            pad,
            oh: (h + 2 * pad - kh) / stride + 1,
            ow: (w + 2 * pad - kw) / stride + 1,
        })
    }

    fn k(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.oh * self.ow
    }

    pub fn out_shape(&self) -> [usize; 4] {
        [self.n, self.co, self.oh, self.ow]
    }
}

/// Output columns `[lo, hi)` whose input coordinate along one axis is in
/// bounds for kernel offset `k`.
fn valid_range(k: usize, len: usize, out: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    let hi = if len + pad > k { ((len + pad - k - 1) / stride + 1).min(out) } else { 0 };
    (lo.min(hi), hi)
}

/// Call `f(column_start, input_start, len)` for every in-bounds run of one
/// output row; consecutive outputs step the input by `stride`.
fn for_each_patch_row(g: &ConvGeom, mut f: impl FnMut(usize, usize, usize)) {
    let (np, hw) = (g.n * g.p(), g.h * g.w);
    for c in 0..g.c {
        for ky in 0..g.kh {
            let (oy_lo, oy_hi) = valid_range(ky, g.h, g.oh, g.stride, g.pad);
            for kx in 0..g.kw {
                let (ox_lo, ox_hi) = valid_range(kx, g.w, g.ow, g.stride, g.pad);
                if ox_lo >= ox_hi {
                    continue;
                }
                let row = (c * g.kh + ky) * g.kw + kx;
                let ix0 = ox_lo * g.stride + kx - g.pad;
                for n in 0..g.n {
                    let plane = (n * g.c + c) * hw;
                    for oy in oy_lo..oy_hi {
                        let iy = oy * g.stride + ky - g.pad;
                        let col = row * np + n * g.p() + oy * g.ow;
                        f(col + ox_lo, plane + iy * g.w + ix0, ox_hi - ox_lo);
                    }
                }
            }
        }
    }
}

/// Columns `[C*kh*kw, N*OH*OW]`.
fn im2col<T: Scalar>(x: &[T], g: &ConvGeom) -> Vec<T> {
    if g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0 && g.n == 1 {
        return x.to_vec();
    }
    let mut cols = vec![T::zero(); g.k() * g.n * g.p()];
    for_each_patch_row(g, |dst, src, len| {
        let out = &mut cols[dst..dst + len];
        if g.stride == 1 {
            out.copy_from_slice(&x[src..src + len]);
        } else {
            for (o, v) in out.iter_mut().zip(x[src..].iter().step_by(g.stride)) {
                *o = *v;
            }
        }
    });
    cols
}

fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    for_each_patch_row(g, |src, dst, len| {
        let from = &cols[src..src + len];
        if g.stride == 1 {
            for (o, v) in dx[dst..dst + len].iter_mut().zip(from) {
                *o += *v;
            }
        } else {
            for (o, v) in dx[dst..].iter_mut().step_by(g.stride).zip(from) {
                *o += *v;
            }
        }
    });
}

/// `[Co, N*P]` <-> `[N, Co, P]`.
fn to_batch_major<T: Scalar>(m: &[T], g: &ConvGeom) -> Vec<T> {
    if g.n == 1 {
        return m.to_vec();
    }
    let (p, np) = (g.p(), g.n * g.p());
    let mut out = vec![T::zero(); m.len()];
    for co in 0..g.co {
        for n in 0..g.n {
            out[(n * g.co + co) * p..][..p].copy_from_slice(&m[co * np + n * p..][..p]);
        }
    }
    out
}

fn to_channel_major<T: Scalar>(t: &[T], g: &ConvGeom) -> Vec<T> {
    if g.n == 1 {
        return t.to_vec();
    }
    let (p, np) = (g.p(), g.n * g.p());
    let mut out = vec![T::zero(); t.len()];
    for co in 0..g.co {
        for n in 0..g.n {
            out[co * np + n * p..][..p].copy_from_slice(&t[(n * g.co + co) * p..][..p]);
        }
    }
    out
}

pub(crate) fn conv_forward<T: Scalar>(x: &[T], weight: &[T], bias: Option<&[T]>, g: &ConvGeom) -> Vec<T> {
    let cols = im2col(x, g);
    let np = g.n * g.p();
    let mut m = vec![T::zero(); g.co * np];
    matmul(Mat::new(weight, g.co, g.k()), Mat::new(&cols, g.k(), np), T::zero(), &mut m);
    if let Some(b) = bias {
        for (co, row) in m.chunks_mut(np).enumerate() {
            row.iter_mut().for_each(|v| *v += b[co]);
        }
    }
    to_batch_major(&m, g)
}

pub(crate) struct ConvGrads<T> {
    pub dx: Option<Vec<T>>,
    pub dweight: Vec<T>,
    pub dbias: Vec<T>,
}

pub(crate) fn conv_backward<T: Scalar>(x: &[T], weight: &[T], dout: &[T], g: &ConvGeom, need_dx: bool) -> ConvGrads<T> {
    let cols = im2col(x, g);
    let np = g.n * g.p();
    let dm = to_channel_major(dout, g);
    let mut dweight = vec![T::zero(); g.co * g.k()];
    matmul(Mat::new(&dm, g.co, np), Mat::new(&cols, g.k(), np).t(), T::zero(), &mut dweight);
    let dbias = dm.chunks(np).map(|row| row.iter().copied().sum()).collect();
    let dx = need_dx.then(|| {
        let mut dcols = vec![T::zero(); g.k() * np];
        matmul(Mat::new(weight, g.co, g.k()).t(), Mat::new(&dm, g.co, np), T::zero(), &mut dcols);
        let mut dx = vec![T::zero(); x.len()];
        col2im(&dcols, g, &mut dx);
        dx
    });
    ConvGrads { dx, dweight, dbias }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct seven-loop convolution.
    fn naive(x: &[f64], w: &[f64], b: &[f64], g: &ConvGeom) -> Vec<f64> {
        let mut out = vec![0.0; g.n * g.co * g.oh * g.ow];
        for n in 0..g.n {
            for co in 0..g.co {
                for oy in 0..g.oh {
                    for ox in 0..g.ow {
                        let mut acc = b[co];
                        for c in 0..g.c {
                            for ky in 0..g.kh {
                                for kx in 0..g.kw {
                                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                    let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                    if iy < 0 || ix < 0 || iy >= g.h as isize || ix >= g.w as isize {
                                        continue;
                                    }
                                    acc += x[((n * g.c + c) * g.h + iy as usize) * g.w + ix as usize]
                                        * w[((co * g.c + c) * g.kh + ky) * g.kw + kx];
                                }
                            }
                        }
                        out[((n * g.co + co) * g.oh + oy) * g.ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_naive() {
        let mut seed = 1u64;
        let mut rnd = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for &(n, c, h, w, co, k, s, p) in &[
            (1, 3, 9, 11, 4, 3, 1, 1),
            (2, 2, 8, 8, 3, 3, 2, 1),
            (3, 4, 7, 7, 5, 3, 2, 0),
            (1, 3, 16, 12, 2, 4, 4, 0),
        ] {
            let g = ConvGeom::new(&[n, c, h, w], &[co, c, k, k], s, p).unwrap();
            let x: Vec<f64> = (0..n * c * h * w).map(|_| rnd()).collect();
            let wt: Vec<f64> = (0..co * c * k * k).map(|_| rnd()).collect();
            let b: Vec<f64> = (0..co).map(|_| rnd()).collect();
            let got = conv_forward(&x, &wt, Some(&b), &g);
            let want = naive(&x, &wt, &b, &g);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_errors() {
        assert!(ConvGeom::new(&[1, 3, 4, 4], &[2, 2, 3, 3], 1, 0).is_err());
        assert!(ConvGeom::new(&[1, 3, 2, 2], &[2, 3, 3, 3], 1, 0).is_err());
    }
}
