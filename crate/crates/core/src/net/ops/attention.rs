//! Multi-head attention restricted to a `k x k` spatial window.
//!
//! Queries come from one map and keys/values from another; neighbors outside
//! the image are left out of the softmax support.

use alloc::vec;
use alloc::vec::Vec;

use crate::net::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct AttnGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kernel: usize,
    pub heads: usize,
}

impl AttnGeom {
    pub fn window(&self) -> usize {
        self.kernel * self.kernel
    }

    fn radius(&self) -> isize {
        (self.kernel / 2) as isize
    }

    fn head_dim(&self) -> usize {
        self.c / self.heads
    }

    /// Flattened neighbor index for window slot `s` around `(i, j)`.
    #[inline]
    fn neighbor(&self, i: usize, j: usize, s: usize) -> Option<usize> {
        let r = self.radius();
        let di = (s / self.kernel) as isize - r;
        let dj = (s % self.kernel) as isize - r;
        let (y, x) = (i as isize + di, j as isize + dj);
        (y >= 0 && x >= 0 && (y as usize) < self.h && (x as usize) < self.w).then(|| y as usize * self.w + x as usize)
    }
}

/// `[C, HW]` -> `[HW, C]`.
fn position_major<T: Scalar>(x: &[T], c: usize, hw: usize) -> Vec<T> {
    let mut out = vec![T::zero(); c * hw];
    for ch in 0..c {
        for p in 0..hw {
            out[p * c + ch] = x[ch * hw + p];
        }
    }
    out
}

fn channel_major_into<T: Scalar>(x: &[T], c: usize, hw: usize, out: &mut [T]) {
    for ch in 0..c {
        for p in 0..hw {
            out[ch * hw + p] += x[p * c + ch];
        }
    }
}

/// Returns the output `[N, C, H, W]` and the attention weights
/// `[N, heads, HW, k*k]` (zero at out-of-image slots).
// Window slots index both the neighbor table and the per-slot buffers.
#[allow(clippy::needless_range_loop)]
pub(crate) fn local_attention_forward<T: Scalar>(q: &[T], k: &[T], v: &[T], g: &AttnGeom, scale: T) -> (Vec<T>, Vec<T>) {
    let (hw, c, win, dh) = (g.h * g.w, g.c, g.window(), g.head_dim());
    let mut out = vec![T::zero(); g.n * c * hw];
    let mut weights = vec![T::zero(); g.n * g.heads * hw * win];
    let mut logits = vec![T::zero(); win];
    for n in 0..g.n {
        let plane = n * c * hw..(n + 1) * c * hw;
        let (qp, kp, vp) = (
            position_major(&q[plane.clone()], c, hw),
            position_major(&k[plane.clone()], c, hw),
            position_major(&v[plane.clone()], c, hw),
        );
        let mut op = vec![T::zero(); c * hw];
        for head in 0..g.heads {
            let ch = head * dh..(head + 1) * dh;
            for i in 0..g.h {
                for j in 0..g.w {
                    let p = i * g.w + j;
                    let qv = &qp[p * c..][ch.clone()];
                    let mut max = T::neg_infinity();
                    for s in 0..win {
                        if let Some(m) = g.neighbor(i, j, s) {
                            let kv = &kp[m * c..][ch.clone()];
                            let dot: T = qv.iter().zip(kv).map(|(&a, &b)| a * b).sum();
                            logits[s] = dot * scale;
                            max = max.max(logits[s]);
                        }
                    }
                    let wrow = &mut weights[((n * g.heads + head) * hw + p) * win..][..win];
                    let mut total = T::zero();
                    for s in 0..win {
                        if g.neighbor(i, j, s).is_some() {
                            wrow[s] = (logits[s] - max).exp();
                            total += wrow[s];
                        }
                    }
                    let orow = &mut op[p * c..][ch.clone()];
                    for s in 0..win {
                        if let Some(m) = g.neighbor(i, j, s) {
                            wrow[s] = wrow[s] / total;
                            let a = wrow[s];
                            let vv = &vp[m * c..][ch.clone()];
                            orow.iter_mut().zip(vv).for_each(|(o, &x)| *o += a * x);
                        }
                    }
                }
            }
        }
        channel_major_into(&op, c, hw, &mut out[plane]);
    }
    (out, weights)
}

pub(crate) struct AttnGrads<T> {
    pub dq: Vec<T>,
    pub dk: Vec<T>,
    pub dv: Vec<T>,
}

pub(crate) fn local_attention_backward<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    weights: &[T],
    dout: &[T],
    g: &AttnGeom,
    scale: T,
) -> AttnGrads<T> {
    let (hw, c, win, dh) = (g.h * g.w, g.c, g.window(), g.head_dim());
    let mut grads = AttnGrads {
        dq: vec![T::zero(); q.len()],
        dk: vec![T::zero(); k.len()],
        dv: vec![T::zero(); v.len()],
    };
    let mut da = vec![T::zero(); win];
    for n in 0..g.n {
        let plane = n * c * hw..(n + 1) * c * hw;
        let (qp, kp, vp, dop) = (
            position_major(&q[plane.clone()], c, hw),
            position_major(&k[plane.clone()], c, hw),
            position_major(&v[plane.clone()], c, hw),
            position_major(&dout[plane.clone()], c, hw),
        );
        let (mut dqp, mut dkp, mut dvp) = (vec![T::zero(); c * hw], vec![T::zero(); c * hw], vec![T::zero(); c * hw]);
        for head in 0..g.heads {
            let ch = head * dh..(head + 1) * dh;
            for i in 0..g.h {
                for j in 0..g.w {
                    let p = i * g.w + j;
                    let wrow = &weights[((n * g.heads + head) * hw + p) * win..][..win];
                    let go = &dop[p * c..][ch.clone()];
                    let mut mean = T::zero();
                    for s in 0..win {
                        if let Some(m) = g.neighbor(i, j, s) {
                            let a = wrow[s];
                            let vv = &vp[m * c..][ch.clone()];
                            da[s] = go.iter().zip(vv).map(|(&x, &y)| x * y).sum();
                            mean += a * da[s];
                            dvp[m * c..][ch.clone()].iter_mut().zip(go).for_each(|(d, &x)| *d += a * x);
                        }
                    }
                    for s in 0..win {
                        if let Some(m) = g.neighbor(i, j, s) {
                            let dlogit = wrow[s] * (da[s] - mean) * scale;
                            let (qv, kv) = (&qp[p * c..][ch.clone()], &kp[m * c..][ch.clone()]);
                            dqp[p * c..][ch.clone()].iter_mut().zip(kv).for_each(|(d, &x)| *d += dlogit * x);
                            dkp[m * c..][ch.clone()].iter_mut().zip(qv).for_each(|(d, &x)| *d += dlogit * x);
                        }
                    }
                }
            }
        }
        channel_major_into(&dqp, c, hw, &mut grads.dq[plane.clone()]);
        channel_major_into(&dkp, c, hw, &mut grads.dk[plane.clone()]);
        channel_major_into(&dvp, c, hw, &mut grads.dv[plane]);
    }
    grads
}
