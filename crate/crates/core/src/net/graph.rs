//! Reverse-mode automatic differentiation over a tape of tensor operations.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::ops::attention::{local_attention_backward, local_attention_forward, AttnGeom};
use super::ops::conv::{conv_backward, conv_forward, ConvGeom};
use super::ops::roi_align::{roi_align_backward, roi_align_forward, Roi, RoiAlignConfig};
use super::tensor::{matmul, Mat, Scalar, Tensor};
use crate::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Conv { x: Var, weight: Var, bias: Option<Var>, geom: ConvGeom },
    Relu(Var),
    Add(Var, Var),
    Concat(Var, Var),
    Attention { q: Var, k: Var, v: Var, geom: AttnGeom, scale: T, weights: Vec<T> },
    RoiAlign { x: Var, rois: Vec<Roi>, cfg: RoiAlignConfig },
    GlobalAvgPool(Var),
    Linear { x: Var, weight: Var, bias: Var },
    Sigmoid(Var),
    SoftmaxXent { logits: Var, labels: Vec<usize>, probs: Vec<T>, norm: T },
    SmoothL1 { pred: Var, target: Vec<T>, weight: Vec<T>, norm: T },
    GatherRows { x: Var, rows: Vec<usize> },
    ToRows { x: Var, width: usize },
    Scale(Var, T),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// A computation recorded for a single forward pass.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err<R>(msg: alloc::string::String) -> Result<R> {
    Err(Error::Shape(msg))
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new() }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives a gradient only if `requires_grad`.
    pub fn input(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    /// Gradient of the last [`Graph::backward`] target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Some(Tensor { shape: self.nodes[v.0].value.shape.clone(), data: g.clone() })
    }

    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let geom = ConvGeom::new(self.shape(x), self.shape(weight), stride, pad)?;
        if let Some(b) = bias {
            if self.shape(b) != [geom.co] {
                return shape_err(format!("conv bias {:?} for {} output channels", self.shape(b), geom.co));
            }
        }
        let data = conv_forward(
            &self.value(x).data,
            &self.value(weight).data,
            bias.map(|b| self.value(b).data.as_slice()),
            &geom,
        );
        let value = Tensor { shape: geom.out_shape().to_vec(), data };
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        Ok(self.push(value, Op::Conv { x, weight, bias, geom }, &inputs))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        value.data.iter_mut().for_each(|v| *v = v.max(T::zero()));
        self.push(value, Op::Relu(x), &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return shape_err(format!("add {:?} + {:?}", self.shape(a), self.shape(b)));
        }
        let mut value = self.value(a).clone();
        value.data.iter_mut().zip(&self.value(b).data).for_each(|(x, &y)| *x += y);
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    /// Channel concatenation of two NCHW maps.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, ca, h, w) = self.value(a).dims4();
        let (n2, cb, h2, w2) = self.value(b).dims4();
        if (n, h, w) != (n2, h2, w2) {
            return shape_err(format!("concat {:?} with {:?}", self.shape(a), self.shape(b)));
        }
        let hw = h * w;
        let mut data = Vec::with_capacity(n * (ca + cb) * hw);
        for i in 0..n {
            data.extend_from_slice(&self.value(a).data[i * ca * hw..][..ca * hw]);
            data.extend_from_slice(&self.value(b).data[i * cb * hw..][..cb * hw]);
        }
        let value = Tensor { shape: vec![n, ca + cb, h, w], data };
        Ok(self.push(value, Op::Concat(a, b), &[a, b]))
    }

    /// Windowed multi-head attention of `q` over `k`/`v`, all `[N, C, H, W]`.
    pub fn local_attention(&mut self, q: Var, k: Var, v: Var, kernel: usize, heads: usize, scale: T) -> Result<Var> {
        let (n, c, h, w) = self.value(q).dims4();
        if self.shape(k) != self.shape(q) || self.shape(v) != self.shape(q) {
            return shape_err(format!("attention q {:?}, k {:?}, v {:?}", self.shape(q), self.shape(k), self.shape(v)));
        }
        if kernel.is_multiple_of(2) || heads == 0 || !c.is_multiple_of(heads) {
            return Err(Error::Config(format!("attention kernel {kernel} / heads {heads} for {c} channels")));
        }
        let geom = AttnGeom { n, c, h, w, kernel, heads };
        let (data, weights) =
            local_attention_forward(&self.value(q).data, &self.value(k).data, &self.value(v).data, &geom, scale);
        let value = Tensor { shape: vec![n, c, h, w], data };
        Ok(self.push(value, Op::Attention { q, k, v, geom, scale, weights }, &[q, k, v]))
    }

    /// Attention weights `[N, heads, H*W, k*k]` of an attention node.
    pub fn attention_weights(&self, v: Var) -> Option<&[T]> {
        match &self.nodes[v.0].op {
            Op::Attention { weights, .. } => Some(weights),
            _ => None,
        }
    }

    pub fn roi_align(&mut self, x: Var, rois: &[Roi], cfg: &RoiAlignConfig) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4();
        let data = roi_align_forward(&self.value(x).data, (n, c, h, w), rois, cfg)?;
        let value = Tensor { shape: vec![rois.len(), c, cfg.output, cfg.output], data };
        Ok(self.push(value, Op::RoiAlign { x, rois: rois.to_vec(), cfg: *cfg }, &[x]))
    }

    /// `[N, C, H, W]` -> `[N, C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let norm = T::from_f64(1.0 / (h * w) as f64);
        let data = self.value(x).data.chunks(h * w).map(|p| p.iter().copied().sum::<T>() * norm).collect();
        self.push(Tensor { shape: vec![n, c], data }, Op::GlobalAvgPool(x), &[x])
    }

    /// `x [M, K] . weight^T [K, O] + bias`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let (m, k) = self.value(x).dims2();
        let (o, k2) = self.value(weight).dims2();
        if k != k2 || self.shape(bias) != [o] {
            return shape_err(format!(
                "linear x {:?}, weight {:?}, bias {:?}",
                self.shape(x),
                self.shape(weight),
                self.shape(bias)
            ));
        }
        let mut data: Vec<T> = (0..m).flat_map(|_| self.value(bias).data.iter().copied()).collect();
        matmul(Mat::new(&self.value(x).data, m, k), Mat::new(&self.value(weight).data, o, k).t(), T::one(), &mut data);
        Ok(self.push(Tensor { shape: vec![m, o], data }, Op::Linear { x, weight, bias }, &[x, weight, bias]))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        value.data.iter_mut().for_each(|v| *v = T::one() / (T::one() + (-*v).exp()));
        self.push(value, Op::Sigmoid(x), &[x])
    }

    /// `sum_i -ln softmax(logits_i)[labels_i] / norm` over rows of `[M, K]`.
    pub fn softmax_xent(&mut self, logits: Var, labels: &[usize], norm: T) -> Result<Var> {
        let (m, k) = self.value(logits).dims2();
        if labels.len() != m || labels.iter().any(|&l| l >= k) {
            return shape_err(format!("{} labels for {m} x {k} logits", labels.len()));
        }
        let mut probs = vec![T::zero(); m * k];
        let mut total = T::zero();
        for (row, (&label, p)) in labels.iter().zip(probs.chunks_mut(k)).enumerate() {
            let z = &self.value(logits).data[row * k..][..k];
            let max = z.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = z.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
            p.iter_mut().zip(z).for_each(|(p, &v)| *p = (v - lse).exp());
            total += lse - z[label];
        }
        let value = Tensor::scalar(total / norm);
        Ok(self.push(value, Op::SoftmaxXent { logits, labels: labels.to_vec(), probs, norm }, &[logits]))
    }

    /// `sum weight * smoothL1(pred - target) / norm` with transition at 1.
    pub fn smooth_l1(&mut self, pred: Var, target: Vec<T>, weight: Vec<T>, norm: T) -> Result<Var> {
        let n = self.value(pred).len();
        if target.len() != n || weight.len() != n {
            return shape_err(format!("smooth-L1 over {n} values with {} targets, {} weights", target.len(), weight.len()));
        }
        let half = T::from_f64(0.5);
        let total: T = self
            .value(pred)
            .data
            .iter()
            .zip(&target)
            .zip(&weight)
            .map(|((&p, &t), &w)| {
                let d = (p - t).abs();
                w * if d < T::one() { half * d * d } else { d - half }
            })
            .sum();
        let value = Tensor::scalar(total / norm);
        Ok(self.push(value, Op::SmoothL1 { pred, target, weight, norm }, &[pred]))
    }

    /// Select rows of a matrix.
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let (m, d) = self.value(x).dims2();
        if let Some(&r) = rows.iter().find(|&&r| r >= m) {
            return shape_err(format!("row {r} of a {m}-row matrix"));
        }
        let src = &self.value(x).data;
        let data = rows.iter().flat_map(|&r| src[r * d..][..d].iter().copied()).collect();
        Ok(self.push(Tensor { shape: vec![rows.len(), d], data }, Op::GatherRows { x, rows: rows.to_vec() }, &[x]))
    }

    /// `[N, A*D, H, W]` -> `[N*H*W*A, D]`, rows ordered by image, cell, slot.
    pub fn to_rows(&mut self, x: Var, width: usize) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4();
        if width == 0 || c % width != 0 {
            return shape_err(format!("{c} channels do not split into rows of {width}"));
        }
        let (slots, hw) = (c / width, h * w);
        let src = &self.value(x).data;
        let mut data = vec![T::zero(); src.len()];
        for i in 0..n {
            for p in 0..hw {
                for ch in 0..c {
                    data[((i * hw + p) * slots) * width + ch] = src[(i * c + ch) * hw + p];
                }
            }
        }
        let value = Tensor { shape: vec![n * hw * slots, width], data };
        Ok(self.push(value, Op::ToRows { x, width }, &[x]))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let mut value = self.value(x).clone();
        value.data.iter_mut().for_each(|v| *v *= factor);
        self.push(value, Op::Scale(x, factor), &[x])
    }

    /// Sum of scalar nodes.
    pub fn sum(&mut self, terms: &[Var]) -> Result<Var> {
        let (&first, rest) = terms.split_first().ok_or_else(|| Error::Shape("sum of no terms".into()))?;
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }

    fn accumulate(&mut self, v: Var, g: &[T]) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a += b),
            slot @ None => *slot = Some(g.to_vec()),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Reverse pass from a scalar node. Gradients from earlier calls are
    /// discarded.
    pub fn backward(&mut self, target: Var) -> Result<()> {
        if self.value(target).len() != 1 {
            return shape_err(format!("backward from non-scalar {:?}", self.shape(target)));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[target.0] = Some(vec![T::one()]);
        for idx in (0..=target.0).rev() {
            let Some(dout) = self.grads[idx].take() else { continue };
            self.backward_node(idx, &dout)?;
            self.grads[idx] = Some(dout);
        }
        Ok(())
    }

    fn backward_node(&mut self, idx: usize, dout: &[T]) -> Result<()> {
        // Each arm computes input gradients from borrowed node data, then
        // accumulates once the borrow ends.
        let mut pending: Vec<(Var, Vec<T>)> = Vec::new();
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Conv { x, weight, bias, geom } => {
                let grads = conv_backward(&self.value(*x).data, &self.value(*weight).data, dout, geom, self.wants(*x));
                if let Some(dx) = grads.dx {
                    pending.push((*x, dx));
                }
                pending.push((*weight, grads.dweight));
                if let Some(b) = bias {
                    pending.push((*b, grads.dbias));
                }
            }
            Op::Relu(x) => {
                let dx = node.value.data.iter().zip(dout).map(|(&y, &g)| if y > T::zero() { g } else { T::zero() }).collect();
                pending.push((*x, dx));
            }
            Op::Add(a, b) => {
                pending.push((*a, dout.to_vec()));
                pending.push((*b, dout.to_vec()));
            }
            Op::Concat(a, b) => {
                let (n, ca, h, w) = self.value(*a).dims4();
                let cb = self.value(*b).shape[1];
                let hw = h * w;
                let (mut da, mut db) = (Vec::with_capacity(n * ca * hw), Vec::with_capacity(n * cb * hw));
                for chunk in dout.chunks((ca + cb) * hw) {
                    da.extend_from_slice(&chunk[..ca * hw]);
                    db.extend_from_slice(&chunk[ca * hw..]);
                }
                pending.push((*a, da));
                pending.push((*b, db));
            }
            Op::Attention { q, k, v, geom, scale, weights } => {
                let grads = local_attention_backward(
                    &self.value(*q).data,
                    &self.value(*k).data,
                    &self.value(*v).data,
                    weights,
                    dout,
                    geom,
                    *scale,
                );
                pending.extend([(*q, grads.dq), (*k, grads.dk), (*v, grads.dv)]);
            }
            Op::RoiAlign { x, rois, cfg } => {
                if self.wants(*x) {
                    let (n, c, h, w) = self.value(*x).dims4();
                    pending.push((*x, roi_align_backward(dout, (n, c, h, w), rois, cfg)?));
                }
            }
            Op::GlobalAvgPool(x) => {
                let (_, _, h, w) = self.value(*x).dims4();
                let norm = T::from_f64(1.0 / (h * w) as f64);
                let dx = dout.iter().flat_map(|&g| core::iter::repeat_n(g * norm, h * w)).collect();
                pending.push((*x, dx));
            }
            Op::Linear { x, weight, bias } => {
                let (m, k) = self.value(*x).dims2();
                let o = self.value(*weight).shape[0];
                if self.wants(*x) {
                    let mut dx = vec![T::zero(); m * k];
                    matmul(Mat::new(dout, m, o), Mat::new(&self.value(*weight).data, o, k), T::zero(), &mut dx);
                    pending.push((*x, dx));
                }
                let mut dw = vec![T::zero(); o * k];
                matmul(Mat::new(dout, m, o).t(), Mat::new(&self.value(*x).data, m, k), T::zero(), &mut dw);
                pending.push((*weight, dw));
                let mut db = vec![T::zero(); o];
                for row in dout.chunks(o) {
                    db.iter_mut().zip(row).for_each(|(d, &g)| *d += g);
                }
                pending.push((*bias, db));
            }
            Op::Sigmoid(x) => {
                let dx = node.value.data.iter().zip(dout).map(|(&y, &g)| g * y * (T::one() - y)).collect();
                pending.push((*x, dx));
            }
            Op::SoftmaxXent { logits, labels, probs, norm } => {
                let k = self.value(*logits).shape[1];
                let scale = dout[0] / *norm;
                let mut dx: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (row, &label) in labels.iter().enumerate() {
                    dx[row * k + label] -= scale;
                }
                pending.push((*logits, dx));
            }
            Op::SmoothL1 { pred, target, weight, norm } => {
                let scale = dout[0] / *norm;
                let dx = self.value(*pred)
                    .data
                    .iter()
                    .zip(target)
                    .zip(weight)
                    .map(|((&p, &t), &w)| {
                        let d = p - t;
                        let slope = if d.abs() < T::one() { d } else { d.signum() };
                        w * slope * scale
                    })
                    .collect();
                pending.push((*pred, dx));
            }
            Op::GatherRows { x, rows } => {
                let (m, d) = self.value(*x).dims2();
                let mut dx = vec![T::zero(); m * d];
                for (i, &r) in rows.iter().enumerate() {
                    dx[r * d..][..d].iter_mut().zip(&dout[i * d..][..d]).for_each(|(a, &g)| *a += g);
                }
                pending.push((*x, dx));
            }
            Op::ToRows { x, width } => {
                let (n, c, h, w) = self.value(*x).dims4();
                let (slots, hw) = (c / width, h * w);
                let mut dx = vec![T::zero(); dout.len()];
                for i in 0..n {
                    for p in 0..hw {
                        for ch in 0..c {
                            dx[(i * c + ch) * hw + p] = dout[((i * hw + p) * slots) * width + ch];
                        }
                    }
                }
                pending.push((*x, dx));
            }
            Op::Scale(x, factor) => {
                pending.push((*x, dout.iter().map(|&g| g * *factor).collect()));
            }
        }
        for (v, g) in pending {
            self.accumulate(v, &g);
        }
        Ok(())
    }
}
