//! Detection losses for both stages.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::tensor::{Scalar, Tensor};
use crate::geometry::{GpnTarget, GroiTarget};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// First-stage box regression.
    pub gpn_reg: f64,
    /// Second-stage grasp regression.
    pub groi_reg: f64,
    /// Second-stage score regression.
    pub groi_score: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { gpn_reg: 1.0, groi_reg: 1.0, groi_score: 4.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.gpn_reg, self.groi_reg, self.groi_score].iter().all(|&w| w >= 0.0 && w.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config("loss weights must be non-negative".into()))
        }
    }
}

/// Sampled first-stage rows. `cls_rows` index the per-anchor outputs;
/// `reg_rows` must be the positives among them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GpnBatch {
    pub cls_rows: Vec<usize>,
    pub cls_labels: Vec<usize>,
    pub reg_rows: Vec<usize>,
    pub reg_targets: Vec<GpnTarget>,
}

/// Sampled second-stage rows, indexing the RoI outputs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroiBatch {
    pub labels: Vec<usize>,
    pub positives: Vec<usize>,
    pub targets: Vec<GroiTarget>,
    pub scores: Vec<f64>,
    /// When false the depth offset is excluded from the regression term.
    pub regress_depth: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct GpnLoss {
    pub cls: Var,
    pub reg: Var,
    pub total: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct GroiLoss {
    pub cls: Var,
    pub reg: Var,
    pub score: Var,
    pub total: Var,
}

fn zero<T: Scalar>(g: &mut Graph<T>) -> Var {
    g.input(Tensor::scalar(T::zero()), false)
}

/// Smooth-L1 of gathered rows against targets, summed and divided by the
/// number of rows; zero when there are none.
fn regression<T: Scalar>(g: &mut Graph<T>, pred: Var, rows: &[usize], targets: Vec<T>, mask: &[T]) -> Result<Var> {
    if rows.is_empty() {
        return Ok(zero(g));
    }
    let picked = g.gather_rows(pred, rows)?;
    let weight = mask.iter().copied().cycle().take(targets.len()).collect();
    g.smooth_l1(picked, targets, weight, T::from_f64(rows.len() as f64))
}

fn classification<T: Scalar>(g: &mut Graph<T>, logits: Var, rows: &[usize], labels: &[usize]) -> Result<Var> {
    if rows.len() != labels.len() {
        return Err(Error::Shape("one class label per sampled row".into()));
    }
    if rows.is_empty() {
        return Ok(zero(g));
    }
    let picked = g.gather_rows(logits, rows)?;
    g.softmax_xent(picked, labels, T::from_f64(rows.len() as f64))
}

/// `cls_logits`: `[R, 2]`, `deltas`: `[R, 4]` over all anchors.
pub fn gpn_loss<T: Scalar>(g: &mut Graph<T>, cls_logits: Var, deltas: Var, batch: &GpnBatch, w: &LossWeights) -> Result<GpnLoss> {
    if batch.reg_rows.len() != batch.reg_targets.len() {
        return Err(Error::Shape("one regression target per positive".into()));
    }
    let cls = classification(g, cls_logits, &batch.cls_rows, &batch.cls_labels)?;
    let targets = batch.reg_targets.iter().flat_map(|t| t.to_array()).map(T::from_f64).collect();
    let reg = regression(g, deltas, &batch.reg_rows, targets, &[T::one(); 4])?;
    let weighted = g.scale(reg, T::from_f64(w.gpn_reg));
    let total = g.add(cls, weighted)?;
    Ok(GpnLoss { cls, reg, total })
}

/// `reg`: `[M, 7]`, `cls_logits`: `[M, 2]`, `score`: `[M, 1]` over sampled
/// RoIs, with `batch.labels` covering every row.
pub fn groi_loss<T: Scalar>(
    g: &mut Graph<T>,
    reg: Var,
    cls_logits: Var,
    score: Var,
    batch: &GroiBatch,
    w: &LossWeights,
) -> Result<GroiLoss> {
    if batch.positives.len() != batch.targets.len() || batch.positives.len() != batch.scores.len() {
        return Err(Error::Shape("one target and score per positive".into()));
    }
    let rows: Vec<usize> = (0..batch.labels.len()).collect();
    let cls = classification(g, cls_logits, &rows, &batch.labels)?;
    let mut mask = vec![T::one(); 7];
    if !batch.regress_depth {
        mask[GroiTarget::DEPTH_INDEX] = T::zero();
    }
    let targets = batch.targets.iter().flat_map(|t| t.to_array()).map(T::from_f64).collect();
    let reg_term = regression(g, reg, &batch.positives, targets, &mask)?;
    let scores = batch.scores.iter().map(|&s| T::from_f64(s)).collect();
    let score_term = regression(g, score, &batch.positives, scores, &[T::one()])?;
    let a = g.scale(reg_term, T::from_f64(w.groi_reg));
    let b = g.scale(score_term, T::from_f64(w.groi_score));
    let total = g.sum(&[cls, a, b])?;
    Ok(GroiLoss { cls, reg: reg_term, score: score_term, total })
}

pub fn total_loss<T: Scalar>(g: &mut Graph<T>, gpn: &GpnLoss, groi: &GroiLoss) -> Result<Var> {
    g.add(gpn.total, groi.total)
}
