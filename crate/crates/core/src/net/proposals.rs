//! Decoding first-stage outputs into axis-aligned proposals.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{decode_gpn_offsets, AnchorBox, AxisBox, GpnTarget};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalConfig {
    pub nms_iou: f64,
    /// Highest-scoring boxes considered before suppression.
    pub pre_nms: usize,
    pub post_nms_train: usize,
    pub post_nms_test: usize,
    /// Boxes narrower or shorter than this after clipping are dropped, pixels.
    pub min_size: f64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            nms_iou: 0.7,
            pre_nms: 6000,
            post_nms_train: 2000,
            post_nms_test: 300,
            min_size: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub rect: AxisBox,
    /// Graspable probability from the first stage.
    pub score: f64,
}

/// Greedy suppression over boxes in descending score order (ties keep input
/// order). Returns kept indices.
pub fn axis_nms(boxes: &[AxisBox], scores: &[f64], iou: f64, cap: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let corners: Vec<[f64; 4]> = boxes.iter().map(AxisBox::corners).collect();
    let areas: Vec<f64> = boxes.iter().map(AxisBox::area).collect();
    let overlap = |i: usize, k: usize| {
        let (a, b) = (&corners[i], &corners[k]);
        let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
        let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
        let inter = iw * ih;
        let union = areas[i] + areas[k] - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    };
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.len() >= cap {
            break;
        }
        if kept.iter().all(|&k| overlap(k, i) <= iou) {
            kept.push(i);
        }
    }
    kept
}

/// Decode, clip and suppress. `scores` and `deltas` are per anchor.
pub fn proposal_selection(
    scores: &[f64],
    deltas: &[GpnTarget],
    anchors: &[AnchorBox],
    (width, height): (usize, usize),
    cap: usize,
    cfg: &ProposalConfig,
) -> Vec<Proposal> {
    let mut order: Vec<usize> = (0..anchors.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order.truncate(cfg.pre_nms);
    let (boxes, kept_scores): (Vec<AxisBox>, Vec<f64>) = order
        .into_iter()
        .filter_map(|i| {
            let b = decode_gpn_offsets(&deltas[i], &anchors[i]).clipped(width, height);
            (b.w >= cfg.min_size && b.h >= cfg.min_size && b.u.is_finite() && b.v.is_finite()).then_some((b, scores[i]))
        })
        .unzip();
    axis_nms(&boxes, &kept_scores, cfg.nms_iou, cap)
        .into_iter()
        .map(|i| Proposal { rect: boxes[i], score: kept_scores[i] })
        .collect()
}
