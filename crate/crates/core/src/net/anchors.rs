//! Anchor generation and IoU-based target assignment for both stages.

#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{aabb_of, encode_gpn_offsets, encode_groi_target, AnchorBox, AxisBox, GpnTarget, GroiTarget, PlanarGrasp};
use crate::image::DepthImage;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorConfig {
    /// Width over height.
    pub ratios: Vec<f64>,
    /// Square root of the anchor area, pixels.
    pub scales: Vec<f64>,
    /// Feature stride, pixels.
    pub stride: usize,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self {
            ratios: vec![0.5, 1.0, 2.0],
            scales: vec![16.0, 32.0, 64.0, 128.0],
            stride: 16,
        }
    }
}

impl AnchorConfig {
    pub fn per_cell(&self) -> usize {
        self.ratios.len() * self.scales.len()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: &[f64]| !v.is_empty() && v.iter().all(|&x| x > 0.0 && x.is_finite());
        if !positive(&self.ratios) || !positive(&self.scales) || self.stride == 0 {
            return Err(Error::Config("anchor ratios, scales and stride must be positive".into()));
        }
        Ok(())
    }
}

/// Anchors for a `rows x cols` feature map, ordered by cell (row-major),
/// then ratio, then scale.
pub fn generate_anchors(rows: usize, cols: usize, cfg: &AnchorConfig) -> Vec<AnchorBox> {
    let stride = cfg.stride as f64;
    let offset = (stride - 1.0) / 2.0;
    let mut out = Vec::with_capacity(rows * cols * cfg.per_cell());
    for i in 0..rows {
        for j in 0..cols {
            let (u, v) = (j as f64 * stride + offset, i as f64 * stride + offset);
            for &ratio in &cfg.ratios {
                for &scale in &cfg.scales {
                    let root = ratio.sqrt();
                    out.push(AxisBox::new(u, v, scale * root, scale / root));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IouThresholds {
    /// Matches at or above this IoU are positive candidates.
    pub positive: f64,
    /// Boxes whose best IoU lies in `[negative_low, negative_high)` are
    /// negative; everything else is ignored.
    pub negative_low: f64,
    pub negative_high: f64,
}

impl IouThresholds {
    pub fn gpn() -> Self {
        Self { positive: 0.5, negative_low: 0.0, negative_high: 0.3 }
    }

    pub fn groi() -> Self {
        Self { positive: 0.5, negative_low: 0.1, negative_high: 0.5 }
    }
}

/// Outcome of matching one box against the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Match {
    /// Index into the ground-truth list.
    Positive(usize),
    Negative,
    Ignore,
}

/// Among ground truths whose enclosing box reaches the positive IoU, pick the
/// highest score, then the larger IoU, then the lower index.
pub fn match_box(b: &AxisBox, gts: &[PlanarGrasp], boxes: &[AxisBox], t: &IouThresholds) -> Match {
    let mut best: Option<(usize, f64, f64)> = None;
    let mut max_iou = 0.0f64;
    for (idx, (gt, gt_box)) in gts.iter().zip(boxes).enumerate() {
        let iou = b.iou(gt_box);
        max_iou = max_iou.max(iou);
        if iou < t.positive {
            continue;
        }
        let score = gt.score.unwrap_or(0.0);
        let better = match best {
            None => true,
            Some((_, s, i)) => score > s || (score == s && iou > i),
        };
        if better {
            best = Some((idx, score, iou));
        }
    }
    match best {
        Some((idx, _, _)) => Match::Positive(idx),
        None if max_iou >= t.negative_low && max_iou < t.negative_high => Match::Negative,
        None => Match::Ignore,
    }
}

/// Per-anchor first-stage target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GpnAssignment {
    Positive { gt: usize, target: GpnTarget },
    Negative,
    Ignore,
}

pub fn assign_gpn_targets(anchors: &[AnchorBox], gts: &[PlanarGrasp], t: &IouThresholds) -> Result<Vec<GpnAssignment>> {
    let boxes: Vec<AxisBox> = gts.iter().map(aabb_of).collect();
    anchors
        .iter()
        .map(|a| {
            Ok(match match_box(a, gts, &boxes, t) {
                Match::Positive(gt) => GpnAssignment::Positive { gt, target: encode_gpn_offsets(&boxes[gt], a)? },
                Match::Negative => GpnAssignment::Negative,
                Match::Ignore => GpnAssignment::Ignore,
            })
        })
        .collect()
}

/// Per-proposal second-stage target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GroiAssignment {
    Positive { gt: usize, target: GroiTarget, score: f64 },
    Negative,
    Ignore,
}

/// `depth` must be preprocessed; a hole at a positive proposal's center
/// makes that proposal ignored.
pub fn assign_groi_targets(
    proposals: &[AxisBox],
    gts: &[PlanarGrasp],
    depth: &DepthImage,
    t: &IouThresholds,
) -> Result<Vec<GroiAssignment>> {
    let boxes: Vec<AxisBox> = gts.iter().map(aabb_of).collect();
    proposals
        .iter()
        .map(|p| {
            Ok(match match_box(p, gts, &boxes, t) {
                Match::Positive(gt) => {
                    let reference = depth.at_nearest(p.u, p.v) as f64;
                    if reference <= 0.0 {
                        GroiAssignment::Ignore
                    } else {
                        GroiAssignment::Positive {
                            gt,
                            target: encode_groi_target(&gts[gt], p, reference)?,
                            score: gts[gt].score.ok_or(Error::MissingScore(gt))?,
                        }
                    }
                }
                Match::Negative => GroiAssignment::Negative,
                Match::Ignore => GroiAssignment::Ignore,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grasp(u: f64, v: f64, w: f64, h: f64, theta: f64, score: f64) -> PlanarGrasp {
        PlanarGrasp::new(u, v, 0.5, w, h, theta).with_score(score)
    }

    #[test]
    fn anchor_layout() {
        let cfg = AnchorConfig { scales: vec![32.0, 64.0, 128.0, 256.0], ..Default::default() };
        let a = generate_anchors(3, 4, &cfg);
        assert_eq!(a.len(), 3 * 4 * 12);
        let half = a[0];
        assert!((half.w / half.h - 0.5).abs() < 1e-12);
        assert!((half.area() - 32.0 * 32.0).abs() < 1e-9);
        // Neighboring cells along a row and a column.
        assert_eq!(a[12].u - a[0].u, 16.0);
        assert_eq!(a[12].v, a[0].v);
        assert_eq!(a[4 * 12].v - a[0].v, 16.0);
        assert_eq!(a[0].u, 7.5);
    }

    #[test]
    fn no_overlap_means_no_positive() {
        let anchors = generate_anchors(2, 2, &AnchorConfig::default());
        let gts = [grasp(300.0, 200.0, 20.0, 10.0, 0.3, 1.0)];
        let out = assign_gpn_targets(&anchors, &gts, &IouThresholds::gpn()).unwrap();
        assert!(out.iter().all(|a| !matches!(a, GpnAssignment::Positive { .. })));
    }

    #[test]
    fn higher_score_wins() {
        let anchor = AxisBox::new(50.0, 50.0, 32.0, 32.0);
        let gts = [grasp(52.0, 50.0, 30.0, 30.0, 0.0, 0.6), grasp(48.0, 51.0, 30.0, 28.0, 0.0, 0.9)];
        let out = assign_gpn_targets(&[anchor], &gts, &IouThresholds::gpn()).unwrap();
        assert!(matches!(out[0], GpnAssignment::Positive { gt: 1, .. }));
    }

    /// Exhaustive oracle: sort candidate indices by the stated key.
    fn oracle(b: &AxisBox, gts: &[PlanarGrasp], t: &IouThresholds) -> Match {
        let ious: Vec<f64> = gts.iter().map(|g| b.iou(&aabb_of(g))).collect();
        let mut cands: Vec<usize> = (0..gts.len()).filter(|&i| ious[i] >= t.positive).collect();
        cands.sort_by(|&i, &j| {
            let (si, sj) = (gts[i].score.unwrap(), gts[j].score.unwrap());
            sj.partial_cmp(&si).unwrap().then(ious[j].partial_cmp(&ious[i]).unwrap()).then(i.cmp(&j))
        });
        let max = ious.iter().copied().fold(0.0, f64::max);
        match cands.first() {
            Some(&i) => Match::Positive(i),
            None if max >= t.negative_low && max < t.negative_high => Match::Negative,
            None => Match::Ignore,
        }
    }

    #[test]
    fn assignment_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let anchors = generate_anchors(6, 8, &AnchorConfig::default());
        for _ in 0..50 {
            let n = rng.random_range(1..8);
            let gts: Vec<PlanarGrasp> = (0..n)
                .map(|_| {
                    grasp(
                        rng.random_range(0.0..128.0),
                        rng.random_range(0.0..96.0),
                        rng.random_range(10.0..80.0),
                        rng.random_range(8.0..30.0),
                        rng.random_range(-1.5..1.5),
                        // Coarse scores so that ties occur.
                        rng.random_range(1..4) as f64 / 4.0,
                    )
                })
                .collect();
            let boxes: Vec<AxisBox> = gts.iter().map(aabb_of).collect();
            for t in [IouThresholds::gpn(), IouThresholds::groi()] {
                for a in &anchors {
                    assert_eq!(match_box(a, &gts, &boxes, &t), oracle(a, &gts, &t));
                }
            }
        }
    }

    #[test]
    fn groi_identity_target() {
        let gt = grasp(40.0, 30.0, 24.0, 10.0, 0.0, 0.8);
        let depth = DepthImage::filled(80, 60, 0.5);
        let out = assign_groi_targets(&[aabb_of(&gt)], &[gt], &depth, &IouThresholds::groi()).unwrap();
        let GroiAssignment::Positive { target, score, .. } = out[0] else { panic!("expected a positive") };
        assert_eq!(target.to_array(), [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(score, 0.8);
    }

    #[test]
    fn groi_depth_offset() {
        let mut gt = grasp(40.0, 30.0, 24.0, 10.0, 0.0, 0.8);
        gt.d = 0.515;
        let depth = DepthImage::filled(80, 60, 0.5);
        let out = assign_groi_targets(&[aabb_of(&gt)], &[gt], &depth, &IouThresholds::groi()).unwrap();
        let GroiAssignment::Positive { target, .. } = out[0] else { panic!("expected a positive") };
        assert!((target.td - 0.015).abs() < 1e-6);
    }

    #[test]
    fn groi_hole_is_ignored() {
        let gt = grasp(40.0, 30.0, 24.0, 10.0, 0.0, 0.8);
        let depth = DepthImage::new(80, 60);
        let out = assign_groi_targets(&[aabb_of(&gt)], &[gt], &depth, &IouThresholds::groi()).unwrap();
        assert_eq!(out[0], GroiAssignment::Ignore);
    }
}
