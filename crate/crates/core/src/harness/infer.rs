//! Turning network outputs into ranked, de-duplicated grasps.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::preprocess::preprocess_depth;
use super::train::{network_inputs, DepthMode};
use crate::geometry::{decode_groi_target, grasp_nms, NmsThresholds, PlanarGrasp, CENTER_DEPTH_OFFSET};
use crate::image::{ColorImage, DepthImage};
use crate::net::{
    backbone_forward, generate_anchors, gpn_forward, groi_forward, proposal_selection, GpnOutput, Graph, GroiOutput,
    ModelConfig, ParamStore, ProposalConfig, Roi, Scalar,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    /// Minimum graspable probability, exclusive.
    pub score_threshold: f64,
    pub nms: NmsThresholds,
    /// Keep at most this many grasps after suppression.
    pub top_k: Option<usize>,
    pub proposals: ProposalConfig,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { score_threshold: 0.5, nms: NmsThresholds::default(), top_k: None, proposals: ProposalConfig::default() }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.score_threshold > 0.0 && self.score_threshold < 1.0 {
            Ok(())
        } else {
            Err(Error::Config("score threshold must lie in (0, 1)".into()))
        }
    }
}

/// Detect grasps on a color image and raw depth.
pub fn infer<T: Scalar>(
    params: &ParamStore<T>,
    model: &ModelConfig,
    color: &ColorImage,
    depth: &DepthImage,
    cfg: &InferenceConfig,
    mode: DepthMode,
) -> Result<Vec<PlanarGrasp>> {
    infer_preprocessed(params, model, color, &preprocess_depth(depth)?, cfg, mode)
}

/// As [`infer`] with depth that has already been preprocessed.
pub fn infer_preprocessed<T: Scalar>(
    params: &ParamStore<T>,
    model: &ModelConfig,
    color: &ColorImage,
    depth: &DepthImage,
    cfg: &InferenceConfig,
    mode: DepthMode,
) -> Result<Vec<PlanarGrasp>> {
    cfg.validate()?;
    let (rgb, dep) = network_inputs::<T>(&[color], &[depth])?;
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let rgb = g.input(rgb, false);
    let dep = g.input(dep, false);
    let backbone = backbone_forward(&mut g, &bound, rgb, Some(dep), model)?;
    let (_, _, fh, fw) = g.value(backbone.feature).dims4();
    let anchors = generate_anchors(fh, fw, &model.anchors);
    let heads = gpn_forward(&mut g, &bound, backbone.feature, model)?;
    let first = GpnOutput::read(&g, &heads);
    let proposals = proposal_selection(
        &first.probs,
        &first.deltas,
        &anchors,
        (color.width, color.height),
        cfg.proposals.post_nms_test,
        &cfg.proposals,
    );
    if proposals.is_empty() {
        return Ok(Vec::new());
    }
    let rois: Vec<Roi> = proposals.iter().map(|p| Roi { batch: 0, rect: p.rect }).collect();
    let out = groi_forward(&mut g, &bound, backbone.feature, &rois, model)?;
    let second = GroiOutput::read(&g, &out);
    let mut grasps = Vec::new();
    for (i, p) in proposals.iter().enumerate() {
        if !(second.probs[i] > cfg.score_threshold) {
            continue;
        }
        let reference = depth.at_nearest(p.rect.u, p.rect.v) as f64;
        if reference <= 0.0 {
            continue;
        }
        let Ok(mut grasp) = decode_groi_target(&second.reg[i], &p.rect, reference) else { continue };
        if mode == DepthMode::Center {
            let measured = depth.at_nearest(grasp.u, grasp.v) as f64;
            if measured <= 0.0 {
                continue;
            }
            grasp.d = measured + CENTER_DEPTH_OFFSET;
        }
        let grasp = grasp.with_score(second.scores[i]);
        if grasp.validate().is_ok() {
            grasps.push(grasp);
        }
    }
    let mut kept = grasp_nms(&grasps, &cfg.nms)?;
    if let Some(k) = cfg.top_k {
        kept.truncate(k);
    }
    Ok(kept)
}
