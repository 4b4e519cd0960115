#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::contact::force_closure;
use super::gripper::{assess_grasp, ContactPair, GripperModel};
use crate::geometry::{grasp_nms, lift_planar_to_3d, NmsThresholds, PlanarGrasp};
use crate::scene::Scene;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Ascending friction coefficients in `(0, 1]`.
    pub mu_list: Vec<f64>,
    pub top_k: usize,
    pub nms: NmsThresholds,
    pub gripper: GripperModel,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mu_list: (1..=5).map(|i| i as f64 / 5.0).collect(),
            top_k: 10,
            nms: NmsThresholds::default(),
            gripper: GripperModel::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mu_list.is_empty()
            || self.mu_list.iter().any(|&m| !(m > 0.0 && m <= 1.0))
            || self.mu_list.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Config("mu list must be ascending within (0, 1]".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top-k must be positive".into()));
        }
        self.gripper.validate()
    }
}

/// Report key for a friction coefficient, e.g. `"0.4"`.
pub fn mu_key(mu: f64) -> String {
    if ((mu * 10.0).round() - mu * 10.0).abs() < 1e-12 {
        format!("{mu:.1}")
    } else {
        mu.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneReport {
    pub scene: String,
    #[serde(rename = "AP")]
    pub ap: f64,
    #[serde(rename = "AP_mu")]
    pub ap_mu: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    #[serde(rename = "AP")]
    pub ap: f64,
    #[serde(rename = "AP_mu")]
    pub ap_mu: BTreeMap<String, f64>,
    pub per_scene: Vec<SceneReport>,
}

impl EvalReport {
    pub fn ap_at(&self, mu: f64) -> Option<f64> {
        self.ap_mu.get(&mu_key(mu)).copied()
    }
}

/// One scene's predictions for [`evaluate_ap`].
#[derive(Debug, Clone, Copy)]
pub struct SceneEval<'a> {
    pub id: &'a str,
    pub scene: &'a Scene,
    pub predictions: &'a [PlanarGrasp],
}

/// Lift a planar prediction and judge it geometrically.
pub fn assess_planar(g: &PlanarGrasp, scene: &Scene, gripper: &GripperModel) -> Option<ContactPair> {
    let g3 = lift_planar_to_3d(g, &scene.intrinsics).ok()?;
    assess_grasp(&g3, scene, gripper)
}

fn is_true_positive(pair: Option<&ContactPair>, mu: f64) -> bool {
    pair.is_some_and(|p| force_closure(&p.first, &p.second, mu).unwrap_or(false))
}

/// `out[k-1]` = (true positives among the first `k` flags) / `k`, for
/// `k = 1..=top_k`. Missing entries beyond `flags.len()` count as misses.
pub fn precision_from_flags(flags: &[bool], top_k: usize) -> Vec<f64> {
    let mut hits = 0usize;
    (1..=top_k)
        .map(|k| {
            if flags.get(k - 1).copied().unwrap_or(false) {
                hits += 1;
            }
            hits as f64 / k as f64
        })
        .collect()
}

fn check_sorted(predictions: &[PlanarGrasp]) -> Result<()> {
    let mut prev = f64::INFINITY;
    for (i, g) in predictions.iter().enumerate() {
        let s = g.score.ok_or(Error::MissingScore(i))?;
        if s > prev {
            return Err(Error::Unsorted);
        }
        prev = s;
    }
    Ok(())
}

/// Precision@k over score-sorted predictions judged at friction `mu`.
pub fn precision_at_k(
    predictions: &[PlanarGrasp],
    scene: &Scene,
    mu: f64,
    gripper: &GripperModel,
    top_k: usize,
) -> Result<Vec<f64>> {
    check_sorted(predictions)?;
    let flags: Vec<bool> = predictions
        .iter()
        .take(top_k)
        .map(|g| is_true_positive(assess_planar(g, scene, gripper).as_ref(), mu))
        .collect();
    Ok(precision_from_flags(&flags, top_k))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Grasp-NMS, truncate to top-K, and average Precision@k per friction value.
pub fn evaluate_scene(entry: &SceneEval<'_>, cfg: &EvalConfig) -> Result<SceneReport> {
    let kept = grasp_nms(entry.predictions, &cfg.nms)?;
    let judged: Vec<Option<ContactPair>> = kept
        .iter()
        .take(cfg.top_k)
        .map(|g| assess_planar(g, entry.scene, &cfg.gripper))
        .collect();
    let ap_mu: BTreeMap<String, f64> = cfg
        .mu_list
        .iter()
        .map(|&mu| {
            let flags: Vec<bool> = judged.iter().map(|p| is_true_positive(p.as_ref(), mu)).collect();
            (mu_key(mu), mean(precision_from_flags(&flags, cfg.top_k).into_iter()))
        })
        .collect();
    Ok(SceneReport {
        scene: entry.id.into(),
        ap: mean(ap_mu.values().copied()),
        ap_mu,
    })
}

/// Average per-scene results into a split report. `AP_mu` is the mean over
/// scenes; `AP` is the mean of the `AP_mu` values.
pub fn aggregate_reports(split: &str, per_scene: Vec<SceneReport>, cfg: &EvalConfig) -> Result<EvalReport> {
    if per_scene.is_empty() {
        return Err(Error::EmptySceneSet);
    }
    let ap_mu: BTreeMap<String, f64> = cfg
        .mu_list
        .iter()
        .map(|&mu| {
            let key = mu_key(mu);
            let value = mean(per_scene.iter().map(|s| s.ap_mu[&key]));
            (key, value)
        })
        .collect();
    Ok(EvalReport {
        split: split.into(),
        ap: mean(ap_mu.values().copied()),
        ap_mu,
        per_scene,
    })
}

pub fn evaluate_ap(split: &str, scenes: &[SceneEval<'_>], cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    if scenes.is_empty() {
        return Err(Error::EmptySceneSet);
    }
    let per_scene = scenes
        .iter()
        .map(|s| evaluate_scene(s, cfg))
        .collect::<Result<Vec<_>>>()?;
    aggregate_reports(split, per_scene, cfg)
}
