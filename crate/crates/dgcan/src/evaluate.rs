//! Dataset-level inference and AP reports.

use std::fmt::Write as _;

use dgcan_core::geometry::PlanarGrasp;
use dgcan_core::harness::{infer, DepthMode, InferenceConfig};
use dgcan_core::metrics::{evaluate_ap, EvalConfig, EvalReport, SceneEval};
use dgcan_core::net::{ModelConfig, ParamStore};
use dgcan_core::scene::Split;
use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::dataset::{Dataset, StoredScene};
use crate::error::Result;

/// Run inference on every scene. Scenes are processed in parallel; the
/// output order and values do not depend on the thread count.
pub fn predict(
    params: &ParamStore<f32>,
    model: &ModelConfig,
    scenes: &[StoredScene],
    cfg: &InferenceConfig,
    mode: DepthMode,
) -> Result<Vec<Vec<PlanarGrasp>>> {
    scenes
        .par_iter()
        .map(|s| Ok(infer(params, model, &s.color, &s.depth, cfg, mode)?))
        .collect()
}

/// AP report for already computed predictions.
pub fn score_predictions(
    split: Split,
    scenes: &[StoredScene],
    predictions: &[Vec<PlanarGrasp>],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let entries: Vec<SceneEval<'_>> = scenes
        .iter()
        .zip(predictions)
        .map(|(s, p)| SceneEval { id: &s.entry.id, scene: &s.scene, predictions: p })
        .collect();
    Ok(evaluate_ap(split.name(), &entries, cfg)?)
}

/// Load a split, run the checkpoint on it and score the result.
pub fn evaluate_split(
    dataset: &Dataset,
    split: Split,
    checkpoint: &Checkpoint,
    infer_cfg: &InferenceConfig,
    eval_cfg: &EvalConfig,
) -> Result<EvalReport> {
    infer_cfg.validate()?;
    eval_cfg.validate()?;
    let scenes = dataset.load_split(split)?;
    let predictions = predict(&checkpoint.params, &checkpoint.model, &scenes, infer_cfg, checkpoint.depth_mode)?;
    score_predictions(split, &scenes, &predictions, eval_cfg)
}

/// Text table with one row per report: AP, AP_0.8 and AP_0.4 in percent.
pub fn report_grid(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<10} {:>8} {:>8} {:>8}", "split", "AP", "AP_0.8", "AP_0.4");
    for r in reports {
        let pct = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{:.2}", 100.0 * v));
        let _ = writeln!(
            out,
            "{:<10} {:>8} {:>8} {:>8}",
            r.split,
            pct(Some(r.ap)),
            pct(r.ap_at(0.8)),
            pct(r.ap_at(0.4))
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn grid_lists_each_split() {
        let report = |split: &str, ap: f64| EvalReport {
            split: split.into(),
            ap,
            ap_mu: BTreeMap::from([("0.4".to_string(), 0.25), ("0.8".to_string(), 0.5)]),
            per_scene: Vec::new(),
        };
        let grid = report_grid(&[report("seen", 0.375), report("novel", 0.1)]);
        let lines: Vec<&str> = grid.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("seen") && lines[1].contains("37.50") && lines[1].contains("50.00"));
        assert!(lines[2].contains("25.00"));
    }
}
