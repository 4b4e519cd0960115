//! Dataset files and the command-line flow end to end on a tiny setup.

use std::path::Path;
use std::process::Command;

use dgcan::dataset::{generate_dataset, read_grasps, write_json, DatasetPlan};
use dgcan::{Checkpoint, Dataset, RunConfig};
use dgcan_core::harness::TrainSample;
use dgcan_core::metrics::EvalReport;
use dgcan_core::net::{LcaConfig, ModelConfig};
use dgcan_core::scene::{synthesize, Split, SynthConfig};

fn tiny_plan() -> DatasetPlan {
    DatasetPlan { train: 2, seen: 1, similar: 1, novel: 1 }
}

#[test]
fn stored_scenes_match_synthesis() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig::default();
    let manifest = generate_dataset(dir.path(), &tiny_plan(), 77, &cfg).unwrap();
    assert_eq!(manifest.scenes.len(), 5);
    let dataset = Dataset::open(dir.path()).unwrap();
    assert_eq!(dataset.manifest, manifest);
    for entry in &manifest.scenes {
        let stored = dataset.load(entry).unwrap();
        let fresh = synthesize(entry.seed, entry.split, &cfg).unwrap();
        assert_eq!(stored.scene, fresh.scene);
        assert_eq!(stored.color, fresh.color);
        // Depth goes through 16-bit millimeters.
        for (a, b) in stored.depth.data.iter().zip(&fresh.depth.data) {
            if b.is_finite() && *b > 0.0 {
                assert!((a - b).abs() <= 0.0005 + 1e-6, "{a} vs {b}");
            } else {
                assert_eq!(*a, 0.0);
            }
        }
        let grasps = stored.grasps();
        assert_eq!(grasps, fresh.labels.grasps());
        TrainSample::from_scene(&fresh).unwrap();
        stored.train_sample().unwrap();
    }
    assert_eq!(dataset.load_split(Split::Train).unwrap().len(), 2);
}

fn dgcan(config: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_dgcan"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(out.status.success(), "{args:?} failed:\n{stdout}\n{}", String::from_utf8_lossy(&out.stderr));
    stdout
}

#[test]
fn command_line_flow() {
    let root = tempfile::tempdir().unwrap();
    let path = |name: &str| root.path().join(name);
    let mut cfg = RunConfig {
        model: ModelConfig {
            channels: [8, 8, 16, 16],
            gpn_hidden: 8,
            lca: LcaConfig { embed_dims: [4, 4, 8], ..LcaConfig::default() },
            ..ModelConfig::default()
        },
        dataset: tiny_plan(),
        checkpoint_every: 2,
        ..RunConfig::default()
    };
    cfg.train.iterations = 4;
    cfg.train.batch_size = 1;
    cfg.train.groi_samples = 16;
    cfg.train.gpn_samples = 32;
    let config = path("config.json");
    write_json(&config, &cfg).unwrap();
    let s = |p: &Path| p.to_str().unwrap().to_owned();

    dgcan(&config, &["gen", "--scenes", "3", "--seed", "5", "--out", &s(&path("data"))]);
    let dataset = Dataset::open(path("data")).unwrap();
    assert_eq!(dataset.manifest.split(Split::Train).count(), 3);

    dgcan(&config, &["train", "--data", &s(&path("data")), "--depth-mode", "center", "--out", &s(&path("run"))]);
    let ckpt = path("run").join("final.ckpt");
    let checkpoint = Checkpoint::load(&ckpt).unwrap();
    assert_eq!(checkpoint.model, cfg.model);
    assert_eq!(checkpoint.iteration, 4);
    assert!(path("run").join("last.ckpt").exists());
    let log = std::fs::read_to_string(path("run").join("loss.csv")).unwrap();
    assert!(log.starts_with("iteration,L_GPN_cls,L_GPN_reg,L_GRoI_cls,L_GRoI_reg,L_GRoI_score,total"));

    let grid = dgcan(
        &config,
        &["eval", "--data", &s(&path("data")), "--split", "novel", "--ckpt", &s(&ckpt), "--report", &s(&path("novel.json"))],
    );
    assert!(grid.contains("novel"));
    let report: EvalReport = serde_json::from_str(&std::fs::read_to_string(path("novel.json")).unwrap()).unwrap();
    assert_eq!(report.per_scene.len(), 1);
    assert_eq!(report.ap_mu.len(), 5);

    let scene_dir = path("data").join(&dataset.manifest.scenes[0].id);
    let image = format!("{},{}", s(&scene_dir.join("color.png")), s(&scene_dir.join("depth.png")));
    dgcan(&config, &["infer", "--image", &image, "--ckpt", &s(&ckpt), "--out", &s(&path("infer"))]);
    let predictions = read_grasps(&path("infer").join("predictions.jsonl")).unwrap();
    assert!(predictions.iter().all(|p| p.score.is_finite()));
    assert!(path("infer").join("overlay.png").exists());

    let id = dataset.manifest.scenes[0].id.clone();
    dgcan(
        &config,
        &["plot", "--data", &s(&path("data")), "--scene", &id, "--pred", &s(&scene_dir.join("labels.jsonl")), "--out", &s(&path("plot"))],
    );
    assert!(path("plot").join("overlay.png").exists());
    assert!(path("plot").join("depth_view.png").exists());
}
