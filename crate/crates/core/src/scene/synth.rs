use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    corrupt_depth, generate_scene_with, label_pipeline_with, render, DepthNoise, GraspLabelSet, LabelConfig, Scene,
    SceneConfig, ShadingConfig, Split,
};
use crate::image::{ColorImage, DepthImage};
use crate::{Error, Result};

/// Settings for turning a seed into a complete labeled example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Inclusive range of objects per scene.
    pub objects: (usize, usize),
    pub shading: ShadingConfig,
    pub noise: DepthNoise,
    pub labels: LabelConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            objects: (4, 8),
            shading: ShadingConfig::default(),
            noise: DepthNoise::default(),
            labels: LabelConfig::default(),
        }
    }
}

/// A scene with its images and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    pub split: Split,
    pub scene: Scene,
    pub color: ColorImage,
    /// Noise-free rendered depth.
    pub clean_depth: DepthImage,
    /// Depth as a sensor would report it, with noise and holes.
    pub depth: DepthImage,
    pub labels: GraspLabelSet,
}

/// Generate, render, corrupt and label the scene for `seed`.
pub fn synthesize(seed: u64, split: Split, cfg: &SynthConfig) -> Result<SceneSample> {
    let (lo, hi) = cfg.objects;
    if lo == 0 || lo > hi {
        return Err(Error::Config(alloc::format!("object range {lo}..={hi} is empty")));
    }
    let count = ChaCha8Rng::seed_from_u64(seed ^ 0x0b1e_c750).random_range(lo..=hi);
    let scene = generate_scene_with(seed, count, &SceneConfig::for_split(split))?;
    let rendering = render(&scene, &cfg.shading);
    let depth = corrupt_depth(&rendering.depth, seed ^ 0xdeb7_4000, &cfg.noise);
    let labels = label_pipeline_with(&scene, &cfg.labels);
    Ok(SceneSample { split, scene, color: rendering.color, clean_depth: rendering.depth, depth, labels })
}
