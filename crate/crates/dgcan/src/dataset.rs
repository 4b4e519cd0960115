//! On-disk dataset: one directory per scene plus a top-level manifest.
//!
//! ```text
//! root/manifest.json
//! root/<id>/color.png     8-bit RGB
//! root/<id>/depth.png     16-bit grayscale, millimeters, 0 = hole
//! root/<id>/scene.json    objects, camera, seed
//! root/<id>/labels.jsonl  one grasp per line
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use dgcan_core::geometry::PlanarGrasp;
use dgcan_core::harness::{mix_seed, TrainSample};
use dgcan_core::image::{ColorImage, DepthImage};
use dgcan_core::scene::{synthesize, GraspLabel, Scene, SceneSample, Split, SynthConfig};
use image::{ImageBuffer, Luma, Rgb};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const COLOR_FILE: &str = "color.png";
pub const DEPTH_FILE: &str = "depth.png";
pub const SCENE_FILE: &str = "scene.json";
pub const LABELS_FILE: &str = "labels.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub scenes: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.scenes.iter().filter(move |e| e.split == split)
    }
}

/// One line of `labels.jsonl`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspRecord {
    pub u: f64,
    pub v: f64,
    pub d: f64,
    pub w: f64,
    pub h: f64,
    pub theta: f64,
    pub score: f64,
    /// Index of the grasped object in `scene.json`, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<usize>,
}

impl GraspRecord {
    pub fn from_grasp(g: &PlanarGrasp, object: Option<usize>) -> Self {
        Self { u: g.u, v: g.v, d: g.d, w: g.w, h: g.h, theta: g.theta, score: g.score.unwrap_or(0.0), object }
    }

    pub fn from_label(l: &GraspLabel) -> Self {
        Self::from_grasp(&l.grasp, Some(l.object))
    }

    pub fn grasp(&self) -> PlanarGrasp {
        PlanarGrasp { score: Some(self.score), ..PlanarGrasp::new(self.u, self.v, self.d, self.w, self.h, self.theta) }
    }
}

/// Scene counts per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPlan {
    pub train: usize,
    pub seen: usize,
    pub similar: usize,
    pub novel: usize,
}

impl Default for DatasetPlan {
    fn default() -> Self {
        Self { train: 200, seen: 20, similar: 20, novel: 20 }
    }
}

impl DatasetPlan {
    /// Scene ids, splits and seeds in manifest order.
    pub fn entries(&self, seed: u64) -> Vec<ManifestEntry> {
        let counts = [self.train, self.seen, self.similar, self.novel];
        Split::ALL
            .iter()
            .zip(counts)
            .flat_map(|(&split, n)| (0..n).map(move |i| (split, i)))
            .enumerate()
            .map(|(index, (split, i))| ManifestEntry {
                id: format!("{}_{i:04}", split.name()),
                split,
                seed: mix_seed(seed, index as u64),
            })
            .collect()
    }
}

/// A scene as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredScene {
    pub entry: ManifestEntry,
    pub scene: Scene,
    pub color: ColorImage,
    /// Sensor depth after millimeter quantization.
    pub depth: DepthImage,
    pub labels: Vec<GraspRecord>,
}

impl StoredScene {
    pub fn grasps(&self) -> Vec<PlanarGrasp> {
        self.labels.iter().map(GraspRecord::grasp).collect()
    }

    pub fn train_sample(&self) -> Result<TrainSample> {
        Ok(TrainSample {
            color: self.color.clone(),
            depth: dgcan_core::harness::preprocess_depth(&self.depth)?,
            labels: self.grasps(),
        })
    }
}

pub fn write_color(path: &Path, img: &ColorImage) -> Result<()> {
    let buf: ImageBuffer<Rgb<u8>, _> = ImageBuffer::from_raw(img.width as u32, img.height as u32, img.data.clone())
        .ok_or_else(|| Error::Dataset("color buffer does not match its dimensions".into()))?;
    buf.save(path).at(path)
}

pub fn read_color(path: &Path) -> Result<ColorImage> {
    let img = image::open(path).at(path)?.into_rgb8();
    Ok(ColorImage { width: img.width() as usize, height: img.height() as usize, data: img.into_raw() })
}

/// Store depth as 16-bit millimeters; holes and non-finite values become 0.
pub fn write_depth(path: &Path, depth: &DepthImage) -> Result<()> {
    let mm: Vec<u16> = depth
        .data
        .iter()
        .map(|&d| if d.is_finite() && d > 0.0 { (d as f64 * 1000.0).round().min(u16::MAX as f64) as u16 } else { 0 })
        .collect();
    let buf: ImageBuffer<Luma<u16>, _> = ImageBuffer::from_raw(depth.width as u32, depth.height as u32, mm)
        .ok_or_else(|| Error::Dataset("depth buffer does not match its dimensions".into()))?;
    buf.save(path).at(path)
}

pub fn read_depth(path: &Path) -> Result<DepthImage> {
    let img = image::open(path).at(path)?.into_luma16();
    Ok(DepthImage {
        width: img.width() as usize,
        height: img.height() as usize,
        data: img.pixels().map(|p| (p.0[0] as f64 / 1000.0) as f32).collect(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = fs::File::create(path).at(path)?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value).at(path)?;
    out.flush().at(path)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = fs::File::open(path).at(path)?;
    serde_json::from_reader(BufReader::new(file)).at(path)
}

pub fn write_grasps(path: &Path, records: &[GraspRecord]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path).at(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r).at(path)?;
        out.write_all(b"\n").at(path)?;
    }
    out.flush().at(path)
}

pub fn read_grasps(path: &Path) -> Result<Vec<GraspRecord>> {
    let file = fs::File::open(path).at(path)?;
    BufReader::new(file)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|line| serde_json::from_str(&line.at(path)?).at(path))
        .collect()
}

pub fn write_scene(dir: &Path, sample: &SceneSample) -> Result<()> {
    fs::create_dir_all(dir).at(dir)?;
    write_color(&dir.join(COLOR_FILE), &sample.color)?;
    write_depth(&dir.join(DEPTH_FILE), &sample.depth)?;
    write_json(&dir.join(SCENE_FILE), &sample.scene)?;
    let records: Vec<GraspRecord> = sample.labels.labels.iter().map(GraspRecord::from_label).collect();
    write_grasps(&dir.join(LABELS_FILE), &records)
}

/// Synthesize every scene of `plan` into `root` and write the manifest.
/// Scenes are generated in parallel; output is independent of thread count.
pub fn generate_dataset(root: &Path, plan: &DatasetPlan, seed: u64, cfg: &SynthConfig) -> Result<Manifest> {
    fs::create_dir_all(root).at(root)?;
    let manifest = Manifest { scenes: plan.entries(seed) };
    manifest.scenes.par_iter().try_for_each(|e| {
        let sample = synthesize(e.seed, e.split, cfg)?;
        write_scene(&root.join(&e.id), &sample)
    })?;
    write_json(&root.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// A dataset directory with its manifest loaded.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let manifest = read_json(&root.join(MANIFEST_FILE))?;
        Ok(Self { root, manifest })
    }

    pub fn entry(&self, id: &str) -> Result<&ManifestEntry> {
        self.manifest
            .scenes
            .iter()
            .find(|e| e.id == id)
            .ok_or_else(|| Error::Dataset(format!("no scene {id} in {}", self.root.display())))
    }

    pub fn load(&self, entry: &ManifestEntry) -> Result<StoredScene> {
        let dir = self.root.join(&entry.id);
        Ok(StoredScene {
            entry: entry.clone(),
            scene: read_json(&dir.join(SCENE_FILE))?,
            color: read_color(&dir.join(COLOR_FILE))?,
            depth: read_depth(&dir.join(DEPTH_FILE))?,
            labels: read_grasps(&dir.join(LABELS_FILE))?,
        })
    }

    /// All scenes of one split in manifest order; an empty split is an error.
    pub fn load_split(&self, split: Split) -> Result<Vec<StoredScene>> {
        let scenes: Vec<StoredScene> =
            self.manifest.split(split).collect::<Vec<_>>().par_iter().map(|e| self.load(e)).collect::<Result<_>>()?;
        if scenes.is_empty() {
            return Err(Error::Dataset(format!("split {} is empty", split.name())));
        }
        Ok(scenes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_png_round_trip_is_millimeter_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut depth = DepthImage::filled(7, 5, 0.5234);
        depth.set(2, 3, 0.0);
        depth.set(4, 1, f32::NAN);
        let path = dir.path().join("d.png");
        write_depth(&path, &depth).unwrap();
        let back = read_depth(&path).unwrap();
        assert_eq!((back.width, back.height), (7, 5));
        assert_eq!(back.get(2, 3), 0.0);
        assert_eq!(back.get(4, 1), 0.0);
        assert!((back.get(0, 0) - 0.523).abs() < 1e-6);
    }

    #[test]
    fn plan_ids_are_unique_and_split_tagged() {
        let entries = DatasetPlan { train: 3, seen: 2, similar: 1, novel: 1 }.entries(9);
        assert_eq!(entries.len(), 7);
        assert_eq!(entries[3].id, "seen_0000");
        let ids: std::collections::BTreeSet<_> = entries.iter().map(|e| &e.id).collect();
        let seeds: std::collections::BTreeSet<_> = entries.iter().map(|e| e.seed).collect();
        assert_eq!((ids.len(), seeds.len()), (7, 7));
    }
}
