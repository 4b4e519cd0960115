#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::sampler::{sample_antipodal_candidates, SamplerConfig};
use super::Scene;
use crate::geometry::{
    grasp_nms_indices, lift_planar_to_3d, project_3d_to_planar, Grasp3D, NmsThresholds, PlanarGrasp,
};
use crate::metrics::{assess_grasp, friction_grid, min_friction, GripperModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    /// Candidates whose approach deviates from the view axis by this angle or
    /// more are discarded, radians.
    pub max_approach_angle: f64,
    pub samples_per_object: usize,
    pub sampler: SamplerConfig,
    pub gripper: GripperModel,
    pub nms: NmsThresholds,
    pub friction_grid: Vec<f64>,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            max_approach_angle: 15.0_f64.to_radians(),
            samples_per_object: 1500,
            sampler: SamplerConfig::default(),
            gripper: GripperModel::default(),
            nms: NmsThresholds::default(),
            friction_grid: friction_grid(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspLabel {
    /// Score is always present and equals `min(1.1 - mu_min, 1)`.
    pub grasp: PlanarGrasp,
    /// Index into `Scene::objects`.
    pub object: usize,
    pub mu_min: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraspLabelSet {
    pub labels: Vec<GraspLabel>,
}

impl GraspLabelSet {
    pub fn grasps(&self) -> Vec<PlanarGrasp> {
        self.labels.iter().map(|l| l.grasp).collect()
    }
}

/// Score for a grasp first closing at friction `mu_min`.
pub fn score_from_mu(mu_min: f64) -> f64 {
    (1.1 - mu_min).min(1.0)
}

fn object_seed(scene_seed: u64, index: usize) -> u64 {
    scene_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((index as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Snap a world-frame grasp's approach to the view axis and re-derive its
/// center and opening from the closing line through the old center.
fn snap(g: &Grasp3D, scene: &Scene, object: usize, cfg: &LabelConfig) -> Option<Grasp3D> {
    let view = scene.view_axis();
    let closing = g.closing() - view * g.closing().dot(&view);
    if closing.norm() < 1e-9 {
        return None;
    }
    let closing = closing.normalize();
    let span = scene.objects[object].solid().line_span(&g.translation, &closing)?;
    let entry = g.translation + closing * span.enter.t;
    let exit = g.translation + closing * span.exit.t;
    let width = (exit - entry).norm() + cfg.sampler.clearance;
    (width <= cfg.gripper.max_opening).then(|| {
        Grasp3D::from_axes(view, closing, (entry + exit) / 2.0, width, g.height, 0.0)
    })
}

/// All candidate labels that survive filtering, snapping and re-evaluation,
/// before de-duplication.
pub fn label_candidates(scene: &Scene, cfg: &LabelConfig) -> Vec<GraspLabel> {
    let cam = &scene.intrinsics;
    let view = scene.view_axis();
    let cos_limit = cfg.max_approach_angle.cos();
    let mut out = Vec::new();
    for (index, obj) in scene.objects.iter().enumerate() {
        let seed = object_seed(scene.seed, index);
        for cand in sample_antipodal_candidates(obj, cfg.samples_per_object, seed, &cfg.sampler) {
            // Strictly within the threshold angle.
            if !(cand.grasp.approach().dot(&view) > cos_limit) {
                continue;
            }
            let Some(snapped) = snap(&cand.grasp, scene, index, cfg) else { continue };
            let Ok(planar) = project_3d_to_planar(&scene.grasp_to_camera(&snapped), cam) else {
                continue;
            };
            let inside = planar.u >= 0.0
                && planar.v >= 0.0
                && planar.u <= (cam.width - 1) as f64
                && planar.v <= (cam.height - 1) as f64;
            if !inside {
                continue;
            }
            // Judge the label exactly as it will be read back: lifted from
            // its planar form.
            let Ok(lifted) = lift_planar_to_3d(&planar, cam) else { continue };
            let Some(pair) = assess_grasp(&lifted, scene, &cfg.gripper) else { continue };
            if pair.object != index {
                continue;
            }
            let Ok(Some(mu_min)) = min_friction(&pair.first, &pair.second, &cfg.friction_grid) else {
                continue;
            };
            out.push(GraspLabel {
                grasp: planar.with_score(score_from_mu(mu_min)),
                object: index,
                mu_min,
            });
        }
    }
    out
}

pub fn label_pipeline(scene: &Scene) -> GraspLabelSet {
    label_pipeline_with(scene, &LabelConfig::default())
}

/// Candidates de-duplicated with grasp-NMS, highest score first.
pub fn label_pipeline_with(scene: &Scene, cfg: &LabelConfig) -> GraspLabelSet {
    let candidates = label_candidates(scene, cfg);
    let grasps: Vec<PlanarGrasp> = candidates.iter().map(|l| l.grasp).collect();
    let keep = grasp_nms_indices(&grasps, &cfg.nms).expect("labels always carry scores");
    GraspLabelSet {
        labels: keep.into_iter().map(|i| candidates[i]).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraIntrinsics;
    use crate::metrics::{collision_check, compute_contacts, force_closure};
    use crate::scene::{generate_scene, PrimitiveObject};
    use crate::shapes::Primitive;
    use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion, Vector3};

    fn overhead(objects: Vec<PrimitiveObject>, seed: u64) -> Scene {
        let r = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
        Scene {
            objects,
            camera_pose: Isometry3::from_parts(
                Translation3::new(0.0, 0.0, 0.5),
                UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r)),
            ),
            intrinsics: CameraIntrinsics::desk(),
            seed,
        }
    }

    fn cube(x: f64, y: f64, side: f64, height: f64) -> PrimitiveObject {
        PrimitiveObject {
            shape: Primitive::Box { extents: [side, side, height] },
            pose: Isometry3::translation(x, y, height / 2.0),
            friction: 0.5,
            albedo: [200, 0, 0],
        }
    }

    #[test]
    fn score_formula() {
        assert_eq!(score_from_mu(0.1), 1.0);
        assert_eq!(score_from_mu(0.4), 1.1 - 0.4);
    }

    #[test]
    fn isolated_cube_best_label_is_perfect() {
        let scene = overhead(alloc::vec![cube(0.0, 0.0, 0.04, 0.04)], 1);
        let labels = label_pipeline(&scene);
        assert!(!labels.labels.is_empty());
        let best = labels.labels[0];
        assert_eq!(best.mu_min, 0.1);
        assert_eq!(best.grasp.score, Some(1.0));
    }

    #[test]
    fn emitted_labels_reverify() {
        for seed in 0..3 {
            let scene = generate_scene(seed, 6).unwrap();
            let cfg = LabelConfig::default();
            let set = label_pipeline_with(&scene, &cfg);
            assert!(!set.labels.is_empty());
            for l in &set.labels {
                let g = lift_planar_to_3d(&l.grasp, &scene.intrinsics).unwrap();
                assert!(!collision_check(&g, &scene, &cfg.gripper));
                let pair = compute_contacts(&g, &scene).unwrap();
                assert!(force_closure(&pair.first, &pair.second, l.mu_min).unwrap());
                assert_eq!(l.grasp.score, Some(score_from_mu(l.mu_min)));
                let s = l.grasp.score.unwrap();
                assert!(s > 0.0 && s <= 1.0);
            }
        }
    }

    #[test]
    fn tighter_angle_never_adds_labels() {
        let scene = generate_scene(11, 5).unwrap();
        let wide = label_candidates(&scene, &LabelConfig::default());
        let narrow = label_candidates(
            &scene,
            &LabelConfig { max_approach_angle: 8.0_f64.to_radians(), ..Default::default() },
        );
        assert!(narrow.len() <= wide.len());
        for l in &narrow {
            assert!(wide.contains(l));
        }
    }

    #[test]
    fn neighbor_blocking_removes_labels() {
        // A low cube flanked closely by two tall walls along x: pinches
        // closing along x would sweep a finger through a wall.
        let lone = overhead(alloc::vec![cube(0.0, 0.0, 0.03, 0.02)], 5);
        let walls = PrimitiveObject {
            shape: Primitive::Box { extents: [0.012, 0.08, 0.08] },
            pose: Isometry3::translation(0.024, 0.0, 0.04),
            friction: 0.5,
            albedo: [0, 200, 0],
        };
        let mut other = walls;
        other.pose = Isometry3::translation(-0.024, 0.0, 0.04);
        let crowded = overhead(alloc::vec![cube(0.0, 0.0, 0.03, 0.02), walls, other], 5);
        let along_x = |set: &GraspLabelSet| {
            set.labels
                .iter()
                .filter(|l| l.object == 0 && l.grasp.theta.cos().abs() > 0.9)
                .count()
        };
        assert!(along_x(&label_pipeline(&lone)) > 0);
        assert_eq!(along_x(&label_pipeline(&crowded)), 0);
        let _ = Vector3::<f64>::zeros();
    }
}
