//! Random flips and small rotations applied consistently to images and
//! labels.

#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{transform_label, LabelTransform, PlanarGrasp};
use super::preprocess::preprocess_depth;
use crate::image::{ColorImage, DepthImage};
use crate::scene::SceneSample;
use crate::Result;

/// Rotation choices, radians.
pub const ROTATIONS: [f64; 3] = [0.0, 15.0 * core::f64::consts::PI / 180.0, -15.0 * core::f64::consts::PI / 180.0];

/// One training example: color, preprocessed depth and scored labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub color: ColorImage,
    pub depth: DepthImage,
    pub labels: Vec<PlanarGrasp>,
}

impl TrainSample {
    /// Preprocess the sensor depth of a synthesized scene.
    pub fn from_scene(sample: &SceneSample) -> Result<Self> {
        Ok(Self { color: sample.color.clone(), depth: preprocess_depth(&sample.depth)?, labels: sample.labels.grasps() })
    }
}

/// The transforms chosen by [`augment`], in application order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentPlan {
    pub flip: bool,
    pub rotation: f64,
}

impl AugmentPlan {
    pub fn draw(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            flip: rng.random_bool(0.5),
            rotation: ROTATIONS[rng.random_range(0..ROTATIONS.len())],
        }
    }
}

/// Source position in the input image of output pixel `(x, y)`.
fn source(plan: &AugmentPlan, x: f64, y: f64, w: usize, h: usize) -> (f64, f64) {
    let (cx, cy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
    // Undo the rotation, then the flip.
    let (s, c) = plan.rotation.sin_cos();
    let (dx, dy) = (x - cx, y - cy);
    let (sx, sy) = (cx + c * dx + s * dy, cy - s * dx + c * dy);
    if plan.flip {
        ((w - 1) as f64 - sx, sy)
    } else {
        (sx, sy)
    }
}

fn clamp(v: f64, len: usize) -> f64 {
    v.clamp(0.0, (len - 1) as f64)
}

/// Bilinear color resampling with edge clamping.
fn warp_color(img: &ColorImage, plan: &AugmentPlan) -> ColorImage {
    let (w, h) = (img.width, img.height);
    let mut out = ColorImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = source(plan, x as f64, y as f64, w, h);
            let (sx, sy) = (clamp(sx, w), clamp(sy, h));
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            let (a, b, c, d) = (img.get(x0, y0), img.get(x1, y0), img.get(x0, y1), img.get(x1, y1));
            let mut rgb = [0u8; 3];
            for k in 0..3 {
                let top = a[k] as f64 * (1.0 - fx) + b[k] as f64 * fx;
                let bottom = c[k] as f64 * (1.0 - fx) + d[k] as f64 * fx;
                rgb[k] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
            }
            out.set(x, y, rgb);
        }
    }
    out
}

/// Nearest-neighbor depth resampling with edge clamping.
fn warp_depth(img: &DepthImage, plan: &AugmentPlan) -> DepthImage {
    let (w, h) = (img.width, img.height);
    let mut out = DepthImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = source(plan, x as f64, y as f64, w, h);
            out.set(x, y, img.at_nearest(sx, sy));
        }
    }
    out
}

/// Apply `plan` to a sample; labels whose centers leave the image are
/// dropped.
pub fn apply_plan(sample: &TrainSample, plan: &AugmentPlan) -> TrainSample {
    let (w, h) = (sample.color.width, sample.color.height);
    let identity = !plan.flip && plan.rotation == 0.0;
    if identity {
        return sample.clone();
    }
    let labels = sample
        .labels
        .iter()
        .filter_map(|g| {
            let g = if plan.flip { transform_label(g, LabelTransform::HorizontalFlip, w, h)? } else { *g };
            if plan.rotation == 0.0 {
                Some(g)
            } else {
                transform_label(&g, LabelTransform::Rotate(plan.rotation), w, h)
            }
        })
        .collect();
    TrainSample { color: warp_color(&sample.color, plan), depth: warp_depth(&sample.depth, plan), labels }
}

/// Flip with probability one half and rotate by a rotation drawn uniformly
/// from [`ROTATIONS`].
pub fn augment(sample: &TrainSample, seed: u64) -> TrainSample {
    apply_plan(sample, &AugmentPlan::draw(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::lift_planar_to_3d;
    use crate::metrics::{assess_grasp, GripperModel};
    use crate::scene::{label_pipeline, render, PrimitiveObject, Scene, ShadingConfig};
    use crate::shapes::Primitive;
    use alloc::vec;
    use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion};

    fn sample() -> TrainSample {
        let mut color = ColorImage::new(32, 24);
        let mut depth = DepthImage::filled(32, 24, 0.5);
        for y in 0..24 {
            for x in 0..32 {
                color.set(x, y, [(x * 7) as u8, (y * 9) as u8, 30]);
                depth.set(x, y, 0.5 + x as f32 * 1e-3);
            }
        }
        let labels = vec![
            PlanarGrasp::new(10.0, 8.0, 0.5, 12.0, 5.0, 0.3).with_score(0.9),
            PlanarGrasp::new(30.5, 2.0, 0.52, 8.0, 5.0, -1.1).with_score(0.4),
        ];
        TrainSample { color, depth, labels }
    }

    #[test]
    fn deterministic() {
        let s = sample();
        for seed in 0..8 {
            assert_eq!(augment(&s, seed), augment(&s, seed));
        }
    }

    #[test]
    fn double_flip_is_identity() {
        let s = sample();
        let plan = AugmentPlan { flip: true, rotation: 0.0 };
        let back = apply_plan(&apply_plan(&s, &plan), &plan);
        assert_eq!(back.color, s.color);
        assert_eq!(back.depth, s.depth);
        for (a, b) in back.labels.iter().zip(&s.labels) {
            assert!((a.u - b.u).abs() < 1e-12 && (a.theta - b.theta).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_drops_labels_leaving_the_image() {
        let s = sample();
        let out = apply_plan(&s, &AugmentPlan { flip: false, rotation: ROTATIONS[1] });
        assert!(out.labels.len() < s.labels.len());
    }

    #[test]
    fn flipped_labels_valid_in_mirror_scene() {
        // Overhead camera with the principal point at the image center, so
        // a horizontal image flip is the mirror x -> -x of the scene.
        let r = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
        let object = |x: f64, y: f64, yaw: f64, shape: Primitive, h: f64| PrimitiveObject {
            shape,
            pose: Isometry3::from_parts(
                Translation3::new(x, y, h / 2.0),
                UnitQuaternion::from_euler_angles(0.0, 0.0, yaw),
            ),
            friction: 0.5,
            albedo: [200, 10, 10],
        };
        let cube = Primitive::Box { extents: [0.04, 0.03, 0.03] };
        let cyl = Primitive::Cylinder { radius: 0.02, height: 0.05 };
        let scene = Scene {
            objects: vec![
                object(0.05, 0.02, 0.4, cube, 0.03),
                object(-0.05, 0.02, -0.4, cube, 0.03),
                object(0.0, -0.05, 0.0, cyl, 0.05),
            ],
            camera_pose: Isometry3::from_parts(
                Translation3::new(0.0, 0.0, 0.55),
                UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r)),
            ),
            intrinsics: crate::geometry::CameraIntrinsics::desk(),
            seed: 3,
        };
        let labels = label_pipeline(&scene).grasps();
        assert!(!labels.is_empty());
        let rendering = render(&scene, &ShadingConfig::default());
        let s = TrainSample { color: rendering.color, depth: rendering.depth, labels };
        let flipped = apply_plan(&s, &AugmentPlan { flip: true, rotation: 0.0 });
        assert_eq!(flipped.labels.len(), s.labels.len());
        let gripper = GripperModel::default();
        for g in &flipped.labels {
            let g3 = lift_planar_to_3d(g, &scene.intrinsics).unwrap();
            assert!(assess_grasp(&g3, &scene, &gripper).is_some(), "flipped label {g:?} fails");
        }
    }
}
