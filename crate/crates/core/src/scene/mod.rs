//! Procedural table-top scenes built from boxes and cylinders, their
//! rendering, simulated sensor corruption, and grasp label construction.

#[allow(unused_imports)]
use num_traits::Float as _;
mod generate;
mod labels;
mod noise;
mod render;
mod sampler;
mod synth;

pub use generate::{
    generate_scene, generate_scene_with, BoxFamily, CylinderFamily, Family, SceneConfig, Split,
};
pub use labels::{label_candidates, label_pipeline, label_pipeline_with, score_from_mu, GraspLabel, GraspLabelSet, LabelConfig};
pub use noise::{corrupt_depth, DepthNoise};
pub use render::{render, render_color, render_depth, Rendering, ShadingConfig, NO_HIT, PLANE_ID};
pub use sampler::{
    sample_antipodal_candidates, sample_antipodal_grasps_6dof, AntipodalCandidate, SamplerConfig,
};
pub use synth::{synthesize, SceneSample, SynthConfig};

use alloc::vec::Vec;

use nalgebra::{Isometry3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraIntrinsics, Grasp3D};
use crate::shapes::{gjk_intersects, Primitive, Solid};
use crate::{Error, Result};

/// A rigid primitive resting in the scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveObject {
    pub shape: Primitive,
    /// World-from-object transform; the primitive is centered on its origin.
    pub pose: Isometry3<f64>,
    /// Surface friction coefficient. Informational: grasp quality is judged
    /// on the evaluation grid, not against this value.
    pub friction: f64,
    pub albedo: [u8; 3],
}

impl PrimitiveObject {
    pub fn solid(&self) -> Solid {
        Solid::new(self.shape, self.pose)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.shape.is_valid() {
            return Err(Error::InvalidGeometry("primitive dimensions must be positive"));
        }
        let r = self.pose.rotation.to_rotation_matrix();
        if (r.matrix().transpose() * r.matrix() - nalgebra::Matrix3::identity()).norm() > 1e-9 {
            return Err(Error::InvalidGeometry("object rotation is not orthonormal"));
        }
        Ok(())
    }
}

/// Objects on the plane `z = 0` observed by one pinhole camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<PrimitiveObject>,
    /// World-from-camera transform. The camera looks along its `+z`.
    pub camera_pose: Isometry3<f64>,
    pub intrinsics: CameraIntrinsics,
    pub seed: u64,
}

/// Largest allowed angle between the view axis and world `-z`, radians.
pub const MAX_VIEW_TILT: f64 = 15.0 * core::f64::consts::PI / 180.0;

impl Scene {
    pub fn solids(&self) -> Vec<Solid> {
        self.objects.iter().map(PrimitiveObject::solid).collect()
    }

    /// Camera optical axis in world coordinates.
    pub fn view_axis(&self) -> Vector3<f64> {
        self.camera_pose.rotation * Vector3::z()
    }

    pub fn camera_position(&self) -> Vector3<f64> {
        self.camera_pose.translation.vector
    }

    /// Angle between the view axis and world `-z`.
    pub fn view_tilt(&self) -> f64 {
        (-self.view_axis().z).clamp(-1.0, 1.0).acos()
    }

    pub fn grasp_to_world(&self, g: &Grasp3D) -> Grasp3D {
        let r = self.camera_pose.rotation.to_rotation_matrix();
        g.transformed(r.matrix(), &self.camera_pose.translation.vector)
    }

    pub fn grasp_to_camera(&self, g: &Grasp3D) -> Grasp3D {
        let inv = self.camera_pose.inverse();
        let r = inv.rotation.to_rotation_matrix();
        g.transformed(r.matrix(), &inv.translation.vector)
    }

    /// Check the structural invariants: valid objects above the plane, no
    /// interpenetration, a downward-looking camera above the plane.
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if self.view_tilt() > MAX_VIEW_TILT + 1e-9 {
            return Err(Error::InvalidGeometry("camera tilt exceeds 15 degrees"));
        }
        if self.camera_position().z <= 0.0 {
            return Err(Error::InvalidGeometry("camera below the plane"));
        }
        let solids = self.solids();
        for (o, s) in self.objects.iter().zip(&solids) {
            o.validate()?;
            if s.min_z() < -1e-9 {
                return Err(Error::InvalidGeometry("object penetrates the plane"));
            }
        }
        for i in 0..solids.len() {
            for j in i + 1..solids.len() {
                if penetrate(&solids[i], &solids[j]) {
                    return Err(Error::InvalidGeometry("objects interpenetrate"));
                }
            }
        }
        Ok(())
    }
}

/// Overlap beyond face contact: stacked objects share a face, so both
/// solids are shrunk by a small margin before testing.
pub(crate) fn penetrate(a: &Solid, b: &Solid) -> bool {
    gjk_intersects(&shrunk(a, 1e-6), &shrunk(b, 1e-6))
}

fn shrunk(s: &Solid, by: f64) -> Solid {
    let primitive = match s.primitive {
        Primitive::Box { extents } => Primitive::Box {
            extents: extents.map(|e| (e - 2.0 * by).max(by)),
        },
        Primitive::Cylinder { radius, height } => Primitive::Cylinder {
            radius: (radius - by).max(by),
            height: (height - 2.0 * by).max(by),
        },
    };
    Solid::new(primitive, s.pose)
}
