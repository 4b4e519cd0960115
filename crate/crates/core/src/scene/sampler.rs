#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PrimitiveObject;
use crate::geometry::Grasp3D;
use crate::metrics::Contact;
use crate::shapes::Primitive;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub max_width: f64,
    /// Added to the contact distance to get the jaw opening.
    pub clearance: f64,
    /// Largest deviation of the closing axis from the inward normal, radians.
    pub max_perturbation: f64,
    /// Finger extent across the closing axis, stored as `Grasp3D::height`.
    pub finger_width: f64,
    /// Contacts keep this distance from the bottom / top of the object.
    pub bottom_margin: f64,
    pub top_margin: f64,
    /// Sampling attempts allowed per requested grasp.
    pub attempts_per_grasp: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            max_width: 0.10,
            clearance: 0.005,
            max_perturbation: 35.0_f64.to_radians(),
            finger_width: 0.02,
            bottom_margin: 0.003,
            top_margin: 0.004,
            attempts_per_grasp: 20,
        }
    }
}

/// A world-frame grasp together with the contacts it was built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AntipodalCandidate {
    pub grasp: Grasp3D,
    pub contacts: [Contact; 2],
}

pub fn sample_antipodal_grasps_6dof(obj: &PrimitiveObject, n: usize, seed: u64) -> Vec<Grasp3D> {
    sample_antipodal_candidates(obj, n, seed, &SamplerConfig::default())
        .into_iter()
        .map(|c| c.grasp)
        .collect()
}

/// Random unit vector orthogonal to unit `v`.
fn orthogonal(v: &Vector3<f64>, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let helper = if v.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let a = v.cross(&helper).normalize();
    let b = v.cross(&a);
    let phi = rng.random_range(0.0..2.0 * PI);
    a * phi.cos() + b * phi.sin()
}

/// Point and outward normal on a side face (box) or the lateral surface
/// (cylinder), in the object frame.
fn side_point(shape: &Primitive, z: f64, rng: &mut ChaCha8Rng) -> (Vector3<f64>, Vector3<f64>) {
    match *shape {
        Primitive::Box { extents } => {
            let [ex, ey, _] = extents;
            // Faces normal to x have area ey*h, faces normal to y ex*h.
            let on_x = rng.random_range(0.0..ex + ey) < ey;
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            if on_x {
                let y = rng.random_range(-ey / 2.0..=ey / 2.0);
                (Vector3::new(sign * ex / 2.0, y, z), Vector3::x() * sign)
            } else {
                let x = rng.random_range(-ex / 2.0..=ex / 2.0);
                (Vector3::new(x, sign * ey / 2.0, z), Vector3::y() * sign)
            }
        }
        Primitive::Cylinder { radius, .. } => {
            let a = rng.random_range(0.0..2.0 * PI);
            let n = Vector3::new(a.cos(), a.sin(), 0.0);
            (n * radius + Vector3::z() * z, n)
        }
    }
}

/// Parallel-jaw candidates: pick a point on a side surface, close along the
/// perturbed inward normal, take the exit point of that line as the second
/// contact, and choose an approach orthogonal to the closing axis from the
/// downward-facing half circle.
pub fn sample_antipodal_candidates(
    obj: &PrimitiveObject,
    n: usize,
    seed: u64,
    cfg: &SamplerConfig,
) -> Vec<AntipodalCandidate> {
    let mut out = Vec::with_capacity(n);
    if !obj.shape.is_valid() {
        return out;
    }
    let half = obj.shape.half_height();
    let (z_lo, z_hi) = (-half + cfg.bottom_margin, half - cfg.top_margin);
    if z_lo > z_hi {
        return out;
    }
    let solid = obj.solid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n * cfg.attempts_per_grasp {
        if out.len() == n {
            break;
        }
        let z = rng.random_range(z_lo..=z_hi);
        let (p_local, n_local) = side_point(&obj.shape, z, &mut rng);
        let point = obj.pose.transform_point(&Point3::from(p_local)).coords;
        let normal = obj.pose.rotation * n_local;
        let tilt = rng.random_range(0.0..=cfg.max_perturbation);
        let axis = orthogonal(&normal, &mut rng);
        let closing = (-normal * tilt.cos() + axis * tilt.sin()).normalize();
        let Some(span) = solid.line_span(&point, &closing) else { continue };
        // Both contacts on opposing side surfaces: not on a cap, not across
        // a box corner.
        let up = obj.pose.rotation * Vector3::z();
        if span.exit.normal.dot(&up).abs() > 0.5 || span.exit.normal.dot(&span.enter.normal) > -0.25 {
            continue;
        }
        let chord = span.exit.t - span.enter.t;
        if !(chord > 1e-6) {
            continue;
        }
        let width = chord + cfg.clearance;
        if width > cfg.max_width {
            continue;
        }
        let entry = point + closing * span.enter.t;
        let exit = point + closing * span.exit.t;
        let down = -Vector3::z();
        let p1 = down - closing * down.dot(&closing);
        if p1.norm() < 1e-6 {
            continue;
        }
        let p1 = p1.normalize();
        let p2 = closing.cross(&p1);
        let beta = rng.random_range(-PI / 2.0..=PI / 2.0);
        let approach = p1 * beta.cos() + p2 * beta.sin();
        out.push(AntipodalCandidate {
            grasp: Grasp3D::from_axes(approach, closing, (entry + exit) / 2.0, width, cfg.finger_width, 0.0),
            contacts: [
                Contact::new(entry, span.enter.normal),
                Contact::new(exit, span.exit.normal),
            ],
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Isometry3;

    fn resting(shape: Primitive, yaw: f64) -> PrimitiveObject {
        PrimitiveObject {
            shape,
            pose: Isometry3::new(Vector3::new(0.01, -0.02, shape.half_height()), Vector3::z() * yaw),
            friction: 0.5,
            albedo: [0; 3],
        }
    }

    fn straight() -> SamplerConfig {
        SamplerConfig { max_perturbation: 0.0, ..Default::default() }
    }

    #[test]
    fn cube_side_pinch_width() {
        let cube = resting(Primitive::Box { extents: [0.04; 3] }, 0.4);
        let c = sample_antipodal_candidates(&cube, 50, 1, &straight());
        assert_eq!(c.len(), 50);
        for cand in c {
            assert!((cand.grasp.width - 0.045).abs() < 1e-12);
            assert!(cand.grasp.approach().z <= 1e-12);
        }
    }

    #[test]
    fn cylinder_diametral_width() {
        let cyl = resting(Primitive::Cylinder { radius: 0.03, height: 0.05 }, 0.0);
        for cand in sample_antipodal_candidates(&cyl, 50, 2, &straight()) {
            assert!((cand.grasp.width - 0.065).abs() < 1e-12);
        }
    }

    #[test]
    fn too_wide_gives_nothing() {
        let big = resting(Primitive::Box { extents: [0.2, 0.2, 0.05] }, 0.0);
        assert!(sample_antipodal_grasps_6dof(&big, 20, 3).is_empty());
    }

    #[test]
    fn frames_are_orthonormal_and_contacts_bracket_center() {
        let cyl = resting(Primitive::Cylinder { radius: 0.02, height: 0.06 }, 0.0);
        for cand in sample_antipodal_candidates(&cyl, 200, 4, &SamplerConfig::default()) {
            let r = cand.grasp.rotation;
            assert!((r.transpose() * r - nalgebra::Matrix3::identity()).norm() < 1e-9);
            let mid = (cand.contacts[0].point + cand.contacts[1].point) / 2.0;
            assert!((mid - cand.grasp.translation).norm() < 1e-12);
            assert!(cand.grasp.width <= 0.10);
        }
    }
}
