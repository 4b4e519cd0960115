#[allow(unused_imports)]
use num_traits::Float as _;

use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::contact::Contact;
use crate::geometry::Grasp3D;
use crate::scene::Scene;
use crate::shapes::{gjk_intersects, Primitive, Solid};
use crate::{Error, Result};

/// Parallel-jaw collision model. Lengths in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperModel {
    pub max_opening: f64,
    /// Finger extent along the approach axis.
    pub finger_length: f64,
    /// Finger extent along the closing axis.
    pub finger_thickness: f64,
    /// Finger extent along the binormal.
    pub finger_width: f64,
    /// Free space required between the finger base and anything grasped.
    pub palm_clearance: f64,
    pub palm_thickness: f64,
    /// Distance the hand travels along the approach before closing.
    pub approach_offset: f64,
    /// Inner finger faces are shrunk by this much against the grasped object
    /// so the intended contact patches do not count as collisions.
    pub contact_exclusion: f64,
}

impl Default for GripperModel {
    fn default() -> Self {
        Self {
            max_opening: 0.10,
            finger_length: 0.06,
            finger_thickness: 0.01,
            finger_width: 0.02,
            palm_clearance: 0.005,
            palm_thickness: 0.01,
            approach_offset: 0.05,
            contact_exclusion: 0.003,
        }
    }
}

impl GripperModel {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.max_opening,
            self.finger_length,
            self.finger_thickness,
            self.finger_width,
            self.palm_clearance,
            self.palm_thickness,
            self.approach_offset,
            self.contact_exclusion,
        ];
        if all.iter().all(|&x| x > 0.0 && x.is_finite()) && self.palm_clearance < self.finger_length {
            Ok(())
        } else {
            Err(Error::Config("gripper dimensions must be positive and finite".into()))
        }
    }
}

/// Contacts of both fingers on one object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPair {
    pub first: Contact,
    pub second: Contact,
    /// Index into `Scene::objects`.
    pub object: usize,
}

/// Close the jaws of a camera-frame grasp: each fingertip, starting at
/// `+-width/2` along the closing axis, travels inward until it meets a
/// surface.
pub fn compute_contacts(g: &Grasp3D, scene: &Scene) -> Option<ContactPair> {
    let gw = scene.grasp_to_world(g);
    let solids = scene.solids();
    let center = gw.translation;
    let closing = gw.closing();
    let half = gw.width / 2.0;
    let tip1 = center - closing * half;
    let tip2 = center + closing * half;
    if solids.iter().any(|s| s.contains(&tip1, 0.0) || s.contains(&tip2, 0.0)) {
        return None;
    }
    let first_hit = |origin: &Vector3<f64>, dir: &Vector3<f64>| {
        solids
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.ray_entry(origin, dir).map(|c| (i, c)))
            .filter(|(_, c)| c.t <= gw.width)
            .min_by(|a, b| a.1.t.total_cmp(&b.1.t))
    };
    let (i1, h1) = first_hit(&tip1, &closing)?;
    let (i2, h2) = first_hit(&tip2, &-closing)?;
    if i1 != i2 {
        return None;
    }
    Some(ContactPair {
        first: Contact::new(tip1 + closing * h1.t, h1.normal),
        second: Contact::new(tip2 - closing * h2.t, h2.normal),
        object: i1,
    })
}

/// World-frame collision volumes of the two fingers and the palm for a
/// camera-frame grasp, each swept back along the approach by
/// `approach_offset`. With `shrink`, the finger inner faces are pulled back
/// by `contact_exclusion`. Order: finger at `-closing`, finger at
/// `+closing`, palm.
pub fn gripper_solids(g: &Grasp3D, scene: &Scene, gripper: &GripperModel, shrink: bool) -> [Solid; 3] {
    let gw = scene.grasp_to_world(g);
    let frame = Matrix3::from_columns(&[gw.approach(), gw.closing(), gw.binormal()]);
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(frame));
    let place = |local_center: Vector3<f64>, extents: [f64; 3]| {
        let t = gw.translation + frame * local_center;
        Solid::new(
            Primitive::Box { extents },
            Isometry3::from_parts(Translation3::from(t), rotation),
        )
    };
    let half = gw.width / 2.0;
    let reach = gripper.finger_length + gripper.approach_offset;
    let inner = if shrink { half + gripper.contact_exclusion } else { half };
    let outer = half + gripper.finger_thickness;
    let finger = |sign: f64| {
        place(
            Vector3::new(-reach / 2.0, sign * (inner + outer) / 2.0, 0.0),
            [reach, outer - inner, gripper.finger_width],
        )
    };
    // The palm spans from the finger base (less the clearance) back by its
    // thickness plus the approach sweep.
    let palm_near = -(gripper.finger_length - gripper.palm_clearance);
    let palm_far = -(gripper.finger_length + gripper.palm_thickness + gripper.approach_offset);
    let palm = place(
        Vector3::new((palm_near + palm_far) / 2.0, 0.0, 0.0),
        [palm_near - palm_far, 2.0 * outer, gripper.finger_width],
    );
    [finger(-1.0), finger(1.0), palm]
}

/// `true` if the gripper hits the plane or any object. The object the
/// fingers close on (if any) is tested against the contact-excluded fingers.
pub fn collision_check(g: &Grasp3D, scene: &Scene, gripper: &GripperModel) -> bool {
    let grasped = compute_contacts(g, scene).map(|c| c.object);
    collision_check_excluding(g, scene, gripper, grasped)
}

/// As [`collision_check`] with an explicit grasped object.
pub fn collision_check_excluding(
    g: &Grasp3D,
    scene: &Scene,
    gripper: &GripperModel,
    grasped: Option<usize>,
) -> bool {
    let full = gripper_solids(g, scene, gripper, false);
    if full.iter().any(|s| s.min_z() < 0.0) {
        return true;
    }
    let shrunk = grasped.map(|_| gripper_solids(g, scene, gripper, true));
    scene.objects.iter().enumerate().any(|(i, obj)| {
        let solid = obj.solid();
        let parts: &[Solid; 3] = match (&shrunk, grasped) {
            (Some(s), Some(j)) if j == i => s,
            _ => &full,
        };
        parts.iter().any(|p| gjk_intersects(p, &solid))
    })
}

/// Geometric validity of a camera-frame grasp: opening within range,
/// contacts on one object, and no collision. Returns the contacts.
pub fn assess_grasp(g: &Grasp3D, scene: &Scene, gripper: &GripperModel) -> Option<ContactPair> {
    if !(g.width > 0.0 && g.width <= gripper.max_opening) {
        return None;
    }
    let pair = compute_contacts(g, scene)?;
    if (pair.first.point - pair.second.point).norm() <= 1e-9 {
        return None;
    }
    (!collision_check_excluding(g, scene, gripper, Some(pair.object))).then_some(pair)
}
