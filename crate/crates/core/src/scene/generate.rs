#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{penetrate, PrimitiveObject, Scene};
use crate::geometry::CameraIntrinsics;
use crate::shapes::{gjk_intersects, Primitive, Solid};
use crate::{Error, Result};

pub type Range = (f64, f64);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxFamily {
    pub x: Range,
    pub y: Range,
    pub z: Range,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderFamily {
    pub radius: Range,
    pub height: Range,
}

/// A distribution over object dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    Box(BoxFamily),
    Cylinder(CylinderFamily),
}

impl Family {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Primitive {
        let mut pick = |r: Range| if r.0 < r.1 { rng.random_range(r.0..=r.1) } else { r.0 };
        match *self {
            Family::Box(b) => Primitive::Box {
                extents: [pick(b.x), pick(b.y), pick(b.z)],
            },
            Family::Cylinder(c) => Primitive::Cylinder {
                radius: pick(c.radius),
                height: pick(c.height),
            },
        }
    }
}

/// Dataset split. `Train` and `Seen` share object families; `Similar` uses
/// held-out dimension ranges of the same families; `Novel` uses held-out
/// shape families (flat slabs and thin rods).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Seen,
    Similar,
    Novel,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Seen, Split::Similar, Split::Novel];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Seen => "seen",
            Split::Similar => "similar",
            Split::Novel => "novel",
        }
    }

    pub fn families(self) -> Vec<Family> {
        let bx = |x: Range, y: Range, z: Range| Family::Box(BoxFamily { x, y, z });
        let cyl = |radius: Range, height: Range| Family::Cylinder(CylinderFamily { radius, height });
        match self {
            Split::Train | Split::Seen => alloc::vec![
                bx((0.03, 0.055), (0.03, 0.055), (0.025, 0.07)),
                bx((0.03, 0.055), (0.03, 0.055), (0.012, 0.022)),
                cyl((0.015, 0.027), (0.015, 0.08)),
            ],
            Split::Similar => alloc::vec![
                bx((0.055, 0.07), (0.055, 0.07), (0.025, 0.08)),
                bx((0.055, 0.07), (0.055, 0.07), (0.012, 0.02)),
                cyl((0.027, 0.035), (0.02, 0.09)),
            ],
            Split::Novel => alloc::vec![
                bx((0.08, 0.12), (0.02, 0.035), (0.012, 0.03)),
                cyl((0.008, 0.013), (0.04, 0.10)),
            ],
        }
    }
}

impl core::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown split '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub intrinsics: CameraIntrinsics,
    /// Camera height above the plane, meters.
    pub camera_height: Range,
    /// Largest angle between the view axis and world `-z`, radians.
    pub max_tilt: f64,
    /// Object centers are drawn from `[-workspace, workspace]^2`.
    pub workspace: f64,
    /// Minimum horizontal gap between objects on the plane.
    pub min_gap: f64,
    pub stack_probability: f64,
    pub friction: Range,
    pub families: Vec<Family>,
    pub max_attempts: usize,
}

impl SceneConfig {
    pub fn for_split(split: Split) -> Self {
        Self {
            intrinsics: CameraIntrinsics::desk(),
            camera_height: (0.5, 0.6),
            max_tilt: 12.0_f64.to_radians(),
            workspace: 0.12,
            min_gap: 0.015,
            stack_probability: 0.2,
            friction: (0.3, 1.0),
            families: split.families(),
            max_attempts: 500,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        let ok = self.camera_height.0 > 0.2
            && self.camera_height.0 <= self.camera_height.1
            && (0.0..=super::MAX_VIEW_TILT).contains(&self.max_tilt)
            && self.workspace > 0.0
            && self.min_gap >= 0.0
            && (0.0..=1.0).contains(&self.stack_probability)
            && !self.families.is_empty()
            && self.max_attempts > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("invalid scene configuration".into()))
        }
    }
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self::for_split(Split::Train)
    }
}

pub fn generate_scene(seed: u64, n_objects: usize) -> Result<Scene> {
    generate_scene_with(seed, n_objects, &SceneConfig::default())
}

/// Distinct saturated hues for up to ten objects.
fn albedo(index: usize, base_hue: f64) -> [u8; 3] {
    let hue = (base_hue + index as f64 * 36.0) % 360.0;
    hsv_to_rgb(hue, 0.75, 0.9)
}

pub(crate) fn hsv_to_rgb(hue: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let h = hue / 60.0;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |t: f64| ((t + m) * 255.0).round() as u8;
    [q(r), q(g), q(b)]
}

fn camera_pose(rng: &mut ChaCha8Rng, cfg: &SceneConfig) -> Isometry3<f64> {
    let (lo, hi) = cfg.camera_height;
    let height = if lo < hi { rng.random_range(lo..=hi) } else { lo };
    let tilt = rng.random_range(0.0..=cfg.max_tilt);
    let azimuth = rng.random_range(0.0..2.0 * PI);
    let roll = rng.random_range(0.0..2.0 * PI);
    let view = Vector3::new(tilt.sin() * azimuth.cos(), tilt.sin() * azimuth.sin(), -tilt.cos());
    let position = -view * (height / tilt.cos());
    let world_x = Vector3::x();
    let x0 = (world_x - view * world_x.dot(&view)).normalize();
    let x_axis = x0 * roll.cos() + view.cross(&x0) * roll.sin();
    let y_axis = view.cross(&x_axis);
    let r = Matrix3::from_columns(&[x_axis, y_axis, view]);
    Isometry3::from_parts(
        Translation3::from(position),
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r)),
    )
}

fn inflated(shape: &Primitive, gap: f64) -> Primitive {
    match *shape {
        Primitive::Box { extents } => Primitive::Box {
            extents: [extents[0] + 2.0 * gap, extents[1] + 2.0 * gap, extents[2]],
        },
        Primitive::Cylinder { radius, height } => Primitive::Cylinder {
            radius: radius + gap,
            height,
        },
    }
}

/// Half footprint along the support's local x/y for an object sharing its yaw.
fn footprint(shape: &Primitive) -> (f64, f64) {
    match *shape {
        Primitive::Box { extents } => (extents[0] / 2.0, extents[1] / 2.0),
        Primitive::Cylinder { radius, .. } => (radius, radius),
    }
}

struct Placed {
    object: PrimitiveObject,
    /// Index of the supporting object, if stacked.
    on: Option<usize>,
    has_child: bool,
}

/// Try to stack `shape` axis-aligned on top of a free box resting on the
/// plane.
fn stacked_pose(rng: &mut ChaCha8Rng, placed: &[Placed], shape: &Primitive) -> Option<(usize, Isometry3<f64>)> {
    let (hx, hy) = footprint(shape);
    let supports: Vec<usize> = placed
        .iter()
        .enumerate()
        .filter(|(_, p)| p.on.is_none() && !p.has_child)
        .filter_map(|(i, p)| match p.object.shape {
            Primitive::Box { extents } if extents[0] / 2.0 >= hx && extents[1] / 2.0 >= hy => Some(i),
            _ => None,
        })
        .collect();
    if supports.is_empty() {
        return None;
    }
    let idx = supports[rng.random_range(0..supports.len())];
    let support = &placed[idx].object;
    let Primitive::Box { extents } = support.shape else {
        return None;
    };
    let mut slack = |half_support: f64, half: f64| {
        let s = half_support - half;
        if s > 0.0 { rng.random_range(-s..=s) } else { 0.0 }
    };
    let local = Vector3::new(
        slack(extents[0] / 2.0, hx),
        slack(extents[1] / 2.0, hy),
        extents[2] / 2.0 + shape.half_height(),
    );
    let pose = support.pose * Isometry3::translation(local.x, local.y, local.z);
    Some((idx, pose))
}

/// Objects rest on the plane or axis-aligned on top of a box; neighbors on
/// the plane keep `min_gap` between footprints.
pub fn generate_scene_with(seed: u64, n_objects: usize, cfg: &SceneConfig) -> Result<Scene> {
    if !(1..=10).contains(&n_objects) {
        return Err(Error::Config(format!("n_objects = {n_objects} outside 1..=10")));
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let camera = camera_pose(&mut rng, cfg);
    let base_hue = rng.random_range(0.0..360.0);
    let mut placed: Vec<Placed> = Vec::with_capacity(n_objects);
    for index in 0..n_objects {
        let mut attempts = 0;
        loop {
            attempts += 1;
            if attempts > cfg.max_attempts {
                return Err(Error::Generation(format!(
                    "could not place object {index} after {} attempts",
                    cfg.max_attempts
                )));
            }
            let family = cfg.families[rng.random_range(0..cfg.families.len())];
            let shape = family.sample(&mut rng);
            let stack = !placed.is_empty() && rng.random_bool(cfg.stack_probability);
            let (on, pose) = match stack.then(|| stacked_pose(&mut rng, &placed, &shape)).flatten() {
                Some((support, pose)) => (Some(support), pose),
                None => {
                    let x = rng.random_range(-cfg.workspace..=cfg.workspace);
                    let y = rng.random_range(-cfg.workspace..=cfg.workspace);
                    let yaw = rng.random_range(0.0..PI);
                    (None, Isometry3::new(Vector3::new(x, y, shape.half_height()), Vector3::z() * yaw))
                }
            };
            let candidate = Solid::new(inflated(&shape, cfg.min_gap), pose);
            let exact = Solid::new(shape, pose);
            let blocked = placed.iter().enumerate().any(|(i, p)| {
                if Some(i) == on {
                    penetrate(&exact, &p.object.solid())
                } else {
                    gjk_intersects(&candidate, &p.object.solid())
                }
            });
            if blocked {
                continue;
            }
            if let Some(s) = on {
                placed[s].has_child = true;
            }
            let (flo, fhi) = cfg.friction;
            placed.push(Placed {
                object: PrimitiveObject {
                    shape,
                    pose,
                    friction: if flo < fhi { rng.random_range(flo..=fhi) } else { flo },
                    albedo: albedo(index, base_hue),
                },
                on,
                has_child: false,
            });
            break;
        }
    }
    Ok(Scene {
        objects: placed.into_iter().map(|p| p.object).collect(),
        camera_pose: camera,
        intrinsics: cfg.intrinsics,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        assert_eq!(generate_scene(42, 6).unwrap(), generate_scene(42, 6).unwrap());
        assert_ne!(generate_scene(42, 6).unwrap(), generate_scene(43, 6).unwrap());
    }

    #[test]
    fn object_count_bounds() {
        assert!(generate_scene(1, 0).is_err());
        assert!(generate_scene(1, 11).is_err());
        assert_eq!(generate_scene(1, 1).unwrap().objects.len(), 1);
        assert_eq!(generate_scene(1, 10).unwrap().objects.len(), 10);
    }

    #[test]
    fn camera_constraints() {
        for seed in 0..50 {
            let s = generate_scene(seed, 3).unwrap();
            let h = s.camera_position().z;
            assert!((0.5 - 1e-12..=0.6 + 1e-12).contains(&h), "{h}");
            assert!(s.view_tilt() <= 12.0f64.to_radians() + 1e-9);
            let r = s.camera_pose.rotation.to_rotation_matrix();
            assert!((r.matrix().transpose() * r.matrix() - Matrix3::identity()).norm() < 1e-9);
        }
    }

    #[test]
    fn distinct_albedos() {
        let s = generate_scene(7, 10).unwrap();
        for i in 0..10 {
            for j in i + 1..10 {
                assert_ne!(s.objects[i].albedo, s.objects[j].albedo);
            }
        }
    }

    #[test]
    fn hsv_primaries() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [255, 0, 0]);
        assert_eq!(hsv_to_rgb(120.0, 1.0, 1.0), [0, 255, 0]);
        assert_eq!(hsv_to_rgb(240.0, 1.0, 1.0), [0, 0, 255]);
    }

    #[test]
    fn all_splits_generate() {
        for split in Split::ALL {
            let cfg = SceneConfig::for_split(split);
            for seed in 0..10 {
                generate_scene_with(seed, 8, &cfg).unwrap().validate().unwrap();
            }
            assert_eq!(split.name().parse::<Split>().unwrap(), split);
        }
    }
}
