#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Scene;
use crate::image::{ColorImage, DepthImage};

/// ID-buffer value for the ground plane.
pub const PLANE_ID: u16 = 0;
/// ID-buffer value for rays that hit nothing within the sensor range.
pub const NO_HIT: u16 = u16::MAX;

/// Sensor range; depths outside it render as holes.
pub const MIN_RANGE: f64 = 0.2;
pub const MAX_RANGE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadingConfig {
    pub plane_albedo: [u8; 3],
    /// Direction toward the light, world frame.
    pub light: [f64; 3],
    pub ambient: f64,
    pub diffuse: f64,
    /// Per-channel uniform integer noise amplitude.
    pub noise: u8,
}

impl Default for ShadingConfig {
    fn default() -> Self {
        Self {
            plane_albedo: [150, 150, 150],
            light: [0.3, 0.2, 1.0],
            ambient: 0.45,
            diffuse: 0.55,
            noise: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendering {
    pub depth: DepthImage,
    pub color: ColorImage,
    /// Per-pixel hit: [`PLANE_ID`], object index + 1, or [`NO_HIT`].
    pub ids: Vec<u16>,
}

pub fn render_depth(scene: &Scene) -> DepthImage {
    render(scene, &ShadingConfig::default()).depth
}

pub fn render_color(scene: &Scene) -> ColorImage {
    render(scene, &ShadingConfig::default()).color
}

/// Nearest-hit ray casting through each pixel center. Depth is the camera
/// `z` of the hit point.
pub fn render(scene: &Scene, shading: &ShadingConfig) -> Rendering {
    let cam = &scene.intrinsics;
    let (w, h) = (cam.width, cam.height);
    let solids = scene.solids();
    let origin = scene.camera_position();
    let rot = scene.camera_pose.rotation;
    let light = Vector3::from(shading.light).normalize();
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed ^ 0x5eed_c010_u64);
    let mut depth = DepthImage::new(w, h);
    let mut color = ColorImage::new(w, h);
    let mut ids = vec![NO_HIT; w * h];
    for y in 0..h {
        for x in 0..w {
            // Unit camera-z component, so the ray parameter equals depth.
            let dir = rot * cam.ray(x as f64, y as f64);
            let mut best: Option<(f64, u16, Vector3<f64>)> = None;
            if dir.z < 0.0 {
                let t = -origin.z / dir.z;
                if t > 0.0 {
                    best = Some((t, PLANE_ID, Vector3::z()));
                }
            }
            for (i, s) in solids.iter().enumerate() {
                if let Some(c) = s.ray_entry(&origin, &dir) {
                    if best.is_none_or(|b| c.t < b.0) {
                        best = Some((c.t, i as u16 + 1, c.normal));
                    }
                }
            }
            let Some((t, id, normal)) = best else { continue };
            if !(MIN_RANGE..=MAX_RANGE).contains(&t) {
                continue;
            }
            depth.set(x, y, t as f32);
            ids[y * w + x] = id;
            let albedo = if id == PLANE_ID {
                shading.plane_albedo
            } else {
                scene.objects[(id - 1) as usize].albedo
            };
            let shade = shading.ambient + shading.diffuse * normal.dot(&light).max(0.0);
            let amp = shading.noise as i32;
            let rgb = albedo.map(|a| {
                let jitter = if amp > 0 { rng.random_range(-amp..=amp) } else { 0 };
                ((a as f64 * shade).round() as i32 + jitter).clamp(0, 255) as u8
            });
            color.set(x, y, rgb);
        }
    }
    Rendering { depth, color, ids }
}
