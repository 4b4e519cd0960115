//! Scene synthesis checked against independent oracles.

use dgcan_core::geometry::CameraIntrinsics;
use dgcan_core::scene::{
    generate_scene, render, sample_antipodal_candidates, PrimitiveObject, SamplerConfig, Scene, ShadingConfig, NO_HIT,
};
use dgcan_core::shapes::Primitive;
use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn looking_down(height: f64) -> Isometry3<f64> {
    // Camera z along world -z, camera x along world x.
    let r = Matrix3::from_columns(&[Vector3::x(), -Vector3::y(), -Vector3::z()]);
    Isometry3::from_parts(
        Translation3::new(0.0, 0.0, height),
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r)),
    )
}

/// Nearest positive root of the ray against an upright cylinder standing on
/// the plane at `(cx, cy)`, including its top cap, or the plane itself.
fn cylinder_oracle(o: Vector3<f64>, d: Vector3<f64>, cx: f64, cy: f64, radius: f64, height: f64) -> f64 {
    let mut best = f64::INFINITY;
    // Lateral surface: |(o + t d - c)_xy| = radius.
    let (px, py) = (o.x - cx, o.y - cy);
    let a = d.x * d.x + d.y * d.y;
    let b = 2.0 * (px * d.x + py * d.y);
    let c = px * px + py * py - radius * radius;
    let disc = b * b - 4.0 * a * c;
    if a > 0.0 && disc >= 0.0 {
        for t in [(-b - disc.sqrt()) / (2.0 * a), (-b + disc.sqrt()) / (2.0 * a)] {
            let z = o.z + t * d.z;
            if t > 0.0 && (0.0..=height).contains(&z) {
                best = best.min(t);
            }
        }
    }
    let top = (height - o.z) / d.z;
    let hit = o + d * top;
    if top > 0.0 && (hit.x - cx).hypot(hit.y - cy) <= radius {
        best = best.min(top);
    }
    let plane = -o.z / d.z;
    if plane > 0.0 {
        best = best.min(plane);
    }
    best
}

#[test]
fn rendered_cylinder_matches_analytic_depth() {
    let (radius, height, cx, cy) = (0.035, 0.09, 0.02, -0.015);
    let scene = Scene {
        objects: vec![PrimitiveObject {
            shape: Primitive::Cylinder { radius, height },
            pose: Isometry3::translation(cx, cy, height / 2.0),
            friction: 0.5,
            albedo: [200, 40, 40],
        }],
        camera_pose: looking_down(0.55),
        intrinsics: CameraIntrinsics::desk(),
        seed: 3,
    };
    scene.validate().unwrap();
    let rendering = render(&scene, &ShadingConfig::default());
    let cam = &scene.intrinsics;
    let origin = scene.camera_position();
    let (mut object_pixels, mut worst) = (0, 0.0f64);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let dir = scene.camera_pose.rotation * cam.ray(x as f64, y as f64);
            let expected = cylinder_oracle(origin, dir, cx, cy, radius, height);
            let got = rendering.depth.get(x, y) as f64;
            assert_ne!(rendering.ids[y * cam.width + x], NO_HIT);
            worst = worst.max((got - expected).abs());
            object_pixels += usize::from(rendering.ids[y * cam.width + x] == 1);
        }
    }
    // Depth is stored as f32.
    assert!(worst < 1e-6, "max depth error {worst}");
    assert!(object_pixels > 500, "{object_pixels} object pixels");
}

#[test]
fn sampled_contacts_lie_on_the_surface() {
    let shapes = [
        Primitive::Box { extents: [0.05, 0.03, 0.08] },
        Primitive::Cylinder { radius: 0.025, height: 0.1 },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (i, shape) in shapes.into_iter().enumerate() {
        for trial in 0..10 {
            let yaw = rng.random_range(-3.0..3.0);
            let pose = Isometry3::new(
                Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), shape.half_height()),
                Vector3::z() * yaw,
            );
            let obj = PrimitiveObject { shape, pose, friction: 0.5, albedo: [0; 3] };
            let solid = obj.solid();
            let candidates = sample_antipodal_candidates(&obj, 20, (i * 100 + trial) as u64, &SamplerConfig::default());
            assert!(!candidates.is_empty());
            for cand in candidates {
                for contact in cand.contacts {
                    assert!((contact.normal.norm() - 1.0).abs() < 1e-12);
                    // On the boundary: inside with a hair of slack, outside
                    // a small step along the outward normal, inside a small
                    // step against it.
                    assert!(solid.contains(&contact.point, 1e-9));
                    assert!(!solid.contains(&(contact.point + contact.normal * 1e-5), 0.0));
                    assert!(solid.contains(&(contact.point - contact.normal * 1e-5), 0.0));
                }
            }
        }
    }
}

/// Uniform point strictly inside `obj`, at least `margin` from its surface.
fn interior_point(obj: &PrimitiveObject, margin: f64, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let local = match obj.shape {
        Primitive::Box { extents } => {
            Vector3::from_fn(|i, _| rng.random_range(-(extents[i] / 2.0 - margin)..=extents[i] / 2.0 - margin))
        }
        Primitive::Cylinder { radius, height } => loop {
            let r = radius - margin;
            let (x, y) = (rng.random_range(-r..=r), rng.random_range(-r..=r));
            if x.hypot(y) <= r {
                break Vector3::new(x, y, rng.random_range(-(height / 2.0 - margin)..=height / 2.0 - margin));
            }
        },
    };
    (obj.pose * nalgebra::Point3::from(local)).coords
}

#[test]
fn generated_scenes_never_interpenetrate() {
    const MARGIN: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..100 {
        let scene = generate_scene(seed, 1 + (seed as usize % 10)).unwrap();
        let solids = scene.solids();
        for (i, obj) in scene.objects.iter().enumerate() {
            assert!(solids[i].min_z() >= -1e-9, "seed {seed}: object {i} below the plane");
            for _ in 0..400 {
                let p = interior_point(obj, MARGIN, &mut rng);
                for (j, other) in solids.iter().enumerate() {
                    if j != i {
                        assert!(!other.contains(&p, -MARGIN), "seed {seed}: objects {i} and {j} overlap at {p:?}");
                    }
                }
            }
        }
    }
}
