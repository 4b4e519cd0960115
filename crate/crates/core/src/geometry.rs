//! Grasp representations and the encodings between grasps, anchors and
//! regression targets.
//!
//! Conventions:
//! - Image coordinates are pixels with pixel centers at integer `(u, v)`,
//!   `u` to the right and `v` down.
//! - `theta` is the angle of the jaw-opening (width) axis from the image
//!   x-axis, canonical in `(-pi/2, pi/2]`.
//! - A planar grasp lifted to 3D has its approach axis along camera `+z`.

#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Offset added to the measured center depth by the "center" depth baseline.
pub const CENTER_DEPTH_OFFSET: f64 = 0.020;

/// Log-size regression targets are clamped to this magnitude on decode.
pub const MAX_LOG_SCALE: f64 = 10.0;

/// Six-dimensional grasp rectangle `(u, v, d, w, h, theta)` with an optional
/// quality score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarGrasp {
    pub u: f64,
    pub v: f64,
    /// Fingertip depth along the camera axis, meters.
    pub d: f64,
    /// Extent along the jaw-opening axis, pixels.
    pub w: f64,
    /// Extent along the finger-thickness axis, pixels.
    pub h: f64,
    pub theta: f64,
    #[serde(default)]
    pub score: Option<f64>,
}

impl PlanarGrasp {
    pub fn new(u: f64, v: f64, d: f64, w: f64, h: f64, theta: f64) -> Self {
        Self {
            u,
            v,
            d,
            w,
            h,
            theta: canonical_angle(theta),
            score: None,
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0 && self.h > 0.0) {
            return Err(Error::InvalidGeometry("grasp width and height must be positive"));
        }
        if !(self.d > 0.0) {
            return Err(Error::InvalidDepth(self.d));
        }
        Ok(())
    }

    /// Rectangle corners in counter-clockwise order (for `v` pointing down
    /// this is clockwise on screen).
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.theta.sin_cos();
        let (hw, hh) = (self.w / 2.0, self.h / 2.0);
        let ex = [c * hw, s * hw];
        let ey = [-s * hh, c * hh];
        [
            [self.u - ex[0] - ey[0], self.v - ex[1] - ey[1]],
            [self.u + ex[0] - ey[0], self.v + ex[1] - ey[1]],
            [self.u + ex[0] + ey[0], self.v + ex[1] + ey[1]],
            [self.u - ex[0] + ey[0], self.v - ex[1] + ey[1]],
        ]
    }
}

/// Axis-aligned box stored as center and size, pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub h: f64,
}

/// Anchors are plain axis-aligned boxes.
pub type AnchorBox = AxisBox;

impl AxisBox {
    pub fn new(u: f64, v: f64, w: f64, h: f64) -> Self {
        Self { u, v, w, h }
    }

    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self {
            u: (x1 + x2) / 2.0,
            v: (y1 + y2) / 2.0,
            w: x2 - x1,
            h: y2 - y1,
        }
    }

    /// `(x1, y1, x2, y2)`.
    pub fn corners(&self) -> [f64; 4] {
        [
            self.u - self.w / 2.0,
            self.v - self.h / 2.0,
            self.u + self.w / 2.0,
            self.v + self.h / 2.0,
        ]
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn iou(&self, other: &AxisBox) -> f64 {
        let a = self.corners();
        let b = other.corners();
        let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
        let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Clip to `[0, width-1] x [0, height-1]` in pixel-center coordinates,
    /// extended by half a pixel on each side.
    pub fn clipped(&self, width: usize, height: usize) -> AxisBox {
        let [x1, y1, x2, y2] = self.corners();
        let (xmax, ymax) = (width as f64 - 0.5, height as f64 - 0.5);
        AxisBox::from_corners(
            x1.clamp(-0.5, xmax),
            y1.clamp(-0.5, ymax),
            x2.clamp(-0.5, xmax),
            y2.clamp(-0.5, ymax),
        )
    }

    fn validate(&self) -> Result<()> {
        if self.w > 0.0 && self.h > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidGeometry("box width and height must be positive"))
        }
    }
}

/// First-stage regression target relative to an anchor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GpnTarget {
    pub tu: f64,
    pub tv: f64,
    pub tw: f64,
    pub th: f64,
}

impl GpnTarget {
    pub fn to_array(self) -> [f64; 4] {
        [self.tu, self.tv, self.tw, self.th]
    }

    pub fn from_slice(t: &[f64]) -> Self {
        Self {
            tu: t[0],
            tv: t[1],
            tw: t[2],
            th: t[3],
        }
    }
}

/// Second-stage regression target `(t_u, t_v, t_d, t_w, t_h, t_sin, t_cos)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroiTarget {
    pub tu: f64,
    pub tv: f64,
    pub td: f64,
    pub tw: f64,
    pub th: f64,
    pub tsin: f64,
    pub tcos: f64,
}

impl GroiTarget {
    /// Index of `t_d` in [`GroiTarget::to_array`].
    pub const DEPTH_INDEX: usize = 2;

    pub fn to_array(self) -> [f64; 7] {
        [self.tu, self.tv, self.td, self.tw, self.th, self.tsin, self.tcos]
    }

    pub fn from_slice(t: &[f64]) -> Self {
        Self {
            tu: t[0],
            tv: t[1],
            td: t[2],
            tw: t[3],
            th: t[4],
            tsin: t[5],
            tcos: t[6],
        }
    }
}

/// Map any angle to `(-pi/2, pi/2]`; grasps are symmetric under a half turn.
pub fn canonical_angle(theta: f64) -> f64 {
    let mut r = (FRAC_PI_2 - theta) % PI;
    if r < 0.0 {
        r += PI;
    }
    if r >= PI {
        r -= PI;
    }
    FRAC_PI_2 - r
}

/// Absolute angular distance modulo `pi`, in `[0, pi/2]`.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    canonical_angle(a - b).abs()
}

pub fn encode_gpn_offsets(target: &AxisBox, anchor: &AnchorBox) -> Result<GpnTarget> {
    target.validate()?;
    anchor.validate()?;
    Ok(GpnTarget {
        tu: (target.u - anchor.u) / anchor.w,
        tv: (target.v - anchor.v) / anchor.h,
        tw: (target.w / anchor.w).ln(),
        th: (target.h / anchor.h).ln(),
    })
}

pub fn decode_gpn_offsets(t: &GpnTarget, anchor: &AnchorBox) -> AxisBox {
    let tw = t.tw.clamp(-MAX_LOG_SCALE, MAX_LOG_SCALE);
    let th = t.th.clamp(-MAX_LOG_SCALE, MAX_LOG_SCALE);
    AxisBox {
        u: anchor.u + t.tu * anchor.w,
        v: anchor.v + t.tv * anchor.h,
        w: anchor.w * tw.exp(),
        h: anchor.h * th.exp(),
    }
}

/// `(sin 2θ, cos 2θ)` of the canonical angle.
pub fn encode_angle(theta: f64) -> (f64, f64) {
    let (s, c) = (2.0 * canonical_angle(theta)).sin_cos();
    (s, c)
}

/// Inverse of [`encode_angle`]; accepts unnormalized pairs.
pub fn decode_angle(tsin: f64, tcos: f64) -> Result<f64> {
    if tsin == 0.0 && tcos == 0.0 {
        return Err(Error::UndefinedAngle);
    }
    Ok(canonical_angle(0.5 * tsin.atan2(tcos)))
}

/// Offset of the grasp depth from the reference measurement.
pub fn encode_depth(d: f64, reference: f64) -> f64 {
    d - reference
}

pub fn decode_depth(td: f64, reference: f64) -> f64 {
    reference + td
}

/// Second-stage target for a ground-truth grasp matched to `proposal`.
/// `reference_depth` is the preprocessed depth at the proposal center.
pub fn encode_groi_target(
    gt: &PlanarGrasp,
    proposal: &AxisBox,
    reference_depth: f64,
) -> Result<GroiTarget> {
    let t = encode_gpn_offsets(&AxisBox::new(gt.u, gt.v, gt.w, gt.h), proposal)?;
    let (tsin, tcos) = encode_angle(gt.theta);
    Ok(GroiTarget {
        tu: t.tu,
        tv: t.tv,
        td: encode_depth(gt.d, reference_depth),
        tw: t.tw,
        th: t.th,
        tsin,
        tcos,
    })
}

pub fn decode_groi_target(t: &GroiTarget, proposal: &AxisBox, reference_depth: f64) -> Result<PlanarGrasp> {
    let b = decode_gpn_offsets(
        &GpnTarget {
            tu: t.tu,
            tv: t.tv,
            tw: t.tw,
            th: t.th,
        },
        proposal,
    );
    let theta = decode_angle(t.tsin, t.tcos)?;
    Ok(PlanarGrasp {
        u: b.u,
        v: b.v,
        d: decode_depth(t.td, reference_depth),
        w: b.w,
        h: b.h,
        theta,
        score: None,
    })
}

/// Pinhole intrinsics without distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    /// 320x240 with a 300 px focal length and a centered principal point.
    pub fn desk() -> Self {
        Self {
            fx: 300.0,
            fy: 300.0,
            cx: 159.5,
            cy: 119.5,
            width: 320,
            height: 240,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidGeometry("focal lengths must be positive"));
        }
        if !(self.cx >= 0.0
            && self.cy >= 0.0
            && self.cx <= self.width as f64
            && self.cy <= self.height as f64)
        {
            return Err(Error::InvalidGeometry("principal point outside the image"));
        }
        Ok(())
    }

    /// Camera-frame ray through pixel `(u, v)` with unit z component.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    pub fn project(&self, p: &Vector3<f64>) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }
}

/// Parallel-jaw grasp pose.
///
/// Rotation columns are `[approach, closing, approach x closing]`; the
/// translation is the point midway between the fingertips.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grasp3D {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    /// Jaw opening, meters.
    pub width: f64,
    /// Finger extent across the closing axis, meters.
    pub height: f64,
    pub score: f64,
}

impl Grasp3D {
    pub fn from_axes(
        approach: Vector3<f64>,
        closing: Vector3<f64>,
        translation: Vector3<f64>,
        width: f64,
        height: f64,
        score: f64,
    ) -> Self {
        let binormal = approach.cross(&closing);
        Self {
            rotation: Matrix3::from_columns(&[approach, closing, binormal]),
            translation,
            width,
            height,
            score,
        }
    }

    pub fn approach(&self) -> Vector3<f64> {
        self.rotation.column(0).into_owned()
    }

    pub fn closing(&self) -> Vector3<f64> {
        self.rotation.column(1).into_owned()
    }

    pub fn binormal(&self) -> Vector3<f64> {
        self.rotation.column(2).into_owned()
    }

    /// Re-express the grasp with a rigid transform `p -> r p + t`.
    pub fn transformed(&self, r: &Matrix3<f64>, t: &Vector3<f64>) -> Self {
        Self {
            rotation: r * self.rotation,
            translation: r * self.translation + t,
            ..*self
        }
    }
}

/// Lift a planar grasp into a top-down camera-frame pose.
pub fn lift_planar_to_3d(g: &PlanarGrasp, cam: &CameraIntrinsics) -> Result<Grasp3D> {
    if !(g.d > 0.0) {
        return Err(Error::InvalidDepth(g.d));
    }
    if !(g.w > 0.0 && g.h > 0.0) {
        return Err(Error::InvalidGeometry("grasp width and height must be positive"));
    }
    let translation = cam.ray(g.u, g.v) * g.d;
    let (s, c) = g.theta.sin_cos();
    Ok(Grasp3D::from_axes(
        Vector3::z(),
        Vector3::new(c, s, 0.0),
        translation,
        g.w * g.d / cam.fx,
        g.h * g.d / cam.fx,
        g.score.unwrap_or(0.0),
    ))
}

/// Project a camera-frame top-down grasp onto the image plane.
pub fn project_3d_to_planar(g: &Grasp3D, cam: &CameraIntrinsics) -> Result<PlanarGrasp> {
    if (g.approach() - Vector3::z()).norm() > 1e-6 {
        return Err(Error::NotPlanar);
    }
    let d = g.translation.z;
    if !(d > 0.0) {
        return Err(Error::InvalidDepth(d));
    }
    let (u, v) = cam.project(&g.translation);
    let c = g.closing();
    Ok(PlanarGrasp {
        u,
        v,
        d,
        w: g.width * cam.fx / d,
        h: g.height * cam.fx / d,
        theta: canonical_angle(c.y.atan2(c.x)),
        score: Some(g.score),
    })
}

/// Tightest axis-aligned box around the rotated rectangle.
pub fn aabb_of(g: &PlanarGrasp) -> AxisBox {
    let (s, c) = g.theta.sin_cos();
    let (s, c) = (s.abs(), c.abs());
    AxisBox {
        u: g.u,
        v: g.v,
        w: c * g.w + s * g.h,
        h: s * g.w + c * g.h,
    }
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        acc += a[0] * b[1] - a[1] * b[0];
    }
    acc / 2.0
}

/// Sutherland-Hodgman clip of `subject` by the convex counter-clockwise
/// (positive signed area) polygon `clip`.
fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output: Vec<[f64; 2]> = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let side = |p: &[f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let input = core::mem::take(&mut output);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let prev = input[(j + m - 1) % m];
            let (sc, sp) = (side(&cur), side(&prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    output.push(intersect(prev, cur, sp, sc));
                }
                output.push(cur);
            } else if sp >= 0.0 {
                output.push(intersect(prev, cur, sp, sc));
            }
        }
    }
    output
}

fn intersect(p: [f64; 2], q: [f64; 2], sp: f64, sq: f64) -> [f64; 2] {
    let t = sp / (sp - sq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Intersection-over-union of two rotated rectangles by exact polygon
/// clipping.
pub fn rotated_iou(a: &PlanarGrasp, b: &PlanarGrasp) -> Result<f64> {
    if !(a.w > 0.0 && a.h > 0.0 && b.w > 0.0 && b.h > 0.0) {
        return Err(Error::InvalidGeometry("zero-area rectangle"));
    }
    let pa = oriented(a.corners());
    let pb = oriented(b.corners());
    let inter = polygon_area(&clip_convex(&pa, &pb)).abs();
    let union = a.w * a.h + b.w * b.h - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

fn oriented(mut c: [[f64; 2]; 4]) -> [[f64; 2]; 4] {
    if polygon_area(&c) < 0.0 {
        c.reverse();
    }
    c
}

/// Thresholds for greedy grasp-space suppression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmsThresholds {
    /// Center distance, pixels.
    pub translation: f64,
    /// Angular distance modulo pi, radians.
    pub rotation: f64,
    /// Depth difference, meters.
    pub depth: f64,
}

impl Default for NmsThresholds {
    fn default() -> Self {
        Self {
            translation: 25.0,
            rotation: PI / 6.0,
            depth: 0.02,
        }
    }
}

fn suppresses(kept: &PlanarGrasp, g: &PlanarGrasp, t: &NmsThresholds) -> bool {
    let dist = ((kept.u - g.u).powi(2) + (kept.v - g.v).powi(2)).sqrt();
    dist < t.translation && angle_distance(kept.theta, g.theta) < t.rotation && (kept.d - g.d).abs() < t.depth
}

/// Total order used for ranking: score descending, then the raw fields so the
/// result does not depend on input order.
fn rank_order(a: &PlanarGrasp, b: &PlanarGrasp) -> Ordering {
    let sa = a.score.unwrap_or(f64::NEG_INFINITY);
    let sb = b.score.unwrap_or(f64::NEG_INFINITY);
    sb.total_cmp(&sa)
        .then(a.u.total_cmp(&b.u))
        .then(a.v.total_cmp(&b.v))
        .then(a.d.total_cmp(&b.d))
        .then(a.theta.total_cmp(&b.theta))
        .then(a.w.total_cmp(&b.w))
        .then(a.h.total_cmp(&b.h))
}

/// Indices of the grasps kept by grasp-NMS, in output (score-descending)
/// order.
pub fn grasp_nms_indices(grasps: &[PlanarGrasp], t: &NmsThresholds) -> Result<Vec<usize>> {
    if let Some(i) = grasps.iter().position(|g| g.score.is_none()) {
        return Err(Error::MissingScore(i));
    }
    let mut order: Vec<usize> = (0..grasps.len()).collect();
    order.sort_by(|&i, &j| rank_order(&grasps[i], &grasps[j]));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if !kept.iter().any(|&k| suppresses(&grasps[k], &grasps[i], t)) {
            kept.push(i);
        }
    }
    Ok(kept)
}

pub fn grasp_nms(grasps: &[PlanarGrasp], t: &NmsThresholds) -> Result<Vec<PlanarGrasp>> {
    Ok(grasp_nms_indices(grasps, t)?
        .into_iter()
        .map(|i| grasps[i])
        .collect())
}

/// Sort grasps by score descending with a deterministic tie-break.
pub fn sort_by_score(grasps: &mut [PlanarGrasp]) {
    grasps.sort_by(rank_order);
}

/// Augmentation applied to images and their labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelTransform {
    HorizontalFlip,
    /// Rotation about the image center, radians, in image coordinates.
    Rotate(f64),
}

/// Apply an image transform to a label. Returns `None` when the transformed
/// center leaves the image.
pub fn transform_label(
    g: &PlanarGrasp,
    op: LabelTransform,
    width: usize,
    height: usize,
) -> Option<PlanarGrasp> {
    let mut out = *g;
    match op {
        LabelTransform::HorizontalFlip => {
            out.u = (width - 1) as f64 - g.u;
            out.theta = canonical_angle(-g.theta);
        }
        LabelTransform::Rotate(phi) => {
            let (cx, cy) = ((width - 1) as f64 / 2.0, (height - 1) as f64 / 2.0);
            let (s, c) = phi.sin_cos();
            let (dx, dy) = (g.u - cx, g.v - cy);
            out.u = cx + c * dx - s * dy;
            out.v = cy + s * dx + c * dy;
            out.theta = canonical_angle(g.theta + phi);
        }
    }
    let inside = out.u >= 0.0 && out.v >= 0.0 && out.u <= (width - 1) as f64 && out.v <= (height - 1) as f64;
    inside.then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::FRAC_PI_4;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn g(u: f64, v: f64, w: f64, h: f64, theta: f64) -> PlanarGrasp {
        PlanarGrasp::new(u, v, 0.5, w, h, theta)
    }

    /// Fraction of sample points covered, computed on a fine grid.
    fn raster_iou(a: &PlanarGrasp, b: &PlanarGrasp, step: f64) -> f64 {
        let inside = |g: &PlanarGrasp, x: f64, y: f64| {
            let (s, c) = g.theta.sin_cos();
            let (dx, dy) = (x - g.u, y - g.v);
            let along = c * dx + s * dy;
            let across = -s * dx + c * dy;
            along.abs() <= g.w / 2.0 && across.abs() <= g.h / 2.0
        };
        let r = (a.w.hypot(a.h) + b.w.hypot(b.h)) / 2.0 + 1.0;
        let (xmin, xmax) = (a.u.min(b.u) - r, a.u.max(b.u) + r);
        let (ymin, ymax) = (a.v.min(b.v) - r, a.v.max(b.v) + r);
        let (mut inter, mut union) = (0u64, 0u64);
        let mut y = ymin + step / 2.0;
        while y < ymax {
            let mut x = xmin + step / 2.0;
            while x < xmax {
                let (ia, ib) = (inside(a, x, y), inside(b, x, y));
                inter += (ia && ib) as u64;
                union += (ia || ib) as u64;
                x += step;
            }
            y += step;
        }
        inter as f64 / union as f64
    }

    #[test]
    fn gpn_identity_and_worked_example() {
        let a = AxisBox::new(100.0, 100.0, 32.0, 32.0);
        assert_eq!(encode_gpn_offsets(&a, &a).unwrap(), GpnTarget::default());
        let t = encode_gpn_offsets(&AxisBox::new(116.0, 100.0, 64.0, 32.0), &a).unwrap();
        assert_eq!(t.tu, 0.5);
        assert_eq!(t.tv, 0.0);
        assert!((t.tw - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(t.th, 0.0);
        let back = decode_gpn_offsets(&t, &a);
        assert!((back.w - 64.0).abs() < 1e-12 && (back.u - 116.0).abs() < 1e-12);
    }

    #[test]
    fn gpn_decode_examples() {
        let a = AxisBox::new(50.0, 60.0, 32.0, 16.0);
        assert_eq!(decode_gpn_offsets(&GpnTarget::default(), &a), a);
        let t = GpnTarget {
            tw: -core::f64::consts::LN_2,
            ..Default::default()
        };
        let b = decode_gpn_offsets(&t, &AxisBox::new(0.0, 0.0, 64.0, 64.0));
        assert!((b.w - 32.0).abs() < 1e-12);
    }

    #[test]
    fn gpn_decode_clamps_log_scale() {
        let t = GpnTarget {
            tw: 1e4,
            th: -1e4,
            ..Default::default()
        };
        let b = decode_gpn_offsets(&t, &AxisBox::new(0.0, 0.0, 1.0, 1.0));
        assert!(b.w.is_finite() && b.w == MAX_LOG_SCALE.exp());
        assert!(b.h > 0.0);
    }

    #[test]
    fn gpn_rejects_nonpositive_sizes() {
        let a = AxisBox::new(0.0, 0.0, 32.0, 32.0);
        assert!(encode_gpn_offsets(&AxisBox::new(0.0, 0.0, 0.0, 1.0), &a).is_err());
        assert!(encode_gpn_offsets(&a, &AxisBox::new(0.0, 0.0, 1.0, -1.0)).is_err());
    }

    #[test]
    fn angle_examples() {
        let (s, c) = encode_angle(0.0);
        assert_eq!((s, c), (0.0, 1.0));
        let (s, c) = encode_angle(FRAC_PI_4);
        assert!((s - 1.0).abs() < 1e-15 && c.abs() < 1e-15);
        assert_eq!(encode_angle(FRAC_PI_2), encode_angle(-FRAC_PI_2));
        let (s, c) = encode_angle(FRAC_PI_2);
        assert!(s.abs() < 1e-15 && (c + 1.0).abs() < 1e-15);
        assert!((decode_angle(1.0, 0.0).unwrap() - FRAC_PI_4).abs() < 1e-15);
        assert_eq!(decode_angle(0.0, -1.0).unwrap(), FRAC_PI_2);
        assert_eq!(decode_angle(-0.0, -1.0).unwrap(), FRAC_PI_2);
        assert_eq!(decode_angle(0.0, 0.0), Err(Error::UndefinedAngle));
        // unnormalized prediction pairs decode by direction only
        assert!((decode_angle(3.0, 0.0).unwrap() - FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn canonical_range_is_half_open() {
        assert_eq!(canonical_angle(FRAC_PI_2), FRAC_PI_2);
        assert_eq!(canonical_angle(-FRAC_PI_2), FRAC_PI_2);
        assert_eq!(canonical_angle(PI), 0.0);
        assert!((canonical_angle(3.0 * FRAC_PI_4) + FRAC_PI_4).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let t = canonical_angle(rng.random_range(-20.0..20.0));
            assert!(t > -FRAC_PI_2 && t <= FRAC_PI_2);
        }
    }

    #[test]
    fn depth_examples() {
        assert!((encode_depth(0.55, 0.53) - 0.02).abs() < 1e-15);
        assert_eq!(encode_depth(0.5, 0.5), 0.0);
        assert!((decode_depth(CENTER_DEPTH_OFFSET, 0.53) - 0.55).abs() < 1e-15);
    }

    #[test]
    fn lift_examples() {
        let cam = CameraIntrinsics {
            fx: 600.0,
            fy: 600.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
        };
        let g0 = PlanarGrasp::new(320.0, 240.0, 0.5, 40.0, 10.0, 0.3);
        let l = lift_planar_to_3d(&g0, &cam).unwrap();
        assert_eq!(l.translation, Vector3::new(0.0, 0.0, 0.5));
        let l = lift_planar_to_3d(&PlanarGrasp::new(380.0, 240.0, 0.5, 40.0, 10.0, 0.0), &cam).unwrap();
        assert!((l.translation.x - 0.05).abs() < 1e-15);
        assert!(lift_planar_to_3d(&PlanarGrasp::new(1.0, 1.0, 0.0, 4.0, 4.0, 0.0), &cam).is_err());

        let g3 = Grasp3D::from_axes(Vector3::z(), Vector3::x(), Vector3::new(0.0, 0.0, 0.5), 0.08, 0.02, 1.0);
        assert!((project_3d_to_planar(&g3, &cam).unwrap().w - 96.0).abs() < 1e-12);
        let g3 = Grasp3D {
            translation: Vector3::new(0.05, 0.0, 0.5),
            ..g3
        };
        assert!((project_3d_to_planar(&g3, &cam).unwrap().u - 380.0).abs() < 1e-12);
        let tilted = Grasp3D::from_axes(
            Vector3::new(0.1, 0.0, 1.0).normalize(),
            Vector3::y(),
            Vector3::new(0.0, 0.0, 0.5),
            0.05,
            0.02,
            1.0,
        );
        assert_eq!(project_3d_to_planar(&tilted, &cam), Err(Error::NotPlanar));
    }

    #[test]
    fn lifted_rotation_is_orthonormal() {
        let cam = CameraIntrinsics::desk();
        let l = lift_planar_to_3d(&PlanarGrasp::new(10.0, 20.0, 0.6, 30.0, 10.0, 1.1), &cam).unwrap();
        let e = (l.rotation.transpose() * l.rotation - Matrix3::identity()).abs().max();
        assert!(e < 1e-12);
        assert!((l.rotation.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iou_examples_and_raster_oracle() {
        let a = g(0.0, 0.0, 2.0, 2.0, 0.0);
        assert_eq!(rotated_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(rotated_iou(&a, &g(10.0, 0.0, 2.0, 2.0, 0.3)).unwrap(), 0.0);
        let b = g(1.0, 0.0, 2.0, 2.0, 0.0);
        let exact = rotated_iou(&a, &b).unwrap();
        assert!((exact - 1.0 / 3.0).abs() < 1e-12);
        assert!((raster_iou(&a, &b, 0.01) - 1.0 / 3.0).abs() < 0.02);
        assert!(rotated_iou(&a, &g(0.0, 0.0, 0.0, 2.0, 0.0)).is_err());
    }

    #[test]
    fn iou_is_one_under_half_turn() {
        let a = g(5.0, 3.0, 30.0, 8.0, 0.4);
        let b = PlanarGrasp { theta: 0.4 - PI, ..a };
        assert!((rotated_iou(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aabb_examples() {
        let b = aabb_of(&g(3.0, 4.0, 10.0, 5.0, 0.0));
        assert_eq!((b.u, b.v, b.w, b.h), (3.0, 4.0, 10.0, 5.0));
        let b = aabb_of(&g(3.0, 4.0, 10.0, 5.0, FRAC_PI_2));
        assert!((b.w - 5.0).abs() < 1e-12 && (b.h - 10.0).abs() < 1e-12);
        // corner-rotation oracle
        let r = g(0.0, 0.0, 2.0, 2.0, FRAC_PI_4);
        let xs = r.corners().map(|c| c[0]);
        let span = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
        let b = aabb_of(&r);
        assert!((b.w - span).abs() < 1e-12 && (b.w - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    fn scored(u: f64, score: f64) -> PlanarGrasp {
        PlanarGrasp::new(u, 0.0, 0.5, 20.0, 10.0, 0.0).with_score(score)
    }

    /// Brute-force greedy suppression: repeatedly take the best remaining
    /// grasp and remove everything it suppresses.
    fn brute_nms(gs: &[PlanarGrasp], t: &NmsThresholds) -> Vec<PlanarGrasp> {
        let mut remaining: Vec<PlanarGrasp> = gs.to_vec();
        let mut out = Vec::new();
        while !remaining.is_empty() {
            let best = (0..remaining.len())
                .min_by(|&i, &j| rank_order(&remaining[i], &remaining[j]))
                .unwrap();
            let b = remaining.remove(best);
            remaining.retain(|g| {
                let close = ((g.u - b.u).powi(2) + (g.v - b.v).powi(2)).sqrt() < t.translation;
                let rot = {
                    let mut dt = (g.theta - b.theta).abs() % PI;
                    if dt > FRAC_PI_2 {
                        dt = PI - dt;
                    }
                    dt < t.rotation
                };
                !(close && rot && (g.d - b.d).abs() < t.depth)
            });
            out.push(b);
        }
        out
    }

    #[test]
    fn nms_examples() {
        let t = NmsThresholds::default();
        assert_eq!(grasp_nms(&[scored(0.0, 0.5)], &t).unwrap().len(), 1);
        let out = grasp_nms(&[scored(0.0, 0.8), scored(0.0, 0.9)], &t).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].score, Some(0.9));
        // A suppresses B (20 px apart), B would suppress C (20 px) but A does not (40 px)
        let chain = [scored(0.0, 0.9), scored(20.0, 0.8), scored(40.0, 0.7)];
        let out = grasp_nms(&chain, &t).unwrap();
        assert_eq!(out, brute_nms(&chain, &t));
        assert_eq!(out.iter().map(|g| g.u).collect::<Vec<_>>(), alloc::vec![0.0, 40.0]);
        assert_eq!(
            grasp_nms(&[PlanarGrasp::new(0.0, 0.0, 0.5, 1.0, 1.0, 0.0)], &t),
            Err(Error::MissingScore(0))
        );
    }

    #[test]
    fn nms_matches_brute_force_on_small_sets() {
        let t = NmsThresholds::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let n = rng.random_range(1..=5);
            let gs: Vec<PlanarGrasp> = (0..n)
                .map(|_| {
                    PlanarGrasp::new(
                        rng.random_range(0.0..50.0),
                        rng.random_range(0.0..50.0),
                        rng.random_range(0.45..0.5),
                        20.0,
                        10.0,
                        rng.random_range(-1.6..1.6),
                    )
                    .with_score((rng.random_range(0..10) as f64) / 10.0)
                })
                .collect();
            assert_eq!(grasp_nms(&gs, &t).unwrap(), brute_nms(&gs, &t));
        }
    }

    #[test]
    fn transform_examples() {
        let (w, h) = (320, 240);
        let a = PlanarGrasp::new(40.0, 70.0, 0.5, 30.0, 10.0, 0.3);
        let f = transform_label(&a, LabelTransform::HorizontalFlip, w, h).unwrap();
        let ff = transform_label(&f, LabelTransform::HorizontalFlip, w, h).unwrap();
        assert_eq!(ff.u, a.u);
        assert!((ff.theta - a.theta).abs() < 1e-15);
        let m = transform_label(&PlanarGrasp::new(1.0, 1.0, 0.5, 2.0, 2.0, FRAC_PI_4), LabelTransform::HorizontalFlip, w, h).unwrap();
        assert!((m.theta + FRAC_PI_4).abs() < 1e-15);
        let c = PlanarGrasp::new(159.5, 119.5, 0.5, 30.0, 10.0, 0.7);
        let r = transform_label(&c, LabelTransform::Rotate(PI), w, h).unwrap();
        assert!(angle_distance(r.theta, c.theta) < 1e-12);
        assert!((r.u - c.u).abs() < 1e-9 && (r.v - c.v).abs() < 1e-9);
        let corner = PlanarGrasp::new(2.0, 2.0, 0.5, 30.0, 10.0, 0.0);
        assert!(transform_label(&corner, LabelTransform::Rotate(0.3), w, h).is_none());
    }

    fn arb_grasp() -> impl Strategy<Value = PlanarGrasp> {
        (20.0..300.0f64, 20.0..220.0f64, 0.2..1.5f64, 2.0..80.0f64, 2.0..40.0f64, -3.0..3.0f64)
            .prop_map(|(u, v, d, w, h, t)| PlanarGrasp::new(u, v, d, w, h, t))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn gpn_round_trip(u in -200.0..400.0f64, v in -200.0..400.0f64, w in 1.0..300.0f64, h in 1.0..300.0f64,
                          au in 0.0..320.0f64, av in 0.0..240.0f64, aw in 8.0..256.0f64, ah in 8.0..256.0f64) {
            let b = AxisBox::new(u, v, w, h);
            let a = AxisBox::new(au, av, aw, ah);
            let r = decode_gpn_offsets(&encode_gpn_offsets(&b, &a).unwrap(), &a);
            prop_assert!((r.u - u).abs() <= 1e-9 && (r.v - v).abs() <= 1e-9);
            prop_assert!((r.w - w).abs() <= 1e-9 && (r.h - h).abs() <= 1e-9);
        }

        #[test]
        fn angle_round_trip(theta in -10.0..10.0f64) {
            let (s, c) = encode_angle(theta);
            prop_assert!(angle_distance(decode_angle(s, c).unwrap(), theta) <= 1e-9);
            prop_assert!((s * s + c * c - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn angle_half_turn_symmetry(theta in -3.0..3.0f64) {
            let (s0, c0) = encode_angle(theta);
            for t in [theta + PI, theta - PI] {
                let (s, c) = encode_angle(t);
                prop_assert!((s - s0).abs() <= 1e-12 && (c - c0).abs() <= 1e-12);
            }
        }

        #[test]
        fn groi_round_trip(gt in arb_grasp(), pu in 0.0..320.0f64, pv in 0.0..240.0f64,
                           pw in 4.0..200.0f64, ph in 4.0..200.0f64, d_o in 0.2..1.5f64) {
            let p = AxisBox::new(pu, pv, pw, ph);
            let t = encode_groi_target(&gt, &p, d_o).unwrap();
            prop_assert!((t.tsin.powi(2) + t.tcos.powi(2) - 1.0).abs() < 1e-12);
            let r = decode_groi_target(&t, &p, d_o).unwrap();
            prop_assert!((r.u - gt.u).abs() <= 1e-9 && (r.v - gt.v).abs() <= 1e-9);
            prop_assert!((r.w - gt.w).abs() <= 1e-9 && (r.h - gt.h).abs() <= 1e-9);
            prop_assert!((r.d - gt.d).abs() <= 1e-9);
            prop_assert!(angle_distance(r.theta, gt.theta) <= 1e-9);
        }

        #[test]
        fn planar_3d_round_trip(gr in arb_grasp()) {
            let cam = CameraIntrinsics::desk();
            let back = project_3d_to_planar(&lift_planar_to_3d(&gr, &cam).unwrap(), &cam).unwrap();
            prop_assert!((back.u - gr.u).abs() <= 1e-6 && (back.v - gr.v).abs() <= 1e-6);
            prop_assert!((back.w - gr.w).abs() <= 1e-6 && (back.h - gr.h).abs() <= 1e-6);
            prop_assert!((back.d - gr.d).abs() <= 1e-9);
            prop_assert!(angle_distance(back.theta, gr.theta) <= 1e-9);
        }

        #[test]
        fn iou_symmetric_and_bounded(a in arb_grasp(), b in arb_grasp()) {
            let ab = rotated_iou(&a, &b).unwrap();
            let ba = rotated_iou(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn nms_sorted_clean_and_order_invariant(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(1..30);
            let mut gs: Vec<PlanarGrasp> = (0..n).map(|_| {
                PlanarGrasp::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0),
                    rng.random_range(0.4..0.5), 20.0, 10.0, rng.random_range(-1.6..1.6))
                    .with_score(rng.random_range(0..5) as f64 / 5.0)
            }).collect();
            let t = NmsThresholds::default();
            let out = grasp_nms(&gs, &t).unwrap();
            for w in out.windows(2) {
                prop_assert!(w[0].score >= w[1].score);
            }
            for i in 0..out.len() {
                for j in 0..out.len() {
                    if i != j {
                        prop_assert!(!suppresses(&out[i], &out[j], &t));
                    }
                }
            }
            gs.reverse();
            prop_assert_eq!(grasp_nms(&gs, &t).unwrap(), out);
        }

        #[test]
        fn transform_preserves_iou(a in arb_grasp(), b in arb_grasp(), flip in any::<bool>(), k in -1i32..=1) {
            let op = if flip { LabelTransform::HorizontalFlip } else { LabelTransform::Rotate(k as f64 * 15f64.to_radians()) };
            let (Some(ta), Some(tb)) = (transform_label(&a, op, 320, 240), transform_label(&b, op, 320, 240)) else {
                return Ok(());
            };
            let before = rotated_iou(&a, &b).unwrap();
            let after = rotated_iou(&ta, &tb).unwrap();
            prop_assert!((before - after).abs() <= 1e-6);
        }
    }
}
