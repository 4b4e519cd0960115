//! Analytic convex primitives: ray casting, point containment, support
//! mapping and a GJK overlap test.

#[allow(unused_imports)]
use num_traits::Float as _;
use nalgebra::{Isometry3, Point3, Vector3};
use serde::{Deserialize, Serialize};

/// Convex primitive in its local frame, centered at the origin. Cylinders
/// have their axis along local `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Box { extents: [f64; 3] },
    Cylinder { radius: f64, height: f64 },
}

impl Primitive {
    pub fn is_valid(&self) -> bool {
        match *self {
            Primitive::Box { extents } => extents.iter().all(|&e| e > 0.0 && e.is_finite()),
            Primitive::Cylinder { radius, height } => radius > 0.0 && height > 0.0,
        }
    }

    /// Half of the extent along local `z`.
    pub fn half_height(&self) -> f64 {
        match *self {
            Primitive::Box { extents } => extents[2] / 2.0,
            Primitive::Cylinder { height, .. } => height / 2.0,
        }
    }

    fn contains_local(&self, p: &Vector3<f64>, tol: f64) -> bool {
        match *self {
            Primitive::Box { extents } => {
                (0..3).all(|i| p[i].abs() <= extents[i] / 2.0 + tol)
            }
            Primitive::Cylinder { radius, height } => {
                p.x.hypot(p.y) <= radius + tol && p.z.abs() <= height / 2.0 + tol
            }
        }
    }

    fn support_local(&self, d: &Vector3<f64>) -> Vector3<f64> {
        let sgn = |x: f64| if x >= 0.0 { 1.0 } else { -1.0 };
        match *self {
            Primitive::Box { extents } => Vector3::new(
                sgn(d.x) * extents[0] / 2.0,
                sgn(d.y) * extents[1] / 2.0,
                sgn(d.z) * extents[2] / 2.0,
            ),
            Primitive::Cylinder { radius, height } => {
                let r = d.x.hypot(d.y);
                let (x, y) = if r > 0.0 {
                    (radius * d.x / r, radius * d.y / r)
                } else {
                    (0.0, 0.0)
                };
                Vector3::new(x, y, sgn(d.z) * height / 2.0)
            }
        }
    }

    /// Entry and exit of the line `o + t d` in local coordinates.
    fn span_local(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<Span> {
        match *self {
            Primitive::Box { extents } => {
                let mut enter = Crossing::new(f64::NEG_INFINITY, Vector3::zeros());
                let mut exit = Crossing::new(f64::INFINITY, Vector3::zeros());
                for i in 0..3 {
                    let h = extents[i] / 2.0;
                    if !slab(o[i], d[i], h, i, &mut enter, &mut exit) {
                        return None;
                    }
                }
                (enter.t <= exit.t).then_some(Span { enter, exit })
            }
            Primitive::Cylinder { radius, height } => {
                let mut enter = Crossing::new(f64::NEG_INFINITY, Vector3::zeros());
                let mut exit = Crossing::new(f64::INFINITY, Vector3::zeros());
                let a = d.x * d.x + d.y * d.y;
                let b = 2.0 * (o.x * d.x + o.y * d.y);
                let c = o.x * o.x + o.y * o.y - radius * radius;
                if a < 1e-300 {
                    if c > 0.0 {
                        return None;
                    }
                } else {
                    let disc = b * b - 4.0 * a * c;
                    if disc < 0.0 {
                        return None;
                    }
                    let sq = disc.sqrt();
                    // numerically stable roots
                    let q = -0.5 * (b + if b >= 0.0 { sq } else { -sq });
                    let (mut t0, mut t1) = if q != 0.0 { (q / a, c / q) } else { (0.0, 0.0) };
                    if t0 > t1 {
                        core::mem::swap(&mut t0, &mut t1);
                    }
                    let radial = |t: f64| {
                        let p = o + d * t;
                        Vector3::new(p.x, p.y, 0.0) / radius
                    };
                    enter = Crossing::new(t0, radial(t0));
                    exit = Crossing::new(t1, radial(t1));
                }
                if !slab(o.z, d.z, height / 2.0, 2, &mut enter, &mut exit) {
                    return None;
                }
                (enter.t <= exit.t).then_some(Span { enter, exit })
            }
        }
    }

    pub fn volume(&self) -> f64 {
        match *self {
            Primitive::Box { extents } => extents[0] * extents[1] * extents[2],
            Primitive::Cylinder { radius, height } => core::f64::consts::PI * radius * radius * height,
        }
    }
}

/// Clip the current parametric interval by the slab `|o + t d| <= h` on
/// axis `axis`. Returns false when the line misses the slab.
fn slab(o: f64, d: f64, h: f64, axis: usize, enter: &mut Crossing, exit: &mut Crossing) -> bool {
    if d.abs() < 1e-300 {
        return o.abs() <= h;
    }
    let (mut tn, mut tf) = ((-h - o) / d, (h - o) / d);
    let mut nn = Vector3::zeros();
    nn[axis] = if d > 0.0 { -1.0 } else { 1.0 };
    if tn > tf {
        core::mem::swap(&mut tn, &mut tf);
    }
    if tn > enter.t {
        *enter = Crossing::new(tn, nn);
    }
    if tf < exit.t {
        *exit = Crossing::new(tf, -nn);
    }
    true
}

/// A surface crossing along a ray: parameter and outward unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub t: f64,
    pub normal: Vector3<f64>,
}

impl Crossing {
    fn new(t: f64, normal: Vector3<f64>) -> Self {
        Self { t, normal }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub enter: Crossing,
    pub exit: Crossing,
}

/// Anything with a support function over a convex set.
pub trait Support {
    fn support(&self, dir: &Vector3<f64>) -> Vector3<f64>;
    fn center(&self) -> Vector3<f64>;
}

/// A primitive placed in the world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Solid {
    pub primitive: Primitive,
    pub pose: Isometry3<f64>,
}

impl Solid {
    pub fn new(primitive: Primitive, pose: Isometry3<f64>) -> Self {
        Self { primitive, pose }
    }

    pub fn contains(&self, p: &Vector3<f64>, tol: f64) -> bool {
        let local = self.pose.inverse_transform_point(&Point3::from(*p));
        self.primitive.contains_local(&local.coords, tol)
    }

    /// Entry/exit crossings of the line `o + t d` (world frame, any `t`).
    /// Normals are outward and in the world frame.
    pub fn line_span(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<Span> {
        let lo = self.pose.inverse_transform_point(&Point3::from(*o)).coords;
        let ld = self.pose.inverse_transform_vector(d);
        let span = self.primitive.span_local(&lo, &ld)?;
        let rot = |c: Crossing| Crossing::new(c.t, self.pose.rotation * c.normal);
        Some(Span {
            enter: rot(span.enter),
            exit: rot(span.exit),
        })
    }

    /// First entering crossing with `t >= 0`. A ray starting inside the
    /// solid reports no entry.
    pub fn ray_entry(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<Crossing> {
        let span = self.line_span(o, d)?;
        (span.enter.t >= 0.0 && span.exit.t >= span.enter.t).then_some(span.enter)
    }

    /// Lowest world `z` of the solid.
    pub fn min_z(&self) -> f64 {
        self.support(&-Vector3::z()).z
    }

    pub fn max_z(&self) -> f64 {
        self.support(&Vector3::z()).z
    }
}

impl Support for Solid {
    fn support(&self, dir: &Vector3<f64>) -> Vector3<f64> {
        let ld = self.pose.inverse_transform_vector(dir);
        self.pose.transform_point(&Point3::from(self.primitive.support_local(&ld))).coords
    }

    fn center(&self) -> Vector3<f64> {
        self.pose.translation.vector
    }
}

fn minkowski<A: Support, B: Support>(a: &A, b: &B, d: &Vector3<f64>) -> Vector3<f64> {
    a.support(d) - b.support(&-d)
}

fn triple(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Vector3<f64> {
    a.cross(b).cross(c)
}

/// Boolean overlap test between two convex sets (Gilbert-Johnson-Keerthi).
/// Touching contact counts as overlap.
pub fn gjk_intersects<A: Support, B: Support>(a: &A, b: &B) -> bool {
    let mut d = a.center() - b.center();
    if d.norm_squared() < 1e-24 {
        d = Vector3::x();
    }
    let mut simplex: [Vector3<f64>; 4] = [Vector3::zeros(); 4];
    let mut n = 1;
    simplex[0] = minkowski(a, b, &d);
    d = -simplex[0];
    for _ in 0..128 {
        if d.norm_squared() < 1e-30 {
            return true;
        }
        let p = minkowski(a, b, &d);
        if p.dot(&d) < 0.0 {
            return false;
        }
        simplex[n] = p;
        n += 1;
        match evolve(&mut simplex, &mut n, &mut d) {
            Some(hit) => return hit,
            None => continue,
        }
    }
    true
}

/// Reduce the simplex (newest point last) to the feature closest to the
/// origin and set the next search direction. `Some(true)` when the origin is
/// enclosed.
fn evolve(s: &mut [Vector3<f64>; 4], n: &mut usize, d: &mut Vector3<f64>) -> Option<bool> {
    const EPS: f64 = 1e-20;
    match *n {
        2 => {
            let (b, a) = (s[0], s[1]);
            line_case(a, b, s, n, d);
            if d.norm_squared() < EPS {
                return Some(true);
            }
            None
        }
        3 => {
            let (c, b, a) = (s[0], s[1], s[2]);
            triangle_case(a, b, c, s, n, d)
        }
        4 => {
            let (dd, c, b, a) = (s[0], s[1], s[2], s[3]);
            let ao = -a;
            let ab = b - a;
            let ac = c - a;
            let ad = dd - a;
            let abc = ab.cross(&ac);
            let acd = ac.cross(&ad);
            let adb = ad.cross(&ab);
            if abc.dot(&ao) > 0.0 {
                *s = [c, b, a, Vector3::zeros()];
                *n = 3;
                return triangle_case(a, b, c, s, n, d);
            }
            if acd.dot(&ao) > 0.0 {
                *s = [dd, c, a, Vector3::zeros()];
                *n = 3;
                return triangle_case(a, c, dd, s, n, d);
            }
            if adb.dot(&ao) > 0.0 {
                *s = [b, dd, a, Vector3::zeros()];
                *n = 3;
                return triangle_case(a, dd, b, s, n, d);
            }
            Some(true)
        }
        _ => None,
    }
}

fn line_case(a: Vector3<f64>, b: Vector3<f64>, s: &mut [Vector3<f64>; 4], n: &mut usize, d: &mut Vector3<f64>) {
    let ab = b - a;
    let ao = -a;
    if ab.dot(&ao) > 0.0 {
        s[0] = b;
        s[1] = a;
        *n = 2;
        *d = triple(&ab, &ao, &ab);
    } else {
        s[0] = a;
        *n = 1;
        *d = ao;
    }
}

fn triangle_case(
    a: Vector3<f64>,
    b: Vector3<f64>,
    c: Vector3<f64>,
    s: &mut [Vector3<f64>; 4],
    n: &mut usize,
    d: &mut Vector3<f64>,
) -> Option<bool> {
    let ab = b - a;
    let ac = c - a;
    let ao = -a;
    let abc = ab.cross(&ac);
    if abc.cross(&ac).dot(&ao) > 0.0 {
        if ac.dot(&ao) > 0.0 {
            s[0] = c;
            s[1] = a;
            *n = 2;
            *d = triple(&ac, &ao, &ac);
        } else {
            line_case(a, b, s, n, d);
        }
    } else if ab.cross(&abc).dot(&ao) > 0.0 {
        line_case(a, b, s, n, d);
    } else {
        let side = abc.dot(&ao);
        if side.abs() < 1e-18 * abc.norm().max(1e-300) {
            // origin lies in the triangle
            return Some(true);
        }
        if side > 0.0 {
            s[0] = c;
            s[1] = b;
            s[2] = a;
            *d = abc;
        } else {
            s[0] = b;
            s[1] = c;
            s[2] = a;
            *d = -abc;
        }
        *n = 3;
    }
    if d.norm_squared() < 1e-30 {
        return Some(true);
    }
    None
}
