//! Collision primitives and analytic signed distances.
//!
//! Boxes are axis-aligned in their own frame; capsules run along their local
//! z axis. Positive distance means separation, negative means penetration.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::CollisionError;
use crate::transform::RigidTransform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere { radius: f64 },
    /// Segment of length `2 * half_length` along local z, swept by `radius`.
    Capsule { radius: f64, half_length: f64 },
    Box { half_extents: [f64; 3] },
}

impl Shape {
    pub fn is_valid(&self) -> bool {
        match *self {
            Shape::Sphere { radius } => radius > 0.0,
            Shape::Capsule {
                radius,
                half_length,
            } => radius > 0.0 && half_length >= 0.0,
            Shape::Box { half_extents } => half_extents.iter().all(|h| *h > 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionPrimitive {
    pub name: String,
    #[serde(flatten)]
    pub shape: Shape,
    /// Link name, or `"world"` for static obstacles.
    #[serde(default = "world")]
    pub attached_to: String,
    #[serde(default)]
    pub offset: RigidTransform,
}

fn world() -> String {
    "world".to_string()
}

impl CollisionPrimitive {
    pub fn new(name: &str, shape: Shape, attached_to: &str, offset: RigidTransform) -> Self {
        Self {
            name: name.to_string(),
            shape,
            attached_to: attached_to.to_string(),
            offset,
        }
    }
}

/// A shape placed in the world.
#[derive(Debug, Clone, Copy)]
pub struct PlacedShape {
    pub shape: Shape,
    pub pose: RigidTransform,
}

impl PlacedShape {
    pub fn new(shape: Shape, pose: RigidTransform) -> Self {
        Self { shape, pose }
    }
}

/// Signed distance between two placed primitives.
///
/// Supported: sphere-sphere, sphere-capsule, capsule-capsule, sphere-box and
/// capsule-box. Box-box is rejected.
pub fn signed_distance(a: &PlacedShape, b: &PlacedShape) -> Result<f64, CollisionError> {
    use Shape::*;
    match (a.shape, b.shape) {
        (Box { .. }, Box { .. }) => Err(CollisionError::UnsupportedPair("box", "box")),
        (Box { half_extents }, _) => round_box_distance(b, &a.pose, &half_extents),
        (_, Box { half_extents }) => round_box_distance(a, &b.pose, &half_extents),
        _ => {
            let (sa, ra) = segment_of(a);
            let (sb, rb) = segment_of(b);
            Ok(segment_segment_distance(sa, sb) - ra - rb)
        }
    }
}

/// Core segment and radius of a sphere (degenerate segment) or capsule.
fn segment_of(p: &PlacedShape) -> ([Vector3<f64>; 2], f64) {
    match p.shape {
        Shape::Sphere { radius } => ([p.pose.translation; 2], radius),
        Shape::Capsule {
            radius,
            half_length,
        } => {
            let axis = p.pose.rotation.column(2) * half_length;
            (
                [p.pose.translation - axis, p.pose.translation + axis],
                radius,
            )
        }
        Shape::Box { .. } => unreachable!("boxes have no core segment"),
    }
}

fn closest_param_on_segment(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let l2 = ab.norm_squared();
    if l2 < 1e-18 {
        0.0
    } else {
        ((p - a).dot(&ab) / l2).clamp(0.0, 1.0)
    }
}

/// Euclidean distance between two segments (either may be degenerate).
pub fn segment_segment_distance(s1: [Vector3<f64>; 2], s2: [Vector3<f64>; 2]) -> f64 {
    let d1 = s1[1] - s1[0];
    let d2 = s2[1] - s2[0];
    let r = s1[0] - s2[0];
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let (s, t);
    if a < 1e-18 && e < 1e-18 {
        return r.norm();
    }
    if a < 1e-18 {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e < 1e-18 {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > 1e-18 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    let p1 = s1[0] + d1 * s;
    let p2 = s2[0] + d2 * t;
    (p1 - p2).norm()
}

/// Signed distance from a point to an axis-aligned box centred at the origin.
pub fn point_box_distance(p: &Vector3<f64>, half: &[f64; 3]) -> f64 {
    let q = Vector3::new(p.x.abs() - half[0], p.y.abs() - half[1], p.z.abs() - half[2]);
    let outside = Vector3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
    let inside = q.x.max(q.y).max(q.z).min(0.0);
    outside + inside
}

fn round_box_distance(
    p: &PlacedShape,
    box_pose: &RigidTransform,
    half: &[f64; 3],
) -> Result<f64, CollisionError> {
    let inv = box_pose.inverse();
    let (seg, radius) = segment_of(p);
    let a = inv.transform_point(&seg[0]);
    let b = inv.transform_point(&seg[1]);
    Ok(min_segment_box_distance(&a, &b, half) - radius)
}

/// Minimum of the box SDF along a segment.
///
/// The SDF of a convex set is convex, so a golden-section search on the
/// segment parameter converges to the global minimum.
fn min_segment_box_distance(a: &Vector3<f64>, b: &Vector3<f64>, half: &[f64; 3]) -> f64 {
    let f = |t: f64| point_box_distance(&(a + (b - a) * t), half);
    if (b - a).norm_squared() < 1e-18 {
        return f(0.0);
    }
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x1 = hi - gr * (hi - lo);
    let mut x2 = lo + gr * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = f(x2);
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    f(0.5 * (lo + hi)).min(f(0.0)).min(f(1.0))
}

/// Closest point on the core of a sphere/capsule to `target`, used for
/// distance gradients.
pub fn core_point_towards(p: &PlacedShape, target: &Vector3<f64>) -> Vector3<f64> {
    let (seg, _) = segment_of(p);
    let t = closest_param_on_segment(target, &seg[0], &seg[1]);
    seg[0] + (seg[1] - seg[0]) * t
}
