//! Core 3D primitives: boxes, rays, rigid transforms and point clouds.
//!
//! All lengths are meters in a right-handed, z-up frame.

mod cloud;
pub mod erupc;
pub mod ply;

pub use cloud::{resample_fixed, voxel_downsample, PointCloud};

use nalgebra::{Matrix3, Rotation3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;

pub(crate) fn is_finite(p: &Point3) -> bool {
    p.iter().all(|c| c.is_finite())
}

/// Axis-aligned bounding box. `min <= max` componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AabbRepr", into = "AabbRepr")]
pub struct Aabb {
    min: Point3,
    max: Point3,
}

#[derive(Serialize, Deserialize)]
struct AabbRepr {
    min: [f64; 3],
    max: [f64; 3],
}

impl TryFrom<AabbRepr> for Aabb {
    type Error = Error;

    fn try_from(r: AabbRepr) -> Result<Self> {
        Aabb::new(Point3::from(r.min), Point3::from(r.max))
    }
}

impl From<Aabb> for AabbRepr {
    fn from(b: Aabb) -> Self {
        AabbRepr {
            min: b.min.coords.into(),
            max: b.max.coords.into(),
        }
    }
}

impl Aabb {
    pub fn new(min: Point3, max: Point3) -> Result<Self> {
        if !is_finite(&min) || !is_finite(&max) {
            return Err(Error::invalid("box corners must be finite"));
        }
        if (0..3).any(|i| min[i] > max[i]) {
            return Err(Error::invalid(format!(
                "box min {min:?} exceeds max {max:?}"
            )));
        }
        Ok(Aabb { min, max })
    }

    pub fn from_center_size(center: Point3, size: Vec3) -> Result<Self> {
        let half = size * 0.5;
        Aabb::new(center - half, center + half)
    }

    /// Tight box around a set of points. `None` for an empty set.
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let (min, max) = it.fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        });
        Some(Aabb { min, max })
    }

    pub fn min(&self) -> Point3 {
        self.min
    }

    pub fn max(&self) -> Point3 {
        self.max
    }

    pub fn center(&self) -> Point3 {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn size(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn volume(&self) -> f64 {
        let s = self.size();
        s.x * s.y * s.z
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn expanded(&self, margin: f64) -> Aabb {
        let m = Vec3::repeat(margin);
        Aabb {
            min: self.min - m,
            max: self.max + m,
        }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn translated(&self, offset: Vec3) -> Aabb {
        Aabb {
            min: self.min + offset,
            max: self.max + offset,
        }
    }

    /// Volume of the overlap region, zero when disjoint.
    pub fn intersection_volume(&self, other: &Aabb) -> f64 {
        (0..3)
            .map(|i| (self.max[i].min(other.max[i]) - self.min[i].max(other.min[i])).max(0.0))
            .product()
    }
}

/// Intersection-over-union of two boxes. Zero for disjoint boxes and for a
/// degenerate (zero-volume) union.
pub fn aabb_iou(a: &Aabb, b: &Aabb) -> f64 {
    let inter = a.intersection_volume(b);
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Half-line with unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    origin: Point3,
    dir: Vec3,
}

impl Ray {
    /// Normalizes `dir`; fails on a zero or non-finite direction.
    pub fn new(origin: Point3, dir: Vec3) -> Result<Self> {
        let n = dir.norm();
        if !is_finite(&origin) || !n.is_finite() || n <= f64::EPSILON {
            return Err(Error::invalid("ray needs a finite origin and non-zero direction"));
        }
        Ok(Ray {
            origin,
            dir: dir / n,
        })
    }

    /// Ray from `from` passing through `through`.
    pub fn through(from: Point3, through: Point3) -> Result<Self> {
        Ray::new(from, through - from)
    }

    pub fn origin(&self) -> Point3 {
        self.origin
    }

    pub fn dir(&self) -> Vec3 {
        self.dir
    }

    pub fn at(&self, t: f64) -> Point3 {
        self.origin + self.dir * t
    }

    pub fn transformed(&self, tf: &RigidTransform) -> Ray {
        Ray {
            origin: tf.apply_point(&self.origin),
            dir: tf.apply_vector(&self.dir),
        }
    }
}

/// Slab-method ray/box test. Returns the parametric interval `(t_near, t_far)`
/// along the ray, with `t_far >= max(t_near, 0)`. Grazing contacts count as
/// hits. `t_near` is negative when the origin lies inside the box.
pub fn ray_aabb_intersect(r: &Ray, b: &Aabb) -> Option<(f64, f64)> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for i in 0..3 {
        let o = r.origin[i];
        let d = r.dir[i];
        if d == 0.0 {
            if o < b.min[i] || o > b.max[i] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d;
        let (t0, t1) = {
            let a = (b.min[i] - o) * inv;
            let c = (b.max[i] - o) * inv;
            if a <= c {
                (a, c)
            } else {
                (c, a)
            }
        };
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
        if t_near > t_far {
            return None;
        }
    }
    if t_far < 0.0 {
        return None;
    }
    Some((t_near, t_far))
}

/// Angle between two vectors in degrees, in `[0, 180]`.
pub fn angle_between(u: &Vec3, v: &Vec3) -> Result<f64> {
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 || !nu.is_finite() || !nv.is_finite() {
        return Err(Error::invalid("angle_between needs non-zero finite vectors"));
    }
    let c = (u.dot(v) / (nu * nv)).clamp(-1.0, 1.0);
    Ok(c.acos().to_degrees())
}

/// Proper rigid motion `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        RigidTransform::identity()
    }
}

impl RigidTransform {
    /// Checks `RᵀR = I` within 1e-9 and `det R = +1`.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(err <= 1e-9) || (rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("rotation matrix is not a proper orthonormal matrix"));
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("translation must be finite"));
        }
        Ok(RigidTransform {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_rotation(rotation: Rotation3<f64>, translation: Vec3) -> Self {
        RigidTransform {
            rotation: rotation.into_inner(),
            translation,
        }
    }

    /// Rotation by `yaw_deg` about +z followed by a translation.
    pub fn from_yaw(yaw_deg: f64, translation: Vec3) -> Self {
        RigidTransform::from_rotation(
            Rotation3::from_axis_angle(&Vec3::z_axis(), yaw_deg.to_radians()),
            translation,
        )
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    pub fn apply_point(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}
