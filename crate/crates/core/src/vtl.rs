//! Virtual touch line: the gesture ray from the eye through the fingertip,
//! and a geometric score of how well it singles out an object box.

use crate::body::{PoolEntry, PosedAgent};
use crate::error::{Error, Result};
use crate::geom::{angle_between, ray_aabb_intersect, Aabb, Point3, Ray, RigidTransform};
use crate::scene::SceneObject;

/// Angle beyond which the angular part of the score is zero.
pub const ANGLE_CUTOFF_DEG: f64 = 30.0;
/// Added when the ray actually passes through the box.
pub const HIT_BONUS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GestureRay {
    pub ray: Ray,
}

impl GestureRay {
    pub fn from_landmarks(eye: Point3, fingertip: Point3) -> Result<GestureRay> {
        if (fingertip - eye).norm() <= f64::EPSILON {
            return Err(Error::invalid("eye and fingertip coincide"));
        }
        Ok(GestureRay {
            ray: Ray::through(eye, fingertip)?,
        })
    }

    pub fn from_entry(entry: &PoolEntry) -> Result<GestureRay> {
        GestureRay::from_landmarks(entry.eye, entry.fingertip)
    }

    pub fn transformed(&self, tf: &RigidTransform) -> GestureRay {
        GestureRay {
            ray: self.ray.transformed(tf),
        }
    }
}

/// Gesture ray of a posed agent, in the agent's frame.
pub fn gesture_ray(agent: &PosedAgent) -> Result<GestureRay> {
    GestureRay::from_landmarks(agent.eye, agent.fingertip)
}

/// `max(0, 1 - θ/30°) + 0.5·[ray hits box]`, clamped to `[0, 1]`, where θ
/// is the angle between the ray and the direction to the box center. Boxes
/// whose center lies behind the eye score zero.
pub fn vtl_score(g: &GestureRay, bbox: &Aabb) -> f64 {
    let to_center = bbox.center() - g.ray.origin();
    if to_center.norm() == 0.0 {
        return 1.0;
    }
    if g.ray.dir().dot(&to_center) < 0.0 {
        return 0.0;
    }
    let theta = angle_between(&g.ray.dir(), &to_center).expect("both vectors non-zero");
    let base = (1.0 - theta / ANGLE_CUTOFF_DEG).max(0.0);
    let hit = if ray_aabb_intersect(&g.ray, bbox).is_some() {
        HIT_BONUS
    } else {
        0.0
    };
    (base + hit).clamp(0.0, 1.0)
}

/// Descending score order, ties broken by ascending object id.
pub fn sort_scores(scores: &mut [(u32, f64)]) {
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

pub fn rank_objects(g: &GestureRay, objects: &[SceneObject]) -> Vec<(u32, f64)> {
    let mut scores: Vec<(u32, f64)> = objects
        .iter()
        .map(|o| (o.object_id, vtl_score(g, &o.bbox)))
        .collect();
    sort_scores(&mut scores);
    scores
}
