//! Independent post-hoc checks of placements. These re-derive every
//! constraint with sampling and numeric minimisation rather than the slab
//! and rectangle-distance tests used during placement.

use std::f64::consts::PI;

use crate::body::AgentLookup;
use crate::config::Config;
use crate::geom::{Aabb, Point3, Vec3};
use crate::scene::{Scene, SceneObject};

use super::{Placement, AGENT_CLEARANCE_HEIGHT};

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    UnknownAgent { placement: usize },
    OutsideScene { placement: usize },
    Distance { placement: usize, distance: f64 },
    Footprint { placement: usize, object_id: u32 },
    Separation { a: usize, b: usize },
    Occluded { placement: usize, object_id: u32 },
    RayMisses { placement: usize },
    Angle { placement: usize, degrees: f64 },
}

fn inside(b: &Aabb, p: &Point3, eps: f64) -> bool {
    let (lo, hi) = (b.min(), b.max());
    (0..3).all(|i| p[i] >= lo[i] - eps && p[i] <= hi[i] + eps)
}

/// Euclidean distance from a point to a box (zero inside).
fn box_distance(b: &Aabb, p: &Point3) -> f64 {
    let (lo, hi) = (b.min(), b.max());
    let mut s = 0.0;
    for i in 0..3 {
        let d = if p[i] < lo[i] {
            lo[i] - p[i]
        } else if p[i] > hi[i] {
            p[i] - hi[i]
        } else {
            0.0
        };
        s += d * d;
    }
    s.sqrt()
}

/// Minimum over `t in [0, t_max]` of the distance from `o + t·d` to the box,
/// by golden-section search on the convex distance profile.
fn min_ray_box_distance(o: &Point3, d: &Vec3, b: &Aabb, t_max: f64) -> f64 {
    let f = |t: f64| box_distance(b, &(o + d * t));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, t_max);
    for _ in 0..200 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    f(0.5 * (lo + hi)).min(f(0.0))
}

fn degrees_between(u: &Vec3, v: &Vec3) -> f64 {
    let cross = u.cross(v).norm();
    cross.atan2(u.dot(v)).to_degrees()
}

/// Checks distance band, footprint, separation, line of sight from the eye
/// to the target center, that the gesture ray reaches the target box, and
/// the angular tolerance.
pub fn verify_placements(
    scene: &Scene,
    target: &SceneObject,
    placements: &[Placement],
    pool: &(impl AgentLookup + ?Sized),
    cfg: &Config,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let c = target.bbox.center();
    let bounds = scene.bounds();
    let tolerance = cfg.pointing_tolerance_deg();
    for (i, p) in placements.iter().enumerate() {
        let Some(entry) = pool.entry(p.agent_index as usize) else {
            out.push(Violation::UnknownAgent { placement: i });
            continue;
        };
        if let Some(b) = &bounds {
            if !inside(b, &p.position, 1e-9) {
                out.push(Violation::OutsideScene { placement: i });
            }
        }
        let dx = p.position.x - c.x;
        let dy = p.position.y - c.y;
        let dist = (dx * dx + dy * dy).sqrt();
        if dist < cfg.distance_min - 1e-9 || dist > cfg.distance_max + 1e-9 {
            out.push(Violation::Distance { placement: i, distance: dist });
        }

        // footprint cylinder: rings of boundary samples at several heights
        for o in &scene.objects {
            let hit = (0..=8).any(|h| {
                let z = scene.floor_z + AGENT_CLEARANCE_HEIGHT * h as f64 / 8.0;
                (0..720).any(|k| {
                    let a = 2.0 * PI * k as f64 / 720.0;
                    let r = cfg.footprint_radius * (1.0 - 1e-9);
                    let q = Point3::new(p.position.x + r * a.cos(), p.position.y + r * a.sin(), z);
                    inside(&o.bbox, &q, 0.0)
                }) || inside(&o.bbox, &Point3::new(p.position.x, p.position.y, z), 0.0)
            });
            if hit {
                out.push(Violation::Footprint { placement: i, object_id: o.object_id });
            }
        }

        // world landmarks via explicit yaw rotation
        let (s, co) = p.yaw.to_radians().sin_cos();
        let to_world = |q: &Point3| Point3::new(co * q.x - s * q.y + p.position.x, s * q.x + co * q.y + p.position.y, q.z + p.position.z);
        let eye = to_world(&entry.eye);
        let tip = to_world(&entry.fingertip);

        // line of sight: march toward the center until the target is entered
        let to_c = c - eye;
        let steps = 4000;
        for k in 1..steps {
            let q = eye + to_c * (k as f64 / steps as f64);
            if inside(&target.bbox, &q, 0.0) {
                break;
            }
            if let Some(o) = scene
                .objects
                .iter()
                .find(|o| o.object_id != target.object_id && inside(&o.bbox, &q, 0.0))
            {
                out.push(Violation::Occluded { placement: i, object_id: o.object_id });
                break;
            }
        }

        let d = tip - eye;
        let dir = d / d.norm();
        let reach = to_c.norm() + target.bbox.size().norm() + 1.0;
        if min_ray_box_distance(&eye, &dir, &target.bbox, reach) > 1e-7 {
            out.push(Violation::RayMisses { placement: i });
        }
        let ang = degrees_between(&dir, &to_c);
        if ang > tolerance + 1e-9 {
            out.push(Violation::Angle { placement: i, degrees: ang });
        }
    }
    for a in 0..placements.len() {
        for b in a + 1..placements.len() {
            let d = placements[a].position - placements[b].position;
            if d.dot(&d).sqrt() < cfg.min_separation - 1e-9 {
                out.push(Violation::Separation { a, b });
            }
        }
    }
    out
}
