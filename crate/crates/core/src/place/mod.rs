//! Automated agent placement: candidate positions around a referred object,
//! filtered by footprint clearance, line of sight, and a pointing solve that
//! picks a pool agent whose gesture ray passes through the object.

pub mod verify;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::body::{AgentLookup, Joint, ProfileId, Side, Skeleton};
use crate::config::Config;
use crate::error::{Error, RejectReason, Result};
use crate::geom::{angle_between, ray_aabb_intersect, Point3, Ray, RigidTransform, Vec3};
use crate::scene::{Scene, SceneObject};
use crate::vtl::GestureRay;

/// Height of the clearance cylinder checked around a standing agent.
pub const AGENT_CLEARANCE_HEIGHT: f64 = 2.0;

/// Where an agent stands (ground point under the pelvis) and which way it
/// faces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    #[serde(with = "point_array")]
    pub position: Point3,
    /// Degrees in `[0, 360)`, counter-clockwise from +x.
    pub yaw: f64,
    pub agent_index: u32,
}

mod point_array {
    use super::Point3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(p: &Point3, s: S) -> Result<S::Ok, S::Error> {
        [p.x, p.y, p.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Point3, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Point3::from(a))
    }
}

impl Placement {
    /// Agent frame to world frame.
    pub fn transform(&self) -> RigidTransform {
        RigidTransform::from_yaw(self.yaw, self.position.coords)
    }

    /// World-space gesture ray of the placed agent.
    pub fn gesture_ray(&self, pool: &(impl AgentLookup + ?Sized)) -> Result<GestureRay> {
        let e = pool
            .entry(self.agent_index as usize)
            .ok_or_else(|| Error::Lookup(format!("agent {} not in pool", self.agent_index)))?;
        Ok(GestureRay::from_entry(e)?.transformed(&self.transform()))
    }

    pub fn eye(&self, pool: &(impl AgentLookup + ?Sized)) -> Result<Point3> {
        let e = pool
            .entry(self.agent_index as usize)
            .ok_or_else(|| Error::Lookup(format!("agent {} not in pool", self.agent_index)))?;
        Ok(self.transform().apply_point(&e.eye))
    }
}

fn normalize_yaw(deg: f64) -> f64 {
    let y = deg.rem_euclid(360.0);
    if y >= 360.0 {
        0.0
    } else {
        y
    }
}

/// True iff the segment from `eye` to where it first enters `target` (aimed
/// at the target center) crosses no obstacle box. Grazing an obstacle counts
/// as a blockage.
pub fn line_of_sight_clear(eye: &Point3, target: &SceneObject, obstacles: &[&SceneObject]) -> bool {
    let Ok(ray) = Ray::through(*eye, target.bbox.center()) else {
        return true;
    };
    let t_hit = match ray_aabb_intersect(&ray, &target.bbox) {
        Some((t_near, _)) => t_near.max(0.0),
        None => return false,
    };
    !obstacles
        .iter()
        .filter(|o| o.object_id != target.object_id)
        .any(|o| matches!(ray_aabb_intersect(&ray, &o.bbox), Some((t_near, _)) if t_near < t_hit))
}

/// Zero-perturbation gesture geometry of one profile and arm, in the agent
/// frame.
#[derive(Debug, Clone)]
struct ArmGeometry {
    eye: Point3,
    shoulder: Point3,
    reach: f64,
}

impl ArmGeometry {
    fn new(profile: ProfileId, side: Side) -> Result<Self> {
        let sk = Skeleton::for_profile(profile)?;
        Ok(ArmGeometry {
            eye: sk.joint(Joint::Eye),
            shoulder: sk.joint(Joint::Shoulder(side)),
            reach: sk.arm_length(),
        })
    }

    fn fingertip(&self, elevation: f64) -> Point3 {
        let e = elevation.to_radians();
        self.shoulder + Vec3::new(e.cos(), 0.0, e.sin()) * self.reach
    }

    fn vtl(&self, elevation: f64) -> Vec3 {
        self.fingertip(elevation) - self.eye
    }

    /// Elevation angle of the gesture ray above the horizontal, degrees.
    fn ray_pitch(&self, elevation: f64) -> f64 {
        let v = self.vtl(elevation);
        v.z.atan2(v.xy().norm()).to_degrees()
    }

    /// Azimuth of the gesture ray in the agent frame, degrees.
    fn ray_azimuth(&self, elevation: f64) -> f64 {
        let v = self.vtl(elevation);
        v.y.atan2(v.x).to_degrees()
    }

    /// Elevations of the lowest and highest achievable ray pitch. Outside
    /// this range the fingertip swings back past the eye and pitch reverses.
    fn monotone_range(&self) -> (f64, f64) {
        let grid = || (0..=360).map(|k| -90.0 + 0.5 * k as f64);
        let by_pitch = |a: &f64, b: &f64| self.ray_pitch(*a).total_cmp(&self.ray_pitch(*b));
        (grid().min_by(by_pitch).unwrap_or(-90.0), grid().max_by(by_pitch).unwrap_or(90.0))
    }

    /// Arm elevation whose gesture ray has the given pitch, by bisection on
    /// the range where pitch increases with elevation.
    fn solve_elevation(&self, pitch: f64) -> Option<f64> {
        let (mut lo, mut hi) = self.monotone_range();
        if pitch < self.ray_pitch(lo) || pitch > self.ray_pitch(hi) {
            return None;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.ray_pitch(mid) < pitch {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// Yaw that aims the zero-perturbation gesture ray at `target` from a
    /// standing position, and the resulting pitch the ray needs.
    fn aim(&self, position: &Point3, target: &Point3, elevation: f64) -> (f64, f64) {
        let mut yaw = (target.y - position.y).atan2(target.x - position.x).to_degrees();
        let mut pitch = 0.0;
        for _ in 0..8 {
            let eye = RigidTransform::from_yaw(yaw, position.coords).apply_point(&self.eye);
            let d = target - eye;
            pitch = d.z.atan2(d.xy().norm()).to_degrees();
            yaw = d.y.atan2(d.x).to_degrees() - self.ray_azimuth(elevation);
        }
        (normalize_yaw(yaw), pitch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointingSolution {
    pub agent_index: usize,
    pub yaw: f64,
    /// World-space eye of the chosen agent.
    pub eye: Point3,
    pub ray: GestureRay,
    /// Exact zero-perturbation elevation before fluctuation and snapping.
    pub exact_elevation: f64,
    pub attempts: usize,
}

/// Which arm to point with: the one on the target's side when looking from
/// `position` along `facing_hint` (ties go right).
pub fn choose_side(position: &Point3, target: &Point3, facing_hint: &Vec3) -> Side {
    let t = target - position;
    let cross = facing_hint.x * t.y - facing_hint.y * t.x;
    if cross > 0.0 {
        Side::Left
    } else {
        Side::Right
    }
}

/// Chooses a pool agent (uniform profile, arm toward the target) standing at
/// `position` and a yaw such that its gesture ray passes through `target`.
///
/// The exact zero-perturbation elevation is offset by a uniform fluctuation
/// of ±`cfg.fluctuation_deg`, snapped to the pool grid, and the chosen
/// agent's real (perturbed) ray is checked against the box and the angular
/// tolerance. Up to `cfg.pointing_retries` fluctuations are tried.
pub fn solve_pointing<R: Rng>(
    position: &Point3,
    facing_hint: &Vec3,
    target: &SceneObject,
    pool: &(impl AgentLookup + ?Sized),
    rng: &mut R,
    cfg: &Config,
) -> Result<PointingSolution> {
    solve_pointing_with(position, facing_hint, target, pool, rng, cfg, None)
}

/// As [`solve_pointing`], optionally forcing the fluctuation to a fixed value.
pub fn solve_pointing_with<R: Rng>(
    position: &Point3,
    facing_hint: &Vec3,
    target: &SceneObject,
    pool: &(impl AgentLookup + ?Sized),
    rng: &mut R,
    cfg: &Config,
    fixed_fluctuation: Option<f64>,
) -> Result<PointingSolution> {
    let center = target.bbox.center();
    if pool.is_empty() {
        return Err(Error::invalid("agent pool is empty"));
    }
    let profiles = pool.profiles();
    let profile = ProfileId(rng.random_range(0..profiles) as u8);
    let side = choose_side(position, &center, facing_hint);
    let arm = ArmGeometry::new(profile, side)?;
    if (center - arm.eye - position.coords).norm() < 1e-9 {
        return Err(Error::invalid("target center coincides with the eye"));
    }

    let mut exact = 0.0;
    for _ in 0..4 {
        let (_, pitch) = arm.aim(position, &center, exact);
        exact = arm
            .solve_elevation(pitch)
            .ok_or(Error::PointingInfeasible { retries: 0 })?;
    }

    let per_side = pool.elevations_per_side();
    let step = 180.0 / per_side as f64;
    let tolerance = cfg.fluctuation_deg + cfg.perturb_range_deg + step;
    for attempt in 1..=cfg.pointing_retries {
        let delta = match fixed_fluctuation {
            Some(d) => d,
            None => rng.random_range(-cfg.fluctuation_deg..=cfg.fluctuation_deg),
        };
        let k = (((exact + delta) + 90.0) / step).round().clamp(0.0, (per_side - 1) as f64) as usize;
        let elevation = -90.0 + k as f64 * step;
        let index = pool.index_of(profile, side, k);
        let entry = pool
            .entry(index)
            .ok_or_else(|| Error::Lookup(format!("agent {index} not in pool")))?;
        let (yaw, _) = arm.aim(position, &center, elevation);
        let tf = RigidTransform::from_yaw(yaw, position.coords);
        let ray = GestureRay::from_entry(entry)?.transformed(&tf);
        let hits = ray_aabb_intersect(&ray.ray, &target.bbox).is_some();
        let within = angle_between(&ray.ray.dir(), &(center - ray.ray.origin()))
            .map(|a| a <= tolerance)
            .unwrap_or(false);
        if hits && within {
            return Ok(PointingSolution {
                agent_index: index,
                yaw,
                eye: ray.ray.origin(),
                ray,
                exact_elevation: exact,
                attempts: attempt,
            });
        }
        if fixed_fluctuation.is_some() {
            break;
        }
    }
    Err(Error::PointingInfeasible {
        retries: cfg.pointing_retries,
    })
}

/// Horizontal distance from `p` to the box footprint rectangle.
fn xy_distance_to_box(p: &Point3, b: &crate::geom::Aabb) -> f64 {
    let dx = (b.min().x - p.x).max(0.0).max(p.x - b.max().x);
    let dy = (b.min().y - p.y).max(0.0).max(p.y - b.max().y);
    dx.hypot(dy)
}

fn footprint_clear(p: &Point3, floor_z: f64, radius: f64, objects: &[SceneObject]) -> bool {
    let (z0, z1) = (floor_z, floor_z + AGENT_CLEARANCE_HEIGHT);
    objects.iter().all(|o| {
        let overlaps_height = o.bbox.min().z <= z1 && o.bbox.max().z >= z0;
        !overlaps_height || xy_distance_to_box(p, &o.bbox) >= radius
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementSet {
    pub placements: Vec<Placement>,
    /// Number requested (uniform in 3..=5).
    pub requested: usize,
    /// Set when the attempt budget ran out before `requested` were found.
    pub saturated: bool,
    pub attempts: usize,
    pub rejections: BTreeMap<RejectReason, usize>,
}

/// Rejection-samples 3–5 agent placements pointing at `target`.
pub fn sample_placements(
    scene: &Scene,
    target: &SceneObject,
    pool: &(impl AgentLookup + ?Sized),
    seed: u64,
    cfg: &Config,
) -> Result<PlacementSet> {
    if scene.object(target.object_id).is_none() {
        return Err(Error::invalid(format!(
            "object {} is not in scene {}",
            target.object_id, scene.scene_id
        )));
    }
    if pool.is_empty() {
        return Err(Error::invalid("agent pool is empty"));
    }
    let bounds = scene
        .bounds()
        .ok_or_else(|| Error::invalid("scene has no extent"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let requested = rng.random_range(3..=5usize);
    let center = target.bbox.center();
    let room_center = bounds.center();
    let obstacles: Vec<&SceneObject> = scene
        .objects
        .iter()
        .filter(|o| o.object_id != target.object_id)
        .collect();

    let mut placements: Vec<Placement> = Vec::new();
    let mut rejections: BTreeMap<RejectReason, usize> = BTreeMap::new();
    let mut attempts = 0;
    let (r0, r1) = (cfg.distance_min, cfg.distance_max);
    while placements.len() < requested && attempts < cfg.max_attempts {
        attempts += 1;
        let r = (rng.random::<f64>() * (r1 * r1 - r0 * r0) + r0 * r0).sqrt();
        let phi = rng.random::<f64>() * 2.0 * PI;
        let pos = Point3::new(
            (center.x + r * phi.cos()).clamp(bounds.min().x, bounds.max().x),
            (center.y + r * phi.sin()).clamp(bounds.min().y, bounds.max().y),
            scene.floor_z,
        );
        let mut reject = |why| *rejections.entry(why).or_insert(0) += 1;
        let dist = (pos.xy() - center.xy()).norm();
        if dist < r0 || dist > r1 {
            reject(RejectReason::DistanceBand);
            continue;
        }
        if !footprint_clear(&pos, scene.floor_z, cfg.footprint_radius, &scene.objects) {
            reject(RejectReason::Footprint);
            continue;
        }
        if placements
            .iter()
            .any(|p| (p.position - pos).norm() < cfg.min_separation)
        {
            reject(RejectReason::Separation);
            continue;
        }
        let hint = Vec3::new(room_center.x - pos.x, room_center.y - pos.y, 0.0);
        let solution = match solve_pointing(&pos, &hint, target, pool, &mut rng, cfg) {
            Ok(s) => s,
            Err(Error::PointingInfeasible { .. }) => {
                reject(RejectReason::Pointing);
                continue;
            }
            Err(e) => return Err(e),
        };
        if !line_of_sight_clear(&solution.eye, target, &obstacles) {
            reject(RejectReason::LineOfSight);
            continue;
        }
        placements.push(Placement {
            position: pos,
            yaw: solution.yaw,
            agent_index: solution.agent_index as u32,
        });
    }
    if placements.is_empty() {
        return Err(Error::PlacementInfeasible {
            attempts,
            rejections: rejections.into_iter().collect(),
        });
    }
    Ok(PlacementSet {
        saturated: placements.len() < requested,
        placements,
        requested,
        attempts,
        rejections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{PosedSkeleton, Perturbation, Pose};
    use crate::testutil::test_pool;
    use crate::geom::{Aabb, PointCloud};
    use crate::scene::ObjectSpec;

    fn obj(id: u32, label: &str, bbox: Aabb) -> ObjectSpec {
        ObjectSpec {
            object_id: id,
            label: label.into(),
            bbox,
            attributes: vec![],
            descriptions: vec![],
        }
    }

    fn room(objects: Vec<ObjectSpec>) -> Scene {
        let corners = vec![Point3::new(-5.0, -5.0, 0.0), Point3::new(5.0, 5.0, 3.0)];
        Scene::assemble("room", PointCloud::from_points(corners).unwrap(), objects, 0.0).unwrap()
    }

    fn cube(c: Point3, s: f64) -> Aabb {
        Aabb::from_center_size(c, Vec3::repeat(s)).unwrap()
    }

    #[test]
    fn arm_geometry_matches_forward_kinematics() {
        for p in ProfileId::all() {
            for side in [Side::Left, Side::Right] {
                let sk = Skeleton::for_profile(p).unwrap();
                let arm = ArmGeometry::new(p, side).unwrap();
                let mut last = f64::NEG_INFINITY;
                let (start, end) = arm.monotone_range();
                assert!(start < -60.0 && end > 60.0);
                for k in 0..360 {
                    let e = -90.0 + 0.5 * k as f64;
                    let ps = PosedSkeleton::new(&sk, &Pose { side, elevation: e, perturb: Perturbation::zero() });
                    let gap = (ps.fingertip() - arm.fingertip(e)).norm();
                    assert!(gap < 1e-9, "gap {gap} at {e}");
                    assert!((ps.eye() - arm.eye).norm() < 1e-12);
                    let pitch = arm.ray_pitch(e);
                    if e >= start && e <= end {
                        assert!(pitch > last, "pitch must increase with elevation: {e} {pitch} {last}");
                        last = pitch;
                    }
                }
            }
        }
    }

    #[test]
    fn los_cases() {
        let target = room(vec![obj(1, "t", cube(Point3::new(2.0, 0.0, 1.6), 0.4))]).objects[0].clone();
        let eye = Point3::new(0.0, 0.0, 1.6);
        assert!(line_of_sight_clear(&eye, &target, &[]));
        let s = room(vec![
            obj(1, "t", target.bbox),
            obj(2, "mid", cube(Point3::new(1.0, 0.0, 1.6), 0.3)),
            obj(3, "behind", cube(Point3::new(3.5, 0.0, 1.6), 0.5)),
        ]);
        assert!(!line_of_sight_clear(&eye, &target, &[&s.objects[1]]));
        assert!(line_of_sight_clear(&eye, &target, &[&s.objects[2]]));
    }

    #[test]
    fn empty_room_single_target() {
        let s = room(vec![obj(1, "table", Aabb::new(Point3::new(0.0, 0.0, 0.0), Point3::new(0.8, 0.6, 0.75)).unwrap())]);
        let cfg = Config::default();
        let set = sample_placements(&s, &s.objects[0], test_pool(), 4, &cfg).unwrap();
        assert!((3..=5).contains(&set.placements.len()));
        assert!(!set.saturated);
        let violations = verify::verify_placements(&s, &s.objects[0], &set.placements, test_pool(), &cfg);
        assert!(violations.is_empty(), "{violations:?}");
        let again = sample_placements(&s, &s.objects[0], test_pool(), 4, &cfg).unwrap();
        assert_eq!(again, set);
    }

    #[test]
    fn walled_in_target_is_infeasible() {
        let t = cube(Point3::new(0.0, 0.0, 0.5), 0.5);
        let mut objs = vec![obj(1, "t", t)];
        // four tall slabs enclosing the target
        let walls = [
            ((-1.0, -1.0), (1.0, -0.8)),
            ((-1.0, 0.8), (1.0, 1.0)),
            ((-1.0, -1.0), (-0.8, 1.0)),
            ((0.8, -1.0), (1.0, 1.0)),
        ];
        for (i, ((x0, y0), (x1, y1))) in walls.into_iter().enumerate() {
            objs.push(obj(10 + i as u32, "wall", Aabb::new(Point3::new(x0, y0, 0.0), Point3::new(x1, y1, 3.0)).unwrap()));
        }
        let s = room(objs);
        let cfg = Config {
            max_attempts: 300,
            ..Config::default()
        };
        let err = sample_placements(&s, &s.objects[0], test_pool(), 1, &cfg).unwrap_err();
        match err {
            Error::PlacementInfeasible { attempts, rejections } => {
                assert_eq!(attempts, 300);
                assert!(rejections.iter().any(|(r, n)| *r == RejectReason::LineOfSight && *n > 0));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn large_target_first_attempt() {
        let s = room(vec![obj(1, "big", cube(Point3::new(2.0, 0.0, 1.0), 2.0))]);
        let t = &s.objects[0];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pos = Point3::new(-0.5, 0.0, 0.0);
        let sol = solve_pointing(&pos, &Vec3::x(), t, test_pool(), &mut rng, &Config::default()).unwrap();
        assert_eq!(sol.attempts, 1);
        assert!(ray_aabb_intersect(&sol.ray.ray, &t.bbox).is_some());
    }

    #[test]
    fn zero_fluctuation_tracks_center() {
        let cfg = Config::default();
        let s = room(vec![obj(1, "chair", cube(Point3::new(0.0, 0.0, 0.45), 0.9))]);
        let t = &s.objects[0];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst: f64 = 0.0;
        for i in 0..200 {
            let a = i as f64 * 0.1;
            let r = 1.2 + (i % 25) as f64 * 0.1;
            let pos = Point3::new(r * a.cos(), r * a.sin(), 0.0);
            let hint = -pos.coords;
            let sol = solve_pointing_with(&pos, &hint, t, test_pool(), &mut rng, &cfg, Some(0.0)).unwrap();
            let ang = angle_between(&sol.ray.ray.dir(), &(t.bbox.center() - sol.eye)).unwrap();
            worst = worst.max(ang);
        }
        assert!(worst <= cfg.perturb_range_deg + 0.5, "worst {worst}");
    }

    #[test]
    fn tiny_target_never_returns_a_miss() {
        let cfg = Config::default();
        let s = room(vec![obj(1, "cup", cube(Point3::new(4.0, 0.0, 0.8), 0.02))]);
        let t = &s.objects[0];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (mut ok, mut infeasible) = (0, 0);
        for i in 0..40 {
            let pos = Point3::new(0.0, -0.5 + 0.025 * i as f64, 0.0);
            match solve_pointing(&pos, &Vec3::x(), t, test_pool(), &mut rng, &cfg) {
                Ok(sol) => {
                    assert!(ray_aabb_intersect(&sol.ray.ray, &t.bbox).is_some());
                    ok += 1;
                }
                Err(Error::PointingInfeasible { .. }) => infeasible += 1,
                Err(e) => panic!("{e}"),
            }
        }
        assert_eq!(ok + infeasible, 40);
    }

    #[test]
    fn side_choice() {
        let p = Point3::origin();
        assert_eq!(choose_side(&p, &Point3::new(1.0, 1.0, 0.0), &Vec3::x()), Side::Left);
        assert_eq!(choose_side(&p, &Point3::new(1.0, -1.0, 0.0), &Vec3::x()), Side::Right);
    }
}
