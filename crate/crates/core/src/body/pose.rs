use std::collections::BTreeMap;

use nalgebra::Rotation3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{HumanModel, Joint, ProfileId, Skeleton};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::geom::{resample_fixed, voxel_downsample, Point3, PointCloud, Vec3};
use crate::seed::{derive_seed, truncated_normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// +1 for the left side (agent +y), -1 for the right.
    pub fn lateral_sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            Side::Left => "L",
            Side::Right => "R",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }

    pub fn from_index(i: u8) -> Option<Side> {
        match i {
            0 => Some(Side::Left),
            1 => Some(Side::Right),
            _ => None,
        }
    }
}

/// Per-segment angular perturbations in degrees. Each value is the deviation
/// of that segment's orientation from its nominal pointing orientation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Perturbation {
    pub upper_arm: f64,
    pub lower_arm: f64,
    pub hand: f64,
    pub head: f64,
}

impl Perturbation {
    pub fn zero() -> Self {
        Perturbation::default()
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R, sigma: f64, bound: f64) -> Self {
        Perturbation {
            upper_arm: truncated_normal(rng, sigma, bound),
            lower_arm: truncated_normal(rng, sigma, bound),
            hand: truncated_normal(rng, sigma, bound),
            head: truncated_normal(rng, sigma, bound),
        }
    }

    pub fn entries(&self) -> [(&'static str, f64); 4] {
        [
            ("upper_arm", self.upper_arm),
            ("lower_arm", self.lower_arm),
            ("hand", self.hand),
            ("head", self.head),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub side: Side,
    /// Arm elevation in the sagittal plane: -90 down, 0 horizontal, +90 up.
    pub elevation: f64,
    pub perturb: Perturbation,
}

/// Grid position of `elevation` on `[-90, 90)` with the given step.
pub fn elevation_index(elevation: f64, step: f64) -> Result<usize> {
    let k = (elevation + 90.0) / step;
    let count = (180.0 / step).round() as usize;
    let kr = k.round();
    if !elevation.is_finite() || (k - kr).abs() > 1e-9 || kr < 0.0 || kr as usize >= count {
        return Err(Error::invalid(format!(
            "elevation {elevation} is not on the {step}° grid over [-90, 90)"
        )));
    }
    Ok(kr as usize)
}

pub fn elevation_of_index(k: usize, step: f64) -> f64 {
    -90.0 + k as f64 * step
}

fn rot_y(deg: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vec3::y_axis(), deg.to_radians())
}

fn rot_x(deg: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vec3::x_axis(), deg.to_radians())
}

/// Joint positions after applying a pose, plus the per-bone rotations used
/// to carry attached surface samples.
#[derive(Debug, Clone)]
pub struct PosedSkeleton {
    pub joints: BTreeMap<Joint, Point3>,
    pose: Pose,
}

impl PosedSkeleton {
    pub fn new(rest: &Skeleton, pose: &Pose) -> PosedSkeleton {
        let mut out = PosedSkeleton {
            joints: BTreeMap::new(),
            pose: *pose,
        };
        // Joint::all lists parents before children
        for j in Joint::all() {
            let p = match j.parent() {
                None => rest.joint(j),
                Some(parent) => {
                    let r = out.bone_rotation((parent, j));
                    out.joints[&parent] + r * (rest.joint(j) - rest.joint(parent))
                }
            };
            out.joints.insert(j, p);
        }
        out
    }

    /// Orientation of the segment a bone belongs to, relative to rest.
    pub fn bone_rotation(&self, bone: (Joint, Joint)) -> Rotation3<f64> {
        use Joint::*;
        let pose = &self.pose;
        let arm = rot_y(-(pose.elevation + 90.0));
        let q = &pose.perturb;
        match bone {
            (Shoulder(s), Elbow(_)) if s == pose.side => arm * rot_y(q.upper_arm),
            (Elbow(s), Wrist(_)) if s == pose.side => arm * rot_x(q.lower_arm),
            (Wrist(s), Fingertip(_)) if s == pose.side => arm * rot_y(q.hand),
            (SpineTop, Head) | (Head, Eye) => rot_y(q.head),
            _ => Rotation3::identity(),
        }
    }

    pub fn joint(&self, j: Joint) -> Point3 {
        self.joints[&j]
    }

    pub fn eye(&self) -> Point3 {
        self.joint(Joint::Eye)
    }

    pub fn fingertip(&self) -> Point3 {
        self.joint(Joint::Fingertip(self.pose.side))
    }

    pub fn shoulder(&self) -> Point3 {
        self.joint(Joint::Shoulder(self.pose.side))
    }
}

/// A posed body cloud in the agent frame with its gesture landmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct PosedAgent {
    pub profile: ProfileId,
    pub side: Side,
    pub elevation: f64,
    /// Unknown for agents read back from a pool file.
    pub perturb: Option<Perturbation>,
    pub cloud: PointCloud,
    pub eye: Point3,
    pub fingertip: Point3,
}

/// Poses every part, then voxel-downsamples and resamples to a fixed size.
pub fn pose_agent(model: &HumanModel, pose: &Pose, resample_seed: u64, cfg: &Config) -> Result<PosedAgent> {
    elevation_index(pose.elevation, cfg.elevation_step_deg)?;
    let posed = PosedSkeleton::new(&model.skeleton, pose);
    let n = model.raw_point_count();
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for part in &model.parts {
        let r = posed.bone_rotation(part.bone);
        let origin = posed.joint(part.bone.0);
        points.extend(part.offsets.iter().map(|o| origin + r * o));
        normals.extend(part.normals.iter().map(|v| r * v));
    }
    let raw = PointCloud::new(points, None, Some(normals))?;
    let down = voxel_downsample(&raw, cfg.voxel_size)?;
    let cloud = resample_fixed(&down, cfg.agent_points, resample_seed)?;
    Ok(PosedAgent {
        profile: model.profile,
        side: pose.side,
        elevation: pose.elevation,
        perturb: Some(pose.perturb),
        cloud,
        eye: posed.eye(),
        fingertip: posed.fingertip(),
    })
}

/// Samples segment perturbations from `seed` and poses the model pointing
/// with the given arm at the given elevation.
pub fn pose_pointing(model: &HumanModel, side: Side, elevation: f64, seed: u64, cfg: &Config) -> Result<PosedAgent> {
    elevation_index(elevation, cfg.elevation_step_deg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pose = Pose {
        side,
        elevation,
        perturb: Perturbation::sample(&mut rng, cfg.perturb_sigma_deg, cfg.perturb_range_deg),
    };
    pose_agent(model, &pose, derive_seed(seed, 1), cfg)
}
