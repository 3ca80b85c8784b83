use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pose::Side;
use crate::error::{Error, Result};
use crate::geom::{Point3, Vec3};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProfileId(pub u8);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profile {
    pub name: &'static str,
    pub height: f64,
}

/// Three adult males, three adult females, a boy, a girl, an elderly man and
/// an elderly woman. Heights average to 1.757 m.
pub const PROFILES: [Profile; 10] = [
    Profile { name: "adult_male_1", height: 1.90 },
    Profile { name: "adult_male_2", height: 1.95 },
    Profile { name: "adult_male_3", height: 1.88 },
    Profile { name: "adult_female_1", height: 1.80 },
    Profile { name: "adult_female_2", height: 1.78 },
    Profile { name: "adult_female_3", height: 1.82 },
    Profile { name: "male_child", height: 1.48 },
    Profile { name: "female_child", height: 1.46 },
    Profile { name: "elderly_male", height: 1.78 },
    Profile { name: "elderly_female", height: 1.72 },
];

impl ProfileId {
    pub fn all() -> impl Iterator<Item = ProfileId> {
        (0..PROFILES.len() as u8).map(ProfileId)
    }

    pub fn profile(self) -> Result<&'static Profile> {
        PROFILES
            .get(self.0 as usize)
            .ok_or_else(|| Error::invalid(format!("unknown profile id {}", self.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Joint {
    Pelvis,
    SpineTop,
    Head,
    Eye,
    Shoulder(Side),
    Elbow(Side),
    Wrist(Side),
    Fingertip(Side),
    Hip(Side),
    Knee(Side),
    Ankle(Side),
    Toe(Side),
}

impl Joint {
    pub fn parent(self) -> Option<Joint> {
        use Joint::*;
        Some(match self {
            Pelvis => return None,
            SpineTop => Pelvis,
            Head => SpineTop,
            Eye => Head,
            Shoulder(_) => SpineTop,
            Elbow(s) => Shoulder(s),
            Wrist(s) => Elbow(s),
            Fingertip(s) => Wrist(s),
            Hip(_) => Pelvis,
            Knee(s) => Hip(s),
            Ankle(s) => Knee(s),
            Toe(s) => Ankle(s),
        })
    }

    pub fn name(self) -> String {
        use Joint::*;
        let sided = |base: &str, s: Side| format!("{base}_{}", s.suffix());
        match self {
            Pelvis => "pelvis".into(),
            SpineTop => "spine_top".into(),
            Head => "head".into(),
            Eye => "eye".into(),
            Shoulder(s) => sided("shoulder", s),
            Elbow(s) => sided("elbow", s),
            Wrist(s) => sided("wrist", s),
            Fingertip(s) => sided("fingertip", s),
            Hip(s) => sided("hip", s),
            Knee(s) => sided("knee", s),
            Ankle(s) => sided("ankle", s),
            Toe(s) => sided("toe", s),
        }
    }

    pub fn all() -> Vec<Joint> {
        use Joint::*;
        let mut out = vec![Pelvis, SpineTop, Head, Eye];
        for s in [Side::Left, Side::Right] {
            out.extend([Shoulder(s), Elbow(s), Wrist(s), Fingertip(s), Hip(s), Knee(s), Ankle(s), Toe(s)]);
        }
        out
    }
}

/// Rest-pose joint layout for a body of a given height. Agent frame: feet at
/// z = 0, pelvis over the origin, facing +x, left is +y. Arms hang down.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub height: f64,
    pub joints: BTreeMap<Joint, Point3>,
}

// proportions as fractions of stature
const PELVIS_Z: f64 = 0.53;
const SPINE_TOP_Z: f64 = 0.82;
const HEAD_Z: f64 = 0.91;
const EYE_X: f64 = 0.05;
const EYE_Z: f64 = 0.935;
const SHOULDER_Y: f64 = 0.115;
const SHOULDER_Z: f64 = 0.81;
const UPPER_ARM: f64 = 0.186;
const FOREARM: f64 = 0.146;
const HAND: f64 = 0.108;
const HIP_Y: f64 = 0.05;
const HIP_Z: f64 = 0.50;
const KNEE_Z: f64 = 0.285;
const ANKLE_Z: f64 = 0.04;
const TOE_X: f64 = 0.10;
const TOE_Z: f64 = 0.02;
const HEAD_RADIUS: f64 = 0.07;
const HEAD_LOW_Z: f64 = 0.895;
const HEAD_HIGH_Z: f64 = 0.93;

impl Skeleton {
    pub fn new(height: f64) -> Skeleton {
        use Joint::*;
        let h = height;
        let mut j = BTreeMap::new();
        j.insert(Pelvis, Point3::new(0.0, 0.0, PELVIS_Z * h));
        j.insert(SpineTop, Point3::new(0.0, 0.0, SPINE_TOP_Z * h));
        j.insert(Head, Point3::new(0.0, 0.0, HEAD_Z * h));
        j.insert(Eye, Point3::new(EYE_X * h, 0.0, EYE_Z * h));
        for s in [Side::Left, Side::Right] {
            let y = s.lateral_sign();
            let sh = SHOULDER_Z * h;
            j.insert(Shoulder(s), Point3::new(0.0, y * SHOULDER_Y * h, sh));
            j.insert(Elbow(s), Point3::new(0.0, y * SHOULDER_Y * h, sh - UPPER_ARM * h));
            j.insert(Wrist(s), Point3::new(0.0, y * SHOULDER_Y * h, sh - (UPPER_ARM + FOREARM) * h));
            j.insert(
                Fingertip(s),
                Point3::new(0.0, y * SHOULDER_Y * h, sh - (UPPER_ARM + FOREARM + HAND) * h),
            );
            j.insert(Hip(s), Point3::new(0.0, y * HIP_Y * h, HIP_Z * h));
            j.insert(Knee(s), Point3::new(0.0, y * HIP_Y * h, KNEE_Z * h));
            j.insert(Ankle(s), Point3::new(0.0, y * HIP_Y * h, ANKLE_Z * h));
            j.insert(Toe(s), Point3::new(TOE_X * h, y * HIP_Y * h, TOE_Z * h));
        }
        Skeleton { height, joints: j }
    }

    pub fn for_profile(id: ProfileId) -> Result<Skeleton> {
        Ok(Skeleton::new(id.profile()?.height))
    }

    pub fn joint(&self, j: Joint) -> Point3 {
        self.joints[&j]
    }

    pub fn arm_length(&self) -> f64 {
        (UPPER_ARM + FOREARM + HAND) * self.height
    }
}

/// Surface samples of one capsule, rigidly attached to a bone. Positions are
/// offsets from the bone's parent joint in the rest pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub bone: (Joint, Joint),
    pub offsets: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumanModel {
    pub profile: ProfileId,
    pub skeleton: Skeleton,
    pub parts: Vec<Part>,
}

impl HumanModel {
    pub fn height(&self) -> f64 {
        self.skeleton.height
    }

    pub fn raw_point_count(&self) -> usize {
        self.parts.iter().map(|p| p.offsets.len()).sum()
    }
}

fn orthonormal_basis(axis: &Vec3) -> (Vec3, Vec3) {
    let helper = if axis.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = axis.cross(&helper).normalize();
    let e2 = axis.cross(&e1);
    (e1, e2)
}

/// Uniform surface samples on the capsule around segment `a`–`b`.
fn sample_capsule<R: Rng>(a: Point3, b: Point3, radius: f64, density: f64, rng: &mut R) -> (Vec<Point3>, Vec<Vec3>) {
    let seg = b - a;
    let len = seg.norm();
    let axis = if len > 1e-12 { seg / len } else { Vec3::z() };
    let (e1, e2) = orthonormal_basis(&axis);
    let cyl_area = 2.0 * PI * radius * len;
    let cap_area = 4.0 * PI * radius * radius;
    let n = ((cyl_area + cap_area) * density).ceil() as usize;
    let mut pts = Vec::with_capacity(n);
    let mut nrm = Vec::with_capacity(n);
    for _ in 0..n {
        if rng.random::<f64>() * (cyl_area + cap_area) < cyl_area {
            let t = rng.random::<f64>() * len;
            let th = rng.random::<f64>() * 2.0 * PI;
            let dir = e1 * th.cos() + e2 * th.sin();
            pts.push(a + axis * t + dir * radius);
            nrm.push(dir);
        } else {
            let z: f64 = rng.random_range(-1.0..=1.0);
            let phi = rng.random::<f64>() * 2.0 * PI;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let dir = (e1 * (rho * phi.cos()) + e2 * (rho * phi.sin()) + axis * z).normalize();
            let center = if z >= 0.0 { b } else { a };
            pts.push(center + dir * radius);
            nrm.push(dir);
        }
    }
    (pts, nrm)
}

/// Deterministic capsule body for one of the ten profiles.
pub fn build_human(profile: ProfileId, seed: u64, surface_density: f64) -> Result<HumanModel> {
    use Joint::*;
    let height = profile.profile()?.height;
    if !(surface_density > 0.0) {
        return Err(Error::invalid("surface density must be positive"));
    }
    let sk = Skeleton::new(height);
    let h = height;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, profile.0 as u64));

    // (bone, capsule endpoints, radius fraction)
    let mut specs: Vec<((Joint, Joint), Point3, Point3, f64)> = vec![
        ((Pelvis, SpineTop), sk.joint(Pelvis), sk.joint(SpineTop), 0.085),
        ((SpineTop, Head), sk.joint(SpineTop), Point3::new(0.0, 0.0, HEAD_LOW_Z * h), 0.03),
        (
            (SpineTop, Head),
            Point3::new(0.0, 0.0, HEAD_LOW_Z * h),
            Point3::new(0.0, 0.0, HEAD_HIGH_Z * h),
            HEAD_RADIUS,
        ),
    ];
    for s in [Side::Left, Side::Right] {
        specs.extend([
            ((SpineTop, Shoulder(s)), sk.joint(SpineTop), sk.joint(Shoulder(s)), 0.035),
            ((Shoulder(s), Elbow(s)), sk.joint(Shoulder(s)), sk.joint(Elbow(s)), 0.028),
            ((Elbow(s), Wrist(s)), sk.joint(Elbow(s)), sk.joint(Wrist(s)), 0.022),
            ((Wrist(s), Fingertip(s)), sk.joint(Wrist(s)), sk.joint(Fingertip(s)), 0.015),
            ((Pelvis, Hip(s)), sk.joint(Pelvis), sk.joint(Hip(s)), 0.06),
            ((Hip(s), Knee(s)), sk.joint(Hip(s)), sk.joint(Knee(s)), 0.045),
            ((Knee(s), Ankle(s)), sk.joint(Knee(s)), sk.joint(Ankle(s)), 0.033),
            ((Ankle(s), Toe(s)), sk.joint(Ankle(s)), sk.joint(Toe(s)), 0.025),
        ]);
    }

    let parts = specs
        .into_iter()
        .map(|(bone, a, b, r)| {
            let (pts, normals) = sample_capsule(a, b, r * h, surface_density, &mut rng);
            let origin = sk.joint(bone.0);
            Part {
                bone,
                offsets: pts.into_iter().map(|p| p - origin).collect(),
                normals,
            }
        })
        .collect();
    Ok(HumanModel {
        profile,
        skeleton: sk,
        parts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn mean_height_matches_population() {
        let mean = PROFILES.iter().map(|p| p.height).sum::<f64>() / PROFILES.len() as f64;
        assert!((mean - 1.757).abs() < 1e-12);
    }

    #[test]
    fn deterministic_build() {
        let a = build_human(ProfileId(3), 5, 4000.0).unwrap();
        let b = build_human(ProfileId(3), 5, 4000.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.parts, build_human(ProfileId(3), 6, 4000.0).unwrap().parts);
    }

    #[test]
    fn raw_clouds_exceed_agent_size() {
        for id in ProfileId::all() {
            let m = build_human(id, 0, 4000.0).unwrap();
            assert!(m.raw_point_count() > 3000, "{}: {}", id.0, m.raw_point_count());
            assert!(m.parts.iter().all(|p| !p.offsets.is_empty()));
        }
    }

    #[test]
    fn unknown_profile_rejected() {
        assert!(matches!(build_human(ProfileId(10), 0, 4000.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn joint_tree_connected_and_acyclic() {
        let sk = Skeleton::new(1.7);
        let all = Joint::all();
        assert_eq!(sk.joints.len(), all.len());
        for j in &all {
            let mut seen = BTreeSet::new();
            let mut cur = *j;
            while let Some(p) = cur.parent() {
                assert!(seen.insert(cur), "cycle at {}", j.name());
                cur = p;
            }
            assert_eq!(cur, Joint::Pelvis);
        }
        assert_eq!(Joint::Fingertip(Side::Left).parent(), Some(Joint::Wrist(Side::Left)));
        for s in [Side::Left, Side::Right] {
            assert!(sk.joint(Joint::Eye).z > sk.joint(Joint::Shoulder(s)).z);
        }
    }

    #[test]
    fn capsule_normals_unit_and_on_surface() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = Point3::origin();
        let b = Point3::new(0.0, 0.0, 1.0);
        let (pts, nrm) = sample_capsule(a, b, 0.1, 1000.0, &mut rng);
        for (p, n) in pts.iter().zip(&nrm) {
            assert!((n.norm() - 1.0).abs() < 1e-12);
            let t = p.z.clamp(0.0, 1.0);
            let d = (p - Point3::new(0.0, 0.0, t)).norm();
            assert!((d - 0.1).abs() < 1e-9);
        }
    }
}
