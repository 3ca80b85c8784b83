use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{is_finite, Aabb, Point3, RigidTransform, Vec3};
use crate::error::{Error, Result};

/// Ordered point set with optional per-point RGB (in `[0, 1]`) and normals.
///
/// Feature lists, when present, hold exactly one entry per point. Normals are
/// unit length except for all-zero padding entries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point3>,
    colors: Option<Vec<Vec3>>,
    normals: Option<Vec<Vec3>>,
}

const NORMAL_TOL: f64 = 1e-6;

impl PointCloud {
    pub fn new(
        points: Vec<Point3>,
        colors: Option<Vec<Vec3>>,
        normals: Option<Vec<Vec3>>,
    ) -> Result<Self> {
        let n = points.len();
        if let Some(p) = points.iter().find(|p| !is_finite(p)) {
            return Err(Error::invalid(format!("non-finite point {p:?}")));
        }
        if let Some(c) = &colors {
            if c.len() != n {
                return Err(Error::invalid(format!("{} colors for {n} points", c.len())));
            }
            if c.iter().flat_map(|c| c.iter()).any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::invalid("colors must lie in [0, 1]"));
            }
        }
        if let Some(nr) = &normals {
            if nr.len() != n {
                return Err(Error::invalid(format!("{} normals for {n} points", nr.len())));
            }
            for v in nr {
                let len = v.norm();
                if !(len == 0.0 || (len - 1.0).abs() <= NORMAL_TOL) {
                    return Err(Error::invalid(format!("normal {v:?} is not unit length")));
                }
            }
        }
        Ok(PointCloud {
            points,
            colors,
            normals,
        })
    }

    pub fn from_points(points: Vec<Point3>) -> Result<Self> {
        PointCloud::new(points, None, None)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn colors(&self) -> Option<&[Vec3]> {
        self.colors.as_deref()
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn bounds(&self) -> Option<Aabb> {
        Aabb::from_points(&self.points)
    }

    pub fn transformed(&self, tf: &RigidTransform) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| tf.apply_point(p)).collect(),
            colors: self.colors.clone(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| tf.apply_vector(n)).collect()),
        }
    }

    /// Points at the given indices, features carried along.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            colors: self
                .colors
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
            normals: self
                .normals
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
        }
    }

    /// Concatenation. A feature present on only one side is zero-filled on
    /// the other.
    pub fn concat(&self, other: &PointCloud) -> PointCloud {
        fn merge(
            a: &Option<Vec<Vec3>>,
            na: usize,
            b: &Option<Vec<Vec3>>,
            nb: usize,
        ) -> Option<Vec<Vec3>> {
            if a.is_none() && b.is_none() {
                return None;
            }
            let mut out = Vec::with_capacity(na + nb);
            match a {
                Some(v) => out.extend_from_slice(v),
                None => out.resize(na, Vec3::zeros()),
            }
            match b {
                Some(v) => out.extend_from_slice(v),
                None => out.resize(na + nb, Vec3::zeros()),
            }
            Some(out)
        }
        let (na, nb) = (self.len(), other.len());
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        PointCloud {
            points,
            colors: merge(&self.colors, na, &other.colors, nb),
            normals: merge(&self.normals, na, &other.normals, nb),
        }
    }

    /// Drops the color channel.
    pub fn without_colors(mut self) -> PointCloud {
        self.colors = None;
        self
    }
}

type VoxelKey = [i64; 3];

fn voxel_key(p: &Point3, size: f64) -> VoxelKey {
    [
        (p.x / size).floor() as i64,
        (p.y / size).floor() as i64,
        (p.z / size).floor() as i64,
    ]
}

/// Replaces the points of each occupied voxel by their centroid. Colors are
/// averaged, normals averaged then renormalized (zero when they cancel).
/// Output is ordered by ascending voxel key.
pub fn voxel_downsample(pc: &PointCloud, voxel_size: f64) -> Result<PointCloud> {
    if !(voxel_size > 0.0) || !voxel_size.is_finite() {
        return Err(Error::invalid(format!("voxel size must be positive, got {voxel_size}")));
    }
    if pc.is_empty() {
        return Err(Error::invalid("cannot voxel-downsample an empty cloud"));
    }
    let mut order: Vec<(VoxelKey, usize)> = pc
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| (voxel_key(p, voxel_size), i))
        .collect();
    order.sort_unstable();

    let mut points = Vec::new();
    let mut colors = pc.colors.as_ref().map(|_| Vec::new());
    let mut normals = pc.normals.as_ref().map(|_| Vec::new());

    for group in order.chunk_by(|a, b| a.0 == b.0) {
        let inv = 1.0 / group.len() as f64;
        let centroid = group
            .iter()
            .fold(Vec3::zeros(), |acc, &(_, i)| acc + pc.points[i].coords);
        points.push(Point3::from(centroid * inv));
        if let (Some(out), Some(src)) = (colors.as_mut(), pc.colors.as_ref()) {
            let c = group.iter().fold(Vec3::zeros(), |acc, &(_, i)| acc + src[i]);
            out.push(c * inv);
        }
        if let (Some(out), Some(src)) = (normals.as_mut(), pc.normals.as_ref()) {
            let n = group.iter().fold(Vec3::zeros(), |acc, &(_, i)| acc + src[i]);
            let len = n.norm();
            out.push(if len > 1e-12 { n / len } else { Vec3::zeros() });
        }
    }
    Ok(PointCloud {
        points,
        colors,
        normals,
    })
}

/// Brings a cloud to exactly `n` points: a seeded uniform subset (kept in
/// input order) when larger, zero padding when smaller.
pub fn resample_fixed(pc: &PointCloud, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::invalid("resample target must be positive"));
    }
    match pc.len().cmp(&n) {
        std::cmp::Ordering::Equal => Ok(pc.clone()),
        std::cmp::Ordering::Greater => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = rand::seq::index::sample(&mut rng, pc.len(), n).into_vec();
            idx.sort_unstable();
            Ok(pc.select(&idx))
        }
        std::cmp::Ordering::Less => {
            let mut out = pc.clone();
            out.points.resize(n, Point3::origin());
            if let Some(c) = out.colors.as_mut() {
                c.resize(n, Vec3::zeros());
            }
            if let Some(c) = out.normals.as_mut() {
                c.resize(n, Vec3::zeros());
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::collections::HashSet;

    #[test]
    fn single_point_identity() {
        let pc = PointCloud::from_points(vec![Point3::new(0.3, -1.0, 2.0)]).unwrap();
        let out = voxel_downsample(&pc, 0.7).unwrap();
        assert_eq!(out.points(), pc.points());
    }

    #[test]
    fn shared_voxel_centroid() {
        let pc = PointCloud::from_points(vec![Point3::origin(), Point3::new(0.001, 0.0, 0.0)]).unwrap();
        let out = voxel_downsample(&pc, 0.0025).unwrap();
        assert_eq!(out.len(), 1);
        assert_relative_eq!(out.points()[0], Point3::new(0.0005, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn grid_all_distinct() {
        let mut pts = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                for k in 0..10 {
                    // offset into voxel interiors so floor() is unambiguous
                    pts.push(Point3::new(
                        0.01 * i as f64 + 0.001,
                        0.01 * j as f64 + 0.001,
                        0.01 * k as f64 + 0.001,
                    ));
                }
            }
        }
        let pc = PointCloud::from_points(pts.clone()).unwrap();
        let keys: HashSet<_> = pts.iter().map(|p| voxel_key(p, 0.0025)).collect();
        assert_eq!(keys.len(), 1000);
        assert_eq!(voxel_downsample(&pc, 0.0025).unwrap().len(), 1000);
    }

    #[test]
    fn features_averaged() {
        let pc = PointCloud::new(
            vec![Point3::origin(), Point3::new(0.1, 0.0, 0.0)],
            Some(vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 1.0)]),
            Some(vec![Vec3::x(), -Vec3::x()]),
        )
        .unwrap();
        let out = voxel_downsample(&pc, 1.0).unwrap();
        assert_eq!(out.colors().unwrap()[0], Vec3::new(0.5, 0.0, 0.5));
        assert_eq!(out.normals().unwrap()[0], Vec3::zeros());
    }

    #[test]
    fn bad_voxel_size() {
        let pc = PointCloud::from_points(vec![Point3::origin()]).unwrap();
        assert!(matches!(voxel_downsample(&pc, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(voxel_downsample(&pc, -1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn resample_identity_and_padding() {
        let pts: Vec<_> = (0..5).map(|i| Point3::new(i as f64, 1.0, 1.0)).collect();
        let pc = PointCloud::new(pts.clone(), None, Some(vec![Vec3::z(); 5])).unwrap();
        assert_eq!(resample_fixed(&pc, 5, 1).unwrap(), pc);

        let two = pc.select(&[0, 1]);
        let out = resample_fixed(&two, 4, 1).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(&out.points()[..2], &pts[..2]);
        assert_eq!(&out.points()[2..], &[Point3::origin(); 2]);
        assert_eq!(&out.normals().unwrap()[2..], &[Vec3::zeros(); 2]);
    }

    #[test]
    fn resample_subset_deterministic() {
        let pts: Vec<_> = (0..10_000)
            .map(|i| Point3::new(i as f64, (i % 7) as f64, 0.5 * i as f64))
            .collect();
        let pc = PointCloud::from_points(pts).unwrap();
        let a = resample_fixed(&pc, 3000, 1).unwrap();
        let b = resample_fixed(&pc, 3000, 2).unwrap();
        let a2 = resample_fixed(&pc, 3000, 1).unwrap();
        assert_eq!(a, a2);
        assert_ne!(a, b);
        for out in [&a, &b] {
            assert_eq!(out.len(), 3000);
            let members: HashSet<u64> = out.points().iter().map(|p| p.x as u64).collect();
            assert_eq!(members.len(), 3000);
            assert!(out.points().iter().all(|p| p.x < 10_000.0 && p.x.fract() == 0.0));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_cloud() -> impl Strategy<Value = PointCloud> {
            prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 1..300)
                .prop_map(|v| PointCloud::from_points(v.into_iter().map(Point3::from).collect()).unwrap())
        }

        proptest! {
            #[test]
            fn voxel_keys_unique(pc in arb_cloud(), size in 0.01f64..0.5) {
                let out = voxel_downsample(&pc, size).unwrap();
                prop_assert!(out.len() <= pc.len());
                // centroids stay inside their voxel, so keys are distinct
                let keys: HashSet<_> = out.points().iter().map(|p| voxel_key(p, size)).collect();
                prop_assert_eq!(keys.len(), out.len());
            }

            #[test]
            fn resample_exact_length(pc in arb_cloud(), n in 1usize..400, seed in any::<u64>()) {
                let out = resample_fixed(&pc, n, seed).unwrap();
                prop_assert_eq!(out.len(), n);
                prop_assert_eq!(&out, &resample_fixed(&pc, n, seed).unwrap());
                if pc.len() >= n {
                    for p in out.points() {
                        prop_assert!(pc.points().contains(p));
                    }
                }
            }
        }
    }
}
