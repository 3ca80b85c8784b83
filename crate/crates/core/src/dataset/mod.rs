//! Dataset records, JSONL storage, scene-level splits, and load-time
//! composition of agents into scene clouds.

mod lexicon;

pub use lexicon::{describe_stats, Category, DescriptionStats, Lexicons};

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::body::AgentLookup;
use crate::error::{Error, Result};
use crate::geom::PointCloud;
use crate::place::Placement;
use crate::scene::Scene;

/// Lowercase word tokens: maximal runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EruSample {
    pub sample_id: String,
    pub scene_id: String,
    pub object_id: u32,
    pub description: String,
    pub tokens: Vec<String>,
    pub agent_index: u32,
    pub placement: Placement,
}

impl EruSample {
    pub fn validate(&self, scene: &Scene) -> Result<()> {
        if scene.scene_id != self.scene_id {
            return Err(Error::Validation(format!(
                "sample {} belongs to scene {}, not {}",
                self.sample_id, self.scene_id, scene.scene_id
            )));
        }
        if scene.object(self.object_id).is_none() {
            return Err(Error::Validation(format!(
                "sample {}: object {} not in scene {}",
                self.sample_id, self.object_id, self.scene_id
            )));
        }
        if self.placement.agent_index != self.agent_index {
            return Err(Error::Validation(format!(
                "sample {}: placement agent {} differs from agent_index {}",
                self.sample_id, self.placement.agent_index, self.agent_index
            )));
        }
        if self.tokens != tokenize(&self.description) {
            return Err(Error::Validation(format!("sample {}: tokens do not match description", self.sample_id)));
        }
        Ok(())
    }
}

/// One record per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T], what: &'static str) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Format {
            what,
            message: e.to_string(),
        })?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_samples(path: &Path, samples: &[EruSample]) -> Result<()> {
    write_jsonl(path, samples, "sample")
}

/// Parses JSONL records, skipping blank lines. Errors carry the 1-based line.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| Error::Parse {
            source_name: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(v);
    }
    Ok(out)
}

pub fn read_samples(path: &Path) -> Result<Vec<EruSample>> {
    read_jsonl(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub assignment: BTreeMap<String, Split>,
}

impl SplitSpec {
    pub fn split_of(&self, scene_id: &str) -> Option<Split> {
        self.assignment.get(scene_id).copied()
    }

    /// Samples whose scene is assigned to `split`, in input order.
    pub fn select<'a>(&self, samples: &'a [EruSample], split: Split) -> Vec<&'a EruSample> {
        samples
            .iter()
            .filter(|s| self.split_of(&s.scene_id) == Some(split))
            .collect()
    }
}

/// Shuffles scenes with `seed` and assigns them to train until the train
/// sample count reaches `train_fraction` of the total; the rest go to val.
pub fn split_samples(samples: &[EruSample], train_fraction: f64, seed: u64) -> Result<SplitSpec> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction must be in (0, 1), got {train_fraction}")));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in samples {
        *counts.entry(s.scene_id.as_str()).or_insert(0) += 1;
    }
    let mut scenes: Vec<(&str, usize)> = counts.into_iter().collect();
    scenes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let goal = train_fraction * samples.len() as f64;
    let mut in_train = 0usize;
    let mut assignment = BTreeMap::new();
    for (id, n) in scenes {
        let split = if (in_train as f64) < goal {
            in_train += n;
            Split::Train
        } else {
            Split::Val
        };
        assignment.insert(id.to_string(), split);
    }
    Ok(SplitSpec {
        train_fraction,
        assignment,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointSource {
    Scene,
    Agent,
}

/// A scene cloud with one agent appended, tagging each point's origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedCloud {
    pub cloud: PointCloud,
    pub source: Vec<PointSource>,
    scene_colors: bool,
    scene_normals: bool,
}

impl ComposedCloud {
    pub fn agent_indices(&self) -> Vec<usize> {
        self.indices(PointSource::Agent)
    }

    fn indices(&self, which: PointSource) -> Vec<usize> {
        (0..self.source.len()).filter(|&i| self.source[i] == which).collect()
    }

    /// Drops agent points (and any feature channel the scene lacked),
    /// recovering the original scene cloud.
    pub fn strip(&self) -> PointCloud {
        let s = self.cloud.select(&self.indices(PointSource::Scene));
        let colors = s.colors().filter(|_| self.scene_colors).map(|c| c.to_vec());
        let normals = s.normals().filter(|_| self.scene_normals).map(|n| n.to_vec());
        PointCloud::new(s.points().to_vec(), colors, normals).expect("subset of a valid cloud")
    }
}

/// Appends the sample's agent, moved into place, after the scene points.
pub fn compose_scene(scene: &Scene, sample: &EruSample, pool: &(impl AgentLookup + ?Sized)) -> Result<ComposedCloud> {
    let idx = sample.placement.agent_index as usize;
    if idx >= pool.len() {
        return Err(Error::Lookup(format!("agent {idx} not in pool of {}", pool.len())));
    }
    let agent = pool.agent(idx)?;
    let placed = agent.cloud.transformed(&sample.placement.transform());
    let n_scene = scene.cloud.len();
    Ok(ComposedCloud {
        cloud: scene.cloud.concat(&placed),
        source: std::iter::repeat_n(PointSource::Scene, n_scene)
            .chain(std::iter::repeat_n(PointSource::Agent, placed.len()))
            .collect(),
        scene_colors: scene.cloud.colors().is_some(),
        scene_normals: scene.cloud.normals().is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point3;
    use proptest::prelude::*;

    fn sample(id: &str, scene: &str) -> EruSample {
        let description = "The red chair, left of the table.".to_string();
        EruSample {
            sample_id: id.into(),
            scene_id: scene.into(),
            object_id: 3,
            tokens: tokenize(&description),
            description,
            agent_index: 17,
            placement: Placement {
                position: Point3::new(0.1, -2.3, 0.0),
                yaw: 271.25,
                agent_index: 17,
            },
        }
    }

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("The red chair, left-of  table!"), ["the", "red", "chair", "left", "of", "table"]);
        assert!(tokenize("  ,. ").is_empty());
    }

    #[test]
    fn empty_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        write_samples(&p, &[]).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 0);
        assert!(read_samples(&p).unwrap().is_empty());
    }

    #[test]
    fn missing_field_reports_line_and_name() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        let good = serde_json::to_string(&sample("a", "s")).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&good).unwrap();
        v.as_object_mut().unwrap().remove("object_id");
        std::fs::write(&p, format!("{good}\n{v}\n")).unwrap();
        match read_samples(&p).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("object_id"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn random_samples_roundtrip(
            rows in prop::collection::vec(
                (any::<u32>(), -1e3f64..1e3, -1e3f64..1e3, 0f64..360.0, "[a-zA-Z ,.]{0,40}"),
                100,
            )
        ) {
            let samples: Vec<EruSample> = rows
                .iter()
                .enumerate()
                .map(|(i, (obj, x, y, yaw, text))| EruSample {
                    sample_id: format!("s{i}"),
                    scene_id: format!("scene{}", i % 7),
                    object_id: *obj,
                    description: text.clone(),
                    tokens: tokenize(text),
                    agent_index: obj % 7200,
                    placement: Placement { position: Point3::new(*x, *y, 0.0), yaw: *yaw, agent_index: obj % 7200 },
                })
                .collect();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("s.jsonl");
            write_samples(&p, &samples).unwrap();
            prop_assert_eq!(read_samples(&p).unwrap(), samples);
        }
    }

    #[test]
    fn split_cases() {
        let one: Vec<_> = (0..5).map(|i| sample(&format!("{i}"), "only")).collect();
        let s = split_samples(&one, 0.794, 3).unwrap();
        assert_eq!(s.split_of("only"), Some(Split::Train));

        let two: Vec<_> = (0..4).map(|i| sample(&format!("{i}"), if i < 2 { "a" } else { "b" })).collect();
        for seed in 0..10 {
            let s = split_samples(&two, 0.5, seed).unwrap();
            let mut v: Vec<Split> = s.assignment.values().copied().collect();
            v.sort();
            assert_eq!(v, [Split::Train, Split::Val]);
        }
        assert!(split_samples(&two, 1.0, 0).is_err());
    }

    #[test]
    fn split_partitions_scenes() {
        let samples: Vec<_> = (0..300).map(|i| sample(&format!("{i}"), &format!("sc{}", (i * 7) % 41))).collect();
        let s = split_samples(&samples, 0.794, 11).unwrap();
        assert_eq!(s.assignment.len(), 41);
        let train = s.select(&samples, Split::Train).len();
        let val = s.select(&samples, Split::Val).len();
        assert_eq!(train + val, 300);
        assert!(train as f64 >= 0.794 * 300.0);
        assert_eq!(s, split_samples(&samples, 0.794, 11).unwrap());
    }

    fn compose_fixture(placement: Placement) -> (Scene, EruSample, ComposedCloud) {
        use crate::scene::ObjectSpec;
        let pts: Vec<Point3> = (0..500).map(|i| Point3::new((i % 10) as f64 * 0.3, (i / 10 % 10) as f64 * 0.3, (i / 100) as f64 * 0.2)).collect();
        let colors = Some(pts.iter().map(|p| crate::geom::Vec3::new(p.x / 3.0, 0.5, 0.25)).collect());
        let cloud = PointCloud::new(pts, colors, None).unwrap();
        let bbox = crate::geom::Aabb::new(Point3::new(0.0, 0.0, 0.0), Point3::new(0.7, 0.7, 0.5)).unwrap();
        let spec = ObjectSpec { object_id: 3, label: "chair".into(), bbox, attributes: vec![], descriptions: vec![] };
        let scene = Scene::assemble("s", cloud, vec![spec], 0.0).unwrap();
        let mut smp = sample("x", "s");
        smp.agent_index = placement.agent_index;
        smp.placement = placement;
        let composed = compose_scene(&scene, &smp, crate::testutil::test_pool()).unwrap();
        (scene, smp, composed)
    }

    #[test]
    fn compose_appends_agent_and_strips_back() {
        let pl = Placement { position: Point3::new(2.0, 1.0, 0.0), yaw: 135.0, agent_index: 4321 };
        let (scene, smp, c) = compose_fixture(pl);
        assert_eq!(c.cloud.len(), 500 + 3000);
        assert_eq!(c.agent_indices().len(), 3000);
        assert_eq!(&c.cloud.points()[..500], scene.cloud.points());
        assert_eq!(c.strip(), scene.cloud);

        // landmark moved independently: rotate by yaw then translate
        let pool = crate::testutil::test_pool();
        let e = pool.entry(4321).unwrap().eye;
        let (s, co) = 135f64.to_radians().sin_cos();
        let want = Point3::new(co * e.x - s * e.y + 2.0, s * e.x + co * e.y + 1.0, e.z);
        assert!((smp.placement.eye(pool).unwrap() - want).norm() < 1e-12);
    }

    #[test]
    fn identity_placement_keeps_pool_points() {
        let pl = Placement { position: Point3::origin(), yaw: 0.0, agent_index: 12 };
        let (_, _, c) = compose_fixture(pl);
        let agent = crate::testutil::test_pool().agent(12).unwrap();
        assert_eq!(&c.cloud.points()[500..], agent.cloud.points());
    }

    #[test]
    fn missing_agent_is_lookup_error() {
        let mut smp = sample("x", "s");
        smp.placement.agent_index = 7200;
        let scene = Scene::assemble("s", PointCloud::from_points(vec![Point3::origin()]).unwrap(), vec![], 0.0).unwrap();
        assert!(matches!(compose_scene(&scene, &smp, crate::testutil::test_pool()), Err(Error::Lookup(_))));
    }
}
