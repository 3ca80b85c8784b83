//! Procedural indoor fixture scenes, the sample synthesis pipeline, and the
//! identical-object micro-benchmark.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::body::AgentLookup;
use crate::config::Config;
use crate::dataset::{tokenize, EruSample};
use crate::error::{Error, RejectReason, Result};
use crate::geom::{Aabb, Point3, PointCloud, Vec3};
use crate::place::sample_placements;
use crate::scene::{ObjectSpec, Scene, SceneObject};
use crate::seed::{derive_seed, fnv1a};

struct Category {
    label: &'static str,
    size: [f64; 3],
}

const CATEGORIES: &[Category] = &[
    Category { label: "chair", size: [0.5, 0.5, 0.9] },
    Category { label: "table", size: [1.2, 0.8, 0.75] },
    Category { label: "sofa", size: [2.0, 0.9, 0.85] },
    Category { label: "bed", size: [2.0, 1.5, 0.6] },
    Category { label: "desk", size: [1.4, 0.7, 0.75] },
    Category { label: "cabinet", size: [0.8, 0.5, 1.2] },
    Category { label: "bookshelf", size: [1.0, 0.35, 1.9] },
    Category { label: "lamp", size: [0.35, 0.35, 1.5] },
    Category { label: "trash can", size: [0.35, 0.35, 0.5] },
    Category { label: "armchair", size: [0.8, 0.8, 0.9] },
    Category { label: "nightstand", size: [0.45, 0.4, 0.55] },
    Category { label: "ottoman", size: [0.6, 0.6, 0.45] },
    Category { label: "plant", size: [0.4, 0.4, 1.0] },
    Category { label: "tv stand", size: [1.5, 0.45, 0.5] },
];

const COLORS: &[(&str, [f64; 3])] = &[
    ("red", [0.8, 0.15, 0.1]),
    ("blue", [0.15, 0.25, 0.8]),
    ("green", [0.2, 0.6, 0.25]),
    ("white", [0.92, 0.92, 0.9]),
    ("black", [0.08, 0.08, 0.08]),
    ("brown", [0.45, 0.3, 0.15]),
    ("gray", [0.5, 0.5, 0.5]),
    ("yellow", [0.9, 0.8, 0.2]),
];

const SHAPES: &[&str] = &["round", "square", "rectangular"];

/// Surface samples per square meter of object and room surfaces.
const SURFACE_DENSITY: f64 = 120.0;
const WALL_HEIGHT: f64 = 2.8;

fn box_surface(b: &Aabb, color: [f64; 3], rng: &mut ChaCha8Rng, pts: &mut Vec<Point3>, cols: &mut Vec<Vec3>) {
    let (lo, s) = (b.min(), b.size());
    // five faces, no bottom
    let faces = [
        (s.x * s.y, 2usize, 1.0),
        (s.x * s.z, 1, 0.0),
        (s.x * s.z, 1, 1.0),
        (s.y * s.z, 0, 0.0),
        (s.y * s.z, 0, 1.0),
    ];
    for (area, axis, side) in faces {
        let n = ((area * SURFACE_DENSITY).ceil() as usize).max(4);
        for _ in 0..n {
            let mut p = Point3::new(
                lo.x + rng.random::<f64>() * s.x,
                lo.y + rng.random::<f64>() * s.y,
                lo.z + rng.random::<f64>() * s.z,
            );
            p[axis] = lo[axis] + side * s[axis];
            pts.push(p);
            let j = 0.05 * (rng.random::<f64>() - 0.5);
            cols.push(Vec3::new(color[0] + j, color[1] + j, color[2] + j).map(|c| c.clamp(0.0, 1.0)));
        }
    }
}

fn room_shell(w: f64, d: f64, pts: &mut Vec<Point3>, cols: &mut Vec<Vec3>) {
    let step = 0.1;
    let (nx, ny, nz) = ((w / step) as usize, (d / step) as usize, (WALL_HEIGHT / step) as usize);
    for i in 0..=nx {
        for j in 0..=ny {
            pts.push(Point3::new(i as f64 * step, j as f64 * step, 0.0));
            cols.push(Vec3::new(0.6, 0.55, 0.5));
        }
    }
    for k in 1..=nz {
        let z = k as f64 * step;
        for i in 0..=nx {
            for y in [0.0, d] {
                pts.push(Point3::new(i as f64 * step, y, z));
                cols.push(Vec3::repeat(0.85));
            }
        }
        for j in 1..ny {
            for x in [0.0, w] {
                pts.push(Point3::new(x, j as f64 * step, z));
                cols.push(Vec3::repeat(0.85));
            }
        }
    }
}

fn relation(o: &SceneObject, others: &[SceneObject], room: (f64, f64)) -> String {
    let c = o.bbox.center();
    let corner = [(0.0, 0.0), (room.0, 0.0), (0.0, room.1), (room.0, room.1)]
        .iter()
        .any(|(x, y)| (c.x - x).hypot(c.y - y) < 1.5);
    let nearest = others
        .iter()
        .filter(|p| p.object_id != o.object_id)
        .min_by(|a, b| {
            let da = (a.bbox.center() - c).norm();
            let db = (b.bbox.center() - c).norm();
            da.total_cmp(&db).then(a.object_id.cmp(&b.object_id))
        });
    match nearest {
        Some(n) if (n.bbox.center() - c).norm() < 2.5 => format!("next to the {}", n.label),
        Some(n) => {
            let side = if n.bbox.center().x > c.x { "left" } else { "right" };
            format!("to the {side} of the {}", n.label)
        }
        None if corner => "in the corner".into(),
        None => "in the middle of the room".into(),
    }
}

/// A furnished rectangular room with 4–9 floor-standing objects, some
/// sharing a label, each with attributes and two descriptions.
pub fn fixture_scene(scene_id: &str, seed: u64) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.random_range(5.0..8.0);
    let d = rng.random_range(4.5..7.0);
    let n_obj = rng.random_range(4..=9usize);
    let mut specs: Vec<ObjectSpec> = Vec::new();
    let mut colors = Vec::new();
    let mut tries = 0;
    while specs.len() < n_obj && tries < 500 {
        tries += 1;
        let cat = if !specs.is_empty() && rng.random_bool(0.35) {
            let l = specs.choose(&mut rng).expect("non-empty").label.clone();
            CATEGORIES.iter().find(|c| c.label == l).expect("known label")
        } else {
            CATEGORIES.choose(&mut rng).expect("non-empty")
        };
        let scale = rng.random_range(0.85..1.15);
        let size = Vec3::new(cat.size[0], cat.size[1], cat.size[2]) * scale;
        let margin = 0.1;
        if size.x + 2.0 * margin > w || size.y + 2.0 * margin > d {
            continue;
        }
        let x = rng.random_range(margin..w - size.x - margin);
        let y = rng.random_range(margin..d - size.y - margin);
        let bbox = Aabb::new(Point3::new(x, y, 0.0), Point3::new(x + size.x, y + size.y, size.z))?;
        if specs.iter().any(|s| s.bbox.expanded(0.3).intersection_volume(&bbox) > 0.0) {
            continue;
        }
        let (cname, rgb) = *COLORS.choose(&mut rng).expect("non-empty");
        let mut attributes = vec![cname.to_string()];
        if rng.random_bool(0.6) {
            attributes.push(SHAPES.choose(&mut rng).expect("non-empty").to_string());
        }
        attributes.push(if scale >= 1.0 { "big" } else { "small" }.to_string());
        colors.push(rgb);
        specs.push(ObjectSpec {
            object_id: specs.len() as u32 + 1,
            label: cat.label.to_string(),
            bbox,
            attributes,
            descriptions: vec![],
        });
    }

    let mut pts = Vec::new();
    let mut cols = Vec::new();
    room_shell(w, d, &mut pts, &mut cols);
    for (s, rgb) in specs.iter().zip(&colors) {
        box_surface(&s.bbox, *rgb, &mut rng, &mut pts, &mut cols);
    }
    let cloud = PointCloud::new(pts, Some(cols), None)?;
    let mut scene = Scene::assemble(scene_id, cloud, specs, 0.0)?;

    let snapshot = scene.objects.clone();
    for o in scene.objects.iter_mut() {
        let rel = relation(o, &snapshot, (w, d));
        let color = &o.attributes[0];
        let shape = o.attributes.iter().find(|a| SHAPES.contains(&a.as_str()));
        let size = o.attributes.last().expect("size attribute");
        let first = match shape {
            Some(sh) => format!("the {color} {sh} {} {rel}", o.label),
            None => format!("the {color} {} {rel}", o.label),
        };
        let second = if rng.random_bool(0.3) {
            format!("a {size} {} {rel}", o.label)
        } else {
            format!("the {} {rel}, it is {color}", o.label)
        };
        o.descriptions = vec![first, second];
    }
    Ok(scene)
}

/// `n` fixture scenes named `scene0000`, `scene0001`, ...
pub fn fixture_scenes(n: usize, seed: u64) -> Result<Vec<Scene>> {
    (0..n)
        .into_par_iter()
        .map(|i| fixture_scene(&format!("scene{i:04}"), derive_seed(seed, i as u64)))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct SynthReport {
    pub objects: usize,
    pub placed_objects: usize,
    pub saturated_objects: usize,
    pub infeasible_objects: usize,
    pub samples: usize,
    pub rejections: BTreeMap<RejectReason, usize>,
}

impl SynthReport {
    pub fn mean_placements(&self) -> f64 {
        if self.placed_objects == 0 {
            0.0
        } else {
            self.samples as f64 / self.placed_objects as f64
        }
    }
}

/// Text for the `j`-th placement of an object: its descriptions in turn, or
/// "the {label}" when it has none.
pub fn description_for(o: &SceneObject, j: usize) -> String {
    if o.descriptions.is_empty() {
        format!("the {}", o.label)
    } else {
        o.descriptions[j % o.descriptions.len()].clone()
    }
}

/// Per-object placement seed: independent of scene order and thread count.
pub fn object_seed(master: u64, scene_id: &str, object_id: u32) -> u64 {
    derive_seed(derive_seed(master, fnv1a(scene_id)), object_id as u64)
}

/// Places 3–5 pointing agents for every object of every scene and emits one
/// sample per placement. Objects with no feasible placement are skipped and
/// counted.
pub fn synthesize(
    scenes: &[Scene],
    pool: &(impl AgentLookup + ?Sized),
    seed: u64,
    cfg: &Config,
) -> Result<(Vec<EruSample>, SynthReport)> {
    let jobs: Vec<(&Scene, &SceneObject)> = scenes
        .iter()
        .flat_map(|s| s.objects.iter().map(move |o| (s, o)))
        .collect();
    let results: Vec<Result<(Vec<EruSample>, Option<crate::place::PlacementSet>)>> = jobs
        .par_iter()
        .map(|(scene, obj)| {
            match sample_placements(scene, obj, pool, object_seed(seed, &scene.scene_id, obj.object_id), cfg) {
                Ok(set) => {
                    let samples = set
                        .placements
                        .iter()
                        .enumerate()
                        .map(|(j, p)| {
                            let description = description_for(obj, j);
                            EruSample {
                                sample_id: format!("{}_{:04}_{j}", scene.scene_id, obj.object_id),
                                scene_id: scene.scene_id.clone(),
                                object_id: obj.object_id,
                                tokens: tokenize(&description),
                                description,
                                agent_index: p.agent_index,
                                placement: *p,
                            }
                        })
                        .collect();
                    Ok((samples, Some(set)))
                }
                Err(Error::PlacementInfeasible { attempts, rejections }) => {
                    log::warn!(
                        "no placement for object {} in {} after {attempts} attempts: {rejections:?}",
                        obj.object_id,
                        scene.scene_id
                    );
                    Ok((vec![], None))
                }
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut report = SynthReport {
        objects: jobs.len(),
        ..Default::default()
    };
    let mut out = Vec::new();
    for r in results {
        let (samples, set) = r?;
        match set {
            Some(set) => {
                report.placed_objects += 1;
                report.saturated_objects += usize::from(set.saturated);
                for (k, v) in set.rejections {
                    *report.rejections.entry(k).or_insert(0) += v;
                }
            }
            None => report.infeasible_objects += 1,
        }
        report.samples += samples.len();
        out.extend(samples);
    }
    Ok((out, report))
}

/// A micro-benchmark scene: `k` same-size objects sharing one label, each
/// the target of exactly one sample described only by its label.
#[derive(Debug, Clone)]
pub struct MicroScene {
    pub k: usize,
    pub scene: Scene,
    pub samples: Vec<EruSample>,
}

/// Scene `i` holds `k = 2 + i mod 5` identical objects scattered in a room;
/// object ids are shuffled so id order carries no position information.
pub fn micro_benchmark(
    n_scenes: usize,
    seed: u64,
    pool: &(impl AgentLookup + ?Sized),
    cfg: &Config,
) -> Result<Vec<MicroScene>> {
    (0..n_scenes)
        .into_par_iter()
        .map(|i| micro_scene(i, derive_seed(seed, i as u64), pool, cfg))
        .collect()
}

/// A room holding `k` same-size objects of one random category, spaced so
/// that no two boxes are closer than 0.8 m. Object ids are a shuffled
/// `1..=k`.
pub fn identical_object_scene(scene_id: &str, k: usize, seed: u64) -> Result<Scene> {
    if k == 0 {
        return Err(Error::invalid("need at least one object"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cat = CATEGORIES.choose(&mut rng).expect("non-empty");
    let size = Vec3::new(cat.size[0], cat.size[1], cat.size[2]);
    let per_row = (k as f64).sqrt().ceil();
    let (w, d) = (3.0 + 1.8 * per_row * (size.x + 0.9), 3.0 + 1.8 * per_row * (size.y + 0.9));
    let mut ids: Vec<u32> = (1..=k as u32).collect();
    for j in (1..ids.len()).rev() {
        ids.swap(j, rng.random_range(0..=j));
    }
    let mut specs: Vec<ObjectSpec> = Vec::new();
    let mut tries = 0;
    while specs.len() < k {
        tries += 1;
        if tries > 5000 {
            return Err(Error::Validation(format!("could not lay out {k} objects in {scene_id}")));
        }
        let x = rng.random_range(0.5..w - size.x - 0.5);
        let y = rng.random_range(0.5..d - size.y - 0.5);
        let bbox = Aabb::new(Point3::new(x, y, 0.0), Point3::new(x + size.x, y + size.y, size.z))?;
        if specs.iter().any(|s| s.bbox.expanded(0.8).intersection_volume(&bbox) > 0.0) {
            continue;
        }
        specs.push(ObjectSpec {
            object_id: ids[specs.len()],
            label: cat.label.to_string(),
            bbox,
            attributes: vec![],
            descriptions: vec![],
        });
    }
    let mut pts = Vec::new();
    let mut cols = Vec::new();
    room_shell(w, d, &mut pts, &mut cols);
    for s in &specs {
        box_surface(&s.bbox, [0.5, 0.4, 0.3], &mut rng, &mut pts, &mut cols);
    }
    Scene::assemble(scene_id, PointCloud::new(pts, Some(cols), None)?, specs, 0.0)
}

fn micro_scene(i: usize, seed: u64, pool: &(impl AgentLookup + ?Sized), cfg: &Config) -> Result<MicroScene> {
    let k = 2 + i % 5;
    let scene = identical_object_scene(&format!("micro{i:04}"), k, seed)?;
    let mut samples = Vec::with_capacity(k);
    for o in &scene.objects {
        let set = sample_placements(&scene, o, pool, object_seed(seed, &scene.scene_id, o.object_id), cfg)?;
        let p = set.placements[0];
        let description = description_for(o, 0);
        samples.push(EruSample {
            sample_id: format!("{}_{:04}", scene.scene_id, o.object_id),
            scene_id: scene.scene_id.clone(),
            object_id: o.object_id,
            tokens: tokenize(&description),
            description,
            agent_index: p.agent_index,
            placement: p,
        });
    }
    Ok(MicroScene { k, scene, samples })
}
