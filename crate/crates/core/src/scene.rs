//! Scenes: a point cloud plus labelled object boxes, stored on disk as
//! `<scene_id>.ply` next to `<scene_id>.json`.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{ply, Aabb, PointCloud};

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub object_id: u32,
    /// Semantic category, e.g. "chair".
    pub label: String,
    pub bbox: Aabb,
    /// Indices of scene points inside `bbox`.
    pub point_indices: Vec<usize>,
    /// Attribute words (color, shape, size) that describe the object.
    pub attributes: Vec<String>,
    pub descriptions: Vec<String>,
}

impl SceneObject {
    pub fn normalized_label(&self) -> String {
        self.label.trim().to_lowercase()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    pub cloud: PointCloud,
    pub objects: Vec<SceneObject>,
    pub floor_z: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ObjectMeta {
    id: u32,
    label: String,
    #[serde(rename = "box")]
    bbox: Aabb,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    attributes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    descriptions: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SceneMeta {
    scene_id: String,
    floor_z: f64,
    objects: Vec<ObjectMeta>,
}

/// Object spec without point membership; indices are computed on assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    pub object_id: u32,
    pub label: String,
    pub bbox: Aabb,
    pub attributes: Vec<String>,
    pub descriptions: Vec<String>,
}

impl Scene {
    /// Builds a scene, assigning each object the cloud points inside its box.
    pub fn assemble(scene_id: impl Into<String>, cloud: PointCloud, objects: Vec<ObjectSpec>, floor_z: f64) -> Result<Scene> {
        let objects = objects
            .into_iter()
            .map(|o| SceneObject {
                point_indices: cloud
                    .points()
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| o.bbox.contains(p))
                    .map(|(i, _)| i)
                    .collect(),
                object_id: o.object_id,
                label: o.label,
                bbox: o.bbox,
                attributes: o.attributes,
                descriptions: o.descriptions,
            })
            .collect();
        let scene = Scene {
            scene_id: scene_id.into(),
            cloud,
            objects,
            floor_z,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        if !self.floor_z.is_finite() {
            return Err(Error::Validation(format!("scene {}: non-finite floor", self.scene_id)));
        }
        for o in &self.objects {
            if !ids.insert(o.object_id) {
                return Err(Error::Validation(format!(
                    "scene {}: duplicate object id {}",
                    self.scene_id, o.object_id
                )));
            }
            if o.bbox.min().z < self.floor_z - 1e-9 {
                return Err(Error::Validation(format!(
                    "scene {}: object {} extends below the floor",
                    self.scene_id, o.object_id
                )));
            }
            for &i in &o.point_indices {
                let inside = self.cloud.points().get(i).is_some_and(|p| o.bbox.contains(p));
                if !inside {
                    return Err(Error::Validation(format!(
                        "scene {}: object {} indexes point {i} outside its box",
                        self.scene_id, o.object_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn object(&self, id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.object_id == id)
    }

    /// Box around the cloud and all object boxes.
    pub fn bounds(&self) -> Option<Aabb> {
        let cloud = self.cloud.bounds();
        self.objects
            .iter()
            .map(|o| o.bbox)
            .chain(cloud)
            .reduce(|a, b| a.union(&b))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        ply::write_file(&dir.join(format!("{}.ply", self.scene_id)), &self.cloud)?;
        let meta = SceneMeta {
            scene_id: self.scene_id.clone(),
            floor_z: self.floor_z,
            objects: self
                .objects
                .iter()
                .map(|o| ObjectMeta {
                    id: o.object_id,
                    label: o.label.clone(),
                    bbox: o.bbox,
                    attributes: o.attributes.clone(),
                    descriptions: o.descriptions.clone(),
                })
                .collect(),
        };
        let path = dir.join(format!("{}.json", self.scene_id));
        let text = serde_json::to_string_pretty(&meta).expect("scene metadata serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path, scene_id: &str) -> Result<Scene> {
        let meta_path = dir.join(format!("{scene_id}.json"));
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: SceneMeta = serde_json::from_str(&text).map_err(|e| Error::Parse {
            source_name: meta_path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let cloud = ply::read_file(&dir.join(format!("{scene_id}.ply")))?;
        let objects = meta
            .objects
            .into_iter()
            .map(|o| ObjectSpec {
                object_id: o.id,
                label: o.label,
                bbox: o.bbox,
                attributes: o.attributes,
                descriptions: o.descriptions,
            })
            .collect();
        Scene::assemble(meta.scene_id, cloud, objects, meta.floor_z)
    }
}

/// Loads every scene in `dir` (one per `*.json` file), sorted by id.
pub fn load_scenes(dir: &Path) -> Result<Vec<Scene>> {
    let rd = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut ids = Vec::new();
    for entry in rd {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    ids.iter().map(|id| Scene::load(dir, id)).collect()
}
