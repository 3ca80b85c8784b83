//! Acc@kIoU over the unique / multiple / overall subsets.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataset::EruSample;
use crate::error::{Error, Result};
use crate::geom::aabb_iou;
use crate::ground::PredictionRecord;
use crate::scene::Scene;

pub const THRESHOLDS: [f64; 2] = [0.25, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Unique,
    Multiple,
}

/// Unique iff no other object in the scene shares the target's label
/// (compared trimmed and lowercased).
pub fn classify_sample(scene: &Scene, object_id: u32) -> Result<Subset> {
    let target = scene
        .object(object_id)
        .ok_or_else(|| Error::Lookup(format!("object {object_id} not in scene {}", scene.scene_id)))?;
    let label = target.normalized_label();
    let same = scene.objects.iter().filter(|o| o.normalized_label() == label).count();
    Ok(if same == 1 { Subset::Unique } else { Subset::Multiple })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SubsetScore {
    pub count: usize,
    pub correct_025: usize,
    pub correct_05: usize,
    pub acc_025: f64,
    pub acc_05: f64,
}

impl SubsetScore {
    fn add(&mut self, iou: Option<f64>) {
        self.count += 1;
        if let Some(v) = iou {
            self.correct_025 += usize::from(v >= THRESHOLDS[0]);
            self.correct_05 += usize::from(v >= THRESHOLDS[1]);
        }
    }

    fn finish(&mut self) {
        let ratio = |k: usize| if self.count == 0 { 0.0 } else { k as f64 / self.count as f64 };
        self.acc_025 = ratio(self.correct_025);
        self.acc_05 = ratio(self.correct_05);
    }

    fn merged(a: &SubsetScore, b: &SubsetScore) -> SubsetScore {
        let mut m = SubsetScore {
            count: a.count + b.count,
            correct_025: a.correct_025 + b.correct_025,
            correct_05: a.correct_05 + b.correct_05,
            ..Default::default()
        };
        m.finish();
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub unique: SubsetScore,
    pub multiple: SubsetScore,
    pub overall: SubsetScore,
    /// Samples with no prediction; scored as incorrect.
    pub missing: usize,
}

impl EvalReport {
    /// `(overall, weighted mean of unique and multiple)` at each threshold.
    pub fn weighted_mean_check(&self) -> [(f64, f64); 2] {
        let n = (self.unique.count + self.multiple.count) as f64;
        let w = |u: f64, m: f64| {
            if n == 0.0 {
                0.0
            } else {
                (self.unique.count as f64 * u + self.multiple.count as f64 * m) / n
            }
        };
        [
            (self.overall.acc_025, w(self.unique.acc_025, self.multiple.acc_025)),
            (self.overall.acc_05, w(self.unique.acc_05, self.multiple.acc_05)),
        ]
    }
}

/// Scores predictions against sample targets. Each prediction must name a
/// known sample, at most once.
pub fn evaluate(predictions: &[PredictionRecord], samples: &[EruSample], scenes: &BTreeMap<String, Scene>) -> Result<EvalReport> {
    let mut by_id: HashMap<&str, &PredictionRecord> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_id.insert(p.sample_id.as_str(), p).is_some() {
            return Err(Error::Validation(format!("duplicate prediction for sample {}", p.sample_id)));
        }
    }
    let mut seen = HashMap::with_capacity(samples.len());
    for s in samples {
        if seen.insert(s.sample_id.as_str(), ()).is_some() {
            return Err(Error::Validation(format!("duplicate sample id {}", s.sample_id)));
        }
    }
    if let Some(p) = predictions.iter().find(|p| !seen.contains_key(p.sample_id.as_str())) {
        return Err(Error::Validation(format!("prediction for unknown sample {}", p.sample_id)));
    }

    let (mut unique, mut multiple) = (SubsetScore::default(), SubsetScore::default());
    let mut missing = 0;
    for s in samples {
        let scene = scenes
            .get(&s.scene_id)
            .ok_or_else(|| Error::Lookup(format!("scene {} for sample {}", s.scene_id, s.sample_id)))?;
        let gt = scene
            .object(s.object_id)
            .ok_or_else(|| Error::Lookup(format!("object {} not in scene {}", s.object_id, s.scene_id)))?;
        let iou = match by_id.get(s.sample_id.as_str()) {
            Some(p) => Some(aabb_iou(&p.bbox, &gt.bbox)),
            None => {
                missing += 1;
                None
            }
        };
        match classify_sample(scene, s.object_id)? {
            Subset::Unique => unique.add(iou),
            Subset::Multiple => multiple.add(iou),
        }
    }
    unique.finish();
    multiple.finish();
    Ok(EvalReport {
        overall: SubsetScore::merged(&unique, &multiple),
        unique,
        multiple,
        missing,
    })
}
