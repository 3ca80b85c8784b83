//! Non-learned grounding baselines: gesture only (virtual touch line),
//! language only (label and attribute word matching), and their weighted
//! combination. Ground-truth object boxes serve as proposals.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body::AgentLookup;
use crate::dataset::{tokenize, EruSample, Lexicons};
use crate::error::{Error, Result};
use crate::geom::{angle_between, Aabb};
use crate::scene::{Scene, SceneObject};
use crate::vtl::{vtl_score, GestureRay};

/// Attribute matches beyond this count add nothing.
pub const MAX_ATTRIBUTE_HITS: usize = 2;
pub const ATTRIBUTE_WEIGHT: f64 = 0.25;
/// Label match plus capped attribute matches.
pub const MAX_LANG_SCORE: f64 = 1.0 + ATTRIBUTE_WEIGHT * MAX_ATTRIBUTE_HITS as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[serde(rename = "gesture")]
    GestureOnly,
    #[serde(rename = "lang")]
    LangOnly,
    Full,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Mode> {
        match s {
            "gesture" => Ok(Mode::GestureOnly),
            "lang" => Ok(Mode::LangOnly),
            "full" => Ok(Mode::Full),
            _ => Err(Error::invalid(format!("unknown grounding mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundingPrediction {
    pub object_id: u32,
    #[serde(rename = "box")]
    pub bbox: Aabb,
    pub confidence: f64,
    pub mode: Mode,
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub object_id: u32,
    #[serde(rename = "box")]
    pub bbox: Aabb,
    pub confidence: f64,
    pub mode: Mode,
}

impl PredictionRecord {
    pub fn new(sample_id: impl Into<String>, p: &GroundingPrediction) -> Self {
        PredictionRecord {
            sample_id: sample_id.into(),
            object_id: p.object_id,
            bbox: p.bbox,
            confidence: p.confidence,
            mode: p.mode,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate<'a> {
    object: &'a SceneObject,
    score: f64,
    /// Secondary key for gesture ties: angle off the ray, degrees.
    angle: f64,
}

/// Highest score, then smallest angle, then lowest id.
fn best<'a>(mut cands: Vec<Candidate<'a>>) -> Result<Candidate<'a>> {
    cands.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.angle.total_cmp(&b.angle))
            .then(a.object.object_id.cmp(&b.object.object_id))
    });
    cands.into_iter().next().ok_or_else(|| Error::NoCandidates("scene has no objects".into()))
}

fn ray_angle(g: &GestureRay, b: &Aabb) -> f64 {
    angle_between(&g.ray.dir(), &(b.center() - g.ray.origin())).unwrap_or(0.0)
}

fn prediction(c: Candidate<'_>, confidence: f64, mode: Mode) -> GroundingPrediction {
    GroundingPrediction {
        object_id: c.object.object_id,
        bbox: c.object.bbox,
        confidence: if confidence.is_finite() { confidence.clamp(0.0, 1.0) } else { 0.0 },
        mode,
    }
}

/// Picks the object the world-space gesture ray scores highest; equal scores
/// go to the box whose center is closer to the ray direction, then to the
/// lower id. Confidence is the winning share of the summed scores.
pub fn ground_gesture_only(scene: &Scene, g: &GestureRay) -> Result<GroundingPrediction> {
    let cands: Vec<Candidate> = scene
        .objects
        .iter()
        .map(|o| Candidate {
            object: o,
            score: vtl_score(g, &o.bbox),
            angle: ray_angle(g, &o.bbox),
        })
        .collect();
    let total: f64 = cands.iter().map(|c| c.score).sum();
    let top = best(cands)?;
    let conf = if total > 0.0 { top.score / total } else { 0.0 };
    Ok(prediction(top, conf, Mode::GestureOnly))
}

/// `1·[every label word is a token] + 0.25·min(attribute hits, 2)`, where an
/// attribute hit is a distinct token that is both an attribute-lexicon word
/// and one of the object's attributes.
pub fn lang_score(object: &SceneObject, tokens: &BTreeSet<String>, lexicons: &Lexicons) -> f64 {
    let label = tokenize(&object.label);
    let label_hit = !label.is_empty() && label.iter().all(|w| tokens.contains(w));
    let attrs: BTreeSet<String> = object.attributes.iter().map(|a| a.trim().to_lowercase()).collect();
    let hits = tokens
        .iter()
        .filter(|t| lexicons.is_attribute(t) && attrs.contains(*t))
        .count()
        .min(MAX_ATTRIBUTE_HITS);
    f64::from(u8::from(label_hit)) + ATTRIBUTE_WEIGHT * hits as f64
}

fn token_set(tokens: &[String]) -> Result<BTreeSet<String>> {
    if tokens.is_empty() {
        return Err(Error::invalid("description has no tokens"));
    }
    Ok(tokens.iter().map(|t| t.to_lowercase()).collect())
}

/// Lexical matching only; ties go to the lowest id.
pub fn ground_lang_only(scene: &Scene, tokens: &[String], lexicons: &Lexicons) -> Result<GroundingPrediction> {
    let set = token_set(tokens)?;
    let cands = scene
        .objects
        .iter()
        .map(|o| Candidate {
            object: o,
            score: lang_score(o, &set, lexicons),
            angle: 0.0,
        })
        .collect();
    let top = best(cands)?;
    Ok(prediction(top, top.score / MAX_LANG_SCORE, Mode::LangOnly))
}

/// `w_g·vtl + w_l·lang/1.5`. Ties use the gesture angle when `w_g > 0`, then
/// the lowest id. Confidence is the winning score over `w_g + w_l`.
pub fn ground_full(
    scene: &Scene,
    g: &GestureRay,
    tokens: &[String],
    lexicons: &Lexicons,
    w_g: f64,
    w_l: f64,
) -> Result<GroundingPrediction> {
    if !(w_g >= 0.0 && w_l >= 0.0 && w_g + w_l > 0.0) || !(w_g + w_l).is_finite() {
        return Err(Error::invalid(format!("weights must be non-negative with a positive sum, got {w_g}, {w_l}")));
    }
    let set = token_set(tokens)?;
    let cands = scene
        .objects
        .iter()
        .map(|o| Candidate {
            object: o,
            score: w_g * vtl_score(g, &o.bbox) + w_l * lang_score(o, &set, lexicons) / MAX_LANG_SCORE,
            angle: if w_g > 0.0 { ray_angle(g, &o.bbox) } else { 0.0 },
        })
        .collect();
    let top = best(cands)?;
    Ok(prediction(top, top.score / (w_g + w_l), Mode::Full))
}

/// Grounds every sample, in input order.
pub fn ground_samples(
    mode: Mode,
    samples: &[EruSample],
    scenes: &BTreeMap<String, Scene>,
    pool: &(impl AgentLookup + ?Sized),
    lexicons: &Lexicons,
    w_g: f64,
    w_l: f64,
) -> Result<Vec<PredictionRecord>> {
    samples
        .par_iter()
        .map(|s| {
            let scene = scenes
                .get(&s.scene_id)
                .ok_or_else(|| Error::Lookup(format!("scene {} for sample {}", s.scene_id, s.sample_id)))?;
            let pred = match mode {
                Mode::GestureOnly => ground_gesture_only(scene, &s.placement.gesture_ray(pool)?)?,
                Mode::LangOnly => ground_lang_only(scene, &s.tokens, lexicons)?,
                Mode::Full => ground_full(scene, &s.placement.gesture_ray(pool)?, &s.tokens, lexicons, w_g, w_l)?,
            };
            Ok(PredictionRecord::new(&s.sample_id, &pred))
        })
        .collect()
}
