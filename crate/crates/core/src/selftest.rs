//! Built-in invariant suites, run by `erupoint selftest`.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::body::{AgentLookup, AgentPool, Side, PROFILES};
use crate::config::{Config, FusionDims};
use crate::dataset::{EruSample, Lexicons};
use crate::error::Result;
use crate::eval::evaluate;
use crate::fusion::{self, ModelParams, Tensor, TrainOptions};
use crate::geom::{aabb_iou, angle_between, ray_aabb_intersect, voxel_downsample, Aabb, Point3, PointCloud, Ray, Vec3};
use crate::ground::{ground_samples, Mode};
use crate::place::verify::verify_placements;
use crate::scene::Scene;
use crate::seed::derive_seed;
use crate::synth::{fixture_scenes, micro_benchmark, synthesize};
use crate::vtl::{vtl_score, GestureRay};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }
}

impl fmt::Display for SelftestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        writeln!(f, "{} checks, {} failed", self.checks.len(), self.failures())
    }
}

fn record(out: &mut Vec<CheckResult>, name: &str, r: Result<(bool, String)>) {
    let (passed, detail) = r.unwrap_or_else(|e| (false, format!("error: {e}")));
    log::info!("selftest {name}: {}", if passed { "pass" } else { "FAIL" });
    out.push(CheckResult {
        name: name.to_string(),
        passed,
        detail,
    });
}

fn random_box(rng: &mut ChaCha8Rng) -> Aabb {
    let c = Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let s = Vec3::new(rng.random_range(0.1..1.5), rng.random_range(0.1..1.5), rng.random_range(0.1..1.5));
    Aabb::from_center_size(c, s).expect("positive size")
}

fn iou_closed_form() -> Result<(bool, String)> {
    let unit = Aabb::new(Point3::origin(), Point3::new(1.0, 1.0, 1.0))?;
    let cases = [
        (unit, unit, 1.0),
        (unit, unit.translated(Vec3::new(0.5, 0.0, 0.0)), 1.0 / 3.0),
        (unit, unit.translated(Vec3::new(2.0, 0.0, 0.0)), 0.0),
        (unit, unit.translated(Vec3::new(1.0, 0.0, 0.0)), 0.0),
        (unit, Aabb::new(Point3::origin(), Point3::new(0.5, 1.0, 1.0))?, 0.5),
        (unit, unit.translated(Vec3::new(0.5, 0.5, 0.0)), 0.25 / 1.75),
    ];
    let worst = cases
        .iter()
        .map(|(a, b, want)| (aabb_iou(a, b) - want).abs())
        .fold(0.0, f64::max);
    Ok((worst < 1e-12, format!("{} cases, max error {worst:.1e}", cases.len())))
}

fn iou_monte_carlo(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (a, b) = (random_box(&mut rng), random_box(&mut rng));
        let u = a.union(&b);
        let (mut ia, mut ib, mut both) = (0usize, 0usize, 0usize);
        for _ in 0..20_000 {
            let p = Point3::new(
                rng.random_range(u.min().x..u.max().x),
                rng.random_range(u.min().y..u.max().y),
                rng.random_range(u.min().z..u.max().z),
            );
            let (x, y) = (a.contains(&p), b.contains(&p));
            ia += x as usize;
            ib += y as usize;
            both += (x && y) as usize;
        }
        let union = ia + ib - both;
        let est = if union == 0 { 0.0 } else { both as f64 / union as f64 };
        worst = worst.max((est - aabb_iou(&a, &b)).abs());
    }
    Ok((worst < 0.03, format!("20 pairs, max deviation {worst:.4}")))
}

fn slab_consistency(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut hits, mut bad) = (0, 0);
    for _ in 0..500 {
        let b = random_box(&mut rng);
        let o = Point3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let target = b.center() + Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let Ok(ray) = Ray::through(o, target) else { continue };
        // dense march along the ray as an independent oracle
        let marched = (0..6000).any(|i| b.contains(&ray.at(i as f64 * 0.001)));
        match ray_aabb_intersect(&ray, &b) {
            Some((t0, t1)) => {
                hits += 1;
                let mid = ray.at(0.5 * (t0.max(0.0) + t1));
                if !b.expanded(1e-9).contains(&mid) {
                    bad += 1;
                }
            }
            None => bad += marched as usize,
        }
    }
    Ok((bad == 0, format!("500 rays, {hits} hits, {bad} disagreements")))
}

fn voxel_invariants(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<Point3> = (0..5000)
        .map(|_| Point3::new(rng.random_range(0.0..0.2), rng.random_range(0.0..0.2), rng.random_range(0.0..0.2)))
        .collect();
    let pc = PointCloud::from_points(pts)?;
    let v = 0.01;
    let d = voxel_downsample(&pc, v)?;
    let mut keys: Vec<[i64; 3]> = d
        .points()
        .iter()
        .map(|p| [(p.x / v).floor() as i64, (p.y / v).floor() as i64, (p.z / v).floor() as i64])
        .collect();
    let n = keys.len();
    keys.sort_unstable();
    keys.dedup();
    let again = voxel_downsample(&d, v)?.len();
    Ok((keys.len() == n && n <= 8000 && again == n, format!("{n} voxels from 5000 points")))
}

fn pool_shape(pool: &AgentPool) -> Result<(bool, String)> {
    let left = pool.entries().iter().filter(|e| e.side == Side::Left).count();
    let profiles = pool.profiles();
    let mean = PROFILES.iter().map(|p| p.height).sum::<f64>() / PROFILES.len() as f64;
    let ok = pool.len() == 7200 && 2 * left == pool.len() && profiles == 10 && (mean - 1.757).abs() <= 1e-3;
    Ok((
        ok,
        format!("{} agents, {left} left, {profiles} profiles, mean height {mean:.4} m", pool.len()),
    ))
}

fn agent_clouds(pool: &AgentPool, seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ok = true;
    for _ in 0..12 {
        let a = pool.agent(rng.random_range(0..pool.len()))?;
        let normals = a.cloud.normals().unwrap_or(&[]);
        // padding, if any, is a zero tail
        let first_pad = a.cloud.points().iter().position(|p| p.coords == Vec3::zeros());
        let tail_zero = first_pad.is_none_or(|k| {
            a.cloud.points()[k..].iter().all(|p| p.coords == Vec3::zeros()) && normals[k..].iter().all(|n| *n == Vec3::zeros())
        });
        ok &= a.cloud.len() == 3000 && tail_zero;
    }
    Ok((ok, "12 agents with 3000 points each".into()))
}

fn pointing_geometry(pool: &AgentPool, seed: u64, cfg: &Config) -> Result<(bool, String)> {
    let scenes = fixture_scenes(3, seed)?;
    let (samples, report) = synthesize(&scenes, pool, seed, cfg)?;
    let by_id: BTreeMap<&str, &Scene> = scenes.iter().map(|s| (s.scene_id.as_str(), s)).collect();
    let (mut misses, mut worst, mut violations) = (0, 0.0f64, 0);
    for s in &samples {
        let scene = by_id[s.scene_id.as_str()];
        let target = scene.object(s.object_id).expect("synthesized target exists");
        let g = s.placement.gesture_ray(pool)?;
        misses += ray_aabb_intersect(&g.ray, &target.bbox).is_none() as usize;
        worst = worst.max(angle_between(&g.ray.dir(), &(target.bbox.center() - g.ray.origin()))?);
        violations += verify_placements(scene, target, &[s.placement], pool, cfg).len();
    }
    let ok = !samples.is_empty() && misses == 0 && worst <= cfg.pointing_tolerance_deg() && violations == 0;
    Ok((
        ok,
        format!(
            "{} samples, {misses} misses, worst angle {worst:.2} deg, {violations} violations, {:.2} per object",
            samples.len(),
            report.mean_placements()
        ),
    ))
}

fn vtl_cases() -> Result<(bool, String)> {
    let g = GestureRay::from_landmarks(Point3::origin(), Point3::new(1.0, 0.0, 0.0))?;
    let at = |x: f64, y: f64| Aabb::from_center_size(Point3::new(x, y, 0.0), Vec3::repeat(0.2));
    let t = 15f64.to_radians();
    let ok = vtl_score(&g, &at(3.0, 0.0)?) == 1.0
        && vtl_score(&g, &at(-3.0, 0.0)?) == 0.0
        && (vtl_score(&g, &at(2.0 * t.cos(), 2.0 * t.sin())?) - 0.5).abs() < 1e-12;
    Ok((ok, "on-ray, behind and 15 degree cases".into()))
}

fn sample_roundtrip(pool: &AgentPool, seed: u64, cfg: &Config) -> Result<(bool, String)> {
    let scenes = fixture_scenes(1, seed)?;
    let (samples, _) = synthesize(&scenes, pool, seed, cfg)?;
    let mut same = 0;
    for s in &samples {
        let line = serde_json::to_string(s).map_err(|e| crate::Error::invalid(e.to_string()))?;
        let back: EruSample = serde_json::from_str(&line).map_err(|e| crate::Error::invalid(e.to_string()))?;
        same += (&back == s) as usize;
    }
    Ok((same == samples.len(), format!("{same}/{} samples survive a JSON round trip", samples.len())))
}

fn grounding_order(pool: &AgentPool, seed: u64, cfg: &Config) -> Result<(bool, String)> {
    let micro = micro_benchmark(25, seed, pool, cfg)?;
    let scenes: BTreeMap<String, Scene> = micro.iter().map(|m| (m.scene.scene_id.clone(), m.scene.clone())).collect();
    let samples: Vec<EruSample> = micro.iter().flat_map(|m| m.samples.clone()).collect();
    let lex = Lexicons::default();
    let mut acc = Vec::new();
    let mut mean_ok = true;
    for mode in [Mode::GestureOnly, Mode::LangOnly, Mode::Full] {
        let preds = ground_samples(mode, &samples, &scenes, pool, &lex, cfg.w_gesture, cfg.w_language)?;
        let r = evaluate(&preds, &samples, &scenes)?;
        for (i, (a, b)) in r.weighted_mean_check().into_iter().enumerate() {
            let overall = if i == 0 { r.overall.acc_025 } else { r.overall.acc_05 };
            mean_ok &= (a - overall).abs() <= 1e-12 && (b - overall).abs() <= 1e-12;
        }
        acc.push(r.overall.acc_025);
    }
    let ok = mean_ok && acc[2] >= acc[0] && acc[2] >= acc[1];
    Ok((
        ok,
        format!("Acc@0.25 gesture {:.3}, lang {:.3}, full {:.3} on {} samples", acc[0], acc[1], acc[2], samples.len()),
    ))
}

fn loss_composition(seed: u64) -> Result<(bool, String)> {
    let dims = FusionDims::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let m = 1 + i % 8;
        let mut t = |r: usize, c: usize| Tensor::new(r, c, (0..r * c).map(|_| rng.random_range(-3.0..3.0)).collect());
        let outputs = fusion::HeadOutputs {
            logits: t(1, m)?,
            objectness: t(m, 2)?,
            semantic: t(m, dims.classes)?,
            center: t(m, 3)?,
            size_cls: t(m, dims.size_bins)?,
            size_reg: t(m, 3)?,
            language_cls: t(1, dims.classes)?,
        };
        let labels = vec!["chair"; m];
        let sizes = vec![Vec3::new(0.4, 0.6, 0.9); m];
        let targets = fusion::Targets::new(&labels, &sizes, i % m, &dims)?;
        let b = fusion::compute_loss(&outputs, &targets)?;
        worst = worst
            .max((b.l_box - (b.l_center_reg + 0.1 * b.l_size_cls + b.l_size_reg)).abs())
            .max((b.l_det - (b.l_vote_reg + 0.1 * b.l_objn_cls + 0.1 * b.l_sem_cls + b.l_box)).abs())
            .max((b.l_total - (0.3 * b.l_loc + 10.0 * b.l_det + 0.1 * b.l_cls)).abs());
    }
    Ok((worst <= 1e-9, format!("100 random head outputs, max identity error {worst:.1e}")))
}

fn fusion_checks(pool: &AgentPool, seed: u64, cfg: &Config) -> Result<Vec<(&'static str, Result<(bool, String)>)>> {
    // a lighter gesture encoder keeps the finite-difference sweep quick
    let mut small = cfg.clone();
    small.fusion.centroids = 16;
    let params = ModelParams::init(&small.fusion, seed)?;
    let batch = fusion::grad_check_batch(1, seed, pool, &small)?;
    let normalized = (|| {
        let c = fusion::predict(&params, &batch[0])?;
        let sum: f64 = c.iter().sum();
        let ok = (sum - 1.0).abs() <= 1e-6 && c.iter().all(|&v| v >= 0.0);
        Ok((ok, format!("{} proposals, confidence sum {sum:.9}", c.len())))
    })();
    let grad = fusion::grad_check(&params, &batch, seed).map(|r| {
        (
            r.max_rel_error < 1e-4,
            format!("{} groups, max relative error {:.2e}", r.groups.len(), r.max_rel_error),
        )
    });
    let training = (|| {
        let data: Vec<_> = fusion::micro_dataset(64, derive_seed(seed, 9), pool, &small)?
            .into_iter()
            .map(|e| e.input)
            .collect();
        let (train, val) = data.split_at(48);
        let opts = TrainOptions {
            steps: 4,
            eval_every: 2,
            seed,
            ..TrainOptions::default()
        };
        let a = fusion::train_toy(train, val, &params, &opts)?;
        let b = fusion::train_toy(train, val, &params, &opts)?;
        let zero = fusion::train_toy(train, val, &params, &TrainOptions { steps: 0, ..opts })?;
        let ok = a.trace == b.trace && a.params == b.params && zero.params == params;
        Ok((ok, format!("{} trace points reproduced", a.trace.len())))
    })();
    Ok(vec![
        ("fusion.confidences_normalized", normalized),
        ("fusion.grad_check", grad),
        ("fusion.train_deterministic", training),
    ])
}

/// Runs every suite. Failures are reported, not returned as errors.
pub fn run(pool: &AgentPool, seed: u64, cfg: &Config) -> SelftestReport {
    let mut out = Vec::new();
    let s = |k: u64| derive_seed(seed, k);
    record(&mut out, "geom.iou_closed_form", iou_closed_form());
    record(&mut out, "geom.iou_monte_carlo", iou_monte_carlo(s(1)));
    record(&mut out, "geom.slab_vs_march", slab_consistency(s(2)));
    record(&mut out, "geom.voxel_downsample", voxel_invariants(s(3)));
    record(&mut out, "body.pool_shape", pool_shape(pool));
    record(&mut out, "body.agent_points", agent_clouds(pool, s(4)));
    record(&mut out, "place.pointing_geometry", pointing_geometry(pool, s(5), cfg));
    record(&mut out, "vtl.score_cases", vtl_cases());
    record(&mut out, "dataset.sample_roundtrip", sample_roundtrip(pool, s(6), cfg));
    record(&mut out, "ground.mode_ordering", grounding_order(pool, s(7), cfg));
    record(&mut out, "fusion.loss_composition", loss_composition(s(8)));
    match fusion_checks(pool, s(10), cfg) {
        Ok(checks) => {
            for (name, r) in checks {
                record(&mut out, name, r);
            }
        }
        Err(e) => record(&mut out, "fusion.setup", Err(e)),
    }
    SelftestReport { checks: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::test_pool;

    #[test]
    fn clean_build_passes_and_repeats() {
        let cfg = Config::default();
        let a = run(test_pool(), 3, &cfg);
        assert!(a.passed(), "{a}");
        let b = run(test_pool(), 3, &cfg);
        assert_eq!(a.to_string(), b.to_string());
    }
}
