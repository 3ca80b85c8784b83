//! Micro-benchmark data for the fusion network and a plain minibatch SGD
//! trainer.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::body::AgentLookup;
use crate::config::{Config, FusionDims};
use crate::dataset::{tokenize, EruSample, Lexicons};
use crate::ground::ground_lang_only;
use crate::error::{Error, Result};
use crate::geom::aabb_iou;
use crate::place::sample_placements;
use crate::scene::{Scene, SceneObject};
use crate::seed::derive_seed;
use crate::synth::{description_for, identical_object_scene, object_seed};

use super::model::{loss_and_grads, loss_value, predict, prepare_gesture, prepare_proposals, token_ids, FusionSample, Targets};
use super::params::ModelParams;
use super::tensor::Tensor;

/// Network input for one sample, expressed in the agent's frame (origin
/// under the pelvis, +x facing).
pub fn prepare_sample(
    scene: &Scene,
    sample: &EruSample,
    pool: &(impl AgentLookup + ?Sized),
    dims: &FusionDims,
) -> Result<FusionSample> {
    let agent = pool.agent(sample.placement.agent_index as usize)?;
    let frame = sample.placement.transform().inverse();
    let gesture = prepare_gesture(&agent.cloud, dims)?;
    let boxes: Vec<_> = scene
        .objects
        .iter()
        .map(|o| (o.bbox, o.point_indices.as_slice()))
        .collect();
    let proposals = prepare_proposals(&scene.cloud, &boxes, &frame, dims)?;
    let gt = scene
        .objects
        .iter()
        .position(|o| o.object_id == sample.object_id)
        .ok_or_else(|| Error::Lookup(format!("object {} not in scene {}", sample.object_id, scene.scene_id)))?;
    let labels: Vec<&str> = scene.objects.iter().map(|o| o.label.as_str()).collect();
    let sizes: Vec<_> = scene.objects.iter().map(|o| o.bbox.size()).collect();
    Ok(FusionSample {
        gesture,
        proposals,
        tokens: token_ids(&sample.tokens, dims)?,
        targets: Targets::new(&labels, &sizes, gt, dims)?,
        boxes: scene.objects.iter().map(|o| o.bbox).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroExample {
    pub scene: Scene,
    pub sample: EruSample,
    pub input: FusionSample,
}

fn micro_example(
    scene_id: String,
    k: usize,
    seed: u64,
    pool: &(impl AgentLookup + ?Sized),
    cfg: &Config,
    describe: impl Fn(&SceneObject) -> String,
) -> Result<MicroExample> {
    let scene = identical_object_scene(&scene_id, k, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let target = &scene.objects[rng.random_range(0..scene.objects.len())];
    let set = sample_placements(&scene, target, pool, object_seed(seed, &scene.scene_id, target.object_id), cfg)?;
    let p = set.placements[0];
    let description = describe(target);
    let sample = EruSample {
        sample_id: format!("{}_{:04}", scene.scene_id, target.object_id),
        scene_id: scene.scene_id.clone(),
        object_id: target.object_id,
        tokens: tokenize(&description),
        description,
        agent_index: p.agent_index,
        placement: p,
    };
    let input = prepare_sample(&scene, &sample, pool, &cfg.fusion)?;
    Ok(MicroExample { scene, sample, input })
}

/// `n` single-sample scenes with `2 + i mod 3` identical objects; the
/// target is chosen uniformly and described only by its label.
pub fn micro_dataset(
    n: usize,
    seed: u64,
    pool: &(impl AgentLookup + ?Sized),
    cfg: &Config,
) -> Result<Vec<MicroExample>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let s = derive_seed(seed, i as u64);
            micro_example(format!("toy{i:04}"), 2 + i % 3, s, pool, cfg, |o| description_for(o, 0))
        })
        .collect()
}

/// Gradient-check inputs at the largest toy size: 8 proposals and a
/// 12-token description per sample.
pub fn grad_check_batch(
    n: usize,
    seed: u64,
    pool: &(impl AgentLookup + ?Sized),
    cfg: &Config,
) -> Result<Vec<FusionSample>> {
    (0..n)
        .map(|i| {
            let s = derive_seed(seed, i as u64);
            let describe = |o: &SceneObject| {
                let text = format!("the {} that the person over there is pointing at with one hand", o.label);
                tokenize(&text)[..12].join(" ")
            };
            micro_example(format!("check{i:04}"), 8, s, pool, cfg, describe).map(|e| e.input)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Plain gradient descent.
    Sgd,
    /// Adam (β1 = 0.9, β2 = 0.95, ε = 1e-8) with a fixed step size.
    Adam,
}

impl Optimizer {
    pub fn parse(s: &str) -> Result<Optimizer> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            _ => Err(Error::invalid(format!("unknown optimizer {s:?} (expected sgd or adam)"))),
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.95;
const ADAM_EPS: f64 = 1e-8;

struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl OptimizerState {
    fn new(opts: &TrainOptions, params: &ModelParams) -> Self {
        let zeros: Vec<Tensor> = match opts.optimizer {
            Optimizer::Sgd => Vec::new(),
            Optimizer::Adam => params.tensors().iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect(),
        };
        OptimizerState {
            kind: opts.optimizer,
            lr: opts.learning_rate,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies summed gradients scaled by `scale`; `step` counts from 1.
    fn update(&mut self, params: &mut ModelParams, grads: &[Tensor], scale: f64, step: usize) {
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in params.tensors_mut().iter_mut().zip(grads) {
                    for (x, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *x -= self.lr * scale * d;
                    }
                }
            }
            Optimizer::Adam => {
                let c1 = 1.0 - ADAM_BETA1.powi(step as i32);
                let c2 = 1.0 - ADAM_BETA2.powi(step as i32);
                for (i, (p, g)) in params.tensors_mut().iter_mut().zip(grads).enumerate() {
                    let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
                    for (j, (x, d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        let d = d * scale;
                        m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * d;
                        v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * d * d;
                        *x -= self.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

/// Smallest train + validation set `train_toy` accepts.
pub const MIN_SAMPLES: usize = 64;

#[derive(Debug, Clone, Serialize)]
pub struct TrainOptions {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Evaluate every this many steps (and always at the first and last).
    pub eval_every: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            steps: 500,
            learning_rate: 0.003,
            batch_size: 16,
            optimizer: Optimizer::Adam,
            seed: 0,
            eval_every: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub step: usize,
    /// Mean total loss over the whole training set.
    pub train_loss: f64,
    pub val_acc_025: f64,
    pub val_acc_05: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub trace: Vec<TracePoint>,
}

/// `(Acc@0.25, Acc@0.5)` of the highest-confidence proposal (ties to the
/// lowest index).
pub fn accuracy(params: &ModelParams, data: &[FusionSample]) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Ok((0.0, 0.0));
    }
    let hits: Vec<(bool, bool)> = data
        .par_iter()
        .map(|s| {
            let c = predict(params, s)?;
            let best = (0..c.len()).fold(0, |b, i| if c[i] > c[b] { i } else { b });
            let iou = aabb_iou(&s.boxes[best], &s.boxes[s.targets.gt_index]);
            Ok((iou >= 0.25, iou >= 0.5))
        })
        .collect::<Result<_>>()?;
    let n = data.len() as f64;
    Ok((
        hits.iter().filter(|h| h.0).count() as f64 / n,
        hits.iter().filter(|h| h.1).count() as f64 / n,
    ))
}

/// Acc@0.25 of the lexical language-only baseline on micro examples.
pub fn lang_only_accuracy(examples: &[MicroExample], lexicons: &Lexicons) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for e in examples {
        let p = ground_lang_only(&e.scene, &e.sample.tokens, lexicons)?;
        let gt = e.scene.object(e.sample.object_id).expect("micro target exists");
        hits += (aabb_iou(&p.bbox, &gt.bbox) >= 0.25) as usize;
    }
    Ok(hits as f64 / examples.len() as f64)
}

/// Mean loss and summed gradients over `batch`, merged in sample order.
fn batch_step(params: &ModelParams, batch: &[&FusionSample]) -> Result<(f64, Vec<Tensor>)> {
    let parts: Vec<_> = batch
        .par_iter()
        .map(|s| loss_and_grads(params, s))
        .collect::<Result<_>>()?;
    let mut acc: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
    let mut loss = 0.0;
    for (b, g) in parts {
        loss += b.l_total;
        for (a, gi) in acc.iter_mut().zip(g) {
            if let Some(gi) = gi {
                a.add_assign(&gi);
            }
        }
    }
    Ok((loss / batch.len() as f64, acc))
}

fn mean_loss(params: &ModelParams, data: &[FusionSample]) -> Result<f64> {
    let losses: Vec<f64> = data
        .par_iter()
        .map(|s| loss_value(params, s).map(|r| r.0))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / data.len().max(1) as f64)
}

/// Minibatch gradient descent with a fixed step size (plain or Adam). Batches are drawn by
/// reshuffling the training set each epoch with `opts.seed`.
pub fn train_toy(
    train: &[FusionSample],
    val: &[FusionSample],
    init: &ModelParams,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    if train.is_empty() || train.len() + val.len() < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "need a non-empty training split and at least {MIN_SAMPLES} samples, got {} + {}",
            train.len(),
            val.len()
        )));
    }
    if opts.batch_size == 0 || !(opts.learning_rate > 0.0) {
        return Err(Error::invalid("batch size and learning rate must be positive"));
    }
    let mut params = init.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();
    let mut trace = Vec::new();
    let record = |params: &ModelParams, step: usize, trace: &mut Vec<TracePoint>| -> Result<()> {
        let train_loss = mean_loss(params, train)?;
        let (a25, a50) = accuracy(params, val)?;
        log::info!("step {step}: train loss {train_loss:.4}, val acc@0.25 {a25:.3}");
        trace.push(TracePoint {
            step,
            train_loss,
            val_acc_025: a25,
            val_acc_05: a50,
        });
        Ok(())
    };
    record(&params, 0, &mut trace)?;
    let mut optimizer = OptimizerState::new(opts, &params);
    for step in 1..=opts.steps {
        let mut batch = Vec::with_capacity(opts.batch_size);
        while batch.len() < opts.batch_size.min(train.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&train[order[cursor]]);
            cursor += 1;
        }
        let (loss, grads) = batch_step(&params, &batch)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("loss diverged at step {step}: {trace:?}")));
        }
        optimizer.update(&mut params, &grads, 1.0 / batch.len() as f64, step);
        if step % opts.eval_every.max(1) == 0 || step == opts.steps {
            record(&params, step, &mut trace)?;
        }
    }
    if !params.is_finite() {
        return Err(Error::Numeric(format!("parameters diverged: {trace:?}")));
    }
    Ok(TrainOutcome { params, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::fixtures::{toy_dims, toy_sample};

    fn data(n: usize, offset: u64) -> Vec<FusionSample> {
        let dims = toy_dims();
        (0..n).map(|i| toy_sample(offset + i as u64, 2 + i % 3, 4, &dims)).collect()
    }

    #[test]
    fn zero_steps_is_untrained() {
        let (train, val) = (data(48, 0), data(16, 100));
        let init = ModelParams::init(&toy_dims(), 2).unwrap();
        let opts = TrainOptions { steps: 0, ..TrainOptions::default() };
        let out = train_toy(&train, &val, &init, &opts).unwrap();
        assert_eq!(out.params, init);
        assert_eq!(out.trace.len(), 1);
        let (a25, a50) = accuracy(&init, &val).unwrap();
        assert_eq!((out.trace[0].val_acc_025, out.trace[0].val_acc_05), (a25, a50));
    }

    #[test]
    fn same_seed_same_trace() {
        let (train, val) = (data(48, 0), data(16, 100));
        let init = ModelParams::init(&toy_dims(), 3).unwrap();
        let opts = TrainOptions { steps: 12, eval_every: 5, ..TrainOptions::default() };
        let a = train_toy(&train, &val, &init, &opts).unwrap();
        let b = train_toy(&train, &val, &init, &opts).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.params, b.params);
        let steps: Vec<usize> = a.trace.iter().map(|t| t.step).collect();
        assert_eq!(steps, vec![0, 5, 10, 12]);
        let c = train_toy(&train, &val, &init, &TrainOptions { seed: 1, ..opts }).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn loss_falls_on_fixed_batch() {
        let (train, val) = (data(60, 0), data(4, 100));
        let init = ModelParams::init(&toy_dims(), 4).unwrap();
        let opts = TrainOptions { steps: 40, eval_every: 40, ..TrainOptions::default() };
        let out = train_toy(&train, &val, &init, &opts).unwrap();
        assert!(out.trace.last().unwrap().train_loss < out.trace[0].train_loss);
    }

    #[test]
    fn rejects_bad_inputs() {
        let init = ModelParams::init(&toy_dims(), 4).unwrap();
        let opts = TrainOptions::default();
        assert!(train_toy(&data(10, 0), &data(10, 50), &init, &opts).is_err());
        let lr0 = TrainOptions { learning_rate: 0.0, ..TrainOptions::default() };
        assert!(train_toy(&data(64, 0), &[], &init, &lr0).is_err());
    }
}
