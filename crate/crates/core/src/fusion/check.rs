//! Finite-difference verification of the analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

use super::model::{gesture_feature, loss_and_grads, loss_value_with, FusionSample};
use super::params::ModelParams;
use super::tensor::Tensor;

pub const FD_STEP: f64 = 1e-4;
/// Denominator floor of the relative error, so that vanishing gradients are
/// compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-6;
const MIN_PER_GROUP: usize = 20;

#[derive(Debug, Clone, Serialize)]
pub struct GroupCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub groups: Vec<GroupCheck>,
    /// Entries where the ±h probe crossed a max-pool or smooth-L1 branch
    /// and a one-sided or smaller-step difference was used instead.
    pub kinks: usize,
}

/// Mean batch loss. `gesture` holds per-sample gesture features to reuse
/// while probing parameters the gesture encoder does not read.
fn batch_loss(params: &ModelParams, batch: &[FusionSample], gesture: Option<&[Tensor]>) -> Result<(f64, u64)> {
    let mut total = 0.0;
    let mut sig = 0u64;
    for (i, s) in batch.iter().enumerate() {
        let (l, b) = loss_value_with(params, s, gesture.map(|f| &f[i]))?;
        total += l;
        sig = sig.rotate_left(7) ^ b;
    }
    if !total.is_finite() {
        return Err(Error::Numeric("non-finite loss in gradient check".into()));
    }
    Ok((total / batch.len() as f64, sig))
}

/// Mean-loss gradients over the batch.
pub fn batch_grads(params: &ModelParams, batch: &[FusionSample]) -> Result<Vec<Tensor>> {
    let mut acc: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
    for s in batch {
        let (_, g) = loss_and_grads(params, s)?;
        for (a, gi) in acc.iter_mut().zip(g) {
            if let Some(gi) = gi {
                a.add_assign(&gi);
            }
        }
    }
    let n = batch.len() as f64;
    Ok(acc.into_iter().map(|t| t.map(|v| v / n)).collect())
}

/// Numeric derivative of the batch loss along one parameter entry. Uses a
/// central difference when both probes stay on the base branch; otherwise a
/// second-order one-sided difference on a clean side, shrinking the step if
/// neither side is clean.
fn numeric_derivative(
    params: &mut ModelParams,
    batch: &[FusionSample],
    gesture: Option<&[Tensor]>,
    group: usize,
    k: usize,
    kinks: &mut usize,
) -> Result<f64> {
    let x0 = params.tensors()[group].data()[k];
    let at = |params: &mut ModelParams, dx: f64| -> Result<(f64, u64)> {
        params.tensors_mut()[group].data_mut()[k] = x0 + dx;
        let r = batch_loss(params, batch, gesture);
        params.tensors_mut()[group].data_mut()[k] = x0;
        r
    };
    let (f0, s0) = at(params, 0.0)?;
    let mut h = FD_STEP;
    for _ in 0..4 {
        let (fp, sp) = at(params, h)?;
        let (fm, sm) = at(params, -h)?;
        if sp == s0 && sm == s0 {
            return Ok((fp - fm) / (2.0 * h));
        }
        *kinks += 1;
        if sp == s0 {
            let (fp2, sp2) = at(params, 2.0 * h)?;
            if sp2 == s0 {
                return Ok((-3.0 * f0 + 4.0 * fp - fp2) / (2.0 * h));
            }
        }
        if sm == s0 {
            let (fm2, sm2) = at(params, -2.0 * h)?;
            if sm2 == s0 {
                return Ok((3.0 * f0 - 4.0 * fm + fm2) / (2.0 * h));
            }
        }
        h /= 10.0;
    }
    let (fp, _) = at(params, h)?;
    let (fm, _) = at(params, -h)?;
    Ok((fp - fm) / (2.0 * h))
}

/// Compares analytic gradients of the mean batch loss against finite
/// differences on `max(20, 1%)` sampled entries of every parameter tensor.
/// For tensors with sparse gradients (embedding rows) half the sample is
/// drawn from entries with a non-zero analytic gradient.
pub fn grad_check(params: &ModelParams, batch: &[FusionSample], seed: u64) -> Result<GradCheckReport> {
    if batch.is_empty() {
        return Err(Error::invalid("gradient check needs at least one sample"));
    }
    let analytic = batch_grads(params, batch)?;
    let mut work = params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups = Vec::new();
    let mut kinks = 0;
    let mut worst: f64 = 0.0;
    let cached: Vec<Tensor> = batch.iter().map(|s| gesture_feature(params, s)).collect();
    for (gi, grad) in analytic.iter().enumerate() {
        let gesture = (!params.names()[gi].starts_with("gesture.")).then_some(cached.as_slice());
        let n = grad.len();
        let want = MIN_PER_GROUP.max(n.div_ceil(100)).min(n);
        let active: Vec<usize> = (0..n).filter(|&k| grad.data()[k] != 0.0).collect();
        let mut picks: Vec<usize> = Vec::with_capacity(want);
        if active.len() < n && !active.is_empty() {
            let m = (want / 2).min(active.len());
            picks.extend(sample(&mut rng, active.len(), m).into_iter().map(|i| active[i]));
        }
        let mut taken = vec![false; n];
        for &k in &picks {
            taken[k] = true;
        }
        let free: Vec<usize> = (0..n).filter(|&k| !taken[k]).collect();
        picks.extend(sample(&mut rng, free.len(), want - picks.len()).into_iter().map(|i| free[i]));
        picks.sort_unstable();
        let mut group_worst: f64 = 0.0;
        for &k in &picks {
            let fd = numeric_derivative(&mut work, batch, gesture, gi, k, &mut kinks)?;
            let an = grad.data()[k];
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(REL_FLOOR);
            group_worst = group_worst.max(rel);
        }
        worst = worst.max(group_worst);
        groups.push(GroupCheck {
            name: params.names()[gi].clone(),
            checked: picks.len(),
            max_rel_error: group_worst,
        });
    }
    Ok(GradCheckReport {
        max_rel_error: worst,
        groups,
        kinks,
    })
}
