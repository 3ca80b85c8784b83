//! Toy-scale learned grounding: a point-set gesture encoder, a GRU language
//! encoder with self-attention, a proposal encoder over ground-truth boxes,
//! and a two-layer transformer decoder that scores proposals.

pub mod check;
pub mod graph;
pub mod model;
pub mod params;
pub mod tensor;
pub mod train;

pub use check::{grad_check, GradCheckReport};
pub use graph::{Graph, Var};
pub use model::{
    build_loss, loss_and_grads, predict, prepare_gesture, prepare_proposals, token_ids, FeatureBundle, Forward, FusionSample, Heads,
    LossBreakdown, Model, PreparedGesture, PreparedProposals, Targets,
};
pub use params::ModelParams;
pub use tensor::Tensor;
pub use train::{accuracy, grad_check_batch, lang_only_accuracy, Optimizer, micro_dataset, prepare_sample, train_toy, MicroExample, TracePoint, TrainOptions, TrainOutcome};

use crate::error::{Error, Result};

/// Raw head outputs, for scoring predictions made elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    /// Proposal logits (1×M).
    pub logits: Tensor,
    pub objectness: Tensor,
    pub semantic: Tensor,
    pub center: Tensor,
    pub size_cls: Tensor,
    pub size_reg: Tensor,
    pub language_cls: Tensor,
}

/// Evaluates every loss term of `outputs` against `targets`.
pub fn compute_loss(outputs: &HeadOutputs, targets: &Targets) -> Result<LossBreakdown> {
    let m = outputs.logits.cols();
    let rows_ok = [&outputs.objectness, &outputs.semantic, &outputs.center, &outputs.size_cls, &outputs.size_reg]
        .iter()
        .all(|t| t.rows() == m);
    if outputs.logits.rows() != 1 || !rows_ok || outputs.center.cols() != 3 || outputs.size_reg.cols() != 3 {
        return Err(Error::invalid("head output shapes do not match the proposal count"));
    }
    let mut g = Graph::new(&[]);
    let mut v = |t: &Tensor| g.input(t.clone());
    let heads = Heads {
        logits: v(&outputs.logits),
        objectness: v(&outputs.objectness),
        semantic: v(&outputs.semantic),
        center: v(&outputs.center),
        size_cls: v(&outputs.size_cls),
        size_reg: v(&outputs.size_reg),
        language_cls: v(&outputs.language_cls),
    };
    let l = build_loss(&mut g, &heads, targets)?;
    Ok(l.breakdown(&g))
}


#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::config::FusionDims;

    fn outputs(rng: &mut ChaCha8Rng, m: usize, dims: &FusionDims) -> HeadOutputs {
        let mut t = |r: usize, c: usize| {
            Tensor::new(r, c, (0..r * c).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
        };
        HeadOutputs {
            logits: t(1, m),
            objectness: t(m, 2),
            semantic: t(m, dims.classes),
            center: t(m, 3),
            size_cls: t(m, dims.size_bins),
            size_reg: t(m, 3),
            language_cls: t(1, dims.classes),
        }
    }

    fn targets(m: usize, dims: &FusionDims) -> Targets {
        let labels = vec!["chair"; m];
        let sizes = vec![crate::geom::Vec3::new(0.5, 0.4, 0.9); m];
        Targets::new(&labels, &sizes, m - 1, dims).unwrap()
    }

    #[test]
    fn weight_examples() {
        // leaf terms chosen so that L_det = L_box = 2
        let b = LossBreakdown::compose(1.0, 3.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0);
        assert_eq!(b.l_det, 2.0);
        assert!((b.l_total - 20.6).abs() < 1e-12);
        let b = LossBreakdown::compose(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0);
        assert_eq!(b.l_box, 1.0);
        assert!((b.l_det - 1.2).abs() < 1e-12);
    }

    #[test]
    fn random_compositions_hold() {
        let dims = FusionDims::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for i in 0..100 {
            let m = 1 + i % 6;
            let b = compute_loss(&outputs(&mut rng, m, &dims), &targets(m, &dims)).unwrap();
            assert_eq!(b.l_vote_reg, 0.0);
            assert!((b.l_box - (b.l_center_reg + 0.1 * b.l_size_cls + b.l_size_reg)).abs() < 1e-9);
            assert!((b.l_det - (b.l_vote_reg + 0.1 * b.l_objn_cls + 0.1 * b.l_sem_cls + b.l_box)).abs() < 1e-9);
            assert!((b.l_total - (0.3 * b.l_loc + 10.0 * b.l_det + 0.1 * b.l_cls)).abs() < 1e-9);
            for v in [b.l_loc, b.l_cls, b.l_objn_cls, b.l_sem_cls, b.l_center_reg, b.l_size_cls, b.l_size_reg] {
                assert!(v >= 0.0 && v.is_finite());
            }
        }
    }

    #[test]
    fn perfect_prediction_has_zero_loc_and_box() {
        let dims = FusionDims::default();
        let m = 4;
        let t = targets(m, &dims);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut o = outputs(&mut rng, m, &dims);
        let mut logits = vec![-1e3; m];
        logits[t.gt_index] = 1e3;
        o.logits = Tensor::new(1, m, logits).unwrap();
        o.center = Tensor::zeros(m, 3);
        o.size_reg = t.size_residuals.clone();
        let mut sc = Tensor::filled(m, dims.size_bins, -1e3);
        for (r, &bin) in t.size_bins.iter().enumerate() {
            sc.data_mut()[r * dims.size_bins + bin] = 1e3;
        }
        o.size_cls = sc;
        let b = compute_loss(&o, &t).unwrap();
        assert_eq!(b.l_loc, 0.0);
        assert_eq!(b.l_box, 0.0);
    }

    #[test]
    fn bad_target_rejected() {
        let dims = FusionDims::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let o = outputs(&mut rng, 3, &dims);
        let mut t = targets(3, &dims);
        t.gt_index = 3;
        assert!(compute_loss(&o, &t).is_err());
        let t = targets(4, &dims);
        assert!(compute_loss(&o, &t).is_err());
    }
}
