//! Objective, exact gradients, Adam and the early-stopped training loop.

mod adam;
mod backward;
mod gradcheck;
mod grid;
mod loss;

pub use adam::{adam_step, AdamState};
pub use backward::{backward, loss_and_gradients, GradientSet};
pub use gradcheck::{grad_check, grad_check_against, relative_error, GradCheckReport, FULL_CHECK_LIMIT};
pub use grid::{grid_search, GridPoint, GridResult, L2_GRID, LR_GRID};
pub use loss::{loss_total, smooth_l1, smooth_l1_grad};

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{mask_adjacency_to_train, symmetrize_and_normalize, DynamicGraph, Observation, SplitSet};
use crate::metrics::{mae, rmse};
use crate::model::{encode_with, init_params, predict_observations, EncoderConfig, ModelParams, Propagation, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub l2: f64,
    pub beta: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Seeds parameter initialisation.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            l2: 1e-4,
            beta: 1.0,
            max_epochs: 300,
            patience: 20,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.lr) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::invalid(format!("l2 must be non-negative, got {}", self.l2)));
        }
        if !positive(self.beta) {
            return Err(Error::invalid(format!("beta must be positive, got {}", self.beta)));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs must be at least 1"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be at least 1"));
        }
        let unit = |v: f64| (0.0..1.0).contains(&v);
        if !unit(self.adam_beta1) || !unit(self.adam_beta2) || !positive(self.adam_eps) {
            return Err(Error::invalid("adam betas must lie in [0, 1) and eps must be positive"));
        }
        Ok(())
    }

    /// Patience capped at the epoch budget.
    pub fn effective_patience(&self) -> usize {
        self.patience.min(self.max_epochs)
    }
}

/// Metrics after the update of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_mae: f64,
    pub val_mae: f64,
    pub val_rmse: f64,
    pub wall_secs: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Validation MAE of the initial parameters.
    pub initial_val_mae: f64,
}

impl TrainOutcome {
    pub fn best_record(&self) -> &EpochRecord {
        &self.history[self.best_epoch - 1]
    }
}

pub const HISTORY_HEADER: &str = "epoch\ttrain_loss\ttrain_mae\tval_mae\tval_rmse";

/// History as TSV without wall time, so equal runs give equal bytes.
pub fn history_tsv(history: &[EpochRecord]) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for r in history {
        let _ = writeln!(
            s,
            "{}\t{:?}\t{:?}\t{:?}\t{:?}",
            r.epoch, r.train_loss, r.train_mae, r.val_mae, r.val_rmse
        );
    }
    s
}

pub fn timings_tsv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch\twall_secs\n");
    for r in history {
        let _ = writeln!(s, "{}\t{:.6}", r.epoch, r.wall_secs);
    }
    s
}

pub fn write_history(dir: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let dir = dir.as_ref();
    fs::write(dir.join("history.tsv"), history_tsv(history))?;
    fs::write(dir.join("timings.tsv"), timings_tsv(history))?;
    Ok(())
}

/// Propagation operators built from training edges only.
pub fn training_propagation(g: &DynamicGraph, split: &SplitSet, cfg: &EncoderConfig) -> Result<Propagation> {
    let masked = mask_adjacency_to_train(g, split)?;
    Propagation::new(symmetrize_and_normalize(&masked)?, &cfg.m)
}

/// Masks, normalizes, initialises from `tc.seed` and trains.
pub fn train(
    g: &DynamicGraph,
    split: &SplitSet,
    cfg: &EncoderConfig,
    variant: Variant,
    tc: &TrainConfig,
) -> Result<TrainOutcome> {
    tc.validate()?;
    let prop = training_propagation(g, split, cfg)?;
    let params = init_params(g.n, cfg, variant, tc.seed)?;
    train_params(params, &prop, cfg, &g.observations, split, tc)
}

fn gather(observations: &[Observation], indices: &[usize], what: &str) -> Result<Vec<Observation>> {
    if indices.is_empty() {
        return Err(Error::invalid(format!("{what} split is empty")));
    }
    indices
        .iter()
        .map(|&k| {
            observations
                .get(k)
                .copied()
                .ok_or_else(|| Error::invalid(format!("observation index {k} out of range")))
        })
        .collect()
}

fn targets(obs: &[Observation]) -> Vec<f64> {
    obs.iter().map(|o| o.weight).collect()
}

/// Full-batch Adam from `params`, one step per epoch, early-stopped on
/// validation MAE.
pub fn train_params(
    mut params: ModelParams,
    prop: &Propagation,
    cfg: &EncoderConfig,
    observations: &[Observation],
    split: &SplitSet,
    tc: &TrainConfig,
) -> Result<TrainOutcome> {
    tc.validate()?;
    let train_obs = gather(observations, &split.train, "train")?;
    let val_obs = gather(observations, &split.validation, "validation")?;
    let (train_y, val_y) = (targets(&train_obs), targets(&val_obs));

    let h0 = encode_with(&params, prop, cfg)?;
    let initial_val_mae = mae(&predict_observations(&h0, &params, &val_obs)?, &val_y)?;

    let mut state = AdamState::new(&params);
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, ModelParams)> = None;
    let mut stale = 0;
    let patience = tc.effective_patience();
    let start = Instant::now();

    for epoch in 1..=tc.max_epochs {
        let grads = backward(&params, prop, cfg, &train_obs, tc)?;
        adam_step(&mut params, &grads, &mut state, tc)?;

        let h = encode_with(&params, prop, cfg)?;
        let train_pred = predict_observations(&h, &params, &train_obs)?;
        let val_pred = predict_observations(&h, &params, &val_obs)?;
        let data_loss: f64 = train_pred
            .iter()
            .zip(&train_y)
            .map(|(&p, &y)| smooth_l1(p, y, tc.beta))
            .sum();
        let record = EpochRecord {
            epoch,
            train_loss: data_loss + tc.l2 * params.x.sum_squares(),
            train_mae: mae(&train_pred, &train_y)?,
            val_mae: mae(&val_pred, &val_y)?,
            val_rmse: rmse(&val_pred, &val_y)?,
            wall_secs: start.elapsed().as_secs_f64(),
        };
        let improved = best.as_ref().map_or(record.val_mae.is_finite(), |b| record.val_mae < b.1);
        if improved {
            best = Some((epoch, record.val_mae, params.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        history.push(record);
        if stale >= patience {
            break;
        }
    }

    let (best_epoch, _, params) =
        best.ok_or_else(|| Error::InvalidState("training diverged: no finite validation MAE".into()))?;
    Ok(TrainOutcome {
        params,
        history,
        best_epoch,
        initial_val_mae,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{random_instance, smooth_instance, InstanceSpec};
    use crate::tensor::{make_m1, SparseSnapshots, Tensor3};

    fn scalar_params(v: f64) -> ModelParams {
        let cfg = EncoderConfig::new(1, 1, make_m1(1, 1).unwrap()).unwrap();
        let mut p = init_params(1, &cfg, Variant::Tlgcn, 0).unwrap();
        p.x = Tensor3::new([1, 1, 1], vec![v]).unwrap();
        p
    }

    #[test]
    fn config_invariants() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { lr: 0.0, ..Default::default() },
            TrainConfig { l2: -1.0, ..Default::default() },
            TrainConfig { beta: 0.0, ..Default::default() },
            TrainConfig { patience: 0, ..Default::default() },
            TrainConfig { max_epochs: 0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidArgument(_))));
        }
        let tc = TrainConfig { max_epochs: 1, ..Default::default() };
        assert_eq!(tc.effective_patience(), 1);
    }

    #[test]
    fn loss_examples() {
        let cfg = EncoderConfig::new(1, 1, make_m1(1, 1).unwrap()).unwrap();
        let prop = Propagation::new(SparseSnapshots::identity(1, 1), &cfg.m).unwrap();
        let mut p = scalar_params(2.0);
        p.head_w = vec![0.5, 0.5];
        p.head_b = 0.0;
        // prediction = 0.5*2 + 0.5*2 = 2
        let obs = [Observation { src: 0, dst: 0, slot: 0, weight: 2.0 }];
        let tc = TrainConfig { l2: 1.0, ..Default::default() };
        assert_eq!(loss_total(&p, &prop, &cfg, &obs, &tc).unwrap(), 4.0);
        let tc0 = TrainConfig { l2: 0.0, ..Default::default() };
        assert_eq!(loss_total(&p, &prop, &cfg, &obs, &tc0).unwrap(), 0.0);
        assert!(matches!(loss_total(&p, &prop, &cfg, &[], &tc), Err(Error::InvalidArgument(_))));

        let g = backward(&p, &prop, &cfg, &obs, &tc).unwrap();
        assert_eq!(g.d_x.as_slice(), &[4.0]);
        assert_eq!(g.d_head_w, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_head_blocks_feature_gradient() {
        let inst = random_instance(&InstanceSpec::default(), Variant::Tlgcn, 5).unwrap();
        let mut p = inst.params.clone();
        p.head_w.iter_mut().for_each(|w| *w = 0.0);
        let tc = TrainConfig { l2: 0.0, ..Default::default() };
        let g = backward(&p, &inst.prop, &inst.cfg, &inst.observations, &tc).unwrap();
        assert!(g.d_x.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.d_head_w.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn adam_examples() {
        let tc = TrainConfig { lr: 0.001, ..Default::default() };
        let mut p = scalar_params(1.0);
        let mut state = AdamState::new(&p);
        let before = p.clone();
        let mut g = GradientSet {
            d_x: Tensor3::zeros([1, 1, 1]),
            d_head_w: vec![0.0; 2],
            d_head_b: 0.0,
            d_layer_weights: None,
        };
        adam_step(&mut p, &g, &mut state, &tc).unwrap();
        assert_eq!(p, before);
        assert_eq!(state.step, 1);

        let mut state = AdamState::new(&p);
        g.d_x.as_mut_slice()[0] = 1.0;
        adam_step(&mut p, &g, &mut state, &tc).unwrap();
        let expected = 1.0 - 0.001 / (1.0 + 1e-8);
        assert!((p.x.as_slice()[0] - expected).abs() < 1e-15);

        g.d_head_w.push(0.0);
        assert!(matches!(adam_step(&mut p, &g, &mut state, &tc), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let tc = TrainConfig { l2: 0.01, ..Default::default() };
        for v in Variant::ALL {
            let inst = smooth_instance(&InstanceSpec::default(), v, 11, 1e-3).unwrap();
            let r = grad_check(&inst.params, &inst.prop, &inst.cfg, &inst.observations, &tc, 1e-5).unwrap();
            assert!(r.max_rel_error < 1e-4, "{v}: {r:?}");
            let again = grad_check(&inst.params, &inst.prop, &inst.cfg, &inst.observations, &tc, 1e-5).unwrap();
            assert_eq!(r, again);
        }
    }

    #[test]
    fn checker_flags_corruption() {
        let tc = TrainConfig { l2: 0.01, ..Default::default() };
        let inst = random_instance(&InstanceSpec::default(), Variant::Tlgcn, 2).unwrap();
        let mut g = backward(&inst.params, &inst.prop, &inst.cfg, &inst.observations, &tc).unwrap();
        g.d_head_w[0] *= 2.0;
        let r = grad_check_against(&inst.params, &g, &inst.prop, &inst.cfg, &inst.observations, &tc, 1e-5).unwrap();
        assert!(r.max_rel_error > 0.3);
    }

    #[test]
    fn patience_one_stops_after_first_non_improvement() {
        let spec = InstanceSpec { observations: 40, ..Default::default() };
        let inst = random_instance(&spec, Variant::Tlgcn, 9).unwrap();
        let split = crate::graph::split_indices(40, 1).unwrap();
        let tc = TrainConfig { lr: 0.05, patience: 1, max_epochs: 300, ..Default::default() };
        let out = train_params(inst.params, &inst.prop, &inst.cfg, &inst.observations, &split, &tc).unwrap();
        let h = &out.history;
        let last = h.len() - 1;
        assert!(h.len() < 300);
        assert!(h[last].val_mae >= h[..last].iter().map(|r| r.val_mae).fold(f64::INFINITY, f64::min));
        assert!(h[..last].windows(2).all(|w| w[1].val_mae < w[0].val_mae));
        let best = h.iter().map(|r| r.val_mae).fold(f64::INFINITY, f64::min);
        assert_eq!(out.best_record().val_mae, best);
    }

    #[test]
    fn history_text_omits_wall_time() {
        let r = EpochRecord { epoch: 1, train_loss: 1.5, train_mae: 0.5, val_mae: 0.25, val_rmse: 0.5, wall_secs: 3.0 };
        assert_eq!(history_tsv(&[r.clone()]), format!("{HISTORY_HEADER}\n1\t1.5\t0.5\t0.25\t0.5\n"));
        assert_eq!(timings_tsv(&[r]), "epoch\twall_secs\n1\t3.000000\n");
    }
}
