use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Observation, SplitSet};
use crate::model::{init_params, EncoderConfig, Propagation, Variant};

use super::{train_params, TrainConfig, TrainOutcome};

pub const LR_GRID: [f64; 7] = [0.00005, 0.0001, 0.0005, 0.001, 0.005, 0.01, 0.05];
pub const L2_GRID: [f64; 11] = [0.00001, 0.00005, 0.0001, 0.0005, 0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lr: f64,
    pub l2: f64,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub epochs_run: usize,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    /// Every configuration in `lr`-major order; diverged ones are absent.
    pub points: Vec<GridPoint>,
    pub best: GridPoint,
    /// The winning configuration retrained from scratch.
    pub outcome: TrainOutcome,
}

/// Trains every `(lr, l2)` pair from the same initialisation and keeps the
/// lowest validation MAE; ties go to the earlier pair.
///
/// Only summaries are held while sweeping. The winner is retrained, which
/// reproduces its run exactly.
#[allow(clippy::too_many_arguments)]
pub fn grid_search(
    prop: &Propagation,
    cfg: &EncoderConfig,
    variant: Variant,
    observations: &[Observation],
    split: &SplitSet,
    base: &TrainConfig,
    lrs: &[f64],
    l2s: &[f64],
) -> Result<GridResult> {
    if lrs.is_empty() || l2s.is_empty() {
        return Err(Error::invalid("grid needs at least one lr and one l2 value"));
    }
    let pairs: Vec<(f64, f64)> = lrs.iter().flat_map(|&lr| l2s.iter().map(move |&l2| (lr, l2))).collect();
    for &(lr, l2) in &pairs {
        TrainConfig { lr, l2, ..base.clone() }.validate()?;
    }
    let init = init_params(prop.n(), cfg, variant, base.seed)?;

    let runs = crate::par::map_range(pairs.len(), |k| {
        let (lr, l2) = pairs[k];
        let tc = TrainConfig { lr, l2, ..base.clone() };
        match train_params(init.clone(), prop, cfg, observations, split, &tc) {
            Ok(out) => Ok(Some(GridPoint {
                lr,
                l2,
                best_epoch: out.best_epoch,
                best_val_mae: out.best_record().val_mae,
                epochs_run: out.history.len(),
            })),
            Err(Error::InvalidState(_)) => Ok(None),
            Err(e) => Err(e),
        }
    });
    let points: Vec<GridPoint> = runs.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
    let best = points
        .iter()
        .fold(None::<&GridPoint>, |acc, p| match acc {
            Some(b) if b.best_val_mae <= p.best_val_mae => Some(b),
            _ => Some(p),
        })
        .cloned()
        .ok_or_else(|| Error::InvalidState("every grid configuration diverged".into()))?;
    let tc = TrainConfig {
        lr: best.lr,
        l2: best.l2,
        ..base.clone()
    };
    let outcome = train_params(init, prop, cfg, observations, split, &tc)?;
    Ok(GridResult { points, best, outcome })
}
