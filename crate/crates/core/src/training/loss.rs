use crate::error::{Error, Result};
use crate::graph::Observation;
use crate::model::{encode_with, predict_edge, EncoderConfig, ModelParams, Propagation};

use super::TrainConfig;

/// Quadratic below `beta`, linear above: `d²/(2β)` if `d < β`, else `d - β/2`.
pub fn smooth_l1(pred: f64, target: f64, beta: f64) -> f64 {
    let d = (target - pred).abs();
    if d < beta {
        d * d / (2.0 * beta)
    } else {
        d - 0.5 * beta
    }
}

/// `∂ smooth_l1 / ∂ pred`, i.e. `(pred - target)/β` clamped to `[-1, 1]`.
pub fn smooth_l1_grad(pred: f64, target: f64, beta: f64) -> f64 {
    ((pred - target) / beta).clamp(-1.0, 1.0)
}

/// `Σ smooth_l1 over obs + λ‖X‖²`.
pub fn loss_total(
    params: &ModelParams,
    prop: &Propagation,
    cfg: &EncoderConfig,
    obs: &[Observation],
    tc: &TrainConfig,
) -> Result<f64> {
    if obs.is_empty() {
        return Err(Error::invalid("loss needs at least one observation"));
    }
    let h = encode_with(params, prop, cfg)?;
    let mut data = 0.0;
    for o in obs {
        data += smooth_l1(predict_edge(&h, o.src, o.dst, o.slot, params)?, o.weight, tc.beta);
    }
    Ok(data + tc.l2 * params.x.sum_squares())
}
