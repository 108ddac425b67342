use crate::error::{Error, Result};
use crate::graph::Observation;
use crate::model::{encoder_backward, forward_traced, predict_unchecked, EncoderConfig, ModelParams, Propagation};
use crate::tensor::Tensor3;

use super::loss::{smooth_l1, smooth_l1_grad};
use super::TrainConfig;

/// `∂L/∂θ` laid out like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub d_x: Tensor3,
    pub d_head_w: Vec<f64>,
    pub d_head_b: f64,
    pub d_layer_weights: Option<Vec<Tensor3>>,
}

impl GradientSet {
    /// Same family order as [`ModelParams::families`].
    pub fn families(&self) -> Vec<&[f64]> {
        let mut out = vec![self.d_x.as_slice(), &self.d_head_w[..], std::slice::from_ref(&self.d_head_b)];
        out.extend(self.d_layer_weights.iter().flatten().map(Tensor3::as_slice));
        out
    }

    pub fn families_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![
            self.d_x.as_mut_slice(),
            &mut self.d_head_w[..],
            std::slice::from_mut(&mut self.d_head_b),
        ];
        out.extend(self.d_layer_weights.iter_mut().flatten().map(Tensor3::as_mut_slice));
        out
    }

    pub fn is_finite(&self) -> bool {
        self.families().iter().all(|f| f.iter().all(|v| v.is_finite()))
    }
}

/// Exact gradients of [`loss_total`](super::loss_total).
pub fn backward(
    params: &ModelParams,
    prop: &Propagation,
    cfg: &EncoderConfig,
    obs: &[Observation],
    tc: &TrainConfig,
) -> Result<GradientSet> {
    Ok(loss_and_gradients(params, prop, cfg, obs, tc)?.1)
}

/// Loss value and its gradients from a single traced forward pass.
pub fn loss_and_gradients(
    params: &ModelParams,
    prop: &Propagation,
    cfg: &EncoderConfig,
    obs: &[Observation],
    tc: &TrainConfig,
) -> Result<(f64, GradientSet)> {
    if obs.is_empty() {
        return Err(Error::invalid("loss needs at least one observation"));
    }
    let (h, caches) = forward_traced(params, prop, cfg, true)?;
    let [n, f, slots] = h.dims();
    let mut d_h = Tensor3::zeros(h.dims());
    let mut d_head_w = vec![0.0; 2 * f];
    let mut d_head_b = 0.0;
    let mut data_loss = 0.0;
    let (wi, wj) = params.head_w.split_at(f);

    for o in obs {
        if o.src >= n || o.dst >= n || o.slot >= slots {
            return Err(Error::invalid(format!(
                "observation ({}, {}, {}) outside {n} nodes x {slots} slots",
                o.src, o.dst, o.slot
            )));
        }
        let pred = predict_unchecked(&h, o.src, o.dst, o.slot, params);
        data_loss += smooth_l1(pred, o.weight, tc.beta);
        let g = smooth_l1_grad(pred, o.weight, tc.beta);
        if g == 0.0 {
            continue;
        }
        let (dwi, dwj) = d_head_w.split_at_mut(f);
        for (d, v) in dwi.iter_mut().zip(h.row(o.src, o.slot)) {
            *d += g * v;
        }
        for (d, v) in dwj.iter_mut().zip(h.row(o.dst, o.slot)) {
            *d += g * v;
        }
        d_head_b += g;
        for (d, w) in d_h.row_mut(o.src, o.slot).iter_mut().zip(wi) {
            *d += g * w;
        }
        for (d, w) in d_h.row_mut(o.dst, o.slot).iter_mut().zip(wj) {
            *d += g * w;
        }
    }

    let (mut d_x, d_layer_weights) = encoder_backward(params, prop, cfg, &caches, d_h)?;
    let two_l2 = 2.0 * tc.l2;
    crate::par::zip_apply(d_x.as_mut_slice(), params.x.as_slice(), |d, x| *d += two_l2 * x);

    let loss = data_loss + tc.l2 * params.x.sum_squares();
    Ok((
        loss,
        GradientSet {
            d_x,
            d_head_w,
            d_head_b,
            d_layer_weights,
        },
    ))
}
