use crate::error::{Error, Result};
use crate::model::ModelParams;

use super::{GradientSet, TrainConfig};

/// First and second moments per parameter family, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.families().iter().map(|f| vec![0.0; f.len()]).collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step(params: &mut ModelParams, grads: &GradientSet, state: &mut AdamState, tc: &TrainConfig) -> Result<()> {
    let grad_fams = grads.families();
    let mut param_fams = params.families_mut();
    let shapes_match = param_fams.len() == grad_fams.len()
        && param_fams.len() == state.first.len()
        && param_fams
            .iter()
            .zip(&grad_fams)
            .zip(&state.first)
            .all(|((p, g), m)| p.len() == g.len() && p.len() == m.len());
    if !shapes_match {
        return Err(Error::invalid("parameter, gradient and optimizer state shapes differ"));
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (tc.adam_beta1, tc.adam_beta2);
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);
    let (lr, eps) = (tc.lr, tc.adam_eps);

    for (fam, p) in param_fams.iter_mut().enumerate() {
        let g = grad_fams[fam];
        let m = &mut state.first[fam];
        let v = &mut state.second[fam];
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let m_hat = m[k] / bias1;
            let v_hat = v[k] / bias2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
