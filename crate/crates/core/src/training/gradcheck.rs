use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Observation;
use crate::model::{EncoderConfig, ModelParams, Propagation};

use super::{backward, loss_total, GradientSet, TrainConfig};

/// Above this many coordinates a seeded subsample of this size is checked.
pub const FULL_CHECK_LIMIT: usize = 10_000;
const SUBSAMPLE_SEED: u64 = 0x6772_6164;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(family name, max relative error, coordinates checked)`.
    pub per_family: Vec<(String, f64, usize)>,
    pub coordinates: usize,
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Analytic gradients against central differences with the given step.
pub fn grad_check(
    params: &ModelParams,
    prop: &Propagation,
    cfg: &EncoderConfig,
    obs: &[Observation],
    tc: &TrainConfig,
    step: f64,
) -> Result<GradCheckReport> {
    let grads = backward(params, prop, cfg, obs, tc)?;
    grad_check_against(params, &grads, prop, cfg, obs, tc, step)
}

/// Like [`grad_check`] but compares a caller-supplied gradient, which lets
/// the checker itself be tested on corrupted input.
pub fn grad_check_against(
    params: &ModelParams,
    grads: &GradientSet,
    prop: &Propagation,
    cfg: &EncoderConfig,
    obs: &[Observation],
    tc: &TrainConfig,
    step: f64,
) -> Result<GradCheckReport> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let sizes: Vec<usize> = params.families().iter().map(|f| f.len()).collect();
    if sizes != grads.families().iter().map(|f| f.len()).collect::<Vec<_>>() {
        return Err(Error::dims("gradient layout differs from parameter layout"));
    }
    let mut coords: Vec<(usize, usize)> = sizes
        .iter()
        .enumerate()
        .flat_map(|(fam, &len)| (0..len).map(move |k| (fam, k)))
        .collect();
    if coords.len() > FULL_CHECK_LIMIT {
        let mut rng = ChaCha8Rng::seed_from_u64(SUBSAMPLE_SEED);
        let mut picked = sample(&mut rng, coords.len(), FULL_CHECK_LIMIT).into_vec();
        picked.sort_unstable();
        coords = picked.into_iter().map(|i| coords[i]).collect();
    }

    let analytic = grads.families();
    let errors = crate::par::map_range(coords.len(), |c| -> Result<f64> {
        let (fam, k) = coords[c];
        let mut probe = params.clone();
        let base = probe.families()[fam][k];
        probe.families_mut()[fam][k] = base + step;
        let up = loss_total(&probe, prop, cfg, obs, tc)?;
        probe.families_mut()[fam][k] = base - step;
        let down = loss_total(&probe, prop, cfg, obs, tc)?;
        let numeric = (up - down) / (2.0 * step);
        Ok(relative_error(analytic[fam][k], numeric))
    });

    let names = params.family_names();
    let mut per_family: Vec<(String, f64, usize)> = names.into_iter().map(|n| (n, 0.0, 0)).collect();
    for (&(fam, _), err) in coords.iter().zip(errors) {
        let err = err?;
        let entry = &mut per_family[fam];
        entry.1 = entry.1.max(err);
        entry.2 += 1;
    }
    let max_rel_error = per_family.iter().map(|f| f.1).fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_error,
        per_family,
        coordinates: coords.len(),
    })
}
