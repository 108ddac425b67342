//! MAE / RMSE and per-split evaluation reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Observation, SplitName};
use crate::model::{encode_with, predict_edge, EncoderConfig, ModelParams, Propagation};
use crate::tensor::Tensor3;

fn check_pair(preds: &[f64], targets: &[f64]) -> Result<()> {
    if preds.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} predictions vs {} targets",
            preds.len(),
            targets.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::invalid("metrics need at least one prediction"));
    }
    Ok(())
}

/// Mean shifted by the first value: `v0 + Σ(v - v0)/n`. Equal inputs give
/// back exactly that value, which plain `Σv/n` does not.
fn shifted_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut values = values.peekable();
    let first = *values.peek().expect("non-empty");
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + (v - first), n + 1));
    first + sum / n as f64
}

pub fn mae(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_pair(preds, targets)?;
    Ok(shifted_mean(preds.iter().zip(targets).map(|(p, t)| (t - p).abs())))
}

pub fn rmse(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_pair(preds, targets)?;
    Ok(shifted_mean(preds.iter().zip(targets).map(|(p, t)| (t - p) * (t - p))).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotMetrics {
    pub slot: usize,
    pub mae: f64,
    pub rmse: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: SplitName,
    pub mae: f64,
    pub rmse: f64,
    pub count: usize,
    pub per_slot: Vec<SlotMetrics>,
}

impl EvalReport {
    pub fn from_predictions(split: SplitName, preds: &[f64], obs: &[&Observation]) -> Result<Self> {
        let targets: Vec<f64> = obs.iter().map(|o| o.weight).collect();
        let mut by_slot: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for (p, o) in preds.iter().zip(obs) {
            let e = by_slot.entry(o.slot).or_default();
            e.0.push(*p);
            e.1.push(o.weight);
        }
        let per_slot = by_slot
            .into_iter()
            .map(|(slot, (p, t))| {
                Ok(SlotMetrics {
                    slot,
                    mae: mae(&p, &t)?,
                    rmse: rmse(&p, &t)?,
                    count: p.len(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            split,
            mae: mae(preds, &targets)?,
            rmse: rmse(preds, &targets)?,
            count: preds.len(),
            per_slot,
        })
    }

    /// `key: value` lines; floats use round-trip formatting.
    pub fn to_record(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "split: {}", self.split);
        let _ = writeln!(s, "count: {}", self.count);
        let _ = writeln!(s, "mae: {:?}", self.mae);
        let _ = writeln!(s, "rmse: {:?}", self.rmse);
        for m in &self.per_slot {
            let _ = writeln!(
                s,
                "slot.{}: count={} mae={:?} rmse={:?}",
                m.slot, m.count, m.mae, m.rmse
            );
        }
        s
    }
}

/// Metrics on a subset of observations given a precomputed embedding.
pub fn evaluate_embedding(
    h: &Tensor3,
    params: &ModelParams,
    observations: &[Observation],
    indices: &[usize],
    split: SplitName,
) -> Result<EvalReport> {
    if indices.is_empty() {
        return Err(Error::invalid(format!("{split} split is empty")));
    }
    let obs: Vec<&Observation> = indices
        .iter()
        .map(|&k| {
            observations
                .get(k)
                .ok_or_else(|| Error::invalid(format!("observation index {k} out of range")))
        })
        .collect::<Result<_>>()?;
    let preds: Vec<f64> = obs
        .iter()
        .map(|o| predict_edge(h, o.src, o.dst, o.slot, params))
        .collect::<Result<_>>()?;
    EvalReport::from_predictions(split, &preds, &obs)
}

pub fn evaluate(
    params: &ModelParams,
    prop: &Propagation,
    cfg: &EncoderConfig,
    observations: &[Observation],
    indices: &[usize],
    split: SplitName,
) -> Result<EvalReport> {
    if indices.is_empty() {
        return Err(Error::invalid(format!("{split} split is empty")));
    }
    let h = encode_with(params, prop, cfg)?;
    evaluate_embedding(&h, params, observations, indices, split)
}
