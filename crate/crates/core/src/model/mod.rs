//! The tensorized lightweight encoder, its ablations, and the edge head.

mod checkpoint;
mod encoder;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use encoder::{encode, encode_ablation, encode_with, min_abs_preactivation};
pub(crate) use encoder::{encoder_backward, forward_traced};

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Observation;
use crate::tensor::{m_transform_sparse, SparseSnapshots, Tensor3, TransformMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// M-transform plus face-wise aggregation, no weights, no activation.
    Tlgcn,
    /// Per-slot `Ã_t H_t`, no temporal mixing.
    WithoutStip,
    /// Temporal mixing kept, per-layer weights and activation restored.
    WithoutLight,
    /// Plain per-slot GCN layer `σ(Ã_t H_t W_t)`.
    WithoutStipLight,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Tlgcn,
        Variant::WithoutStip,
        Variant::WithoutLight,
        Variant::WithoutStipLight,
    ];

    pub fn uses_stip(self) -> bool {
        matches!(self, Variant::Tlgcn | Variant::WithoutLight)
    }

    pub fn has_feature_transform(self) -> bool {
        matches!(self, Variant::WithoutLight | Variant::WithoutStipLight)
    }

    /// Command-line spelling.
    pub fn key(self) -> &'static str {
        match self {
            Variant::Tlgcn => "tlgcn",
            Variant::WithoutStip => "wo-stip",
            Variant::WithoutLight => "wo-l",
            Variant::WithoutStipLight => "wo-stip-l",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Tlgcn => "TLGCN",
            Variant::WithoutStip => "w/o STIP",
            Variant::WithoutLight => "w/o L",
            Variant::WithoutStipLight => "w/o STIP_L",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let k: String = s
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        match k.as_str() {
            "tlgcn" => Ok(Variant::Tlgcn),
            "wostip" => Ok(Variant::WithoutStip),
            "wol" => Ok(Variant::WithoutLight),
            "wostipl" => Ok(Variant::WithoutStipLight),
            _ => Err(Error::invalid(format!("unknown variant `{s}`"))),
        }
    }
}

/// Nonlinearity used by the variants that keep a feature transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub(crate) fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    #[inline]
    pub(crate) fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub layers: usize,
    pub fdim: usize,
    pub m: TransformMatrix,
    pub activation: Activation,
}

impl EncoderConfig {
    pub fn new(layers: usize, fdim: usize, m: TransformMatrix) -> Result<Self> {
        if layers == 0 {
            return Err(Error::invalid("encoder needs at least one layer"));
        }
        if fdim == 0 {
            return Err(Error::invalid("feature dimension must be at least 1"));
        }
        Ok(Self {
            layers,
            fdim,
            m,
            activation: Activation::Relu,
        })
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn t_slots(&self) -> usize {
        self.m.t_slots()
    }

    pub fn bandwidth(&self) -> usize {
        self.m.bandwidth()
    }
}

/// Learnable state: node features `X` (N x F x T), the linear head over
/// `h_it ‖ h_jt`, and per-layer `F x F x T` weights for the ablations that
/// keep a feature transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub x: Tensor3,
    pub head_w: Vec<f64>,
    pub head_b: f64,
    pub variant: Variant,
    pub layer_weights: Option<Vec<Tensor3>>,
}

impl ModelParams {
    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn fdim(&self) -> usize {
        self.x.cols()
    }

    pub fn t_slots(&self) -> usize {
        self.x.slots()
    }

    pub fn parameter_count(&self) -> usize {
        let w: usize = self
            .layer_weights
            .iter()
            .flatten()
            .map(Tensor3::len)
            .sum();
        self.x.len() + self.head_w.len() + 1 + w
    }

    /// Parameter tensors in a fixed order: `x`, `head_w`, `head_b`, then
    /// one entry per layer weight.
    pub fn families(&self) -> Vec<&[f64]> {
        let mut out = vec![self.x.as_slice(), &self.head_w[..], std::slice::from_ref(&self.head_b)];
        out.extend(self.layer_weights.iter().flatten().map(Tensor3::as_slice));
        out
    }

    pub fn families_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![
            self.x.as_mut_slice(),
            &mut self.head_w[..],
            std::slice::from_mut(&mut self.head_b),
        ];
        out.extend(self.layer_weights.iter_mut().flatten().map(Tensor3::as_mut_slice));
        out
    }

    pub fn family_names(&self) -> Vec<String> {
        let mut out = vec!["x".to_string(), "head_w".to_string(), "head_b".to_string()];
        let layers = self.layer_weights.as_ref().map_or(0, Vec::len);
        out.extend((0..layers).map(|l| format!("w{l}")));
        out
    }

    pub fn is_finite(&self) -> bool {
        self.families().iter().all(|f| f.iter().all(|v| v.is_finite()))
    }

    pub(crate) fn check_against(&self, cfg: &EncoderConfig, n: usize) -> Result<()> {
        let want = [n, cfg.fdim, cfg.t_slots()];
        if self.x.dims() != want {
            return Err(Error::dims(format!(
                "feature tensor is {:?}, config expects {want:?}",
                self.x.dims()
            )));
        }
        if self.head_w.len() != 2 * cfg.fdim {
            return Err(Error::dims(format!(
                "head has {} weights, expected {}",
                self.head_w.len(),
                2 * cfg.fdim
            )));
        }
        match (&self.layer_weights, self.variant.has_feature_transform()) {
            (None, true) => Err(Error::InvalidState(format!(
                "variant {} needs layer weights",
                self.variant
            ))),
            (Some(ws), true) => {
                let wd = [cfg.fdim, cfg.fdim, cfg.t_slots()];
                if ws.len() != cfg.layers || ws.iter().any(|w| w.dims() != wd) {
                    return Err(Error::dims(format!(
                        "expected {} layer weights of dims {wd:?}",
                        cfg.layers
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn xavier(fan_in: usize, fan_out: usize) -> Uniform<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Uniform::new_inclusive(-bound, bound)
}

/// Xavier-uniform initialisation, deterministic in `seed`.
///
/// `X` uses fan-in `N` and fan-out `F` for every feature slice, so
/// `|x| <= sqrt(6/(N+F))`. The head uses `(2F, 1)`; layer weights `(F, F)`.
pub fn init_params(n: usize, cfg: &EncoderConfig, variant: Variant, seed: u64) -> Result<ModelParams> {
    if n == 0 {
        return Err(Error::invalid("need at least one node"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [n, cfg.fdim, cfg.t_slots()];
    let dist = xavier(n, cfg.fdim);
    let x = Tensor3::from_fn(dims, |_, _, _| dist.sample(&mut rng));
    let dist = xavier(2 * cfg.fdim, 1);
    let head_w = (0..2 * cfg.fdim).map(|_| dist.sample(&mut rng)).collect();
    let layer_weights = variant.has_feature_transform().then(|| {
        let dist = xavier(cfg.fdim, cfg.fdim);
        (0..cfg.layers)
            .map(|_| Tensor3::from_fn([cfg.fdim, cfg.fdim, cfg.t_slots()], |_, _, _| dist.sample(&mut rng)))
            .collect()
    });
    Ok(ModelParams {
        x,
        head_w,
        head_b: 0.0,
        variant,
        layer_weights,
    })
}

/// The constant propagation operators for one graph and one `M`.
///
/// `Ã ×₃ M` is formed once here and reused by every layer and epoch.
#[derive(Debug, Clone)]
pub struct Propagation {
    a_norm: SparseSnapshots,
    mixed: SparseSnapshots,
    m: TransformMatrix,
    m_t: TransformMatrix,
}

impl Propagation {
    pub fn new(a_norm: SparseSnapshots, m: &TransformMatrix) -> Result<Self> {
        let mixed = m_transform_sparse(&a_norm, m)?;
        Ok(Self {
            a_norm,
            mixed,
            m: m.clone(),
            m_t: m.transpose(),
        })
    }

    pub fn n(&self) -> usize {
        self.a_norm.n()
    }

    pub fn t_slots(&self) -> usize {
        self.a_norm.t_slots()
    }

    pub fn normalized(&self) -> &SparseSnapshots {
        &self.a_norm
    }

    /// `Ã ×₃ M`.
    pub fn mixed(&self) -> &SparseSnapshots {
        &self.mixed
    }

    pub fn m(&self) -> &TransformMatrix {
        &self.m
    }

    pub(crate) fn m_t(&self) -> &TransformMatrix {
        &self.m_t
    }

    pub(crate) fn check(&self, cfg: &EncoderConfig) -> Result<()> {
        if self.m != cfg.m {
            return Err(Error::InvalidState(
                "propagation operator was built for a different transform matrix".into(),
            ));
        }
        Ok(())
    }
}

/// `ŷ = w · (h_it ‖ h_jt) + b`.
pub fn predict_edge(h: &Tensor3, i: usize, j: usize, t: usize, params: &ModelParams) -> Result<f64> {
    let [n, f, slots] = h.dims();
    if i >= n || j >= n || t >= slots {
        return Err(Error::invalid(format!(
            "edge ({i}, {j}, {t}) outside {n} nodes x {slots} slots"
        )));
    }
    if params.head_w.len() != 2 * f {
        return Err(Error::dims(format!(
            "head expects {} features, embedding has {f}",
            params.head_w.len() / 2
        )));
    }
    Ok(predict_unchecked(h, i, j, t, params))
}

#[inline]
pub(crate) fn predict_unchecked(h: &Tensor3, i: usize, j: usize, t: usize, params: &ModelParams) -> f64 {
    let f = h.cols();
    let (wi, wj) = params.head_w.split_at(f);
    let mut acc = 0.0;
    for (w, v) in wi.iter().zip(h.row(i, t)) {
        acc += w * v;
    }
    for (w, v) in wj.iter().zip(h.row(j, t)) {
        acc += w * v;
    }
    acc + params.head_b
}

/// One encoder pass, then the head on each `(i, j, t)` in order.
pub fn forward_batch(
    params: &ModelParams,
    prop: &Propagation,
    cfg: &EncoderConfig,
    edges: &[(usize, usize, usize)],
) -> Result<Vec<f64>> {
    if edges.is_empty() {
        return Ok(Vec::new());
    }
    let h = encode_with(params, prop, cfg)?;
    edges
        .iter()
        .map(|&(i, j, t)| predict_edge(&h, i, j, t, params))
        .collect()
}

/// Predictions for observation records given an already computed embedding.
pub fn predict_observations(h: &Tensor3, params: &ModelParams, obs: &[Observation]) -> Result<Vec<f64>> {
    obs.iter()
        .map(|o| predict_edge(h, o.src, o.dst, o.slot, params))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::make_m1;

    fn cfg(layers: usize, fdim: usize, t: usize) -> EncoderConfig {
        EncoderConfig::new(layers, fdim, make_m1(t, 2).unwrap()).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let c = cfg(2, 4, 3);
        let a = init_params(7, &c, Variant::WithoutLight, 5).unwrap();
        let b = init_params(7, &c, Variant::WithoutLight, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_params(7, &c, Variant::WithoutLight, 6).unwrap());
        let bound = (6.0f64 / 11.0).sqrt();
        assert!(a.x.as_slice().iter().all(|v| v.abs() <= bound));
        assert_eq!(a.head_b, 0.0);
        assert_eq!(a.layer_weights.as_ref().unwrap().len(), 2);
        assert!(init_params(7, &c, Variant::Tlgcn, 5).unwrap().layer_weights.is_none());
    }

    #[test]
    fn init_single_scalar() {
        let p = init_params(1, &cfg(1, 1, 1), Variant::Tlgcn, 0).unwrap();
        assert_eq!(p.x.len(), 1);
        assert!(p.x.as_slice()[0].abs() <= 3f64.sqrt());
    }

    #[test]
    fn parameter_count_gap_is_removed_weights() {
        let (l, f, t) = (3, 5, 4);
        let c = cfg(l, f, t);
        let light = init_params(9, &c, Variant::Tlgcn, 1).unwrap();
        let heavy = init_params(9, &c, Variant::WithoutLight, 1).unwrap();
        assert_eq!(heavy.parameter_count() - light.parameter_count(), l * f * f * t);
        assert_eq!(light.parameter_count(), 9 * f * t + 2 * f + 1);
    }

    #[test]
    fn head_predictions() {
        let h = Tensor3::new([2, 1, 1], vec![2.0, 3.0]).unwrap();
        let mut p = init_params(2, &cfg(1, 1, 1), Variant::Tlgcn, 0).unwrap();
        p.head_w = vec![1.0, 1.0];
        p.head_b = 0.5;
        assert_eq!(predict_edge(&h, 0, 1, 0, &p).unwrap(), 5.5);
        assert_eq!(predict_edge(&h, 1, 0, 0, &p).unwrap(), 5.5);
        p.head_w = vec![0.0, 0.0];
        p.head_b = 0.0;
        assert_eq!(predict_edge(&h, 0, 1, 0, &p).unwrap(), 0.0);
        assert!(matches!(predict_edge(&h, 2, 0, 0, &p), Err(Error::InvalidArgument(_))));
        assert!(predict_edge(&h, 0, 0, 1, &p).is_err());
    }

    #[test]
    fn variant_names_parse() {
        for v in Variant::ALL {
            assert_eq!(v.key().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("w/o STIP_L".parse::<Variant>().unwrap(), Variant::WithoutStipLight);
        assert!("gat".parse::<Variant>().is_err());
    }
}
