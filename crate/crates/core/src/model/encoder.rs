use super::{Activation, EncoderConfig, ModelParams, Propagation, Variant};
use crate::error::{Error, Result};
use crate::tensor::{
    facewise_product, facewise_product_nt, facewise_product_sparse, facewise_product_sparse_transposed,
    facewise_product_tn, m_transform, SparseSnapshots, Tensor3,
};

/// Forward intermediates of one weighted layer, kept for the backward pass.
/// The lightweight variants are linear and need none.
pub(crate) struct LayerCache {
    /// Aggregated input before the weight product (`B Δ Ĥ` or `Ã Δ H`).
    propagated: Tensor3,
    /// The weight tensor as multiplied (`W ×₃ M` or `W`).
    weights: Tensor3,
    preact: Tensor3,
}

/// `H^(L)` for the params' variant.
///
/// For [`Variant::Tlgcn`] every layer is `H ← (Ã ×₃ M) Δ (H ×₃ M)`.
pub fn encode(params: &ModelParams, a_norm: &SparseSnapshots, cfg: &EncoderConfig) -> Result<Tensor3> {
    let prop = Propagation::new(a_norm.clone(), &cfg.m)?;
    encode_with(params, &prop, cfg)
}

/// Encoder for the three ablation variants; rejects plain TLGCN.
pub fn encode_ablation(params: &ModelParams, a_norm: &SparseSnapshots, cfg: &EncoderConfig) -> Result<Tensor3> {
    if params.variant == Variant::Tlgcn {
        return Err(Error::InvalidState("encode_ablation called on the full TLGCN variant".into()));
    }
    encode(params, a_norm, cfg)
}

pub fn encode_with(params: &ModelParams, prop: &Propagation, cfg: &EncoderConfig) -> Result<Tensor3> {
    Ok(forward_traced(params, prop, cfg, false)?.0)
}

fn apply_activation(z: &Tensor3, act: Activation) -> Tensor3 {
    Tensor3::from_raw(z.dims(), z.as_slice().iter().map(|&v| act.apply(v)).collect())
}

pub(crate) fn forward_traced(
    params: &ModelParams,
    prop: &Propagation,
    cfg: &EncoderConfig,
    keep: bool,
) -> Result<(Tensor3, Vec<LayerCache>)> {
    prop.check(cfg)?;
    params.check_against(cfg, prop.n())?;
    let mut caches = Vec::new();
    let mut h = params.x.clone();
    for l in 0..cfg.layers {
        h = match params.variant {
            Variant::Tlgcn => facewise_product_sparse(prop.mixed(), &m_transform(&h, prop.m())?)?,
            Variant::WithoutStip => facewise_product_sparse(prop.normalized(), &h)?,
            Variant::WithoutLight | Variant::WithoutStipLight => {
                let w = &params.layer_weights.as_ref().expect("checked")[l];
                let (propagated, weights) = if params.variant == Variant::WithoutLight {
                    (
                        facewise_product_sparse(prop.mixed(), &m_transform(&h, prop.m())?)?,
                        m_transform(w, prop.m())?,
                    )
                } else {
                    (facewise_product_sparse(prop.normalized(), &h)?, w.clone())
                };
                let preact = facewise_product(&propagated, &weights)?;
                let out = apply_activation(&preact, cfg.activation);
                if keep {
                    caches.push(LayerCache {
                        propagated,
                        weights,
                        preact,
                    });
                }
                out
            }
        };
    }
    Ok((h, caches))
}

/// Pulls `∂L/∂H^(L)` back to `∂L/∂X` and, for weighted variants, `∂L/∂W^(l)`.
pub(crate) fn encoder_backward(
    params: &ModelParams,
    prop: &Propagation,
    cfg: &EncoderConfig,
    caches: &[LayerCache],
    d_out: Tensor3,
) -> Result<(Tensor3, Option<Vec<Tensor3>>)> {
    let mut g = d_out;
    match params.variant {
        Variant::Tlgcn => {
            for _ in 0..cfg.layers {
                g = m_transform(&facewise_product_sparse_transposed(prop.mixed(), &g)?, prop.m_t())?;
            }
            Ok((g, None))
        }
        Variant::WithoutStip => {
            for _ in 0..cfg.layers {
                g = facewise_product_sparse_transposed(prop.normalized(), &g)?;
            }
            Ok((g, None))
        }
        Variant::WithoutLight | Variant::WithoutStipLight => {
            if caches.len() != cfg.layers {
                return Err(Error::InvalidState("missing forward caches for backward pass".into()));
            }
            let stip = params.variant == Variant::WithoutLight;
            let mut d_weights = Vec::with_capacity(cfg.layers);
            for cache in caches.iter().rev() {
                let gz = Tensor3::from_raw(
                    g.dims(),
                    g.as_slice()
                        .iter()
                        .zip(cache.preact.as_slice())
                        .map(|(d, &z)| d * cfg.activation.derivative(z))
                        .collect(),
                );
                let d_w = facewise_product_tn(&cache.propagated, &gz)?;
                let d_prop = facewise_product_nt(&gz, &cache.weights)?;
                if stip {
                    d_weights.push(m_transform(&d_w, prop.m_t())?);
                    g = m_transform(&facewise_product_sparse_transposed(prop.mixed(), &d_prop)?, prop.m_t())?;
                } else {
                    d_weights.push(d_w);
                    g = facewise_product_sparse_transposed(prop.normalized(), &d_prop)?;
                }
            }
            d_weights.reverse();
            Ok((g, Some(d_weights)))
        }
    }
}

/// Smallest `|z|` over all pre-activations of the weighted variants; `None`
/// for the lightweight ones, which have no activation.
pub fn min_abs_preactivation(params: &ModelParams, prop: &Propagation, cfg: &EncoderConfig) -> Result<Option<f64>> {
    let (_, caches) = forward_traced(params, prop, cfg, true)?;
    Ok(caches
        .iter()
        .flat_map(|c| c.preact.as_slice().iter().map(|v| v.abs()))
        .reduce(f64::min))
}
