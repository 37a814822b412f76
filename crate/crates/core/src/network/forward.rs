use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};

use super::attention::{attend, attend_backward, layer_norm, layer_norm_backward, AttentionCache, AttentionMap, LayerNormCache};
use super::config::{KinnConfig, Variant};
use super::loss::{loss_and_grad, probabilities, LossWeights};
use super::params::{KinnParams, LayerNormWeights, Linear};
use crate::error::{Error, Result};
use crate::label::Label;

/// Which sequence supplies the queries of the KINN1 cross-attention block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossQuery {
    /// Queries from the domain branch input (the normal KINN1 wiring).
    #[default]
    Domain,
    /// Queries from the commonsense branch itself, so the block reduces to
    /// self-attention. Used to compare the two variants on equal footing.
    Commonsense,
}

/// Padding masks (`true` = real position) and query wiring for one pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardOptions {
    pub domain_mask: Option<Vec<bool>>,
    pub cs_mask: Option<Vec<bool>>,
    pub cross_query: CrossQuery,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub a_domain: AttentionMap,
    pub a_commonsense: AttentionMap,
    pub a_fused: AttentionMap,
    /// Layer-normalized concatenation of both branch outputs.
    pub h: Array2<f64>,
    pub z: Array1<f64>,
    pub logits: Array1<f64>,
    pub probs: Array1<f64>,
    /// Rows of `h` that come from the domain branch (a prefix).
    pub domain_len: usize,
    /// Padding mask over the rows of `h`.
    pub fused_mask: Vec<bool>,
}

struct Cache {
    domain: AttentionCache,
    commonsense: AttentionCache,
    ln: LayerNormCache,
    fused: AttentionCache,
    domain_rows: usize,
    pooled: Array1<f64>,
    pooled_count: usize,
}

fn finite(block: &'static str, values: impl IntoIterator<Item = f64>) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::Numeric { block })
    }
}

fn mask_or_full(mask: &Option<Vec<bool>>, len: usize) -> Vec<bool> {
    mask.clone().unwrap_or_else(|| vec![true; len])
}

fn run(
    cfg: &KinnConfig,
    params: &KinnParams,
    x_domain: ArrayView2<f64>,
    x_cs: ArrayView2<f64>,
    opts: &ForwardOptions,
) -> Result<(ForwardTrace, Cache)> {
    if x_domain.ncols() != cfg.dim || x_cs.ncols() != cfg.dim {
        return Err(Error::Input(format!(
            "embedding width {}/{} does not match model dim {}",
            x_domain.ncols(),
            x_cs.ncols(),
            cfg.dim
        )));
    }
    let dmask = mask_or_full(&opts.domain_mask, x_domain.nrows());
    let cmask = mask_or_full(&opts.cs_mask, x_cs.nrows());
    let heads = cfg.heads;

    let (s_domain, domain) = attend(x_domain, x_domain, &params.attn_domain, heads, &dmask)?;
    finite("attn_domain", s_domain.iter().copied())?;

    let (query, query_mask) = match (cfg.variant, opts.cross_query) {
        (Variant::Kinn1, CrossQuery::Domain) => (x_domain, &dmask),
        _ => (x_cs, &cmask),
    };
    let (s_cs, commonsense) = attend(query, x_cs, &params.attn_commonsense, heads, &cmask)?;
    finite("attn_commonsense", s_cs.iter().copied())?;

    let concat = concatenate(Axis(0), &[s_domain.view(), s_cs.view()]).expect("equal widths");
    let mut fused_mask = dmask.clone();
    fused_mask.extend_from_slice(query_mask);
    let (h, ln) = layer_norm(&concat, &params.layernorm.gamma, &params.layernorm.beta);
    finite("layernorm", h.iter().copied())?;

    let (s_h, fused) = attend(h.view(), h.view(), &params.attn_fused, heads, &fused_mask)?;
    finite("attn_fused", s_h.iter().copied())?;

    let pooled_count = fused_mask.iter().filter(|&&m| m).count();
    let mut pooled = Array1::zeros(cfg.dim);
    for (row, _) in s_h.outer_iter().zip(&fused_mask).filter(|(_, &m)| m) {
        pooled += &row;
    }
    pooled /= pooled_count as f64;
    let z = (pooled.dot(&params.dense.w) + &params.dense.b).mapv(f64::tanh);
    finite("dense", z.iter().copied())?;

    let logits = z.dot(&params.head.w) + &params.head.b;
    finite("head", logits.iter().copied())?;
    let probs = probabilities(cfg.task, &logits);

    let trace = ForwardTrace {
        a_domain: domain.map.clone(),
        a_commonsense: commonsense.map.clone(),
        a_fused: fused.map.clone(),
        h,
        z,
        logits,
        probs,
        domain_len: x_domain.nrows(),
        fused_mask,
    };
    let cache = Cache {
        domain,
        commonsense,
        ln,
        fused,
        domain_rows: x_domain.nrows(),
        pooled,
        pooled_count,
    };
    Ok((trace, cache))
}

/// Full forward pass over one document with unpadded inputs.
pub fn forward(cfg: &KinnConfig, params: &KinnParams, x_domain: ArrayView2<f64>, x_cs: ArrayView2<f64>) -> Result<ForwardTrace> {
    forward_with(cfg, params, x_domain, x_cs, &ForwardOptions::default())
}

pub fn forward_with(
    cfg: &KinnConfig,
    params: &KinnParams,
    x_domain: ArrayView2<f64>,
    x_cs: ArrayView2<f64>,
    opts: &ForwardOptions,
) -> Result<ForwardTrace> {
    run(cfg, params, x_domain, x_cs, opts).map(|(t, _)| t)
}

fn backward(params: &KinnParams, trace: &ForwardTrace, cache: &Cache, dlogits: &Array1<f64>) -> KinnParams {
    let outer = |a: &Array1<f64>, b: &Array1<f64>| {
        let col = a.view().insert_axis(Axis(1));
        let row = b.view().insert_axis(Axis(0));
        col.dot(&row)
    };
    let head = Linear {
        w: outer(&trace.z, dlogits),
        b: dlogits.clone(),
    };
    let dz = params.head.w.dot(dlogits);
    let da = &dz * &trace.z.mapv(|z| 1.0 - z * z);
    let dense = Linear {
        w: outer(&cache.pooled, &da),
        b: da.clone(),
    };
    let dpooled = params.dense.w.dot(&da) / cache.pooled_count as f64;

    let mut ds_h = Array2::zeros(trace.h.raw_dim());
    for (mut row, _) in ds_h.outer_iter_mut().zip(&trace.fused_mask).filter(|(_, &m)| m) {
        row.assign(&dpooled);
    }
    let fused = attend_backward(&params.attn_fused, &cache.fused, &ds_h);
    let dh = fused.dxq + fused.dxkv;
    let (dconcat, dgamma, dbeta) = layer_norm_backward(&params.layernorm.gamma, &cache.ln, &dh);

    let ds_domain = dconcat.slice(s![..cache.domain_rows, ..]).to_owned();
    let ds_cs = dconcat.slice(s![cache.domain_rows.., ..]).to_owned();
    let domain = attend_backward(&params.attn_domain, &cache.domain, &ds_domain);
    let commonsense = attend_backward(&params.attn_commonsense, &cache.commonsense, &ds_cs);

    let mut grads = KinnParams {
        attn_domain: domain.weights,
        attn_commonsense: commonsense.weights,
        layernorm: LayerNormWeights { gamma: dgamma, beta: dbeta },
        attn_fused: fused.weights,
        dense,
        head,
    };
    grads.standardize();
    grads
}

/// Loss of one example and its gradient with respect to every parameter.
pub fn loss_and_gradients(
    cfg: &KinnConfig,
    params: &KinnParams,
    x_domain: ArrayView2<f64>,
    x_cs: ArrayView2<f64>,
    target: &Label,
    weights: Option<&LossWeights>,
) -> Result<(f64, KinnParams, ForwardTrace)> {
    loss_and_gradients_with(cfg, params, x_domain, x_cs, target, weights, &ForwardOptions::default())
}

pub fn loss_and_gradients_with(
    cfg: &KinnConfig,
    params: &KinnParams,
    x_domain: ArrayView2<f64>,
    x_cs: ArrayView2<f64>,
    target: &Label,
    weights: Option<&LossWeights>,
    opts: &ForwardOptions,
) -> Result<(f64, KinnParams, ForwardTrace)> {
    let (trace, cache) = run(cfg, params, x_domain, x_cs, opts)?;
    let (loss, dlogits) = loss_and_grad(cfg.task, &trace.logits, target, weights)?;
    let grads = backward(params, &trace, &cache, &dlogits);
    Ok((loss, grads, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::Task;

    fn cfg(variant: Variant) -> KinnConfig {
        KinnConfig { variant, dim: 16, heads: 4, dense_dim: 8, ..KinnConfig::default() }
    }

    fn seq(rows: usize, dim: usize, salt: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, dim), |(i, j)| (((i * 31 + j * 17 + salt * 7) % 23) as f64 - 11.0) / 11.0)
    }

    #[test]
    fn shape_arithmetic() {
        for variant in [Variant::Kinn1, Variant::Kinn2] {
            let c = cfg(variant);
            let p = KinnParams::init(&c);
            let t = forward(&c, &p, seq(5, 16, 0).view(), seq(7, 16, 1).view()).unwrap();
            let fused_len = if variant == Variant::Kinn2 { 12 } else { 10 };
            assert_eq!(t.h.nrows(), fused_len);
            assert_eq!((t.a_fused.rows(), t.a_fused.cols()), (fused_len, fused_len));
            assert_eq!(t.z.len(), 8);
            assert_eq!(t.logits.len(), 2);
            assert_eq!(t.a_domain.rows(), 5);
        }
    }

    #[test]
    fn zero_weights_give_head_bias() {
        let c = cfg(Variant::Kinn2);
        let mut p = KinnParams::zeros(&c);
        p.layernorm.gamma.fill(1.0);
        p.head.b[0] = 0.25;
        p.head.b[1] = -0.5;
        for salt in 0..3 {
            let t = forward(&c, &p, seq(3, 16, salt).view(), seq(4, 16, salt + 1).view()).unwrap();
            assert_eq!(t.logits.to_vec(), vec![0.25, -0.5]);
        }
    }

    #[test]
    fn multiclass_probs_sum_to_one() {
        let c = KinnConfig { task: Task::MultiClass, num_classes: 6, ..cfg(Variant::Kinn1) };
        let p = KinnParams::init(&c);
        let t = forward(&c, &p, seq(4, 16, 2).view(), seq(6, 16, 3).view()).unwrap();
        assert!((t.probs.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn width_mismatch_is_input_error() {
        let c = cfg(Variant::Kinn2);
        let p = KinnParams::init(&c);
        let err = forward(&c, &p, seq(3, 8, 0).view(), seq(3, 16, 0).view()).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn non_finite_names_block() {
        let c = cfg(Variant::Kinn2);
        let mut p = KinnParams::init(&c);
        p.dense.b[0] = f64::NAN;
        let err = forward(&c, &p, seq(3, 16, 0).view(), seq(3, 16, 1).view()).unwrap_err();
        assert!(matches!(err, Error::Numeric { block: "dense" }));
    }
}
