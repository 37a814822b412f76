use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::KinnConfig;

/// Query/key/value/output projections of one multi-head attention block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionWeights {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub bq: Array1<f64>,
    pub bk: Array1<f64>,
    pub bv: Array1<f64>,
    pub bo: Array1<f64>,
}

impl AttentionWeights {
    pub fn zeros(dim: usize) -> Self {
        AttentionWeights {
            wq: Array2::zeros((dim, dim)),
            wk: Array2::zeros((dim, dim)),
            wv: Array2::zeros((dim, dim)),
            wo: Array2::zeros((dim, dim)),
            bq: Array1::zeros(dim),
            bk: Array1::zeros(dim),
            bv: Array1::zeros(dim),
            bo: Array1::zeros(dim),
        }
    }

    fn random(dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut w = Self::zeros(dim);
        for m in [&mut w.wq, &mut w.wk, &mut w.wv, &mut w.wo] {
            xavier(m, rng);
        }
        w
    }

    pub fn dim(&self) -> usize {
        self.wq.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNormWeights {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

/// Affine map `x W + b`; `w` has shape `(inputs, outputs)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            w: Array2::zeros((inputs, outputs)),
            b: Array1::zeros(outputs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinnParams {
    pub attn_domain: AttentionWeights,
    /// Self-attention weights under KINN2, cross-attention weights under KINN1.
    pub attn_commonsense: AttentionWeights,
    pub layernorm: LayerNormWeights,
    pub attn_fused: AttentionWeights,
    pub dense: Linear,
    pub head: Linear,
}

impl KinnParams {
    /// Xavier-uniform projections, zero biases, unit layer-norm scale.
    pub fn init(cfg: &KinnConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let dim = cfg.dim;
        let attn_domain = AttentionWeights::random(dim, &mut rng);
        let attn_commonsense = AttentionWeights::random(dim, &mut rng);
        let attn_fused = AttentionWeights::random(dim, &mut rng);
        let mut dense = Linear::zeros(dim, cfg.dense_dim);
        xavier(&mut dense.w, &mut rng);
        let mut head = Linear::zeros(cfg.dense_dim, cfg.num_classes);
        xavier(&mut head.w, &mut rng);
        KinnParams {
            attn_domain,
            attn_commonsense,
            layernorm: LayerNormWeights {
                gamma: Array1::ones(dim),
                beta: Array1::zeros(dim),
            },
            attn_fused,
            dense,
            head,
        }
    }

    /// Same shapes as `init`, every entry zero (layer-norm scale included).
    pub fn zeros(cfg: &KinnConfig) -> Self {
        let dim = cfg.dim;
        KinnParams {
            attn_domain: AttentionWeights::zeros(dim),
            attn_commonsense: AttentionWeights::zeros(dim),
            layernorm: LayerNormWeights {
                gamma: Array1::zeros(dim),
                beta: Array1::zeros(dim),
            },
            attn_fused: AttentionWeights::zeros(dim),
            dense: Linear::zeros(dim, cfg.dense_dim),
            head: Linear::zeros(cfg.dense_dim, cfg.num_classes),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|_, t| t.fill(0.0));
        z
    }

    /// Put every matrix in row-major layout; views below require it.
    pub(crate) fn standardize(&mut self) {
        fn fix(m: &mut Array2<f64>) {
            if !m.is_standard_layout() {
                *m = m.as_standard_layout().into_owned();
            }
        }
        for w in [&mut self.attn_domain, &mut self.attn_commonsense, &mut self.attn_fused] {
            for m in [&mut w.wq, &mut w.wk, &mut w.wv, &mut w.wo] {
                fix(m);
            }
        }
        fix(&mut self.dense.w);
        fix(&mut self.head.w);
    }

    /// Named views of every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut out = Vec::with_capacity(28);
        attn_views(&mut out, ATTN_DOMAIN, &self.attn_domain);
        attn_views(&mut out, ATTN_COMMONSENSE, &self.attn_commonsense);
        out.push(("layernorm.gamma", slice(&self.layernorm.gamma)));
        out.push(("layernorm.beta", slice(&self.layernorm.beta)));
        attn_views(&mut out, ATTN_FUSED, &self.attn_fused);
        out.push(("dense.w", slice2(&self.dense.w)));
        out.push(("dense.b", slice(&self.dense.b)));
        out.push(("head.w", slice2(&self.head.w)));
        out.push(("head.b", slice(&self.head.b)));
        out
    }

    /// Mutable counterpart of [`KinnParams::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out = Vec::with_capacity(28);
        attn_views_mut(&mut out, ATTN_DOMAIN, &mut self.attn_domain);
        attn_views_mut(&mut out, ATTN_COMMONSENSE, &mut self.attn_commonsense);
        out.push(("layernorm.gamma", slice_mut(&mut self.layernorm.gamma)));
        out.push(("layernorm.beta", slice_mut(&mut self.layernorm.beta)));
        attn_views_mut(&mut out, ATTN_FUSED, &mut self.attn_fused);
        out.push(("dense.w", slice2_mut(&mut self.dense.w)));
        out.push(("dense.b", slice_mut(&mut self.dense.b)));
        out.push(("head.w", slice2_mut(&mut self.head.w)));
        out.push(("head.b", slice_mut(&mut self.head.b)));
        out
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&'static str, &mut [f64])) {
        for (name, t) in self.tensors_mut() {
            f(name, t);
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`, tensor by tensor.
    pub(crate) fn add_scaled(&mut self, other: &KinnParams, scale: f64) {
        let src = other.tensors();
        for ((_, dst), (_, s)) in self.tensors_mut().into_iter().zip(src) {
            for (d, v) in dst.iter_mut().zip(s) {
                *d += scale * v;
            }
        }
    }

    /// Shape check against a configuration (used after loading checkpoints).
    pub fn matches(&self, cfg: &KinnConfig) -> bool {
        let d = cfg.dim;
        let attn_ok = |w: &AttentionWeights| {
            [&w.wq, &w.wk, &w.wv, &w.wo].iter().all(|m| m.dim() == (d, d))
                && [&w.bq, &w.bk, &w.bv, &w.bo].iter().all(|b| b.len() == d)
        };
        attn_ok(&self.attn_domain)
            && attn_ok(&self.attn_commonsense)
            && attn_ok(&self.attn_fused)
            && self.layernorm.gamma.len() == d
            && self.layernorm.beta.len() == d
            && self.dense.w.dim() == (d, cfg.dense_dim)
            && self.dense.b.len() == cfg.dense_dim
            && self.head.w.dim() == (cfg.dense_dim, cfg.num_classes)
            && self.head.b.len() == cfg.num_classes
    }
}

const ATTN_DOMAIN: [&str; 8] = [
    "attn_domain.wq",
    "attn_domain.wk",
    "attn_domain.wv",
    "attn_domain.wo",
    "attn_domain.bq",
    "attn_domain.bk",
    "attn_domain.bv",
    "attn_domain.bo",
];
const ATTN_COMMONSENSE: [&str; 8] = [
    "attn_commonsense.wq",
    "attn_commonsense.wk",
    "attn_commonsense.wv",
    "attn_commonsense.wo",
    "attn_commonsense.bq",
    "attn_commonsense.bk",
    "attn_commonsense.bv",
    "attn_commonsense.bo",
];
const ATTN_FUSED: [&str; 8] = [
    "attn_fused.wq",
    "attn_fused.wk",
    "attn_fused.wv",
    "attn_fused.wo",
    "attn_fused.bq",
    "attn_fused.bk",
    "attn_fused.bv",
    "attn_fused.bo",
];

fn attn_views<'a>(out: &mut Vec<(&'static str, &'a [f64])>, names: [&'static str; 8], w: &'a AttentionWeights) {
    out.push((names[0], slice2(&w.wq)));
    out.push((names[1], slice2(&w.wk)));
    out.push((names[2], slice2(&w.wv)));
    out.push((names[3], slice2(&w.wo)));
    out.push((names[4], slice(&w.bq)));
    out.push((names[5], slice(&w.bk)));
    out.push((names[6], slice(&w.bv)));
    out.push((names[7], slice(&w.bo)));
}

fn attn_views_mut<'a>(
    out: &mut Vec<(&'static str, &'a mut [f64])>,
    names: [&'static str; 8],
    w: &'a mut AttentionWeights,
) {
    out.push((names[0], slice2_mut(&mut w.wq)));
    out.push((names[1], slice2_mut(&mut w.wk)));
    out.push((names[2], slice2_mut(&mut w.wv)));
    out.push((names[3], slice2_mut(&mut w.wo)));
    out.push((names[4], slice_mut(&mut w.bq)));
    out.push((names[5], slice_mut(&mut w.bk)));
    out.push((names[6], slice_mut(&mut w.bv)));
    out.push((names[7], slice_mut(&mut w.bo)));
}

// Parameters are always built in standard layout, so these never fail.
fn slice(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("contiguous parameter")
}

fn slice2(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("contiguous parameter")
}

fn slice_mut(a: &mut Array1<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("contiguous parameter")
}

fn slice2_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("contiguous parameter")
}

fn xavier(m: &mut Array2<f64>, rng: &mut ChaCha8Rng) {
    let (fan_in, fan_out) = m.dim();
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    m.mapv_inplace(|_| rng.random_range(-limit..limit));
}
