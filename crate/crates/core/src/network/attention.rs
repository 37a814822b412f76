use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::params::AttentionWeights;
use crate::error::{Error, Result};

/// Per-head attention probabilities of one block; rows are query positions.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub heads: Vec<Array2<f64>>,
}

impl AttentionMap {
    pub fn rows(&self) -> usize {
        self.heads.first().map_or(0, |h| h.nrows())
    }

    pub fn cols(&self) -> usize {
        self.heads.first().map_or(0, |h| h.ncols())
    }

    /// Head-averaged attention matrix.
    pub fn mean(&self) -> Array2<f64> {
        let mut acc = Array2::zeros((self.rows(), self.cols()));
        for h in &self.heads {
            acc += h;
        }
        if !self.heads.is_empty() {
            acc /= self.heads.len() as f64;
        }
        acc
    }
}

pub(crate) struct AttentionCache {
    xq: Array2<f64>,
    xkv: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    ctx: Array2<f64>,
    pub(crate) map: AttentionMap,
}

pub(crate) struct AttentionGrads {
    pub weights: AttentionWeights,
    pub dxq: Array2<f64>,
    pub dxkv: Array2<f64>,
}

fn check_shapes(xq: &ArrayView2<f64>, xkv: &ArrayView2<f64>, w: &AttentionWeights, heads: usize, kv_mask: &[bool]) -> Result<()> {
    let dim = w.dim();
    if xq.nrows() == 0 || xkv.nrows() == 0 {
        return Err(Error::Input("attention needs non-empty sequences".into()));
    }
    if xq.ncols() != dim || xkv.ncols() != dim {
        return Err(Error::Input(format!(
            "attention input width {}/{} does not match weight dim {dim}",
            xq.ncols(),
            xkv.ncols()
        )));
    }
    if heads == 0 || !dim.is_multiple_of(heads) {
        return Err(Error::Input(format!("dim {dim} is not divisible into {heads} heads")));
    }
    if kv_mask.len() != xkv.nrows() {
        return Err(Error::Input(format!(
            "mask length {} does not match sequence length {}",
            kv_mask.len(),
            xkv.nrows()
        )));
    }
    if !kv_mask.iter().any(|&m| m) {
        return Err(Error::Input("every key position is masked".into()));
    }
    Ok(())
}

/// Scaled dot-product multi-head attention with residual connection:
/// `Y = Xq + concat_h(softmax(Q_h K_hᵀ / √d_h) V_h) Wo + bo`.
/// `kv_mask[j] == false` marks key position `j` as padding.
pub(crate) fn attend(
    xq: ArrayView2<f64>,
    xkv: ArrayView2<f64>,
    w: &AttentionWeights,
    heads: usize,
    kv_mask: &[bool],
) -> Result<(Array2<f64>, AttentionCache)> {
    check_shapes(&xq, &xkv, w, heads, kv_mask)?;
    let dh = w.dim() / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = xq.dot(&w.wq) + &w.bq;
    let k = xkv.dot(&w.wk) + &w.bk;
    let v = xkv.dot(&w.wv) + &w.bv;
    let (nq, nk) = (xq.nrows(), xkv.nrows());
    let mut ctx = Array2::zeros((nq, w.dim()));
    let mut maps = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        let mut probs = Array2::zeros((nq, nk));
        for (i, row) in scores.outer_iter().enumerate() {
            let max = row
                .iter()
                .zip(kv_mask)
                .filter(|(_, &m)| m)
                .map(|(v, _)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for j in 0..nk {
                if kv_mask[j] {
                    let e = (row[j] - max).exp();
                    probs[[i, j]] = e;
                    total += e;
                }
            }
            probs.row_mut(i).mapv_inplace(|p| p / total);
        }
        ctx.slice_mut(cols).assign(&probs.dot(&v.slice(cols)));
        maps.push(probs);
    }
    let y = &xq + &ctx.dot(&w.wo) + &w.bo;
    let cache = AttentionCache {
        xq: xq.to_owned(),
        xkv: xkv.to_owned(),
        q,
        k,
        v,
        ctx,
        map: AttentionMap { heads: maps },
    };
    Ok((y, cache))
}

pub(crate) fn attend_backward(
    w: &AttentionWeights,
    cache: &AttentionCache,
    dy: &Array2<f64>,
) -> AttentionGrads {
    let heads = cache.map.heads.len();
    let dh = w.dim() / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let bo = dy.sum_axis(Axis(0));
    let wo = cache.ctx.t().dot(dy);
    let dctx = dy.dot(&w.wo.t());

    let mut dq = Array2::zeros(cache.q.raw_dim());
    let mut dk = Array2::zeros(cache.k.raw_dim());
    let mut dv = Array2::zeros(cache.v.raw_dim());
    for (h, probs) in cache.map.heads.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let dctx_h = dctx.slice(cols);
        let dprobs = dctx_h.dot(&cache.v.slice(cols).t());
        dv.slice_mut(cols).assign(&probs.t().dot(&dctx_h));
        let mut dscores = Array2::zeros(probs.raw_dim());
        for i in 0..probs.nrows() {
            let p = probs.row(i);
            let dp = dprobs.row(i);
            let dot: f64 = p.iter().zip(dp.iter()).map(|(a, b)| a * b).sum();
            for j in 0..probs.ncols() {
                dscores[[i, j]] = p[j] * (dp[j] - dot) * scale;
            }
        }
        dq.slice_mut(cols).assign(&dscores.dot(&cache.k.slice(cols)));
        dk.slice_mut(cols).assign(&dscores.t().dot(&cache.q.slice(cols)));
    }

    let dxq = dy + &dq.dot(&w.wq.t());
    let dxkv = dk.dot(&w.wk.t()) + dv.dot(&w.wv.t());
    AttentionGrads {
        weights: AttentionWeights {
            wq: cache.xq.t().dot(&dq),
            wk: cache.xkv.t().dot(&dk),
            wv: cache.xkv.t().dot(&dv),
            wo,
            bq: dq.sum_axis(Axis(0)),
            bk: dk.sum_axis(Axis(0)),
            bv: dv.sum_axis(Axis(0)),
            bo,
        },
        dxq,
        dxkv,
    }
}

/// Multi-head self-attention with residual connection. Masked positions
/// receive zero attention weight.
pub fn self_attention(
    x: ArrayView2<f64>,
    w: &AttentionWeights,
    heads: usize,
    mask: &[bool],
) -> Result<(Array2<f64>, AttentionMap)> {
    let (y, cache) = attend(x, x, w, heads, mask)?;
    Ok((y, cache.map))
}

/// Queries from `q_src`, keys and values from `kv_src`; the residual path
/// carries `q_src`, so the output has one row per query position.
pub fn cross_attention(
    q_src: ArrayView2<f64>,
    kv_src: ArrayView2<f64>,
    w: &AttentionWeights,
    heads: usize,
    kv_mask: &[bool],
) -> Result<(Array2<f64>, AttentionMap)> {
    let (y, cache) = attend(q_src, kv_src, w, heads, kv_mask)?;
    Ok((y, cache.map))
}

pub(crate) const LN_EPS: f64 = 1e-5;

pub(crate) struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

/// Per-position layer normalization over the feature axis.
pub(crate) fn layer_norm(x: &Array2<f64>, gamma: &Array1<f64>, beta: &Array1<f64>) -> (Array2<f64>, LayerNormCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (i, mut row) in xhat.outer_iter_mut().enumerate() {
        let mean = row.sum() / d;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) * inv);
        inv_std[i] = inv;
    }
    let y = &xhat * gamma + beta;
    (y, LayerNormCache { xhat, inv_std })
}

pub(crate) fn layer_norm_backward(
    gamma: &Array1<f64>,
    cache: &LayerNormCache,
    dy: &Array2<f64>,
) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let dgamma = (dy * &cache.xhat).sum_axis(Axis(0));
    let dbeta = dy.sum_axis(Axis(0));
    let dxhat = dy * gamma;
    let d = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let g = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let sum_g = g.sum();
        let sum_gx: f64 = g.iter().zip(xh.iter()).map(|(a, b)| a * b).sum();
        let inv = cache.inv_std[i];
        for j in 0..dy.ncols() {
            dx[[i, j]] = inv / d * (d * g[j] - sum_g - xh[j] * sum_gx);
        }
    }
    (dx, dgamma, dbeta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn weights(dim: usize) -> AttentionWeights {
        let mut w = AttentionWeights::zeros(dim);
        for (i, v) in w.wq.iter_mut().enumerate() {
            *v = ((i * 7 % 11) as f64 - 5.0) / 10.0;
        }
        for (i, v) in w.wk.iter_mut().enumerate() {
            *v = ((i * 5 % 13) as f64 - 6.0) / 10.0;
        }
        for (i, v) in w.wv.iter_mut().enumerate() {
            *v = ((i * 3 % 7) as f64 - 3.0) / 10.0;
        }
        for (i, v) in w.wo.iter_mut().enumerate() {
            *v = ((i * 2 % 5) as f64 - 2.0) / 10.0;
        }
        w
    }

    #[test]
    fn single_position_attends_to_itself() {
        let x = array![[0.3, -0.2, 0.5, 0.1]];
        let (_, a) = self_attention(x.view(), &weights(4), 2, &[true]).unwrap();
        for h in &a.heads {
            assert_eq!(h, &array![[1.0]]);
        }
    }

    #[test]
    fn masked_keys_get_no_weight() {
        let x = array![[0.3, -0.2, 0.5, 0.1], [1.0, 0.0, -1.0, 0.5], [0.2, 0.2, 0.2, 0.2]];
        let (_, a) = self_attention(x.view(), &weights(4), 2, &[false, true, false]).unwrap();
        for h in &a.heads {
            for row in h.outer_iter() {
                assert_eq!(row.to_vec(), vec![0.0, 1.0, 0.0]);
            }
        }
    }

    #[test]
    fn rows_sum_to_one() {
        let x = array![[0.3, -0.2, 0.5, 0.1], [1.0, 0.0, -1.0, 0.5], [0.2, 0.2, 0.2, 0.2], [-0.4, 0.9, 0.0, 0.3]];
        let (_, a) = self_attention(x.view(), &weights(4), 2, &[true; 4]).unwrap();
        for h in &a.heads {
            for row in h.outer_iter() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&p| p >= 0.0));
            }
        }
    }

    #[test]
    fn cross_matches_self_on_same_input() {
        let x = array![[0.3, -0.2, 0.5, 0.1], [1.0, 0.0, -1.0, 0.5]];
        let w = weights(4);
        let (ys, _) = self_attention(x.view(), &w, 2, &[true, true]).unwrap();
        let (yc, _) = cross_attention(x.view(), x.view(), &w, 2, &[true, true]).unwrap();
        assert!(ys.iter().zip(yc.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn cross_shape() {
        let q = Array2::from_elem((2, 4), 0.1);
        let kv = Array2::from_elem((3, 4), 0.2);
        let (y, a) = cross_attention(q.view(), kv.view(), &weights(4), 2, &[true; 3]).unwrap();
        assert_eq!(y.dim(), (2, 4));
        assert_eq!((a.rows(), a.cols()), (2, 3));
        let (_, a) = cross_attention(q.slice(s![..1, ..]), kv.slice(s![..1, ..]), &weights(4), 2, &[true]).unwrap();
        assert_eq!(a.mean(), array![[1.0]]);
    }

    #[test]
    fn shape_errors() {
        let x = Array2::from_elem((2, 4), 0.1);
        assert!(self_attention(x.view(), &weights(4), 2, &[true]).is_err());
        assert!(self_attention(x.view(), &weights(4), 3, &[true, true]).is_err());
        assert!(self_attention(x.view(), &weights(6), 2, &[true, true]).is_err());
        assert!(self_attention(x.view(), &weights(4), 2, &[false, false]).is_err());
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let x = array![[1.0, 2.0, 3.0, 4.0], [-1.0, 0.0, 0.0, 1.0]];
        let (y, _) = layer_norm(&x, &Array1::ones(4), &Array1::zeros(4));
        for row in y.outer_iter() {
            assert!(row.sum().abs() < 1e-12);
            let var = row.iter().map(|v| v * v).sum::<f64>() / 4.0;
            assert!((var - 1.0).abs() < 1e-4);
        }
    }
}
