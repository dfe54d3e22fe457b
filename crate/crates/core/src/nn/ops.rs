//! Stateless building blocks shared by the forward and backward passes.

use thiserror::Error;

use super::tensor::Tensor2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("dimension mismatch: {0}")]
pub struct ShapeError(pub String);

/// Numerically stable softmax (max-subtracted).
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    softmax_in_place(&mut out);
    out
}

/// Softmax over a row; `-inf` entries get probability zero. A row that is
/// entirely `-inf` is left as all zeros.
pub fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        x.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

/// `log Σ exp(x)` computed stably.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Row-softmax of `scale · Q Kᵀ`, with positions `j > i` masked out when
/// `causal`.
pub fn attention_weights(q: &Tensor2, k: &Tensor2, causal: bool, scale: f64) -> Tensor2 {
    let mut scores = q.matmul_t(k);
    for i in 0..scores.rows() {
        let row = scores.row_mut(i);
        for (j, s) in row.iter_mut().enumerate() {
            *s = if causal && j > i { f64::NEG_INFINITY } else { *s * scale };
        }
        softmax_in_place(row);
    }
    scores
}

/// Scaled dot-product attention, `softmax(Q Kᵀ / √d_k) V` with
/// `d_k = Q.cols()`.
pub fn attention(q: &Tensor2, k: &Tensor2, v: &Tensor2, causal: bool) -> Result<Tensor2, ShapeError> {
    let scale = 1.0 / (q.cols() as f64).sqrt();
    attention_scaled(q, k, v, causal, scale)
}

/// Attention with an explicit score multiplier in place of `1/√d_k`.
pub fn attention_scaled(q: &Tensor2, k: &Tensor2, v: &Tensor2, causal: bool, scale: f64) -> Result<Tensor2, ShapeError> {
    if q.cols() != k.cols() {
        return Err(ShapeError(format!("Q has {} columns, K has {}", q.cols(), k.cols())));
    }
    if k.rows() != v.rows() {
        return Err(ShapeError(format!("K has {} rows, V has {}", k.rows(), v.rows())));
    }
    Ok(attention_weights(q, k, causal, scale).matmul(v))
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Per-row statistics kept for the layer-norm backward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub normalized: Tensor2,
    pub inv_std: Vec<f64>,
}

pub fn layer_norm(x: &Tensor2, gamma: &Tensor2, beta: &Tensor2) -> (Tensor2, LayerNormCache) {
    let d = x.cols();
    let mut normalized = Tensor2::zeros(x.rows(), d);
    let mut out = Tensor2::zeros(x.rows(), d);
    let mut inv_std = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std.push(r);
        for j in 0..d {
            let n = (row[j] - mean) * r;
            normalized[(i, j)] = n;
            out[(i, j)] = n * gamma.data()[j] + beta.data()[j];
        }
    }
    (out, LayerNormCache { normalized, inv_std })
}

/// Returns `dx`, accumulating into `dgamma` and `dbeta`.
pub fn layer_norm_backward(
    dy: &Tensor2,
    cache: &LayerNormCache,
    gamma: &Tensor2,
    dgamma: &mut Tensor2,
    dbeta: &mut Tensor2,
) -> Tensor2 {
    let d = dy.cols();
    let mut dx = Tensor2::zeros(dy.rows(), d);
    let mut dxhat = vec![0.0; d];
    for i in 0..dy.rows() {
        let g = dy.row(i);
        let xhat = cache.normalized.row(i);
        for j in 0..d {
            dgamma.data_mut()[j] += g[j] * xhat[j];
            dbeta.data_mut()[j] += g[j];
            dxhat[j] = g[j] * gamma.data()[j];
        }
        let mean_dxhat = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dxhat_xhat = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        let r = cache.inv_std[i];
        let out = dx.row_mut(i);
        for j in 0..d {
            out[j] = r * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[1000.0, 1000.0, 1000.0]);
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(&[1f64.ln(), 2f64.ln(), 3f64.ln()]);
        for (v, want) in p.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((v - want).abs() < 1e-15);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_respects_neg_infinity() {
        let p = softmax(&[0.0, f64::NEG_INFINITY, 0.0]);
        assert_eq!(p, vec![0.5, 0.0, 0.5]);
        assert_eq!(softmax(&[f64::NEG_INFINITY; 2]), vec![0.0, 0.0]);
    }

    #[test]
    fn single_element_attention() {
        let t = Tensor2::from_vec(1, 1, vec![3.5]);
        assert_eq!(attention(&t, &t, &t, false).unwrap(), t);
        assert_eq!(attention(&t, &t, &t, true).unwrap(), t);
    }

    #[test]
    fn identity_attention_two_by_two() {
        let i2 = Tensor2::identity(2);
        let out = attention(&i2, &i2, &i2, false).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let diag = s.exp() / (s.exp() + 1.0);
        assert!((out[(0, 0)] - diag).abs() < 1e-15);
        assert!((out[(0, 1)] - (1.0 - diag)).abs() < 1e-15);
        assert!((out[(1, 1)] - diag).abs() < 1e-15);
    }

    #[test]
    fn causal_first_row_copies_first_value() {
        let q = Tensor2::from_rows(&[vec![0.3, -1.0], vec![2.0, 0.5], vec![-0.7, 0.1]]);
        let v = Tensor2::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]]);
        let out = attention(&q, &q, &v, true).unwrap();
        assert_eq!(out.row(0), v.row(0));
    }

    #[test]
    fn shape_errors() {
        let a = Tensor2::zeros(2, 3);
        let b = Tensor2::zeros(2, 4);
        assert!(attention(&a, &b, &a, false).is_err());
        assert!(attention(&a, &a, &Tensor2::zeros(3, 3), false).is_err());
    }

    #[test]
    fn gelu_grad_matches_difference() {
        for &x in &[-3.0, -0.5, 0.0, 0.7, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }
}
