//! Forward kernels shared by the public tensor ops and the tape.

use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub(crate) const LAYER_NORM_EPS: f64 = 1e-5;

/// `a[m×k] · b[k×n]`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = (a.rows(), a.cols());
    let (kb, n) = (b.rows(), b.cols());
    if k != kb {
        return Err(Error::Dimension {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut out = vec![T::zero(); m * n];
    matmul_into(a.data(), b.data(), m, k, n, &mut out);
    Tensor::from_vec(vec![m, n], out)
}

/// out[m×n] = a[m×k] · b[k×n]
pub(crate) fn matmul_into<T: Scalar>(
    a: &[T],
    b: &[T],
    m: usize,
    k: usize,
    n: usize,
    out: &mut [T],
) {
    // ikj loop order keeps the inner accumulation over contiguous rows.
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &a_ip) in a[i * k..(i + 1) * k].iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + a_ip * bv;
            }
        }
    }
}

/// out[m×k] += a[m×n] · b[k×n]ᵀ
pub(crate) fn matmul_nt_acc<T: Scalar>(
    a: &[T],
    b: &[T],
    m: usize,
    n: usize,
    k: usize,
    out: &mut [T],
) {
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        for j in 0..k {
            let b_row = &b[j * n..(j + 1) * n];
            let mut s = T::zero();
            for (&av, &bv) in a_row.iter().zip(b_row) {
                s = s + av * bv;
            }
            out[i * k + j] = out[i * k + j] + s;
        }
    }
}

/// out[k×n] += a[m×k]ᵀ · b[m×n]
pub(crate) fn matmul_tn_acc<T: Scalar>(
    a: &[T],
    b: &[T],
    m: usize,
    k: usize,
    n: usize,
    out: &mut [T],
) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (j, &av) in a_row.iter().enumerate() {
            let out_row = &mut out[j * n..(j + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
}

/// Row-wise softmax with max-subtraction for stability.
pub fn softmax_rows<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (m, n) = (x.rows(), x.cols());
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(n) {
        softmax_row_inplace(row);
    }
    Tensor::from_vec(vec![m, n], out).expect("shape preserved")
}

pub(crate) fn softmax_row_inplace<T: Scalar>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

/// Normalizes each row of `x` to zero mean / unit variance (population
/// variance, epsilon-guarded), then applies `gain` and `bias` per column.
pub fn layer_norm<T: Scalar>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let d = x.cols();
    if gain.numel() != d || bias.numel() != d {
        return Err(Error::Dimension {
            op: "layer_norm",
            lhs: x.shape().to_vec(),
            rhs: gain.shape().to_vec(),
        });
    }
    let (out, _, _) = layer_norm_fwd(x.data(), gain.data(), bias.data(), x.rows(), d);
    Tensor::from_vec(x.shape().to_vec(), out)
}

/// Returns (output, per-row mean, per-row reciprocal std).
pub(crate) fn layer_norm_fwd<T: Scalar>(
    x: &[T],
    gain: &[T],
    bias: &[T],
    m: usize,
    d: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let eps = T::from_f64(LAYER_NORM_EPS);
    let inv_d = T::one() / T::from_f64(d as f64);
    let mut out = vec![T::zero(); m * d];
    let mut means = vec![T::zero(); m];
    let mut rstds = vec![T::zero(); m];
    for i in 0..m {
        let row = &x[i * d..(i + 1) * d];
        let mut mean = T::zero();
        for &v in row {
            mean = mean + v;
        }
        mean = mean * inv_d;
        let mut var = T::zero();
        for &v in row {
            let c = v - mean;
            var = var + c * c;
        }
        var = var * inv_d;
        let rstd = T::one() / (var + eps).sqrt();
        means[i] = mean;
        rstds[i] = rstd;
        for (j, &v) in row.iter().enumerate() {
            out[i * d + j] = (v - mean) * rstd * gain[j] + bias[j];
        }
    }
    (out, means, rstds)
}

/// Mean negative log-likelihood of `targets` under `logits[T×V]`, skipping
/// positions whose target equals `pad_id`.
pub fn cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    targets: &[usize],
    pad_id: usize,
) -> Result<T> {
    let (loss, _, _) = cross_entropy_fwd(logits.data(), logits.rows(), logits.cols(), targets, pad_id)?;
    Ok(loss)
}

/// Returns (loss, row-softmax probabilities, number of non-pad positions).
pub(crate) fn cross_entropy_fwd<T: Scalar>(
    logits: &[T],
    t_len: usize,
    vocab: usize,
    targets: &[usize],
    pad_id: usize,
) -> Result<(T, Vec<T>, usize)> {
    if targets.len() != t_len {
        return Err(Error::Dimension {
            op: "cross_entropy",
            lhs: vec![t_len, vocab],
            rhs: vec![targets.len()],
        });
    }
    let mut probs = logits.to_vec();
    let mut total = T::zero();
    let mut n_valid = 0usize;
    for (t, row) in probs.chunks_mut(vocab).enumerate() {
        let target = targets[t];
        if target == pad_id {
            continue;
        }
        if target >= vocab {
            return Err(Error::TargetOutOfRange {
                id: target,
                vocab,
            });
        }
        let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
        total = total - row[target].ln();
        n_valid += 1;
    }
    if n_valid == 0 {
        return Err(Error::Data(
            "cross_entropy: every target position is padding".into(),
        ));
    }
    let loss = total / T::from_f64(n_valid as f64);
    Ok((loss, probs, n_valid))
}
