//! Row-major kernels. Every reduction runs in a fixed sequential order, so a
//! given input always produces the same bits regardless of how callers
//! schedule independent kernel invocations.

use crate::error::{Error, Result};

use super::ledger::{FlopLedger, Slot};
use super::params::{Linear, Mlp};
use super::tensor::{Scalar, Tensor};

/// `a (m×k) · b (k×n)`, charging `m·n·k` MACs to `slot`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, slot: Slot, ledger: &FlopLedger) -> Result<Tensor<T>> {
    let (m, k) = a.matrix_dims()?;
    let (k2, n) = b.matrix_dims()?;
    if k != k2 {
        return Err(Error::Shape(format!("matmul inner dims differ: {m}x{k} · {k2}x{n}")));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![T::ZERO; m * n];
    for (i, orow) in out.chunks_exact_mut(n).enumerate() {
        let arow = &ad[i * k..(i + 1) * k];
        for (p, &aip) in arow.iter().enumerate() {
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    ledger.charge(slot, (m * n * k) as u64);
    Tensor::new(vec![m, n], out)
}

/// Softmax over the last axis with max subtraction.
pub fn softmax_rows<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let mut out = a.clone();
    for row in out.rows_mut() {
        softmax_in_place(row);
    }
    out
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(row[0], T::max);
    let mut total = T::ZERO;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

/// Normalizes each last-axis vector to zero mean and unit variance, then
/// applies `gain` and `bias`. Variance is the biased (population) estimate.
pub fn layer_norm<T: Scalar>(x: &Tensor<T>, gain: &Tensor<T>, bias: &Tensor<T>, eps: f64) -> Result<Tensor<T>> {
    let c = x.last_dim();
    if gain.len() != c || bias.len() != c {
        return Err(Error::Shape(format!("layer_norm width {c}, gain {}, bias {}", gain.len(), bias.len())));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Config(format!("layer_norm eps must be positive, got {eps}")));
    }
    let eps = T::from_f64(eps);
    let n = T::from_f64(c as f64);
    let mut out = x.clone();
    for row in out.rows_mut() {
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv = T::ONE / (var + eps).sqrt();
        for ((v, &g), &b) in row.iter_mut().zip(gain.data()).zip(bias.data()) {
            *v = (*v - mean) * inv * g + b;
        }
    }
    Ok(out)
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu_scalar<T: Scalar>(x: T) -> T {
    let half = T::from_f64(0.5);
    x * half * (T::ONE + (x * T::from_f64(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

pub fn gelu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(gelu_scalar)
}

/// `x·W + b` row by row. The product is charged to [`Slot::Other`].
pub fn linear<T: Scalar>(x: &Tensor<T>, layer: &Linear<T>, ledger: &FlopLedger) -> Result<Tensor<T>> {
    linear_into(x, layer, Slot::Other, ledger)
}

pub(crate) fn linear_into<T: Scalar>(
    x: &Tensor<T>,
    layer: &Linear<T>,
    slot: Slot,
    ledger: &FlopLedger,
) -> Result<Tensor<T>> {
    let mut y = matmul(x, &layer.weight, slot, ledger)?;
    for row in y.rows_mut() {
        for (v, &b) in row.iter_mut().zip(layer.bias.data()) {
            *v += b;
        }
    }
    Ok(y)
}

/// Two-layer perceptron: `down(gelu(up(x)))`.
pub fn mlp_forward<T: Scalar>(x: &Tensor<T>, mlp: &Mlp<T>, ledger: &FlopLedger) -> Result<Tensor<T>> {
    let hidden = gelu(&linear(x, &mlp.up, ledger)?);
    linear(&hidden, &mlp.down, ledger)
}
