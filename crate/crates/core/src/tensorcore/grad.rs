//! Hand-written reverse-mode derivatives of the kernels, and the central
//! difference oracle used to check them.
//!
//! Each `*_backward` takes the forward inputs plus the upstream gradient `dy`
//! and returns the gradient with respect to the input tensor. Forward
//! intermediates are recomputed rather than cached.

use crate::error::{Error, Result};

use super::ledger::{FlopLedger, Slot};
use super::ops::{linear, matmul};
use super::params::{Linear, Mlp};
use super::tensor::{Scalar, Tensor};

/// Gradient through [`softmax_rows`](super::ops::softmax_rows) given its output `y`.
pub fn softmax_rows_backward<T: Scalar>(y: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    if y.dims() != dy.dims() {
        return Err(Error::Shape(format!("softmax grad {:?} vs {:?}", y.dims(), dy.dims())));
    }
    let mut dx = dy.clone();
    for (dxr, yr) in dx.rows_mut().zip(y.rows()) {
        let inner: T = dxr.iter().zip(yr).map(|(&g, &p)| g * p).sum();
        for (g, &p) in dxr.iter_mut().zip(yr) {
            *g = p * (*g - inner);
        }
    }
    Ok(dx)
}

/// Gradient through [`layer_norm`](super::ops::layer_norm) with respect to `x`.
pub fn layer_norm_backward<T: Scalar>(x: &Tensor<T>, gain: &Tensor<T>, eps: f64, dy: &Tensor<T>) -> Result<Tensor<T>> {
    if x.dims() != dy.dims() || gain.len() != x.last_dim() {
        return Err(Error::Shape(format!(
            "layer_norm grad: x {:?}, dy {:?}, gain {:?}",
            x.dims(),
            dy.dims(),
            gain.dims()
        )));
    }
    let c = x.last_dim();
    let n = T::from_f64(c as f64);
    let eps = T::from_f64(eps);
    let mut dx = Tensor::zeros(x.dims());
    let mut xhat = vec![T::ZERO; c];
    let mut g = vec![T::ZERO; c];
    for ((xr, dyr), dxr) in x.rows().zip(dy.rows()).zip(dx.rows_mut()) {
        let mean = xr.iter().copied().sum::<T>() / n;
        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv = T::ONE / (var + eps).sqrt();
        for i in 0..c {
            xhat[i] = (xr[i] - mean) * inv;
            g[i] = dyr[i] * gain.data()[i];
        }
        let mean_g = g.iter().copied().sum::<T>() / n;
        let mean_gx = g.iter().zip(&xhat).map(|(&a, &b)| a * b).sum::<T>() / n;
        for i in 0..c {
            dxr[i] = inv * (g[i] - mean_g - xhat[i] * mean_gx);
        }
    }
    Ok(dx)
}

/// `d/dx [x·Φ(x)] = Φ(x) + x·φ(x)`.
pub fn gelu_derivative<T: Scalar>(x: T) -> T {
    let half = T::from_f64(0.5);
    let cdf = half * (T::ONE + (x * T::from_f64(std::f64::consts::FRAC_1_SQRT_2)).erf());
    let pdf = (-(x * x) * half).exp() * T::from_f64(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    cdf + x * pdf
}

/// Gradient of `x·W + b` with respect to `x`.
pub fn linear_backward<T: Scalar>(layer: &Linear<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    matmul(dy, &layer.weight.transpose()?, Slot::Other, &FlopLedger::new())
}

/// Gradient through [`mlp_forward`](super::ops::mlp_forward) with respect to `x`.
pub fn mlp_backward<T: Scalar>(x: &Tensor<T>, mlp: &Mlp<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    let pre = linear(x, &mlp.up, &FlopLedger::new())?;
    let dh = linear_backward(&mlp.down, dy)?;
    let dpre = dh.zip_with(&pre, |g, p| g * gelu_derivative(p))?;
    linear_backward(&mlp.up, &dpre)
}

/// Central-difference gradient of a scalar function, in 64-bit.
///
/// Evaluates `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` for every element `i`.
pub fn finite_diff_grad<F>(mut f: F, x: &Tensor<f64>, h: f64) -> Result<Tensor<f64>>
where
    F: FnMut(&Tensor<f64>) -> Result<f64>,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::Oracle(format!("step must be positive, got {h}")));
    }
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.dims());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Oracle(format!("non-finite function value at element {i}")));
        }
        grad.data_mut()[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

/// `|a − f| / max(1, |a|, |f|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}
