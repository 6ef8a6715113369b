use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};

use super::rng::normal_tensor;
use super::tensor::{Scalar, Tensor};

/// Affine map `x·W + b` with `W` stored as `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T = f64> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let (_, out) = weight.matrix_dims()?;
        if bias.dims() != [out] {
            return Err(Error::Shape(format!("bias {:?} does not match weight {:?}", bias.dims(), weight.dims())));
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weight: Tensor::zeros(&[inputs, outputs]), bias: Tensor::zeros(&[outputs]) }
    }

    /// Weights `N(0, 1/inputs)`, biases `N(0, bias_std²)`.
    pub fn seeded<R: Rng + ?Sized>(inputs: usize, outputs: usize, bias_std: f64, rng: &mut R) -> Self {
        let w: Tensor<f64> = normal_tensor(&[inputs, outputs], rng);
        let b: Tensor<f64> = normal_tensor(&[outputs], rng);
        let ws = 1.0 / (inputs as f64).sqrt();
        Self { weight: w.scale(ws).cast(), bias: b.scale(bias_std).cast() }
    }

    pub fn inputs(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn cast<U: Scalar>(&self) -> Linear<U> {
        Linear { weight: self.weight.cast(), bias: self.bias.cast() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams<T = f64> {
    pub gain: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> LayerNormParams<T> {
    pub fn identity(width: usize) -> Self {
        Self { gain: Tensor::full(&[width], T::ONE), bias: Tensor::zeros(&[width]) }
    }

    pub fn cast<U: Scalar>(&self) -> LayerNormParams<U> {
        LayerNormParams { gain: self.gain.cast(), bias: self.bias.cast() }
    }
}

/// `down(gelu(up(x)))` with hidden width `up.outputs()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T = f64> {
    pub up: Linear<T>,
    pub down: Linear<T>,
}

impl<T: Scalar> Mlp<T> {
    pub fn zeros(width: usize, hidden: usize) -> Self {
        Self { up: Linear::zeros(width, hidden), down: Linear::zeros(hidden, width) }
    }

    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp { up: self.up.cast(), down: self.down.cast() }
    }
}

/// Parameters of one pre-norm transformer block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T = f64> {
    /// Attention heads; must divide the channel width. One head means `d_k = C`.
    pub heads: usize,
    pub query: Linear<T>,
    pub key: Linear<T>,
    pub value: Linear<T>,
    /// Projection applied to the attention output before the first residual.
    pub output: Linear<T>,
    pub norm1: LayerNormParams<T>,
    pub norm2: LayerNormParams<T>,
    pub mlp: Mlp<T>,
    /// Layer-norm epsilon.
    pub eps: f64,
}

pub const DEFAULT_LN_EPS: f64 = 1e-5;

impl<T: Scalar> LayerParams<T> {
    pub fn zeros(channels: usize, hidden: usize) -> Self {
        Self {
            heads: 1,
            query: Linear::zeros(channels, channels),
            key: Linear::zeros(channels, channels),
            value: Linear::zeros(channels, channels),
            output: Linear::zeros(channels, channels),
            norm1: LayerNormParams::identity(channels),
            norm2: LayerNormParams::identity(channels),
            mlp: Mlp::zeros(channels, hidden),
            eps: DEFAULT_LN_EPS,
        }
    }

    /// Deployment-style initialization: scaled normal weights, zero biases,
    /// unit layer-norm gains. Draw order is fixed (query, key, value, output,
    /// mlp.up, mlp.down), so a seed fully determines the parameters.
    pub fn seeded<R: Rng + ?Sized>(channels: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            heads: 1,
            query: Linear::seeded(channels, channels, 0.0, rng),
            key: Linear::seeded(channels, channels, 0.0, rng),
            value: Linear::seeded(channels, channels, 0.0, rng),
            output: Linear::seeded(channels, channels, 0.0, rng),
            norm1: LayerNormParams::identity(channels),
            norm2: LayerNormParams::identity(channels),
            mlp: Mlp {
                up: Linear::seeded(channels, hidden, 0.0, rng),
                down: Linear::seeded(hidden, channels, 0.0, rng),
            },
            eps: DEFAULT_LN_EPS,
        }
    }

    /// Every parameter random, including biases and norm gains, so that
    /// gradient checks exercise all terms.
    pub fn randomized<R: Rng + ?Sized>(channels: usize, hidden: usize, rng: &mut R) -> Self {
        let norm = |rng: &mut R| {
            let g: Tensor<f64> = normal_tensor(&[channels], rng);
            let b: Tensor<f64> = normal_tensor(&[channels], rng);
            LayerNormParams { gain: g.map(|v| 1.0 + 0.2 * v).cast(), bias: b.scale(0.2).cast() }
        };
        let norm1 = norm(rng);
        let norm2 = norm(rng);
        Self {
            heads: 1,
            query: Linear::seeded(channels, channels, 0.2, rng),
            key: Linear::seeded(channels, channels, 0.2, rng),
            value: Linear::seeded(channels, channels, 0.2, rng),
            output: Linear::seeded(channels, channels, 0.2, rng),
            norm1,
            norm2,
            mlp: Mlp {
                up: Linear::seeded(channels, hidden, 0.2, rng),
                down: Linear::seeded(hidden, channels, 0.2, rng),
            },
            eps: DEFAULT_LN_EPS,
        }
    }

    pub fn with_heads(mut self, heads: usize) -> Self {
        self.heads = heads;
        self
    }

    pub fn channels(&self) -> usize {
        self.query.inputs()
    }

    pub fn hidden(&self) -> usize {
        self.mlp.up.outputs()
    }

    /// Per-head key width.
    pub fn head_dim(&self) -> usize {
        self.channels() / self.heads
    }

    /// Checks that every shape agrees with the channel width.
    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        let h = self.hidden();
        let square = [("query", &self.query), ("key", &self.key), ("value", &self.value), ("output", &self.output)];
        for (name, l) in square {
            if l.inputs() != c || l.outputs() != c {
                return Err(Error::Shape(format!(
                    "{name} projection is {}x{}, expected {c}x{c}",
                    l.inputs(),
                    l.outputs()
                )));
            }
        }
        if self.mlp.up.inputs() != c || self.mlp.down.inputs() != h || self.mlp.down.outputs() != c {
            return Err(Error::Shape(format!(
                "mlp is {}x{} then {}x{}, expected {c}x{h} then {h}x{c}",
                self.mlp.up.inputs(),
                h,
                self.mlp.down.inputs(),
                self.mlp.down.outputs()
            )));
        }
        for (name, n) in [("norm1", &self.norm1), ("norm2", &self.norm2)] {
            if n.gain.dims() != [c] || n.bias.dims() != [c] {
                return Err(Error::Shape(format!("{name} width differs from {c}")));
            }
        }
        if self.heads == 0 || !c.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("{} heads do not divide {c} channels", self.heads)));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> LayerParams<U> {
        LayerParams {
            heads: self.heads,
            query: self.query.cast(),
            key: self.key.cast(),
            value: self.value.cast(),
            output: self.output.cast(),
            norm1: self.norm1.cast(),
            norm2: self.norm2.cast(),
            mlp: self.mlp.cast(),
            eps: self.eps,
        }
    }

    /// `(name, tensor)` pairs under `prefix`, in a fixed order.
    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::with_capacity(16);
        let linears = [
            ("query", &self.query),
            ("key", &self.key),
            ("value", &self.value),
            ("output", &self.output),
            ("mlp.up", &self.mlp.up),
            ("mlp.down", &self.mlp.down),
        ];
        for (name, l) in linears {
            out.push((format!("{prefix}.{name}.weight"), &l.weight));
            out.push((format!("{prefix}.{name}.bias"), &l.bias));
        }
        for (name, n) in [("norm1", &self.norm1), ("norm2", &self.norm2)] {
            out.push((format!("{prefix}.{name}.gain"), &n.gain));
            out.push((format!("{prefix}.{name}.bias"), &n.bias));
        }
        out
    }

    /// Inverse of [`LayerParams::named_tensors`]; removes the consumed entries.
    pub fn from_named(map: &mut BTreeMap<String, Tensor<T>>, prefix: &str, heads: usize, eps: f64) -> Result<Self> {
        let mut take = |name: &str| {
            let key = format!("{prefix}.{name}");
            map.remove(&key).ok_or_else(|| Error::Format(format!("missing parameter {key}")))
        };
        let mut linear = |name: &str| -> Result<Linear<T>> {
            Linear::new(take(&format!("{name}.weight"))?, take(&format!("{name}.bias"))?)
        };
        let query = linear("query")?;
        let key = linear("key")?;
        let value = linear("value")?;
        let output = linear("output")?;
        let up = linear("mlp.up")?;
        let down = linear("mlp.down")?;
        let mut norm = |name: &str| -> Result<LayerNormParams<T>> {
            let key = format!("{prefix}.{name}");
            let gain = map
                .remove(&format!("{key}.gain"))
                .ok_or_else(|| Error::Format(format!("missing parameter {key}.gain")))?;
            let bias = map
                .remove(&format!("{key}.bias"))
                .ok_or_else(|| Error::Format(format!("missing parameter {key}.bias")))?;
            Ok(LayerNormParams { gain, bias })
        };
        let params = Self {
            heads,
            query,
            key,
            value,
            output,
            norm1: norm("norm1")?,
            norm2: norm("norm2")?,
            mlp: Mlp { up, down },
            eps,
        };
        params.validate()?;
        Ok(params)
    }
}
