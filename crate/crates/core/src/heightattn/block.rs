use crate::error::{Error, Result};
use crate::tensorcore::grad::{layer_norm_backward, linear_backward, mlp_backward};
use crate::tensorcore::{layer_norm, linear, mlp_forward, FlopLedger, LayerParams, Scalar, Tensor};

use super::attention::{attend, attention_backward, map_sequences, Execution};
use super::partition::HeightSequences;

/// Pre-norm residual block on one `S × C` sequence:
///
/// ```text
/// l1  = x  + Wo·Attn(Norm1(x))
/// out = l1 + MLP(Norm2(l1))
/// ```
pub fn block_forward<T: Scalar>(x: &Tensor<T>, params: &LayerParams<T>, ledger: &FlopLedger) -> Result<Tensor<T>> {
    let n1 = layer_norm(x, &params.norm1.gain, &params.norm1.bias, params.eps)?;
    let attn = linear(&attend(&n1, params, ledger)?, &params.output, ledger)?;
    let l1 = x.add(&attn)?;
    let n2 = layer_norm(&l1, &params.norm2.gain, &params.norm2.bias, params.eps)?;
    l1.add(&mlp_forward(&n2, &params.mlp, ledger)?)
}

/// Gradient of [`block_forward`] with respect to `x`.
pub fn block_backward<T: Scalar>(x: &Tensor<T>, params: &LayerParams<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    params.validate()?;
    let scratch = FlopLedger::new();
    let n1 = layer_norm(x, &params.norm1.gain, &params.norm1.bias, params.eps)?;
    let attn = linear(&attend(&n1, params, &scratch)?, &params.output, &scratch)?;
    let l1 = x.add(&attn)?;
    let n2 = layer_norm(&l1, &params.norm2.gain, &params.norm2.bias, params.eps)?;

    let dn2 = mlp_backward(&n2, &params.mlp, dy)?;
    let dl1 = dy.add(&layer_norm_backward(&l1, &params.norm2.gain, params.eps, &dn2)?)?;
    let da = linear_backward(&params.output, &dl1)?;
    let dn1 = attention_backward(&n1, params, &da)?;
    dl1.add(&layer_norm_backward(x, &params.norm1.gain, params.eps, &dn1)?)
}

fn check<T: Scalar>(seq: &HeightSequences<T>, params: &LayerParams<T>) -> Result<()> {
    if seq.channels() != params.channels() {
        return Err(Error::Shape(format!(
            "sequences have {} channels, parameters expect {}",
            seq.channels(),
            params.channels()
        )));
    }
    params.validate()
}

/// One transformer block applied to every sequence with shared parameters.
pub fn transformer_block<T: Scalar>(
    seq: &HeightSequences<T>,
    params: &LayerParams<T>,
    ledger: &FlopLedger,
) -> Result<HeightSequences<T>> {
    transformer_block_with(seq, params, ledger, Execution::Serial)
}

pub fn transformer_block_with<T: Scalar>(
    seq: &HeightSequences<T>,
    params: &LayerParams<T>,
    ledger: &FlopLedger,
    exec: Execution,
) -> Result<HeightSequences<T>> {
    check(seq, params)?;
    map_sequences(seq, exec, |x| block_forward(x, params, ledger))
}

/// Gradient of [`transformer_block`] with respect to its input sequences.
pub fn transformer_block_backward<T: Scalar>(
    seq: &HeightSequences<T>,
    params: &LayerParams<T>,
    dy: &HeightSequences<T>,
) -> Result<HeightSequences<T>> {
    check(seq, params)?;
    if seq.tensor().dims() != dy.tensor().dims() {
        return Err(Error::Shape("block gradient shape differs from input".into()));
    }
    let w = seq.sequence_len() * seq.channels();
    let mut out = dy.clone();
    for i in 0..seq.count() {
        let g = block_backward(&seq.sequence(i), params, &dy.sequence(i))?;
        out.tensor_mut().data_mut()[i * w..(i + 1) * w].copy_from_slice(g.data());
    }
    Ok(out)
}
