use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensorcore::grad::{linear_backward, softmax_rows_backward};
use crate::tensorcore::{linear, matmul, softmax_rows, FlopLedger, LayerParams, Scalar, Slot, Tensor};
use crate::viewtransform::VoxelFeatures;

use super::partition::{height_partition, height_reverse, HeightSequences, PartitionSpec};

/// How independent sequences are scheduled. Results are identical either way.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Execution {
    #[default]
    Serial,
    Parallel,
}

struct Projected<T> {
    q: Tensor<T>,
    k: Tensor<T>,
    v: Tensor<T>,
}

fn project<T: Scalar>(tokens: &Tensor<T>, params: &LayerParams<T>, ledger: &FlopLedger) -> Result<Projected<T>> {
    Ok(Projected {
        q: linear(tokens, &params.query, ledger)?,
        k: linear(tokens, &params.key, ledger)?,
        v: linear(tokens, &params.value, ledger)?,
    })
}

fn head<T: Scalar>(m: &Tensor<T>, heads: usize, h: usize) -> Result<Tensor<T>> {
    if heads == 1 {
        return Ok(m.clone());
    }
    let d = m.last_dim() / heads;
    m.column_block(h * d, d)
}

/// `softmax(q·kᵀ / √d)` for one head.
fn scores<T: Scalar>(q: &Tensor<T>, k: &Tensor<T>, ledger: &FlopLedger) -> Result<Tensor<T>> {
    let d = q.last_dim();
    let scale = T::from_f64(1.0 / (d as f64).sqrt());
    let logits = matmul(q, &k.transpose()?, Slot::Qk, ledger)?;
    Ok(softmax_rows(&logits.scale(scale)))
}

pub(crate) fn attend<T: Scalar>(tokens: &Tensor<T>, params: &LayerParams<T>, ledger: &FlopLedger) -> Result<Tensor<T>> {
    let p = project(tokens, params, ledger)?;
    if params.heads == 1 {
        let s = scores(&p.q, &p.k, ledger)?;
        return matmul(&s, &p.v, Slot::Sv, ledger);
    }
    let mut out = Tensor::zeros(tokens.dims());
    let d = params.head_dim();
    for h in 0..params.heads {
        let s = scores(&head(&p.q, params.heads, h)?, &head(&p.k, params.heads, h)?, ledger)?;
        let o = matmul(&s, &head(&p.v, params.heads, h)?, Slot::Sv, ledger)?;
        out.set_column_block(h * d, &o)?;
    }
    Ok(out)
}

fn check_tokens<T: Scalar>(tokens: &Tensor<T>, params: &LayerParams<T>) -> Result<()> {
    let (_, c) = tokens.matrix_dims()?;
    if c != params.channels() {
        return Err(Error::Shape(format!("tokens have {c} channels, parameters expect {}", params.channels())));
    }
    params.validate()
}

/// Scaled dot-product self-attention over `n × C` tokens.
///
/// Q, K and V are linear projections of the tokens; the result is
/// `softmax(QKᵀ/√d_k)·V` with `d_k = C / heads`. The score and value products
/// charge `n²·C` MACs each to the `Qk` and `Sv` ledger slots; the projections
/// go to `Other`. No output projection is applied here.
pub fn vanilla_attention<T: Scalar>(
    tokens: &Tensor<T>,
    params: &LayerParams<T>,
    ledger: &FlopLedger,
) -> Result<Tensor<T>> {
    check_tokens(tokens, params)?;
    attend(tokens, params, ledger)
}

/// Applies `f` to each `S × C` sequence and writes the results in place of a copy.
pub(crate) fn map_sequences<T, F>(seq: &HeightSequences<T>, exec: Execution, f: F) -> Result<HeightSequences<T>>
where
    T: Scalar,
    F: Fn(&Tensor<T>) -> Result<Tensor<T>> + Sync,
{
    let (s, c) = (seq.sequence_len(), seq.channels());
    let mut out = seq.clone();
    let run = |(i, dst): (usize, &mut [T])| -> Result<()> {
        let y = f(&seq.sequence(i))?;
        if y.dims() != [s, c] {
            return Err(Error::Shape(format!("sequence op returned {:?}", y.dims())));
        }
        dst.copy_from_slice(y.data());
        Ok(())
    };
    let chunks = out.tensor_mut().data_mut();
    match exec {
        Execution::Serial => chunks.chunks_exact_mut(s * c).enumerate().try_for_each(run)?,
        Execution::Parallel => chunks.par_chunks_exact_mut(s * c).enumerate().try_for_each(run)?,
    }
    Ok(out)
}

/// Attention restricted to local height sequences: partition, attend within
/// each sequence with shared parameters, reverse.
pub fn height_attention<T: Scalar>(
    vox: &VoxelFeatures<T>,
    spec: PartitionSpec,
    params: &LayerParams<T>,
    ledger: &FlopLedger,
) -> Result<VoxelFeatures<T>> {
    height_attention_with(vox, spec, params, ledger, Execution::Serial)
}

pub fn height_attention_with<T: Scalar>(
    vox: &VoxelFeatures<T>,
    spec: PartitionSpec,
    params: &LayerParams<T>,
    ledger: &FlopLedger,
    exec: Execution,
) -> Result<VoxelFeatures<T>> {
    if vox.channels() != params.channels() {
        return Err(Error::Shape(format!(
            "voxels have {} channels, parameters expect {}",
            vox.channels(),
            params.channels()
        )));
    }
    params.validate()?;
    let seq = height_partition(vox, spec)?;
    let out = map_sequences(&seq, exec, |t| attend(t, params, ledger))?;
    height_reverse(&out, spec, vox.grid_dims())
}

/// Gradient of [`vanilla_attention`] with respect to its input tokens.
pub fn attention_backward<T: Scalar>(tokens: &Tensor<T>, params: &LayerParams<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    check_tokens(tokens, params)?;
    if dy.dims() != tokens.dims() {
        return Err(Error::Shape(format!("attention grad {:?} vs {:?}", dy.dims(), tokens.dims())));
    }
    let scratch = FlopLedger::new();
    let p = project(tokens, params, &scratch)?;
    let heads = params.heads;
    let d = params.head_dim();
    let scale = T::from_f64(1.0 / (d as f64).sqrt());
    let mut dq = Tensor::zeros(tokens.dims());
    let mut dk = Tensor::zeros(tokens.dims());
    let mut dv = Tensor::zeros(tokens.dims());
    for h in 0..heads {
        let (qh, kh, vh) = (head(&p.q, heads, h)?, head(&p.k, heads, h)?, head(&p.v, heads, h)?);
        let doh = head(dy, heads, h)?;
        let s = scores(&qh, &kh, &scratch)?;
        let ds = matmul(&doh, &vh.transpose()?, Slot::Other, &scratch)?;
        let dvh = matmul(&s.transpose()?, &doh, Slot::Other, &scratch)?;
        let dlogits = softmax_rows_backward(&s, &ds)?.scale(scale);
        let dqh = matmul(&dlogits, &kh, Slot::Other, &scratch)?;
        let dkh = matmul(&dlogits.transpose()?, &qh, Slot::Other, &scratch)?;
        dq.set_column_block(h * d, &dqh)?;
        dk.set_column_block(h * d, &dkh)?;
        dv.set_column_block(h * d, &dvh)?;
    }
    linear_backward(&params.query, &dq)?
        .add(&linear_backward(&params.key, &dk)?)?
        .add(&linear_backward(&params.value, &dv)?)
}
