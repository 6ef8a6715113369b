use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensorcore::{Precision, Scalar, Tensor};

use super::{write_atomic, Reader, FORMAT_VERSION};

pub const TENSOR_MAGIC: &[u8; 4] = b"HTEN";

/// `HTEN` | version u32 | rank u32 | dims u32×rank | precision u8 | payload.
pub fn encode_tensor<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let width = T::PRECISION.bytes() as usize;
    let mut out = Vec::with_capacity(13 + 4 * t.rank() + width * t.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.push(T::PRECISION.bytes());
    for &v in t.data() {
        v.write_le(&mut out);
    }
    out
}

/// A decoded tensor of either precision.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn precision(&self) -> Precision {
        match self {
            AnyTensor::F32(_) => Precision::Single,
            AnyTensor::F64(_) => Precision::Double,
        }
    }

    pub fn dims(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.dims(),
            AnyTensor::F64(t) => t.dims(),
        }
    }

    /// Converts to `T`, rounding if the stored precision differs.
    pub fn into_precision<T: Scalar>(self) -> Tensor<T> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => t.cast(),
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "tensor file");
        r.magic(TENSOR_MAGIC)?;
        r.version()?;
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let code = r.u8()?;
        let precision =
            Precision::from_bytes(code).ok_or_else(|| Error::Format(format!("unknown precision byte {code}")))?;
        let count = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
        let payload =
            r.take(count.checked_mul(code as usize).ok_or_else(|| Error::Format("payload size overflows".into()))?)?;
        r.finish()?;
        Ok(match precision {
            Precision::Single => {
                AnyTensor::F32(Tensor::new(dims, payload.chunks_exact(4).map(f32::read_le).collect())?)
            }
            Precision::Double => {
                AnyTensor::F64(Tensor::new(dims, payload.chunks_exact(8).map(f64::read_le).collect())?)
            }
        })
    }
}

/// Decodes a tensor stored at exactly precision `T`.
pub fn decode_tensor<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    let any = AnyTensor::decode(bytes)?;
    if any.precision() != T::PRECISION {
        return Err(Error::Format(format!("tensor stored as {}, expected {}", any.precision(), T::PRECISION)));
    }
    Ok(any.into_precision())
}

pub fn write_tensor<T: Scalar>(path: &Path, t: &Tensor<T>) -> Result<()> {
    Ok(write_atomic(path, &encode_tensor(t))?)
}

pub fn read_tensor(path: &Path) -> Result<AnyTensor> {
    AnyTensor::decode(&fs::read(path)?)
}
