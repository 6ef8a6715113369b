use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::error::{Error, Result};

/// Storage width of a tensor element, as recorded in the `HTEN` header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Precision {
    /// 32-bit IEEE-754, used for benchmarks.
    #[serde(rename = "f32")]
    Single,
    /// 64-bit IEEE-754, used for verification.
    #[serde(rename = "f64")]
    Double,
}

impl Precision {
    pub fn bytes(self) -> u8 {
        match self {
            Precision::Single => 4,
            Precision::Double => 8,
        }
    }

    pub fn from_bytes(b: u8) -> Option<Self> {
        match b {
            4 => Some(Precision::Single),
            8 => Some(Precision::Double),
            _ => None,
        }
    }

    pub fn from_bits(bits: u32) -> Option<Self> {
        match bits {
            32 => Some(Precision::Single),
            64 => Some(Precision::Double),
            _ => None,
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Precision::Single => f.write_str("f32"),
            Precision::Double => f.write_str("f64"),
        }
    }
}

/// Real element type of a [`Tensor`]. Implemented for `f32` and `f64`.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + Default
    + PartialOrd
    + fmt::Debug
    + fmt::Display
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    const PRECISION: Precision;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn erf(self) -> Self;
    fn is_finite(self) -> bool;
    fn max(self, other: Self) -> Self;
    fn write_le(self, out: &mut Vec<u8>);
    /// Decodes one element from exactly `PRECISION.bytes()` little-endian bytes.
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    const PRECISION: Precision = Precision::Single;

    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn exp(self) -> Self {
        f32::exp(self)
    }
    fn sqrt(self) -> Self {
        f32::sqrt(self)
    }
    fn erf(self) -> Self {
        libm::erff(self)
    }
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
    fn max(self, other: Self) -> Self {
        f32::max(self, other)
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    const PRECISION: Precision = Precision::Double;

    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn erf(self) -> Self {
        libm::erf(self)
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn max(self, other: Self) -> Self {
        f64::max(self, other)
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

/// Dense row-major array; the last dimension varies fastest.
#[derive(Clone, PartialEq)]
pub struct Tensor<T = f64> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("dims", &self.dims)
            .field("element", &std::any::type_name::<T>())
            .field("len", &self.data.len())
            .finish()
    }
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(Error::Shape("tensor must have rank >= 1".into()));
    }
    if let Some(i) = dims.iter().position(|&d| d == 0) {
        return Err(Error::Shape(format!("dimension {i} is zero in {dims:?}")));
    }
    Ok(dims.iter().product())
}

impl<T: Scalar> Tensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let len = check_dims(&dims)?;
        if len != data.len() {
            return Err(Error::Shape(format!("dims {dims:?} need {len} elements, got {}", data.len())));
        }
        Ok(Self { dims, data })
    }

    /// Panics if any dimension is zero.
    pub fn zeros(dims: &[usize]) -> Self {
        let len = check_dims(dims).expect("valid dims");
        Self { dims: dims.to_vec(), data: vec![T::ZERO; len] }
    }

    pub fn full(dims: &[usize], value: T) -> Self {
        let mut t = Self::zeros(dims);
        t.data.fill(value);
        t
    }

    /// Builds a tensor by evaluating `f` at each flat (row-major) index.
    pub fn from_fn(dims: &[usize], f: impl FnMut(usize) -> T) -> Self {
        let len = check_dims(dims).expect("valid dims");
        Self { dims: dims.to_vec(), data: (0..len).map(f).collect() }
    }

    /// 2-D tensor from nested rows. Panics on ragged input.
    pub fn from_rows(rows: &[&[T]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(vec![rows.len(), cols], data).expect("valid rows")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn precision(&self) -> Precision {
        T::PRECISION
    }

    pub fn last_dim(&self) -> usize {
        *self.dims.last().expect("rank >= 1")
    }

    /// Flat offset of a multi-index. Panics when out of range.
    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.dims.len(), "index rank mismatch");
        index.iter().zip(&self.dims).fold(0, |acc, (&i, &d)| {
            assert!(i < d, "index {index:?} out of range for {:?}", self.dims);
            acc * d + i
        })
    }

    pub fn get(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    pub fn reshape(self, dims: &[usize]) -> Result<Self> {
        Self::new(dims.to_vec(), self.data)
    }

    /// Rows of the tensor viewed as `(len / last_dim) × last_dim`.
    pub fn rows(&self) -> std::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.last_dim())
    }

    pub fn rows_mut(&mut self) -> std::slice::ChunksExactMut<'_, T> {
        let c = self.last_dim();
        self.data.chunks_exact_mut(c)
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.last_dim();
        &self.data[i * c..(i + 1) * c]
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn matrix_dims(&self) -> Result<(usize, usize)> {
        match self.dims[..] {
            [m, n] => Ok((m, n)),
            _ => Err(Error::Shape(format!("expected a matrix, got dims {:?}", self.dims))),
        }
    }

    pub fn transpose(&self) -> Result<Self> {
        let (m, n) = self.matrix_dims()?;
        let mut out = Self::zeros(&[n, m]);
        for i in 0..m {
            for j in 0..n {
                out.data[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { dims: self.dims.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn scale(&self, alpha: T) -> Self {
        self.map(|x| x * alpha)
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!("elementwise operands differ: {:?} vs {:?}", self.dims, other.dims)));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { dims: self.dims.clone(), data })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Sum of elementwise products.
    pub fn dot(&self, other: &Self) -> Result<T> {
        Ok(self.zip_with(other, |a, b| a * b)?.sum())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!("cannot compare {:?} with {:?}", self.dims, other.dims)));
        }
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| (a.to_f64() - b.to_f64()).abs()).fold(0.0, f64::max))
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { dims: self.dims.clone(), data: self.data.iter().map(|&x| U::from_f64(x.to_f64())).collect() }
    }

    /// Columns `[start, start + width)` of a matrix.
    pub fn column_block(&self, start: usize, width: usize) -> Result<Self> {
        let (m, n) = self.matrix_dims()?;
        if start + width > n || width == 0 {
            return Err(Error::Shape(format!("column block {start}+{width} exceeds {n}")));
        }
        let mut data = Vec::with_capacity(m * width);
        for r in self.rows() {
            data.extend_from_slice(&r[start..start + width]);
        }
        Self::new(vec![m, width], data)
    }

    /// Writes `block` into columns starting at `start`.
    pub fn set_column_block(&mut self, start: usize, block: &Self) -> Result<()> {
        let (m, n) = self.matrix_dims()?;
        let (bm, bw) = block.matrix_dims()?;
        if bm != m || start + bw > n {
            return Err(Error::Shape(format!("block {bm}x{bw} at column {start} does not fit {m}x{n}")));
        }
        for (dst, src) in self.rows_mut().zip(block.rows()) {
            dst[start..start + bw].copy_from_slice(src);
        }
        Ok(())
    }
}
