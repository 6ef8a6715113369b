//! Lifting image features into the voxel grid by table lookup.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::MappingTable;
use crate::tensorcore::{Scalar, Tensor};

/// Image feature map with dims `(C, Hf, Wf)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatures<T = f64>(Tensor<T>);

impl<T: Scalar> ImageFeatures<T> {
    pub fn new(tensor: Tensor<T>) -> Result<Self> {
        if tensor.rank() != 3 {
            return Err(Error::Shape(format!("image features must be (C, H, W), got {:?}", tensor.dims())));
        }
        Ok(Self(tensor))
    }

    pub fn channels(&self) -> usize {
        self.0.dims()[0]
    }

    /// `(Hf, Wf)`.
    pub fn spatial_dims(&self) -> (usize, usize) {
        (self.0.dims()[1], self.0.dims()[2])
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.0
    }
}

/// Voxel feature grid with dims `(C, X, Y, Z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelFeatures<T = f64>(Tensor<T>);

impl<T: Scalar> VoxelFeatures<T> {
    pub fn new(tensor: Tensor<T>) -> Result<Self> {
        if tensor.rank() != 4 {
            return Err(Error::Shape(format!("voxel features must be (C, X, Y, Z), got {:?}", tensor.dims())));
        }
        Ok(Self(tensor))
    }

    pub fn zeros(channels: usize, grid: [usize; 3]) -> Self {
        Self(Tensor::zeros(&[channels, grid[0], grid[1], grid[2]]))
    }

    pub fn channels(&self) -> usize {
        self.0.dims()[0]
    }

    /// `(X, Y, Z)`.
    pub fn grid_dims(&self) -> [usize; 3] {
        let d = self.0.dims();
        [d[1], d[2], d[3]]
    }

    pub fn voxel_count(&self) -> usize {
        self.grid_dims().iter().product()
    }

    /// Channel vector of the voxel at linear index `lin`.
    pub fn channel_vector(&self, lin: usize) -> Vec<T> {
        let n = self.voxel_count();
        (0..self.channels()).map(|c| self.0.data()[c * n + lin]).collect()
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.0
    }

    pub fn tensor_mut(&mut self) -> &mut Tensor<T> {
        &mut self.0
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.0
    }

    /// Tokens as an `(X·Y·Z) × C` matrix in linear-index order.
    pub fn to_tokens(&self) -> Tensor<T> {
        let n = self.voxel_count();
        let c = self.channels();
        let d = self.0.data();
        Tensor::from_fn(&[n, c], |i| d[(i % c) * n + i / c])
    }

    /// Inverse of [`VoxelFeatures::to_tokens`].
    pub fn from_tokens(tokens: &Tensor<T>, grid: [usize; 3]) -> Result<Self> {
        let (n, c) = tokens.matrix_dims()?;
        if n != grid.iter().product::<usize>() {
            return Err(Error::Shape(format!("{n} tokens do not fill grid {grid:?}")));
        }
        let d = tokens.data();
        let t = Tensor::from_fn(&[c, grid[0], grid[1], grid[2]], |i| d[(i % n) * c + i / n]);
        Ok(Self(t))
    }
}

/// Gathers `img[:, v, u]` into every voxel whose table entry is `(u, v)`;
/// sentinel voxels receive zeros.
pub fn lift_features<T: Scalar>(img: &ImageFeatures<T>, table: &MappingTable) -> Result<VoxelFeatures<T>> {
    if img.spatial_dims() != table.feature_dims() {
        return Err(Error::Shape(format!(
            "image features are {:?}, table expects {:?}",
            img.spatial_dims(),
            table.feature_dims()
        )));
    }
    let c = img.channels();
    let (hf, wf) = img.spatial_dims();
    let plane = hf * wf;
    let entries = table.entries();
    let n = entries.len();
    let src = img.tensor().data();
    let mut out = vec![T::ZERO; c * n];
    out.par_chunks_mut(n).enumerate().for_each(|(ch, dst)| {
        let base = &src[ch * plane..(ch + 1) * plane];
        for (d, e) in dst.iter_mut().zip(entries) {
            if e.is_valid() {
                *d = base[e.v as usize * wf + e.u as usize];
            }
        }
    });
    let [x, y, z] = table.dims();
    VoxelFeatures::new(Tensor::new(vec![c, x, y, z], out)?)
}
