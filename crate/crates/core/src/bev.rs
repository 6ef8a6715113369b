//! Height compression of refined voxel features into a BEV plane.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorcore::ops::softmax_in_place;
use crate::tensorcore::{Linear, Scalar, Tensor};
use crate::viewtransform::VoxelFeatures;

/// Per-column softmax weights over height, dims `(X, Y, Z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightDistribution<T = f64>(Tensor<T>);

impl<T: Scalar> HeightDistribution<T> {
    /// Checks rank, non-negativity, and that each column sums to 1 within 1e-6.
    pub fn new(tensor: Tensor<T>) -> Result<Self> {
        if tensor.rank() != 3 {
            return Err(Error::Shape(format!("distribution must be (X, Y, Z), got {:?}", tensor.dims())));
        }
        for (i, col) in tensor.rows().enumerate() {
            let sum: f64 = col.iter().map(|v| v.to_f64()).sum();
            if col.iter().any(|&v| v.to_f64().is_nan() || v < T::ZERO) || (sum - 1.0).abs() > 1e-6 {
                return Err(Error::Shape(format!("column {i} is not a distribution (sum {sum})")));
            }
        }
        Ok(Self(tensor))
    }

    /// One-hot at `levels[x·Y + y]` in every column.
    pub fn one_hot(grid: [usize; 3], levels: &[usize]) -> Result<Self> {
        let [x, y, z] = grid;
        if levels.len() != x * y || levels.iter().any(|&l| l >= z) {
            return Err(Error::Shape("one-hot levels do not fit the grid".into()));
        }
        let t = Tensor::from_fn(&[x, y, z], |i| if levels[i / z] == i % z { T::ONE } else { T::ZERO });
        Ok(Self(t))
    }

    pub fn uniform(grid: [usize; 3]) -> Self {
        Self(Tensor::full(&grid, T::from_f64(1.0 / grid[2] as f64)))
    }

    pub fn grid_dims(&self) -> [usize; 3] {
        let d = self.0.dims();
        [d[0], d[1], d[2]]
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.0
    }
}

/// BEV feature plane, dims `(C, X, Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BevFeatures<T = f64>(Tensor<T>);

impl<T: Scalar> BevFeatures<T> {
    pub fn tensor(&self) -> &Tensor<T> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.0
    }
}

/// Linear `C → 1` logit per voxel, softmax over `Z` in each `(x, y)` column.
pub fn predict_height_distribution<T: Scalar>(
    vox: &VoxelFeatures<T>,
    head: &Linear<T>,
) -> Result<HeightDistribution<T>> {
    let c = vox.channels();
    if head.weight.dims() != [c, 1] {
        return Err(Error::Shape(format!("height head is {:?}, expected [{c}, 1]", head.weight.dims())));
    }
    let [x, y, z] = vox.grid_dims();
    let n = x * y * z;
    let src = vox.tensor().data();
    let w = head.weight.data();
    let b = head.bias.data()[0];
    let mut logits = vec![T::ZERO; n];
    for (ch, &wc) in w.iter().enumerate() {
        for (l, &v) in logits.iter_mut().zip(&src[ch * n..(ch + 1) * n]) {
            *l += wc * v;
        }
    }
    for l in logits.iter_mut() {
        *l += b;
    }
    for col in logits.chunks_exact_mut(z) {
        softmax_in_place(col);
    }
    Ok(HeightDistribution(Tensor::new(vec![x, y, z], logits)?))
}

/// `BEV[c, x, y] = Σ_z dist[x, y, z] · vox[c, x, y, z]`.
pub fn compress_to_bev<T: Scalar>(vox: &VoxelFeatures<T>, dist: &HeightDistribution<T>) -> Result<BevFeatures<T>> {
    let grid = vox.grid_dims();
    if grid != dist.grid_dims() {
        return Err(Error::Shape(format!("voxels {grid:?} and distribution {:?} differ", dist.grid_dims())));
    }
    let [x, y, z] = grid;
    let c = vox.channels();
    let weights = dist.tensor().data();
    let mut out = vec![T::ZERO; c * x * y];
    out.par_chunks_mut(x * y).zip(vox.tensor().data().par_chunks(x * y * z)).for_each(|(dst, plane)| {
        for ((d, col), wcol) in dst.iter_mut().zip(plane.chunks_exact(z)).zip(weights.chunks_exact(z)) {
            let mut acc = T::ZERO;
            for (&v, &w) in col.iter().zip(wcol) {
                acc += w * v;
            }
            *d = acc;
        }
    });
    Ok(BevFeatures(Tensor::new(vec![c, x, y], out)?))
}

/// Which reducer collapses the height axis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BevMode {
    /// Softmax height distribution, then weighted sum.
    #[default]
    WeightedSum,
    /// Concatenate the column (`Z·C` values, height-major) and map linearly to `C`.
    FlattenLinear,
}

/// Parameters of the BEV reducer.
#[derive(Debug, Clone, PartialEq)]
pub enum BevDecoder<T = f64> {
    WeightedSum { head: Linear<T> },
    FlattenLinear { reducer: Linear<T> },
}

impl<T: Scalar> BevDecoder<T> {
    pub fn mode(&self) -> BevMode {
        match self {
            BevDecoder::WeightedSum { .. } => BevMode::WeightedSum,
            BevDecoder::FlattenLinear { .. } => BevMode::FlattenLinear,
        }
    }

    pub fn cast<U: Scalar>(&self) -> BevDecoder<U> {
        match self {
            BevDecoder::WeightedSum { head } => BevDecoder::WeightedSum { head: head.cast() },
            BevDecoder::FlattenLinear { reducer } => BevDecoder::FlattenLinear { reducer: reducer.cast() },
        }
    }

    /// Returns the BEV plane and, for the weighted mode, the distribution used.
    pub fn decode(&self, vox: &VoxelFeatures<T>) -> Result<(BevFeatures<T>, Option<HeightDistribution<T>>)> {
        match self {
            BevDecoder::WeightedSum { head } => {
                let dist = predict_height_distribution(vox, head)?;
                Ok((compress_to_bev(vox, &dist)?, Some(dist)))
            }
            BevDecoder::FlattenLinear { reducer } => Ok((flatten_linear(vox, reducer)?, None)),
        }
    }
}

fn flatten_linear<T: Scalar>(vox: &VoxelFeatures<T>, reducer: &Linear<T>) -> Result<BevFeatures<T>> {
    let [x, y, z] = vox.grid_dims();
    let c = vox.channels();
    if reducer.weight.dims() != [z * c, c] {
        return Err(Error::Shape(format!("flatten reducer is {:?}, expected [{}, {c}]", reducer.weight.dims(), z * c)));
    }
    let n = x * y * z;
    let src = vox.tensor().data();
    let w = reducer.weight.data();
    let mut out = vec![T::ZERO; c * x * y];
    for col in 0..x * y {
        for co in 0..c {
            let mut acc = reducer.bias.data()[co];
            for k in 0..z {
                for ci in 0..c {
                    acc += src[ci * n + col * z + k] * w[(k * c + ci) * c + co];
                }
            }
            out[co * x * y + col] = acc;
        }
    }
    Ok(BevFeatures(Tensor::new(vec![c, x, y], out)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorcore::{normal_tensor, seeded_rng};

    fn random_vox(c: usize, grid: [usize; 3], seed: u64) -> VoxelFeatures<f64> {
        let mut rng = seeded_rng(seed);
        VoxelFeatures::new(normal_tensor(&[c, grid[0], grid[1], grid[2]], &mut rng)).unwrap()
    }

    #[test]
    fn zero_head_is_uniform() {
        let vox = random_vox(3, [2, 2, 4], 1);
        let d = predict_height_distribution(&vox, &Linear::zeros(3, 1)).unwrap();
        assert!(d.tensor().data().iter().all(|&p| p == 0.25));
    }

    #[test]
    fn two_level_closed_form() {
        // one channel, head weight 1: logits are the voxel values
        let vox = VoxelFeatures::new(Tensor::new(vec![1, 1, 1, 2], vec![0.0, 2f64.ln()]).unwrap()).unwrap();
        let mut head = Linear::zeros(1, 1);
        head.weight.data_mut()[0] = 1.0;
        let d = predict_height_distribution(&vox, &head).unwrap();
        assert!((d.tensor().data()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((d.tensor().data()[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn singleton_height_is_one() {
        let vox = random_vox(2, [3, 2, 1], 2);
        let mut rng = seeded_rng(9);
        let head = Linear::seeded(2, 1, 1.0, &mut rng);
        let d = predict_height_distribution(&vox, &head).unwrap();
        assert!(d.tensor().data().iter().all(|&p| p == 1.0));
        let bev = compress_to_bev(&vox, &d).unwrap();
        assert_eq!(bev.tensor().data(), vox.tensor().data());
    }

    #[test]
    fn uniform_is_mean() {
        let vox = random_vox(2, [2, 3, 4], 3);
        let bev = compress_to_bev(&vox, &HeightDistribution::uniform([2, 3, 4])).unwrap();
        for ch in 0..2 {
            for x in 0..2 {
                for y in 0..3 {
                    let mean: f64 = (0..4).map(|z| vox.tensor().get(&[ch, x, y, z])).sum::<f64>() / 4.0;
                    assert!((bev.tensor().get(&[ch, x, y]) - mean).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn one_hot_selects_slice() {
        let grid = [2, 2, 3];
        let vox = random_vox(4, grid, 4);
        let levels = [2, 0, 1, 2];
        let d = HeightDistribution::one_hot(grid, &levels).unwrap();
        let bev = compress_to_bev(&vox, &d).unwrap();
        for ch in 0..4 {
            for (col, &level) in levels.iter().enumerate() {
                let (x, y) = (col / 2, col % 2);
                assert_eq!(bev.tensor().get(&[ch, x, y]), vox.tensor().get(&[ch, x, y, level]));
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let vox = random_vox(2, [2, 2, 2], 5);
        assert!(compress_to_bev(&vox, &HeightDistribution::uniform([2, 2, 3])).is_err());
        assert!(predict_height_distribution(&vox, &Linear::zeros(3, 1)).is_err());
    }

    #[test]
    fn flatten_linear_picks_slice_with_selector_weights() {
        let grid = [2, 1, 2];
        let c = 2;
        let vox = random_vox(c, grid, 6);
        let mut reducer = Linear::zeros(2 * c, c);
        // select height level 1
        for ch in 0..c {
            reducer.weight.set(&[c + ch, ch], 1.0);
        }
        let dec = BevDecoder::FlattenLinear { reducer };
        let (bev, dist) = dec.decode(&vox).unwrap();
        assert!(dist.is_none());
        for ch in 0..c {
            for x in 0..2 {
                assert_eq!(bev.tensor().get(&[ch, x, 0]), vox.tensor().get(&[ch, x, 0, 1]));
            }
        }
    }
}
