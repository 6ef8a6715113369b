//! Regrouping voxel features into local height sequences and back.
//!
//! Groups are ordered lexicographically by block index `(bx, by, bz)`; tokens
//! inside a group by offset `(dx, dy, dz)` with `dz` fastest. The default spec
//! `(1, 1, Z)` therefore yields one sequence per `(x, y)` column, ordered
//! bottom to top.

use crate::error::{Error, Result};
use crate::tensorcore::{Scalar, Tensor};
use crate::viewtransform::VoxelFeatures;

/// Extent `(X_h, Y_h, Z_h)` of one local sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct PartitionSpec {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl PartitionSpec {
    pub fn new(x: usize, y: usize, z: usize) -> Self {
        Self { x, y, z }
    }

    /// One vertical column of height `z`.
    pub fn column(z: usize) -> Self {
        Self { x: 1, y: 1, z }
    }

    /// The whole grid as a single group.
    pub fn global(dims: [usize; 3]) -> Self {
        Self { x: dims[0], y: dims[1], z: dims[2] }
    }

    pub fn as_array(self) -> [usize; 3] {
        [self.x, self.y, self.z]
    }

    /// Tokens per sequence, `X_h·Y_h·Z_h`.
    pub fn sequence_len(self) -> usize {
        self.x * self.y * self.z
    }

    /// Errors unless every extent is positive and divides the grid.
    pub fn check(self, dims: [usize; 3]) -> Result<()> {
        for (axis, (s, d)) in ["x", "y", "z"].iter().zip(self.as_array().into_iter().zip(dims)) {
            if s == 0 || d % s != 0 {
                return Err(Error::Partition(format!("{axis} extent {s} does not divide grid size {d}")));
            }
        }
        Ok(())
    }

    /// Number of sequences `N = (X/X_h)(Y/Y_h)(Z/Z_h)`.
    pub fn sequence_count(self, dims: [usize; 3]) -> Result<usize> {
        self.check(dims)?;
        Ok((dims[0] / self.x) * (dims[1] / self.y) * (dims[2] / self.z))
    }

    /// Voxel linear index for each `(sequence, token)` slot, flattened.
    pub fn gather_order(self, dims: [usize; 3]) -> Result<Vec<usize>> {
        self.check(dims)?;
        let [nx, ny, nz] = dims;
        let (bx, by, bz) = (nx / self.x, ny / self.y, nz / self.z);
        let mut order = Vec::with_capacity(nx * ny * nz);
        for gx in 0..bx {
            for gy in 0..by {
                for gz in 0..bz {
                    for dx in 0..self.x {
                        for dy in 0..self.y {
                            for dz in 0..self.z {
                                let (x, y, z) = (gx * self.x + dx, gy * self.y + dy, gz * self.z + dz);
                                order.push((x * ny + y) * nz + z);
                            }
                        }
                    }
                }
            }
        }
        Ok(order)
    }
}

/// Local sequences as a `(N, S, C)` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightSequences<T = f64>(Tensor<T>);

impl<T: Scalar> HeightSequences<T> {
    pub fn new(tensor: Tensor<T>) -> Result<Self> {
        if tensor.rank() != 3 {
            return Err(Error::Partition(format!("sequences must be (N, S, C), got {:?}", tensor.dims())));
        }
        Ok(Self(tensor))
    }

    pub fn count(&self) -> usize {
        self.0.dims()[0]
    }

    pub fn sequence_len(&self) -> usize {
        self.0.dims()[1]
    }

    pub fn channels(&self) -> usize {
        self.0.dims()[2]
    }

    /// Copy of sequence `i` as an `S × C` matrix.
    pub fn sequence(&self, i: usize) -> Tensor<T> {
        let w = self.sequence_len() * self.channels();
        let data = self.0.data()[i * w..(i + 1) * w].to_vec();
        Tensor::new(vec![self.sequence_len(), self.channels()], data).expect("sequence dims")
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
}

pub fn height_partition<T: Scalar>(vox: &VoxelFeatures<T>, spec: PartitionSpec) -> Result<HeightSequences<T>> {
    let dims = vox.grid_dims();
    let order = spec.gather_order(dims)?;
    let c = vox.channels();
    let n = vox.voxel_count();
    let src = vox.tensor().data();
    let mut out = Vec::with_capacity(n * c);
    for &lin in &order {
        out.extend((0..c).map(|ch| src[ch * n + lin]));
    }
    let s = spec.sequence_len();
    HeightSequences::new(Tensor::new(vec![n / s, s, c], out)?)
}

/// Exact inverse of [`height_partition`].
pub fn height_reverse<T: Scalar>(
    seq: &HeightSequences<T>,
    spec: PartitionSpec,
    dims: [usize; 3],
) -> Result<VoxelFeatures<T>> {
    let count = spec.sequence_count(dims)?;
    if seq.count() != count || seq.sequence_len() != spec.sequence_len() {
        return Err(Error::Partition(format!(
            "sequences {:?} inconsistent with spec {:?} on grid {dims:?}",
            seq.tensor().dims(),
            spec.as_array()
        )));
    }
    let order = spec.gather_order(dims)?;
    let c = seq.channels();
    let n = order.len();
    let src = seq.tensor().data();
    let mut out = vec![T::ZERO; c * n];
    for (slot, &lin) in order.iter().enumerate() {
        for ch in 0..c {
            out[ch * n + lin] = src[slot * c + ch];
        }
    }
    VoxelFeatures::new(Tensor::new(vec![c, dims[0], dims[1], dims[2]], out)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(c: usize, dims: [usize; 3]) -> VoxelFeatures<f64> {
        VoxelFeatures::new(Tensor::from_fn(&[c, dims[0], dims[1], dims[2]], |i| i as f64)).unwrap()
    }

    #[test]
    fn column_partition_counts() {
        let v = labeled(2, [2, 2, 3]);
        let s = height_partition(&v, PartitionSpec::column(3)).unwrap();
        assert_eq!(s.tensor().dims(), &[4, 3, 2]);
        // first column, ascending height
        for z in 0..3 {
            assert_eq!(s.sequence(0).row(z), &v.channel_vector(z)[..]);
        }
    }

    #[test]
    fn global_partition_is_flatten() {
        let v = labeled(3, [2, 3, 2]);
        let s = height_partition(&v, PartitionSpec::global([2, 3, 2])).unwrap();
        assert_eq!(s.count(), 1);
        assert_eq!(s.sequence(0), v.to_tokens());
    }

    #[test]
    fn reverse_restores_labels() {
        let dims = [2, 4, 4];
        let v = labeled(2, dims);
        let spec = PartitionSpec::column(4);
        let s = height_partition(&v, spec).unwrap();
        assert_eq!(height_reverse(&s, spec, dims).unwrap(), v);
        let r = height_reverse(&s, spec, dims).unwrap();
        let again = height_reverse(&height_partition(&r, spec).unwrap(), spec, dims).unwrap();
        assert_eq!(again, r);
    }

    #[test]
    fn one_token_changes_one_voxel() {
        let dims = [2, 2, 2];
        let spec = PartitionSpec::new(1, 2, 1);
        let v = labeled(2, dims);
        let mut s = height_partition(&v, spec).unwrap();
        // sequence 1, token 1
        let c = s.channels();
        let slot = s.sequence_len() + 1;
        s.tensor_mut().data_mut()[slot * c] = -1.0;
        let r = height_reverse(&s, spec, dims).unwrap();
        let changed: Vec<_> = (0..r.tensor().len()).filter(|&i| r.tensor().data()[i] != v.tensor().data()[i]).collect();
        assert_eq!(changed.len(), 1);
        // group (bx=0, bz=1), token dy=1 -> voxel (0, 1, 1)
        assert_eq!(changed[0], 2 + 1);
    }

    #[test]
    fn non_divisible_spec_names_axis() {
        let v = labeled(1, [4, 4, 3]);
        let err = height_partition(&v, PartitionSpec::new(1, 3, 3)).unwrap_err();
        assert!(err.to_string().contains("y extent"), "{err}");
        assert!(height_partition(&v, PartitionSpec::new(0, 1, 1)).is_err());
    }

    #[test]
    fn reverse_rejects_inconsistent_sequences() {
        let v = labeled(1, [2, 2, 2]);
        let s = height_partition(&v, PartitionSpec::column(2)).unwrap();
        assert!(matches!(height_reverse(&s, PartitionSpec::column(1), [2, 2, 2]), Err(Error::Partition(_))));
    }
}
