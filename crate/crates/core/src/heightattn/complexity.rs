//! Closed-form MAC counts of the two tracked attention products.

use crate::error::Result;

use super::partition::PartitionSpec;

/// `2·(XYZ)²·C`: score plus value product over all voxels as one sequence.
pub fn complexity_vanilla(dims: [usize; 3], channels: usize) -> u64 {
    let n = dims.iter().product::<usize>() as u64;
    2 * n * n * channels as u64
}

/// `2·X·X_h·Y·Y_h·Z·Z_h·C`: the same products summed over local sequences.
pub fn complexity_height(dims: [usize; 3], spec: PartitionSpec, channels: usize) -> Result<u64> {
    spec.check(dims)?;
    let [x, y, z] = dims.map(|d| d as u64);
    let [xh, yh, zh] = spec.as_array().map(|d| d as u64);
    Ok(2 * x * xh * y * yh * z * zh * channels as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(complexity_vanilla([4, 4, 2], 8), 16384);
        assert_eq!(complexity_vanilla([1, 1, 1], 1), 2);
        assert_eq!(complexity_height([4, 4, 2], PartitionSpec::column(2), 8).unwrap(), 1024);
        assert!(complexity_height([4, 4, 2], PartitionSpec::column(3), 8).is_err());
    }

    #[test]
    fn global_spec_coincides() {
        for dims in [[1, 1, 1], [2, 3, 4], [8, 8, 4]] {
            assert_eq!(complexity_height(dims, PartitionSpec::global(dims), 5).unwrap(), complexity_vanilla(dims, 5));
        }
    }
}
