use std::fs;
use std::path::Path;

use heightformer_core::{BevMode, ModelConfig, PartitionSpec, Precision, VoxelGrid};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Everything a run depends on. Loaded from JSON; any key may be omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub z_range: [f64; 2],
    pub resolution: f64,
    /// Overrides the image size recorded in the calibration file.
    pub image_h: Option<usize>,
    pub image_w: Option<usize>,
    pub stride: usize,
    pub channels: usize,
    pub hidden: Option<usize>,
    pub heads: usize,
    pub blocks: usize,
    /// `[X_h, Y_h, Z_h]`; defaults to one full column.
    pub partition: Option<[usize; 3]>,
    pub height_embedding: bool,
    pub bev_mode: BevMode,
    /// 32 or 64. Defaults to 64 for `forward`, 32 for `bench`.
    pub precision: Option<u32>,
    pub seed: u64,
    pub parallel: bool,
    pub bench_grids: Vec<[usize; 3]>,
    pub bench_repeats: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            x_range: [0.0, 102.4],
            y_range: [-51.2, 51.2],
            z_range: [-1.0, 3.0],
            resolution: 0.4,
            image_h: None,
            image_w: None,
            stride: 16,
            channels: 16,
            hidden: None,
            heads: 1,
            blocks: 2,
            partition: None,
            height_embedding: false,
            bev_mode: BevMode::WeightedSum,
            precision: None,
            seed: 0,
            parallel: false,
            bench_grids: vec![[4, 4, 4], [8, 8, 4], [16, 16, 4], [32, 32, 4]],
            bench_repeats: 5,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::reading(path, e.into()))?;
        serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
    }

    pub fn grid(&self) -> CliResult<VoxelGrid> {
        let r = |a: [f64; 2]| (a[0], a[1]);
        Ok(VoxelGrid::new(r(self.x_range), r(self.y_range), r(self.z_range), self.resolution)?)
    }

    pub fn precision_or(&self, default: Precision) -> CliResult<Precision> {
        match self.precision {
            None => Ok(default),
            Some(bits) => Precision::from_bits(bits)
                .ok_or_else(|| CliError::invalid(format!("precision must be 32 or 64, got {bits}"))),
        }
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            channels: self.channels,
            hidden: self.hidden,
            heads: self.heads,
            blocks: self.blocks,
            partition: self.partition.map(|[x, y, z]| PartitionSpec::new(x, y, z)),
            height_embedding: self.height_embedding,
            bev_mode: self.bev_mode,
        }
    }

    /// Range and width checks that do not need the grid.
    pub fn validate(&self) -> CliResult<()> {
        if self.channels == 0 {
            return Err(CliError::invalid("channels must be positive"));
        }
        if self.heads == 0 || !self.channels.is_multiple_of(self.heads) {
            return Err(CliError::invalid(format!("{} heads do not divide {} channels", self.heads, self.channels)));
        }
        if self.hidden == Some(0) {
            return Err(CliError::invalid("hidden must be positive"));
        }
        if self.stride == 0 {
            return Err(CliError::invalid("stride must be positive"));
        }
        Ok(())
    }
}
