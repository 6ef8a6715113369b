//! Voxel-space height attention for monocular roadside 3D perception.
//!
//! Image features are lifted into a predefined voxel grid through a
//! precomputed lookup table, refined by transformer blocks that attend only
//! within local height sequences, and collapsed into a bird's-eye-view plane
//! with a per-column height distribution. Every matrix product is charged to a
//! [`FlopLedger`] so measured multiply-accumulates can be compared against the
//! closed-form costs in [`heightattn::complexity`].

pub mod bev;
pub mod error;
pub mod format;
pub mod geometry;
pub mod heightattn;
pub mod pipeline;
pub mod tensorcore;
pub mod verify;
pub mod viewtransform;

pub use bev::{compress_to_bev, predict_height_distribution, BevDecoder, BevFeatures, BevMode, HeightDistribution};
pub use error::{Error, Result};
pub use geometry::{
    build_mapping_table, make_voxel_grid, project_point, CalibrationFile, CameraCalib, FeatureCoord, MappingTable,
    VoxelGrid,
};
pub use heightattn::{
    complexity_height, complexity_vanilla, height_attention, height_partition, height_reverse, transformer_block,
    vanilla_attention, Execution, HeightSequences, PartitionSpec,
};
pub use pipeline::{forward, ForwardOutput, ModelConfig, ModelParams};
pub use tensorcore::{FlopLedger, LayerParams, LedgerSnapshot, Precision, Scalar, Slot, Tensor};
pub use viewtransform::{lift_features, ImageFeatures, VoxelFeatures};
