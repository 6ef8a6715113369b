//! Image features → voxels → height-attention blocks → BEV.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bev::{BevDecoder, BevFeatures, BevMode, HeightDistribution};
use crate::error::{Error, Result};
use crate::geometry::MappingTable;
use crate::heightattn::{height_partition, height_reverse, transformer_block_with, Execution, PartitionSpec};
use crate::tensorcore::params::DEFAULT_LN_EPS;
use crate::tensorcore::{normal_tensor, FlopLedger, LayerParams, Linear, Scalar, Tensor};
use crate::viewtransform::{lift_features, ImageFeatures, VoxelFeatures};

/// Shape hyperparameters of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub channels: usize,
    /// MLP hidden width; `None` means `4·channels`.
    pub hidden: Option<usize>,
    pub heads: usize,
    pub blocks: usize,
    /// Local sequence extent; `None` means one full column `(1, 1, Z)`.
    pub partition: Option<PartitionSpec>,
    /// Adds a learned vector per height level before the blocks.
    pub height_embedding: bool,
    pub bev_mode: BevMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: 16,
            hidden: None,
            heads: 1,
            blocks: 2,
            partition: None,
            height_embedding: false,
            bev_mode: BevMode::WeightedSum,
        }
    }
}

impl ModelConfig {
    pub fn hidden(&self) -> usize {
        self.hidden.unwrap_or(4 * self.channels)
    }

    pub fn partition_for(&self, grid: [usize; 3]) -> PartitionSpec {
        self.partition.unwrap_or(PartitionSpec::column(grid[2]))
    }
}

/// All parameters of the voxel → BEV part of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f64> {
    pub spec: PartitionSpec,
    pub blocks: Vec<LayerParams<T>>,
    /// `(Z, C)`, added to every voxel at height `z`.
    pub height_embedding: Option<Tensor<T>>,
    pub decoder: BevDecoder<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// Deterministic initialization from `rng`; draws happen in f64 and are
    /// rounded to `T`.
    pub fn seeded<R: Rng + ?Sized>(config: &ModelConfig, grid: [usize; 3], rng: &mut R) -> Result<Self> {
        let c = config.channels;
        let spec = config.partition_for(grid);
        spec.check(grid)?;
        let blocks = (0..config.blocks)
            .map(|_| LayerParams::<f64>::seeded(c, config.hidden(), rng).with_heads(config.heads).cast())
            .collect::<Vec<_>>();
        let height_embedding =
            config.height_embedding.then(|| normal_tensor::<f64, _>(&[grid[2], c], rng).scale(0.02).cast());
        let decoder = match config.bev_mode {
            BevMode::WeightedSum => BevDecoder::WeightedSum { head: Linear::<f64>::seeded(c, 1, 0.0, rng).cast() },
            BevMode::FlattenLinear => {
                BevDecoder::FlattenLinear { reducer: Linear::<f64>::seeded(grid[2] * c, c, 0.0, rng).cast() }
            }
        };
        let params = Self { spec, blocks, height_embedding, decoder };
        params.validate(grid, c)?;
        Ok(params)
    }

    pub fn validate(&self, grid: [usize; 3], channels: usize) -> Result<()> {
        self.spec.check(grid)?;
        for (i, b) in self.blocks.iter().enumerate() {
            b.validate()?;
            if b.channels() != channels {
                return Err(Error::Shape(format!("block {i} has width {}, expected {channels}", b.channels())));
            }
        }
        if let Some(e) = &self.height_embedding {
            if e.dims() != [grid[2], channels] {
                return Err(Error::Shape(format!(
                    "height embedding is {:?}, expected [{}, {channels}]",
                    e.dims(),
                    grid[2]
                )));
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            spec: self.spec,
            blocks: self.blocks.iter().map(LayerParams::cast).collect(),
            height_embedding: self.height_embedding.as_ref().map(Tensor::cast),
            decoder: self.decoder.cast(),
        }
    }

    /// `(name, tensor)` pairs for a parameter bundle.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.extend(b.named_tensors(&format!("block{i}")));
        }
        if let Some(e) = &self.height_embedding {
            out.push(("height_embedding".into(), e));
        }
        let (prefix, l) = match &self.decoder {
            BevDecoder::WeightedSum { head } => ("bev.head", head),
            BevDecoder::FlattenLinear { reducer } => ("bev.reducer", reducer),
        };
        out.push((format!("{prefix}.weight"), &l.weight));
        out.push((format!("{prefix}.bias"), &l.bias));
        out
    }

    /// Rebuilds parameters from a bundle map produced by [`ModelParams::named_tensors`].
    pub fn from_named(mut map: BTreeMap<String, Tensor<T>>, config: &ModelConfig, grid: [usize; 3]) -> Result<Self> {
        let blocks = (0..config.blocks)
            .map(|i| LayerParams::from_named(&mut map, &format!("block{i}"), config.heads, DEFAULT_LN_EPS))
            .collect::<Result<Vec<_>>>()?;
        let height_embedding = if config.height_embedding {
            Some(map.remove("height_embedding").ok_or_else(|| Error::Format("missing height_embedding".into()))?)
        } else {
            None
        };
        let mut linear = |prefix: &str| -> Result<Linear<T>> {
            let w = map.remove(&format!("{prefix}.weight"));
            let b = map.remove(&format!("{prefix}.bias"));
            match (w, b) {
                (Some(w), Some(b)) => Linear::new(w, b),
                _ => Err(Error::Format(format!("missing {prefix} parameters"))),
            }
        };
        let decoder = match config.bev_mode {
            BevMode::WeightedSum => BevDecoder::WeightedSum { head: linear("bev.head")? },
            BevMode::FlattenLinear => BevDecoder::FlattenLinear { reducer: linear("bev.reducer")? },
        };
        if let Some(extra) = map.keys().next() {
            return Err(Error::Format(format!("unexpected parameter {extra}")));
        }
        let params = Self { spec: config.partition_for(grid), blocks, height_embedding, decoder };
        params.validate(grid, config.channels)?;
        Ok(params)
    }
}

/// Everything a forward pass produces.
#[derive(Debug, Clone)]
pub struct ForwardOutput<T = f64> {
    pub lifted: VoxelFeatures<T>,
    pub refined: VoxelFeatures<T>,
    pub distribution: Option<HeightDistribution<T>>,
    pub bev: BevFeatures<T>,
}

/// Embedding, partition, stacked transformer blocks, reverse.
pub fn refine_voxels<T: Scalar>(
    vox: &VoxelFeatures<T>,
    model: &ModelParams<T>,
    ledger: &FlopLedger,
    exec: Execution,
) -> Result<VoxelFeatures<T>> {
    let grid = vox.grid_dims();
    model.validate(grid, vox.channels())?;
    let mut input = vox.clone();
    if let Some(emb) = &model.height_embedding {
        let n = vox.voxel_count();
        let z = grid[2];
        let c = vox.channels();
        for lin in 0..n {
            for ch in 0..c {
                input.tensor_mut().data_mut()[ch * n + lin] += emb.data()[(lin % z) * c + ch];
            }
        }
    }
    let mut seq = height_partition(&input, model.spec)?;
    for block in &model.blocks {
        seq = transformer_block_with(&seq, block, ledger, exec)?;
    }
    height_reverse(&seq, model.spec, grid)
}

/// Full forward pass. Errors are tagged with the stage that raised them.
pub fn forward<T: Scalar>(
    img: &ImageFeatures<T>,
    table: &MappingTable,
    model: &ModelParams<T>,
    ledger: &FlopLedger,
    exec: Execution,
) -> Result<ForwardOutput<T>> {
    let lifted = lift_features(img, table).map_err(|e| e.in_stage("view transform"))?;
    let refined = refine_voxels(&lifted, model, ledger, exec).map_err(|e| e.in_stage("height attention"))?;
    let (bev, distribution) = model.decoder.decode(&refined).map_err(|e| e.in_stage("bev decoder"))?;
    Ok(ForwardOutput { lifted, refined, distribution, bev })
}
