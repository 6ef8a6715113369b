//! Camera calibration, the predefined voxel grid, and the precomputed
//! voxel → feature-map lookup table.
//!
//! World frame: x forward, y left, z up, in meters. Camera frame follows the
//! usual pinhole convention (x right, y down, z along the optical axis).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-6;
const DIVISIBILITY_TOL: f64 = 1e-9;
const MIN_DEPTH: f64 = 1e-9;

/// Pinhole intrinsics plus a rigid world → camera transform.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalib {
    intrinsic: [[f64; 3]; 3],
    extrinsic: [[f64; 4]; 4],
}

impl CameraCalib {
    /// Validates the bottom rows and orthonormality of the rotation block.
    pub fn new(intrinsic: [[f64; 3]; 3], extrinsic: [[f64; 4]; 4]) -> Result<Self> {
        if intrinsic[2] != [0.0, 0.0, 1.0] {
            return Err(Error::Calibration(format!("intrinsic bottom row must be (0, 0, 1), got {:?}", intrinsic[2])));
        }
        if extrinsic[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::Calibration(format!(
                "extrinsic bottom row must be (0, 0, 0, 1), got {:?}",
                extrinsic[3]
            )));
        }
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| extrinsic[k][i] * extrinsic[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > ORTHONORMAL_TOL {
                    return Err(Error::Calibration(format!(
                        "extrinsic rotation is not orthonormal (RᵀR[{i}][{j}] = {dot})"
                    )));
                }
            }
        }
        Ok(Self { intrinsic, extrinsic })
    }

    /// Camera at `position` (world frame) looking along world +x, tilted down by
    /// `pitch` radians, with focal lengths `(fx, fy)` and principal point `(cx, cy)`.
    pub fn looking_forward(focal: (f64, f64), principal: (f64, f64), position: [f64; 3], pitch: f64) -> Result<Self> {
        // world (x fwd, y left, z up) -> camera (x right, y down, z fwd)
        let base = [[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]];
        let (s, c) = pitch.sin_cos();
        let tilt = [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]];
        let mut rot = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rot[i][j] = (0..3).map(|k| tilt[i][k] * base[k][j]).sum();
            }
        }
        let mut extrinsic = [[0.0; 4]; 4];
        for i in 0..3 {
            extrinsic[i][..3].copy_from_slice(&rot[i]);
            extrinsic[i][3] = -(0..3).map(|k| rot[i][k] * position[k]).sum::<f64>();
        }
        extrinsic[3][3] = 1.0;
        let intrinsic = [[focal.0, 0.0, principal.0], [0.0, focal.1, principal.1], [0.0, 0.0, 1.0]];
        Self::new(intrinsic, extrinsic)
    }

    pub fn intrinsic(&self) -> &[[f64; 3]; 3] {
        &self.intrinsic
    }

    pub fn extrinsic(&self) -> &[[f64; 4]; 4] {
        &self.extrinsic
    }

    /// Full-resolution pixel coordinates `(u, v)` of a world point.
    pub fn project_point(&self, point: [f64; 3]) -> Result<(f64, f64)> {
        let e = &self.extrinsic;
        let mut cam = [0.0; 3];
        for (i, c) in cam.iter_mut().enumerate() {
            *c = e[i][0] * point[0] + e[i][1] * point[1] + e[i][2] * point[2] + e[i][3];
        }
        let depth = cam[2];
        if depth <= MIN_DEPTH {
            return Err(Error::BehindCamera { depth });
        }
        let k = &self.intrinsic;
        let u = k[0][0] * cam[0] + k[0][1] * cam[1] + k[0][2] * cam[2];
        let v = k[1][0] * cam[0] + k[1][1] * cam[1] + k[1][2] * cam[2];
        Ok((u / depth, v / depth))
    }
}

/// Free function form of [`CameraCalib::project_point`].
pub fn project_point(calib: &CameraCalib, point: [f64; 3]) -> Result<(f64, f64)> {
    calib.project_point(point)
}

/// On-disk calibration: row-major matrices plus the image size they apply to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub intrinsic: Vec<f64>,
    pub extrinsic: Vec<f64>,
    pub image_h: u32,
    pub image_w: u32,
}

impl CalibrationFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_calib(calib: &CameraCalib, image_h: u32, image_w: u32) -> Self {
        Self {
            intrinsic: calib.intrinsic.iter().flatten().copied().collect(),
            extrinsic: calib.extrinsic.iter().flatten().copied().collect(),
            image_h,
            image_w,
        }
    }

    pub fn to_calib(&self) -> Result<CameraCalib> {
        if self.intrinsic.len() != 9 {
            return Err(Error::Calibration("intrinsic must have 9 values".into()));
        }
        if self.extrinsic.len() != 16 {
            return Err(Error::Calibration("extrinsic must have 16 values".into()));
        }
        if self.image_h == 0 || self.image_w == 0 {
            return Err(Error::Calibration("image_h and image_w must be positive".into()));
        }
        let mut k = [[0.0; 3]; 3];
        for (i, &v) in self.intrinsic.iter().enumerate() {
            k[i / 3][i % 3] = v;
        }
        let mut e = [[0.0; 4]; 4];
        for (i, &v) in self.extrinsic.iter().enumerate() {
            e[i / 4][i % 4] = v;
        }
        CameraCalib::new(k, e)
    }

    /// `(h, w)` in pixels.
    pub fn image_dims(&self) -> (usize, usize) {
        (self.image_h as usize, self.image_w as usize)
    }
}

/// Regular grid of voxels over an axis-aligned box in the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub z_range: (f64, f64),
    pub resolution: f64,
    dims: [usize; 3],
}

impl VoxelGrid {
    pub fn new(x_range: (f64, f64), y_range: (f64, f64), z_range: (f64, f64), resolution: f64) -> Result<Self> {
        if !resolution.is_finite() || resolution <= 0.0 {
            return Err(Error::Config(format!("resolution must be positive, got {resolution}")));
        }
        let mut dims = [0usize; 3];
        for (d, (name, (lo, hi))) in dims.iter_mut().zip([("x", x_range), ("y", y_range), ("z", z_range)]) {
            if !lo.is_finite() || !hi.is_finite() || hi <= lo {
                return Err(Error::Config(format!("{name} range [{lo}, {hi}] is empty")));
            }
            let cells = ((hi - lo) / resolution).round();
            if ((hi - lo) - cells * resolution).abs() > DIVISIBILITY_TOL || cells < 1.0 {
                return Err(Error::Config(format!(
                    "{name} not divisible: extent {} is not a multiple of {resolution}",
                    hi - lo
                )));
            }
            *d = cells as usize;
        }
        Ok(Self { x_range, y_range, z_range, resolution, dims })
    }

    /// `(X, Y, Z)` cell counts.
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let r = self.resolution;
        [
            self.x_range.0 + (i as f64 + 0.5) * r,
            self.y_range.0 + (j as f64 + 0.5) * r,
            self.z_range.0 + (k as f64 + 0.5) * r,
        ]
    }

    /// `((x·Y + y)·Z + z)`.
    pub fn linear_index(&self, x: usize, y: usize, z: usize) -> usize {
        let [_, ny, nz] = self.dims;
        (x * ny + y) * nz + z
    }

    pub fn unravel(&self, lin: usize) -> [usize; 3] {
        let [_, ny, nz] = self.dims;
        [lin / (ny * nz), (lin / nz) % ny, lin % nz]
    }
}

/// Free function form of [`VoxelGrid::new`].
pub fn make_voxel_grid(
    x_range: (f64, f64),
    y_range: (f64, f64),
    z_range: (f64, f64),
    resolution: f64,
) -> Result<VoxelGrid> {
    VoxelGrid::new(x_range, y_range, z_range, resolution)
}

/// Feature-grid cell a voxel reads from, or the `(-1, -1)` sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureCoord {
    pub u: i32,
    pub v: i32,
}

impl FeatureCoord {
    pub const SENTINEL: Self = Self { u: -1, v: -1 };

    pub fn is_valid(self) -> bool {
        self != Self::SENTINEL
    }
}

/// Per-voxel lookup into the image feature map, indexed by the grid's linear index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingTable {
    dims: [usize; 3],
    /// `(Hf, Wf)`.
    feature_dims: (usize, usize),
    entries: Vec<FeatureCoord>,
}

impl MappingTable {
    pub fn new(dims: [usize; 3], feature_dims: (usize, usize), entries: Vec<FeatureCoord>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if dims.contains(&0) || entries.len() != n {
            return Err(Error::Shape(format!("table dims {dims:?} need {n} entries, got {}", entries.len())));
        }
        let (hf, wf) = feature_dims;
        if let Some((i, e)) = entries
            .iter()
            .enumerate()
            .find(|(_, e)| e.is_valid() && !(e.u >= 0 && (e.u as usize) < wf && e.v >= 0 && (e.v as usize) < hf))
        {
            return Err(Error::Format(format!("entry {i} = ({}, {}) outside feature map {hf}x{wf}", e.u, e.v)));
        }
        Ok(Self { dims, feature_dims, entries })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn feature_dims(&self) -> (usize, usize) {
        self.feature_dims
    }

    pub fn entries(&self) -> &[FeatureCoord] {
        &self.entries
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> FeatureCoord {
        let [_, ny, nz] = self.dims;
        self.entries[(x * ny + y) * nz + z]
    }

    pub fn valid_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_valid()).count()
    }

    pub fn valid_fraction(&self) -> f64 {
        self.valid_count() as f64 / self.entries.len() as f64
    }
}

/// Projects every voxel center and records the feature cell it lands in.
///
/// Voxels behind the camera or outside `[0, w) × [0, h)` get the sentinel.
/// Valid entries are `(floor(u / stride), floor(v / stride))`.
pub fn build_mapping_table(
    calib: &CameraCalib,
    grid: &VoxelGrid,
    image_dims: (usize, usize),
    feature_stride: usize,
) -> Result<MappingTable> {
    let (h, w) = image_dims;
    if feature_stride == 0 || h == 0 || w == 0 || h % feature_stride != 0 || w % feature_stride != 0 {
        return Err(Error::Config(format!("feature stride {feature_stride} does not divide image {h}x{w}")));
    }
    let stride = feature_stride as f64;
    let entries = (0..grid.voxel_count())
        .into_par_iter()
        .map(|lin| {
            let [i, j, k] = grid.unravel(lin);
            match calib.project_point(grid.center(i, j, k)) {
                Ok((u, v)) if u >= 0.0 && u < w as f64 && v >= 0.0 && v < h as f64 => {
                    FeatureCoord { u: (u / stride).floor() as i32, v: (v / stride).floor() as i32 }
                }
                _ => FeatureCoord::SENTINEL,
            }
        })
        .collect();
    MappingTable::new(grid.dims(), (h / feature_stride, w / feature_stride), entries)
}
