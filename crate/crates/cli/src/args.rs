use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use heightformer_core::BevMode;

use crate::config::RunConfig;
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(
    name = "heightformer",
    version,
    about = "Height-attention voxel pipeline: tables, forward passes, verification, benchmarks"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; flags override keys of the same name.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Floating-point width, 32 or 64.
    #[arg(long, global = true, value_parser = ["32", "64"])]
    pub precision: Option<String>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Run independent sequences on the rayon thread pool.
    #[arg(long, global = true)]
    pub parallel: bool,

    #[arg(long, global = true)]
    pub channels: Option<usize>,

    #[arg(long, global = true)]
    pub blocks: Option<usize>,

    #[arg(long, global = true)]
    pub heads: Option<usize>,

    /// MLP hidden width; defaults to four times the channel count.
    #[arg(long, global = true)]
    pub hidden: Option<usize>,

    /// Local sequence extent as `XhxYhxZh`, e.g. `1x1x10`.
    #[arg(long, global = true, value_parser = parse_triple)]
    pub partition: Option<[usize; 3]>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Project voxel centers through a calibration and write an HMAP table.
    BuildTable(BuildTableArgs),
    /// Lift features, refine with height attention, and compress to BEV.
    Forward(ForwardArgs),
    /// Run the oracle-equivalence and gradient-check suites.
    Verify(VerifyArgs),
    /// Measure vanilla vs height attention over a grid sweep.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct BuildTableArgs {
    /// Calibration JSON with intrinsic, extrinsic, image_h, image_w.
    #[arg(long)]
    pub calib: PathBuf,

    #[arg(long)]
    pub stride: Option<usize>,

    #[arg(long)]
    pub resolution: Option<f64>,

    /// Overrides the image height recorded in the calibration file.
    #[arg(long)]
    pub image_h: Option<usize>,

    #[arg(long)]
    pub image_w: Option<usize>,

    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    pub x_range: Option<[f64; 2]>,

    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    pub y_range: Option<[f64; 2]>,

    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    pub z_range: Option<[f64; 2]>,

    /// Table file name inside the output directory.
    #[arg(long, default_value = "mapping_table.hmap")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct ForwardArgs {
    #[arg(long)]
    pub table: PathBuf,

    /// HTEN image features `(C, Hf, Wf)`; synthesized from the seed when absent.
    #[arg(long)]
    pub features: Option<PathBuf>,

    /// Parameter bundle manifest; seeded initialization when absent.
    #[arg(long)]
    pub params: Option<PathBuf>,

    /// Also write the parameters used as a bundle under `<out>/params/`.
    #[arg(long)]
    pub save_params: bool,

    #[arg(long, value_enum)]
    pub bev_mode: Option<BevModeArg>,

    #[arg(long)]
    pub height_embedding: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Negative control: corrupt the reverse step so the bijection check fails.
    #[arg(long, hide = true)]
    pub inject_corrupt: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated grids, e.g. `4x4x4,8x8x4`.
    #[arg(long, value_delimiter = ',', value_parser = parse_triple)]
    pub bench_grids: Option<Vec<[usize; 3]>>,

    #[arg(long)]
    pub bench_repeats: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BevModeArg {
    WeightedSum,
    FlattenLinear,
}

impl From<BevModeArg> for BevMode {
    fn from(m: BevModeArg) -> Self {
        match m {
            BevModeArg::WeightedSum => BevMode::WeightedSum,
            BevModeArg::FlattenLinear => BevMode::FlattenLinear,
        }
    }
}

fn parse_triple(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<_> = s.split('x').map(str::trim).collect();
    match parts[..] {
        [a, b, c] => {
            let p = |v: &str| v.parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
            Ok([p(a)?, p(b)?, p(c)?])
        }
        _ => Err(format!("expected AxBxC, got {s:?}")),
    }
}

fn parse_range(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected MIN,MAX, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok([p(a)?, p(b)?])
}

impl Cli {
    /// Loads the config file (if any) and applies every flag on top of it.
    pub fn resolve_config(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.global.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let g = &self.global;
        if let Some(s) = g.seed {
            cfg.seed = s;
        }
        if let Some(p) = &g.precision {
            cfg.precision = p.parse().ok();
        }
        cfg.parallel |= g.parallel;
        if let Some(c) = g.channels {
            cfg.channels = c;
        }
        if let Some(b) = g.blocks {
            cfg.blocks = b;
        }
        if let Some(h) = g.heads {
            cfg.heads = h;
        }
        if g.hidden.is_some() {
            cfg.hidden = g.hidden;
        }
        if g.partition.is_some() {
            cfg.partition = g.partition;
        }
        match &self.command {
            Command::BuildTable(a) => {
                if let Some(v) = a.stride {
                    cfg.stride = v;
                }
                if let Some(v) = a.resolution {
                    cfg.resolution = v;
                }
                if a.image_h.is_some() {
                    cfg.image_h = a.image_h;
                }
                if a.image_w.is_some() {
                    cfg.image_w = a.image_w;
                }
                if let Some(v) = a.x_range {
                    cfg.x_range = v;
                }
                if let Some(v) = a.y_range {
                    cfg.y_range = v;
                }
                if let Some(v) = a.z_range {
                    cfg.z_range = v;
                }
            }
            Command::Forward(a) => {
                if let Some(m) = a.bev_mode {
                    cfg.bev_mode = m.into();
                }
                cfg.height_embedding |= a.height_embedding;
            }
            Command::Bench(a) => {
                if let Some(g) = &a.bench_grids {
                    cfg.bench_grids = g.clone();
                }
                if let Some(r) = a.bench_repeats {
                    cfg.bench_repeats = r;
                }
            }
            Command::Verify(_) => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
