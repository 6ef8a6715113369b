use std::fs;
use std::path::{Path, PathBuf};

use heightformer_core::format::{
    load_bundle, read_table, read_tensor, save_bundle, write_atomic, write_table, write_tensor,
};
use heightformer_core::tensorcore::{normal_tensor, seeded_rng};
use heightformer_core::verify::{
    run_equivalence_suite, run_gradcheck_suite, run_scaling_benchmark, EquivalenceOptions, ScalingConfig, SuiteCase,
    SuiteReport,
};
use heightformer_core::{
    build_mapping_table, complexity_height, forward, BevMode, CalibrationFile, Execution, FlopLedger, ImageFeatures,
    LedgerSnapshot, MappingTable, ModelParams, PartitionSpec, Precision, Scalar,
};
use serde::Serialize;

use crate::args::{BuildTableArgs, ForwardArgs, VerifyArgs};
use crate::config::RunConfig;
use crate::error::{exit, CliError, CliResult};

pub const TABLE_FILE: &str = "mapping_table.hmap";
pub const REFINED_FILE: &str = "voxel_refined.hten";
pub const BEV_FILE: &str = "bev.hten";
pub const DISTRIBUTION_FILE: &str = "height_distribution.hten";
pub const FORWARD_SUMMARY_FILE: &str = "forward_summary.json";
pub const VERIFY_REPORT_FILE: &str = "verify_report.json";
pub const BENCH_CSV_FILE: &str = "bench_report.csv";
pub const BENCH_SUMMARY_FILE: &str = "bench_summary.txt";

fn execution(cfg: &RunConfig) -> Execution {
    if cfg.parallel {
        Execution::Parallel
    } else {
        Execution::Serial
    }
}

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::missing(path))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableSummary {
    pub path: PathBuf,
    pub grid: [usize; 3],
    pub feature_dims: [usize; 2],
    pub valid_fraction: f64,
}

pub fn cmd_build_table(cfg: &RunConfig, args: &BuildTableArgs, out: &Path) -> CliResult<TableSummary> {
    require_file(&args.calib)?;
    let text = fs::read_to_string(&args.calib)?;
    let file = CalibrationFile::from_json(&text).map_err(|e| CliError::reading(&args.calib, e))?;
    let calib = file.to_calib().map_err(|e| CliError::reading(&args.calib, e))?;
    let (h, w) = file.image_dims();
    let dims = (cfg.image_h.unwrap_or(h), cfg.image_w.unwrap_or(w));
    let grid = cfg.grid()?;
    let table = build_mapping_table(&calib, &grid, dims, cfg.stride)?;
    fs::create_dir_all(out)?;
    let path = out.join(&args.name);
    write_table(&path, &table)?;
    let (hf, wf) = table.feature_dims();
    Ok(TableSummary { path, grid: table.dims(), feature_dims: [hf, wf], valid_fraction: table.valid_fraction() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForwardSummary {
    pub seed: u64,
    pub precision: Precision,
    pub grid: [usize; 3],
    pub channels: usize,
    pub blocks: usize,
    pub heads: usize,
    pub partition: [usize; 3],
    pub bev_mode: BevMode,
    pub features: String,
    pub params: String,
    pub valid_fraction: f64,
    /// Attention MACs one block should charge, from the closed form.
    pub predicted_macs_per_block: u64,
    pub predicted_macs_total: u64,
    pub ledger: LedgerSnapshot,
    pub outputs: Vec<String>,
}

pub fn cmd_forward(cfg: &RunConfig, args: &ForwardArgs, out: &Path) -> CliResult<ForwardSummary> {
    require_file(&args.table)?;
    if let Some(p) = &args.features {
        require_file(p)?;
    }
    if let Some(p) = &args.params {
        require_file(p)?;
    }
    let table = read_table(&args.table).map_err(|e| CliError::reading(&args.table, e))?;
    match cfg.precision_or(Precision::Double)? {
        Precision::Single => forward_typed::<f32>(cfg, args, &table, out),
        Precision::Double => forward_typed::<f64>(cfg, args, &table, out),
    }
}

fn forward_typed<T: Scalar>(
    cfg: &RunConfig,
    args: &ForwardArgs,
    table: &MappingTable,
    out: &Path,
) -> CliResult<ForwardSummary> {
    let grid = table.dims();
    let model_cfg = cfg.model();
    let c = model_cfg.channels;
    let (hf, wf) = table.feature_dims();

    // Parameters use the base stream, synthetic features stream 1, so either
    // can be replaced by a file without shifting the other.
    let model: ModelParams<T> = match &args.params {
        Some(p) => {
            let map = load_bundle::<T>(p).map_err(|e| CliError::reading(p, e))?;
            ModelParams::from_named(map, &model_cfg, grid)?
        }
        None => ModelParams::seeded(&model_cfg, grid, &mut seeded_rng(cfg.seed))?,
    };
    let img = match &args.features {
        Some(p) => {
            let t = read_tensor(p).map_err(|e| CliError::reading(p, e))?.into_precision::<T>();
            if t.dims() != [c, hf, wf] {
                return Err(CliError::invalid(format!(
                    "{}: features have shape {:?}, table expects [{c}, {hf}, {wf}]",
                    p.display(),
                    t.dims()
                )));
            }
            ImageFeatures::new(t)?
        }
        None => {
            let mut rng = seeded_rng(cfg.seed);
            rng.set_stream(1);
            ImageFeatures::new(normal_tensor::<f64, _>(&[c, hf, wf], &mut rng).cast())?
        }
    };

    let ledger = FlopLedger::new();
    let result = forward(&img, table, &model, &ledger, execution(cfg))?;

    fs::create_dir_all(out)?;
    let mut outputs = vec![REFINED_FILE.to_string(), BEV_FILE.to_string()];
    write_tensor(&out.join(REFINED_FILE), result.refined.tensor())?;
    write_tensor(&out.join(BEV_FILE), result.bev.tensor())?;
    if let Some(d) = &result.distribution {
        write_tensor(&out.join(DISTRIBUTION_FILE), d.tensor())?;
        outputs.push(DISTRIBUTION_FILE.to_string());
    }
    if args.save_params {
        save_bundle(&out.join("params"), "manifest.json", &model.named_tensors())?;
        outputs.push("params/manifest.json".to_string());
    }

    let per_block = complexity_height(grid, model.spec, c)?;
    let summary = ForwardSummary {
        seed: cfg.seed,
        precision: T::PRECISION,
        grid,
        channels: c,
        blocks: model.blocks.len(),
        heads: model_cfg.heads,
        partition: model.spec.as_array(),
        bev_mode: model.decoder.mode(),
        features: args.features.as_ref().map_or("seeded".into(), |p| p.display().to_string()),
        params: args.params.as_ref().map_or("seeded".into(), |p| p.display().to_string()),
        valid_fraction: table.valid_fraction(),
        predicted_macs_per_block: per_block,
        predicted_macs_total: per_block * model.blocks.len() as u64,
        ledger: ledger.snapshot(),
        outputs,
    };
    write_json(&out.join(FORWARD_SUMMARY_FILE), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifySummary {
    pub seed: u64,
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

impl VerifySummary {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            exit::OK
        } else {
            exit::VERIFY_FAILED
        }
    }
}

pub fn verify_cases() -> (Vec<SuiteCase>, Vec<SuiteCase>) {
    let case = |grid, channels| SuiteCase { grid, channels };
    (vec![case([2, 2, 2], 2), case([2, 2, 4], 4), case([4, 4, 4], 4)], vec![case([2, 2, 2], 4)])
}

pub fn cmd_verify(cfg: &RunConfig, args: &VerifyArgs, out: &Path) -> CliResult<VerifySummary> {
    let (eq_cases, grad_cases) = verify_cases();
    let opts = EquivalenceOptions { corrupt_reverse: args.inject_corrupt };
    let suites = vec![run_equivalence_suite(cfg.seed, &eq_cases, opts)?, run_gradcheck_suite(cfg.seed, &grad_cases)?];
    let summary = VerifySummary { seed: cfg.seed, passed: suites.iter().all(|s| s.passed), suites };
    fs::create_dir_all(out)?;
    write_json(&out.join(VERIFY_REPORT_FILE), &summary)?;
    Ok(summary)
}

pub fn cmd_bench(cfg: &RunConfig, out: &Path) -> CliResult<heightformer_core::verify::BenchReport> {
    let first = *cfg.bench_grids.first().ok_or_else(|| CliError::invalid("bench_grids is empty"))?;
    let spec = match cfg.partition {
        Some([x, y, z]) => PartitionSpec::new(x, y, z),
        None => PartitionSpec::column(first[2]),
    };
    let sc = ScalingConfig {
        grids: cfg.bench_grids.clone(),
        spec,
        channels: cfg.channels,
        repeats: cfg.bench_repeats,
        execution: execution(cfg),
        seed: cfg.seed,
    };
    let report = match cfg.precision_or(Precision::Single)? {
        Precision::Single => run_scaling_benchmark::<f32>(&sc)?,
        Precision::Double => run_scaling_benchmark::<f64>(&sc)?,
    };
    fs::create_dir_all(out)?;
    write_atomic(&out.join(BENCH_CSV_FILE), report.to_csv().as_bytes())?;
    write_atomic(&out.join(BENCH_SUMMARY_FILE), report.summary().as_bytes())?;
    Ok(report)
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::invalid(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(())
}
