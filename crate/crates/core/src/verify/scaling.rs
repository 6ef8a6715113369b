use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::heightattn::{
    complexity_height, complexity_vanilla, height_attention_with, vanilla_attention, Execution, PartitionSpec,
};
use crate::tensorcore::{normal_tensor, seeded_rng, FlopLedger, LayerParams, Scalar};
use crate::viewtransform::VoxelFeatures;

/// Sweep definition for [`run_scaling_benchmark`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingConfig {
    /// Grids in ascending token count.
    pub grids: Vec<[usize; 3]>,
    /// Local sequence extent; must divide every grid.
    pub spec: PartitionSpec,
    pub channels: usize,
    /// Timed runs per point (median reported); one extra warmup run is discarded.
    pub repeats: usize,
    pub execution: Execution,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionOp {
    Vanilla,
    Height,
}

impl AttentionOp {
    pub fn as_str(self) -> &'static str {
        match self {
            AttentionOp::Vanilla => "vanilla",
            AttentionOp::Height => "height",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub grid: [usize; 3],
    /// `X·Y·Z`.
    pub tokens: usize,
    pub op: AttentionOp,
    pub macs_predicted: u64,
    pub macs_measured: u64,
    /// Median wall time of one call.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub seed: u64,
    pub records: Vec<BenchRecord>,
    /// Least-squares slope of `log MACs` against `log tokens`, per op; `None`
    /// when the sweep has fewer than two distinct sizes.
    pub mac_slope_vanilla: Option<f64>,
    pub mac_slope_height: Option<f64>,
    pub time_slope_vanilla: Option<f64>,
    pub time_slope_height: Option<f64>,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return None;
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// Times `f` `repeats` times after one warmup, returning the median seconds
/// and the MACs charged by a single call.
fn time_op(repeats: usize, mut f: impl FnMut(&FlopLedger) -> Result<()>) -> Result<(f64, u64)> {
    f(&FlopLedger::new())?;
    let mut times = Vec::with_capacity(repeats);
    let mut macs = None;
    for _ in 0..repeats {
        let ledger = FlopLedger::new();
        let start = Instant::now();
        f(&ledger)?;
        times.push(start.elapsed().as_secs_f64());
        let m = ledger.tracked();
        if *macs.get_or_insert(m) != m {
            return Err(Error::Oracle("MAC count changed between repeats".into()));
        }
    }
    Ok((median(times), macs.unwrap_or(0)))
}

/// Runs vanilla attention over all flattened tokens and height attention over
/// local sequences at each grid size, in precision `T`.
pub fn run_scaling_benchmark<T: Scalar>(config: &ScalingConfig) -> Result<BenchReport> {
    if config.repeats < 3 {
        return Err(Error::Config(format!("repeats must be at least 3, got {}", config.repeats)));
    }
    let sizes: Vec<usize> = config.grids.iter().map(|g| g.iter().product()).collect();
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("grid sweep must be non-empty and ascending".into()));
    }
    let c = config.channels;
    let mut rng = seeded_rng(config.seed);
    let params: LayerParams<T> = LayerParams::<f64>::seeded(c, 4 * c, &mut rng).cast();
    let mut records = Vec::new();
    for (&grid, &tokens) in config.grids.iter().zip(&sizes) {
        config.spec.check(grid)?;
        let vox: VoxelFeatures<T> = VoxelFeatures::new(normal_tensor(&[c, grid[0], grid[1], grid[2]], &mut rng))?;
        let flat = vox.to_tokens();

        let (secs, macs) = time_op(config.repeats, |l| vanilla_attention(&flat, &params, l).map(drop))?;
        records.push(BenchRecord {
            grid,
            tokens,
            op: AttentionOp::Vanilla,
            macs_predicted: complexity_vanilla(grid, c),
            macs_measured: macs,
            seconds: secs,
        });

        let (secs, macs) = time_op(config.repeats, |l| {
            height_attention_with(&vox, config.spec, &params, l, config.execution).map(drop)
        })?;
        records.push(BenchRecord {
            grid,
            tokens,
            op: AttentionOp::Height,
            macs_predicted: complexity_height(grid, config.spec, c)?,
            macs_measured: macs,
            seconds: secs,
        });
    }
    let fit = |op: AttentionOp, value: fn(&BenchRecord) -> f64| {
        let pts: Vec<(f64, f64)> = records.iter().filter(|r| r.op == op).map(|r| (r.tokens as f64, value(r))).collect();
        fit_loglog_slope(&pts)
    };
    Ok(BenchReport {
        seed: config.seed,
        mac_slope_vanilla: fit(AttentionOp::Vanilla, |r| r.macs_measured as f64),
        mac_slope_height: fit(AttentionOp::Height, |r| r.macs_measured as f64),
        time_slope_vanilla: fit(AttentionOp::Vanilla, |r| r.seconds),
        time_slope_height: fit(AttentionOp::Height, |r| r.seconds),
        records,
    })
}

fn slope_cell(s: Option<f64>) -> String {
    s.map_or_else(|| "n/a".to_string(), |v| format!("{v:.9}"))
}

impl BenchReport {
    pub fn macs_consistent(&self) -> bool {
        self.records.iter().all(|r| r.macs_measured == r.macs_predicted)
    }

    /// CSV rows `size,op,macs_predicted,macs_measured,seconds`, then a blank
    /// line and a `summary,op,mac_slope,time_slope` block, then the seed.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("size,op,macs_predicted,macs_measured,seconds\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.9}",
                r.tokens,
                r.op.as_str(),
                r.macs_predicted,
                r.macs_measured,
                r.seconds
            );
        }
        out.push_str("\nsummary,op,mac_slope,time_slope\n");
        let _ = writeln!(
            out,
            "summary,vanilla,{},{}",
            slope_cell(self.mac_slope_vanilla),
            slope_cell(self.time_slope_vanilla)
        );
        let _ = writeln!(
            out,
            "summary,height,{},{}",
            slope_cell(self.mac_slope_height),
            slope_cell(self.time_slope_height)
        );
        let _ = writeln!(out, "seed,{}", self.seed);
        out
    }

    /// Short human-readable slope summary.
    pub fn summary(&self) -> String {
        format!(
            "MAC slope: vanilla {} height {}\ntime slope: vanilla {} height {}\nMACs match formulas: {}\n",
            slope_cell(self.mac_slope_vanilla),
            slope_cell(self.mac_slope_height),
            slope_cell(self.time_slope_vanilla),
            slope_cell(self.time_slope_height),
            self.macs_consistent()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_laws() {
        let pts: Vec<_> = [2.0, 4.0, 8.0, 16.0].iter().map(|&x: &f64| (x, 3.0 * x.powi(2))).collect();
        assert!((fit_loglog_slope(&pts).unwrap() - 2.0).abs() < 1e-12);
        assert!(fit_loglog_slope(&pts[..1]).is_none());
        assert!(fit_loglog_slope(&[(2.0, 1.0), (2.0, 3.0)]).is_none());
    }

    #[test]
    fn single_size_has_no_slope() {
        let cfg = ScalingConfig {
            grids: vec![[2, 2, 2]],
            spec: PartitionSpec::column(2),
            channels: 2,
            repeats: 3,
            execution: Execution::Serial,
            seed: 1,
        };
        let r = run_scaling_benchmark::<f32>(&cfg).unwrap();
        assert!(r.mac_slope_vanilla.is_none() && r.time_slope_height.is_none());
        assert!(r.macs_consistent());
        assert!(r.to_csv().contains("summary,vanilla,n/a,n/a"));
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = ScalingConfig {
            grids: vec![[4, 4, 2], [2, 2, 2]],
            spec: PartitionSpec::column(2),
            channels: 2,
            repeats: 3,
            execution: Execution::Serial,
            seed: 1,
        };
        assert!(run_scaling_benchmark::<f32>(&cfg).is_err());
        cfg.grids.reverse();
        cfg.repeats = 2;
        assert!(run_scaling_benchmark::<f32>(&cfg).is_err());
    }
}
