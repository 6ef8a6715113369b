//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.
//!
//! Run with `cargo test -p heightformer-cli --test acceptance`.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use heightformer_cli::args::{BuildTableArgs, ForwardArgs};
use heightformer_cli::commands::{cmd_build_table, cmd_forward};
use heightformer_cli::config::RunConfig;
use heightformer_core::bev::{compress_to_bev, predict_height_distribution, HeightDistribution};
use heightformer_core::format::{encode_table, read_table};
use heightformer_core::heightattn::{
    attention_backward, block_backward, block_forward, height_attention, height_partition, height_reverse,
    transformer_block, vanilla_attention, HeightSequences, PartitionSpec,
};
use heightformer_core::tensorcore::grad::{layer_norm_backward, mlp_backward, softmax_rows_backward};
use heightformer_core::tensorcore::{
    layer_norm, mlp_forward, normal_tensor, seeded_rng, softmax_rows, FlopLedger, LayerParams, Linear, Tensor,
};
use heightformer_core::verify::{run_scaling_benchmark, AttentionOp, ScalingConfig};
use heightformer_core::{
    build_mapping_table, complexity_height, complexity_vanilla, CalibrationFile, CameraCalib, Error, Execution,
    Precision, VoxelFeatures, VoxelGrid,
};
use rand::Rng;

const CALIB: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/roadside_calib.json");

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("complexity formulas match the ledger", complexity_formulas),
        ("quadratic vs linear scaling", scaling_slopes),
        ("global group equals vanilla attention", global_group_equivalence),
        ("per-column brute-force oracle", column_oracle),
        ("partition bijection", partition_bijection),
        ("analytic vs finite-difference gradients", gradients),
        ("residual identity", residual_identity),
        ("projection and mapping table", projection_and_table),
        ("BEV compression properties", bev_properties),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {:>2}: {name} ({detail}; {secs:.2}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {:>2}: {name} ({why}; {secs:.2}s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn err(e: Error) -> String {
    e.to_string()
}

fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|d| n.is_multiple_of(*d)).collect()
}

fn all_specs(dims: [usize; 3]) -> Vec<PartitionSpec> {
    let mut out = Vec::new();
    for &x in &divisors(dims[0]) {
        for &y in &divisors(dims[1]) {
            for &z in &divisors(dims[2]) {
                out.push(PartitionSpec::new(x, y, z));
            }
        }
    }
    out
}

fn random_voxels(c: usize, dims: [usize; 3], rng: &mut impl Rng) -> VoxelFeatures<f64> {
    VoxelFeatures::new(normal_tensor(&[c, dims[0], dims[1], dims[2]], rng)).unwrap()
}

fn complexity_formulas() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded_rng(1);
    let mut cases = 0;
    for x in [1, 2, 4, 8] {
        for y in [1, 2, 4, 8] {
            for z in [1, 2, 4] {
                let dims = [x, y, z];
                let n = (x * y * z) as u64;
                for c in [2, 4] {
                    let params = LayerParams::<f64>::seeded(c, 4 * c, &mut rng);
                    let vox = random_voxels(c, dims, &mut rng);

                    let ledger = FlopLedger::new();
                    vanilla_attention(&vox.to_tokens(), &params, &ledger).map_err(err)?;
                    let measured = ledger.qk_macs() + ledger.sv_macs();
                    let expected = 2 * n * n * c as u64;
                    ensure!(
                        measured == expected && complexity_vanilla(dims, c) == expected,
                        "vanilla {dims:?} C={c}: ledger {measured}, formula {}, expected {expected}",
                        complexity_vanilla(dims, c)
                    );
                    cases += 1;

                    for spec in all_specs(dims) {
                        let ledger = FlopLedger::new();
                        height_attention(&vox, spec, &params, &ledger).map_err(err)?;
                        let measured = ledger.qk_macs() + ledger.sv_macs();
                        let seq = spec.sequence_len() as u64;
                        let expected = 2 * n * seq * c as u64;
                        let formula = complexity_height(dims, spec, c).map_err(err)?;
                        ensure!(
                            measured == expected && formula == expected,
                            "height {dims:?} {:?} C={c}: ledger {measured}, formula {formula}, expected {expected}",
                            spec.as_array()
                        );
                        cases += 1;
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("{cases} (grid, spec, C) cases exact"))
}

/// Ordinary least squares slope, computed here rather than trusting the library fit.
fn ols_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mx, my) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x.ln() / n, b + y.ln() / n));
    let (sxy, sxx) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| {
        let dx = x.ln() - mx;
        (a + dx * (y.ln() - my), b + dx * dx)
    });
    sxy / sxx
}

fn scaling_slopes() -> Outcome {
    let start = Instant::now();
    let cfg = ScalingConfig {
        grids: vec![[4, 4, 4], [8, 8, 4], [16, 16, 4], [32, 32, 4]],
        spec: PartitionSpec::new(1, 1, 4),
        channels: 16,
        repeats: 5,
        execution: Execution::Serial,
        seed: 0,
    };
    let report = run_scaling_benchmark::<f32>(&cfg).map_err(err)?;
    let series = |op: AttentionOp, f: fn(&heightformer_core::verify::BenchRecord) -> f64| -> Vec<(f64, f64)> {
        report.records.iter().filter(|r| r.op == op).map(|r| (r.tokens as f64, f(r))).collect()
    };
    for r in &report.records {
        ensure!(
            r.macs_measured == r.macs_predicted,
            "{:?} {}: measured {} predicted {}",
            r.grid,
            r.op.as_str(),
            r.macs_measured,
            r.macs_predicted
        );
    }
    let mv = ols_slope(&series(AttentionOp::Vanilla, |r| r.macs_measured as f64));
    let mh = ols_slope(&series(AttentionOp::Height, |r| r.macs_measured as f64));
    let tv = ols_slope(&series(AttentionOp::Vanilla, |r| r.seconds));
    let th = ols_slope(&series(AttentionOp::Height, |r| r.seconds));
    ensure!((mv - 2.0).abs() < 1e-9, "vanilla MAC slope {mv}");
    ensure!((mh - 1.0).abs() < 1e-9, "height MAC slope {mh}");
    ensure!(tv > th, "vanilla time slope {tv} not above height {th}");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    Ok(format!("MAC slopes {mv:.9}/{mh:.9}, time slopes {tv:.3}/{th:.3}"))
}

fn global_group_equivalence() -> Outcome {
    let dims = [2, 2, 4];
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let mut rng = seeded_rng(seed);
        let params = LayerParams::<f64>::randomized(4, 16, &mut rng);
        let vox = random_voxels(4, dims, &mut rng);
        let ledger = FlopLedger::new();
        let local = height_attention(&vox, PartitionSpec::new(2, 2, 4), &params, &ledger).map_err(err)?;
        let global = vanilla_attention(&vox.to_tokens(), &params, &ledger).map_err(err)?;
        let dev = local.to_tokens().max_abs_diff(&global).map_err(err)?;
        worst = worst.max(dev);
    }
    ensure!(worst < 1e-12, "max deviation {worst:e}");
    Ok(format!("20 cases, max deviation {worst:.2e}"))
}

/// Straight-line attention over one sequence of token vectors, one head at a time.
fn oracle_sequence(tokens: &[Vec<f64>], p: &LayerParams<f64>) -> Vec<Vec<f64>> {
    let c = tokens[0].len();
    let project = |lin: &Linear<f64>, t: &[f64]| -> Vec<f64> {
        (0..c).map(|o| lin.bias.data()[o] + (0..c).map(|i| t[i] * lin.weight.data()[i * c + o]).sum::<f64>()).collect()
    };
    let q: Vec<_> = tokens.iter().map(|t| project(&p.query, t)).collect();
    let k: Vec<_> = tokens.iter().map(|t| project(&p.key, t)).collect();
    let v: Vec<_> = tokens.iter().map(|t| project(&p.value, t)).collect();
    let d = c / p.heads;
    let n = tokens.len();
    let mut out = vec![vec![0.0; c]; n];
    for h in 0..p.heads {
        let cols = h * d..(h + 1) * d;
        for i in 0..n {
            let s: Vec<f64> =
                (0..n).map(|j| cols.clone().map(|m| q[i][m] * k[j][m]).sum::<f64>() / (d as f64).sqrt()).collect();
            let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = s.iter().map(|x| (x - max).exp()).collect();
            let z: f64 = e.iter().sum();
            for m in cols.clone() {
                out[i][m] = (0..n).map(|j| e[j] / z * v[j][m]).sum();
            }
        }
    }
    out
}

fn column_oracle() -> Outcome {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for dims in [[1, 1, 4], [2, 2, 2], [2, 2, 4], [4, 4, 2], [4, 4, 4]] {
        for heads in [1, 2] {
            let mut rng = seeded_rng(100 + cases);
            let params = LayerParams::<f64>::randomized(4, 16, &mut rng).with_heads(heads);
            let vox = random_voxels(4, dims, &mut rng);
            let out =
                height_attention(&vox, PartitionSpec::column(dims[2]), &params, &FlopLedger::new()).map_err(err)?;
            let [_, ny, nz] = dims;
            for x in 0..dims[0] {
                for y in 0..ny {
                    let lins: Vec<usize> = (0..nz).map(|z| (x * ny + y) * nz + z).collect();
                    let column: Vec<Vec<f64>> = lins.iter().map(|&l| vox.channel_vector(l)).collect();
                    let expect = oracle_sequence(&column, &params);
                    for (&l, e) in lins.iter().zip(&expect) {
                        for (a, b) in out.channel_vector(l).iter().zip(e) {
                            worst = worst.max((a - b).abs());
                        }
                    }
                }
            }
            cases += 1;
        }
    }
    ensure!(worst < 1e-12, "max deviation {worst:e}");
    Ok(format!("{cases} cases, max deviation {worst:.2e}"))
}

fn partition_bijection() -> Outcome {
    let dims = [4, 4, 4];
    let specs = all_specs(dims);
    let mut rng = seeded_rng(5);
    for t in 0..100 {
        let c = rng.random_range(1..=4);
        let vox = random_voxels(c, dims, &mut rng);
        let bits: Vec<u64> = vox.tensor().data().iter().map(|v| v.to_bits()).collect();
        for &spec in &specs {
            let seq = height_partition(&vox, spec).map_err(err)?;
            let mut moved: Vec<u64> = seq.tensor().data().iter().map(|v| v.to_bits()).collect();
            let mut orig = bits.clone();
            moved.sort_unstable();
            orig.sort_unstable();
            ensure!(moved == orig, "tensor {t} spec {:?}: partition is not a permutation", spec.as_array());
            let back = height_reverse(&seq, spec, dims).map_err(err)?;
            let back_bits: Vec<u64> = back.tensor().data().iter().map(|v| v.to_bits()).collect();
            ensure!(back_bits == bits, "tensor {t} spec {:?}: reverse does not restore the input", spec.as_array());
        }
    }
    Ok(format!("100 tensors x {} specs bitwise", specs.len()))
}

/// Central-difference gradient of `f` at `x`, written out here independently.
fn numeric_grad(x: &Tensor<f64>, mut f: impl FnMut(&Tensor<f64>) -> f64) -> Vec<f64> {
    const H: f64 = 1e-5;
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + H;
            let up = f(&probe);
            probe.data_mut()[i] = orig - H;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

fn worst_rel_err(analytic: &Tensor<f64>, numeric: &[f64]) -> f64 {
    analytic.data().iter().zip(numeric).map(|(a, f)| (a - f).abs() / 1f64.max(a.abs()).max(f.abs())).fold(0.0, f64::max)
}

fn weighted_sum(y: &Tensor<f64>, w: &Tensor<f64>) -> f64 {
    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

fn gradients() -> Outcome {
    let mut report = Vec::new();
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let mut rng = seeded_rng(200 + seed);
        let (n, c) = (5, 4);
        let x: Tensor<f64> = normal_tensor(&[n, c], &mut rng);
        let w: Tensor<f64> = normal_tensor(&[n, c], &mut rng);
        let params = LayerParams::<f64>::randomized(c, 8, &mut rng).with_heads(1 + seed as usize % 2);

        let y = softmax_rows(&x);
        let a = softmax_rows_backward(&y, &w).map_err(err)?;
        let e = worst_rel_err(&a, &numeric_grad(&x, |t| weighted_sum(&softmax_rows(t), &w)));
        report.push(("softmax", e));

        let g = &params.norm1;
        let a = layer_norm_backward(&x, &g.gain, params.eps, &w).map_err(err)?;
        let e = worst_rel_err(
            &a,
            &numeric_grad(&x, |t| weighted_sum(&layer_norm(t, &g.gain, &g.bias, params.eps).unwrap(), &w)),
        );
        report.push(("layer_norm", e));

        let ledger = FlopLedger::new();
        let a = mlp_backward(&x, &params.mlp, &w).map_err(err)?;
        let e =
            worst_rel_err(&a, &numeric_grad(&x, |t| weighted_sum(&mlp_forward(t, &params.mlp, &ledger).unwrap(), &w)));
        report.push(("mlp", e));

        let a = attention_backward(&x, &params, &w).map_err(err)?;
        let e = worst_rel_err(
            &a,
            &numeric_grad(&x, |t| weighted_sum(&vanilla_attention(t, &params, &ledger).unwrap(), &w)),
        );
        report.push(("attention", e));

        let a = block_backward(&x, &params, &w).map_err(err)?;
        let e =
            worst_rel_err(&a, &numeric_grad(&x, |t| weighted_sum(&block_forward(t, &params, &ledger).unwrap(), &w)));
        report.push(("block", e));

        for &(name, e) in &report {
            ensure!(e < 1e-4, "{name} seed {seed}: relative error {e:e}");
            worst = worst.max(e);
        }
        report.clear();
    }
    Ok(format!("5 ops x 3 seeds, worst relative error {worst:.2e}"))
}

fn residual_identity() -> Outcome {
    let mut rng = seeded_rng(9);
    let c = 8;
    let mut params = LayerParams::<f64>::randomized(c, 32, &mut rng).with_heads(2);
    params.output = Linear::zeros(c, c);
    params.mlp.down = Linear::zeros(params.mlp.down.inputs(), c);
    for dims in [[2, 2, 4], [3, 1, 5]] {
        let vox = random_voxels(c, dims, &mut rng);
        let seq = height_partition(&vox, PartitionSpec::column(dims[2])).map_err(err)?;
        let out: HeightSequences<f64> = transformer_block(&seq, &params, &FlopLedger::new()).map_err(err)?;
        let same = out.tensor().data().iter().zip(seq.tensor().data()).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure!(same, "grid {dims:?}: output differs from input");
    }
    Ok("bitwise identity on 2 grids".into())
}

fn projection_and_table() -> Outcome {
    // World x forward, y left, z up; camera x right, y down, z forward.
    let k = [[1000.0, 0.0, 640.0], [0.0, 1000.0, 360.0], [0.0, 0.0, 1.0]];
    let e = [[0.0, -1.0, 0.0, 0.0], [0.0, 0.0, -1.0, 0.0], [1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    let cam = CameraCalib::new(k, e).map_err(err)?;
    let on_axis = cam.project_point([10.0, 0.0, 0.0]).map_err(err)?;
    ensure!(on_axis == (640.0, 360.0), "principal axis projects to {on_axis:?}");
    let offset = cam.project_point([10.0, -1.0, 1.0]).map_err(err)?;
    ensure!(offset == (740.0, 260.0), "unit offset projects to {offset:?}");
    ensure!(
        matches!(cam.project_point([-5.0, 0.0, 0.0]), Err(Error::BehindCamera { .. })),
        "point behind camera was projected"
    );

    let file = CalibrationFile::from_json(&fs::read_to_string(CALIB).map_err(|e| e.to_string())?).map_err(err)?;
    let calib = file.to_calib().map_err(err)?;
    let grid = VoxelGrid::new((0.0, 51.2), (-25.6, 25.6), (-1.0, 3.0), 0.8).map_err(err)?;
    let stride = 16;
    let a = build_mapping_table(&calib, &grid, file.image_dims(), stride).map_err(err)?;
    let b = build_mapping_table(&calib, &grid, file.image_dims(), stride).map_err(err)?;
    ensure!(encode_table(&a) == encode_table(&b), "table bytes differ between builds");

    let (h, w) = file.image_dims();
    let kk = calib.intrinsic();
    let ee = calib.extrinsic();
    let [nx, ny, nz] = grid.dims();
    let mut valid = 0;
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                let p = grid.center(x, y, z);
                let cam_pt: Vec<f64> =
                    (0..3).map(|r| (0..3).map(|j| ee[r][j] * p[j]).sum::<f64>() + ee[r][3]).collect();
                let entry = a.get(x, y, z);
                let visible = cam_pt[2] > 1e-9 && {
                    let u = (kk[0][0] * cam_pt[0] + kk[0][1] * cam_pt[1]) / cam_pt[2] + kk[0][2];
                    let v = kk[1][1] * cam_pt[1] / cam_pt[2] + kk[1][2];
                    let inside = (0.0..w as f64).contains(&u) && (0.0..h as f64).contains(&v);
                    if inside {
                        let (cu, cv) = ((u / stride as f64).floor() as i32, (v / stride as f64).floor() as i32);
                        ensure!(
                            (entry.u, entry.v) == (cu, cv),
                            "voxel ({x},{y},{z}) maps to ({},{}), reprojection gives ({cu},{cv})",
                            entry.u,
                            entry.v
                        );
                    }
                    inside
                };
                if visible {
                    valid += 1;
                } else {
                    ensure!(!entry.is_valid(), "voxel ({x},{y},{z}) is not visible but has an entry");
                }
            }
        }
    }
    ensure!(valid == a.valid_count() && valid > 0, "valid count {valid} vs table {}", a.valid_count());
    Ok(format!("3 hand cases exact, {valid}/{} entries reproject", a.entries().len()))
}

fn bev_properties() -> Outcome {
    let mut rng = seeded_rng(11);
    let mut worst = 0.0f64;
    for dims in [[3, 2, 4], [4, 4, 10], [2, 5, 1]] {
        let c = 6;
        let vox = random_voxels(c, dims, &mut rng);
        let head = Linear::<f64>::seeded(c, 1, 1.0, &mut rng);
        let dist = predict_height_distribution(&vox, &head).map_err(err)?;
        let vox32 = VoxelFeatures::new(vox.tensor().cast::<f32>()).map_err(err)?;
        let dist32 = predict_height_distribution(&vox32, &head.cast()).map_err(err)?;
        let z = dims[2];
        for col in 0..dims[0] * dims[1] {
            let s: f64 = dist.tensor().data()[col * z..(col + 1) * z].iter().sum();
            let s32: f64 = dist32.tensor().data()[col * z..(col + 1) * z].iter().map(|&v| v as f64).sum();
            worst = worst.max((s - 1.0).abs()).max((s32 - 1.0).abs());
        }

        let levels: Vec<usize> = (0..dims[0] * dims[1]).map(|_| rng.random_range(0..z)).collect();
        let one_hot = HeightDistribution::one_hot(dims, &levels).map_err(err)?;
        let bev = compress_to_bev(&vox, &one_hot).map_err(err)?;
        let n = vox.voxel_count();
        for ch in 0..c {
            for (col, &lvl) in levels.iter().enumerate() {
                let got = bev.tensor().data()[ch * dims[0] * dims[1] + col];
                let want = vox.tensor().data()[ch * n + col * z + lvl];
                ensure!(
                    got.to_bits() == want.to_bits(),
                    "one-hot column {col} level {lvl} channel {ch}: {got} vs {want}"
                );
            }
        }
        if z == 1 {
            let bev = compress_to_bev(&vox, &dist).map_err(err)?;
            ensure!(bev.tensor().data() == vox.tensor().data(), "Z=1 compression is not the slice");
            let bev = compress_to_bev(&vox, &HeightDistribution::uniform(dims)).map_err(err)?;
            ensure!(bev.tensor().data() == vox.tensor().data(), "Z=1 uniform compression is not the slice");
        }
    }
    ensure!(worst < 1e-6, "distribution sums off by {worst:e}");
    Ok(format!("sums within {worst:.1e}, one-hot and Z=1 exact"))
}

fn forward_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "hten"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn end_to_end_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let base = RunConfig {
        x_range: [0.0, 51.2],
        y_range: [-25.6, 25.6],
        z_range: [-1.0, 3.0],
        resolution: 0.8,
        channels: 8,
        seed: 42,
        ..RunConfig::default()
    };
    let table_args = BuildTableArgs {
        calib: CALIB.into(),
        stride: None,
        resolution: None,
        image_h: None,
        image_w: None,
        x_range: None,
        y_range: None,
        z_range: None,
        name: "mapping_table.hmap".into(),
    };
    let table = cmd_build_table(&base, &table_args, tmp.path()).map_err(|e| e.to_string())?.path;
    ensure!(read_table(&table).map_err(err)?.valid_count() > 0, "table has no valid entries");
    let args = ForwardArgs {
        table,
        features: None,
        params: None,
        save_params: false,
        bev_mode: None,
        height_embedding: false,
    };
    let mut files = 0;
    for bits in [64, 32] {
        let mut runs = Vec::new();
        for (i, parallel) in [false, false, true, true].into_iter().enumerate() {
            let cfg = RunConfig { parallel, precision: Some(bits), ..base.clone() };
            let out = tmp.path().join(format!("f{bits}_{i}"));
            let summary = cmd_forward(&cfg, &args, &out).map_err(|e| e.to_string())?;
            ensure!(summary.precision == if bits == 64 { Precision::Double } else { Precision::Single }, "precision");
            runs.push((summary.ledger, forward_files(&out)));
        }
        let (ledger0, files0) = &runs[0];
        ensure!(files0.len() == 3, "expected 3 tensor files, got {}", files0.len());
        for (i, (ledger, f)) in runs.iter().enumerate().skip(1) {
            ensure!(ledger == ledger0, "f{bits} run {i}: ledger {ledger:?} vs {ledger0:?}");
            for ((name, a), (_, b)) in f.iter().zip(files0) {
                ensure!(a == b, "f{bits} run {i}: {name} differs");
            }
        }
        files += files0.len();
    }
    Ok(format!("{files} files byte-identical over serial and parallel runs, ledgers equal"))
}
