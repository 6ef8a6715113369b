use crate::error::{Error, Result};
use crate::heightattn::{
    complexity_height, complexity_vanilla, height_attention, height_partition, height_reverse, vanilla_attention,
    HeightSequences, PartitionSpec,
};
use crate::tensorcore::{normal_tensor, seeded_rng, FlopLedger, LayerParams, Tensor};
use crate::viewtransform::VoxelFeatures;

use super::oracle::brute_force_attention;
use super::report::{CheckResult, SuiteReport};

/// Tolerance for identities that hold algebraically in 64-bit.
pub const ALGEBRAIC_TOL: f64 = 1e-12;
/// Largest token count the brute-force oracle is run on.
pub const MAX_ORACLE_TOKENS: usize = 512;

/// One `(grid, channels)` case.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteCase {
    pub grid: [usize; 3],
    pub channels: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EquivalenceOptions {
    /// Negative control: replaces the reverse step with an off-by-one gather
    /// so the bijection check must fail.
    pub corrupt_reverse: bool,
}

/// All `(X_h, Y_h, Z_h)` whose extents divide `dims`.
pub fn divisor_specs(dims: [usize; 3]) -> Vec<PartitionSpec> {
    let divisors = |n: usize| (1..=n).filter(move |d| n.is_multiple_of(*d));
    let mut out = Vec::new();
    for x in divisors(dims[0]) {
        for y in divisors(dims[1]) {
            for z in divisors(dims[2]) {
                out.push(PartitionSpec::new(x, y, z));
            }
        }
    }
    out
}

fn corrupted_reverse(seq: &HeightSequences<f64>, spec: PartitionSpec, dims: [usize; 3]) -> Result<VoxelFeatures<f64>> {
    let mut order = spec.gather_order(dims)?;
    order.rotate_left(1);
    let c = seq.channels();
    let n = order.len();
    let mut out = vec![0.0; c * n];
    for (slot, &lin) in order.iter().enumerate() {
        for ch in 0..c {
            out[ch * n + lin] = seq.tensor().data()[slot * c + ch];
        }
    }
    VoxelFeatures::new(Tensor::new(vec![c, dims[0], dims[1], dims[2]], out)?)
}

fn random_case(case: SuiteCase, seed: u64) -> (VoxelFeatures<f64>, LayerParams<f64>) {
    let mut rng = seeded_rng(seed);
    let [x, y, z] = case.grid;
    let vox = VoxelFeatures::new(normal_tensor(&[case.channels, x, y, z], &mut rng)).expect("rank 4");
    let params = LayerParams::randomized(case.channels, 4 * case.channels, &mut rng);
    (vox, params)
}

/// Global-group equivalence, per-column oracle equivalence, ledger/formula
/// agreement, column locality, and partition bijection over every divisor spec.
pub fn run_equivalence_suite(seed: u64, cases: &[SuiteCase], options: EquivalenceOptions) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    for (idx, &case) in cases.iter().enumerate() {
        let tokens: usize = case.grid.iter().product();
        if tokens > MAX_ORACLE_TOKENS {
            return Err(Error::Config(format!(
                "case {:?} has {tokens} tokens, oracle limit is {MAX_ORACLE_TOKENS}",
                case.grid
            )));
        }
        let label = format!("grid={:?} C={}", case.grid, case.channels);
        let (vox, params) = random_case(case, seed.wrapping_add(idx as u64));
        let dims = case.grid;

        // global group equals attention over all flattened tokens
        let global = PartitionSpec::global(dims);
        let ledger = FlopLedger::new();
        let ha = height_attention(&vox, global, &params, &ledger)?;
        let flat =
            VoxelFeatures::from_tokens(&vanilla_attention(&vox.to_tokens(), &params, &FlopLedger::new())?, dims)?;
        checks.push(CheckResult::measured(
            format!("global_group_equivalence {label}"),
            ha.tensor().max_abs_diff(flat.tensor())?,
            ALGEBRAIC_TOL,
        ));
        let macs_ok = ledger.tracked() == complexity_vanilla(dims, case.channels);
        checks.push(
            CheckResult::measured(format!("ledger_vanilla {label}"), if macs_ok { 0.0 } else { 1.0 }, 0.0)
                .with_detail(format!("measured {}", ledger.tracked())),
        );

        // per-column attention against the straight-line oracle
        let column = PartitionSpec::column(dims[2]);
        let ledger = FlopLedger::new();
        let hc = height_attention(&vox, column, &params, &ledger)?;
        let seqs = height_partition(&vox, column)?;
        let mut dev: f64 = 0.0;
        let out_seqs = height_partition(&hc, column)?;
        for i in 0..seqs.count() {
            let want = brute_force_attention(&seqs.sequence(i), &params);
            dev = dev.max(out_seqs.sequence(i).max_abs_diff(&want)?);
        }
        checks.push(CheckResult::measured(format!("column_oracle_equivalence {label}"), dev, ALGEBRAIC_TOL));
        let want = complexity_height(dims, column, case.channels)?;
        checks.push(
            CheckResult::measured(
                format!("ledger_height {label}"),
                if ledger.tracked() == want { 0.0 } else { 1.0 },
                0.0,
            )
            .with_detail(format!("measured {} predicted {want}", ledger.tracked())),
        );

        // perturbing one column leaves the others untouched
        if dims[0] * dims[1] > 1 {
            let mut bumped = vox.clone();
            let n = vox.voxel_count();
            for ch in 0..case.channels {
                for zz in 0..dims[2] {
                    bumped.tensor_mut().data_mut()[ch * n + zz] += 1.0;
                }
            }
            let hb = height_attention(&bumped, column, &params, &FlopLedger::new())?;
            let mut leaked: f64 = 0.0;
            for ch in 0..case.channels {
                for lin in dims[2]..n {
                    let i = ch * n + lin;
                    leaked = leaked.max((hb.tensor().data()[i] - hc.tensor().data()[i]).abs());
                }
            }
            checks.push(CheckResult::measured(format!("column_locality {label}"), leaked, 0.0));
        }

        // reverse ∘ partition is the identity, bitwise
        let mut worst: f64 = 0.0;
        let mut first_bad = None;
        for spec in divisor_specs(dims) {
            let seq = height_partition(&vox, spec)?;
            let back = if options.corrupt_reverse {
                corrupted_reverse(&seq, spec, dims)?
            } else {
                height_reverse(&seq, spec, dims)?
            };
            let bitwise = back.tensor().data().iter().zip(vox.tensor().data()).all(|(a, b)| a.to_bits() == b.to_bits());
            if !bitwise {
                worst = worst.max(back.tensor().max_abs_diff(vox.tensor())?.max(f64::MIN_POSITIVE));
                first_bad.get_or_insert(spec);
            }
        }
        let mut check = CheckResult::measured(format!("partition_bijection {label}"), worst, 0.0);
        if let Some(s) = first_bad {
            check = check.with_detail(format!("first failing spec {:?}", s.as_array()));
        }
        checks.push(check);
    }
    Ok(SuiteReport::new("equivalence", checks))
}
