use crate::error::Result;
use crate::heightattn::{
    attention_backward, height_partition, transformer_block, transformer_block_backward, vanilla_attention,
    HeightSequences, PartitionSpec,
};
use crate::tensorcore::grad::{layer_norm_backward, mlp_backward, softmax_rows_backward};
use crate::tensorcore::{
    finite_diff_grad, layer_norm, mlp_forward, normal_tensor, relative_error, seeded_rng, softmax_rows, FlopLedger,
    LayerParams, SeededRng, Tensor,
};
use crate::viewtransform::VoxelFeatures;

use super::equivalence::SuiteCase;
use super::report::{CheckResult, SuiteReport};

pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

/// Compares `analytic` against central differences of `x ↦ Σ r ⊙ op(x)`.
fn compare<F>(
    name: String,
    x: &Tensor<f64>,
    weights: &Tensor<f64>,
    analytic: &Tensor<f64>,
    op: F,
) -> Result<CheckResult>
where
    F: Fn(&Tensor<f64>) -> Result<Tensor<f64>>,
{
    let numeric = finite_diff_grad(|t| op(t)?.dot(weights), x, GRAD_STEP)?;
    let (worst, at) = analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &f)| relative_error(a, f))
        .enumerate()
        .fold((0.0, 0), |(w, wi), (i, e)| if e > w { (e, i) } else { (w, wi) });
    let check = CheckResult::measured(name, worst, GRAD_TOL);
    Ok(if check.max_deviation > GRAD_TOL { check.with_detail(format!("worst element {at}")) } else { check })
}

fn rand(dims: &[usize], rng: &mut SeededRng) -> Tensor<f64> {
    normal_tensor(dims, rng)
}

/// Analytic derivatives of softmax, layer norm, MLP, attention and the full
/// transformer block against central differences (64-bit, `h = 1e-5`).
pub fn run_gradcheck_suite(seed: u64, cases: &[SuiteCase]) -> Result<SuiteReport> {
    let mut rng = seeded_rng(seed);
    let mut checks = Vec::new();

    let x = rand(&[4, 4], &mut rng);
    let r = rand(&[4, 4], &mut rng);
    let analytic = softmax_rows_backward(&softmax_rows(&x), &r)?;
    checks.push(compare("softmax 4x4".into(), &x, &r, &analytic, |t| Ok(softmax_rows(t)))?);

    let x = rand(&[3, 6], &mut rng);
    let r = rand(&[3, 6], &mut rng);
    let gain = rand(&[6], &mut rng);
    let bias = rand(&[6], &mut rng);
    let eps = 1e-5;
    let analytic = layer_norm_backward(&x, &gain, eps, &r)?;
    checks.push(compare("layer_norm 3x6".into(), &x, &r, &analytic, |t| layer_norm(t, &gain, &bias, eps))?);
    checks.push(CheckResult::skipped("layer_norm constant input", "zero variance"));

    for case in cases {
        let c = case.channels;
        let label = format!("grid={:?} C={c}", case.grid);
        let params = LayerParams::randomized(c, 4 * c, &mut rng);
        let tokens: usize = case.grid.iter().product();

        let x = rand(&[tokens, c], &mut rng);
        let r = rand(&[tokens, c], &mut rng);
        let analytic = mlp_backward(&x, &params.mlp, &r)?;
        checks.push(compare(format!("mlp {label}"), &x, &r, &analytic, |t| {
            mlp_forward(t, &params.mlp, &FlopLedger::new())
        })?);

        let analytic = attention_backward(&x, &params, &r)?;
        checks.push(compare(format!("attention {label}"), &x, &r, &analytic, |t| {
            vanilla_attention(t, &params, &FlopLedger::new())
        })?);
        if c % 2 == 0 && c > 1 {
            let two = params.clone().with_heads(2);
            let analytic = attention_backward(&x, &two, &r)?;
            checks.push(compare(format!("attention heads=2 {label}"), &x, &r, &analytic, |t| {
                vanilla_attention(t, &two, &FlopLedger::new())
            })?);
        }

        let [gx, gy, gz] = case.grid;
        let vox = VoxelFeatures::new(rand(&[c, gx, gy, gz], &mut rng))?;
        let seq = height_partition(&vox, PartitionSpec::column(gz))?;
        let r = HeightSequences::new(rand(seq.tensor().dims(), &mut rng))?;
        let analytic = transformer_block_backward(&seq, &params, &r)?;
        let dims = seq.tensor().dims().to_vec();
        checks.push(compare(format!("transformer_block {label}"), seq.tensor(), r.tensor(), analytic.tensor(), |t| {
            let s = HeightSequences::new(t.clone().reshape(&dims)?)?;
            Ok(transformer_block(&s, &params, &FlopLedger::new())?.into_tensor())
        })?);
    }
    Ok(SuiteReport::new("gradcheck", checks))
}
