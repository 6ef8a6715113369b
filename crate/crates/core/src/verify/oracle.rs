//! Straight-line reference evaluations that share no code with the kernels.

use crate::tensorcore::{LayerParams, Tensor};

type Mat = Vec<Vec<f64>>;

fn to_mat(t: &Tensor<f64>) -> Mat {
    t.rows().map(<[f64]>::to_vec).collect()
}

#[allow(clippy::needless_range_loop)]
fn affine(x: &Mat, w: &Tensor<f64>, b: &Tensor<f64>) -> Mat {
    let (inputs, outputs) = (w.dims()[0], w.dims()[1]);
    x.iter()
        .map(|row| {
            (0..outputs)
                .map(|j| {
                    let mut s = b.data()[j];
                    for i in 0..inputs {
                        s += row[i] * w.data()[i * outputs + j];
                    }
                    s
                })
                .collect()
        })
        .collect()
}

/// Single- or multi-head `softmax(QKᵀ/√d)·V` evaluated element by element.
pub fn brute_force_attention(tokens: &Tensor<f64>, params: &LayerParams<f64>) -> Tensor<f64> {
    let x = to_mat(tokens);
    let q = affine(&x, &params.query.weight, &params.query.bias);
    let k = affine(&x, &params.key.weight, &params.key.bias);
    let v = affine(&x, &params.value.weight, &params.value.bias);
    let n = x.len();
    let c = params.query.weight.dims()[1];
    let d = c / params.heads;
    let mut out = vec![0.0; n * c];
    for h in 0..params.heads {
        let cols = h * d..(h + 1) * d;
        for i in 0..n {
            let logits: Vec<f64> =
                (0..n).map(|j| cols.clone().map(|m| q[i][m] * k[j][m]).sum::<f64>() / (d as f64).sqrt()).collect();
            let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
            let z: f64 = weights.iter().sum();
            for m in cols.clone() {
                out[i * c + m] = (0..n).map(|j| weights[j] / z * v[j][m]).sum();
            }
        }
    }
    Tensor::new(vec![n, c], out).expect("oracle dims")
}
