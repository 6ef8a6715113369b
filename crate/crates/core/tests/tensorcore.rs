use heightformer_core::tensorcore::{
    layer_norm, matmul, normal_tensor, seeded_rng, softmax_rows, FlopLedger, Slot, Tensor,
};
use proptest::prelude::*;

fn random(dims: &[usize], seed: u64) -> Tensor<f64> {
    normal_tensor(dims, &mut seeded_rng(seed))
}

proptest! {
    #[test]
    fn softmax_ignores_row_shift(rows in 1usize..6, cols in 1usize..8, seed in any::<u64>(), shift in -50.0f64..50.0) {
        let x = random(&[rows, cols], seed);
        let mut shifted = x.clone();
        for (r, row) in shifted.rows_mut().enumerate() {
            for v in row.iter_mut() {
                *v += shift * (r as f64 + 1.0);
            }
        }
        prop_assert!(softmax_rows(&x).max_abs_diff(&softmax_rows(&shifted)).unwrap() < 1e-9);
    }

    #[test]
    fn softmax_rows_are_distributions(rows in 1usize..6, cols in 1usize..8, seed in any::<u64>()) {
        let s = softmax_rows(&random(&[rows, cols], seed).scale(10.0));
        for row in s.rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(row.iter().all(|&p| p > 0.0 && p <= 1.0));
        }
    }

    #[test]
    fn layer_norm_moments(rows in 1usize..5, c in 2usize..16, seed in any::<u64>()) {
        let x = random(&[rows, c], seed);
        let y = layer_norm(&x, &Tensor::full(&[c], 1.0), &Tensor::zeros(&[c]), 1e-15).unwrap();
        for row in y.rows() {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn matmul_charges_mnk(m in 1usize..9, k in 1usize..9, n in 1usize..9, slot_idx in 0usize..3) {
        let slot = [Slot::Qk, Slot::Sv, Slot::Other][slot_idx];
        let ledger = FlopLedger::new();
        ledger.charge(slot, 5);
        let before = ledger.get(slot);
        matmul(&random(&[m, k], 1), &random(&[k, n], 2), slot, &ledger).unwrap();
        prop_assert_eq!(ledger.get(slot) - before, (m * n * k) as u64);
    }
}

#[test]
fn ledger_clear_resets_everything() {
    let ledger = FlopLedger::new();
    ledger.charge(Slot::Qk, 3);
    ledger.charge(Slot::Sv, 4);
    ledger.charge(Slot::Other, 5);
    assert_eq!(ledger.tracked(), 7);
    ledger.clear();
    assert_eq!(ledger.snapshot(), Default::default());
}
