//! Dense tensor kernels with MAC accounting.

pub mod grad;
pub mod ledger;
pub mod ops;
pub mod params;
pub mod rng;
pub mod tensor;

pub use grad::{finite_diff_grad, relative_error};
pub use ledger::{FlopLedger, LedgerSnapshot, Slot};
pub use ops::{gelu, layer_norm, linear, matmul, mlp_forward, softmax_rows};
pub use params::{LayerNormParams, LayerParams, Linear, Mlp};
pub use rng::{normal_tensor, seeded_rng, SeededRng};
pub use tensor::{Precision, Scalar, Tensor};
