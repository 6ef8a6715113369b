//! Oracle equivalence, gradient checks, and the complexity scaling benchmark.

pub mod equivalence;
pub mod gradcheck;
pub mod oracle;
pub mod report;
pub mod scaling;

pub use equivalence::{divisor_specs, run_equivalence_suite, EquivalenceOptions, SuiteCase, ALGEBRAIC_TOL};
pub use gradcheck::{run_gradcheck_suite, GRAD_STEP, GRAD_TOL};
pub use oracle::brute_force_attention;
pub use report::{CheckResult, Status, SuiteReport};
pub use scaling::{fit_loglog_slope, run_scaling_benchmark, AttentionOp, BenchRecord, BenchReport, ScalingConfig};
