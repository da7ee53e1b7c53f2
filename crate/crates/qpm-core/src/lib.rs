//! Distances between finitely supported probability measures: the kernel
//! quadratic-form MMD and the eigenvalue-based quantum probability metric
//! (QPM), with analytic gradients, a permutation two-sample test, and an
//! independent truncated-oscillator oracle for verification.
//!
//! The QPM pipeline: join the two supports with signed coefficients, build
//! the Gram matrix of the square-root kernel, factor it (Cholesky with a
//! regularization ladder, general eigensolver as a fallback), take the
//! eigenvalues of `H^T C H`, and report half their absolute sum.

pub mod error;
pub mod fock;
pub mod gradient;
pub mod gram;
pub mod kernels;
pub mod measures;
pub mod metrics;
pub mod twosample;
pub mod verify;

pub use error::{QpmError, Result};
pub use gradient::{qpm_gradient, GradientOptions, GradientReport, GradientTarget};
pub use gram::{build_gram, difference_spectrum, factor_gram, FactorPath, SpectralReport};
pub use kernels::{
    fit_imq_to_mixture, median_heuristic, normalize_kernel, sqrt_kernel, KernelSpec, SqrtStatus,
};
pub use measures::{signed_difference, DiscreteMeasure, PointSet, SignedSupport};
pub use metrics::{
    escape_diagnostic, mmd, mmd_squared_kernel, qpm, EscapeRecord, MetricKind, MetricReport,
    QpmOptions,
};
pub use twosample::{
    permutation_test, repeated_test, PermutationTestResult, RepeatedTestSummary, StatisticKind,
};
