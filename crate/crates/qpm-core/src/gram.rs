//! Gram matrix assembly, regularized Cholesky factorization, and the
//! spectrum of the signed difference operator.
//!
//! The difference operator over a joined support with coefficients `c` has
//! the same nonzero eigenvalues as `C G`, with `C = diag(c)` and `G` the
//! Gram matrix. When `G + eps I = H H^T` factors, those eigenvalues are
//! computed from the symmetric matrix `H^T C H`; otherwise a general
//! eigensolver handles `C G` directly and the imaginary round-off is
//! discarded.

use crate::error::{QpmError, Result};
use crate::kernels::KernelSpec;
use crate::measures::{neumaier_sum, PointSet};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Absolute bound on the eigenvalue sum before the spectrum is declared
/// unusable. The sum is a multiple of the coefficient sum, which is zero.
pub const SPECTRAL_DRIFT_TOL: f64 = 1e-8;

/// Symmetry tolerance for matrices accepted by [`factor_gram`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// First regularization step after a failed unregularized factorization.
pub const EPSILON_LADDER_BASE: f64 = 1e-4;

/// Which route produced a factorization or spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorPath {
    Cholesky,
    GeneralEigenFallback,
}

/// A Gram matrix with its (possibly regularized) Cholesky factor.
#[derive(Debug, Clone)]
pub struct GramFactorization {
    pub gram: DMatrix<f64>,
    /// Lower-triangular `H` with `gram + epsilon_used * I = H H^T`.
    /// Absent on the fallback path.
    pub factor: Option<DMatrix<f64>>,
    pub epsilon_used: f64,
    pub path: FactorPath,
}

/// Eigenvalues of the difference operator, sorted descending.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub eigenvalues: Vec<f64>,
    /// Eigenvalue sum before re-centering, as a drift diagnostic.
    pub sum_check: f64,
    /// Largest imaginary magnitude discarded (zero on the Cholesky path).
    pub discarded_imag_max: f64,
    pub path: FactorPath,
}

impl SpectralReport {
    fn empty(path: FactorPath) -> Self {
        Self {
            eigenvalues: Vec::new(),
            sum_check: 0.0,
            discarded_imag_max: 0.0,
            path,
        }
    }

    /// `sum_i |lambda_i|`
    pub fn abs_sum(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |acc, l| acc + l.abs())
    }

    /// `sum_i lambda_i^2`
    pub fn sq_sum(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |acc, l| acc + l * l)
    }
}

/// Kernel matrix over the rows of `points`, assembled on the lower triangle
/// and mirrored, with an exactly unit diagonal. The spec must be normalized.
pub fn build_gram(points: &PointSet, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    let n = points.n_samples();
    let mut g = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        g[(i, i)] = 1.0;
        for j in 0..i {
            let v = spec.eval(points.row(i), points.row(j))?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// Attempts Cholesky on `gram + eps I`, walking an epsilon ladder on
/// failure: the initial `epsilon` (zero by default), then 1e-4, then ten
/// times the previous value per retry. When every attempt fails the result
/// carries `path = GeneralEigenFallback` and no factor.
pub fn factor_gram(
    gram: &DMatrix<f64>,
    epsilon: f64,
    max_retries: u32,
) -> Result<GramFactorization> {
    let n = gram.nrows();
    if gram.ncols() != n {
        return Err(QpmError::DimensionMismatch {
            expected: n,
            got: gram.ncols(),
        });
    }
    let max_asym = max_asymmetry(gram);
    if max_asym > SYMMETRY_TOL {
        return Err(QpmError::NonSymmetric { max_asym });
    }

    let mut eps = epsilon;
    for attempt in 0..=max_retries {
        let mut shifted = gram.clone();
        for i in 0..n {
            shifted[(i, i)] += eps;
        }
        if let Some(chol) = nalgebra::linalg::Cholesky::new(shifted) {
            return Ok(GramFactorization {
                gram: gram.clone(),
                factor: Some(chol.unpack()),
                epsilon_used: eps,
                path: FactorPath::Cholesky,
            });
        }
        if attempt < max_retries {
            eps = if eps == 0.0 {
                EPSILON_LADDER_BASE
            } else {
                eps * 10.0
            };
        }
    }
    Ok(GramFactorization {
        gram: gram.clone(),
        factor: None,
        epsilon_used: 0.0,
        path: FactorPath::GeneralEigenFallback,
    })
}

/// Spectrum of the difference operator for the given coefficients.
///
/// On the Cholesky path this is the symmetric eigenproblem of `H^T C H`; on
/// the fallback path it is the general eigenproblem of `C G`. Both paths
/// enforce `|sum lambda| <= 1e-8` (the trace of the difference operator is
/// zero) and re-center the spectrum by its mean when within tolerance.
pub fn difference_spectrum(fact: &GramFactorization, coefficients: &[f64]) -> Result<SpectralReport> {
    let n = fact.gram.nrows();
    if coefficients.len() != n {
        return Err(QpmError::DimensionMismatch {
            expected: n,
            got: coefficients.len(),
        });
    }
    if n == 0 {
        return Ok(SpectralReport::empty(fact.path));
    }
    match (&fact.factor, fact.path) {
        (Some(h), FactorPath::Cholesky) => {
            let m = hermitian_difference_matrix(h, coefficients);
            let eigs = m.symmetric_eigenvalues();
            finish_spectrum(eigs.iter().copied().collect(), 0.0, FactorPath::Cholesky)
        }
        _ => general_spectrum(&fact.gram, coefficients),
    }
}

/// `H^T C H`, symmetrized to remove gemm round-off.
pub(crate) fn hermitian_difference_matrix(
    h: &DMatrix<f64>,
    coefficients: &[f64],
) -> DMatrix<f64> {
    let n = h.nrows();
    let mut ch = h.clone();
    for i in 0..n {
        let c = coefficients[i];
        for j in 0..n {
            ch[(i, j)] *= c;
        }
    }
    let m = h.transpose() * ch;
    let mt = m.transpose();
    0.5 * (m + mt)
}

/// Fallback spectrum: eigenvalues of the non-Hermitian `C G`, sorted by real
/// part descending with ties broken by the discarded imaginary magnitude,
/// ascending.
pub fn general_spectrum(gram: &DMatrix<f64>, coefficients: &[f64]) -> Result<SpectralReport> {
    let n = gram.nrows();
    if coefficients.len() != n {
        return Err(QpmError::DimensionMismatch {
            expected: n,
            got: coefficients.len(),
        });
    }
    if n == 0 {
        return Ok(SpectralReport::empty(FactorPath::GeneralEigenFallback));
    }
    let mut cg = gram.clone();
    for i in 0..n {
        let c = coefficients[i];
        for j in 0..n {
            cg[(i, j)] *= c;
        }
    }
    let eigs: DVector<nalgebra::Complex<f64>> = cg.complex_eigenvalues();
    let mut pairs: Vec<(f64, f64)> = eigs.iter().map(|z| (z.re, z.im.abs())).collect();
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.partial_cmp(&b.1).unwrap())
    });
    let discarded = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
    let reals: Vec<f64> = pairs.into_iter().map(|p| p.0).collect();
    finish_spectrum(reals, discarded, FactorPath::GeneralEigenFallback)
}

fn finish_spectrum(
    mut eigenvalues: Vec<f64>,
    discarded_imag_max: f64,
    path: FactorPath,
) -> Result<SpectralReport> {
    eigenvalues.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let sum = neumaier_sum(eigenvalues.iter().copied());
    if sum.abs() > SPECTRAL_DRIFT_TOL {
        return Err(QpmError::SpectralDrift {
            sum,
            tol: SPECTRAL_DRIFT_TOL,
        });
    }
    let mean = sum / eigenvalues.len() as f64;
    for l in &mut eigenvalues {
        *l -= mean;
    }
    Ok(SpectralReport {
        eigenvalues,
        sum_check: sum,
        discarded_imag_max,
        path,
    })
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}
