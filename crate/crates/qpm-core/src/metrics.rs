//! Distance values between finitely supported measures.
//!
//! Three quantities share one spectral pipeline:
//!
//! * `mmd`: the kernel quadratic form `[sum_ij c_i c_j k(x_i, x_j)]^(1/2)`,
//!   quadratic work, no factorization.
//! * `qpm`: half the absolute eigenvalue sum of the difference operator,
//!   computed from the square-root kernel's Gram factorization.
//! * `mmd_squared_kernel`: the Euclidean norm of the same spectrum, which
//!   equals the quadratic-form MMD for the squared kernel.
//!
//! For two point masses with base kernel value `k` these reduce to
//! `sqrt(2 - 2k)`, `sqrt(1 - k^2)` and `sqrt(2) * sqrt(1 - k^2)`.

use crate::error::{QpmError, Result};
use crate::gram::{build_gram, difference_spectrum, factor_gram, SpectralReport};
use crate::kernels::{normalize_kernel, sqrt_kernel, KernelSpec, SqrtStatus};
use crate::measures::{signed_difference, DiscreteMeasure, SignedSupport};
use serde::Serialize;

/// Which metric a [`MetricReport`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    MmdBase,
    MmdSquaredKernel,
    Qpm,
    QpmIsometric,
}

/// A computed metric value with its provenance.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub value: f64,
    pub kind: MetricKind,
    pub spectrum: Option<SpectralReport>,
    pub epsilon_used: f64,
    pub kernel_used: String,
    /// Set when a slightly negative quadratic form was clamped to zero.
    pub clamped: bool,
}

/// Options shared by the spectral metrics.
#[derive(Debug, Clone)]
pub struct QpmOptions {
    /// Build the Gram matrix from the closed-form square root of the kernel.
    pub use_sqrt_kernel: bool,
    /// Multiply the result by sqrt(2) so point masses match the squared-kernel MMD.
    pub isometric_scaling: bool,
    /// Merge exactly coincident support rows before factoring. Without this,
    /// coincident rows fall back to the regularization ladder and identical
    /// measures pick up a distance of order epsilon.
    pub merge_duplicates: bool,
    pub merge_tolerance: f64,
    /// Initial regularization for the Cholesky ladder.
    pub epsilon: f64,
    pub max_retries: u32,
}

impl Default for QpmOptions {
    fn default() -> Self {
        Self {
            use_sqrt_kernel: true,
            isometric_scaling: false,
            merge_duplicates: true,
            merge_tolerance: 0.0,
            epsilon: 0.0,
            max_retries: 3,
        }
    }
}

impl QpmOptions {
    pub(crate) fn merge(&self) -> Option<f64> {
        self.merge_duplicates.then_some(self.merge_tolerance)
    }

    /// The kernel actually evaluated: the square root when requested.
    pub(crate) fn eval_spec(&self, spec: &KernelSpec) -> Result<KernelSpec> {
        let spec = normalize_kernel(spec);
        if !self.use_sqrt_kernel {
            return Ok(spec);
        }
        match sqrt_kernel(&spec) {
            SqrtStatus::ValidClosedForm(s) => Ok(s),
            SqrtStatus::Invalid => Err(QpmError::SqrtKernelUnavailable),
        }
    }
}

/// Maximum mean discrepancy with the kernel as given: the square root of the
/// Gram quadratic form. Tiny negative round-off is clamped to zero and
/// flagged. Exactly coincident support rows cancel before the quadratic
/// form, which changes nothing mathematically but lets identical measures
/// come out at zero instead of sqrt(round-off).
pub fn mmd(p: &DiscreteMeasure, q: &DiscreteMeasure, spec: &KernelSpec) -> Result<MetricReport> {
    let spec = normalize_kernel(spec);
    let support = signed_difference(p, q, Some(0.0))?;
    mmd_from_support(&support, &spec)
}

/// Quadratic-form MMD over an explicit signed support.
pub fn mmd_from_support(support: &SignedSupport, spec: &KernelSpec) -> Result<MetricReport> {
    let spec = normalize_kernel(spec);
    let c = support.coefficients();
    let pts = support.points();
    let n = c.len();
    let mut quad = 0.0;
    for i in 0..n {
        quad += c[i] * c[i];
        let row_i = pts.row(i);
        let mut cross = 0.0;
        for (cj, row_j) in c[..i].iter().zip(pts.rows()) {
            cross += cj * spec.eval(row_i, row_j)?;
        }
        quad += 2.0 * c[i] * cross;
    }
    let clamped = quad < 0.0;
    let value = quad.max(0.0).sqrt();
    Ok(MetricReport {
        value,
        kind: MetricKind::MmdBase,
        spectrum: None,
        epsilon_used: 0.0,
        kernel_used: spec.to_string(),
        clamped,
    })
}

/// Spectrum of the difference operator under the options' evaluation kernel.
pub(crate) fn support_spectrum(
    support: &SignedSupport,
    spec: &KernelSpec,
    opts: &QpmOptions,
) -> Result<(SpectralReport, f64, String)> {
    let eval_spec = opts.eval_spec(spec)?;
    let gram = build_gram(support.points(), &eval_spec)?;
    let fact = factor_gram(&gram, opts.epsilon, opts.max_retries)?;
    let spectrum = difference_spectrum(&fact, support.coefficients())?;
    Ok((spectrum, fact.epsilon_used, eval_spec.to_string()))
}

/// Quantum probability metric: half the absolute eigenvalue sum of the
/// difference operator, optionally scaled by sqrt(2).
pub fn qpm(
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
    spec: &KernelSpec,
    opts: &QpmOptions,
) -> Result<MetricReport> {
    let support = signed_difference(p, q, opts.merge())?;
    qpm_from_support(&support, spec, opts)
}

/// QPM over an explicit signed support (no further merging).
pub fn qpm_from_support(
    support: &SignedSupport,
    spec: &KernelSpec,
    opts: &QpmOptions,
) -> Result<MetricReport> {
    let (spectrum, epsilon_used, kernel_used) = support_spectrum(support, spec, opts)?;
    let scale = if opts.isometric_scaling {
        std::f64::consts::SQRT_2
    } else {
        1.0
    };
    Ok(MetricReport {
        value: scale * 0.5 * spectrum.abs_sum(),
        kind: if opts.isometric_scaling {
            MetricKind::QpmIsometric
        } else {
            MetricKind::Qpm
        },
        spectrum: Some(spectrum),
        epsilon_used,
        kernel_used,
        clamped: false,
    })
}

/// MMD in the squared-kernel geometry: the Euclidean norm of the difference
/// operator's spectrum.
pub fn mmd_squared_kernel(
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
    spec: &KernelSpec,
    opts: &QpmOptions,
) -> Result<MetricReport> {
    let support = signed_difference(p, q, opts.merge())?;
    mmd_squared_kernel_from_support(&support, spec, opts)
}

/// Squared-kernel MMD over an explicit signed support.
pub fn mmd_squared_kernel_from_support(
    support: &SignedSupport,
    spec: &KernelSpec,
    opts: &QpmOptions,
) -> Result<MetricReport> {
    let (spectrum, epsilon_used, kernel_used) = support_spectrum(support, spec, opts)?;
    Ok(MetricReport {
        value: spectrum.sq_sum().sqrt(),
        kind: MetricKind::MmdSquaredKernel,
        spectrum: Some(spectrum),
        epsilon_used,
        kernel_used,
        clamped: false,
    })
}

/// One row of the spreading-measure diagnostic.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EscapeRecord {
    /// Grid half-width index; the measure is uniform on `2n + 1` points.
    pub n: usize,
    /// Hilbert-Schmidt norm of the embedded measure,
    /// `[(1/N^2) sum_ij K(x_i, x_j)]^(1/2)`.
    pub hs_norm: f64,
    /// Trace of the embedded measure, `sum_i w_i K(x_i, x_i)`.
    pub trace: f64,
}

/// Embeds the uniform measure on the 1-D grid `{k * spacing : -n <= k <= n}`
/// for every `n` up to `n_points` and reports how the Hilbert-Schmidt norm
/// decays while the trace stays at one. `spec` is the operator-space kernel
/// (the squared kernel of the embedding) and should be normalized.
pub fn escape_diagnostic(spec: &KernelSpec, n_points: usize, spacing: f64) -> Vec<EscapeRecord> {
    assert!(spacing > 0.0, "spacing must be positive");
    let spec = normalize_kernel(spec);
    let mut records = Vec::with_capacity(n_points + 1);
    for n in 0..=n_points {
        let count = 2 * n + 1;
        let points: Vec<f64> = (-(n as i64)..=n as i64)
            .map(|k| k as f64 * spacing)
            .collect();
        let w = 1.0 / count as f64;
        let mut total = 0.0;
        let mut trace = 0.0;
        for i in 0..count {
            trace += w * spec.eval_sq_dist(0.0);
            total += spec.eval_sq_dist(0.0);
            for j in 0..i {
                let d = points[i] - points[j];
                total += 2.0 * spec.eval_sq_dist(d * d);
            }
        }
        records.push(EscapeRecord {
            n,
            hs_norm: (total / (count * count) as f64).sqrt(),
            trace,
        });
    }
    records
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::PointSet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn point_mass(x: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::uniform(PointSet::from_rows(&[x.to_vec()]).unwrap()).unwrap()
    }

    fn random_measure(n: usize, dim: usize, seed: u64) -> DiscreteMeasure {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        DiscreteMeasure::uniform(PointSet::new(data, dim).unwrap()).unwrap()
    }

    #[test]
    fn mmd_point_masses_closed_form() {
        // Base kernel value e^-1 between the points.
        let p = point_mass(&[0.0]);
        let q = point_mass(&[1.0]);
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let rep = mmd(&p, &q, &spec).unwrap();
        let want = (2.0 - 2.0 * (-1.0_f64).exp()).sqrt();
        assert!((rep.value - want).abs() < 1e-14);
    }

    #[test]
    fn mmd_identical_measures_zero() {
        let p = random_measure(6, 2, 1);
        let rep = mmd(&p, &p, &KernelSpec::gaussian(1.0).unwrap()).unwrap();
        assert!(rep.value <= 1e-10);
    }

    #[test]
    fn mmd_matches_brute_force_double_loop() {
        let p = random_measure(8, 2, 2);
        let q = random_measure(8, 2, 3);
        let spec = KernelSpec::gaussian(1.3).unwrap();
        let rep = mmd(&p, &q, &spec).unwrap();

        let support = signed_difference(&p, &q, None).unwrap();
        let c = support.coefficients();
        let mut quad = 0.0;
        for i in 0..c.len() {
            for j in 0..c.len() {
                quad += c[i]
                    * c[j]
                    * spec
                        .eval(support.points().row(i), support.points().row(j))
                        .unwrap();
            }
        }
        assert!((rep.value - quad.max(0.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn qpm_point_masses_closed_form() {
        // Base kernel value K = e^-1, so the square-root kernel gives e^-1/2
        // and QPM = sqrt(1 - e^-1).
        let p = point_mass(&[0.0]);
        let q = point_mass(&[1.0]);
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let rep = qpm(&p, &q, &spec, &QpmOptions::default()).unwrap();
        let want = (1.0 - (-1.0_f64).exp()).sqrt();
        assert!((rep.value - want).abs() < 1e-12);
        assert_eq!(rep.epsilon_used, 0.0);
    }

    #[test]
    fn qpm_identical_measures_zero() {
        let p = random_measure(5, 2, 4);
        let rep = qpm(&p, &p, &KernelSpec::gaussian(1.0).unwrap(), &QpmOptions::default())
            .unwrap();
        assert_eq!(rep.value, 0.0);
    }

    #[test]
    fn qpm_mixture_with_sqrt_kernel_unavailable() {
        let p = point_mass(&[0.0]);
        let q = point_mass(&[1.0]);
        let mix = KernelSpec::gaussian_mixture(vec![(0.5, 1.0), (0.5, 2.0)]).unwrap();
        let err = qpm(&p, &q, &mix, &QpmOptions::default());
        assert!(matches!(err, Err(QpmError::SqrtKernelUnavailable)));
        let opts = QpmOptions {
            use_sqrt_kernel: false,
            ..QpmOptions::default()
        };
        assert!(qpm(&p, &q, &mix, &opts).is_ok());
    }

    #[test]
    fn squared_kernel_mmd_is_sqrt2_times_qpm_for_point_masses() {
        let p = point_mass(&[0.0, 0.0]);
        let q = point_mass(&[0.7, -0.3]);
        let spec = KernelSpec::gaussian(0.9).unwrap();
        let opts = QpmOptions::default();
        let a = qpm(&p, &q, &spec, &opts).unwrap();
        let b = mmd_squared_kernel(&p, &q, &spec, &opts).unwrap();
        assert!((b.value - std::f64::consts::SQRT_2 * a.value).abs() < 1e-12);
    }

    #[test]
    fn isometric_scaling_matches_squared_kernel_mmd_on_point_masses() {
        let p = point_mass(&[0.2]);
        let q = point_mass(&[-0.9]);
        for spec in [
            KernelSpec::gaussian(1.0).unwrap(),
            KernelSpec::laplacian(0.7).unwrap(),
            KernelSpec::generalized_imq(1.3, 2.0).unwrap(),
        ] {
            let iso = QpmOptions {
                isometric_scaling: true,
                ..QpmOptions::default()
            };
            let a = qpm(&p, &q, &spec, &iso).unwrap();
            assert_eq!(a.kind, MetricKind::QpmIsometric);
            let b = mmd_squared_kernel(&p, &q, &spec, &QpmOptions::default()).unwrap();
            assert!((a.value - b.value).abs() < 1e-12, "{spec}");
        }
    }

    #[test]
    fn norm_sandwich_on_random_instances() {
        let opts = QpmOptions::default();
        for seed in 0..20 {
            let p = random_measure(6, 2, 100 + seed);
            let q = random_measure(7, 2, 200 + seed);
            let spec = KernelSpec::gaussian(1.1).unwrap();
            let a = qpm(&p, &q, &spec, &opts).unwrap().value;
            let b = mmd_squared_kernel(&p, &q, &spec, &opts).unwrap().value;
            let n = (p.n_samples() + q.n_samples()) as f64;
            assert!(b <= 2.0 * a + 1e-12);
            assert!(2.0 * a <= n.sqrt() * b + 1e-12);
            // The trace-zero structure tightens the upper bound further.
            assert!(b <= std::f64::consts::SQRT_2 * a + 1e-12);
        }
    }

    #[test]
    fn qpm_value_in_unit_interval() {
        for seed in 0..10 {
            let p = random_measure(4, 1, 300 + seed);
            let q = random_measure(5, 1, 400 + seed);
            let rep = qpm(
                &p,
                &q,
                &KernelSpec::gaussian(0.5).unwrap(),
                &QpmOptions::default(),
            )
            .unwrap();
            assert!(rep.value >= 0.0 && rep.value <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn escape_single_point_is_pure() {
        let recs = escape_diagnostic(&KernelSpec::gaussian(1.0).unwrap(), 2, 10.0);
        assert_eq!(recs[0].n, 0);
        assert!((recs[0].hs_norm - 1.0).abs() < 1e-15);
        assert!((recs[0].trace - 1.0).abs() < 1e-15);
    }

    #[test]
    fn escape_wide_spacing_approaches_inverse_sqrt_n() {
        let recs = escape_diagnostic(&KernelSpec::gaussian(1.0).unwrap(), 20, 10.0);
        for r in &recs {
            let count = (2 * r.n + 1) as f64;
            assert!((r.hs_norm - 1.0 / count.sqrt()).abs() < 1e-12);
            assert!((r.trace - 1.0).abs() < 1e-12);
        }
        for w in recs.windows(2) {
            assert!(w[1].hs_norm <= w[0].hs_norm);
        }
    }
}
