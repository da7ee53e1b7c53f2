//! Independent ground truth in a truncated oscillator basis.
//!
//! A coherent state with parameter vector `z` has occupation-number
//! amplitudes `exp(-|z|^2/2) z^n / sqrt(n!)` over multi-indices `n`. Their
//! inner products reproduce `exp[-(|w|^2 + |z|^2 - 2 conj(w) . z) / 2]`, and
//! the squared magnitude of that is the unit Gaussian kernel, so a signed
//! combination of coherent projectors realizes the difference operator of
//! two measures concretely. Truncating every mode at a finite occupation
//! turns the operator into an ordinary dense matrix whose eigenvalues give
//! the trace distance directly, with a Poisson tail bound on the truncation
//! error.
//!
//! Support points enter with one oscillator mode per real coordinate and a
//! real parameter, after recentering and rescaling by `1/sqrt(length_scale)`
//! so the base kernel becomes the unit Gaussian. Real parameters keep the
//! truncated Gram identical to the square-root-kernel Gram of the fast
//! path; packing two coordinates into one complex mode would instead
//! introduce pair-dependent phases that shift the trace spectrum.

use crate::error::{QpmError, Result};
use crate::kernels::KernelSpec;
use crate::measures::SignedSupport;
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Hard cap on the truncated basis dimension `(cutoff + 1)^modes`.
pub const MAX_DENSE_DIM: usize = 4096;

/// Default per-mode occupation cutoff.
pub const DEFAULT_CUTOFF: usize = 40;

/// A coherent state truncated at a per-mode occupation cutoff.
#[derive(Debug, Clone)]
pub struct TruncatedCoherentState {
    pub z: Vec<Complex64>,
    pub cutoff: usize,
    /// Flat amplitude tensor over `{0..=cutoff}^modes`, last mode fastest.
    pub amplitudes: Vec<Complex64>,
}

impl TruncatedCoherentState {
    pub fn norm_sq(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Analytic Poisson-tail bound on `1 - |norm|^2`.
    pub fn tail_bound(&self) -> f64 {
        norm_tail_bound(&self.z, self.cutoff)
    }
}

/// Dense matrix of the embedded difference operator, with diagnostics.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub matrix: DMatrix<f64>,
    pub trace: f64,
    pub basis_dim: usize,
}

/// Trace distance from the dense oracle.
#[derive(Debug, Clone, Copy)]
pub struct DenseTraceDistance {
    pub value: f64,
    /// Upper estimate of the truncation error on the value.
    pub truncation_bound: f64,
    pub basis_dim: usize,
}

fn checked_dim(modes: usize, cutoff: usize) -> Result<usize> {
    if cutoff == 0 {
        return Err(QpmError::CutoffTooLarge { dim: 0, max: MAX_DENSE_DIM });
    }
    let mut dim: usize = 1;
    for _ in 0..modes {
        dim = match dim.checked_mul(cutoff + 1) {
            Some(d) if d <= MAX_DENSE_DIM => d,
            _ => {
                return Err(QpmError::CutoffTooLarge {
                    dim: usize::MAX,
                    max: MAX_DENSE_DIM,
                })
            }
        };
    }
    Ok(dim)
}

/// Builds the truncated coherent state for a complex parameter vector.
pub fn coherent_state(z: &[Complex64], cutoff: usize) -> Result<TruncatedCoherentState> {
    checked_dim(z.len(), cutoff)?;
    let mut amplitudes = vec![Complex64::new(1.0, 0.0)];
    for zj in z {
        // Per-mode vector exp(-|z_j|^2 / 2) z_j^n / sqrt(n!), by recurrence.
        let mut mode = Vec::with_capacity(cutoff + 1);
        let mut a = Complex64::new((-0.5 * zj.norm_sqr()).exp(), 0.0);
        mode.push(a);
        for n in 1..=cutoff {
            a *= zj / (n as f64).sqrt();
            mode.push(a);
        }
        let mut next = Vec::with_capacity(amplitudes.len() * mode.len());
        for acc in &amplitudes {
            for m in &mode {
                next.push(acc * m);
            }
        }
        amplitudes = next;
    }
    Ok(TruncatedCoherentState {
        z: z.to_vec(),
        cutoff,
        amplitudes,
    })
}

/// Truncated inner product of two coherent states.
pub fn truncated_inner(
    w: &TruncatedCoherentState,
    z: &TruncatedCoherentState,
) -> Result<Complex64> {
    if w.amplitudes.len() != z.amplitudes.len() {
        return Err(QpmError::DimensionMismatch {
            expected: w.amplitudes.len(),
            got: z.amplitudes.len(),
        });
    }
    Ok(w.amplitudes
        .iter()
        .zip(&z.amplitudes)
        .map(|(a, b)| a.conj() * b)
        .sum())
}

/// Closed-form coherent-state inner product
/// `exp[-(|w|^2 + |z|^2 - 2 conj(w) . z) / 2]`.
pub fn coherent_inner_closed_form(w: &[Complex64], z: &[Complex64]) -> Complex64 {
    let w_sq: f64 = w.iter().map(|c| c.norm_sqr()).sum();
    let z_sq: f64 = z.iter().map(|c| c.norm_sqr()).sum();
    let cross: Complex64 = w.iter().zip(z).map(|(a, b)| a.conj() * b).sum();
    (-(Complex64::new(0.5 * (w_sq + z_sq), 0.0) - cross)).exp()
}

/// Poisson tail bound across modes: `sum_j P(Poisson(|z_j|^2) > cutoff)`,
/// each term estimated by a geometric-series majorant.
pub fn norm_tail_bound(z: &[Complex64], cutoff: usize) -> f64 {
    z.iter()
        .map(|zj| poisson_tail(zj.norm_sqr(), cutoff))
        .sum()
}

fn poisson_tail(mu: f64, cutoff: usize) -> f64 {
    if mu == 0.0 {
        return 0.0;
    }
    // term = exp(-mu) mu^(cutoff+1) / (cutoff+1)!
    let mut term = (-mu).exp();
    for k in 1..=cutoff + 1 {
        term *= mu / k as f64;
    }
    let ratio = mu / (cutoff + 2) as f64;
    if ratio < 1.0 {
        term / (1.0 - ratio)
    } else {
        1.0
    }
}

/// Maximum deviation of the truncated `|<w|z>|^2` from the Gaussian kernel
/// `exp(-|w - z|^2)` over the given parameter pairs.
pub fn isometry_check(pairs: &[(Vec<Complex64>, Vec<Complex64>)], cutoff: usize) -> Result<f64> {
    let mut worst = 0.0_f64;
    for (w, z) in pairs {
        if w.len() != z.len() {
            return Err(QpmError::DimensionMismatch {
                expected: w.len(),
                got: z.len(),
            });
        }
        let sw = coherent_state(w, cutoff)?;
        let sz = coherent_state(z, cutoff)?;
        let overlap = truncated_inner(&sw, &sz)?.norm_sqr();
        let dist_sq: f64 = w.iter().zip(z).map(|(a, b)| (a - b).norm_sqr()).sum();
        worst = worst.max((overlap - (-dist_sq).exp()).abs());
    }
    Ok(worst)
}

/// Mode parameters for a support: recenter the coordinate mean to the origin
/// and rescale by `1/sqrt(length_scale)`, one real mode per coordinate.
/// Neither step changes pairwise distances in the rescaled geometry beyond
/// what the kernel rescaling itself requires.
pub fn embed_support(support: &SignedSupport, length_scale: f64) -> Vec<Vec<f64>> {
    let pts = support.points();
    let n = pts.n_samples();
    let dim = pts.dim();
    let mut mean = vec![0.0; dim];
    for row in pts.rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n.max(1) as f64;
    }
    let scale = 1.0 / length_scale.sqrt();
    pts.rows()
        .map(|row| {
            row.iter()
                .zip(&mean)
                .map(|(x, m)| (x - m) * scale)
                .collect()
        })
        .collect()
}

/// Builds the dense difference operator `sum_i c_i |z_i><z_i|` in the
/// truncated basis. Real mode parameters make every amplitude real, so the
/// matrix is real symmetric by construction.
pub fn dense_difference_operator(
    mode_params: &[Vec<f64>],
    coefficients: &[f64],
    cutoff: usize,
) -> Result<DenseOperator> {
    let modes = mode_params.first().map(|p| p.len()).unwrap_or(0);
    let dim = checked_dim(modes, cutoff)?;
    let mut matrix = DMatrix::<f64>::zeros(dim, dim);
    let mut trace = 0.0;
    for (params, &c) in mode_params.iter().zip(coefficients) {
        let z: Vec<Complex64> = params.iter().map(|x| Complex64::new(*x, 0.0)).collect();
        let state = coherent_state(&z, cutoff)?;
        let amps: Vec<f64> = state.amplitudes.iter().map(|a| a.re).collect();
        // One triangle, mirrored, so the matrix is symmetric to the bit.
        for (i, &ai) in amps.iter().enumerate() {
            for (j, &aj) in amps.iter().enumerate().take(i + 1) {
                let v = c * (ai * aj);
                matrix[(i, j)] += v;
                if i != j {
                    matrix[(j, i)] += v;
                }
            }
            trace += c * (ai * ai);
        }
    }
    Ok(DenseOperator {
        matrix,
        trace,
        basis_dim: dim,
    })
}

/// Trace distance `(1/2) sum |lambda_i|` of the embedded difference
/// operator, by dense symmetric eigendecomposition in the truncated basis.
/// The base kernel must be Gaussian; points are recentered and rescaled so
/// the kernel matches the unit-Gaussian coherent geometry.
pub fn dense_trace_distance(
    support: &SignedSupport,
    spec_base: &KernelSpec,
    cutoff: usize,
) -> Result<DenseTraceDistance> {
    let KernelSpec::Gaussian { length_scale } = spec_base else {
        return Err(QpmError::NonGaussianBase);
    };
    if support.is_empty() {
        return Ok(DenseTraceDistance {
            value: 0.0,
            truncation_bound: 0.0,
            basis_dim: 0,
        });
    }
    let mode_params = embed_support(support, *length_scale);
    let coeffs = support.coefficients();
    let op = dense_difference_operator(&mode_params, coeffs, cutoff)?;

    let coeff_sum: f64 = coeffs.iter().sum();
    let mut truncation_bound = 0.0;
    for (params, &c) in mode_params.iter().zip(coeffs) {
        let z: Vec<Complex64> = params.iter().map(|x| Complex64::new(*x, 0.0)).collect();
        let tail = norm_tail_bound(&z, cutoff);
        truncation_bound += 2.0 * c.abs() * tail.sqrt();
    }
    debug_assert!(
        (op.trace - coeff_sum).abs() <= truncation_bound + 1e-12,
        "dense trace {} drifted from coefficient sum {}",
        op.trace,
        coeff_sum
    );

    let eigs = op.matrix.symmetric_eigenvalues();
    let value = 0.5 * eigs.iter().map(|l| l.abs()).sum::<f64>();
    Ok(DenseTraceDistance {
        value,
        truncation_bound,
        basis_dim: op.basis_dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{signed_difference, DiscreteMeasure, PointSet};
    use crate::metrics::{qpm, QpmOptions};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn vacuum_state_is_pure_ground() {
        let s = coherent_state(&[c(0.0, 0.0)], 10).unwrap();
        assert_eq!(s.amplitudes[0], c(1.0, 0.0));
        for a in &s.amplitudes[1..] {
            assert_eq!(*a, c(0.0, 0.0));
        }
    }

    #[test]
    fn unit_parameter_normalizes_at_cutoff_thirty() {
        let s = coherent_state(&[c(1.0, 0.0)], 30).unwrap();
        assert!((s.norm_sq() - 1.0).abs() < 1e-12);
        assert!(s.norm_sq() >= 1.0 - s.tail_bound());
    }

    #[test]
    fn truncated_inner_matches_closed_form() {
        let pairs = [
            (vec![c(0.3, 0.7)], vec![c(-0.5, 0.2)]),
            (vec![c(1.5, -1.0)], vec![c(0.8, 1.1)]),
            (vec![c(2.0, 0.0)], vec![c(-1.0, 1.5)]),
        ];
        for (w, z) in &pairs {
            let sw = coherent_state(w, 40).unwrap();
            let sz = coherent_state(z, 40).unwrap();
            let got = truncated_inner(&sw, &sz).unwrap();
            let want = coherent_inner_closed_form(w, z);
            assert!((got - want).norm() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn isometry_trivial_pair() {
        let z = vec![c(1.0, -0.5)];
        let dev = isometry_check(&[(z.clone(), z)], 40).unwrap();
        assert!(dev <= 1e-12);
    }

    #[test]
    fn isometry_fails_under_deliberate_undertruncation() {
        let pair = (vec![c(2.0, 0.0)], vec![c(-2.0, 0.0)]);
        let dev = isometry_check(&[pair], 10).unwrap();
        assert!(dev > 1e-6, "expected a visible truncation error, got {dev}");
    }

    #[test]
    fn cutoff_guard_rejects_oversized_basis() {
        let z = vec![c(0.0, 0.0); 3];
        assert!(matches!(
            coherent_state(&z, 40),
            Err(QpmError::CutoffTooLarge { .. })
        ));
    }

    #[test]
    fn two_point_mass_trace_distance_closed_form() {
        // Mode-parameter distance 1 after rescaling: value sqrt(1 - e^-1).
        let p = DiscreteMeasure::uniform(PointSet::from_rows(&[vec![0.0]]).unwrap()).unwrap();
        let q = DiscreteMeasure::uniform(PointSet::from_rows(&[vec![1.0]]).unwrap()).unwrap();
        let support = signed_difference(&p, &q, Some(0.0)).unwrap();
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let d = dense_trace_distance(&support, &spec, 40).unwrap();
        let want = (1.0 - (-1.0_f64).exp()).sqrt();
        assert!((d.value - want).abs() < 1e-10, "{} vs {want}", d.value);
    }

    #[test]
    fn dense_operator_is_symmetric_with_balanced_trace() {
        let params = vec![vec![0.3, -0.8], vec![-0.5, 0.2], vec![1.1, 0.4]];
        let coeffs = [0.6, 0.4, -1.0];
        let op = dense_difference_operator(&params, &coeffs, 12).unwrap();
        for i in 0..op.basis_dim {
            for j in 0..i {
                assert_eq!(op.matrix[(i, j)].to_bits(), op.matrix[(j, i)].to_bits());
            }
        }
        let tail: f64 = params
            .iter()
            .zip(&coeffs)
            .map(|(p, c)| {
                let z: Vec<Complex64> = p.iter().map(|x| Complex64::new(*x, 0.0)).collect();
                c.abs() * norm_tail_bound(&z, 12)
            })
            .sum();
        assert!((op.trace - 0.0).abs() <= tail + 1e-12);
    }

    #[test]
    fn identical_measures_give_zero() {
        let p = DiscreteMeasure::uniform(
            PointSet::from_rows(&[vec![0.1, 0.4], vec![-0.7, 0.2]]).unwrap(),
        )
        .unwrap();
        let support = signed_difference(&p, &p, Some(0.0)).unwrap();
        let d = dense_trace_distance(&support, &KernelSpec::gaussian(1.0).unwrap(), 30).unwrap();
        assert!(d.value <= 1e-10);
    }

    #[test]
    fn non_gaussian_base_rejected() {
        let p = DiscreteMeasure::uniform(PointSet::from_rows(&[vec![0.0]]).unwrap()).unwrap();
        let q = DiscreteMeasure::uniform(PointSet::from_rows(&[vec![1.0]]).unwrap()).unwrap();
        let support = signed_difference(&p, &q, None).unwrap();
        assert!(matches!(
            dense_trace_distance(&support, &KernelSpec::laplacian(1.0).unwrap(), 20),
            Err(QpmError::NonGaussianBase)
        ));
    }

    #[test]
    fn oracle_agrees_with_fast_path_small_instance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let rows =
            |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
                (0..6)
                    .map(|_| (0..2).map(|_| rng.random_range(-1.2..1.2)).collect())
                    .collect()
            };
        let p = DiscreteMeasure::uniform(PointSet::from_rows(&rows(&mut rng)).unwrap()).unwrap();
        let q = DiscreteMeasure::uniform(PointSet::from_rows(&rows(&mut rng)).unwrap()).unwrap();
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let fast = qpm(&p, &q, &spec, &QpmOptions::default()).unwrap().value;
        let support = signed_difference(&p, &q, Some(0.0)).unwrap();
        let dense = dense_trace_distance(&support, &spec, 40).unwrap();
        assert!(
            (dense.value - fast).abs() <= 1e-6,
            "dense {} vs fast {fast}",
            dense.value
        );
    }

    #[test]
    fn truncation_error_shrinks_with_cutoff() {
        let p = DiscreteMeasure::uniform(
            PointSet::from_rows(&[vec![1.9], vec![0.3]]).unwrap(),
        )
        .unwrap();
        let q = DiscreteMeasure::uniform(
            PointSet::from_rows(&[vec![-1.8], vec![-0.4]]).unwrap(),
        )
        .unwrap();
        let support = signed_difference(&p, &q, Some(0.0)).unwrap();
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let v: Vec<f64> = [20, 30, 40]
            .iter()
            .map(|&cut| dense_trace_distance(&support, &spec, cut).unwrap().value)
            .collect();
        let d1 = (v[0] - v[1]).abs();
        let d2 = (v[1] - v[2]).abs();
        assert!(
            d2 <= d1 / 10.0 + 1e-13,
            "differences did not shrink: {d1} then {d2}"
        );
    }
}
