//! Property-style invariants across modules: coefficient balance, kernel
//! symmetry and boundedness, square-root consistency, Gram positive
//! definiteness, spectrum scaling, and p-value calibration under the null.

use proptest::prelude::*;
use qpm_core::gram::{build_gram, difference_spectrum, factor_gram};
use qpm_core::kernels::sq_dist;
use qpm_core::measures::neumaier_sum;
use qpm_core::twosample::permutation_test_with;
use qpm_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn measure_strategy(max_n: usize, dim: usize) -> impl Strategy<Value = DiscreteMeasure> {
    (1..=max_n).prop_flat_map(move |n| {
        (
            proptest::collection::vec(-3.0..3.0f64, n * dim),
            proptest::collection::vec(0.05..1.0f64, n),
        )
            .prop_map(move |(data, raw_w)| {
                let total: f64 = raw_w.iter().sum();
                let weights: Vec<f64> = raw_w.iter().map(|w| w / total).collect();
                DiscreteMeasure::new(PointSet::new(data, dim).unwrap(), Some(weights)).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn signed_difference_coefficients_balance(
        p in measure_strategy(10, 2),
        q in measure_strategy(10, 2),
        merge in proptest::option::of(0.0..0.5f64),
    ) {
        let s = signed_difference(&p, &q, merge).unwrap();
        prop_assert!(s.coefficient_sum().abs() <= 1e-12);
    }

    #[test]
    fn kernel_symmetry_and_bounds(
        x in proptest::collection::vec(-5.0..5.0f64, 3),
        y in proptest::collection::vec(-5.0..5.0f64, 3),
    ) {
        let specs = [
            KernelSpec::gaussian(0.9).unwrap(),
            KernelSpec::laplacian(1.4).unwrap(),
            KernelSpec::generalized_imq(1.2, 2.0).unwrap(),
            normalize_kernel(&KernelSpec::gaussian_mixture(vec![(2.0, 1.0), (1.0, 3.0)]).unwrap()),
        ];
        for spec in &specs {
            let a = spec.eval(&x, &y).unwrap();
            let b = spec.eval(&y, &x).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
            let diag = spec.eval(&x, &x).unwrap();
            prop_assert!(a > 0.0);
            prop_assert!(a <= diag);
        }
    }

    #[test]
    fn permutation_p_value_within_bounds(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data_a: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let data_b: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = PointSet::new(data_a, 1).unwrap();
        let b = PointSet::new(data_b, 1).unwrap();
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let r = permutation_test(&a, &b, &spec, StatisticKind::Mmd, 39, seed).unwrap();
        prop_assert!(r.p_value >= 1.0 / 40.0);
        prop_assert!(r.p_value <= 1.0);
        prop_assert_eq!(r.p_value, (r.exceed_count as f64 + 1.0) / 40.0);
    }
}

#[test]
fn sqrt_consistency_across_dimensions() {
    let specs = [
        KernelSpec::gaussian(1.7).unwrap(),
        KernelSpec::laplacian(0.6).unwrap(),
        KernelSpec::generalized_imq(0.9, 3.5).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for dim in [1usize, 2, 16, 784] {
        for spec in &specs {
            let SqrtStatus::ValidClosedForm(root) = sqrt_kernel(spec) else {
                panic!("expected closed form");
            };
            for _ in 0..1000 {
                let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let y: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let r = root.eval(&x, &y).unwrap();
                let k = spec.eval(&x, &y).unwrap();
                assert!(
                    (r * r - k).abs() < 1e-12,
                    "dim {dim}, {spec}: {} vs {}",
                    r * r,
                    k
                );
            }
        }
    }
}

#[test]
fn gram_matrices_strictly_positive_definite() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let specs = [
        KernelSpec::gaussian(1.0).unwrap(),
        KernelSpec::laplacian(1.0).unwrap(),
        KernelSpec::generalized_imq(1.0, 1.5).unwrap(),
        normalize_kernel(&KernelSpec::gaussian_mixture(vec![(1.0, 0.5), (1.0, 4.0)]).unwrap()),
    ];
    for trial in 0..8 {
        let n = rng.random_range(2..=64);
        let dim = rng.random_range(1..4);
        // Distinct points with unit separation in a volume that grows with n,
        // so strict positive definiteness is visible to the arithmetic.
        let half_width = 2.0 * (n as f64).powf(1.0 / dim as f64);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        while rows.len() < n {
            let cand: Vec<f64> = (0..dim)
                .map(|_| rng.random_range(-half_width..half_width))
                .collect();
            if rows.iter().all(|r| sq_dist(r, &cand) > 1.0) {
                rows.push(cand);
            }
        }
        let points = PointSet::from_rows(&rows).unwrap();
        for spec in &specs {
            let g = build_gram(&points, spec).unwrap();
            let min_eig = g
                .symmetric_eigenvalues()
                .iter()
                .fold(f64::INFINITY, |a, b| a.min(*b));
            assert!(
                min_eig > 0.0,
                "trial {trial}, {spec}: min eigenvalue {min_eig}"
            );
        }
    }
}

#[test]
fn spectrum_scales_linearly_in_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data: Vec<f64> = (0..20).map(|_| rng.random_range(-2.0..2.0)).collect();
    let points = PointSet::new(data, 2).unwrap();
    let g = build_gram(&points, &KernelSpec::gaussian(1.0).unwrap()).unwrap();
    let f = factor_gram(&g, 0.0, 3).unwrap();
    let mut coeffs: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
    let shift = neumaier_sum(coeffs.iter().copied()) / 10.0;
    for c in &mut coeffs {
        *c -= shift;
    }
    let base = difference_spectrum(&f, &coeffs).unwrap();
    for s in [0.5, 2.0, 7.5] {
        let scaled: Vec<f64> = coeffs.iter().map(|c| s * c).collect();
        let rep = difference_spectrum(&f, &scaled).unwrap();
        for (a, b) in base.eigenvalues.iter().zip(&rep.eigenvalues) {
            assert!((s * a - b).abs() <= 1e-9 * s.max(1.0), "{a} {b} at scale {s}");
        }
    }
}

#[test]
fn merged_self_difference_is_empty_or_negligible() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let n = rng.random_range(1..=12);
        let data: Vec<f64> = (0..n * 2).map(|_| rng.random_range(-2.0..2.0)).collect();
        let p = DiscreteMeasure::uniform(PointSet::new(data, 2).unwrap()).unwrap();
        let s = signed_difference(&p, &p, Some(0.0)).unwrap();
        assert!(
            s.coefficients().iter().all(|c| c.abs() < 1e-15),
            "survivor above threshold"
        );
    }
}

/// Under the null, the p-value distribution must be stochastically at least
/// uniform: the empirical CDF at alpha stays within three binomial standard
/// errors above alpha.
#[test]
fn null_p_values_stochastically_uniform() {
    let runs = 500;
    let spec = KernelSpec::gaussian(2.0).unwrap();
    let p_values: Vec<f64> = (0..runs)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(9000 + k as u64);
            let gen = |rng: &mut ChaCha8Rng| -> PointSet {
                let data: Vec<f64> = (0..30)
                    .map(|_| {
                        let u: f64 = rng.random();
                        let v: f64 = rng.random();
                        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
                    })
                    .collect();
                PointSet::new(data, 1).unwrap()
            };
            let a = gen(&mut rng);
            let b = gen(&mut rng);
            permutation_test(&a, &b, &spec, StatisticKind::Mmd, 99, k as u64)
                .unwrap()
                .p_value
        })
        .collect();
    for alpha in [0.01, 0.05, 0.1] {
        let cdf = p_values.iter().filter(|p| **p <= alpha).count() as f64 / runs as f64;
        let bound = alpha + 3.0 * (alpha * (1.0 - alpha) / runs as f64).sqrt();
        assert!(cdf <= bound, "CDF({alpha}) = {cdf} exceeds {bound}");
    }
}

/// Swapping the statistic changes values, not the harness: a stub statistic
/// sees exactly one baseline call plus one call per permutation, and the
/// exceedance logic is indifferent to which statistic produced the values.
#[test]
fn harness_statistic_agnostic_with_stub() {
    use std::sync::atomic::{AtomicUsize, Ordering};
    let a = PointSet::new((0..10).map(|i| i as f64).collect(), 1).unwrap();
    let b = PointSet::new((0..10).map(|i| i as f64 + 0.5).collect(), 1).unwrap();
    let calls = AtomicUsize::new(0);
    let stub = |p: &DiscreteMeasure, _q: &DiscreteMeasure| -> qpm_core::Result<f64> {
        calls.fetch_add(1, Ordering::Relaxed);
        Ok(p.points().row(0)[0])
    };
    let r = permutation_test_with(&a, &b, StatisticKind::Qpm, 25, 3, &stub).unwrap();
    assert_eq!(calls.load(Ordering::Relaxed), 26);
    assert_eq!(r.permutation_values.len(), 25);
    assert_eq!(
        r.p_value,
        (r.exceed_count as f64 + 1.0) / 26.0
    );
}
