//! Analytic derivatives of the QPM value.
//!
//! The value is `scale * (1/2) sum_i |lambda_i(M)|` with `M = H^T C H`.
//! First-order perturbation of a simple eigenvalue gives
//! `d lambda_i = v_i^T dM v_i`, and the factor derivative follows from
//! `d(H H^T) = dG`: `dH = H Phi(H^-1 dG H^-T)` where `Phi` keeps the lower
//! triangle and halves the diagonal. Folding everything together, the whole
//! gradient is one Frobenius pairing `<Gbar, dG>` where
//!
//! ```text
//! Gbar = sym(H^-T upper_half(S M) H^-1),   S = sum_i sign(lambda_i) v_i v_i^T
//! ```
//!
//! so a single pair of triangular solves serves every coordinate.
//!
//! `sign` is taken as zero within `ZERO_TOL` of the origin (the subgradient
//! choice at the trace-norm kink). Eigenvalue clusters tighter than
//! `cluster_tol` with mixed signs make the absolute-value sum
//! nondifferentiable; such reports are flagged rather than trusted.

use crate::error::{QpmError, Result};
use crate::gram::{build_gram, factor_gram, hermitian_difference_matrix, FactorPath};
use crate::kernels::{sqrt_scale_chain, KernelSpec};
use crate::measures::{signed_difference, DiscreteMeasure, SignedSupport};
use crate::metrics::QpmOptions;
use nalgebra::DMatrix;

/// Eigenvalues closer to zero than this are treated as zero.
pub const ZERO_TOL: f64 = 1e-10;

/// Default clustering tolerance for degeneracy detection.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-9;

/// What the derivative is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientTarget {
    /// Every coordinate of every joined-support point.
    Points,
    /// The kernel's scale parameter. For a Gaussian mixture this is a common
    /// multiplier on every component length scale, at one.
    LengthScale,
}

#[derive(Debug, Clone)]
pub struct GradientOptions {
    pub wrt: GradientTarget,
    pub cluster_tol: f64,
    pub qpm: QpmOptions,
}

impl GradientOptions {
    pub fn new(wrt: GradientTarget) -> Self {
        Self {
            wrt,
            cluster_tol: DEFAULT_CLUSTER_TOL,
            qpm: QpmOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradientReport {
    /// Row per joined-support point, one entry per coordinate.
    pub d_value_d_points: Option<Vec<Vec<f64>>>,
    pub d_value_d_length_scale: Option<f64>,
    /// Index groups (into the descending spectrum) closer than `cluster_tol`.
    pub degenerate_clusters: Vec<Vec<usize>>,
    /// False when a zero eigenvalue or a mixed-sign cluster makes the
    /// subgradient untrustworthy.
    pub differentiable: bool,
    /// The spectrum the signs were read from, descending.
    pub eigenvalues: Vec<f64>,
}

/// Gradient of `qpm(p, q, spec, opts)`.
pub fn qpm_gradient(
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
    spec: &KernelSpec,
    opts: &GradientOptions,
) -> Result<GradientReport> {
    let support = signed_difference(p, q, opts.qpm.merge())?;
    qpm_gradient_from_support(&support, spec, opts)
}

/// Gradient of `qpm_from_support(support, spec, opts)` with respect to the
/// support coordinates or the kernel scale.
pub fn qpm_gradient_from_support(
    support: &SignedSupport,
    spec: &KernelSpec,
    opts: &GradientOptions,
) -> Result<GradientReport> {
    let n = support.len();
    if n == 0 {
        return Err(QpmError::NondifferentiablePoint(
            "identical measures: every eigenvalue sits at zero".into(),
        ));
    }
    let eval_spec = opts.qpm.eval_spec(spec)?;
    let gram = build_gram(support.points(), &eval_spec)?;
    let fact = factor_gram(&gram, opts.qpm.epsilon, opts.qpm.max_retries)?;
    let (Some(h), FactorPath::Cholesky) = (&fact.factor, fact.path) else {
        return Err(QpmError::FallbackPathNoGradient);
    };

    let m = hermitian_difference_matrix(h, support.coefficients());
    let eigen = nalgebra::linalg::SymmetricEigen::new(m.clone());

    // Descending order for reporting; signs and clusters read from it.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].partial_cmp(&eigen.eigenvalues[a]).unwrap());
    let sorted: Vec<f64> = order.iter().map(|&i| eigen.eigenvalues[i]).collect();

    let signs: Vec<f64> = sorted
        .iter()
        .map(|&l| {
            if l > ZERO_TOL {
                1.0
            } else if l < -ZERO_TOL {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    if signs.iter().all(|s| *s == 0.0) {
        return Err(QpmError::NondifferentiablePoint(
            "every eigenvalue sits within 1e-10 of zero".into(),
        ));
    }

    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut current = vec![0];
    for k in 1..n {
        if (sorted[k - 1] - sorted[k]).abs() <= opts.cluster_tol {
            current.push(k);
        } else {
            clusters.push(std::mem::take(&mut current));
            current = vec![k];
        }
    }
    clusters.push(current);
    let mixed_cluster = clusters.iter().any(|c| {
        let has_pos = c.iter().any(|&k| signs[k] > 0.0);
        let has_neg = c.iter().any(|&k| signs[k] < 0.0);
        has_pos && has_neg
    });
    let degenerate_clusters: Vec<Vec<usize>> =
        clusters.into_iter().filter(|c| c.len() > 1).collect();
    let differentiable = !mixed_cluster && signs.iter().all(|s| *s != 0.0);

    // S = V sign V^T in the eigensolver's own ordering.
    let mut s_mat = DMatrix::<f64>::zeros(n, n);
    for (pos, &idx) in order.iter().enumerate() {
        let s = signs[pos];
        if s == 0.0 {
            continue;
        }
        let v = eigen.eigenvectors.column(idx);
        for r in 0..n {
            let vr = s * v[r];
            for c in 0..n {
                s_mat[(r, c)] += vr * v[c];
            }
        }
    }

    // Adjoint of the factor derivative: Gbar = sym(H^-T Q H^-1) with
    // Q the upper triangle of S*M, diagonal halved.
    let t = &s_mat * &m;
    let mut q_mat = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        q_mat[(i, i)] = 0.5 * t[(i, i)];
        for j in (i + 1)..n {
            q_mat[(i, j)] = t[(i, j)];
        }
    }
    let ht = h.transpose();
    let zt = ht
        .solve_upper_triangular(&q_mat.transpose())
        .ok_or(QpmError::FallbackPathNoGradient)?;
    let gbar_raw = ht
        .solve_upper_triangular(&zt.transpose())
        .ok_or(QpmError::FallbackPathNoGradient)?;
    let scale = if opts.qpm.isometric_scaling {
        std::f64::consts::SQRT_2
    } else {
        1.0
    };
    let gbar = (&gbar_raw + gbar_raw.transpose()).scale(0.5 * scale);

    let pts = support.points();
    let dim = pts.dim();
    let mut d_points = None;
    let mut d_scale = None;
    match opts.wrt {
        GradientTarget::Points => {
            let mut grad = vec![vec![0.0; dim]; n];
            for r in 0..n {
                let xr = pts.row(r);
                for j in 0..n {
                    if j == r {
                        continue;
                    }
                    let xj = pts.row(j);
                    let r2 = crate::kernels::sq_dist(xr, xj);
                    let dk = eval_spec.d_eval_d_sq_dist(r2);
                    let w = 2.0 * gbar[(r, j)] * dk;
                    for d in 0..dim {
                        grad[r][d] += w * 2.0 * (xr[d] - xj[d]);
                    }
                }
            }
            d_points = Some(grad);
        }
        GradientTarget::LengthScale => {
            let chain = if opts.qpm.use_sqrt_kernel {
                sqrt_scale_chain(spec)
            } else {
                1.0
            };
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..i {
                    let r2 = crate::kernels::sq_dist(pts.row(i), pts.row(j));
                    acc += 2.0 * gbar[(i, j)] * eval_spec.d_eval_d_scale(r2);
                }
            }
            d_scale = Some(chain * acc);
        }
    }

    Ok(GradientReport {
        d_value_d_points: d_points,
        d_value_d_length_scale: d_scale,
        degenerate_clusters,
        differentiable,
        eigenvalues: sorted,
    })
}
