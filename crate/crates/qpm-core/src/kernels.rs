//! Kernel families, normalization, closed-form square roots, and bandwidth
//! heuristics.
//!
//! All families are radial: the value depends on the points only through
//! their Euclidean distance, computed once per pair so evaluation is
//! symmetric to the bit. The Gaussian is parameterized as
//! `exp(-||x-y||^2 / length_scale)`: the length scale plays the role of a
//! squared bandwidth, and `sigma`-style inputs should be squared first.

use crate::error::{QpmError, Result};
use crate::measures::PointSet;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// A kernel family with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `exp(-||x-y||^2 / length_scale)`
    Gaussian { length_scale: f64 },
    /// `exp(-||x-y|| / scale)`
    Laplacian { scale: f64 },
    /// `[1 + ||x-y||^2 / (2 * exponent * length_scale^2)]^(-exponent)`
    GeneralizedImq { length_scale: f64, exponent: f64 },
    /// `sum_j weight_j * exp(-||x-y||^2 / length_scale_j)`
    GaussianMixture { components: Vec<(f64, f64)> },
}

/// Outcome of asking for a closed-form kernel square root.
#[derive(Debug, Clone, PartialEq)]
pub enum SqrtStatus {
    ValidClosedForm(KernelSpec),
    Invalid,
}

impl KernelSpec {
    pub fn gaussian(length_scale: f64) -> Result<Self> {
        require_positive(length_scale, "length_scale")?;
        Ok(Self::Gaussian { length_scale })
    }

    pub fn laplacian(scale: f64) -> Result<Self> {
        require_positive(scale, "scale")?;
        Ok(Self::Laplacian { scale })
    }

    pub fn generalized_imq(length_scale: f64, exponent: f64) -> Result<Self> {
        require_positive(length_scale, "length_scale")?;
        require_positive(exponent, "exponent")?;
        Ok(Self::GeneralizedImq {
            length_scale,
            exponent,
        })
    }

    /// `components` are `(weight, length_scale)` pairs.
    pub fn gaussian_mixture(components: Vec<(f64, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(QpmError::BadWeights("mixture needs components".into()));
        }
        for (w, ls) in &components {
            require_positive(*w, "mixture weight")?;
            require_positive(*ls, "mixture length_scale")?;
        }
        Ok(Self::GaussianMixture { components })
    }

    /// Kernel value from a squared Euclidean distance.
    pub fn eval_sq_dist(&self, r2: f64) -> f64 {
        match self {
            Self::Gaussian { length_scale } => (-r2 / length_scale).exp(),
            Self::Laplacian { scale } => (-r2.sqrt() / scale).exp(),
            Self::GeneralizedImq {
                length_scale,
                exponent,
            } => {
                let denom = 2.0 * exponent * length_scale * length_scale;
                (1.0 + r2 / denom).powf(-exponent)
            }
            Self::GaussianMixture { components } => components
                .iter()
                .map(|(w, ls)| w * (-r2 / ls).exp())
                .sum(),
        }
    }

    /// Kernel value between two points of equal dimension.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(QpmError::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        Ok(self.eval_sq_dist(sq_dist(x, y)))
    }

    /// True when evaluation at coincident points is one.
    pub fn is_normalized(&self) -> bool {
        match self {
            Self::GaussianMixture { components } => {
                let total: f64 = components.iter().map(|(w, _)| w).sum();
                total == 1.0
            }
            _ => true,
        }
    }

    /// Derivative of the kernel value with respect to the squared distance.
    /// For the Laplacian this requires `r2 > 0`.
    pub(crate) fn d_eval_d_sq_dist(&self, r2: f64) -> f64 {
        match self {
            Self::Gaussian { length_scale } => -(-r2 / length_scale).exp() / length_scale,
            Self::Laplacian { scale } => {
                let r = r2.sqrt();
                if r == 0.0 {
                    return 0.0;
                }
                -(-r / scale).exp() / (2.0 * r * scale)
            }
            Self::GeneralizedImq {
                length_scale,
                exponent,
            } => {
                let l2 = length_scale * length_scale;
                let denom = 2.0 * exponent * l2;
                -(1.0 + r2 / denom).powf(-exponent - 1.0) / (2.0 * l2)
            }
            Self::GaussianMixture { components } => components
                .iter()
                .map(|(w, ls)| -w * (-r2 / ls).exp() / ls)
                .sum(),
        }
    }

    /// Derivative of the kernel value with respect to the family's own scale
    /// parameter. For the mixture this is the derivative with respect to a
    /// common multiplier on every component length scale, taken at one.
    pub(crate) fn d_eval_d_scale(&self, r2: f64) -> f64 {
        match self {
            Self::Gaussian { length_scale } => {
                (-r2 / length_scale).exp() * r2 / (length_scale * length_scale)
            }
            Self::Laplacian { scale } => {
                let r = r2.sqrt();
                (-r / scale).exp() * r / (scale * scale)
            }
            Self::GeneralizedImq {
                length_scale,
                exponent,
            } => {
                let denom = 2.0 * exponent * length_scale * length_scale;
                (1.0 + r2 / denom).powf(-exponent - 1.0) * r2
                    / (length_scale * length_scale * length_scale)
            }
            Self::GaussianMixture { components } => components
                .iter()
                .map(|(w, ls)| w * (-r2 / ls).exp() * r2 / ls)
                .sum(),
        }
    }
}

impl std::fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Gaussian { length_scale } => write!(f, "gaussian(length_scale={length_scale})"),
            Self::Laplacian { scale } => write!(f, "laplacian(scale={scale})"),
            Self::GeneralizedImq {
                length_scale,
                exponent,
            } => write!(f, "imq(length_scale={length_scale}, exponent={exponent})"),
            Self::GaussianMixture { components } => {
                write!(f, "mixture(")?;
                for (i, (w, ls)) in components.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{w}*gaussian({ls})")?;
                }
                write!(f, ")")
            }
        }
    }
}

pub fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum()
}

fn require_positive(v: f64, name: &str) -> Result<()> {
    if !v.is_finite() || v <= 0.0 {
        Err(QpmError::BadWeights(format!(
            "{name} must be finite and positive, got {v}"
        )))
    } else {
        Ok(())
    }
}

/// Closed-form square root of a kernel, when one exists in the same family
/// zoo. Squaring the returned kernel reproduces the original:
///
/// * Gaussian: the length scale doubles.
/// * Laplacian: the scale doubles.
/// * Generalized IMQ: the exponent halves while `2 * exponent * length_scale^2`
///   is held fixed, so the length scale grows by `sqrt(2)`.
/// * Gaussian mixtures have no closed-form square root.
pub fn sqrt_kernel(spec: &KernelSpec) -> SqrtStatus {
    match spec {
        KernelSpec::Gaussian { length_scale } => SqrtStatus::ValidClosedForm(KernelSpec::Gaussian {
            length_scale: 2.0 * length_scale,
        }),
        KernelSpec::Laplacian { scale } => SqrtStatus::ValidClosedForm(KernelSpec::Laplacian {
            scale: 2.0 * scale,
        }),
        KernelSpec::GeneralizedImq {
            length_scale,
            exponent,
        } => SqrtStatus::ValidClosedForm(KernelSpec::GeneralizedImq {
            length_scale: std::f64::consts::SQRT_2 * length_scale,
            exponent: 0.5 * exponent,
        }),
        KernelSpec::GaussianMixture { .. } => SqrtStatus::Invalid,
    }
}

/// Chain factor `d(sqrt-kernel scale) / d(base scale)` for families with a
/// closed-form square root.
pub(crate) fn sqrt_scale_chain(spec: &KernelSpec) -> f64 {
    match spec {
        KernelSpec::Gaussian { .. } | KernelSpec::Laplacian { .. } => 2.0,
        KernelSpec::GeneralizedImq { .. } => std::f64::consts::SQRT_2,
        KernelSpec::GaussianMixture { .. } => 1.0,
    }
}

/// Rescales the kernel so that evaluation at coincident points is one.
/// Only the Gaussian mixture can be unnormalized; its weights are divided
/// by their total.
pub fn normalize_kernel(spec: &KernelSpec) -> KernelSpec {
    match spec {
        KernelSpec::GaussianMixture { components } => {
            let total: f64 = components.iter().map(|(w, _)| w).sum();
            KernelSpec::GaussianMixture {
                components: components.iter().map(|(w, ls)| (w / total, *ls)).collect(),
            }
        }
        other => other.clone(),
    }
}

/// `fraction` times the median pairwise Euclidean distance. Point sets with
/// more than 2048 rows are subsampled to 2048 rows with a fixed seed so the
/// result is deterministic.
pub fn median_heuristic(points: &PointSet, fraction: f64) -> Result<f64> {
    const MAX_ROWS: usize = 2048;
    let n = points.n_samples();
    if n < 2 {
        return Err(QpmError::TooFewPoints { needed: 2, got: n });
    }
    let rows: Vec<&[f64]> = if n > MAX_ROWS {
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0x6d65_6469_616e);
        idx.shuffle(&mut rng);
        idx.truncate(MAX_ROWS);
        idx.sort_unstable();
        idx.into_iter().map(|i| points.row(i)).collect()
    } else {
        points.rows().collect()
    };
    let m = rows.len();
    let mut dists = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            dists.push(sq_dist(rows[i], rows[j]).sqrt());
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = dists.len();
    let median = if k % 2 == 1 {
        dists[k / 2]
    } else {
        0.5 * (dists[k / 2 - 1] + dists[k / 2])
    };
    Ok(fraction * median)
}

/// Result of fitting a generalized IMQ kernel to a Gaussian mixture.
#[derive(Debug, Clone)]
pub struct ImqFit {
    pub spec: KernelSpec,
    pub rmse: f64,
}

/// Default fitting grid for [`fit_imq_to_mixture`]: 512 uniform distances on
/// `[0, 3 * max sigma]` where `sigma_j = sqrt(length_scale_j / 2)`.
pub fn default_fit_grid(mixture: &KernelSpec) -> Result<Vec<f64>> {
    let KernelSpec::GaussianMixture { components } = mixture else {
        return Err(QpmError::BadGrid("expected a Gaussian mixture".into()));
    };
    let max_sigma = components
        .iter()
        .map(|(_, ls)| (ls / 2.0).sqrt())
        .fold(0.0, f64::max);
    let top = 3.0 * max_sigma;
    Ok((0..512).map(|i| top * i as f64 / 511.0).collect())
}

/// Least-squares fit of a generalized IMQ kernel to a Gaussian mixture over
/// a grid of distances. The mixture is normalized first. For each candidate
/// exponent the length scale comes from a closed-form weighted regression in
/// the linearized variable `k^(-1/alpha) - 1`, and the exponent itself is
/// located by golden-section search on the true squared error, to an
/// absolute tolerance of 1e-8.
pub fn fit_imq_to_mixture(mixture: &KernelSpec, grid: &[f64]) -> Result<ImqFit> {
    if !matches!(mixture, KernelSpec::GaussianMixture { .. }) {
        return Err(QpmError::BadGrid("expected a Gaussian mixture".into()));
    }
    if grid.is_empty() {
        return Err(QpmError::BadGrid("empty grid".into()));
    }
    if grid.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(QpmError::BadGrid(
            "grid distances must be finite and nonnegative".into(),
        ));
    }
    if grid.iter().all(|r| *r == 0.0) {
        return Err(QpmError::BadGrid("grid needs a positive distance".into()));
    }

    let target = normalize_kernel(mixture);
    let samples: Vec<(f64, f64)> = grid
        .iter()
        .map(|&r| (r * r, target.eval_sq_dist(r * r)))
        .collect();

    // Closed-form length scale for a fixed exponent: weighted least squares
    // of k^(-1/alpha) - 1 against r^2, weights chosen so the residual is
    // expressed on the kernel-value scale.
    let scale_for = |alpha: f64| -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for &(r2, k) in &samples {
            if k <= 0.0 {
                continue;
            }
            let y = k.powf(-1.0 / alpha) - 1.0;
            let w = alpha * k.powf(1.0 + 1.0 / alpha);
            num += w * w * r2 * y;
            den += w * w * r2 * r2;
        }
        if num <= 0.0 || den <= 0.0 {
            return f64::MAX.sqrt();
        }
        // u = 1 / (2 alpha lambda^2) solves the regression.
        let u = num / den;
        (1.0 / (2.0 * alpha * u)).sqrt()
    };

    let sse = |alpha: f64| -> f64 {
        let ls = scale_for(alpha);
        let spec = KernelSpec::GeneralizedImq {
            length_scale: ls,
            exponent: alpha,
        };
        samples
            .iter()
            .map(|&(r2, k)| {
                let d = spec.eval_sq_dist(r2) - k;
                d * d
            })
            .sum()
    };

    // Golden-section search on alpha, then alternating golden-section
    // polish on each parameter against the true squared error.
    let mut alpha = golden_min(&sse, 0.05, 512.0);
    let mut length_scale = scale_for(alpha);
    for _ in 0..3 {
        let a = alpha;
        length_scale = golden_min(
            &|ls: f64| {
                sse_of(
                    &samples,
                    &KernelSpec::GeneralizedImq {
                        length_scale: ls,
                        exponent: a,
                    },
                )
            },
            length_scale / 4.0,
            length_scale * 4.0,
        );
        let ls = length_scale;
        alpha = golden_min(
            &|al: f64| {
                sse_of(
                    &samples,
                    &KernelSpec::GeneralizedImq {
                        length_scale: ls,
                        exponent: al,
                    },
                )
            },
            0.05,
            512.0,
        );
    }
    let spec = KernelSpec::GeneralizedImq {
        length_scale,
        exponent: alpha,
    };
    let rmse = (sse_of(&samples, &spec) / samples.len() as f64).sqrt();
    Ok(ImqFit { spec, rmse })
}

fn sse_of(samples: &[(f64, f64)], spec: &KernelSpec) -> f64 {
    samples
        .iter()
        .map(|&(r2, k)| {
            let d = spec.eval_sq_dist(r2) - k;
            d * d
        })
        .sum()
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a) > 1e-8 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
