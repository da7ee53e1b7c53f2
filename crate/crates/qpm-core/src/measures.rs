//! Finitely supported probability measures and the signed coefficient
//! vector of their difference.
//!
//! A measure is a set of sample points with strictly positive weights
//! summing to one. Two measures combine into a [`SignedSupport`]: the
//! joined point list with coefficients `+p_i` for the first measure and
//! `-q_j` for the second, so the coefficients always sum to zero.

use crate::error::{QpmError, Result};

/// Absolute tolerance on a user-supplied weight sum before rejection.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Merged coefficients below this magnitude are dropped from the support.
pub const MERGE_DROP_TOL: f64 = 1e-15;

/// Dense row-major matrix of sample points, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    data: Vec<f64>,
    n: usize,
    dim: usize,
}

impl PointSet {
    /// Builds a point set from row-major data. Every entry must be finite
    /// and there must be at least one row.
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || data.is_empty() {
            return Err(QpmError::EmptySupport);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(QpmError::DimensionMismatch {
                expected: dim,
                got: data.len() % dim,
            });
        }
        let n = data.len() / dim;
        check_finite(&data, dim)?;
        Ok(Self { data, n, dim })
    }

    /// Builds a point set from explicit rows, all of equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(QpmError::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(data, dim)
    }

    /// Internal constructor that allows an empty support, used for merge
    /// results where all coefficients cancelled.
    pub(crate) fn from_raw_unchecked(data: Vec<f64>, dim: usize) -> Self {
        let n = data.len().checked_div(dim).unwrap_or(0);
        Self { data, n, dim }
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// A probability measure with finite support: points plus weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: PointSet,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Validates and builds a measure. With `weights = None` the measure is
    /// uniform. Supplied weights must be strictly positive and sum to one
    /// within [`WEIGHT_SUM_TOL`]; they are then renormalized by their sum so
    /// the stored weights sum to one as exactly as the arithmetic allows.
    pub fn new(points: PointSet, weights: Option<Vec<f64>>) -> Result<Self> {
        let n = points.n_samples();
        let weights = match weights {
            None => vec![1.0 / n as f64; n],
            Some(w) => {
                if w.len() != n {
                    return Err(QpmError::BadWeights(format!(
                        "{} weights for {} points",
                        w.len(),
                        n
                    )));
                }
                if let Some(bad) = w.iter().find(|x| !x.is_finite() || **x <= 0.0) {
                    return Err(QpmError::BadWeights(format!(
                        "weights must be finite and strictly positive, found {bad}"
                    )));
                }
                let sum = neumaier_sum(w.iter().copied());
                if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                    return Err(QpmError::BadWeights(format!(
                        "weights sum to {sum}, expected 1"
                    )));
                }
                w.into_iter().map(|x| x / sum).collect()
            }
        };
        Ok(Self { points, weights })
    }

    /// Uniform measure over the given points.
    pub fn uniform(points: PointSet) -> Result<Self> {
        Self::new(points, None)
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_samples(&self) -> usize {
        self.points.n_samples()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }
}

/// Joined support of two measures with signed coefficients summing to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedSupport {
    points: PointSet,
    coefficients: Vec<f64>,
}

impl SignedSupport {
    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    /// Sum of coefficients, compensated. Zero for any valid support.
    pub fn coefficient_sum(&self) -> f64 {
        neumaier_sum(self.coefficients.iter().copied())
    }

    /// Builds a support directly from points and coefficients. Mostly useful
    /// for tests and for replaying a support with perturbed coordinates.
    pub fn from_parts(points: PointSet, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != points.n_samples() {
            return Err(QpmError::DimensionMismatch {
                expected: points.n_samples(),
                got: coefficients.len(),
            });
        }
        Ok(Self {
            points,
            coefficients,
        })
    }

    /// Returns a copy with every coordinate of one support point replaced.
    pub fn with_point(&self, index: usize, new_point: &[f64]) -> Self {
        let mut data = self.points.data().to_vec();
        let dim = self.points.dim();
        data[index * dim..(index + 1) * dim].copy_from_slice(new_point);
        Self {
            points: PointSet::from_raw_unchecked(data, dim),
            coefficients: self.coefficients.clone(),
        }
    }
}

/// Builds the signed difference of two measures over their joined support.
///
/// Coefficients are `p_i` for rows of `p` and `-q_j` for rows of `q`. With
/// `merge_tolerance = Some(tol)`, rows whose coordinates coincide within
/// `tol` in the sup-norm are merged by summing their coefficients
/// (compensated), and merged entries smaller than [`MERGE_DROP_TOL`] in
/// magnitude are dropped. Merging is transitive and its output does not
/// depend on the input row order beyond a permutation.
pub fn signed_difference(
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
    merge_tolerance: Option<f64>,
) -> Result<SignedSupport> {
    if p.dim() != q.dim() {
        return Err(QpmError::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    let dim = p.dim();
    let mut data = Vec::with_capacity((p.n_samples() + q.n_samples()) * dim);
    data.extend_from_slice(p.points().data());
    data.extend_from_slice(q.points().data());
    let mut coeffs: Vec<f64> = Vec::with_capacity(p.n_samples() + q.n_samples());
    coeffs.extend_from_slice(p.weights());
    coeffs.extend(q.weights().iter().map(|w| -w));

    if let Some(tol) = merge_tolerance {
        let (data, coeffs) = merge_rows(&data, dim, &coeffs, tol);
        return Ok(SignedSupport {
            points: PointSet::from_raw_unchecked(data, dim),
            coefficients: coeffs,
        });
    }

    Ok(SignedSupport {
        points: PointSet::from_raw_unchecked(data, dim),
        coefficients: coeffs,
    })
}

/// Neumaier compensated summation.
pub fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn check_finite(data: &[f64], dim: usize) -> Result<()> {
    for (i, v) in data.iter().enumerate() {
        if !v.is_finite() {
            return Err(QpmError::NonFiniteInput {
                row: i / dim,
                col: i % dim,
            });
        }
    }
    Ok(())
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn cmp_rows(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(ord) => return ord,
        }
    }
    std::cmp::Ordering::Equal
}

/// Transitive merge of rows within `tol` (sup-norm), union-find over pairs.
/// Each cluster keeps its lexicographically smallest member as the
/// representative point, and coefficients are summed in a canonical order so
/// the result is invariant under input permutation.
fn merge_rows(data: &[f64], dim: usize, coeffs: &[f64], tol: f64) -> (Vec<f64>, Vec<f64>) {
    let n = coeffs.len();
    let row = |i: usize| &data[i * dim..(i + 1) * dim];

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if sup_dist(row(i), row(j)) <= tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }

    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let r = find(&mut parent, i);
        clusters[r].push(i);
    }

    let mut out_data = Vec::new();
    let mut out_coeffs = Vec::new();
    for members in clusters.into_iter().filter(|c| !c.is_empty()) {
        // Canonical order inside the cluster: by point, then by coefficient.
        let mut entries: Vec<(&[f64], f64)> =
            members.iter().map(|&i| (row(i), coeffs[i])).collect();
        entries.sort_by(|a, b| cmp_rows(a.0, b.0).then(a.1.partial_cmp(&b.1).unwrap()));
        let c = neumaier_sum(entries.iter().map(|e| e.1));
        if c.abs() < MERGE_DROP_TOL {
            continue;
        }
        out_data.extend_from_slice(entries[0].0);
        out_coeffs.push(c);
    }
    (out_data, out_coeffs)
}
