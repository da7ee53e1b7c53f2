//! Kernel two-sample permutation test.
//!
//! The baseline statistic is computed between the uniform measures on the
//! two samples; the pooled rows are then reshuffled `n_perm` times and the
//! statistic recomputed on each split. Ties count as exceedances and the
//! continuity-corrected p-value is `(r + 1) / (n_perm + 1)`.
//!
//! Every permutation draws its shuffle from an RNG stream derived from
//! `(seed, permutation index)` alone, so the result is bit-identical for a
//! fixed seed no matter how many threads run the permutations.

use crate::error::{QpmError, Result};
use crate::kernels::KernelSpec;
use crate::measures::{DiscreteMeasure, PointSet};
use crate::metrics::{mmd, qpm, QpmOptions};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Statistic driving the test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    Mmd,
    Qpm,
}

impl std::fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Mmd => write!(f, "mmd"),
            Self::Qpm => write!(f, "qpm"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PermutationTestResult {
    pub baseline: f64,
    pub permutation_values: Vec<f64>,
    /// Count of permutation values greater than or equal to the baseline.
    pub exceed_count: usize,
    /// `(exceed_count + 1) / (n_perm + 1)`, exactly.
    pub p_value: f64,
    pub statistic: StatisticKind,
    pub seed: u64,
}

/// Summary over repeated tests on independent batch pairs.
#[derive(Debug, Clone, Serialize)]
pub struct RepeatedTestSummary {
    pub mean_p: f64,
    /// Fraction of repeats with `p <= alpha`.
    pub rejection_rate: f64,
    pub alpha: f64,
    pub results: Vec<PermutationTestResult>,
}

/// Permutation two-sample test with MMD or QPM as the statistic.
pub fn permutation_test(
    a: &PointSet,
    b: &PointSet,
    spec: &KernelSpec,
    statistic: StatisticKind,
    n_perm: usize,
    seed: u64,
) -> Result<PermutationTestResult> {
    let opts = QpmOptions::default();
    permutation_test_with(a, b, statistic, n_perm, seed, &|p, q| match statistic {
        StatisticKind::Mmd => Ok(mmd(p, q, spec)?.value),
        StatisticKind::Qpm => Ok(qpm(p, q, spec, &opts)?.value),
    })
}

/// Permutation test over an arbitrary statistic. The harness does not care
/// what the statistic is, only that it maps a measure pair to a real value.
pub fn permutation_test_with<F>(
    a: &PointSet,
    b: &PointSet,
    statistic: StatisticKind,
    n_perm: usize,
    seed: u64,
    stat_fn: &F,
) -> Result<PermutationTestResult>
where
    F: Fn(&DiscreteMeasure, &DiscreteMeasure) -> Result<f64> + Sync,
{
    if a.dim() != b.dim() {
        return Err(QpmError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let n_a = a.n_samples();
    let n_b = b.n_samples();
    let dim = a.dim();

    let baseline = stat_fn(
        &DiscreteMeasure::uniform(a.clone())?,
        &DiscreteMeasure::uniform(b.clone())?,
    )?;

    let mut pooled = Vec::with_capacity((n_a + n_b) * dim);
    pooled.extend_from_slice(a.data());
    pooled.extend_from_slice(b.data());
    let pooled = PointSet::new(pooled, dim)?;

    let permutation_values: Vec<f64> = (0..n_perm)
        .into_par_iter()
        .map(|index| {
            let mut rng = permutation_rng(seed, index as u64);
            let mut order: Vec<usize> = (0..n_a + n_b).collect();
            order.shuffle(&mut rng);
            let take = |ids: &[usize]| -> Result<DiscreteMeasure> {
                let mut data = Vec::with_capacity(ids.len() * dim);
                for &i in ids {
                    data.extend_from_slice(pooled.row(i));
                }
                DiscreteMeasure::uniform(PointSet::new(data, dim)?)
            };
            let pa = take(&order[..n_a])?;
            let pb = take(&order[n_a..])?;
            stat_fn(&pa, &pb)
        })
        .collect::<Result<Vec<f64>>>()?;

    let exceed_count = permutation_values.iter().filter(|v| **v >= baseline).count();
    let p_value = (exceed_count as f64 + 1.0) / (n_perm as f64 + 1.0);
    Ok(PermutationTestResult {
        baseline,
        permutation_values,
        exceed_count,
        p_value,
        statistic,
        seed,
    })
}

/// Runs `permutation_test` on `repeats` independent batch pairs produced by
/// `batches(k)` and summarizes the p-values.
pub fn repeated_test<B>(
    batches: B,
    repeats: usize,
    alpha: f64,
    spec: &KernelSpec,
    statistic: StatisticKind,
    n_perm: usize,
    seed: u64,
) -> Result<RepeatedTestSummary>
where
    B: Fn(usize) -> Result<(PointSet, PointSet)>,
{
    let mut results = Vec::with_capacity(repeats);
    for k in 0..repeats {
        let (a, b) = batches(k)?;
        results.push(permutation_test(
            &a,
            &b,
            spec,
            statistic,
            n_perm,
            seed.wrapping_add(k as u64),
        )?);
    }
    let mean_p = results.iter().map(|r| r.p_value).sum::<f64>() / repeats as f64;
    let rejection_rate =
        results.iter().filter(|r| r.p_value <= alpha).count() as f64 / repeats as f64;
    Ok(RepeatedTestSummary {
        mean_p,
        rejection_rate,
        alpha,
        results,
    })
}

/// Counter-based stream: one independent RNG per (seed, permutation index).
fn permutation_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    key[16..24].copy_from_slice(&0x7065726d_75746174u64.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
