//! Row bootstrap of the cutpoint.
//!
//! A replicate resamples users with replacement and reruns quantile,
//! truncation, fit and cutpoint. Replicate `r` draws its rows from a generator
//! seeded by `(seed, r)`, so the set of replicate cutpoints is the same for any
//! worker count.
//!
//! Rows are not materialised. Each replicate only records how many times each
//! row was drawn; the percentile at N is then found by walking the rows in
//! ascending order of their size at N (precomputed once) and accumulating
//! draw counts until the target rank is covered.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{estimate_cutpoint, nearest_rank, nearest_rank_position, quantile_vector, AudienceMatrix, FitError, QuantileVector};
use crate::exec::Execution;
use crate::seed::{self, Domain};
use crate::{Error, Result};

pub const DEFAULT_RESAMPLES: usize = 10_000;

/// Largest tolerated share of replicates whose fit fails.
const MAX_FAILED_SHARE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub q: f64,
    pub point_estimate: f64,
    /// Nearest-rank 2.5th percentile of the replicate cutpoints.
    pub ci_low: f64,
    /// Nearest-rank 97.5th percentile of the replicate cutpoints.
    pub ci_high: f64,
    pub n_resamples: usize,
    pub n_failed: usize,
    pub seed: u64,
    /// Whether `ci_low <= point_estimate <= ci_high`. Reported, never forced.
    pub brackets: bool,
}

/// Row indices drawn by replicate `replicate` (with replacement).
pub fn resample_indices(seed: u64, replicate: usize, n_rows: usize) -> Vec<usize> {
    let mut rng = seed::rng_for(seed, Domain::Bootstrap, replicate as u64);
    (0..n_rows).map(|_| rng.random_range(0..n_rows as u32) as usize).collect()
}

struct Plan {
    n_rows: usize,
    len: usize,
    q: f64,
    policy: crate::index::CensorPolicy,
    /// Per N: rows with at least N entries, ascending by size at N.
    order: Vec<Vec<u32>>,
    /// Per N: the sizes matching `order`.
    values: Vec<Vec<u64>>,
    /// Rows shorter than the vector, with their length.
    short: Vec<(u32, usize)>,
}

struct Scratch {
    counts: Vec<u32>,
    excluded_by_len: Vec<u64>,
    values: Vec<u64>,
}

impl Plan {
    fn new(matrix: &AudienceMatrix, q: f64) -> Plan {
        let len = matrix.vector_len();
        let mut order = Vec::with_capacity(len);
        let mut values = Vec::with_capacity(len);
        for n in 1..=len {
            let mut keyed: Vec<(u64, u32)> = matrix
                .rows
                .iter()
                .enumerate()
                .filter(|(_, r)| r.sizes.len() >= n)
                .map(|(i, r)| (r.sizes[n - 1], i as u32))
                .collect();
            keyed.sort_unstable();
            values.push(keyed.iter().map(|k| k.0).collect());
            order.push(keyed.into_iter().map(|k| k.1).collect());
        }
        let short = matrix
            .rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.sizes.len() < len)
            .map(|(i, r)| (i as u32, r.sizes.len()))
            .collect();
        Plan {
            n_rows: matrix.rows.len(),
            len,
            q,
            policy: matrix.policy,
            order,
            values,
            short,
        }
    }

    fn scratch(&self) -> Scratch {
        Scratch {
            counts: vec![0; self.n_rows],
            excluded_by_len: vec![0; self.len + 1],
            values: Vec::with_capacity(self.len),
        }
    }

    fn replicate(&self, seed: u64, r: usize, s: &mut Scratch) -> Result<f64, FitError> {
        let n = self.n_rows;
        s.counts.fill(0);
        let mut rng = seed::rng_for(seed, Domain::Bootstrap, r as u64);
        for _ in 0..n {
            s.counts[rng.random_range(0..n as u32) as usize] += 1;
        }
        s.excluded_by_len.fill(0);
        for &(row, len) in &self.short {
            s.excluded_by_len[len] += s.counts[row as usize] as u64;
        }
        s.values.clear();
        let mut excluded = 0u64;
        for level in 1..=self.len {
            // rows of length level-1 drop out from here on
            excluded += s.excluded_by_len[level - 1];
            let available = n as u64 - excluded;
            if available == 0 {
                break;
            }
            let rank = nearest_rank_position(available as usize, self.q) as u64 + 1;
            let order = &self.order[level - 1];
            let values = &self.values[level - 1];
            let value = if rank <= available / 2 {
                let mut acc = 0u64;
                let mut j = 0;
                loop {
                    acc += s.counts[order[j] as usize] as u64;
                    if acc >= rank {
                        break values[j];
                    }
                    j += 1;
                }
            } else {
                let from_top = available - rank + 1;
                let mut acc = 0u64;
                let mut j = order.len() - 1;
                loop {
                    acc += s.counts[order[j] as usize] as u64;
                    if acc >= from_top {
                        break values[j];
                    }
                    j -= 1;
                }
            };
            s.values.push(value);
            if value <= self.policy.floor() {
                break;
            }
        }
        let vector = QuantileVector {
            q: self.q,
            values: std::mem::take(&mut s.values),
        };
        let out = estimate_cutpoint(&vector, self.policy).map(|e| e.cutpoint);
        s.values = vector.values;
        out
    }
}

/// Cutpoint of every replicate, in replicate order.
pub fn bootstrap_replicates(
    matrix: &AudienceMatrix,
    q: f64,
    n_resamples: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Result<f64, FitError>>, FitError> {
    if !(q > 0.0 && q < 100.0) {
        return Err(FitError::InvalidQuantile(q));
    }
    let plan = Plan::new(matrix, q);
    Ok(exec.map_range(n_resamples, || plan.scratch(), |s, r| plan.replicate(seed, r, s)))
}

pub fn bootstrap_ci(matrix: &AudienceMatrix, q: f64, n_resamples: usize, seed: u64) -> Result<BootstrapResult> {
    bootstrap_ci_with(matrix, q, n_resamples, seed, Execution::default())
}

pub fn bootstrap_ci_with(
    matrix: &AudienceMatrix,
    q: f64,
    n_resamples: usize,
    seed: u64,
    exec: Execution,
) -> Result<BootstrapResult> {
    if n_resamples == 0 {
        return Err(Error::InvalidParameter("bootstrap needs at least one resample".into()));
    }
    let point = estimate_cutpoint(&quantile_vector(matrix, q)?, matrix.policy)?.cutpoint;
    let replicates = bootstrap_replicates(matrix, q, n_resamples, seed, exec)?;
    let mut cutpoints: Vec<f64> = replicates.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
    let n_failed = n_resamples - cutpoints.len();
    if cutpoints.is_empty() || n_failed as f64 > MAX_FAILED_SHARE * n_resamples as f64 {
        return Err(Error::BootstrapFailures {
            q,
            failed: n_failed,
            total: n_resamples,
        });
    }
    cutpoints.sort_unstable_by(f64::total_cmp);
    let ci_low = nearest_rank(&cutpoints, 2.5);
    let ci_high = nearest_rank(&cutpoints, 97.5);
    Ok(BootstrapResult {
        q,
        point_estimate: point,
        ci_low,
        ci_high,
        n_resamples,
        n_failed,
        seed,
        brackets: ci_low <= point && point <= ci_high,
    })
}
