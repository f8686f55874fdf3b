use serde::{Deserialize, Serialize};

use super::{AudienceMatrix, FitError};

/// Zero-based position of the nearest-rank `q`-th percentile in a sorted
/// sample of length `n`: the value at rank `ceil(q / 100 * n)`, clamped to
/// `1..=n`.
pub fn nearest_rank_position(n: usize, q: f64) -> usize {
    debug_assert!(n > 0);
    // Multiply first so integral percentiles stay exact.
    let rank = (q * n as f64 / 100.0).ceil();
    (rank.max(1.0) as usize).min(n) - 1
}

/// Nearest-rank percentile of an ascending-sorted, non-empty slice.
pub fn nearest_rank<T: Copy>(sorted: &[T], q: f64) -> T {
    sorted[nearest_rank_position(sorted.len(), q)]
}

/// `AS(Q, N)` for N = 1..=len: the Q-th percentile of the audience sizes of
/// users' N-interest prefixes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileVector {
    pub q: f64,
    /// `values[n - 1]` is the percentile at N = n.
    pub values: Vec<u64>,
}

impl QuantileVector {
    /// `N,AS` rows with a header, for spreadsheets and plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,AS\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, v));
        }
        out
    }
}

fn check_q(q: f64) -> Result<(), FitError> {
    if !(q > 0.0 && q < 100.0) {
        return Err(FitError::InvalidQuantile(q));
    }
    Ok(())
}

/// Nearest-rank quantile vector of a matrix.
///
/// The samples at N are the censored sizes of every row with at least N
/// entries. The vector runs up to the longest row (capped by the matrix
/// `n_max`), so every N it covers has at least one sample.
pub fn quantile_vector(matrix: &AudienceMatrix, q: f64) -> Result<QuantileVector, FitError> {
    check_q(q)?;
    let len = matrix.vector_len();
    let mut values = Vec::with_capacity(len);
    let mut samples = Vec::with_capacity(matrix.rows.len());
    for n in 1..=len {
        samples.clear();
        samples.extend(matrix.rows.iter().filter(|r| r.sizes.len() >= n).map(|r| r.sizes[n - 1]));
        if samples.is_empty() {
            return Err(FitError::NoSamples { q, n });
        }
        let k = nearest_rank_position(samples.len(), q);
        let (_, v, _) = samples.select_nth_unstable(k);
        values.push(*v);
    }
    if values.is_empty() {
        return Err(FitError::NoSamples { q, n: 1 });
    }
    Ok(QuantileVector { q, values })
}
