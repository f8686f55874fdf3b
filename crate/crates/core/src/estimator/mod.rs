//! Uniqueness estimation: how many interests make a user unique with a given
//! probability.
//!
//! For a selection strategy every user contributes the audience sizes of the
//! first N of their selected interests, N = 1..=25 ([`AudienceMatrix`]). The
//! Q-th percentile across users at each N forms a [`QuantileVector`]; fitting
//! `log10(AS) = B - A * log10(N + 1)` to it and solving for an audience of one
//! gives the number of interests `N_P` that isolates a user with probability
//! `P = Q / 100`. Row bootstraps give the confidence interval.

mod bootstrap;
mod fit;
mod quantile;
mod report;

use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::index::{CensorPolicy, InvertedIndex};
use crate::population::{DemographicFilter, Population};
use crate::selection::{prefix_audiences, select_interests, PrefixAudiences, SelectionStrategy};
use crate::{Error, Result};

pub use bootstrap::{bootstrap_ci, bootstrap_ci_with, bootstrap_replicates, resample_indices, BootstrapResult, DEFAULT_RESAMPLES};
pub use fit::{cutpoint, fit_loglog, truncate_at_floor, FitError, FitPoint, FitResult};
pub use quantile::{nearest_rank, nearest_rank_position, quantile_vector, QuantileVector};
pub use report::{
    report_from_matrices, report_rows, subgroup_reports, uniqueness_report, uniqueness_report_with, BootstrapSettings, Grouping, ReportRow,
    SkippedGroup, SubgroupReports, UniquenessReport, DEFAULT_MIN_GROUP_USERS, DEFAULT_PROBABILITIES,
};

/// Per-user prefix audiences for one strategy and reporting floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudienceMatrix {
    pub strategy: SelectionStrategy,
    pub policy: CensorPolicy,
    pub n_max: usize,
    pub rows: Vec<PrefixAudiences>,
    /// Subgroup the rows were restricted to, if any.
    pub subgroup: Option<String>,
}

impl AudienceMatrix {
    /// Builds a matrix from precomputed rows.
    pub fn from_rows(strategy: SelectionStrategy, policy: CensorPolicy, rows: Vec<PrefixAudiences>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidParameter(format!("a matrix needs at least 2 users, got {}", rows.len())));
        }
        if let Some(r) = rows.iter().find(|r| r.len() > strategy.n_max || r.is_empty()) {
            return Err(Error::InvalidParameter(format!(
                "row for user {} has {} entries (allowed 1..={})",
                r.user_id,
                r.len(),
                strategy.n_max
            )));
        }
        Ok(AudienceMatrix {
            n_max: strategy.n_max,
            strategy,
            policy,
            rows,
            subgroup: None,
        })
    }

    /// Length of quantile vectors over this matrix: the longest row.
    pub fn vector_len(&self) -> usize {
        self.rows.iter().map(|r| r.len()).max().unwrap_or(0).min(self.n_max)
    }

    /// Same rows seen through a different reporting floor.
    pub fn with_policy(&self, policy: CensorPolicy) -> AudienceMatrix {
        AudienceMatrix {
            policy,
            rows: self.rows.iter().map(|r| r.censored(policy)).collect(),
            ..self.clone()
        }
    }
}

/// One prefix-audience row per user of `population` (or of its subgroup
/// matching `subgroup`).
///
/// Audiences always come from `index`, which should cover the full universe;
/// restricting users never restricts whom they are compared against.
pub fn build_matrix(
    population: &Population,
    index: &InvertedIndex,
    strategy: &SelectionStrategy,
    policy: CensorPolicy,
    subgroup: Option<&DemographicFilter>,
) -> Result<AudienceMatrix> {
    build_matrix_with(population, index, strategy, policy, subgroup, Execution::default())
}

pub fn build_matrix_with(
    population: &Population,
    index: &InvertedIndex,
    strategy: &SelectionStrategy,
    policy: CensorPolicy,
    subgroup: Option<&DemographicFilter>,
    exec: Execution,
) -> Result<AudienceMatrix> {
    let users: Vec<_> = population
        .users()
        .iter()
        .filter(|u| subgroup.is_none_or(|f| f.matches(&u.demographics)))
        .collect();
    if users.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "a matrix needs at least 2 users, {} match",
            users.len()
        )));
    }
    let rows = exec.map_slice(&users, |profile| {
        let ordered = select_interests(profile, population, strategy);
        prefix_audiences(index, profile.user_id, &ordered, policy, None)
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let mut matrix = AudienceMatrix::from_rows(*strategy, policy, rows)?;
    matrix.subgroup = match (population.subgroup(), subgroup) {
        (Some(view), Some(f)) => Some(format!("{view};{}", f.label())),
        (Some(view), None) => Some(view.to_string()),
        (None, Some(f)) => Some(f.label()),
        (None, None) => None,
    };
    Ok(matrix)
}

/// A cutpoint together with the fit that produced it.
///
/// `fit` is `None` when uniqueness is observed directly: with an uncensored
/// floor the percentile already reaches an audience of one at N = 1, leaving
/// a single point and nothing to extrapolate. The cutpoint is then 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutpointEstimate {
    pub cutpoint: f64,
    pub fit: Option<FitResult>,
}

/// Truncates, fits, and solves one quantile vector.
pub fn estimate_cutpoint(vector: &QuantileVector, policy: CensorPolicy) -> Result<CutpointEstimate, FitError> {
    if policy.floor() == 1 && vector.values.first() == Some(&1) {
        return Ok(CutpointEstimate { cutpoint: 1.0, fit: None });
    }
    let points = truncate_at_floor(vector, policy)?;
    let fit = fit_loglog(&points)?;
    Ok(CutpointEstimate {
        cutpoint: fit.cutpoint,
        fit: Some(fit),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::build_index;
    use crate::index::tests::{toy, A, B, C};
    use crate::selection::SelectionKind;

    #[test]
    fn toy_matrix_least_popular() {
        let pop = toy();
        let idx = build_index(&pop).unwrap();
        let m = build_matrix(&pop, &idx, &SelectionStrategy::least_popular(), CensorPolicy::UNCENSORED, None).unwrap();
        assert_eq!(m.rows.len(), 3);
        // u1 {a,b}: LP order b(2), a(3) -> {b}=2, {a,b}=2
        assert_eq!(m.rows[0].ordered_interests, vec![B, A]);
        assert_eq!(m.rows[0].sizes, vec![2, 2]);
        // u2 {a}
        assert_eq!(m.rows[1].sizes, vec![3]);
        // u3 {a,b,c}: c, b, a -> 1, 1, 1
        assert_eq!(m.rows[2].ordered_interests, vec![C, B, A]);
        assert_eq!(m.rows[2].sizes, vec![1, 1, 1]);
        assert_eq!(m.vector_len(), 3);
        let again = build_matrix(&pop, &idx, &SelectionStrategy::least_popular(), CensorPolicy::UNCENSORED, None).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn too_few_users() {
        let pop = toy();
        let idx = build_index(&pop).unwrap();
        let f = DemographicFilter::gender(crate::population::Gender::Female);
        let err = build_matrix(&pop, &idx, &SelectionStrategy::least_popular(), CensorPolicy::UNCENSORED, Some(&f));
        assert!(err.is_err());
    }

    #[test]
    fn quantiles_on_toy_matrix() {
        let pop = toy();
        let idx = build_index(&pop).unwrap();
        let m = build_matrix(&pop, &idx, &SelectionStrategy::least_popular(), CensorPolicy::UNCENSORED, None).unwrap();
        // N=1 samples {2,3,1}; N=2 {2,1}; N=3 {1}
        let v = quantile_vector(&m, 50.0).unwrap();
        assert_eq!(v.values, vec![2, 1, 1]);
        let v = quantile_vector(&m, 90.0).unwrap();
        assert_eq!(v.values, vec![3, 2, 1]);
        assert!(quantile_vector(&m, 0.0).is_err());
        assert!(quantile_vector(&m, 100.0).is_err());
    }

    #[test]
    fn censoring_view_matches_rebuild() {
        let pop = toy();
        let idx = build_index(&pop).unwrap();
        let s = SelectionStrategy::random(3);
        let m1 = build_matrix(&pop, &idx, &s, CensorPolicy::UNCENSORED, None).unwrap();
        let m20 = build_matrix(&pop, &idx, &s, CensorPolicy::LEGACY, None).unwrap();
        assert_eq!(m1.with_policy(CensorPolicy::LEGACY), m20);
        assert_eq!(m20.strategy.kind, SelectionKind::Random);
    }

    #[test]
    fn direct_observation_at_first_interest() {
        let v = QuantileVector { q: 50.0, values: vec![1, 1, 1] };
        let e = estimate_cutpoint(&v, CensorPolicy::UNCENSORED).unwrap();
        assert_eq!(e.cutpoint, 1.0);
        assert!(e.fit.is_none());
        // under a floor of 20 the same shape is just censored, not observed
        let v = QuantileVector { q: 50.0, values: vec![20, 20] };
        assert!(estimate_cutpoint(&v, CensorPolicy::LEGACY).is_err());
    }
}
