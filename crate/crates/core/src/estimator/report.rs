use serde::{Deserialize, Serialize};

use super::{bootstrap_ci_with, build_matrix_with, estimate_cutpoint, quantile_vector, AudienceMatrix};
use crate::exec::Execution;
use crate::index::{CensorPolicy, InvertedIndex};
use crate::population::{AgeBand, CountryCode, DemographicFilter, Gender, Population};
use crate::selection::{SelectionKind, SelectionStrategy};
use crate::{Error, Result, MAX_QUERY_INTERESTS};

/// Uniqueness probabilities reported by default.
pub const DEFAULT_PROBABILITIES: [f64; 4] = [0.5, 0.8, 0.9, 0.95];

/// Smallest demographic group that gets its own report.
pub const DEFAULT_MIN_GROUP_USERS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSettings {
    pub n_resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        BootstrapSettings {
            n_resamples: super::DEFAULT_RESAMPLES,
            seed: 0,
        }
    }
}

/// One `(strategy, P)` line of a uniqueness report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: SelectionKind,
    pub strategy_seed: u64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    /// `None` when uniqueness was observed directly at N = 1.
    #[serde(rename = "A")]
    pub decay: Option<f64>,
    #[serde(rename = "B")]
    pub intercept: Option<f64>,
    pub r_squared: Option<f64>,
    pub cutpoint: f64,
    /// Whole number of interests an attacker would use, `ceil(cutpoint)`.
    pub actionable_interests: u64,
    /// False when the cutpoint exceeds the 25-interest query limit.
    pub within_query_limit: bool,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_brackets: bool,
    pub n_points_used: usize,
    pub n_resamples: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub subgroup: Option<String>,
    pub n_users: usize,
    pub floor: u64,
    pub bootstrap_seed: u64,
    pub rows: Vec<ReportRow>,
    /// Non-fatal findings, such as N_P decreasing in P for one strategy.
    pub warnings: Vec<String>,
}

const CSV_HEADER: &str =
    "subgroup,strategy,P,Q,A,B,r_squared,cutpoint,actionable_interests,ci_low,ci_high,n_points_used,n_resamples,n_failed\n";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl UniquenessReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialise")
    }

    /// Flat table, one line per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        self.append_csv_rows(&mut out);
        out
    }

    fn append_csv_rows(&self, out: &mut String) {
        let label = self.subgroup.as_deref().unwrap_or("all");
        let label = if label.contains(',') { format!("\"{label}\"") } else { label.to_string() };
        for r in &self.rows {
            out.push_str(&format!(
                "{label},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.strategy.label(),
                r.p,
                r.q,
                opt(r.decay),
                opt(r.intercept),
                opt(r.r_squared),
                r.cutpoint,
                r.actionable_interests,
                r.ci_low,
                r.ci_high,
                r.n_points_used,
                r.n_resamples,
                r.n_failed
            ));
        }
    }

    pub fn row(&self, kind: SelectionKind, p: f64) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.strategy == kind && (r.p - p).abs() < 1e-12)
    }
}

fn quantile_for(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("probability {p} outside (0, 1)")));
    }
    Ok((p * 100.0 * 1e9).round() / 1e9)
}

/// Report rows for one matrix, one per probability.
pub fn report_rows(matrix: &AudienceMatrix, p_list: &[f64], settings: &BootstrapSettings, exec: Execution) -> Result<Vec<ReportRow>> {
    p_list
        .iter()
        .map(|&p| {
            let q = quantile_for(p)?;
            let estimate = estimate_cutpoint(&quantile_vector(matrix, q)?, matrix.policy)?;
            let boot = bootstrap_ci_with(matrix, q, settings.n_resamples, settings.seed, exec)?;
            Ok(ReportRow {
                strategy: matrix.strategy.kind,
                strategy_seed: matrix.strategy.seed,
                p,
                q,
                decay: estimate.fit.map(|f| f.decay),
                intercept: estimate.fit.map(|f| f.intercept),
                r_squared: estimate.fit.map(|f| f.r_squared),
                cutpoint: estimate.cutpoint,
                actionable_interests: estimate.cutpoint.max(0.0).ceil() as u64,
                within_query_limit: estimate.cutpoint <= MAX_QUERY_INTERESTS as f64,
                ci_low: boot.ci_low,
                ci_high: boot.ci_high,
                ci_brackets: boot.brackets,
                n_points_used: estimate.fit.map_or(1, |f| f.n_points_used),
                n_resamples: boot.n_resamples,
                n_failed: boot.n_failed,
            })
        })
        .collect()
}

fn monotonicity_warnings(rows: &[ReportRow]) -> Vec<String> {
    let mut warnings = Vec::new();
    for kind in [SelectionKind::LeastPopular, SelectionKind::Random] {
        let mut of_kind: Vec<&ReportRow> = rows.iter().filter(|r| r.strategy == kind).collect();
        of_kind.sort_by(|a, b| a.p.total_cmp(&b.p));
        for pair in of_kind.windows(2) {
            if pair[1].cutpoint < pair[0].cutpoint {
                warnings.push(format!(
                    "{}: N_P decreases from {:.4} at P={} to {:.4} at P={}",
                    kind.label(),
                    pair[0].cutpoint,
                    pair[0].p,
                    pair[1].cutpoint,
                    pair[1].p
                ));
            }
        }
    }
    for r in rows.iter().filter(|r| !r.ci_brackets) {
        warnings.push(format!(
            "{} P={}: CI [{:.4}, {:.4}] does not contain the point estimate {:.4}",
            r.strategy.label(),
            r.p,
            r.ci_low,
            r.ci_high,
            r.cutpoint
        ));
    }
    for r in rows.iter().filter(|r| !r.within_query_limit) {
        warnings.push(format!(
            "{} P={}: N_P = {:.2} exceeds the {MAX_QUERY_INTERESTS}-interest query limit",
            r.strategy.label(),
            r.p,
            r.cutpoint
        ));
    }
    warnings
}

/// Assembles a report from already-built matrices (all for the same users).
pub fn report_from_matrices(matrices: &[AudienceMatrix], p_list: &[f64], settings: &BootstrapSettings, exec: Execution) -> Result<UniquenessReport> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::InvalidParameter("no strategies requested".into()))?;
    let mut rows = Vec::new();
    for m in matrices {
        rows.extend(report_rows(m, p_list, settings, exec)?);
    }
    Ok(UniquenessReport {
        subgroup: first.subgroup.clone(),
        n_users: first.rows.len(),
        floor: first.policy.floor(),
        bootstrap_seed: settings.seed,
        warnings: monotonicity_warnings(&rows),
        rows,
    })
}

pub fn uniqueness_report(
    population: &Population,
    index: &InvertedIndex,
    strategies: &[SelectionStrategy],
    p_list: &[f64],
    policy: CensorPolicy,
    settings: &BootstrapSettings,
) -> Result<UniquenessReport> {
    uniqueness_report_with(population, index, strategies, p_list, policy, settings, Execution::default())
}

pub fn uniqueness_report_with(
    population: &Population,
    index: &InvertedIndex,
    strategies: &[SelectionStrategy],
    p_list: &[f64],
    policy: CensorPolicy,
    settings: &BootstrapSettings,
    exec: Execution,
) -> Result<UniquenessReport> {
    for &p in p_list {
        quantile_for(p)?;
    }
    let matrices = strategies
        .iter()
        .map(|s| build_matrix_with(population, index, s, policy, None, exec))
        .collect::<Result<Vec<_>>>()?;
    report_from_matrices(&matrices, p_list, settings, exec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    Gender,
    AgeBand,
    Country,
}

impl std::str::FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gender" => Ok(Grouping::Gender),
            "age" | "age-band" | "age_band" => Ok(Grouping::AgeBand),
            "country" => Ok(Grouping::Country),
            other => Err(Error::InvalidParameter(format!("unknown grouping {other:?} (expected gender, age or country)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedGroup {
    pub label: String,
    pub users: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReports {
    pub grouping: Grouping,
    pub min_users: usize,
    pub reports: Vec<UniquenessReport>,
    pub skipped: Vec<SkippedGroup>,
}

impl SubgroupReports {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialise")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        for r in &self.reports {
            r.append_csv_rows(&mut out);
        }
        out
    }
}

fn groups(population: &Population, grouping: Grouping) -> Vec<DemographicFilter> {
    match grouping {
        Grouping::Gender => [Gender::Male, Gender::Female, Gender::Undisclosed]
            .into_iter()
            .map(DemographicFilter::gender)
            .collect(),
        Grouping::AgeBand => AgeBand::ALL.into_iter().map(DemographicFilter::age_band).collect(),
        Grouping::Country => {
            let mut codes: Vec<CountryCode> = population.users().iter().filter_map(|u| u.demographics.country).collect();
            codes.sort_unstable();
            codes.dedup();
            codes.into_iter().map(DemographicFilter::country).collect()
        }
    }
}

/// One report per demographic group with at least `min_users` users.
///
/// Groups below the threshold are listed in `skipped`. Every group is still
/// measured against the full universe in `index`.
#[allow(clippy::too_many_arguments)]
pub fn subgroup_reports(
    population: &Population,
    index: &InvertedIndex,
    grouping: Grouping,
    min_users: usize,
    strategies: &[SelectionStrategy],
    p_list: &[f64],
    policy: CensorPolicy,
    settings: &BootstrapSettings,
) -> Result<SubgroupReports> {
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for filter in groups(population, grouping) {
        let users = population.users().iter().filter(|u| filter.matches(&u.demographics)).count();
        if users < min_users.max(2) {
            skipped.push(SkippedGroup {
                label: filter.label(),
                users,
                reason: format!("{users} users, below the minimum of {min_users}"),
            });
            continue;
        }
        let view = population.filter_subgroup(&filter)?;
        reports.push(uniqueness_report(&view, index, strategies, p_list, policy, settings)?);
    }
    if reports.is_empty() {
        return Err(Error::NoQualifyingGroups { min_users });
    }
    Ok(SubgroupReports {
        grouping,
        min_users,
        reports,
        skipped,
    })
}
