//! Nanotargeting campaign simulation and platform-side policy gates.
//!
//! A campaign targets one user with N of that user's own interests and is
//! delivered to every user matching all of them. It succeeds when the target
//! is the only user reached. Budgets, auctions and delivery pacing are not
//! modelled: reach is pure set membership.

use std::fmt;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::index::{reported_size, AudienceQuery, CensorPolicy, InvertedIndex};
use crate::population::Population;
use crate::seed::{self, Domain};
use crate::selection::{select_interests, SelectionKind, SelectionStrategy};
use crate::{Error, InterestId, Result, UserId, MAX_QUERY_INTERESTS};

/// Interest counts of a real nanotargeting experiment grid.
pub const DEFAULT_INTEREST_GRID: [usize; 7] = [5, 7, 9, 12, 18, 20, 22];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub target: UserId,
    pub strategy: SelectionStrategy,
    pub n_interests: usize,
    /// Floor applied to the reach number shown to the advertiser.
    pub policy: CensorPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignOutcome {
    pub target: UserId,
    pub n_interests: usize,
    pub interests_used: Vec<InterestId>,
    /// Users actually reached (true cardinality).
    pub reached_count: u64,
    /// Potential reach the advertiser sees.
    pub reported_reach: u64,
    pub target_reached: bool,
    pub success: bool,
    /// The target holds fewer interests than requested; all of them were used.
    pub shortened: bool,
}

/// Interests a campaign uses: a prefix of the target's 25-interest selection,
/// so campaigns with more interests extend those with fewer.
pub fn campaign_interests(population: &Population, spec: &CampaignSpec) -> Result<(Vec<InterestId>, bool)> {
    if !(1..=MAX_QUERY_INTERESTS).contains(&spec.n_interests) {
        return Err(Error::InvalidParameter(format!(
            "campaigns use 1..={MAX_QUERY_INTERESTS} interests, got {}",
            spec.n_interests
        )));
    }
    let profile = population.user(spec.target).ok_or(Error::UnknownUser(spec.target))?;
    let full = select_interests(profile, population, &spec.strategy.with_n_max(MAX_QUERY_INTERESTS)?);
    let shortened = full.len() < spec.n_interests;
    let mut used = full;
    used.truncate(spec.n_interests);
    Ok((used, shortened))
}

pub fn run_campaign(index: &InvertedIndex, population: &Population, spec: &CampaignSpec) -> Result<CampaignOutcome> {
    let (interests, shortened) = campaign_interests(population, spec)?;
    let members = index.audience_members(&AudienceQuery::new(interests.iter().copied())?, None)?;
    let reached_count = members.users.len() as u64;
    let target_reached = members.users.contains(&spec.target);
    Ok(CampaignOutcome {
        target: spec.target,
        n_interests: spec.n_interests,
        interests_used: interests,
        reached_count,
        reported_reach: reported_size(reached_count, spec.policy),
        target_reached,
        success: reached_count == 1 && target_reached,
        shortened,
    })
}

/// Users to target: uniform without replacement, or with replacement when
/// more targets than users are requested.
pub fn sample_targets(population: &Population, n_targets: usize, seed: u64) -> Vec<UserId> {
    let users = population.users();
    let mut rng = seed::rng_for(seed, Domain::Targets, 0);
    if n_targets <= users.len() {
        let mut picked = index::sample(&mut rng, users.len(), n_targets).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| users[i].user_id).collect()
    } else {
        (0..n_targets).map(|_| users[rng.random_range(0..users.len())].user_id).collect()
    }
}

/// Fraction of `n_targets` sampled users a campaign of `n_interests` isolates.
pub fn success_rate(
    index: &InvertedIndex,
    population: &Population,
    strategy: &SelectionStrategy,
    n_interests: usize,
    n_targets: usize,
    seed: u64,
) -> Result<f64> {
    if n_targets == 0 {
        return Err(Error::InvalidParameter("n_targets must be at least 1".into()));
    }
    let targets = sample_targets(population, n_targets, seed);
    let outcomes = Execution::default().map_slice(&targets, |&target| {
        run_campaign(
            index,
            population,
            &CampaignSpec {
                target,
                strategy: *strategy,
                n_interests,
                policy: CensorPolicy::UNCENSORED,
            },
        )
        .map(|o| o.success)
    });
    let mut successes = 0usize;
    for o in outcomes {
        successes += o? as usize;
    }
    Ok(successes as f64 / n_targets as f64)
}

/// Platform countermeasures applied before a campaign may run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyGate {
    pub max_interests: Option<usize>,
    /// Minimum true (uncensored) audience a campaign must address.
    pub min_active_audience: Option<u64>,
}

impl PolicyGate {
    pub fn is_pass_through(&self) -> bool {
        self.max_interests.is_none() && self.min_active_audience.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "snake_case")]
pub enum Rejection {
    MaxInterests { limit: usize, requested: usize },
    MinActiveAudience { limit: u64, audience: u64 },
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::MaxInterests { limit, requested } => {
                write!(f, "max_interests: {requested} interests requested, limit {limit}")
            }
            Rejection::MinActiveAudience { limit, audience } => {
                write!(f, "min_active_audience: audience {audience} below limit {limit}")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum PolicyDecision {
    Accepted,
    Rejected(Rejection),
}

pub fn apply_policy(index: &InvertedIndex, population: &Population, spec: &CampaignSpec, gate: &PolicyGate) -> Result<PolicyDecision> {
    if let Some(limit) = gate.max_interests {
        if spec.n_interests > limit {
            return Ok(PolicyDecision::Rejected(Rejection::MaxInterests {
                limit,
                requested: spec.n_interests,
            }));
        }
    }
    if let Some(limit) = gate.min_active_audience {
        let (interests, _) = campaign_interests(population, spec)?;
        let audience = index.audience_size(&AudienceQuery::new(interests)?)?;
        if audience < limit {
            return Ok(PolicyDecision::Rejected(Rejection::MinActiveAudience { limit, audience }));
        }
    }
    Ok(PolicyDecision::Accepted)
}

/// A gated campaign: the decision, and the outcome when it ran.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatedCampaign {
    pub spec: CampaignSpec,
    pub decision: PolicyDecision,
    pub outcome: Option<CampaignOutcome>,
}

pub fn run_batch(index: &InvertedIndex, population: &Population, specs: &[CampaignSpec], gate: &PolicyGate) -> Result<Vec<GatedCampaign>> {
    Execution::default()
        .map_slice(specs, |spec| {
            let decision = apply_policy(index, population, spec, gate)?;
            let outcome = match decision {
                PolicyDecision::Accepted => Some(run_campaign(index, population, spec)?),
                PolicyDecision::Rejected(_) => None,
            };
            Ok(GatedCampaign {
                spec: *spec,
                decision,
                outcome,
            })
        })
        .into_iter()
        .collect()
}

/// Success statistics for one interest count of a simulation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub n_interests: usize,
    pub targets: usize,
    pub accepted: usize,
    pub successes: usize,
    /// Successes over all targets; rejected campaigns count as failures.
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub rows: Vec<GridRow>,
    pub campaigns: Vec<GatedCampaign>,
}

/// Runs every interest count of `grid` against the same sampled targets.
///
/// Because each target's campaigns are nested prefixes of one selection,
/// per-target success can only switch on as N grows.
#[allow(clippy::too_many_arguments)]
pub fn simulate_grid(
    index: &InvertedIndex,
    population: &Population,
    strategy: &SelectionStrategy,
    grid: &[usize],
    n_targets: usize,
    seed: u64,
    gate: &PolicyGate,
    policy: CensorPolicy,
) -> Result<Simulation> {
    if n_targets == 0 {
        return Err(Error::InvalidParameter("n_targets must be at least 1".into()));
    }
    let targets = sample_targets(population, n_targets, seed);
    let mut specs = Vec::with_capacity(grid.len() * targets.len());
    for &n in grid {
        specs.extend(targets.iter().map(|&target| CampaignSpec {
            target,
            strategy: *strategy,
            n_interests: n,
            policy,
        }));
    }
    let campaigns = run_batch(index, population, &specs, gate)?;
    let rows = grid
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let slice = &campaigns[i * targets.len()..(i + 1) * targets.len()];
            let accepted = slice.iter().filter(|c| c.outcome.is_some()).count();
            let successes = slice.iter().filter(|c| c.outcome.as_ref().is_some_and(|o| o.success)).count();
            GridRow {
                n_interests: n,
                targets: targets.len(),
                accepted,
                successes,
                success_rate: successes as f64 / targets.len() as f64,
            }
        })
        .collect();
    Ok(Simulation { rows, campaigns })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchLine {
    target: UserId,
    strategy: SelectionKind,
    #[serde(default)]
    seed: u64,
    n_interests: usize,
}

/// Reads a line-delimited campaign batch:
/// `{"target":17,"strategy":"random","seed":3,"n_interests":12}`.
pub fn read_campaign_batch(path: &Path, policy: CensorPolicy) -> Result<Vec<CampaignSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut specs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: BatchLine = serde_json::from_str(line).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        specs.push(CampaignSpec {
            target: rec.target,
            strategy: SelectionStrategy::new(rec.strategy, rec.seed),
            n_interests: rec.n_interests,
            policy,
        });
    }
    Ok(specs)
}

/// `target,n_interests,reached_count,reported_reach,success` rows.
pub fn outcomes_csv<'a>(outcomes: impl IntoIterator<Item = &'a CampaignOutcome>) -> String {
    let mut out = String::from("target,n_interests,reached_count,reported_reach,success\n");
    for o in outcomes {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            o.target, o.n_interests, o.reached_count, o.reported_reach, o.success
        ));
    }
    out
}
