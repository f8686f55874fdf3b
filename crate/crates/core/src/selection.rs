//! Interest selection strategies and per-user prefix audiences.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::index::{reported_size, CensorPolicy, InvertedIndex};
use crate::population::{DemographicFilter, Population, UserProfile};
use crate::seed::{self, Domain};
use crate::{Error, InterestId, Result, UserId, MAX_QUERY_INTERESTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionKind {
    /// The user's interests with the smallest global audience first.
    #[serde(rename = "lp")]
    LeastPopular,
    /// A uniform random ordering of the user's interests.
    Random,
}

impl SelectionKind {
    pub fn label(self) -> &'static str {
        match self {
            SelectionKind::LeastPopular => "lp",
            SelectionKind::Random => "random",
        }
    }
}

impl std::str::FromStr for SelectionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lp" | "least-popular" | "least_popular" => Ok(SelectionKind::LeastPopular),
            "r" | "random" => Ok(SelectionKind::Random),
            other => Err(Error::InvalidParameter(format!("unknown strategy {other:?} (expected lp or random)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectionStrategy {
    pub kind: SelectionKind,
    /// Master seed; only used by [`SelectionKind::Random`].
    pub seed: u64,
    pub n_max: usize,
}

impl SelectionStrategy {
    pub fn least_popular() -> Self {
        SelectionStrategy {
            kind: SelectionKind::LeastPopular,
            seed: 0,
            n_max: MAX_QUERY_INTERESTS,
        }
    }

    pub fn random(seed: u64) -> Self {
        SelectionStrategy {
            kind: SelectionKind::Random,
            seed,
            n_max: MAX_QUERY_INTERESTS,
        }
    }

    pub fn new(kind: SelectionKind, seed: u64) -> Self {
        match kind {
            SelectionKind::LeastPopular => Self::least_popular(),
            SelectionKind::Random => Self::random(seed),
        }
    }

    pub fn with_n_max(mut self, n_max: usize) -> Result<Self> {
        if !(1..=MAX_QUERY_INTERESTS).contains(&n_max) {
            return Err(Error::InvalidParameter(format!("n_max must be in 1..={MAX_QUERY_INTERESTS}, got {n_max}")));
        }
        self.n_max = n_max;
        Ok(self)
    }
}

/// Orders `interests` (sorted ascending) under `strategy` and keeps at most
/// `n_max` of them.
///
/// Random orderings come from a generator seeded by the master seed and
/// `user`, so a user's selection never depends on which other users are
/// processed, and a shorter `n_max` always yields a prefix of a longer one.
pub fn select_from(
    user: UserId,
    interests: &[InterestId],
    audience: impl Fn(InterestId) -> u64,
    strategy: &SelectionStrategy,
) -> Vec<InterestId> {
    let take = strategy.n_max.min(interests.len());
    match strategy.kind {
        SelectionKind::LeastPopular => {
            let mut keyed: Vec<(u64, InterestId)> = interests.iter().map(|&i| (audience(i), i)).collect();
            keyed.sort_unstable();
            keyed.into_iter().take(take).map(|(_, i)| i).collect()
        }
        SelectionKind::Random => {
            let mut rng = seed::rng_for(strategy.seed, Domain::Selection, user);
            let mut pool = interests.to_vec();
            for i in 0..take {
                let j = rng.random_range(i..pool.len());
                pool.swap(i, j);
            }
            pool.truncate(take);
            pool
        }
    }
}

/// Selection over a profile's full interest set, using catalog audiences.
pub fn select_interests(profile: &UserProfile, population: &Population, strategy: &SelectionStrategy) -> Vec<InterestId> {
    select_from(
        profile.user_id,
        &profile.interests,
        |i| population.global_audience(i).unwrap_or(0),
        strategy,
    )
}

/// Audience sizes of the successive prefixes of one user's selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixAudiences {
    pub user_id: UserId,
    pub ordered_interests: Vec<InterestId>,
    /// Censored sizes; `sizes[n - 1]` is what an advertiser sees for the first `n` interests.
    pub sizes: Vec<u64>,
    /// Uncensored counts behind `sizes`.
    pub true_sizes: Vec<u64>,
}

impl PrefixAudiences {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Re-applies a different reporting floor to the true counts.
    pub fn censored(&self, policy: CensorPolicy) -> PrefixAudiences {
        PrefixAudiences {
            sizes: self.true_sizes.iter().map(|&c| reported_size(c, policy)).collect(),
            ..self.clone()
        }
    }
}

pub fn prefix_audiences(
    index: &InvertedIndex,
    user_id: UserId,
    ordered: &[InterestId],
    policy: CensorPolicy,
    filter: Option<&DemographicFilter>,
) -> Result<PrefixAudiences> {
    let true_sizes = index.prefix_counts(ordered, filter)?;
    Ok(PrefixAudiences {
        user_id,
        ordered_interests: ordered.to_vec(),
        sizes: true_sizes.iter().map(|&c| reported_size(c, policy)).collect(),
        true_sizes,
    })
}
