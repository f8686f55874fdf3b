//! Synthetic population generator.
//!
//! Interest popularity follows Zipf weights over the catalog and the number of
//! interests per user is a clamped log-normal draw. Each user then takes that
//! many distinct interests, drawn sequentially without replacement with
//! probability proportional to the Zipf weight. Popularity and per-user counts
//! are independent.
//!
//! Optionally niche interests are grouped into communities. Each community
//! owns a disjoint pool of interests that the Zipf draws never reach. Every
//! user joins a fixed number of communities and takes a share of their
//! interests from them, split evenly, so members of a community share niche
//! interests. The calibrated profile does not use communities.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CountryCode, Demographics, Gender, InterestRecord, Population, Provenance, UserProfile, MIN_AGE};
use crate::{Error, InterestId, Result};

/// Clamped log-normal model for the number of interests per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterestCountModel {
    /// Location of the underlying normal (natural log scale); `exp(mu)` is the median.
    pub mu: f64,
    pub sigma: f64,
    #[serde(default = "default_min")]
    pub min: usize,
    pub max: usize,
}

fn default_min() -> usize {
    1
}

impl InterestCountModel {
    pub fn median(&self) -> f64 {
        self.mu.exp().clamp(self.min as f64, self.max as f64)
    }
}

/// Interest communities; see the module docs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommunityModel {
    pub count: usize,
    /// Interests per community pool. Pools are disjoint random subsets of the catalog.
    pub pool_size: usize,
    /// Communities each user joins.
    pub memberships: usize,
    /// Share of each user's interests taken from their communities.
    pub affinity: f64,
}

impl CommunityModel {
    /// Interests a user with `k` interests takes from each of their communities.
    /// Nobody holds more than half a pool.
    fn per_membership(&self, k: usize) -> usize {
        let wanted = (k as f64 * self.affinity / self.memberships as f64).round() as usize;
        wanted.min(self.pool_size / 2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_users: usize,
    pub n_interests: usize,
    /// Zipf exponent of interest popularity weights.
    pub popularity_exponent: f64,
    pub interests_per_user: InterestCountModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub communities: Option<CommunityModel>,
    pub seed: u64,
}

impl GeneratorConfig {
    /// Desk-scale profile with the heavy tails of a real ad-preference dataset:
    /// 150 interests for the median user, a long tail of heavy users, and a
    /// catalog where most interests are niche. At 100k users it puts the
    /// 90% uniqueness cutpoint near 3.7 interests for least-popular selection
    /// and near 22 for random selection.
    pub fn calibrated(n_users: usize, seed: u64) -> Self {
        GeneratorConfig {
            n_users,
            n_interests: 15_000,
            popularity_exponent: 1.0,
            interests_per_user: InterestCountModel {
                mu: 150f64.ln(),
                sigma: 1.0,
                min: 1,
                max: 5_000,
            },
            communities: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.interests_per_user;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_users == 0 {
            return bad("n_users must be positive".into());
        }
        if self.n_interests == 0 {
            return bad("n_interests must be positive".into());
        }
        if self.n_interests > u32::MAX as usize || self.n_users > u32::MAX as usize {
            return bad("population too large for 32-bit identifiers".into());
        }
        if !self.popularity_exponent.is_finite() || self.popularity_exponent <= 0.0 {
            return bad(format!("popularity_exponent must be positive and finite, got {}", self.popularity_exponent));
        }
        if !m.mu.is_finite() || !m.sigma.is_finite() || m.sigma < 0.0 {
            return bad(format!("log-normal parameters must be finite with sigma >= 0, got mu={} sigma={}", m.mu, m.sigma));
        }
        if m.min == 0 || m.min > m.max {
            return bad(format!("interest count clamp must satisfy 1 <= min <= max, got [{}, {}]", m.min, m.max));
        }
        if m.max > self.n_interests {
            return bad(format!("interest count clamp max {} exceeds n_interests {}", m.max, self.n_interests));
        }
        if let Some(c) = &self.communities {
            if c.count == 0 || c.pool_size < 2 || c.memberships == 0 || c.memberships > c.count {
                return bad(format!(
                    "communities need count >= 1, pool_size >= 2 and 1 <= memberships <= count, got {} / {} / {}",
                    c.count, c.pool_size, c.memberships
                ));
            }
            if !(0.0..=1.0).contains(&c.affinity) {
                return bad(format!("community affinity must lie in [0, 1], got {}", c.affinity));
            }
            let pooled = c.count.saturating_mul(c.pool_size);
            if pooled >= self.n_interests {
                return bad(format!("community pools hold {pooled} interests, leaving none of {} for the Zipf head", self.n_interests));
            }
            // Draws outside the pools grow with k, so the largest user bounds them.
            let head_draws = m.max - c.memberships * c.per_membership(m.max);
            if head_draws > self.n_interests - pooled {
                return bad(format!(
                    "users with {} interests need {head_draws} outside the community pools, only {} exist",
                    m.max,
                    self.n_interests - pooled
                ));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: GeneratorConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("generator config serialises")
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }
}

// Demographic mixture, proportioned after a real browser-extension user base.
const GENDER_WEIGHTS: [(Gender, f64); 3] = [
    (Gender::Male, 1949.0),
    (Gender::Female, 347.0),
    (Gender::Undisclosed, 94.0),
];

// (min age, max age, weight); `None` is an undisclosed age.
const AGE_WEIGHTS: [(Option<(u16, u16)>, f64); 5] = [
    (Some((13, 19)), 117.0),
    (Some((20, 39)), 1374.0),
    (Some((40, 64)), 578.0),
    (Some((65, 90)), 19.0),
    (None, 302.0),
];

const COUNTRY_WEIGHTS: [(&str, f64); 20] = [
    ("ES", 1131.0),
    ("FR", 335.0),
    ("MX", 122.0),
    ("AR", 115.0),
    ("US", 90.0),
    ("IT", 70.0),
    ("DE", 60.0),
    ("GB", 55.0),
    ("CO", 50.0),
    ("PT", 45.0),
    ("CL", 40.0),
    ("PE", 35.0),
    ("VE", 30.0),
    ("BR", 30.0),
    ("BE", 25.0),
    ("CH", 25.0),
    ("NL", 20.0),
    ("EC", 20.0),
    ("UY", 15.0),
    ("IE", 15.0),
];

/// Fraction of profiles without a country.
const MISSING_COUNTRY: f64 = 0.02;

struct DemographicSampler {
    gender: WeightedAliasIndex<f64>,
    age: WeightedAliasIndex<f64>,
    country: WeightedAliasIndex<f64>,
    countries: Vec<CountryCode>,
}

impl DemographicSampler {
    fn new() -> Self {
        let alias = |w: Vec<f64>| WeightedAliasIndex::new(w).expect("static weights are valid");
        DemographicSampler {
            gender: alias(GENDER_WEIGHTS.iter().map(|g| g.1).collect()),
            age: alias(AGE_WEIGHTS.iter().map(|a| a.1).collect()),
            country: alias(COUNTRY_WEIGHTS.iter().map(|c| c.1).collect()),
            countries: COUNTRY_WEIGHTS
                .iter()
                .map(|c| CountryCode::new(c.0).expect("static codes are valid"))
                .collect(),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Demographics {
        let gender = GENDER_WEIGHTS[self.gender.sample(rng)].0;
        let age_years = AGE_WEIGHTS[self.age.sample(rng)].0.map(|(lo, hi)| rng.random_range(lo..=hi));
        debug_assert!(age_years.is_none_or(|a| a >= MIN_AGE));
        let country = if rng.random_bool(MISSING_COUNTRY) {
            None
        } else {
            Some(self.countries[self.country.sample(rng)])
        };
        Demographics {
            gender,
            age_years,
            country,
        }
    }
}

/// Draws `k` distinct interests, sequentially and proportionally to weight.
struct InterestSampler {
    weights: Vec<f64>,
    alias: WeightedAliasIndex<f64>,
    stamp: Vec<u32>,
    generation: u32,
}

impl InterestSampler {
    fn new(weights: Vec<f64>) -> Self {
        let alias = WeightedAliasIndex::new(weights.clone()).expect("zipf weights are positive and finite");
        let stamp = vec![0; weights.len()];
        InterestSampler {
            weights,
            alias,
            stamp,
            generation: 0,
        }
    }

    /// Fills `out` up to `k` distinct interests, keeping the ones already in it.
    fn sample(&mut self, rng: &mut ChaCha8Rng, k: usize, out: &mut Vec<InterestId>) {
        self.generation += 1;
        let generation = self.generation;
        for &i in out.iter() {
            self.stamp[i as usize] = generation;
        }
        // Rejecting repeats of a weighted draw with replacement is the same as
        // drawing from the renormalised remaining weights.
        let budget = 64 * k + 1024;
        let mut attempts = 0;
        while out.len() < k && attempts < budget {
            attempts += 1;
            let i = self.alias.sample(rng);
            if self.stamp[i] != generation {
                self.stamp[i] = generation;
                out.push(i as InterestId);
            }
        }
        if out.len() < k {
            self.complete_with_keys(rng, k, out);
        }
        out.sort_unstable();
    }

    /// Finishes a draw whose rejection budget ran out, using exponential keys
    /// over the interests not yet taken (same sequential distribution).
    fn complete_with_keys(&mut self, rng: &mut ChaCha8Rng, k: usize, out: &mut Vec<InterestId>) {
        let generation = self.generation;
        let mut keyed: Vec<(f64, usize)> = (0..self.weights.len())
            .filter(|&i| self.stamp[i] != generation && self.weights[i] > 0.0)
            .map(|i| {
                let u: f64 = rng.random::<f64>();
                (-(1.0 - u).ln() / self.weights[i], i)
            })
            .collect();
        let need = k - out.len();
        keyed.select_nth_unstable_by(need - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, i) in &keyed[..need] {
            self.stamp[i] = generation;
            out.push(i as InterestId);
        }
    }
}

/// Generates a population deterministically from `config`.
pub fn generate_population(config: &GeneratorConfig) -> Result<Population> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights: Vec<f64> = (0..config.n_interests)
        .map(|rank| ((rank + 1) as f64).powf(-config.popularity_exponent))
        .collect();
    if weights.iter().any(|w| *w <= 0.0 || !w.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "popularity_exponent {} underflows the weights of a {}-interest catalog",
            config.popularity_exponent, config.n_interests
        )));
    }
    let pools: Vec<Vec<InterestId>> = match &config.communities {
        Some(c) => {
            let pooled = index::sample(&mut rng, config.n_interests, c.count * c.pool_size).into_vec();
            pooled
                .chunks(c.pool_size)
                .map(|chunk| {
                    let mut pool: Vec<InterestId> = chunk.iter().map(|&i| i as InterestId).collect();
                    pool.sort_unstable();
                    for &i in &pool {
                        weights[i as usize] = 0.0;
                    }
                    pool
                })
                .collect()
        }
        None => Vec::new(),
    };
    let mut interests = InterestSampler::new(weights);
    let counts = &config.interests_per_user;
    let lognormal = LogNormal::new(counts.mu, counts.sigma)
        .map_err(|e| Error::InvalidConfig(format!("log-normal: {e}")))?;
    let demographics = DemographicSampler::new();

    let mut users = Vec::with_capacity(config.n_users);
    let mut drawn = Vec::new();
    for user in 0..config.n_users {
        let demo = demographics.sample(&mut rng);
        let raw: f64 = lognormal.sample(&mut rng);
        let k = (raw.round() as usize).clamp(counts.min, counts.max);
        drawn.clear();
        if let Some(c) = &config.communities {
            let take = c.per_membership(k);
            for community in index::sample(&mut rng, c.count, c.memberships) {
                let pool = &pools[community];
                drawn.extend(index::sample(&mut rng, pool.len(), take).into_iter().map(|i| pool[i]));
            }
        }
        interests.sample(&mut rng, k, &mut drawn);
        users.push(UserProfile {
            user_id: user as u64,
            demographics: demo,
            interests: drawn.clone(),
        });
    }

    let catalog = (0..config.n_interests)
        .map(|i| InterestRecord {
            interest_id: i as InterestId,
            name: format!("interest-{i:05}"),
            global_audience: 0,
        })
        .collect();
    Population::new(
        catalog,
        users,
        Provenance::Generated {
            seed: config.seed,
            config_digest: config.digest(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n_users: usize, n_interests: usize, seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            n_users,
            n_interests,
            popularity_exponent: 1.0,
            interests_per_user: InterestCountModel {
                mu: 10f64.ln(),
                sigma: 0.8,
                min: 1,
                max: n_interests.min(40),
            },
            communities: None,
            seed,
        }
    }

    #[test]
    fn single_user_single_interest() {
        let pop = generate_population(&small(1, 1, 99)).unwrap();
        assert_eq!(pop.len(), 1);
        assert_eq!(pop.users()[0].interests, vec![0]);
        assert_eq!(pop.catalog()[0].global_audience, 1);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = generate_population(&small(100, 50, 42)).unwrap();
        let b = generate_population(&small(100, 50, 42)).unwrap();
        assert_eq!(a.users(), b.users());
        assert_eq!(a.catalog(), b.catalog());
        let c = generate_population(&small(100, 50, 43)).unwrap();
        assert_ne!(a.users(), c.users());
    }

    #[test]
    fn counts_respect_clamp_and_catalog_audits() {
        let mut cfg = small(500, 60, 3);
        cfg.interests_per_user.min = 5;
        cfg.interests_per_user.max = 12;
        let pop = generate_population(&cfg).unwrap();
        for u in pop.users() {
            assert!((5..=12).contains(&u.interests.len()));
            assert!(u.interests.windows(2).all(|w| w[0] < w[1]));
        }
        pop.audit().unwrap();
    }

    #[test]
    fn exhausting_rejection_budget_still_draws_distinct_interests() {
        // A steep exponent makes tail interests nearly impossible to hit by rejection.
        let cfg = GeneratorConfig {
            n_users: 20,
            n_interests: 200,
            popularity_exponent: 6.0,
            interests_per_user: InterestCountModel {
                mu: 150f64.ln(),
                sigma: 0.1,
                min: 150,
                max: 190,
            },
            communities: None,
            seed: 1,
        };
        let pop = generate_population(&cfg).unwrap();
        for u in pop.users() {
            assert!(u.interests.len() >= 150);
        }
        pop.audit().unwrap();
    }

    #[test]
    fn rejects_invalid_configs() {
        let mut cfg = small(10, 10, 1);
        cfg.interests_per_user.max = 11;
        assert!(matches!(generate_population(&cfg), Err(Error::InvalidConfig(_))));
        let mut cfg = small(10, 10, 1);
        cfg.popularity_exponent = f64::NAN;
        assert!(cfg.validate().is_err());
        let mut cfg = small(10, 10, 1);
        cfg.interests_per_user.sigma = f64::INFINITY;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = GeneratorConfig::calibrated(1000, 7);
        let text = cfg.to_toml_string();
        assert_eq!(GeneratorConfig::from_toml_str(&text).unwrap(), cfg);
        assert!(GeneratorConfig::from_toml_str("n_users = 3\nbogus = 1").is_err());
    }
}
