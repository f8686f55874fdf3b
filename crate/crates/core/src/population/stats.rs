use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AgeBand, Population};
use crate::estimator::nearest_rank;
use crate::{Error, Result};

/// Percentile levels reported for every distribution.
pub const STATS_PERCENTILES: [f64; 7] = [1.0, 5.0, 25.0, 50.0, 75.0, 95.0, 99.0];

/// Nearest-rank percentiles of an integer distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub count: usize,
    pub min: u64,
    pub max: u64,
    pub mean: f64,
    /// `(percentile, value)` for each level in [`STATS_PERCENTILES`].
    pub values: Vec<(f64, u64)>,
}

impl Percentiles {
    fn of(mut data: Vec<u64>) -> Option<Self> {
        if data.is_empty() {
            return None;
        }
        data.sort_unstable();
        let mean = data.iter().map(|&v| v as f64).sum::<f64>() / data.len() as f64;
        Some(Percentiles {
            count: data.len(),
            min: data[0],
            max: data[data.len() - 1],
            mean,
            values: STATS_PERCENTILES.iter().map(|&q| (q, nearest_rank(&data, q))).collect(),
        })
    }

    pub fn at(&self, q: f64) -> Option<u64> {
        self.values.iter().find(|(p, _)| *p == q).map(|(_, v)| *v)
    }

    pub fn median(&self) -> u64 {
        self.at(50.0).expect("median is always reported")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Breakdown {
    pub label: String,
    pub users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub n_users: usize,
    pub n_interests: usize,
    /// Catalog interests held by at least one user.
    pub n_interests_held: usize,
    pub total_occurrences: u64,
    pub interests_per_user: Percentiles,
    /// Audience distribution over interests held by at least one user.
    pub global_audience: Percentiles,
    pub gender: Vec<Breakdown>,
    pub age_band: Vec<Breakdown>,
    /// Sorted by descending user count, then code.
    pub country: Vec<Breakdown>,
}

impl StatsReport {
    /// Number of distinct countries among users who disclosed one.
    pub fn distinct_countries(&self) -> usize {
        self.country.iter().filter(|b| b.label != "unknown").count()
    }
}

pub fn summary_stats(population: &Population) -> Result<StatsReport> {
    if population.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let per_user = population.users().iter().map(|u| u.interests.len() as u64).collect();
    let audiences: Vec<u64> = population
        .catalog()
        .iter()
        .map(|r| r.global_audience)
        .filter(|&a| a > 0)
        .collect();
    let n_interests_held = audiences.len();

    let mut gender = BTreeMap::new();
    let mut age = BTreeMap::new();
    let mut country: BTreeMap<String, usize> = BTreeMap::new();
    for u in population.users() {
        *gender.entry(u.demographics.gender).or_insert(0) += 1;
        *age.entry(u.demographics.age_band()).or_insert(0) += 1;
        let key = u.demographics.country.map_or_else(|| "unknown".to_string(), |c| c.to_string());
        *country.entry(key).or_insert(0) += 1;
    }
    let gender = gender
        .into_iter()
        .map(|(g, users)| Breakdown {
            label: g.to_string(),
            users,
        })
        .collect();
    let mut age_band: Vec<Breakdown> = AgeBand::ALL
        .iter()
        .filter_map(|b| {
            age.get(&Some(*b)).map(|&users| Breakdown {
                label: b.label().to_string(),
                users,
            })
        })
        .collect();
    if let Some(&users) = age.get(&None) {
        age_band.push(Breakdown {
            label: "undisclosed".into(),
            users,
        });
    }
    let mut country: Vec<Breakdown> = country.into_iter().map(|(label, users)| Breakdown { label, users }).collect();
    country.sort_by(|a, b| b.users.cmp(&a.users).then_with(|| a.label.cmp(&b.label)));

    Ok(StatsReport {
        n_users: population.len(),
        n_interests: population.catalog().len(),
        n_interests_held,
        total_occurrences: population.total_occurrences(),
        interests_per_user: Percentiles::of(per_user).expect("population is non-empty"),
        global_audience: Percentiles::of(audiences).ok_or(Error::EmptyPopulation)?,
        gender,
        age_band,
        country,
    })
}
