//! The analysis universe: interest catalog, user profiles and demographics.

mod generator;
mod io;
mod stats;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, InterestId, Result, UserId};

pub use generator::{generate_population, CommunityModel, GeneratorConfig, InterestCountModel};
pub use io::{ingest, load_population, save_population, write_catalog, write_users, MANIFEST_FILE, CATALOG_FILE, USERS_FILE};
pub use stats::{summary_stats, Breakdown, Percentiles, StatsReport, STATS_PERCENTILES};

/// Youngest age a profile may report.
pub const MIN_AGE: u16 = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Undisclosed,
}

impl Gender {
    pub fn code(self) -> &'static str {
        match self {
            Gender::Male => "m",
            Gender::Female => "f",
            Gender::Undisclosed => "u",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code {
            "m" => Some(Gender::Male),
            "f" => Some(Gender::Female),
            "u" => Some(Gender::Undisclosed),
            _ => None,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Undisclosed => "undisclosed",
        })
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m" | "male" => Ok(Gender::Male),
            "f" | "female" => Ok(Gender::Female),
            "u" | "undisclosed" => Ok(Gender::Undisclosed),
            other => Err(Error::InvalidParameter(format!("unknown gender {other:?}"))),
        }
    }
}

/// ISO-3166 alpha-2 country code, stored upper-case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CountryCode([u8; 2]);

impl CountryCode {
    pub fn new(code: &str) -> Option<Self> {
        let bytes = code.as_bytes();
        if bytes.len() != 2 || !bytes.iter().all(u8::is_ascii_alphabetic) {
            return None;
        }
        Some(CountryCode([bytes[0].to_ascii_uppercase(), bytes[1].to_ascii_uppercase()]))
    }

    pub fn as_str(&self) -> &str {
        // Constructed from ASCII letters only.
        std::str::from_utf8(&self.0).unwrap_or("??")
    }
}

impl fmt::Display for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CountryCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CountryCode::new(s).ok_or_else(|| Error::InvalidParameter(format!("invalid country code {s:?}")))
    }
}

impl Serialize for CountryCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for CountryCode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        CountryCode::new(&s).ok_or_else(|| serde::de::Error::custom(format!("invalid country code {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Demographics {
    pub gender: Gender,
    pub age_years: Option<u16>,
    pub country: Option<CountryCode>,
}

impl Demographics {
    pub fn age_band(&self) -> Option<AgeBand> {
        self.age_years.and_then(AgeBand::of_age)
    }
}

/// Life-stage age bands used for demographic breakdowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgeBand {
    Adolescence,
    EarlyAdulthood,
    Adulthood,
    Maturity,
}

impl AgeBand {
    pub const ALL: [AgeBand; 4] = [
        AgeBand::Adolescence,
        AgeBand::EarlyAdulthood,
        AgeBand::Adulthood,
        AgeBand::Maturity,
    ];

    pub fn of_age(age: u16) -> Option<AgeBand> {
        match age {
            13..=19 => Some(AgeBand::Adolescence),
            20..=39 => Some(AgeBand::EarlyAdulthood),
            40..=64 => Some(AgeBand::Adulthood),
            65.. => Some(AgeBand::Maturity),
            _ => None,
        }
    }

    /// Inclusive age bounds; `None` upper bound means open-ended.
    pub fn bounds(self) -> (u16, Option<u16>) {
        match self {
            AgeBand::Adolescence => (13, Some(19)),
            AgeBand::EarlyAdulthood => (20, Some(39)),
            AgeBand::Adulthood => (40, Some(64)),
            AgeBand::Maturity => (65, None),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AgeBand::Adolescence => "13-19",
            AgeBand::EarlyAdulthood => "20-39",
            AgeBand::Adulthood => "40-64",
            AgeBand::Maturity => "65+",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterestRecord {
    pub interest_id: InterestId,
    pub name: String,
    /// Number of users in the full population holding this interest.
    pub global_audience: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: UserId,
    pub demographics: Demographics,
    /// Sorted ascending, no duplicates, never empty.
    pub interests: Vec<InterestId>,
}

impl UserProfile {
    pub fn holds(&self, interest: InterestId) -> bool {
        self.interests.binary_search(&interest).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Generated { seed: u64, config_digest: String },
    Ingested { path_digest: String },
}

/// Predicate over demographics. Absent fields match everything; an age
/// constraint never matches a profile without an age.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemographicFilter {
    pub gender: Option<Gender>,
    pub min_age: Option<u16>,
    pub max_age: Option<u16>,
    pub country: Option<CountryCode>,
}

impl DemographicFilter {
    pub fn gender(gender: Gender) -> Self {
        DemographicFilter {
            gender: Some(gender),
            ..Default::default()
        }
    }

    pub fn age_range(min: u16, max: u16) -> Self {
        DemographicFilter {
            min_age: Some(min),
            max_age: Some(max),
            ..Default::default()
        }
    }

    pub fn age_band(band: AgeBand) -> Self {
        let (min, max) = band.bounds();
        DemographicFilter {
            min_age: Some(min),
            max_age: max,
            ..Default::default()
        }
    }

    pub fn country(country: CountryCode) -> Self {
        DemographicFilter {
            country: Some(country),
            ..Default::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.gender.is_none() && self.min_age.is_none() && self.max_age.is_none() && self.country.is_none()
    }

    pub fn matches(&self, d: &Demographics) -> bool {
        if let Some(g) = self.gender {
            if d.gender != g {
                return false;
            }
        }
        if self.min_age.is_some() || self.max_age.is_some() {
            let Some(age) = d.age_years else { return false };
            if self.min_age.is_some_and(|lo| age < lo) || self.max_age.is_some_and(|hi| age > hi) {
                return false;
            }
        }
        if let Some(c) = self.country {
            if d.country != Some(c) {
                return false;
            }
        }
        true
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(g) = self.gender {
            parts.push(format!("gender={g}"));
        }
        match (self.min_age, self.max_age) {
            (Some(lo), Some(hi)) => parts.push(format!("age={lo}-{hi}")),
            (Some(lo), None) => parts.push(format!("age={lo}+")),
            (None, Some(hi)) => parts.push(format!("age<={hi}")),
            (None, None) => {}
        }
        if let Some(c) = self.country {
            parts.push(format!("country={c}"));
        }
        if parts.is_empty() {
            "all".to_string()
        } else {
            parts.join(",")
        }
    }
}

/// Interest catalog plus user profiles.
///
/// Immutable once built. A population produced by [`Population::filter_subgroup`]
/// is a view: it holds a subset of users but keeps the catalog (and its
/// audiences) of the full universe it came from.
#[derive(Debug, Clone)]
pub struct Population {
    catalog: Vec<InterestRecord>,
    users: Vec<UserProfile>,
    provenance: Provenance,
    subgroup: Option<String>,
    interest_slots: HashMap<InterestId, usize>,
    user_slots: HashMap<UserId, usize>,
}

impl Population {
    /// Builds a population, recomputing every catalog audience from the users.
    ///
    /// Profiles are normalised (interests sorted and deduplicated). Fails on
    /// duplicate user ids, empty profiles, unknown interests or duplicate
    /// catalog ids.
    pub fn new(mut catalog: Vec<InterestRecord>, mut users: Vec<UserProfile>, provenance: Provenance) -> Result<Self> {
        let mut interest_slots = HashMap::with_capacity(catalog.len());
        for (slot, rec) in catalog.iter_mut().enumerate() {
            if interest_slots.insert(rec.interest_id, slot).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate interest_id {} in catalog", rec.interest_id)));
            }
            rec.global_audience = 0;
        }
        let mut user_slots = HashMap::with_capacity(users.len());
        for (slot, user) in users.iter_mut().enumerate() {
            if user_slots.insert(user.user_id, slot).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate user_id {}", user.user_id)));
            }
            user.interests.sort_unstable();
            user.interests.dedup();
            if user.interests.is_empty() {
                return Err(Error::InvalidParameter(format!("user {} has no interests", user.user_id)));
            }
            for &iid in &user.interests {
                let slot = *interest_slots.get(&iid).ok_or(Error::UnknownInterest(iid))?;
                catalog[slot].global_audience += 1;
            }
        }
        Ok(Population {
            catalog,
            users,
            provenance,
            subgroup: None,
            interest_slots,
            user_slots,
        })
    }

    pub fn catalog(&self) -> &[InterestRecord] {
        &self.catalog
    }

    pub fn users(&self) -> &[UserProfile] {
        &self.users
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Label of the demographic filter this view was built with, if any.
    pub fn subgroup(&self) -> Option<&str> {
        self.subgroup.as_deref()
    }

    pub fn interest(&self, id: InterestId) -> Option<&InterestRecord> {
        self.interest_slots.get(&id).map(|&s| &self.catalog[s])
    }

    /// Position of an interest in [`Population::catalog`].
    pub fn interest_slot(&self, id: InterestId) -> Option<usize> {
        self.interest_slots.get(&id).copied()
    }

    pub fn global_audience(&self, id: InterestId) -> Option<u64> {
        self.interest(id).map(|r| r.global_audience)
    }

    pub fn user(&self, id: UserId) -> Option<&UserProfile> {
        self.user_slots.get(&id).map(|&s| &self.users[s])
    }

    /// Total number of (user, interest) assignments.
    pub fn total_occurrences(&self) -> u64 {
        self.users.iter().map(|u| u.interests.len() as u64).sum()
    }

    /// Hex digest identifying where this population came from.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        match &self.provenance {
            Provenance::Generated { seed, config_digest } => {
                h.update(b"generated:");
                h.update(seed.to_le_bytes());
                h.update(config_digest.as_bytes());
            }
            Provenance::Ingested { path_digest } => {
                h.update(b"ingested:");
                h.update(path_digest.as_bytes());
            }
        }
        if let Some(label) = &self.subgroup {
            h.update(b"subgroup:");
            h.update(label.as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Recounts audiences from the user sets and compares them with the catalog.
    ///
    /// Only meaningful for full populations; subgroup views keep full-universe
    /// audiences and fail the audit by construction.
    pub fn audit(&self) -> Result<()> {
        let mut counts = vec![0u64; self.catalog.len()];
        for user in &self.users {
            for iid in &user.interests {
                counts[self.interest_slots[iid]] += 1;
            }
        }
        for (rec, &count) in self.catalog.iter().zip(&counts) {
            if rec.global_audience != count {
                return Err(Error::InvalidParameter(format!(
                    "interest {} records audience {} but {} users hold it",
                    rec.interest_id, rec.global_audience, count
                )));
            }
        }
        Ok(())
    }

    /// Restricts the users to those matching `filter`.
    ///
    /// The catalog, including every `global_audience`, is carried over
    /// unchanged: uniqueness is always measured against the full universe.
    pub fn filter_subgroup(&self, filter: &DemographicFilter) -> Result<Population> {
        let users: Vec<UserProfile> = self.users.iter().filter(|u| filter.matches(&u.demographics)).cloned().collect();
        if users.is_empty() {
            return Err(Error::EmptySubgroup(filter.label()));
        }
        let user_slots = users.iter().enumerate().map(|(s, u)| (u.user_id, s)).collect();
        let label = match &self.subgroup {
            Some(prev) => format!("{prev};{}", filter.label()),
            None => filter.label(),
        };
        Ok(Population {
            catalog: self.catalog.clone(),
            users,
            provenance: self.provenance.clone(),
            subgroup: Some(label),
            interest_slots: self.interest_slots.clone(),
            user_slots,
        })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn record(id: InterestId, name: &str) -> InterestRecord {
        InterestRecord {
            interest_id: id,
            name: name.to_string(),
            global_audience: 0,
        }
    }

    pub(crate) fn profile(id: UserId, age: Option<u16>, interests: &[InterestId]) -> UserProfile {
        UserProfile {
            user_id: id,
            demographics: Demographics {
                gender: Gender::Male,
                age_years: age,
                country: CountryCode::new("ES"),
            },
            interests: interests.to_vec(),
        }
    }

    fn provenance() -> Provenance {
        Provenance::Ingested {
            path_digest: "test".into(),
        }
    }

    #[test]
    fn audiences_are_recomputed() {
        let mut cat = vec![record(1, "a"), record(2, "b")];
        cat[0].global_audience = 99;
        let pop = Population::new(cat, vec![profile(1, None, &[1, 2]), profile(2, None, &[1])], provenance()).unwrap();
        assert_eq!(pop.global_audience(1), Some(2));
        assert_eq!(pop.global_audience(2), Some(1));
        pop.audit().unwrap();
    }

    #[test]
    fn duplicate_user_rejected() {
        let err = Population::new(vec![record(1, "a")], vec![profile(1, None, &[1]), profile(1, None, &[1])], provenance());
        assert!(err.is_err());
    }

    #[test]
    fn age_filter_on_toy() {
        let cat = vec![record(1, "a")];
        let users = vec![profile(1, Some(15), &[1]), profile(2, Some(25), &[1]), profile(3, Some(45), &[1])];
        let pop = Population::new(cat, users, provenance()).unwrap();
        let view = pop.filter_subgroup(&DemographicFilter::age_range(20, 39)).unwrap();
        assert_eq!(view.len(), 1);
        assert_eq!(view.users()[0].user_id, 2);
        // catalog keeps the full-universe audience
        assert_eq!(view.global_audience(1), Some(3));
        assert!(view.audit().is_err());
    }

    #[test]
    fn empty_subgroup_is_an_error() {
        let pop = Population::new(vec![record(1, "a")], vec![profile(1, None, &[1])], provenance()).unwrap();
        let err = pop.filter_subgroup(&DemographicFilter::gender(Gender::Female)).unwrap_err();
        assert!(matches!(err, Error::EmptySubgroup(_)));
    }

    #[test]
    fn age_bands_partition_known_ages() {
        for age in 13u16..=110 {
            let d = Demographics {
                gender: Gender::Female,
                age_years: Some(age),
                country: None,
            };
            let hits = AgeBand::ALL
                .iter()
                .filter(|b| DemographicFilter::age_band(**b).matches(&d))
                .count();
            assert_eq!(hits, 1, "age {age}");
        }
    }

    #[test]
    fn country_codes_normalise() {
        assert_eq!(CountryCode::new("es").unwrap().as_str(), "ES");
        assert!(CountryCode::new("ESP").is_none());
        assert!(CountryCode::new("1A").is_none());
    }
}
