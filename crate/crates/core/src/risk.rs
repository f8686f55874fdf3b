//! Per-interest risk classification and removal sessions.
//!
//! Each interest is colored by its worldwide audience. A session tracks the
//! interests a user has removed and can report how many of the remaining
//! ones an advertiser would need to isolate the user (the what-if view).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::index::{reported_size, CensorPolicy, InvertedIndex};
use crate::population::Population;
use crate::selection::{select_from, SelectionStrategy};
use crate::{Error, InterestId, Result, UserId};

/// Declared from most to least risky, so `Red < Green` in the derived order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskLevel {
    Red,
    Orange,
    Yellow,
    Green,
}

impl RiskLevel {
    pub fn label(self) -> &'static str {
        match self {
            RiskLevel::Red => "red",
            RiskLevel::Orange => "orange",
            RiskLevel::Yellow => "yellow",
            RiskLevel::Green => "green",
        }
    }
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Audience boundaries: Red up to `red_max`, Orange up to `orange_max`,
/// Yellow below `green_min`, Green from `green_min` on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskThresholds {
    pub red_max: u64,
    pub orange_max: u64,
    pub green_min: u64,
}

impl Default for RiskThresholds {
    fn default() -> Self {
        RiskThresholds {
            red_max: 10_000,
            orange_max: 100_000,
            green_min: 1_000_000,
        }
    }
}

impl RiskThresholds {
    pub fn new(red_max: u64, orange_max: u64, green_min: u64) -> Result<Self> {
        if !(red_max < orange_max && orange_max < green_min) {
            return Err(Error::InvalidParameter(format!(
                "risk thresholds must ascend, got {red_max}, {orange_max}, {green_min}"
            )));
        }
        Ok(RiskThresholds {
            red_max,
            orange_max,
            green_min,
        })
    }

    pub fn classify(&self, audience: u64) -> RiskLevel {
        if audience <= self.red_max {
            RiskLevel::Red
        } else if audience <= self.orange_max {
            RiskLevel::Orange
        } else if audience < self.green_min {
            RiskLevel::Yellow
        } else {
            RiskLevel::Green
        }
    }
}

pub fn classify(audience: u64) -> RiskLevel {
    RiskThresholds::default().classify(audience)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterestStatus {
    Active,
    Inactive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskEntry {
    pub interest_id: InterestId,
    pub name: String,
    pub audience: u64,
    pub level: RiskLevel,
    pub status: InterestStatus,
}

/// Where interest audiences and names come from.
pub trait AudienceSource {
    fn audience(&self, interest: InterestId) -> Option<u64>;
    fn name(&self, interest: InterestId) -> Option<&str>;
}

impl AudienceSource for Population {
    fn audience(&self, interest: InterestId) -> Option<u64> {
        self.global_audience(interest)
    }

    fn name(&self, interest: InterestId) -> Option<&str> {
        self.interest(interest).map(|r| r.name.as_str())
    }
}

/// Audience sizes read from an `interest_id,audience_size[,name]` file,
/// e.g. exported from a real ad-preferences page. Without a population the
/// table doubles as the user's interest list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AudienceTable {
    entries: BTreeMap<InterestId, (u64, Option<String>)>,
}

#[derive(Deserialize)]
struct TableRow {
    interest_id: InterestId,
    audience_size: u64,
    #[serde(default)]
    name: Option<String>,
}

impl AudienceTable {
    pub fn from_reader(path: &Path, reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut entries = BTreeMap::new();
        for (i, row) in rdr.deserialize::<TableRow>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line,
                message: e.to_string(),
            })?;
            let name = row.name.filter(|n| !n.is_empty());
            if entries.insert(row.interest_id, (row.audience_size, name)).is_some() {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line,
                    message: format!("duplicate interest {}", row.interest_id),
                });
            }
        }
        Ok(AudienceTable { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        Self::from_reader(path, file)
    }

    pub fn interests(&self) -> Vec<InterestId> {
        self.entries.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Hex digest of the table contents, independent of row order.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"table:");
        for (id, (audience, name)) in &self.entries {
            h.update(id.to_le_bytes());
            h.update(audience.to_le_bytes());
            h.update(name.as_deref().unwrap_or("").as_bytes());
            h.update([0]);
        }
        hex::encode(h.finalize())
    }
}

impl AudienceSource for AudienceTable {
    fn audience(&self, interest: InterestId) -> Option<u64> {
        self.entries.get(&interest).map(|e| e.0)
    }

    fn name(&self, interest: InterestId) -> Option<&str> {
        self.entries.get(&interest).and_then(|e| e.1.as_deref())
    }
}

/// A user's removal state. Every mutation bumps `version`, including
/// repeated removals, so pollers observe each action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileSession {
    pub user_id: UserId,
    original: Vec<InterestId>,
    removed: BTreeSet<InterestId>,
    version: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionAction {
    Remove,
    Restore,
}

impl FromStr for SessionAction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "remove" => Ok(SessionAction::Remove),
            "restore" => Ok(SessionAction::Restore),
            other => Err(Error::InvalidParameter(format!("unknown session action {other:?}"))),
        }
    }
}

impl ProfileSession {
    pub fn new(user_id: UserId, interests: impl IntoIterator<Item = InterestId>) -> Self {
        let mut original: Vec<InterestId> = interests.into_iter().collect();
        original.sort_unstable();
        original.dedup();
        ProfileSession {
            user_id,
            original,
            removed: BTreeSet::new(),
            version: 0,
        }
    }

    pub fn for_user(population: &Population, user_id: UserId) -> Result<Self> {
        let profile = population.user(user_id).ok_or(Error::UnknownUser(user_id))?;
        Ok(Self::new(user_id, profile.interests.iter().copied()))
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn original(&self) -> &[InterestId] {
        &self.original
    }

    pub fn removed(&self) -> &BTreeSet<InterestId> {
        &self.removed
    }

    pub fn is_active(&self, interest: InterestId) -> bool {
        !self.removed.contains(&interest)
    }

    pub fn active(&self) -> Vec<InterestId> {
        self.original.iter().copied().filter(|i| self.is_active(*i)).collect()
    }

    fn owned(&self, interest: InterestId) -> Result<()> {
        if self.original.binary_search(&interest).is_err() {
            return Err(Error::ForeignInterest {
                user: self.user_id,
                interest,
            });
        }
        Ok(())
    }

    pub fn remove(&mut self, interest: InterestId) -> Result<u64> {
        self.owned(interest)?;
        self.removed.insert(interest);
        self.version += 1;
        Ok(self.version)
    }

    pub fn restore(&mut self, interest: InterestId) -> Result<u64> {
        self.owned(interest)?;
        self.removed.remove(&interest);
        self.version += 1;
        Ok(self.version)
    }

    pub fn apply(&mut self, action: SessionAction, interest: InterestId) -> Result<u64> {
        match action {
            SessionAction::Remove => self.remove(interest),
            SessionAction::Restore => self.restore(interest),
        }
    }

    /// Optimistic concurrency: `apply` only when the caller saw the current version.
    pub fn apply_at(&mut self, expected_version: u64, action: SessionAction, interest: InterestId) -> Result<u64> {
        if expected_version != self.version {
            return Err(Error::StaleVersion {
                user: self.user_id,
                current: self.version,
                provided: expected_version,
            });
        }
        self.apply(action, interest)
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            user_id: self.user_id,
            version: self.version,
            active_count: self.original.len() - self.removed.len(),
            removed: self.removed.iter().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub user_id: UserId,
    pub version: u64,
    pub active_count: usize,
    pub removed: Vec<InterestId>,
}

/// All of the session's interests, least to most popular (ties by id).
pub fn risk_list(session: &ProfileSession, source: &impl AudienceSource, thresholds: &RiskThresholds) -> Result<Vec<RiskEntry>> {
    let mut entries = session
        .original
        .iter()
        .map(|&interest| {
            let audience = source.audience(interest).ok_or(Error::UnknownInterest(interest))?;
            Ok(RiskEntry {
                interest_id: interest,
                name: source.name(interest).map_or_else(|| format!("interest-{interest}"), str::to_owned),
                audience,
                level: thresholds.classify(audience),
                status: if session.is_active(interest) {
                    InterestStatus::Active
                } else {
                    InterestStatus::Inactive
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by_key(|e| (e.audience, e.interest_id));
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WhatIfReport {
    pub user_id: UserId,
    pub version: u64,
    pub strategy: String,
    pub floor: u64,
    pub active_count: usize,
    /// The attacker's ranking of the user's original interests, removed ones included.
    pub ordered_interests: Vec<InterestId>,
    /// Whether each entry of `ordered_interests` is still active.
    pub active: Vec<bool>,
    /// True audience of the active interests among the first `k` ranked,
    /// for k = 1..; the whole population while none is active yet.
    pub prefix_sizes: Vec<u64>,
    /// Smallest `k` whose prefix audience is the user alone.
    pub unique_at: Option<usize>,
    /// What an advertiser would see for each prefix.
    pub censored_sizes: Vec<u64>,
}

/// Counts how far down their ranked interests an attacker must go to
/// isolate the user.
///
/// The ranking covers the user's original interests and removed ones are
/// skipped rather than replaced, so a removal only ever drops conditions
/// from each prefix: no prefix audience shrinks and `unique_at` never
/// decreases.
pub fn whatif_uniqueness(
    session: &ProfileSession,
    index: &InvertedIndex,
    population: &Population,
    strategy: &SelectionStrategy,
    policy: CensorPolicy,
) -> Result<WhatIfReport> {
    let active_count = session.original.len() - session.removed.len();
    if active_count == 0 {
        return Err(Error::EmptyActiveSet(session.user_id));
    }
    let ordered = select_from(
        session.user_id,
        &session.original,
        |i| population.global_audience(i).unwrap_or(0),
        strategy,
    );
    let active: Vec<bool> = ordered.iter().map(|&i| session.is_active(i)).collect();
    let kept: Vec<InterestId> = ordered.iter().copied().filter(|&i| session.is_active(i)).collect();
    let kept_counts = if kept.is_empty() { Vec::new() } else { index.prefix_counts(&kept, None)? };
    let mut prefix_sizes = Vec::with_capacity(ordered.len());
    let mut current = index.n_users() as u64;
    let mut used = 0;
    for &is_active in &active {
        if is_active {
            current = kept_counts[used];
            used += 1;
        }
        prefix_sizes.push(current);
    }
    let unique_at = prefix_sizes.iter().position(|&c| c == 1).map(|p| p + 1);
    Ok(WhatIfReport {
        user_id: session.user_id,
        version: session.version,
        strategy: strategy.kind.label().to_owned(),
        floor: policy.floor(),
        active_count,
        censored_sizes: prefix_sizes.iter().map(|&c| reported_size(c, policy)).collect(),
        ordered_interests: ordered,
        active,
        prefix_sizes,
        unique_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::build_index;
    use crate::index::tests::{toy, A, B, C};

    #[test]
    fn boundaries() {
        let expect = [
            (0, RiskLevel::Red),
            (10_000, RiskLevel::Red),
            (10_001, RiskLevel::Orange),
            (100_000, RiskLevel::Orange),
            (100_001, RiskLevel::Yellow),
            (999_999, RiskLevel::Yellow),
            (1_000_000, RiskLevel::Green),
        ];
        for (audience, level) in expect {
            assert_eq!(classify(audience), level, "audience {audience}");
        }
        assert!(RiskLevel::Red < RiskLevel::Green);
        assert!(RiskThresholds::new(5, 5, 10).is_err());
        assert_eq!(RiskThresholds::new(1, 2, 3).unwrap().classify(2), RiskLevel::Orange);
    }

    #[test]
    fn toy_list_and_session() {
        let pop = toy();
        let mut s = ProfileSession::for_user(&pop, 3).unwrap();
        let th = RiskThresholds::default();
        let ids = |l: &[RiskEntry]| l.iter().map(|e| e.interest_id).collect::<Vec<_>>();
        assert_eq!(ids(&risk_list(&s, &pop, &th).unwrap()), vec![C, B, A]);

        assert_eq!(s.remove(C).unwrap(), 1);
        assert_eq!(s.remove(C).unwrap(), 2);
        assert_eq!(s.removed().len(), 1);
        let list = risk_list(&s, &pop, &th).unwrap();
        assert_eq!(list.len(), 3);
        assert_eq!(list[0].status, InterestStatus::Inactive);
        s.restore(C).unwrap();
        assert!(s.removed().is_empty());
        assert!(matches!(s.remove(40), Err(Error::ForeignInterest { .. })));
        assert!(matches!(
            s.apply_at(0, SessionAction::Remove, A),
            Err(Error::StaleVersion { current: 3, .. })
        ));
        assert_eq!(s.apply_at(3, SessionAction::Remove, A).unwrap(), 4);
    }

    #[test]
    fn toy_whatif() {
        let pop = toy();
        let idx = build_index(&pop).unwrap();
        let mut s = ProfileSession::for_user(&pop, 3).unwrap();
        let lp = SelectionStrategy::least_popular();
        let r = whatif_uniqueness(&s, &idx, &pop, &lp, CensorPolicy::LEGACY).unwrap();
        assert_eq!(r.ordered_interests, vec![C, B, A]);
        assert_eq!(r.prefix_sizes, vec![1, 1, 1]);
        assert_eq!(r.censored_sizes, vec![20, 20, 20]);
        assert_eq!(r.unique_at, Some(1));

        s.remove(C).unwrap();
        let r = whatif_uniqueness(&s, &idx, &pop, &lp, CensorPolicy::UNCENSORED).unwrap();
        assert_eq!(r.ordered_interests, vec![C, B, A]);
        assert_eq!(r.active, vec![false, true, true]);
        // nothing targeted yet at k=1: everyone matches
        assert_eq!(r.prefix_sizes, vec![3, 2, 2]);
        assert_eq!(r.unique_at, None);
        assert_eq!(r.version, 1);

        s.remove(A).unwrap();
        s.remove(B).unwrap();
        assert!(matches!(
            whatif_uniqueness(&s, &idx, &pop, &lp, CensorPolicy::UNCENSORED),
            Err(Error::EmptyActiveSet(3))
        ));
    }

    #[test]
    fn audience_table() {
        let text = "interest_id,audience_size,name\n7,500,rare\n9,2000000,\n";
        let t = AudienceTable::from_reader(Path::new("t.csv"), text.as_bytes()).unwrap();
        assert_eq!(t.audience(9), Some(2_000_000));
        assert_eq!(t.name(9), None);
        let s = ProfileSession::new(1, t.interests());
        let list = risk_list(&s, &t, &RiskThresholds::default()).unwrap();
        assert_eq!(list[0].name, "rare");
        assert_eq!(list[1].name, "interest-9");
        assert_eq!(list[1].level, RiskLevel::Green);

        let bare = AudienceTable::from_reader(Path::new("t.csv"), "interest_id,audience_size\n1,5\n".as_bytes()).unwrap();
        assert_eq!(bare.len(), 1);
        let dup = AudienceTable::from_reader(Path::new("t.csv"), "interest_id,audience_size\n1,5\n1,6\n".as_bytes());
        assert!(matches!(dup, Err(Error::Malformed { line: 3, .. })));
    }
}
