//! Exact audience cardinalities over an inverted index.
//!
//! Each interest maps to the sorted positions of the users holding it. Popular
//! interests (held by at least 1/32 of the users) are stored as bitsets,
//! the rest as sorted `u32` lists. Intersections start from the smallest
//! operand, keep the running candidate set in whichever form is cheaper, and
//! stop as soon as it is empty.
//!
//! Counts are always exact; censoring is applied separately with
//! [`reported_size`] so one index serves every reporting floor.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::population::{DemographicFilter, Demographics, Population};
use crate::{Error, InterestId, Result, UserId, MAX_QUERY_INTERESTS};

/// Minimum audience size a platform will report to advertisers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct CensorPolicy {
    floor: u64,
}

impl CensorPolicy {
    pub const UNCENSORED: CensorPolicy = CensorPolicy { floor: 1 };
    /// Floor in force before 2018.
    pub const LEGACY: CensorPolicy = CensorPolicy { floor: 20 };
    pub const WORKAROUND: CensorPolicy = CensorPolicy { floor: 100 };
    pub const CURRENT: CensorPolicy = CensorPolicy { floor: 1000 };

    pub fn new(floor: u64) -> Result<Self> {
        if floor == 0 {
            return Err(Error::InvalidParameter("censoring floor must be at least 1".into()));
        }
        Ok(CensorPolicy { floor })
    }

    pub fn floor(self) -> u64 {
        self.floor
    }
}

impl Default for CensorPolicy {
    fn default() -> Self {
        CensorPolicy::UNCENSORED
    }
}

impl TryFrom<u64> for CensorPolicy {
    type Error = Error;

    fn try_from(floor: u64) -> Result<Self> {
        CensorPolicy::new(floor)
    }
}

impl From<CensorPolicy> for u64 {
    fn from(p: CensorPolicy) -> u64 {
        p.floor
    }
}

/// The audience size an advertiser sees for a true count.
pub fn reported_size(true_count: u64, policy: CensorPolicy) -> u64 {
    true_count.max(policy.floor)
}

/// A combination of 1..=25 interests, optionally restricted by demographics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudienceQuery {
    interests: Vec<InterestId>,
    filter: Option<DemographicFilter>,
}

impl AudienceQuery {
    /// Duplicate interests collapse; the query is a set.
    pub fn new(interests: impl IntoIterator<Item = InterestId>) -> Result<Self> {
        let mut interests: Vec<InterestId> = interests.into_iter().collect();
        interests.sort_unstable();
        interests.dedup();
        if interests.is_empty() {
            return Err(Error::InvalidQuery("a query needs at least one interest".into()));
        }
        if interests.len() > MAX_QUERY_INTERESTS {
            return Err(Error::InvalidQuery(format!(
                "{} interests exceed the limit of {MAX_QUERY_INTERESTS}",
                interests.len()
            )));
        }
        Ok(AudienceQuery { interests, filter: None })
    }

    pub fn with_filter(mut self, filter: DemographicFilter) -> Self {
        self.filter = (!filter.is_empty()).then_some(filter);
        self
    }

    pub fn interests(&self) -> &[InterestId] {
        &self.interests
    }

    pub fn filter(&self) -> Option<&DemographicFilter> {
        self.filter.as_ref()
    }
}

/// Users matching a query, possibly truncated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Members {
    /// Ascending by position in the population, not by id.
    pub users: Vec<UserId>,
    pub truncated: bool,
}

#[derive(Debug, Clone)]
enum Repr {
    Sparse(Vec<u32>),
    Dense(Box<[u64]>),
}

#[derive(Debug, Clone)]
struct Posting {
    len: usize,
    repr: Repr,
}

#[inline]
fn bit(words: &[u64], i: u32) -> bool {
    words[(i >> 6) as usize] & (1u64 << (i & 63)) != 0
}

/// Running intersection result.
enum Candidates {
    Bits { words: Vec<u64>, count: usize },
    List(Vec<u32>),
}

impl Candidates {
    fn len(&self) -> usize {
        match self {
            Candidates::Bits { count, .. } => *count,
            Candidates::List(v) => v.len(),
        }
    }

    fn for_each(&self, mut f: impl FnMut(u32)) {
        match self {
            Candidates::List(v) => v.iter().for_each(|&i| f(i)),
            Candidates::Bits { words, .. } => {
                for (w, &word) in words.iter().enumerate() {
                    let mut word = word;
                    while word != 0 {
                        let tz = word.trailing_zeros();
                        f((w as u32) << 6 | tz);
                        word &= word - 1;
                    }
                }
            }
        }
    }
}

/// Intersects sorted `small` into `large` by galloping, appending to `out`.
fn gallop_intersect(small: &[u32], large: &[u32], out: &mut Vec<u32>) {
    let mut lo = 0usize;
    for &x in small {
        if lo >= large.len() {
            break;
        }
        let mut step = 1usize;
        let mut hi = lo;
        while hi < large.len() && large[hi] < x {
            lo = hi + 1;
            hi += step;
            step <<= 1;
        }
        let hi = hi.min(large.len());
        let pos = lo + large[lo..hi].partition_point(|&v| v < x);
        if pos < large.len() && large[pos] == x {
            out.push(x);
            lo = pos + 1;
        } else {
            lo = pos;
        }
    }
}

fn intersect_lists(a: &[u32], b: &[u32]) -> Vec<u32> {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut out = Vec::with_capacity(small.len());
    gallop_intersect(small, large, &mut out);
    out
}

/// Immutable inverted index over one population.
#[derive(Debug, Clone)]
pub struct InvertedIndex {
    postings: Vec<Posting>,
    slots: HashMap<InterestId, usize>,
    user_ids: Vec<UserId>,
    user_slots: HashMap<UserId, u32>,
    demographics: Vec<Demographics>,
    words: usize,
    total_postings: u64,
    population_digest: String,
}

/// Builds the index. Postings list users in population order.
pub fn build_index(population: &Population) -> Result<InvertedIndex> {
    if population.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    if population.len() > u32::MAX as usize {
        return Err(Error::InvalidParameter("more than 2^32 users".into()));
    }
    let n_users = population.len();
    let words = n_users.div_ceil(64);
    let catalog = population.catalog();
    let mut lists: Vec<Vec<u32>> = vec![Vec::new(); catalog.len()];
    let mut lengths = vec![0usize; catalog.len()];
    for user in population.users() {
        for &iid in &user.interests {
            lengths[population.interest_slot(iid).expect("profiles reference catalog interests")] += 1;
        }
    }
    for (list, &len) in lists.iter_mut().zip(&lengths) {
        list.reserve_exact(len);
    }
    for (pos, user) in population.users().iter().enumerate() {
        for &iid in &user.interests {
            lists[population.interest_slot(iid).expect("checked above")].push(pos as u32);
        }
    }
    let dense_from = n_users.div_ceil(32).max(1);
    let postings: Vec<Posting> = lists
        .into_iter()
        .map(|members| {
            let len = members.len();
            let repr = if len >= dense_from && len > 64 {
                let mut bits = vec![0u64; words].into_boxed_slice();
                for &m in &members {
                    bits[(m >> 6) as usize] |= 1u64 << (m & 63);
                }
                Repr::Dense(bits)
            } else {
                Repr::Sparse(members)
            };
            Posting { len, repr }
        })
        .collect();
    let total_postings = postings.iter().map(|p| p.len as u64).sum();
    Ok(InvertedIndex {
        postings,
        slots: catalog.iter().enumerate().map(|(s, r)| (r.interest_id, s)).collect(),
        user_ids: population.users().iter().map(|u| u.user_id).collect(),
        user_slots: population
            .users()
            .iter()
            .enumerate()
            .map(|(s, u)| (u.user_id, s as u32))
            .collect(),
        demographics: population.users().iter().map(|u| u.demographics).collect(),
        words,
        total_postings,
        population_digest: population.digest(),
    })
}

impl InvertedIndex {
    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_interests(&self) -> usize {
        self.postings.len()
    }

    /// Sum of posting lengths; equals the number of (user, interest) assignments.
    pub fn total_postings(&self) -> u64 {
        self.total_postings
    }

    /// Digest of the population the index was built from.
    pub fn population_digest(&self) -> &str {
        &self.population_digest
    }

    /// Number of interests stored as bitsets.
    pub fn dense_postings(&self) -> usize {
        self.postings.iter().filter(|p| matches!(p.repr, Repr::Dense(_))).count()
    }

    pub fn contains_user(&self, user: UserId) -> bool {
        self.user_slots.contains_key(&user)
    }

    /// Holders of one interest, in population order.
    pub fn posting_users(&self, interest: InterestId) -> Result<Vec<UserId>> {
        let slot = self.slot(interest)?;
        let mut out = Vec::with_capacity(self.postings[slot].len);
        self.start(slot).for_each(|u| out.push(self.user_ids[u as usize]));
        Ok(out)
    }

    /// Global audience of one interest (true count).
    pub fn interest_audience(&self, interest: InterestId) -> Result<u64> {
        Ok(self.postings[self.slot(interest)?].len as u64)
    }

    fn slot(&self, interest: InterestId) -> Result<usize> {
        self.slots.get(&interest).copied().ok_or(Error::UnknownInterest(interest))
    }

    fn slots_for(&self, interests: &[InterestId]) -> Result<Vec<usize>> {
        interests.iter().map(|&i| self.slot(i)).collect()
    }

    fn start(&self, slot: usize) -> Candidates {
        match &self.postings[slot].repr {
            Repr::Sparse(v) => Candidates::List(v.clone()),
            Repr::Dense(bits) => Candidates::Bits {
                words: bits.to_vec(),
                count: self.postings[slot].len,
            },
        }
    }

    /// Intersection of two postings without copying either.
    fn pair(&self, a: usize, b: usize) -> Candidates {
        let (a, b) = if self.postings[a].len <= self.postings[b].len { (a, b) } else { (b, a) };
        match (&self.postings[a].repr, &self.postings[b].repr) {
            (Repr::Sparse(x), Repr::Sparse(y)) => Candidates::List(intersect_lists(x, y)),
            (Repr::Sparse(x), Repr::Dense(bits)) => Candidates::List(x.iter().copied().filter(|&u| bit(bits, u)).collect()),
            (Repr::Dense(x), Repr::Dense(y)) => {
                let mut count = 0usize;
                let words: Vec<u64> = x
                    .iter()
                    .zip(y.iter())
                    .map(|(p, q)| {
                        let w = p & q;
                        count += w.count_ones() as usize;
                        w
                    })
                    .collect();
                self.compact(Candidates::Bits { words, count })
            }
            (Repr::Dense(bits), Repr::Sparse(y)) => Candidates::List(y.iter().copied().filter(|&u| bit(bits, u)).collect()),
        }
    }

    /// Switches a sparse bitset to list form once that is cheaper to filter.
    fn compact(&self, cand: Candidates) -> Candidates {
        match cand {
            Candidates::Bits { count, .. } if count < self.words => {
                let mut list = Vec::with_capacity(count);
                cand.for_each(|u| list.push(u));
                Candidates::List(list)
            }
            other => other,
        }
    }

    fn narrow(&self, cand: Candidates, slot: usize) -> Candidates {
        match (cand, &self.postings[slot].repr) {
            (Candidates::List(mut list), Repr::Dense(bits)) => {
                list.retain(|&u| bit(bits, u));
                Candidates::List(list)
            }
            (Candidates::List(list), Repr::Sparse(members)) => Candidates::List(intersect_lists(&list, members)),
            (Candidates::Bits { mut words, .. }, Repr::Dense(bits)) => {
                let mut count = 0usize;
                for (w, b) in words.iter_mut().zip(bits.iter()) {
                    *w &= b;
                    count += w.count_ones() as usize;
                }
                self.compact(Candidates::Bits { words, count })
            }
            (Candidates::Bits { words, .. }, Repr::Sparse(members)) => {
                Candidates::List(members.iter().copied().filter(|&u| bit(&words, u)).collect())
            }
        }
    }

    /// Smallest-first intersection of the given postings.
    fn intersect(&self, mut slots: Vec<usize>) -> Candidates {
        slots.sort_by_key(|&s| (self.postings[s].len, s));
        slots.dedup();
        if slots.len() == 1 {
            return self.start(slots[0]);
        }
        let mut cand = self.pair(slots[0], slots[1]);
        for &s in &slots[2..] {
            if cand.len() == 0 {
                break;
            }
            cand = self.narrow(cand, s);
        }
        cand
    }

    fn count_filtered(&self, cand: &Candidates, filter: Option<&DemographicFilter>) -> u64 {
        match filter {
            None => cand.len() as u64,
            Some(f) => {
                let mut n = 0u64;
                cand.for_each(|u| {
                    if f.matches(&self.demographics[u as usize]) {
                        n += 1;
                    }
                });
                n
            }
        }
    }

    /// Exact number of users holding every interest of the query (and passing
    /// its demographic filter).
    pub fn audience_size(&self, query: &AudienceQuery) -> Result<u64> {
        let slots = self.slots_for(query.interests())?;
        if slots.len() == 1 && query.filter().is_none() {
            return Ok(self.postings[slots[0]].len as u64);
        }
        let cand = self.intersect(slots);
        Ok(self.count_filtered(&cand, query.filter()))
    }

    /// The matching users themselves; `cap` truncates the list and sets the flag.
    pub fn audience_members(&self, query: &AudienceQuery, cap: Option<usize>) -> Result<Members> {
        let slots = self.slots_for(query.interests())?;
        let cand = self.intersect(slots);
        let limit = cap.unwrap_or(usize::MAX);
        let mut users = Vec::new();
        let mut truncated = false;
        cand.for_each(|u| {
            if query.filter().is_none_or(|f| f.matches(&self.demographics[u as usize])) {
                if users.len() < limit {
                    users.push(self.user_ids[u as usize]);
                } else {
                    truncated = true;
                }
            }
        });
        Ok(Members { users, truncated })
    }

    /// True audience of every prefix of `ordered`: element `n` is the audience
    /// of the first `n + 1` interests.
    pub fn prefix_counts(&self, ordered: &[InterestId], filter: Option<&DemographicFilter>) -> Result<Vec<u64>> {
        if ordered.is_empty() || ordered.len() > MAX_QUERY_INTERESTS {
            return Err(Error::InvalidQuery(format!(
                "prefix list must hold 1..={MAX_QUERY_INTERESTS} interests, got {}",
                ordered.len()
            )));
        }
        let slots = self.slots_for(ordered)?;
        let filter = filter.filter(|f| !f.is_empty());
        let mut counts = Vec::with_capacity(slots.len());
        let mut cand = if filter.is_some() || slots.len() == 1 {
            let first = self.start(slots[0]);
            counts.push(self.count_filtered(&first, filter));
            Some(first)
        } else {
            counts.push(self.postings[slots[0]].len as u64);
            None
        };
        for n in 1..slots.len() {
            let next = match cand.take() {
                None => self.pair(slots[0], slots[1]),
                Some(c) if c.len() == 0 => c,
                Some(c) => self.narrow(c, slots[n]),
            };
            counts.push(self.count_filtered(&next, filter));
            cand = Some(next);
        }
        Ok(counts)
    }

    /// Position of `user` in the population the index was built from.
    pub fn user_position(&self, user: UserId) -> Option<usize> {
        self.user_slots.get(&user).map(|&s| s as usize)
    }
}
