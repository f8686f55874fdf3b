use nanoscope_core::campaign::{
    apply_policy, run_batch, run_campaign, sample_targets, simulate_grid, success_rate, CampaignSpec, PolicyDecision, PolicyGate,
    DEFAULT_INTEREST_GRID,
};
use nanoscope_core::index::{build_index, AudienceQuery, CensorPolicy, InvertedIndex};
use nanoscope_core::population::{generate_population, GeneratorConfig, InterestCountModel, Population};
use nanoscope_core::risk::{classify, risk_list, whatif_uniqueness, ProfileSession, RiskLevel, RiskThresholds};
use nanoscope_core::selection::SelectionStrategy;
use nanoscope_core::{Error, InterestId};
use proptest::prelude::*;

fn small(seed: u64) -> (Population, InvertedIndex) {
    let pop = generate_population(&GeneratorConfig {
        n_users: 3000,
        n_interests: 400,
        popularity_exponent: 1.0,
        interests_per_user: InterestCountModel {
            mu: 25f64.ln(),
            sigma: 0.7,
            min: 2,
            max: 200,
        },
        communities: None,
        seed,
    })
    .unwrap();
    let idx = build_index(&pop).unwrap();
    (pop, idx)
}

#[test]
fn campaign_reach_matches_a_direct_query() {
    let (pop, idx) = small(1);
    for target in sample_targets(&pop, 50, 9) {
        for n in [1, 5, 12, 25] {
            let spec = CampaignSpec {
                target,
                strategy: SelectionStrategy::random(4),
                n_interests: n,
                policy: CensorPolicy::LEGACY,
            };
            let o = run_campaign(&idx, &pop, &spec).unwrap();
            let direct = idx.audience_size(&AudienceQuery::new(o.interests_used.iter().copied()).unwrap()).unwrap();
            assert_eq!(o.reached_count, direct);
            assert_eq!(o.reported_reach, direct.max(20));
            assert!(o.target_reached, "the target holds every interest used");
            assert_eq!(o.success, direct == 1);
            assert_eq!(o.shortened, pop.user(target).unwrap().interests.len() < n);
        }
    }
}

#[test]
fn success_never_falls_as_campaigns_grow() {
    let (pop, idx) = small(2);
    let sim = simulate_grid(
        &idx,
        &pop,
        &SelectionStrategy::random(7),
        &DEFAULT_INTEREST_GRID,
        400,
        11,
        &PolicyGate::default(),
        CensorPolicy::UNCENSORED,
    )
    .unwrap();
    let rates: Vec<f64> = sim.rows.iter().map(|r| r.success_rate).collect();
    assert!(rates.windows(2).all(|w| w[0] <= w[1]), "{rates:?}");
    // per target too: campaigns are nested prefixes
    for t in 0..400 {
        let per_target: Vec<bool> = (0..DEFAULT_INTEREST_GRID.len())
            .map(|g| sim.campaigns[g * 400 + t].outcome.as_ref().unwrap().success)
            .collect();
        assert!(per_target.windows(2).all(|w| w[0] <= w[1]));
    }
    // the grid and the standalone rate agree
    let alone = success_rate(&idx, &pop, &SelectionStrategy::random(7), 12, 400, 11).unwrap();
    assert_eq!(alone, sim.rows[3].success_rate);
}

#[test]
fn gates_are_sound() {
    let (pop, idx) = small(3);
    let gate = PolicyGate {
        max_interests: Some(9),
        min_active_audience: Some(25),
    };
    let targets = sample_targets(&pop, 300, 5);
    let specs: Vec<CampaignSpec> = targets
        .iter()
        .enumerate()
        .map(|(i, &target)| CampaignSpec {
            target,
            strategy: SelectionStrategy::random(i as u64),
            n_interests: 1 + i % 25,
            policy: CensorPolicy::UNCENSORED,
        })
        .collect();
    let batch = run_batch(&idx, &pop, &specs, &gate).unwrap();
    for c in &batch {
        match (&c.decision, &c.outcome) {
            (PolicyDecision::Accepted, Some(o)) => {
                assert!(c.spec.n_interests <= 9);
                assert!(o.reached_count >= 25);
                assert!(!o.success);
            }
            (PolicyDecision::Rejected(_), None) => {}
            other => panic!("inconsistent decision {other:?}"),
        }
        assert_eq!(apply_policy(&idx, &pop, &c.spec, &gate).unwrap(), c.decision);
    }
    let open = run_batch(&idx, &pop, &specs, &PolicyGate::default()).unwrap();
    assert!(open.iter().all(|c| c.decision == PolicyDecision::Accepted));
}

#[test]
fn risk_list_is_sorted_and_complete_under_removals() {
    let (pop, _) = small(4);
    let user = &pop.users()[17];
    let mut session = ProfileSession::for_user(&pop, user.user_id).unwrap();
    for &i in user.interests.iter().step_by(3) {
        session.remove(i).unwrap();
    }
    let list = risk_list(&session, &pop, &RiskThresholds::default()).unwrap();
    assert_eq!(list.len(), user.interests.len());
    assert!(list.windows(2).all(|w| (w[0].audience, w[0].interest_id) < (w[1].audience, w[1].interest_id)));
    for e in &list {
        assert_eq!(e.audience, pop.global_audience(e.interest_id).unwrap());
        assert_eq!(e.level, classify(e.audience));
    }
}

fn unique_at(session: &ProfileSession, pop: &Population, idx: &InvertedIndex) -> Option<Option<usize>> {
    match whatif_uniqueness(session, idx, pop, &SelectionStrategy::least_popular(), CensorPolicy::UNCENSORED) {
        Ok(r) => Some(r.unique_at),
        Err(Error::EmptyActiveSet(_)) => None,
        Err(e) => panic!("{e}"),
    }
}

/// `after` is strictly later than `before`, counting "never unique" (and "no
/// interests left") as later than any N.
fn strictly_later(before: Option<usize>, after: Option<Option<usize>>) -> bool {
    match (before, after.flatten()) {
        (Some(b), Some(a)) => a > b,
        (Some(_), None) => true,
        (None, _) => false,
    }
}

#[test]
fn removing_red_interests_delays_uniqueness_on_a_calibrated_population() {
    let pop = generate_population(&GeneratorConfig::calibrated(100_000, 21)).unwrap();
    let idx = build_index(&pop).unwrap();
    let thresholds = RiskThresholds::default();
    let users = sample_targets(&pop, 200, 8);
    let mut later = 0;
    for &user in &users {
        let mut session = ProfileSession::for_user(&pop, user).unwrap();
        let before = unique_at(&session, &pop, &idx).unwrap();
        let red: Vec<InterestId> = risk_list(&session, &pop, &thresholds)
            .unwrap()
            .into_iter()
            .filter(|e| e.level == RiskLevel::Red)
            .map(|e| e.interest_id)
            .collect();
        for i in red {
            session.remove(i).unwrap();
        }
        let after = unique_at(&session, &pop, &idx);
        if let (Some(b), Some(Some(a))) = (before, after) {
            assert!(a >= b, "user {user}: unique_at fell from {b} to {a}");
        }
        later += strictly_later(before, after) as usize;
    }
    let share = later as f64 / users.len() as f64;
    assert!(share >= 0.9, "only {later} of {} users became harder to isolate", users.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn whatif_never_gets_easier_under_removals(seed in 0u64..1000, user_pick in any::<prop::sample::Index>(), removals in prop::collection::vec(any::<prop::sample::Index>(), 1..8), random in any::<bool>()) {
        let (pop, idx) = small(seed % 4);
        let user = &pop.users()[user_pick.index(pop.len())];
        let strategy = if random { SelectionStrategy::random(seed) } else { SelectionStrategy::least_popular() };
        let mut session = ProfileSession::for_user(&pop, user.user_id).unwrap();
        let mut last = whatif_uniqueness(&session, &idx, &pop, &strategy, CensorPolicy::UNCENSORED).unwrap();
        for r in removals {
            let interest = user.interests[r.index(user.interests.len())];
            session.remove(interest).unwrap();
            let now = match whatif_uniqueness(&session, &idx, &pop, &strategy, CensorPolicy::UNCENSORED) {
                Ok(now) => now,
                Err(Error::EmptyActiveSet(_)) => break,
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            };
            match (last.unique_at, now.unique_at) {
                (Some(a), Some(b)) => prop_assert!(b >= a),
                (None, Some(b)) => prop_assert!(false, "became unique at {}", b),
                _ => {}
            }
            // the ranking is fixed and every prefix audience can only grow
            prop_assert_eq!(&now.ordered_interests, &last.ordered_interests);
            prop_assert!(now.prefix_sizes.iter().zip(&last.prefix_sizes).all(|(n, l)| n >= l));
            prop_assert!(now.prefix_sizes.windows(2).all(|w| w[1] <= w[0]));
            last = now;
        }
    }

    #[test]
    fn thresholds_form_a_monotone_step(a in 0u64..3_000_000, b in 0u64..3_000_000) {
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(classify(lo) <= classify(hi) || classify(hi) == RiskLevel::Green);
    }
}

#[test]
fn session_round_trips() {
    let (pop, _) = small(5);
    let user = &pop.users()[0];
    let i = user.interests[0];
    let mut s = ProfileSession::for_user(&pop, user.user_id).unwrap();
    s.remove(i).unwrap();
    let once = s.removed().clone();
    s.remove(i).unwrap();
    assert_eq!(s.removed(), &once);
    assert_eq!(s.version(), 2);
    s.restore(i).unwrap();
    assert!(s.removed().is_empty());
    let foreign = pop.catalog().iter().map(|r| r.interest_id).find(|x| !user.holds(*x)).unwrap();
    assert!(s.remove(foreign).is_err());
    assert!(matches!(s.apply_at(0, "remove".parse().unwrap(), i), Err(Error::StaleVersion { .. })));
}
