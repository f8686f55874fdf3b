//! Prints the quantities the calibrated generator profile is tuned against.
//!
//! cargo run --release -p nanoscope-core --example calibrate -- [users] [seed] [n_interests exponent median sigma min max [communities pool memberships affinity]]

use std::time::Instant;

use nanoscope_core::campaign::success_rate;
use nanoscope_core::estimator::{build_matrix, estimate_cutpoint, quantile_vector};
use nanoscope_core::index::{build_index, CensorPolicy};
use nanoscope_core::population::{generate_population, summary_stats, CommunityModel, GeneratorConfig};
use nanoscope_core::selection::SelectionStrategy;

fn main() -> nanoscope_core::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let num = |i: usize, d: f64| args.get(i).map_or(d, |s| s.parse().expect("number"));
    let n_users = num(0, 100_000.0) as usize;
    let seed = num(1, 1.0) as u64;
    let mut config = GeneratorConfig::calibrated(n_users, seed);
    if args.len() > 2 {
        config.n_interests = num(2, 0.0) as usize;
        config.popularity_exponent = num(3, 0.0);
        config.interests_per_user.mu = num(4, 0.0).ln();
        config.interests_per_user.sigma = num(5, 0.0);
        config.interests_per_user.min = num(6, 0.0) as usize;
        config.interests_per_user.max = num(7, 0.0) as usize;
    }
    if args.len() > 8 {
        config.communities = Some(CommunityModel {
            count: num(8, 0.0) as usize,
            pool_size: num(9, 0.0) as usize,
            memberships: num(10, 0.0) as usize,
            affinity: num(11, 0.0),
        });
    }
    let t = Instant::now();
    let population = generate_population(&config)?;
    let index = build_index(&population)?;
    let stats = summary_stats(&population)?;
    println!("generated in {:.1?}: {:?}", t.elapsed(), config);
    println!("interests/user {:?}", stats.interests_per_user.values);
    println!("audience {:?}", stats.global_audience.values);

    for strategy in [SelectionStrategy::least_popular(), SelectionStrategy::random(seed)] {
        let t = Instant::now();
        let matrix = build_matrix(&population, &index, &strategy, CensorPolicy::UNCENSORED, None)?;
        for q in [50.0, 80.0, 90.0, 95.0] {
            let mut line = format!("{:?} Q{q}:", strategy.kind);
            for floor in [1, 20, 100] {
                let policy = CensorPolicy::new(floor)?;
                let v = quantile_vector(&matrix.with_policy(policy), q)?;
                match estimate_cutpoint(&v, policy) {
                    Ok(e) => line += &format!(" f{floor}={:.2}", e.cutpoint),
                    Err(e) => line += &format!(" f{floor}=err({e})"),
                }
                if floor == 1 {
                    line += &format!(" AS={:?}", &v.values[..v.values.len().min(25)]);
                }
            }
            println!("{line}");
        }
        println!("matrix+fits in {:.1?}", t.elapsed());
        if std::env::var_os("CALIBRATE_BOOTSTRAP").is_some() {
            let t = Instant::now();
            let b = nanoscope_core::estimator::bootstrap_ci(&matrix, 90.0, 1000, 9)?;
            println!("bootstrap x1000 in {:.1?}: {b:?}", t.elapsed());
        }
        if strategy.kind == nanoscope_core::selection::SelectionKind::Random {
            for q in [50.0, 90.0] {
                let v = quantile_vector(&matrix, q)?;
                let n = estimate_cutpoint(&v, CensorPolicy::UNCENSORED)?.cutpoint.round() as usize;
                let n = n.clamp(1, 25);
                let rate = success_rate(&index, &population, &strategy, n, 1000, seed ^ 0xabc)?;
                println!("Q{q}: N*={n} success={rate:.3}");
            }
        }
    }
    Ok(())
}
