//! Frozen outputs. Regenerate with `NANOSCOPE_UPDATE_SNAPSHOTS=1 cargo test --test snapshots`.

use std::path::PathBuf;

use nanoscope_core::estimator::{uniqueness_report, BootstrapSettings, DEFAULT_PROBABILITIES};
use nanoscope_core::index::{build_index, CensorPolicy};
use nanoscope_core::population::{generate_population, summary_stats, GeneratorConfig, InterestCountModel, Population};
use nanoscope_core::selection::SelectionStrategy;
use serde_json::Value;

fn snapshot_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/snapshots").join(name)
}

/// Structural equality with a relative tolerance on floating-point numbers.
fn close(a: &Value, b: &Value, path: &str) -> Result<(), String> {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) if x.is_f64() || y.is_f64() => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            if (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0) {
                Ok(())
            } else {
                Err(format!("{path}: {x} != {y}"))
            }
        }
        (Value::Array(xs), Value::Array(ys)) if xs.len() == ys.len() => {
            xs.iter().zip(ys).enumerate().try_for_each(|(i, (x, y))| close(x, y, &format!("{path}[{i}]")))
        }
        (Value::Object(xs), Value::Object(ys)) if xs.len() == ys.len() => xs.iter().try_for_each(|(k, x)| {
            ys.get(k).ok_or(format!("{path}.{k} missing")).and_then(|y| close(x, y, &format!("{path}.{k}")))
        }),
        _ if a == b => Ok(()),
        _ => Err(format!("{path}: {a} != {b}")),
    }
}

fn check(name: &str, actual: &impl serde::Serialize) {
    let actual = serde_json::to_value(actual).unwrap();
    let path = snapshot_path(name);
    if std::env::var_os("NANOSCOPE_UPDATE_SNAPSHOTS").is_some() {
        std::fs::write(&path, serde_json::to_string_pretty(&actual).unwrap() + "\n").unwrap();
        return;
    }
    let expected: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    if let Err(diff) = close(&actual, &expected, name) {
        panic!("snapshot {name} changed: {diff}");
    }
}

fn small() -> Population {
    generate_population(&GeneratorConfig {
        n_users: 2500,
        n_interests: 300,
        popularity_exponent: 1.0,
        interests_per_user: InterestCountModel {
            mu: 20f64.ln(),
            sigma: 0.8,
            min: 2,
            max: 150,
        },
        communities: None,
        seed: 42,
    })
    .unwrap()
}

#[test]
fn calibrated_interest_count_median() {
    let mut config = GeneratorConfig::calibrated(100_000, 7);
    config.n_interests = 10_000;
    let configured = config.interests_per_user.median();
    let stats = summary_stats(&generate_population(&config).unwrap()).unwrap();
    let realised = stats.interests_per_user.median() as f64;
    assert!((realised - configured).abs() <= 0.1 * configured, "median {realised} vs configured {configured}");
    check("calibrated_median.json", &serde_json::json!({ "configured": configured, "realised": realised }));
}

#[test]
fn stats_of_a_small_population() {
    check("stats_small.json", &summary_stats(&small()).unwrap());
}

#[test]
fn report_of_a_small_population() {
    let pop = small();
    let idx = build_index(&pop).unwrap();
    let report = uniqueness_report(
        &pop,
        &idx,
        &[SelectionStrategy::least_popular(), SelectionStrategy::random(9)],
        &DEFAULT_PROBABILITIES,
        CensorPolicy::UNCENSORED,
        &BootstrapSettings { n_resamples: 300, seed: 1 },
    )
    .unwrap();
    check("report_small.json", &report);
}
