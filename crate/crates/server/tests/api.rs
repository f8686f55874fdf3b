use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use nanoscope_core::estimator::BootstrapSettings;
use nanoscope_core::population::{
    generate_population, Demographics, Gender, GeneratorConfig, InterestCountModel, InterestRecord, Population, Provenance,
    UserProfile,
};
use nanoscope_core::risk::AudienceTable;
use nanoscope_server::{router, AppState, ServerConfig, Source};
use serde_json::{json, Value};
use tower::ServiceExt;

const A: u32 = 10;
const B: u32 = 20;
const C: u32 = 30;

fn toy() -> Population {
    let rec = |id, name: &str| InterestRecord {
        interest_id: id,
        name: name.into(),
        global_audience: 0,
    };
    let user = |id, interests: &[u32]| UserProfile {
        user_id: id,
        demographics: Demographics {
            gender: Gender::Male,
            age_years: Some(30),
            country: None,
        },
        interests: interests.to_vec(),
    };
    Population::new(
        vec![rec(A, "a"), rec(B, "b"), rec(C, "c")],
        vec![user(1, &[A, B]), user(2, &[A]), user(3, &[A, B, C])],
        Provenance::Ingested { path_digest: "toy".into() },
    )
    .unwrap()
}

fn generated() -> Population {
    generate_population(&GeneratorConfig {
        n_users: 1500,
        n_interests: 300,
        popularity_exponent: 1.0,
        interests_per_user: InterestCountModel {
            mu: 20f64.ln(),
            sigma: 0.7,
            min: 3,
            max: 150,
        },
        communities: None,
        seed: 11,
    })
    .unwrap()
}

fn app(population: Population) -> Router {
    let config = ServerConfig {
        bootstrap: BootstrapSettings { n_resamples: 60, seed: 3 },
        ..ServerConfig::default()
    };
    router(AppState::new(Source::population(population).unwrap(), config))
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    let raw: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&raw).unwrap()
}

/// Sends a request and checks the body against `schema_name`.
async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>, schema_name: &str) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let res = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = res.status();
    let ct = res.headers().get(header::CONTENT_TYPE).map(|v| v.to_str().unwrap().to_string());
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value: Value = serde_json::from_slice(&bytes).unwrap_or_else(|e| panic!("{uri}: non-JSON body ({e}): {bytes:?}"));
    assert_eq!(ct.as_deref(), Some("application/json"), "{uri}");
    let validator = schema(schema_name);
    let errors: Vec<String> = validator.iter_errors(&value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{uri} does not match {schema_name}: {errors:?}\n{value}");
    (status, value)
}

async fn get(app: &Router, uri: &str, schema_name: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, None, schema_name).await
}

async fn post(app: &Router, uri: &str, body: Value, schema_name: &str) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Some(body), schema_name).await
}

#[tokio::test]
async fn health_reports_the_population_digest() {
    let pop = toy();
    let digest = pop.digest();
    let app = app(pop);
    for prefix in ["/api", "/api/v1"] {
        let (status, body) = get(&app, &format!("{prefix}/health"), "health").await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body, json!({"status": "ok", "population_digest": digest}));
    }
}

#[tokio::test]
async fn risks_are_sorted_by_audience() {
    let app = app(toy());
    let (status, body) = get(&app, "/api/users/3/risks", "risk-list").await;
    assert_eq!(status, StatusCode::OK);
    let ids: Vec<u64> = body.as_array().unwrap().iter().map(|e| e["interest_id"].as_u64().unwrap()).collect();
    assert_eq!(ids, [C as u64, B as u64, A as u64]);
    let audiences: Vec<u64> = body.as_array().unwrap().iter().map(|e| e["audience"].as_u64().unwrap()).collect();
    assert_eq!(audiences, [1, 2, 3]);
    assert!(body.as_array().unwrap().iter().all(|e| e["level"] == "red" && e["status"] == "active"));
}

#[tokio::test]
async fn removal_flips_status_and_bumps_version() {
    let app = app(toy());
    let (_, s) = get(&app, "/api/users/3/session", "session-summary").await;
    assert_eq!(s["version"], 0);
    let (status, s) = post(&app, "/api/users/3/interests/30/remove", json!({"version": 0}), "session-summary").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(s["version"], 1);
    assert_eq!(s["removed"], json!([30]));
    let (_, risks) = get(&app, "/api/users/3/risks", "risk-list").await;
    let c = risks.as_array().unwrap().iter().find(|e| e["interest_id"] == 30).unwrap();
    assert_eq!(c["status"], "inactive");

    let (status, s) = post(&app, "/api/users/3/interests/30/restore", json!({"version": 1}), "session-summary").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(s["version"], 2);
    assert_eq!(s["removed"], json!([]));
}

#[tokio::test]
async fn stale_version_conflicts_and_retry_converges() {
    let app = app(toy());
    post(&app, "/api/users/3/interests/10/remove", json!({"version": 0}), "session-summary").await;
    let (status, err) = post(&app, "/api/users/3/interests/20/remove", json!({"version": 0}), "error").await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "stale_version");
    let (_, s) = get(&app, "/api/users/3/session", "session-summary").await;
    let (status, s) = post(&app, "/api/users/3/interests/20/remove", json!({"version": s["version"]}), "session-summary").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(s["removed"], json!([10, 20]));
}

#[tokio::test]
async fn whatif_after_removing_the_rarest_interest() {
    let app = app(toy());
    let (status, w) = get(&app, "/api/users/3/whatif", "whatif-report").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(w["unique_at"], 1);
    post(&app, "/api/users/3/interests/30/remove", json!({"version": 0}), "session-summary").await;
    let (_, w) = get(&app, "/api/users/3/whatif?strategy=lp&floor=1", "whatif-report").await;
    assert_eq!(w["unique_at"], Value::Null);
    assert_eq!(w["version"], 1);
    assert_eq!(w["ordered_interests"], json!([30, 20, 10]));
    assert_eq!(w["active"], json!([false, true, true]));
    assert_eq!(w["prefix_sizes"], json!([3, 2, 2]));
}

#[tokio::test]
async fn whatif_unique_at_never_decreases_under_removals() {
    let pop = generated();
    let user = pop.users()[5].clone();
    let app = app(pop);
    let uri = format!("/api/users/{}/whatif", user.user_id);
    let (_, w) = get(&app, &uri, "whatif-report").await;
    let mut last = w["unique_at"].as_u64();
    let order: Vec<u64> = w["ordered_interests"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    for (version, interest) in order.iter().take(4).enumerate() {
        post(
            &app,
            &format!("/api/users/{}/interests/{interest}/remove", user.user_id),
            json!({"version": version}),
            "session-summary",
        )
        .await;
        let (_, w) = get(&app, &uri, "whatif-report").await;
        let now = w["unique_at"].as_u64();
        match (last, now) {
            (Some(a), Some(b)) => assert!(b >= a, "unique_at fell from {a} to {b}"),
            (None, Some(b)) => panic!("unique_at reappeared at {b}"),
            _ => {}
        }
        last = now;
    }
}

#[tokio::test]
async fn report_matches_schema_and_is_cached() {
    let app = app(generated());
    let uri = "/api/report?strategy=lp,random&p=0.5,0.9";
    let (status, first) = get(&app, uri, "uniqueness-report").await;
    assert_eq!(status, StatusCode::OK, "{first}");
    assert_eq!(first["rows"].as_array().unwrap().len(), 4);
    let (_, second) = get(&app, uri, "uniqueness-report").await;
    assert_eq!(first, second);
}

#[tokio::test]
async fn client_errors() {
    let app = app(toy());
    let cases: &[(Method, &str, Option<Value>, StatusCode)] = &[
        (Method::GET, "/api/users/99/risks", None, StatusCode::NOT_FOUND),
        (Method::GET, "/api/users/abc/risks", None, StatusCode::BAD_REQUEST),
        (Method::GET, "/api/nowhere", None, StatusCode::NOT_FOUND),
        (Method::GET, "/api/users/3/whatif?floor=0", None, StatusCode::BAD_REQUEST),
        (Method::GET, "/api/users/3/whatif?strategy=popular", None, StatusCode::BAD_REQUEST),
        (Method::GET, "/api/users/3/whatif?n_max=26", None, StatusCode::BAD_REQUEST),
        (Method::GET, "/api/report?p=1.5", None, StatusCode::BAD_REQUEST),
        (Method::POST, "/api/users/3/interests/30/hide", Some(json!({"version": 0})), StatusCode::NOT_FOUND),
        (Method::POST, "/api/users/3/interests/30/remove", Some(json!({"v": 0})), StatusCode::BAD_REQUEST),
        (Method::POST, "/api/users/3/interests/30/remove", None, StatusCode::BAD_REQUEST),
        (Method::POST, "/api/users/2/interests/30/remove", Some(json!({"version": 0})), StatusCode::BAD_REQUEST),
    ];
    for (method, uri, body, expected) in cases {
        let (status, err) = call(&app, method.clone(), uri, body.clone(), "error").await;
        assert_eq!(status, *expected, "{method} {uri}: {err}");
    }
}

#[tokio::test]
async fn audience_table_mode() {
    let table = AudienceTable::from_reader(
        std::path::Path::new("table.csv"),
        "interest_id,audience_size,name\n1,1000000,Music\n2,9000,Tiny club\n".as_bytes(),
    )
    .unwrap();
    let digest = table.digest();
    let app = router(AppState::new(
        Source::Table {
            user_id: 42,
            table: Arc::new(table),
        },
        ServerConfig::default(),
    ));
    let (_, h) = get(&app, "/api/health", "health").await;
    assert_eq!(h["population_digest"], digest);
    let (status, risks) = get(&app, "/api/users/42/risks", "risk-list").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(risks[0]["level"], "red");
    assert_eq!(risks[1]["level"], "green");
    let (status, _) = get(&app, "/api/users/7/risks", "error").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = get(&app, "/api/users/42/whatif", "error").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn cors_allows_localhost_only_by_default() {
    let app = app(toy());
    for (origin, allowed) in [("http://localhost:5173", true), ("http://127.0.0.1:3000", true), ("https://evil.example", false)] {
        let req = Request::builder()
            .method(Method::OPTIONS)
            .uri("/api/health")
            .header(header::ORIGIN, origin)
            .header(header::ACCESS_CONTROL_REQUEST_METHOD, "GET")
            .body(Body::empty())
            .unwrap();
        let res = app.clone().oneshot(req).await.unwrap();
        let echoed = res.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).map(|v| v.to_str().unwrap().to_string());
        assert_eq!(echoed.is_some(), allowed, "{origin}");
    }
}
