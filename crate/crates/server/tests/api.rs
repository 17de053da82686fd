use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use rolesearch_core::engine::{attach_structure, run_etl, train_topics, Engine, EtlConfig};
use rolesearch_core::lda::LdaConfig;
use rolesearch_core::synth::{generate, SynthCorpus, SynthSpec};
use rolesearch_core::text::StopWords;
use rolesearch_server::router;

struct Fixture {
    app: Router,
    corpus: SynthCorpus,
    _dir: tempfile::TempDir,
}

fn fixture_with_ui(ui: Option<std::path::PathBuf>) -> Fixture {
    let corpus = generate(&SynthSpec {
        docs_per_cell: 8,
        ..SynthSpec::default()
    });
    let dir = tempfile::tempdir().unwrap();
    run_etl(corpus.documents.clone(), &StopWords::english(), &EtlConfig::default(), dir.path()).unwrap();
    attach_structure(dir.path(), corpus.structure.as_ref().unwrap()).unwrap();
    let config = LdaConfig {
        n_sweeps: 30,
        ..LdaConfig::with_topics(3)
    };
    train_topics(dir.path(), &config, |_, _| {}).unwrap();
    let engine = Arc::new(Engine::open(dir.path()).unwrap());
    Fixture {
        app: router(engine, ui),
        corpus,
        _dir: dir,
    }
}

fn fixture() -> Fixture {
    fixture_with_ui(None)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
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
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, value)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, None).await
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Some(body)).await
}

#[tokio::test]
async fn health_and_stats() {
    let f = fixture();
    assert_eq!(get(&f.app, "/health").await, (StatusCode::OK, json!({"status": "ok"})));
    let (status, stats) = get(&f.app, "/stats").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(stats["manifest"]["n_docs"], 72);
    assert_eq!(stats["manifest"]["model"]["config"]["n_topics"], 3);
    assert_eq!(stats["registry_version"], 0);
    assert_eq!(get(&f.app, "/stats").await.1, stats);
}

#[tokio::test]
async fn search_and_documents() {
    let f = fixture();
    let q = &f.corpus.query_words[0][0];
    let (status, res) = get(&f.app, &format!("/search?q={q}&k=5")).await;
    assert_eq!(status, StatusCode::OK);
    let hits = res["hits"].as_array().unwrap();
    assert_eq!(hits.len(), 5);
    assert_eq!(hits[0]["rank"], 1);
    assert!(hits[0]["qlm_score"].as_f64().unwrap() > 0.0);
    assert!(hits[0]["title"].as_str().unwrap().contains("report"));
    assert_eq!(res["terms"], json!([q]));

    let id = hits[0]["doc_id"].as_str().unwrap();
    let (status, doc) = get(&f.app, &format!("/documents/{id}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(doc["topic_distribution"].as_array().unwrap().len(), 3);
    assert!(doc["entities"]["region_dist"].is_object());

    assert_eq!(get(&f.app, "/documents/missing").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&f.app, &format!("/search?q={q}&k=0")).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&f.app, "/search?q=the").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&f.app, &format!("/search?q={q}&role=r9")).await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&f.app, "/search?k=abc").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&f.app, "/model/topics?n=4").await.1.as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn topic_definition_flow() {
    let f = fixture();
    let seed = &f.corpus.topic_words[0][0];
    let (status, topic) = post(&f.app, "/topics", json!({"name": "disasters", "seed": seed})).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(topic["version"], 1);
    assert_eq!(topic["status"], "draft");
    let id = topic["topic_id"].as_str().unwrap().to_string();

    let (status, err) = post(&f.app, "/topics", json!({"name": "x", "seed": "zzqqxx"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(!err["suggestions"].as_array().unwrap().is_empty());
    assert_eq!(post(&f.app, "/topics", json!({"name": "x"})).await.0, StatusCode::BAD_REQUEST);

    let (_, list) = get(&f.app, "/topics").await;
    assert_eq!(list["version"], 1);
    assert_eq!(list["topics"][0]["topic_id"], id.as_str());

    let (status, suggestions) = get(&f.app, &format!("/topics/{id}/suggestions?n=4")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(suggestions.as_array().unwrap().len(), 4);
    assert!(suggestions[0]["distance"].is_number());

    let accept: Vec<&str> = f.corpus.topic_words[0][1..6].iter().map(String::as_str).collect();
    let stale = post(&f.app, &format!("/topics/{id}/judgments"), json!({"accept": accept, "expected_version": 0})).await;
    assert_eq!(stale.0, StatusCode::CONFLICT);
    let (status, topic) = post(&f.app, &format!("/topics/{id}/judgments"), json!({"accept": accept, "expected_version": 1})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(topic["version"], 2);
    assert_eq!(topic["accepted_words"].as_array().unwrap().len(), 6);

    let (status, boundary) = get(&f.app, &format!("/topics/{id}/boundary?band=72")).await;
    assert_eq!(status, StatusCode::OK);
    let judgments: Vec<Value> = boundary
        .as_array()
        .unwrap()
        .iter()
        .map(|b| {
            let doc_id = b["doc_id"].as_str().unwrap();
            let relevant = f.corpus.labels.iter().any(|l| l.doc_id == doc_id && l.topic == 0);
            json!({"doc_id": doc_id, "relevant": relevant})
        })
        .collect();
    let (status, topic) = post(&f.app, &format!("/topics/{id}/calibrate"), json!({"judgments": judgments})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(topic["status"], "calibrated");

    let (status, ranking) = get(&f.app, &format!("/topics/{id}/ranking?k=3")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ranking.as_array().unwrap().len(), 3);
    assert_eq!(get(&f.app, "/topics/t99").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&f.app, "/topics/t99/suggestions").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn roles_and_role_search() {
    let f = fixture();
    let seed = &f.corpus.topic_words[1][0];
    let (_, topic) = post(&f.app, "/topics", json!({"name": "economy", "seeds": [seed]})).await;
    let region = &f.corpus.region_names[0];
    let body = json!({"name": "analyst", "entity": region, "topic": topic["topic_id"]});
    let (status, role) = post(&f.app, "/roles", body.clone()).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(role["entity_target"], "R0");
    assert_eq!(role["lambda2"], 0.9);
    assert_eq!(post(&f.app, "/roles", body).await.0, StatusCode::CONFLICT);
    assert_eq!(post(&f.app, "/roles", json!({"name": "b", "topic": "t42"})).await.0, StatusCode::NOT_FOUND);
    assert_eq!(post(&f.app, "/roles", json!({"name": "c", "entity": "Atlantis"})).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(
        post(&f.app, "/roles", json!({"name": "d", "entity": region, "lambda2": 1.5})).await.0,
        StatusCode::BAD_REQUEST
    );

    let (_, roles) = get(&f.app, "/roles").await;
    assert_eq!(roles["roles"].as_array().unwrap().len(), 1);
    let role_id = role["role_id"].as_str().unwrap();
    assert_eq!(get(&f.app, &format!("/roles/{role_id}")).await.1["name"], "analyst");

    let q = &f.corpus.query_words[1][0];
    let (status, err) = get(&f.app, &format!("/search?q={q}&role={role_id}")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(err["error"].as_str().unwrap().contains("calibrated"), "{err}");

    let (_, regional) = post(&f.app, "/roles", json!({"name": "regional", "entity": region})).await;
    let regional = regional["role_id"].as_str().unwrap();
    let (status, res) = get(&f.app, &format!("/search?q={q}&role={regional}&k=5")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(res["role"]["role_id"], regional);
    for h in res["hits"].as_array().unwrap() {
        assert!(h["entity_score"].is_number() && h["topic_score"].is_null());
    }
    let (status, res) = get(&f.app, &format!("/search?role={regional}&k=3")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(res["hits"].as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn malformed_bodies_are_bad_requests() {
    let f = fixture();
    let req = Request::builder()
        .method(Method::POST)
        .uri("/topics")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    let res = f.app.clone().oneshot(req).await.unwrap();
    assert_eq!(res.status(), StatusCode::BAD_REQUEST);
    assert_eq!(post(&f.app, "/topics", json!({"seeds": 3})).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn serves_static_ui() {
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<h1>ui</h1>").unwrap();
    let f = fixture_with_ui(Some(ui.path().to_path_buf()));
    let res = f.app.clone().oneshot(Request::get("/index.html").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&bytes[..], b"<h1>ui</h1>");
    assert_eq!(get(&f.app, "/health").await.0, StatusCode::OK);
}
