use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use teaser_core::dataset::{prepare, EncodingConfig, SplitSpec};
use teaser_core::ease::train_ease;
use teaser_core::solver::{train, Hyperparams};
use teaser_core::synthetic::{planted_preferences, PlantedConfig};
use teaser_service::{router, Models, Service};
use tower::ServiceExt;

fn models(with_ease: bool) -> Models {
    let data = planted_preferences(&PlantedConfig {
        seed: 8,
        ..Default::default()
    })
    .unwrap();
    let ds = prepare(
        &data.interactions,
        &data.metadata,
        &EncodingConfig::default(),
        &SplitSpec::default(),
    )
    .unwrap();
    let encoder = train(
        &ds.split.train,
        &ds.tags,
        &Hyperparams::new(10.0, 10.0, 10.0),
    )
    .unwrap();
    let ease = with_ease.then(|| train_ease(&ds.split.train, 50.0).unwrap());
    Models::new(ds, encoder, ease).unwrap()
}

fn app(with_ease: bool) -> axum::Router {
    router(Arc::new(Service::new(Some(models(with_ease)))))
}

async fn call(
    app: &axum::Router,
    method: Method,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn new_session(app: &axum::Router) -> String {
    let (status, body) = call(app, Method::POST, "/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    body["session_id"].as_str().unwrap().to_owned()
}

fn item_ids(view: &Value) -> Vec<String> {
    view["items"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["item_id"].as_str().unwrap().to_owned())
        .collect()
}

async fn recs(app: &axum::Router, id: &str, k: usize) -> Value {
    let (status, body) = call(
        app,
        Method::GET,
        &format!("/sessions/{id}/recommendations?k={k}"),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    body
}

#[tokio::test]
async fn new_sessions_start_cold() {
    let m = models(false);
    let mut by_popularity: Vec<usize> = (0..m.dataset.num_items()).collect();
    let pop = m.dataset.tags.popularity().to_vec();
    by_popularity.sort_by(|&a, &b| pop[b].total_cmp(&pop[a]).then(a.cmp(&b)));
    let expected: Vec<String> = by_popularity[..20]
        .iter()
        .map(|&i| m.dataset.items.id(i).to_owned())
        .collect();
    let app = router(Arc::new(Service::new(Some(m))));

    let a = new_session(&app).await;
    let b = new_session(&app).await;
    assert_ne!(a, b);
    let (status, profile) = call(&app, Method::GET, &format!("/sessions/{a}/profile"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(profile["certainty"], json!(0.2));
    assert!(profile["history"].as_array().unwrap().is_empty());
    assert_eq!(item_ids(&recs(&app, &a, 20).await), expected);
}

#[tokio::test]
async fn history_round_trip() {
    let app = app(false);
    let id = new_session(&app).await;
    let before = recs(&app, &id, 30).await;
    let first = item_ids(&before)[0].clone();

    let (status, after) = call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/history"),
        Some(json!({"item_id": first})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert!(!item_ids(&after).contains(&first));
    assert_eq!(after["profile"]["certainty"], json!(0.4));

    let (status, _) = call(
        &app,
        Method::DELETE,
        &format!("/sessions/{id}/history/{first}"),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(recs(&app, &id, 30).await, before);
}

#[tokio::test]
async fn certainty_caps_after_three_items() {
    let app = app(false);
    let id = new_session(&app).await;
    let mut last = Value::Null;
    for item in ["item0001", "item0002", "item0003"] {
        let (status, body) = call(
            &app,
            Method::POST,
            &format!("/sessions/{id}/history"),
            Some(json!({"item_id": item})),
        )
        .await;
        assert_eq!(status, StatusCode::OK);
        last = body;
    }
    assert_eq!(last["profile"]["certainty"], json!(0.8));
    for tag in last["profile"]["tags"].as_array().unwrap() {
        assert!(tag["display_affinity"].as_f64().unwrap().abs() <= 0.8 + 1e-12);
    }
    let impact: f64 = last["profile"]["categories"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["impact"].as_f64().unwrap())
        .sum();
    assert!((impact - 1.0).abs() <= 1e-9);
    for item in last["items"].as_array().unwrap() {
        let expl = item["explanations"].as_array().unwrap();
        assert!(expl.len() <= 5);
        assert!(expl
            .iter()
            .all(|e| e["percent"].as_f64().unwrap().abs() >= 5.0));
    }
}

#[tokio::test]
async fn feedback_clicks_and_negative_explanations() {
    let app = app(false);
    let id = new_session(&app).await;
    call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/history"),
        Some(json!({"item_id": "item0004"})),
    )
    .await;
    let (_, item) = call(&app, Method::GET, "/items/item0004", None).await;
    let tag = item["tags"][0]["tag_id"].as_u64().unwrap();

    let mut view = Value::Null;
    for _ in 0..3 {
        let (status, body) = call(
            &app,
            Method::POST,
            &format!("/sessions/{id}/feedback"),
            Some(json!({"tag_id": tag, "direction": "-"})),
        )
        .await;
        assert_eq!(status, StatusCode::OK);
        view = body;
    }
    let entry = &view["profile"]["tags"][tag as usize];
    assert_eq!(entry["feedback_clicks"], json!(-3));
    assert!(entry["display_affinity"].as_f64().unwrap() < 0.0);

    let all = recs(&app, &id, 200).await;
    let negative = all["items"].as_array().unwrap().iter().any(|i| {
        i["explanations"]
            .as_array()
            .unwrap()
            .iter()
            .any(|e| e["tag_id"].as_u64() == Some(tag) && e["percent"].as_f64().unwrap() < 0.0)
    });
    assert!(negative, "no item explained by the disliked tag");
}

#[tokio::test]
async fn errors_map_to_status_codes() {
    let app = app(false);
    let id = new_session(&app).await;
    let cases = [
        (
            Method::GET,
            "/sessions/nope/profile".to_owned(),
            None,
            StatusCode::NOT_FOUND,
        ),
        (
            Method::GET,
            "/items/nope".to_owned(),
            None,
            StatusCode::NOT_FOUND,
        ),
        (
            Method::POST,
            format!("/sessions/{id}/history"),
            Some(json!({"item_id": "nope"})),
            StatusCode::NOT_FOUND,
        ),
        (
            Method::DELETE,
            format!("/sessions/{id}/history/item0001"),
            None,
            StatusCode::NOT_FOUND,
        ),
        (
            Method::POST,
            format!("/sessions/{id}/feedback"),
            Some(json!({"tag_id": 9999, "direction": "+"})),
            StatusCode::NOT_FOUND,
        ),
        (
            Method::GET,
            format!("/sessions/{id}/recommendations?ensemble=true"),
            None,
            StatusCode::BAD_REQUEST,
        ),
        (
            Method::GET,
            format!("/sessions/{id}/recommendations?k=0"),
            None,
            StatusCode::BAD_REQUEST,
        ),
    ];
    for (method, uri, body, expected) in cases {
        let (status, body) = call(&app, method, &uri, body).await;
        assert_eq!(status, expected, "{uri}: {body}");
        assert!(body["error"].is_string());
    }

    let empty = router(Arc::new(Service::new(None)));
    let (status, _) = call(&empty, Method::POST, "/sessions", None).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    let (status, _) = call(&empty, Method::GET, "/items/item0001", None).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn ensemble_ranking_when_ease_is_loaded() {
    let app = app(true);
    let id = new_session(&app).await;
    call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/history"),
        Some(json!({"item_id": "item0007"})),
    )
    .await;
    let (status, body) = call(
        &app,
        Method::GET,
        &format!("/sessions/{id}/recommendations?k=10&ensemble=true"),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let items = body["items"].as_array().unwrap();
    assert_eq!(items.len(), 10);
    assert!(items.iter().all(|i| i["score"].as_f64().unwrap() >= 0.0));
    assert_eq!(items[0]["percent_match"], json!(100.0));
}

#[tokio::test]
async fn item_metadata() {
    let app = app(false);
    let (status, body) = call(&app, Method::GET, "/items/item0003", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["title"], json!("Item 3"));
    assert_eq!(body["display"]["title"], json!("Item 3"));
    assert!(body["tags"]
        .as_array()
        .unwrap()
        .iter()
        .any(|t| t["category"] == json!("popularity")));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_feedback_serializes() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    let service = Arc::new(Service::with_log(models(false), &log).unwrap());
    let app = router(service.clone());
    let id = new_session(&app).await;

    let mut handles = Vec::new();
    for n in 0..40u64 {
        let (app, id) = (app.clone(), id.clone());
        handles.push(tokio::spawn(async move {
            let body = json!({"tag_id": n % 4, "direction": if n % 8 < 4 { "+" } else { "-" }});
            call(
                &app,
                Method::POST,
                &format!("/sessions/{id}/feedback"),
                Some(body),
            )
            .await
            .0
        }));
    }
    for h in handles {
        assert_eq!(h.await.unwrap(), StatusCode::OK);
    }
    // 5 ups and 5 downs per tag: any serial order without hitting the clamp nets zero
    let state = service.sessions().state(&id).unwrap();
    assert_eq!(state.clicks()[..4], [0, 0, 0, 0]);
    let text = std::fs::read_to_string(&log).unwrap();
    let applied = text.lines().filter(|l| l.contains("\"feedback\"")).count();
    assert_eq!(applied, 40);

    let restored = Service::with_log(models(false), &log).unwrap();
    assert_eq!(restored.sessions().state(&id).unwrap(), state);
}

#[tokio::test]
async fn replaying_the_log_reproduces_recommendations() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    let first = router(Arc::new(Service::with_log(models(false), &log).unwrap()));
    let id = new_session(&first).await;
    let other = new_session(&first).await;
    call(
        &first,
        Method::POST,
        &format!("/sessions/{id}/history"),
        Some(json!({"item_id": "item0010"})),
    )
    .await;
    call(
        &first,
        Method::POST,
        &format!("/sessions/{id}/history"),
        Some(json!({"item_id": "item0020"})),
    )
    .await;
    call(
        &first,
        Method::POST,
        &format!("/sessions/{id}/feedback"),
        Some(json!({"tag_id": 2, "direction": "+"})),
    )
    .await;
    call(
        &first,
        Method::DELETE,
        &format!("/sessions/{id}/history/item0010"),
        None,
    )
    .await;
    call(
        &first,
        Method::POST,
        &format!("/sessions/{other}/feedback"),
        Some(json!({"tag_id": 1, "direction": "down"})),
    )
    .await;
    let want = (recs(&first, &id, 50).await, recs(&first, &other, 50).await);

    let second = router(Arc::new(Service::with_log(models(false), &log).unwrap()));
    assert_eq!(
        (
            recs(&second, &id, 50).await,
            recs(&second, &other, 50).await
        ),
        want
    );
}
