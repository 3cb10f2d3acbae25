use std::collections::BTreeMap;

use aporo_core::annotate::{read_dataset, AnnotationStore, Item};
use aporo_core::geo::Region;
use aporo_core::taxonomy::Catalog;
use aporo_server::{router, AppState};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(adjudicators: &[&str]) -> Router {
    let items: Vec<Item> = (1..=3)
        .map(|i| Item {
            id: format!("t{i}"),
            text: format!("post {i}"),
            region: Region::Europe,
            topic_id: Some(5),
            month: Some(0),
            created_at: None,
        })
        .collect();
    let assignments: BTreeMap<String, Vec<String>> = items
        .iter()
        .map(|i| (i.id.clone(), vec!["ann1".to_string(), "ann2".to_string()]))
        .collect();
    let state = AppState::new(
        AnnotationStore::new(items, assignments),
        Catalog::builtin(),
        adjudicators.iter().map(|s| s.to_string()).collect(),
    );
    router(state, None)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn json_call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn label(app: &Router, item: &str, ann: &str, label: &str) -> StatusCode {
    json_call(app, "POST", &format!("/api/items/{item}/label"), Some(json!({"annotator": ann, "label": label})))
        .await
        .0
}

#[tokio::test]
async fn next_item_and_progress() {
    let app = app(&[]);
    let (s, v) = json_call(&app, "GET", "/api/items/next?annotator=ann1", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["item"]["id"], "t1");
    assert_eq!(v["progress"], json!({"done": 0, "total": 3}));
    assert_eq!(label(&app, "t1", "ann1", "Reporting").await, StatusCode::CREATED);
    let (_, v) = json_call(&app, "GET", "/api/items/next?annotator=ann1", None).await;
    assert_eq!(v["item"]["id"], "t2");
    assert_eq!(v["progress"]["done"], 1);
    let (_, v) = json_call(&app, "GET", "/api/items/next?annotator=stranger", None).await;
    assert_eq!(v["item"], Value::Null);
}

#[tokio::test]
async fn error_codes() {
    let app = app(&[]);
    assert_eq!(label(&app, "t1", "intruder", "Direct").await, StatusCode::FORBIDDEN);
    assert_eq!(label(&app, "nope", "ann1", "Direct").await, StatusCode::NOT_FOUND);
    assert_eq!(label(&app, "t1", "ann1", "Direct").await, StatusCode::CREATED);
    assert_eq!(label(&app, "t1", "ann1", "None").await, StatusCode::CONFLICT);
    let (s, _) = json_call(&app, "POST", "/api/items/t2/label", Some(json!({"annotator": "ann1"}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn submission_id_is_idempotent() {
    let app = app(&[]);
    let body = json!({"annotator": "ann1", "label": "Direct", "submission_id": "abc"});
    let (s1, r1) = json_call(&app, "POST", "/api/items/t1/label", Some(body.clone())).await;
    let (s2, r2) = json_call(&app, "POST", "/api/items/t1/label", Some(body)).await;
    assert_eq!((s1, s2), (StatusCode::CREATED, StatusCode::CREATED));
    assert_eq!(r1, r2);
    let (_, v) = json_call(&app, "GET", "/api/items/t1", None).await;
    assert_eq!(v["labels"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn queue_adjudication_and_export() {
    let app = app(&["lead"]);
    for (item, a, b) in [("t1", "Direct", "Reporting"), ("t2", "None", "None"), ("t3", "Direct", "None")] {
        label(&app, item, "ann1", a).await;
        label(&app, item, "ann2", b).await;
    }
    let (_, q) = json_call(&app, "GET", "/api/queue", None).await;
    let ids: Vec<&str> = q.as_array().unwrap().iter().map(|e| e["item_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["t1", "t3"]);

    let (s, _) = call(&app, "GET", "/api/export", None).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let resolve = json!({"adjudicator": "lead", "decision": "label", "label": "Reporting", "note": "critique"});
    let (s, _) = json_call(&app, "POST", "/api/items/t1/adjudicate", Some(json!({"adjudicator": "ann1", "decision": "remove"}))).await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    let (s, v) = json_call(&app, "POST", "/api/items/t1/adjudicate", Some(resolve.clone())).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["final_label"], "Reporting");
    let (s, _) = json_call(&app, "POST", "/api/items/t1/adjudicate", Some(resolve)).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = json_call(&app, "POST", "/api/items/t3/adjudicate", Some(json!({"adjudicator": "lead", "decision": "remove"}))).await;
    assert_eq!(s, StatusCode::OK);

    let (_, q) = json_call(&app, "GET", "/api/queue", None).await;
    assert_eq!(q, json!([]));
    let (s, csv) = call(&app, "GET", "/api/export", None).await;
    assert_eq!(s, StatusCode::OK);
    let rows = read_dataset(&csv[..]).unwrap();
    let got: Vec<(String, String)> = rows.iter().map(|r| (r.id.clone(), r.label.to_string())).collect();
    assert_eq!(got, [("t1".to_string(), "Reporting".to_string()), ("t2".to_string(), "None".to_string())]);
}

#[tokio::test]
async fn agreement_guidelines_taxonomy() {
    let app = app(&[]);
    for (item, a, b) in [("t1", "Direct", "Direct"), ("t2", "None", "Reporting"), ("t3", "None", "None")] {
        label(&app, item, "ann1", a).await;
        label(&app, item, "ann2", b).await;
    }
    let (_, v) = json_call(&app, "GET", "/api/agreement", None).await;
    assert_eq!(v[0]["annotator_a"], "ann1");
    assert_eq!(v[0]["stats"]["n"], 3);
    let (s, g) = call(&app, "GET", "/api/guidelines", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(String::from_utf8(g).unwrap().contains("Reporting"));
    let (_, t) = json_call(&app, "GET", "/api/taxonomy", None).await;
    assert_eq!(t.as_array().unwrap().len(), 14);
}

#[tokio::test]
async fn insufficient_context_goes_to_queue() {
    let app = app(&[]);
    let (s, _) = json_call(
        &app,
        "POST",
        "/api/items/t1/label",
        Some(json!({"annotator": "ann1", "insufficient_context": true})),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);
    label(&app, "t1", "ann2", "None").await;
    let (_, q) = json_call(&app, "GET", "/api/queue", None).await;
    assert_eq!(q[0]["item_id"], "t1");
}
