use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use mathrev::eqc::svm_source;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn svm_session(app: &Router) -> String {
    let (status, body) = call(app, "POST", "/sessions", Some(json!({ "source": svm_source() }))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    body["id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn callgraph_lists_intrinsic_leaf() {
    let app = mathrev_cli::router();
    let id = svm_session(&app).await;
    let (status, g) = call(&app, "GET", &format!("/sessions/{id}/callgraph"), None).await;
    assert_eq!(status, StatusCode::OK);
    let edges = g["edges"].as_array().unwrap();
    assert!(edges.contains(&json!(["classify", "kernel"])));
    assert!(edges.contains(&json!(["kernel", "expf"])));
    let order: Vec<&str> = g["order"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(order.last(), Some(&"main"));
}

#[tokio::test]
async fn strict_analysis_in_dependency_order() {
    let app = mathrev_cli::router();
    let id = svm_session(&app).await;
    let strict = json!({ "strict": true, "hide_spills": true });
    let (status, err) =
        call(&app, "POST", &format!("/sessions/{id}/functions/classify/analyze"), Some(strict.clone())).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "unanalyzed_callee");
    for f in ["kernel", "thresh"] {
        let (status, _) =
            call(&app, "POST", &format!("/sessions/{id}/functions/{f}/analyze"), Some(strict.clone())).await;
        assert_eq!(status, StatusCode::OK);
    }
    let (status, v) = call(&app, "POST", &format!("/sessions/{id}/functions/classify/analyze"), Some(strict)).await;
    assert_eq!(status, StatusCode::OK);
    let y0 = v["outputs"][0]["pretty"].as_str().unwrap();
    assert_eq!(y0.matches("kernel(").count(), 3);
    assert!(v["outputs"][0]["serialized"].as_str().unwrap().starts_with("(call thresh"));
    assert!(v["metadata"].as_array().unwrap().iter().any(|r| r["role"] == "input" && r["location"] == "s0"));
}

#[tokio::test]
async fn rename_updates_stored_result() {
    let app = mathrev_cli::router();
    let id = svm_session(&app).await;
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/functions/kernel/analyze"), None).await;
    assert_eq!(status, StatusCode::OK);
    let (status, r) =
        call(&app, "POST", &format!("/sessions/{id}/rename"), Some(json!({"symbol": "k0", "name": "sigma"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(r["renames"]["k0"], "sigma");
    let (_, v) = call(&app, "GET", &format!("/sessions/{id}/functions/kernel/result"), None).await;
    assert!(v["outputs"][0]["pretty"].as_str().unwrap().contains("sigma"));
    let (status, err) =
        call(&app, "POST", &format!("/sessions/{id}/rename"), Some(json!({"symbol": "x0", "name": "x1"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "name_collision");
}

#[tokio::test]
async fn errors_are_machine_readable() {
    let app = mathrev_cli::router();
    let (status, err) = call(&app, "GET", "/sessions/nope/callgraph", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "unknown_session");
    let (status, err) = call(&app, "POST", "/sessions", Some(json!({ "source": ".func f\n CALL g\n RET\n" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "bad_image");
    let id = svm_session(&app).await;
    let (status, err) = call(&app, "GET", &format!("/sessions/{id}/functions/kernel/result"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "not_analyzed");
    let (status, err) = call(&app, "POST", &format!("/sessions/{id}/functions/nope/analyze"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "unknown_function");
}
