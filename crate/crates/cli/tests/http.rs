use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use metricquad::mesh::io::MeshFormat;
use metricquad::models::unit_square_grid;
use metricquad::pipeline::{Pipeline, Stage};
use metricquad::prescription::SingularityPrescription;
use metricquad_cli::server::{router, serve_on, AppState, ServiceConfig};
use serde_json::{json, Value};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tower::ServiceExt;

const N: usize = 8;

fn square_obj() -> String {
    unit_square_grid(N).to_obj(None)
}

fn corners() -> Value {
    json!([
        {"vertex": 0, "index": 1},
        {"vertex": N, "index": 1},
        {"vertex": (N + 1) * (N + 1) - 1, "index": 1},
        {"vertex": N * (N + 1), "index": 1},
    ])
}

// corners moved one step counterclockwise along the boundary
fn shifted_corners() -> Value {
    json!([
        {"vertex": 1, "index": 1},
        {"vertex": (N + 1) + N, "index": 1},
        {"vertex": N * (N + 1) + N - 1, "index": 1},
        {"vertex": (N - 1) * (N + 1), "index": 1},
    ])
}

fn app(max_sessions: usize) -> Router {
    router(AppState::new(ServiceConfig { max_sessions }))
}

async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    body: impl Into<Body>,
) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .body(body.into())
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn call_json(
    app: &Router,
    method: &str,
    uri: &str,
    body: impl Into<Body>,
) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| json!(String::from_utf8_lossy(&bytes)))
    };
    (status, v)
}

async fn new_session(app: &Router) -> String {
    let (status, v) = call_json(app, "POST", "/sessions", Body::empty()).await;
    assert_eq!(status, StatusCode::CREATED);
    v["id"].as_str().unwrap().to_string()
}

async fn session_with_square(app: &Router) -> String {
    let id = new_session(app).await;
    let (status, v) = call_json(app, "POST", &format!("/sessions/{id}/mesh"), square_obj()).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    id
}

fn artifact_hashes(report: &Value) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for st in report["stages"].as_array().unwrap() {
        for (k, v) in st["artifacts"].as_object().unwrap() {
            out.push((k.clone(), v.as_str().unwrap().to_string()));
        }
    }
    out.sort();
    out
}

#[tokio::test]
async fn happy_path_returns_manifest() {
    let app = app(4);
    let id = new_session(&app).await;
    let (status, v) = call_json(
        &app,
        "POST",
        &format!("/sessions/{id}/mesh?format=obj"),
        square_obj(),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["eulerCharacteristic"], 1);
    assert_eq!(v["indexBudget"], 4);

    let (status, v) = call_json(
        &app,
        "PUT",
        &format!("/sessions/{id}/singularities"),
        corners().to_string(),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["residual"], 0);

    let (status, v) = call_json(
        &app,
        "POST",
        &format!("/sessions/{id}/run?through=quad"),
        Body::empty(),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let stages: Vec<&str> = v["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["stage"].as_str().unwrap())
        .collect();
    assert_eq!(stages, Stage::ALL.map(|s| s.name()));
    for s in v["stages"].as_array().unwrap() {
        assert!(s["millis"].as_f64().unwrap() >= 0.0);
    }
    assert_eq!(v["model"]["singularities"], 4);

    let (status, obj) = call(
        &app,
        "GET",
        &format!("/sessions/{id}/artifacts/quads.obj"),
        Body::empty(),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let text = String::from_utf8(obj).unwrap();
    assert!(text
        .lines()
        .any(|l| l.starts_with("f ") && l.split_whitespace().count() == 5));

    let (status, q) = call_json(
        &app,
        "GET",
        &format!("/sessions/{id}/artifacts/quality.json"),
        Body::empty(),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(q["indexSum"], 4);

    let (status, seps) = call_json(
        &app,
        "GET",
        &format!("/sessions/{id}/artifacts/separatrices.json"),
        Body::empty(),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert!(seps["separatrices"].is_array());

    let (status, r) = call_json(
        &app,
        "GET",
        &format!("/sessions/{id}/report"),
        Body::empty(),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(artifact_hashes(&r), artifact_hashes(&v));
}

#[tokio::test]
async fn gauss_bonnet_violation_is_422_with_residual() {
    let app = app(4);
    let id = session_with_square(&app).await;
    let presc = json!([{"vertex": 0, "index": 1}, {"vertex": N, "index": 1}]);
    let (status, v) = call_json(
        &app,
        "PUT",
        &format!("/sessions/{id}/singularities"),
        presc.to_string(),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "GaussBonnetViolation");
    assert_eq!(v["residual"], -2);
    // the rejected prescription is not stored
    let (_, v) = call_json(
        &app,
        "GET",
        &format!("/sessions/{id}/singularities"),
        Body::empty(),
    )
    .await;
    assert_eq!(v["singularities"], json!([]));
    // running with the empty prescription fails at the first stage
    let (status, v) = call_json(&app, "POST", &format!("/sessions/{id}/run"), Body::empty()).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["stage"], "validate");
    assert_eq!(v["residual"], -4);
    assert_eq!(v["report"]["failure"]["stage"], "validate");
}

#[tokio::test]
async fn request_errors_are_structured() {
    let app = app(4);
    let (status, v) = call_json(&app, "GET", "/sessions/nope/report", Body::empty()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "UnknownSession");

    let id = new_session(&app).await;
    let (status, v) = call_json(&app, "POST", &format!("/sessions/{id}/run"), Body::empty()).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"], "NoMesh");

    let (status, v) = call_json(
        &app,
        "POST",
        &format!("/sessions/{id}/mesh?format=off"),
        "OFF\n3 1 0\n0 0 0\n",
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "Parse");

    let id = session_with_square(&app).await;
    let (status, v) = call_json(
        &app,
        "POST",
        &format!("/sessions/{id}/run?through=everything"),
        Body::empty(),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "Config");

    let bad = json!([{"vertex": 100000, "index": 1}]);
    let (status, v) = call_json(
        &app,
        "PUT",
        &format!("/sessions/{id}/singularities"),
        bad.to_string(),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "UnknownVertex");

    let (status, _) = call_json(
        &app,
        "GET",
        &format!("/sessions/{id}/artifacts/quads.obj"),
        Body::empty(),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, v) = call_json(
        &app,
        "PUT",
        &format!("/sessions/{id}/params"),
        r#"{"h": {"relative": -1}}"#,
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "Config");
}

#[tokio::test]
async fn session_limit() {
    let app = app(2);
    let a = new_session(&app).await;
    new_session(&app).await;
    let (status, v) = call_json(&app, "POST", "/sessions", Body::empty()).await;
    assert_eq!(status, StatusCode::TOO_MANY_REQUESTS);
    assert_eq!(v["error"], "SessionLimitExceeded");
    let (status, _) = call(&app, "DELETE", &format!("/sessions/{a}"), Body::empty()).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    new_session(&app).await;
}

#[tokio::test]
async fn changing_h_keeps_earlier_stages_cached() {
    let app = app(4);
    let id = session_with_square(&app).await;
    call_json(
        &app,
        "PUT",
        &format!("/sessions/{id}/singularities"),
        corners().to_string(),
    )
    .await;
    let (status, first) =
        call_json(&app, "POST", &format!("/sessions/{id}/run"), Body::empty()).await;
    assert_eq!(status, StatusCode::OK, "{first}");
    let (status, _) = call_json(
        &app,
        "PUT",
        &format!("/sessions/{id}/params"),
        r#"{"h": {"absolute": 0.25}}"#,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let (status, second) =
        call_json(&app, "POST", &format!("/sessions/{id}/run"), Body::empty()).await;
    assert_eq!(status, StatusCode::OK, "{second}");
    let cached: Vec<bool> = second["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["cached"].as_bool().unwrap())
        .collect();
    assert_eq!(cached, [true, true, true, true, true, true, true, false]);
    let (_, q) = call_json(
        &app,
        "GET",
        &format!("/sessions/{id}/artifacts/quality.json"),
        Body::empty(),
    )
    .await;
    assert_eq!(q["interiorCensus"], json!({"4": 9}));

    // a prescription change invalidates every stage
    call_json(
        &app,
        "PUT",
        &format!("/sessions/{id}/singularities"),
        shifted_corners().to_string(),
    )
    .await;
    let (status, third) = call_json(
        &app,
        "POST",
        &format!("/sessions/{id}/run?through=ricci"),
        Body::empty(),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{third}");
    assert!(third["stages"]
        .as_array()
        .unwrap()
        .iter()
        .all(|s| s["cached"] == false));
}

fn standalone_hashes(presc: &Value) -> Vec<(String, String)> {
    let mut p = Pipeline::from_bytes("upload", square_obj().as_bytes(), MeshFormat::Obj).unwrap();
    p.set_prescription(SingularityPrescription::from_json(&presc.to_string()).unwrap());
    let report = p.run(Stage::Quad).unwrap();
    artifact_hashes(&serde_json::to_value(report).unwrap())
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_sessions_do_not_interfere() {
    let app = app(8);
    let a = session_with_square(&app).await;
    let b = session_with_square(&app).await;
    let run = |id: String, presc: Value| {
        let app = app.clone();
        async move {
            let mut last = Value::Null;
            // alternate prescriptions so both sessions mutate while the other runs
            for p in [shifted_corners(), corners(), presc] {
                let (s, _) = call_json(
                    &app,
                    "PUT",
                    &format!("/sessions/{id}/singularities"),
                    p.to_string(),
                )
                .await;
                assert_eq!(s, StatusCode::OK);
                let (s, v) =
                    call_json(&app, "POST", &format!("/sessions/{id}/run"), Body::empty()).await;
                assert_eq!(s, StatusCode::OK, "{v}");
                last = v;
            }
            last
        }
    };
    let (ra, rb) = tokio::join!(
        tokio::spawn(run(a.clone(), corners())),
        tokio::spawn(run(b.clone(), shifted_corners()))
    );
    let (ra, rb) = (ra.unwrap(), rb.unwrap());
    let (ha, hb) = (artifact_hashes(&ra), artifact_hashes(&rb));
    assert_ne!(ha, hb);
    assert_eq!(ha, standalone_hashes(&corners()));
    assert_eq!(hb, standalone_hashes(&shifted_corners()));
}

#[tokio::test]
async fn serves_over_tcp() {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve_on(listener, ServiceConfig::default()));
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    stream
        .write_all(b"POST /sessions HTTP/1.1\r\nHost: localhost\r\nContent-Length: 0\r\nConnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut buf = String::new();
    stream.read_to_string(&mut buf).await.unwrap();
    assert!(buf.starts_with("HTTP/1.1 201"), "{buf}");
    assert!(buf.contains("\"id\""));

    // a second bind on the same port fails
    let err = metricquad_cli::server::serve(addr, ServiceConfig::default()).await;
    assert!(err.is_err());
}
