use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use base64::Engine as _;
use glyphforge::corpus::GlyphFont;
use glyphforge::mixer::GrayImage;
use glyphforge::unet::{Checkpoint, FontRecord, ModelConfig, Parameters, Phase};
use glyphforge_service::{router, AppState, Limits, LoadedModel};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn hei() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets/fonts/hei.ttf")
}

/// Untrained 16px, K=4 checkpoint whose recorded source font is the hei fixture.
fn write_checkpoint(dir: &Path) -> PathBuf {
    let font = GlyphFont::load(&hei()).unwrap();
    let cfg = ModelConfig::new(16, 2, 4, 4).with_seed(21);
    let ckpt = Checkpoint {
        params: Parameters::init(&cfg).unwrap(),
        phase: Phase::Two,
        step: 3,
        styles: ["song", "kai", "brush", "round"].map(String::from).to_vec(),
        source_font: Some(FontRecord {
            path: hei().to_string_lossy().into_owned(),
            sha256: font.sha256().to_string(),
            margin_fraction: 0.1,
        }),
    };
    let path = dir.join("ckpt_phase2_step3");
    ckpt.save(&path).unwrap();
    path
}

struct Fixture {
    _dir: tempfile::TempDir,
    checkpoint: PathBuf,
    state: Arc<AppState>,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let checkpoint = write_checkpoint(dir.path());
    let model = LoadedModel::load(&checkpoint, None, None).unwrap();
    Fixture {
        _dir: dir,
        checkpoint,
        state: AppState::ready(model, Limits::default()),
    }
}

async fn call(state: &Arc<AppState>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(&b).unwrap())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn call_json(state: &Arc<AppState>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(state, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn error_code(v: &Value) -> &str {
    v["error"]["code"].as_str().unwrap()
}

fn png_of(image: &Value) -> Vec<u8> {
    base64::engine::general_purpose::STANDARD
        .decode(image["png"].as_str().unwrap())
        .unwrap()
}

#[tokio::test]
async fn styles_lists_catalog_and_is_stable() {
    let f = fixture();
    let (status, first) = call(&f.state, "GET", "/styles", None).await;
    assert_eq!(status, StatusCode::OK);
    let doc: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(doc["K"], 4);
    let ids: Vec<u64> = doc["styles"].as_array().unwrap().iter().map(|s| s["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, [0, 1, 2, 3]);
    assert_eq!(doc["styles"][2]["name"], "brush");
    let (_, second) = call(&f.state, "GET", "/styles", None).await;
    assert_eq!(first, second);
}

#[tokio::test]
async fn everything_but_health_is_503_while_loading() {
    let state = AppState::loading(Limits::default());
    let gen = json!({"chars": "永", "weights": [1, 0, 0, 0]});
    let interp = json!({"chars": "永", "from": [1, 0, 0, 0], "to": [0, 1, 0, 0], "steps": 3});
    for (method, uri, body) in [
        ("GET", "/styles", None),
        ("POST", "/generate", Some(gen)),
        ("POST", "/interpolate", Some(interp)),
    ] {
        let (status, v) = call_json(&state, method, uri, body).await;
        assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE, "{uri}");
        assert_eq!(error_code(&v), "NotReady");
    }
    let (status, v) = call_json(&state, "GET", "/healthz", None).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(v["status"], "loading");
}

#[tokio::test]
async fn healthz_reports_stored_hash() {
    let f = fixture();
    let (status, v) = call_json(&f.state, "GET", "/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["K"], 4);
    assert_eq!(v["input_size"], 16);
    assert_eq!(v["checkpoint_hash"], Checkpoint::stored_hash(&f.checkpoint).unwrap());
}

#[tokio::test]
async fn generate_returns_one_png_per_char_deterministically() {
    let f = fixture();
    let body = json!({"chars": "永一", "weights": [0.5, 0.5, 0, 0]});
    let (status, a) = call(&f.state, "POST", "/generate", Some(body.clone())).await;
    assert_eq!(status, StatusCode::OK);
    let (_, b) = call(&f.state, "POST", "/generate", Some(body)).await;
    assert_eq!(a, b);
    let doc: Value = serde_json::from_slice(&a).unwrap();
    let images = doc["images"].as_array().unwrap();
    assert_eq!(images.len(), 2);
    assert_eq!(images[0]["codepoint"], "U+6C38");
    let img = GrayImage::from_png(&png_of(&images[0])).unwrap();
    assert_eq!((img.width, img.height), (16, 16));
    assert!(doc["skipped"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn unrenderable_chars_are_skipped_not_errors() {
    let f = fixture();
    let (status, v) = call_json(
        &f.state,
        "POST",
        "/generate",
        Some(json!({"chars": "永Q\u{3000}", "weights": [1, 0, 0, 0]})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["images"].as_array().unwrap().len(), 1);
    let skipped: Vec<&str> = v["skipped"].as_array().unwrap().iter().map(|s| s["codepoint"].as_str().unwrap()).collect();
    assert_eq!(skipped, ["U+0051", "U+3000"]);
}

#[tokio::test]
async fn validation_failures_are_400_with_codes() {
    let f = fixture();
    let long: String = "永".repeat(65);
    let cases = [
        (json!({"chars": "永", "weights": [1, 0]}), "StyleDimMismatch"),
        (json!({"chars": "永", "weights": [1e39, 0, 0, 0]}), "NonFiniteWeights"),
        (json!({"chars": "", "weights": [1, 0, 0, 0]}), "EmptyChars"),
        (json!({"chars": long, "weights": [1, 0, 0, 0]}), "TooManyChars"),
        (json!({"chars": "永"}), "InvalidJson"),
        (json!({"chars": "永", "weights": [1, 0, 0, null]}), "InvalidJson"),
        (json!({"chars": 5, "weights": [1, 0, 0, 0]}), "InvalidJson"),
        (json!({"chars": "永", "weights": [1, 0, 0, 0], "extra": 1}), "InvalidJson"),
    ];
    for (body, code) in cases {
        let (status, v) = call_json(&f.state, "POST", "/generate", Some(body.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert_eq!(error_code(&v), code, "{body}");
    }
    // Not JSON at all, and no content type.
    let req = Request::builder().method("POST").uri("/generate").body(Body::from("永")).unwrap();
    let resp = router(f.state.clone()).oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);

    let (status, v) = call_json(&f.state, "POST", "/generate?format=gif", Some(json!({"chars": "永", "weights": [1, 0, 0, 0]}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&v), "UnsupportedFormat");
}

#[tokio::test]
async fn interpolate_validation() {
    let f = fixture();
    let base = |steps: Value, from: Value| json!({"chars": "永", "from": from, "to": [0, 1, 0, 0], "steps": steps});
    for (body, code) in [
        (base(json!(1000), json!([1, 0, 0, 0])), "StepsOutOfRange"),
        (base(json!(1), json!([1, 0, 0, 0])), "StepsOutOfRange"),
        (base(json!(3), json!([1, 0])), "StyleDimMismatch"),
        (base(json!(-3), json!([1, 0, 0, 0])), "InvalidJson"),
    ] {
        let (status, v) = call_json(&f.state, "POST", "/interpolate", Some(body.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert_eq!(error_code(&v), code, "{body}");
    }
}

#[tokio::test]
async fn interpolation_endpoints_equal_generate_bytes() {
    let f = fixture();
    let (e0, e1) = (json!([1, 0, 0, 0]), json!([0, 1, 0, 0]));
    for steps in [2usize, 11] {
        let (status, v) = call_json(
            &f.state,
            "POST",
            "/interpolate",
            Some(json!({"chars": "永一", "from": e0, "to": e1, "steps": steps})),
        )
        .await;
        assert_eq!(status, StatusCode::OK);
        let frames = v["frames"].as_array().unwrap();
        assert_eq!(frames.len(), steps);
        for (frame, w) in [(&frames[0], &e0), (&frames[steps - 1], &e1)] {
            let (_, g) = call_json(&f.state, "POST", "/generate", Some(json!({"chars": "永一", "weights": w}))).await;
            assert_eq!(frame["images"], g["images"]);
        }
        if steps == 11 {
            assert_eq!(frames[5]["weights"], json!([0.5, 0.5, 0.0, 0.0]));
        }
    }
}

#[tokio::test]
async fn responses_do_not_depend_on_request_order() {
    let f = fixture();
    let reqs = [
        ("GET", "/styles", None),
        ("POST", "/generate", Some(json!({"chars": "永", "weights": [0.2, 0.5, 0.7, 0]}))),
        ("POST", "/generate", Some(json!({"chars": "一永", "weights": [1, 0, 0, 0]}))),
        ("POST", "/interpolate", Some(json!({"chars": "永", "from": [1, 0, 0, 0], "to": [0, 0, 0, 1], "steps": 4}))),
        ("GET", "/healthz", None),
    ];
    let mut forward = Vec::new();
    for (m, u, b) in reqs.iter().cloned() {
        forward.push(call(&f.state, m, u, b).await);
    }
    let mut backward = Vec::new();
    for (m, u, b) in reqs.iter().rev().cloned() {
        backward.push(call(&f.state, m, u, b).await);
    }
    backward.reverse();
    assert_eq!(forward, backward);
}

#[tokio::test]
async fn raw_format_is_multipart_with_png_parts() {
    let f = fixture();
    let body = json!({"chars": "永一", "weights": [1, 0, 0, 0]});
    let req = Request::builder()
        .method("POST")
        .uri("/generate?format=raw")
        .body(Body::from(serde_json::to_vec(&body).unwrap()))
        .unwrap();
    let resp = router(f.state.clone()).oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let ctype = resp.headers()["content-type"].to_str().unwrap().to_string();
    assert!(ctype.starts_with("multipart/mixed; boundary="));
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let (_, json_resp) = call_json(&f.state, "POST", "/generate", Some(body)).await;
    let expected = png_of(&json_resp["images"][1]);
    assert!(bytes.windows(expected.len()).any(|w| w == expected.as_slice()));
    assert_eq!(bytes.windows(9).filter(|w| w == b"image/png").count(), 2);
}

#[tokio::test]
async fn catalog_must_match_checkpoint_k() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let catalog = dir.path().join("styles.tsv");
    std::fs::write(&catalog, "0\tsong\ta.ttf\n1\tkai\tb.ttf\n").unwrap();
    let err = LoadedModel::load(&f.checkpoint, Some(&catalog), None).unwrap_err();
    assert!(matches!(err, glyphforge::Error::StyleDimMismatch { expected: 4, got: 2 }));
}

#[tokio::test]
async fn unknown_path_is_404_json() {
    let f = fixture();
    let (status, v) = call_json(&f.state, "GET", "/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&v), "NotFound");
}
