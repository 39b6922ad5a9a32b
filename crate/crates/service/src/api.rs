use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use glyphforge::corpus::GlyphBitmap;
use glyphforge::mixer::{glyph_png, interpolation_path, Skipped, StyleWeights};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::model::LoadedModel;
use crate::AppState;

/// Error document: `{"error": {"code": ..., "message": ...}}`.
#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("model is still loading")]
    NotReady,
    #[error("{0}")]
    InvalidJson(String),
    #[error("chars must not be empty")]
    EmptyChars,
    #[error("{got} characters exceeds the limit of {limit}")]
    TooManyChars { got: usize, limit: usize },
    #[error("weights has length {got}, expected K={expected}")]
    StyleDimMismatch { expected: usize, got: usize },
    #[error("weights must be finite")]
    NonFiniteWeights,
    #[error("steps must lie in [2, {limit}], got {got}")]
    StepsOutOfRange { got: usize, limit: usize },
    #[error("unsupported format '{0}'")]
    UnsupportedFormat(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::NotReady => "NotReady",
            ApiError::InvalidJson(_) => "InvalidJson",
            ApiError::EmptyChars => "EmptyChars",
            ApiError::TooManyChars { .. } => "TooManyChars",
            ApiError::StyleDimMismatch { .. } => "StyleDimMismatch",
            ApiError::NonFiniteWeights => "NonFiniteWeights",
            ApiError::StepsOutOfRange { .. } => "StepsOutOfRange",
            ApiError::UnsupportedFormat(_) => "UnsupportedFormat",
            ApiError::Internal(_) => "Internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotReady => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code(), "message": self.to_string()}});
        (self.status(), Json(body)).into_response()
    }
}

impl From<glyphforge::Error> for ApiError {
    fn from(e: glyphforge::Error) -> Self {
        match e {
            glyphforge::Error::StyleDimMismatch { expected, got } => ApiError::StyleDimMismatch { expected, got },
            glyphforge::Error::StyleWeightsNonFinite => ApiError::NonFiniteWeights,
            other => ApiError::Internal(other.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn ready(state: &AppState) -> ApiResult<Arc<LoadedModel>> {
    state.model.get().cloned().ok_or(ApiError::NotReady)
}

/// Parses the body ourselves so every malformed request is a 400 with a
/// code, whatever its content type.
fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::InvalidJson(e.to_string()))
}

#[derive(Serialize)]
struct StyleDoc {
    id: usize,
    name: String,
}

pub async fn styles(State(state): State<Arc<AppState>>) -> ApiResult<Response> {
    let model = ready(&state)?;
    let styles: Vec<StyleDoc> = model
        .catalog
        .entries()
        .iter()
        .map(|e| StyleDoc {
            id: e.id,
            name: e.name.clone(),
        })
        .collect();
    Ok(Json(json!({"K": styles.len(), "styles": styles})).into_response())
}

pub async fn healthz(State(state): State<Arc<AppState>>) -> Response {
    match state.model.get() {
        Some(model) => Json(json!({
            "status": "ok",
            "checkpoint_hash": model.hash,
            "K": model.style_count(),
            "input_size": model.input_size(),
        }))
        .into_response(),
        None => (StatusCode::SERVICE_UNAVAILABLE, Json(json!({"status": "loading"}))).into_response(),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateRequest {
    chars: String,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InterpolateRequest {
    chars: String,
    from: Vec<f64>,
    to: Vec<f64>,
    steps: usize,
}

#[derive(Deserialize, Default)]
pub struct FormatQuery {
    format: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Raw,
}

impl FormatQuery {
    fn format(&self) -> ApiResult<Format> {
        match self.format.as_deref() {
            None | Some("json") => Ok(Format::Json),
            Some("raw") => Ok(Format::Raw),
            Some(other) => Err(ApiError::UnsupportedFormat(other.to_string())),
        }
    }
}

#[derive(Serialize)]
struct ImageDoc {
    char: String,
    codepoint: String,
    png: String,
}

#[derive(Serialize)]
struct SkipDoc {
    char: String,
    codepoint: String,
    reason: String,
}

fn codepoint(c: char) -> String {
    format!("U+{:04X}", c as u32)
}

fn skip_docs(skipped: &[Skipped]) -> Vec<SkipDoc> {
    skipped
        .iter()
        .map(|s| SkipDoc {
            char: s.codepoint.to_string(),
            codepoint: codepoint(s.codepoint),
            reason: s.reason.clone(),
        })
        .collect()
}

fn check_chars(chars: &str, limit: usize) -> ApiResult<Vec<char>> {
    let chars: Vec<char> = chars.chars().collect();
    if chars.is_empty() {
        return Err(ApiError::EmptyChars);
    }
    if chars.len() > limit {
        return Err(ApiError::TooManyChars {
            got: chars.len(),
            limit,
        });
    }
    Ok(chars)
}

fn check_weights(values: &[f64], k: usize) -> ApiResult<StyleWeights> {
    if values.len() != k {
        return Err(ApiError::StyleDimMismatch {
            expected: k,
            got: values.len(),
        });
    }
    // Values beyond f32 range would become infinite.
    let narrowed: Vec<f32> = values.iter().map(|&v| v as f32).collect();
    Ok(StyleWeights::new(narrowed)?)
}

/// One rendered character set for one style vector.
struct Frame {
    weights: StyleWeights,
    images: Vec<(char, Vec<u8>)>,
}

fn encode_frame(glyphs: Vec<Option<GlyphBitmap>>, chars: &[char], weights: StyleWeights) -> ApiResult<Frame> {
    let mut images = Vec::new();
    for (g, &c) in glyphs.into_iter().zip(chars) {
        if let Some(g) = g {
            images.push((c, glyph_png(&g)?));
        }
    }
    Ok(Frame { weights, images })
}

fn image_docs(frame: &Frame) -> Vec<ImageDoc> {
    frame
        .images
        .iter()
        .map(|(c, png)| ImageDoc {
            char: c.to_string(),
            codepoint: codepoint(*c),
            png: BASE64.encode(png),
        })
        .collect()
}

const BOUNDARY: &str = "glyphforge-frame-boundary";

/// `multipart/mixed`: a JSON manifest part, then one `image/png` part per
/// image in frame order.
fn multipart(manifest: serde_json::Value, frames: &[Frame]) -> Response {
    let mut body = Vec::new();
    let mut part = |headers: String, data: &[u8]| {
        body.extend_from_slice(format!("--{BOUNDARY}\r\n{headers}\r\n").as_bytes());
        body.extend_from_slice(data);
        body.extend_from_slice(b"\r\n");
    };
    let manifest = serde_json::to_vec(&manifest).expect("manifest serializes");
    part("Content-Type: application/json\r\n".into(), &manifest);
    for (f, frame) in frames.iter().enumerate() {
        for (c, png) in &frame.images {
            part(
                format!(
                    "Content-Type: image/png\r\nContent-Disposition: attachment; filename=\"frame{f:02}_{:04X}.png\"\r\nX-Frame: {f}\r\nX-Codepoint: {}\r\n",
                    *c as u32,
                    codepoint(*c)
                ),
                png,
            );
        }
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    (
        [(header::CONTENT_TYPE, format!("multipart/mixed; boundary={BOUNDARY}"))],
        Body::from(body),
    )
        .into_response()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

pub async fn generate(
    State(state): State<Arc<AppState>>,
    Query(query): Query<FormatQuery>,
    body: Bytes,
) -> ApiResult<Response> {
    let model = ready(&state)?;
    let format = query.format()?;
    let req: GenerateRequest = parse_body(&body)?;
    let chars = check_chars(&req.chars, state.limits.max_chars)?;
    let weights = check_weights(&req.weights, model.style_count())?;
    let (frame, skipped) = blocking(move || {
        let (glyphs, skipped) = model.render(&chars, &weights)?;
        Ok((encode_frame(glyphs, &chars, weights)?, skipped))
    })
    .await?;
    let skipped = skip_docs(&skipped);
    Ok(match format {
        Format::Json => Json(json!({
            "weights": frame.weights,
            "images": image_docs(&frame),
            "skipped": skipped,
        }))
        .into_response(),
        Format::Raw => {
            let order: Vec<String> = frame.images.iter().map(|(c, _)| codepoint(*c)).collect();
            let manifest = json!({"weights": frame.weights, "images": order, "skipped": skipped});
            multipart(manifest, std::slice::from_ref(&frame))
        }
    })
}

pub async fn interpolate(
    State(state): State<Arc<AppState>>,
    Query(query): Query<FormatQuery>,
    body: Bytes,
) -> ApiResult<Response> {
    let model = ready(&state)?;
    let format = query.format()?;
    let req: InterpolateRequest = parse_body(&body)?;
    let chars = check_chars(&req.chars, state.limits.max_chars)?;
    let k = model.style_count();
    let from = check_weights(&req.from, k)?;
    let to = check_weights(&req.to, k)?;
    if req.steps < 2 || req.steps > state.limits.max_steps {
        return Err(ApiError::StepsOutOfRange {
            got: req.steps,
            limit: state.limits.max_steps,
        });
    }
    let path = interpolation_path(&from, &to, req.steps)?;
    let (frames, skipped) = blocking(move || {
        let mut frames = Vec::with_capacity(path.len());
        let mut skipped = Vec::new();
        for w in path {
            let (glyphs, s) = model.render(&chars, &w)?;
            skipped = s;
            frames.push(encode_frame(glyphs, &chars, w)?);
        }
        Ok((frames, skipped))
    })
    .await?;
    let skipped = skip_docs(&skipped);
    Ok(match format {
        Format::Json => {
            let docs: Vec<_> = frames
                .iter()
                .map(|f| json!({"weights": f.weights, "images": image_docs(f)}))
                .collect();
            Json(json!({"steps": frames.len(), "frames": docs, "skipped": skipped})).into_response()
        }
        Format::Raw => {
            let docs: Vec<_> = frames
                .iter()
                .map(|f| {
                    let order: Vec<String> = f.images.iter().map(|(c, _)| codepoint(*c)).collect();
                    json!({"weights": f.weights, "images": order})
                })
                .collect();
            multipart(
                json!({"steps": frames.len(), "frames": docs, "skipped": skipped}),
                &frames,
            )
        }
    })
}

pub async fn not_found() -> Response {
    let body = json!({"error": {"code": "NotFound", "message": "no such endpoint"}});
    (StatusCode::NOT_FOUND, Json(body)).into_response()
}
