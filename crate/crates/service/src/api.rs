//! HTTP routes and JSON schemas.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::header::{CONTENT_TYPE, COOKIE, SET_COOKIE};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use memeify_core::corpus::normalize_class_name;
use memeify_core::imageindex::{decode_image, extract_features};
use memeify_core::renderer::{render_caption, render_meme, RenderError, RenderSpec};
use memeify_core::{GeneratedCaption, Theme};
use serde::{Deserialize, Serialize};

use crate::cache::CacheStats;
use crate::session::{cookie_value, set_cookie_header};
use crate::state::{AppState, Artifacts, GenerationCounters, ServeError};

/// Error body: `{"code": ..., "message": ...}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: status.as_u16(),
            code: code.to_string(),
            message: message.into(),
        }
    }

    fn not_loaded() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "not_loaded", "model artifacts are not loaded")
    }

    fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

impl From<ServeError> for ApiError {
    fn from(e: ServeError) -> Self {
        match e {
            ServeError::Exhausted(class) => ApiError::new(
                StatusCode::CONFLICT,
                "exhausted",
                format!("no unseen caption left for class {class:?} in this session"),
            ),
            ServeError::Caption(e) => ApiError::internal(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemeEntry {
    pub theme: Theme,
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    #[serde(default)]
    pub theme: Option<String>,
    #[serde(default)]
    pub class: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionBody {
    pub top: String,
    pub bottom: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub class: String,
    pub theme: Theme,
    pub caption: CaptionBody,
    /// Identifies the caption text; stable across sessions.
    pub digest: String,
    /// URL of the rendered meme, or null when the class has no image.
    pub image: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomResponse {
    pub matched_class: String,
    pub theme: Theme,
    pub similarity: f64,
    pub caption: CaptionBody,
    pub digest: String,
    /// The rendered meme as a `data:image/png;base64,` URI.
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderQuery {
    pub class: String,
    pub top: String,
    #[serde(default)]
    pub bottom: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Health {
    pub status: &'static str,
    pub loaded: bool,
    pub index_loaded: bool,
    pub sessions: usize,
    pub cache: CacheStats,
    pub generations: GenerationCounters,
}

pub fn router(state: Arc<AppState>) -> Router {
    let upload_limit = state.config.upload_limit_bytes;
    Router::new()
        .route("/api/health", get(health))
        .route("/api/themes", get(themes))
        .route("/api/generate", post(generate))
        .route(
            "/api/custom",
            // the handler enforces the limit itself so oversize is a 400
            post(custom).layer(DefaultBodyLimit::max(upload_limit.saturating_mul(2).saturating_add(1 << 16))),
        )
        .route("/api/images/{class}", get(class_image))
        .route("/api/render", get(render))
        .with_state(state)
}

fn loaded(state: &AppState) -> Result<Arc<Artifacts>, ApiError> {
    state.artifacts().ok_or_else(ApiError::not_loaded)
}

/// Session id for the request, plus the cookie to set when it is new.
fn session(state: &AppState, headers: &HeaderMap) -> (String, Option<HeaderValue>) {
    let cookie = headers
        .get_all(COOKIE)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .find_map(cookie_value);
    let (id, fresh) = state.sessions.resolve(cookie);
    let header = fresh.then(|| HeaderValue::from_str(&set_cookie_header(&id)).expect("hex id is a valid header"));
    (id, header)
}

fn with_cookie(mut response: Response, cookie: Option<HeaderValue>) -> Response {
    if let Some(c) = cookie {
        response.headers_mut().insert(SET_COOKIE, c);
    }
    response
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    let arts = state.artifacts();
    Json(Health {
        status: "ok",
        loaded: arts.is_some(),
        index_loaded: arts.as_ref().is_some_and(|a| a.index.is_some()),
        sessions: state.sessions.len(),
        cache: state.cache_stats(),
        generations: state.counters(),
    })
}

async fn themes(State(state): State<Arc<AppState>>) -> Result<Json<Vec<ThemeEntry>>, ApiError> {
    let arts = loaded(&state)?;
    Ok(Json(
        arts.theme_listing()
            .into_iter()
            .map(|(theme, classes)| ThemeEntry { theme, classes })
            .collect(),
    ))
}

/// Resolves the requested theme and class, drawing missing parts uniformly.
fn resolve_selection(state: &AppState, arts: &Artifacts, req: &GenerateRequest) -> Result<(String, Theme), ApiError> {
    let listing = arts.theme_listing();
    let wanted_theme = match req.theme.as_deref().filter(|t| !t.trim().is_empty()) {
        Some(t) => Some(t.parse::<Theme>().map_err(|_| {
            ApiError::new(StatusCode::NOT_FOUND, "unknown_theme", format!("unknown theme {t:?}"))
        })?),
        None => None,
    };
    if let Some(raw) = req.class.as_deref().filter(|c| !c.trim().is_empty()) {
        let class = normalize_class_name(raw);
        let theme = arts.themes.theme_of(&class).ok_or_else(|| {
            ApiError::new(StatusCode::NOT_FOUND, "unknown_class", format!("unknown class {raw:?}"))
        })?;
        if wanted_theme.is_some_and(|t| t != theme) {
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                "class_not_in_theme",
                format!("class {class:?} belongs to {theme}"),
            ));
        }
        return Ok((class, theme));
    }
    let (theme, classes) = match wanted_theme {
        Some(t) => listing.into_iter().find(|(lt, _)| *lt == t).ok_or_else(|| {
            ApiError::new(StatusCode::NOT_FOUND, "empty_theme", format!("theme {t} has no classes"))
        })?,
        None => {
            if listing.is_empty() {
                return Err(ApiError::new(StatusCode::NOT_FOUND, "no_classes", "the theme model has no classes"));
            }
            let i = state.pick(listing.len());
            listing.into_iter().nth(i).expect("index in range")
        }
    };
    let class = classes[state.pick(classes.len())].clone();
    Ok((class, theme))
}

async fn serve_caption(
    state: &Arc<AppState>,
    arts: &Arc<Artifacts>,
    session: &str,
    class: &str,
) -> Result<GeneratedCaption, ApiError> {
    let (st, a, s, c) = (Arc::clone(state), Arc::clone(arts), session.to_string(), class.to_string());
    let caption = tokio::task::spawn_blocking(move || st.serve_caption(&a, &s, &c))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    state.schedule_refill(Arc::clone(arts), class.to_string());
    Ok(caption)
}

fn render_url(caption: &GeneratedCaption) -> String {
    let query = RenderQuery {
        class: caption.class_name.clone(),
        top: caption.top.clone(),
        bottom: caption.bottom.clone(),
    };
    format!("/api/render?{}", serde_urlencoded::to_string(&query).expect("plain strings encode"))
}

async fn generate(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> Response {
    let (session, cookie) = session(&state, &headers);
    let result = async {
        let arts = loaded(&state)?;
        let req: GenerateRequest = if body.iter().all(u8::is_ascii_whitespace) {
            GenerateRequest::default()
        } else {
            serde_json::from_slice(&body).map_err(|e| ApiError::bad_request("bad_request", e.to_string()))?
        };
        let (class, theme) = resolve_selection(&state, &arts, &req)?;
        let caption = serve_caption(&state, &arts, &session, &class).await?;
        Ok::<_, ApiError>(GenerateResponse {
            image: arts.images.contains_key(&class).then(|| render_url(&caption)),
            digest: caption.digest(),
            caption: CaptionBody {
                top: caption.top,
                bottom: caption.bottom,
            },
            class,
            theme,
        })
    }
    .await;
    with_cookie(
        match result {
            Ok(body) => Json(body).into_response(),
            Err(e) => e.into_response(),
        },
        cookie,
    )
}

/// Reads the `image` field, failing with 400 past `limit` bytes.
async fn read_upload(mut multipart: Multipart, limit: usize) -> Result<Vec<u8>, ApiError> {
    let oversize = || ApiError::bad_request("too_large", format!("upload exceeds {limit} bytes"));
    let malformed = |e: axum::extract::multipart::MultipartError| {
        let msg = e.to_string();
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            oversize()
        } else {
            ApiError::bad_request("bad_multipart", msg)
        }
    };
    while let Some(mut field) = multipart.next_field().await.map_err(malformed)? {
        if field.name() != Some("image") {
            continue;
        }
        let mut data = Vec::new();
        while let Some(chunk) = field.chunk().await.map_err(malformed)? {
            if data.len() + chunk.len() > limit {
                return Err(oversize());
            }
            data.extend_from_slice(&chunk);
        }
        return Ok(data);
    }
    Err(ApiError::bad_request("missing_image", "multipart field \"image\" is required"))
}

fn render_error(e: RenderError) -> ApiError {
    match e {
        RenderError::TooSmall { .. } => ApiError::bad_request("image_too_small", e.to_string()),
        other => ApiError::internal(other.to_string()),
    }
}

async fn custom(State(state): State<Arc<AppState>>, headers: HeaderMap, multipart: Multipart) -> Response {
    let (session, cookie) = session(&state, &headers);
    let result = async {
        let arts = loaded(&state)?;
        if arts.index.is_none() {
            return Err(ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "index_unavailable",
                "no image index is loaded",
            ));
        }
        let bytes = read_upload(multipart, state.config.upload_limit_bytes).await?;
        let a = Arc::clone(&arts);
        let (image, hit) = tokio::task::spawn_blocking(move || {
            let image = decode_image(&bytes).map_err(|e| ApiError::bad_request("undecodable_image", e.to_string()))?;
            let features = extract_features(&image).map_err(|e| ApiError::bad_request("undecodable_image", e.to_string()))?;
            let hit = a
                .index
                .as_ref()
                .expect("checked above")
                .lookup(&features, true)
                .map_err(|e| ApiError::internal(e.to_string()))?;
            Ok::<_, ApiError>((image, hit))
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
        let theme = arts
            .themes
            .theme_of(&hit.class_name)
            .ok_or_else(|| ApiError::internal("index class missing from theme model"))?;
        let caption = serve_caption(&state, &arts, &session, &hit.class_name).await?;
        let c = caption.clone();
        let png = tokio::task::spawn_blocking(move || render_caption(&image, &c, &RenderSpec::default()))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?
            .map_err(render_error)?;
        Ok(CustomResponse {
            matched_class: hit.class_name,
            theme,
            similarity: hit.similarity,
            digest: caption.digest(),
            caption: CaptionBody {
                top: caption.top,
                bottom: caption.bottom,
            },
            image: format!(
                "data:image/png;base64,{}",
                base64::engine::general_purpose::STANDARD.encode(png)
            ),
        })
    }
    .await;
    with_cookie(
        match result {
            Ok(body) => Json(body).into_response(),
            Err(e) => e.into_response(),
        },
        cookie,
    )
}

fn content_type(path: &std::path::Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("bmp") => "image/bmp",
        Some("webp") => "image/webp",
        _ => "application/octet-stream",
    }
}

fn image_path(arts: &Artifacts, class: &str) -> Result<std::path::PathBuf, ApiError> {
    arts.images
        .get(&normalize_class_name(class))
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no_image", format!("no image for class {class:?}")))
}

async fn class_image(State(state): State<Arc<AppState>>, Path(class): Path<String>) -> Result<Response, ApiError> {
    let arts = loaded(&state)?;
    let path = image_path(&arts, &class)?;
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(([(CONTENT_TYPE, content_type(&path))], bytes).into_response())
}

async fn render(State(state): State<Arc<AppState>>, Query(q): Query<RenderQuery>) -> Result<Response, ApiError> {
    let arts = loaded(&state)?;
    let path = image_path(&arts, &q.class)?;
    let png = tokio::task::spawn_blocking(move || {
        let bytes = std::fs::read(&path).map_err(|e| ApiError::internal(e.to_string()))?;
        let image = decode_image(&bytes).map_err(|e| ApiError::internal(e.to_string()))?;
        render_meme(&image, &q.top, &q.bottom, &RenderSpec::default()).map_err(|e| match e {
            RenderError::EmptyTop => ApiError::bad_request("empty_top", e.to_string()),
            other => render_error(other),
        })
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(([(CONTENT_TYPE, "image/png")], png).into_response())
}
