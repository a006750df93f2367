#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{HeaderMap, Request, StatusCode};
use axum::Router;
use image::DynamicImage;
use memeify_core::embeddings::embed_corpus;
use memeify_core::imageindex::{LshIndex, PixelHistogramExtractor};
use memeify_core::synthetic::{class_image, plant, sample_classes};
use memeify_core::themes::{fit_theme_model, parse_theme_names, FitParams};
use memeify_core::{MemeRecord, NgramConfig, NgramModel, ThemeModel};
use memeify_service::{router, AppState, Artifacts, ServiceConfig};
use tower::ServiceExt;

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub state: Arc<AppState>,
    pub app: Router,
    /// PNG bytes of each stored class image.
    pub images: BTreeMap<String, Vec<u8>>,
}

fn png_bytes(img: &DynamicImage) -> Vec<u8> {
    let mut out = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut out), image::ImageFormat::Png)
        .unwrap();
    out
}

/// The six-class planted sample: themes, caption model, images and index.
pub fn sample_fixture(tweak: impl FnOnce(&mut ServiceConfig)) -> Fixture {
    let corpus = plant(&sample_classes(60), 32, 7);
    let (points, _) = embed_corpus(&corpus.records, &corpus.table);
    let names = parse_theme_names(&corpus.names_config).unwrap();
    let themes = fit_theme_model(&points, &FitParams::new(5, 7), &names, Some(&corpus.table)).unwrap();
    assert_eq!(themes.class_to_theme, corpus.expected);
    let model = NgramModel::train(&corpus.records, NgramConfig::default()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut paths = BTreeMap::new();
    let mut images = BTreeMap::new();
    let mut decoded = BTreeMap::new();
    for class in themes.class_to_theme.keys() {
        let img = DynamicImage::ImageRgb8(class_image(class, 160, 120));
        let bytes = png_bytes(&img);
        let path = dir.path().join(format!("{class}.png"));
        std::fs::write(&path, &bytes).unwrap();
        paths.insert(class.clone(), path);
        images.insert(class.clone(), bytes);
        decoded.insert(class.clone(), img);
    }
    let index = LshIndex::build(&decoded, &PixelHistogramExtractor, 16, 8, 7).unwrap();
    build(themes, Box::new(model), Some(index), paths, images, dir, tweak)
}

/// Classes with one fixed caption each, so a session exhausts them fast.
pub fn single_caption_fixture(tweak: impl FnOnce(&mut ServiceConfig)) -> Fixture {
    let records = vec![
        MemeRecord::new("1", "imminent_ned", "brace yourselves", "email overload is coming").unwrap(),
        MemeRecord::new("2", "sad_keanu", "nobody came", "to my party").unwrap(),
    ];
    let model = NgramModel::train(&records, NgramConfig::default()).unwrap();
    let themes = ThemeModel::from_class_map(
        [
            ("imminent_ned".to_string(), memeify_core::Theme::Normie),
            ("sad_keanu".to_string(), memeify_core::Theme::Depressing),
        ]
        .into(),
    );
    let dir = tempfile::tempdir().unwrap();
    build(themes, Box::new(model), None, BTreeMap::new(), BTreeMap::new(), dir, tweak)
}

pub fn build(
    themes: ThemeModel,
    model: Box<dyn memeify_core::CaptionModel>,
    index: Option<LshIndex>,
    paths: BTreeMap<String, PathBuf>,
    images: BTreeMap<String, Vec<u8>>,
    dir: tempfile::TempDir,
    tweak: impl FnOnce(&mut ServiceConfig),
) -> Fixture {
    let mut config = ServiceConfig::new(99);
    tweak(&mut config);
    let state = Arc::new(AppState::new(config));
    state.install(Artifacts::new(themes, model, index, paths).unwrap());
    Fixture {
        dir,
        app: router(Arc::clone(&state)),
        state,
        images,
    }
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| {
            panic!("{e}: {}", String::from_utf8_lossy(&self.body));
        })
    }

    pub fn set_cookie(&self) -> Option<String> {
        self.headers
            .get("set-cookie")
            .map(|v| v.to_str().unwrap().split(';').next().unwrap().to_string())
    }
}

pub async fn send(app: &Router, req: Request<Body>) -> Reply {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let headers = res.headers().clone();
    let body = to_bytes(res.into_body(), usize::MAX).await.unwrap().to_vec();
    Reply { status, headers, body }
}

pub fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

pub fn post_json(uri: &str, cookie: Option<&str>, body: serde_json::Value) -> Request<Body> {
    let mut b = Request::post(uri).header("content-type", "application/json");
    if let Some(c) = cookie {
        b = b.header("cookie", c);
    }
    b.body(Body::from(body.to_string())).unwrap()
}

/// POST /api/generate and return the reply plus the session cookie to reuse.
pub async fn generate(app: &Router, cookie: &mut Option<String>, body: serde_json::Value) -> Reply {
    let reply = send(app, post_json("/api/generate", cookie.as_deref(), body)).await;
    if let Some(c) = reply.set_cookie() {
        *cookie = Some(c);
    }
    reply
}

pub fn multipart(field: &str, bytes: &[u8], cookie: Option<&str>) -> Request<Body> {
    let boundary = "memeifyboundary7d1";
    let mut body = Vec::new();
    body.extend_from_slice(
        format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"{field}\"; filename=\"upload.png\"\r\nContent-Type: application/octet-stream\r\n\r\n"
        )
        .as_bytes(),
    );
    body.extend_from_slice(bytes);
    body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    let mut b = Request::post("/api/custom").header(
        "content-type",
        format!("multipart/form-data; boundary={boundary}"),
    );
    if let Some(c) = cookie {
        b = b.header("cookie", c);
    }
    b.body(Body::from(body)).unwrap()
}
