//! Loaded artifacts, caption serving and background refill.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use memeify_core::captiongen::{generate, CaptionError, CaptionModel, NgramModel, SamplingParams, TokenId, Vocabulary};
use memeify_core::corpus::normalize_class_name;
use memeify_core::imageindex::{IndexError, LshIndex};
use memeify_core::{GeneratedCaption, Theme, ThemeModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::cache::{CacheStats, CaptionCache, MemeCache};
use crate::config::ServiceConfig;
use crate::session::SessionStore;

const IMAGE_EXTENSIONS: [&str; 6] = ["png", "jpg", "jpeg", "gif", "bmp", "webp"];

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("config has no {0} path")]
    MissingPath(&'static str),
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("caption model has no class {0:?} from the theme model")]
    ClassWithoutModel(String),
    #[error("index class {0:?} is not in the theme model")]
    IndexClassUnknown(String),
    #[error(transparent)]
    Caption(#[from] CaptionError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Caption model wrapper that counts every call into the model.
pub struct InstrumentedModel {
    inner: Box<dyn CaptionModel>,
    calls: AtomicU64,
}

impl InstrumentedModel {
    pub fn new(inner: Box<dyn CaptionModel>) -> Self {
        InstrumentedModel {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    /// Next-token distribution queries so far.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl CaptionModel for InstrumentedModel {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn vocabulary(&self) -> &Vocabulary {
        self.inner.vocabulary()
    }

    fn has_class(&self, class: &str) -> bool {
        self.inner.has_class(class)
    }

    fn classes(&self) -> Vec<String> {
        self.inner.classes()
    }

    fn next_token_distribution(&self, class: &str, history: &[TokenId]) -> Result<Vec<(TokenId, f64)>, CaptionError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.next_token_distribution(class, history)
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.inner.to_bytes()
    }
}

/// Immutable model artifacts shared by all requests.
pub struct Artifacts {
    pub themes: ThemeModel,
    pub model: InstrumentedModel,
    pub index: Option<LshIndex>,
    /// Default image per class.
    pub images: BTreeMap<String, PathBuf>,
}

impl Artifacts {
    pub fn new(
        themes: ThemeModel,
        model: Box<dyn CaptionModel>,
        index: Option<LshIndex>,
        images: BTreeMap<String, PathBuf>,
    ) -> Result<Self, LoadError> {
        if let Some(class) = themes.class_to_theme.keys().find(|c| !model.has_class(c)) {
            return Err(LoadError::ClassWithoutModel(class.clone()));
        }
        if let Some(index) = &index {
            if let Some(e) = index
                .entries()
                .iter()
                .find(|e| !themes.class_to_theme.contains_key(&e.class_name))
            {
                return Err(LoadError::IndexClassUnknown(e.class_name.clone()));
            }
        }
        let images = images
            .into_iter()
            .filter(|(c, _)| themes.class_to_theme.contains_key(c))
            .collect();
        Ok(Artifacts {
            themes,
            model: InstrumentedModel::new(model),
            index,
            images,
        })
    }

    /// Loads the theme model and caption model (required), plus the index
    /// and image directory when configured.
    pub fn load(config: &ServiceConfig) -> Result<Self, LoadError> {
        let themes_path = config.theme_model.as_ref().ok_or(LoadError::MissingPath("theme_model"))?;
        let model_path = config.caption_model.as_ref().ok_or(LoadError::MissingPath("caption_model"))?;
        let read_err = |path: &Path, message: String| LoadError::Read {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(themes_path).map_err(|e| read_err(themes_path, e.to_string()))?;
        let themes: ThemeModel = serde_json::from_str(&text).map_err(|e| read_err(themes_path, e.to_string()))?;
        let model = NgramModel::load(model_path)?;
        let index = config.lsh_index.as_ref().map(LshIndex::load).transpose()?;
        let images = match &config.images {
            Some(dir) => scan_images(dir).map_err(|e| read_err(dir, e.to_string()))?,
            None => BTreeMap::new(),
        };
        Self::new(themes, Box::new(model), index, images)
    }

    /// Non-empty themes with their classes, ordered by theme name.
    pub fn theme_listing(&self) -> Vec<(Theme, Vec<String>)> {
        self.themes.themes_with_classes()
    }
}

/// Image files in `dir`, keyed by normalized file stem.
pub fn scan_images(dir: &Path) -> std::io::Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if !ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.insert(normalize_class_name(stem), path);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GenerationCounters {
    /// Generations run while a client waited.
    pub request_path: u64,
    /// Generations run by cache refill.
    pub background: u64,
    /// Raw next-token queries into the loaded model.
    pub model_calls: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GenPath {
    Request,
    Background,
}

/// Why no caption could be served.
#[derive(Debug, Error)]
pub enum ServeError {
    #[error("no unseen caption for class {0:?}")]
    Exhausted(String),
    #[error(transparent)]
    Caption(#[from] CaptionError),
}

pub struct AppState {
    pub config: ServiceConfig,
    artifacts: RwLock<Option<Arc<Artifacts>>>,
    cache: Arc<dyn CaptionCache>,
    pub sessions: SessionStore,
    rng: Mutex<ChaCha8Rng>,
    request_gens: AtomicU64,
    background_gens: AtomicU64,
    refilling: Mutex<HashSet<String>>,
}

impl AppState {
    /// State with no artifacts; every model-backed endpoint answers 503.
    pub fn new(config: ServiceConfig) -> Self {
        let cache = Arc::new(MemeCache::new(config.cache_capacity, config.cache_ttl));
        Self::with_cache(config, cache)
    }

    pub fn with_cache(config: ServiceConfig, cache: Arc<dyn CaptionCache>) -> Self {
        AppState {
            sessions: SessionStore::new(config.session_idle),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(config.seed)),
            config,
            artifacts: RwLock::new(None),
            cache,
            request_gens: AtomicU64::new(0),
            background_gens: AtomicU64::new(0),
            refilling: Mutex::new(HashSet::new()),
        }
    }

    /// Atomically swaps in a new artifact set.
    pub fn install(&self, artifacts: Artifacts) {
        *self.artifacts.write().unwrap() = Some(Arc::new(artifacts));
    }

    pub fn artifacts(&self) -> Option<Arc<Artifacts>> {
        self.artifacts.read().unwrap().clone()
    }

    pub fn cache_stats(&self) -> CacheStats {
        self.cache.stats()
    }

    pub fn cache_len(&self, class: &str) -> usize {
        self.cache.len(class)
    }

    pub fn counters(&self) -> GenerationCounters {
        GenerationCounters {
            request_path: self.request_gens.load(Ordering::Relaxed),
            background: self.background_gens.load(Ordering::Relaxed),
            model_calls: self.artifacts().map_or(0, |a| a.model.calls()),
        }
    }

    /// Uniform index in `0..n` from the seeded server stream.
    pub fn pick(&self, n: usize) -> usize {
        self.rng.lock().unwrap().random_range(0..n)
    }

    fn next_seed(&self) -> u64 {
        self.rng.lock().unwrap().random()
    }

    fn generate_one(&self, arts: &Artifacts, class: &str, path: GenPath) -> Result<GeneratedCaption, CaptionError> {
        let counter = match path {
            GenPath::Request => &self.request_gens,
            GenPath::Background => &self.background_gens,
        };
        counter.fetch_add(1, Ordering::Relaxed);
        let params = SamplingParams {
            temperature: self.config.temperature,
            ..SamplingParams::default()
        };
        generate(&arts.model, class, self.next_seed(), &params)
    }

    /// Generates until the class buffer is full or a bounded number of
    /// attempts is spent. Blocking.
    pub fn fill_class(&self, arts: &Artifacts, class: &str) {
        let capacity = self.cache.capacity();
        let mut budget = capacity.saturating_mul(2);
        while budget > 0 && self.cache.len(class) < capacity {
            budget -= 1;
            match self.generate_one(arts, class, GenPath::Background) {
                Ok(caption) => {
                    // drop output of a model that was swapped out meanwhile
                    let current = self.artifacts();
                    if current.is_some_and(|a| a.model.model_id() == caption.model_id) {
                        self.cache.put(caption);
                    } else {
                        return;
                    }
                }
                Err(CaptionError::EmptyGeneration { .. }) => {}
                Err(e) => {
                    log::warn!("refill for {class} failed: {e}");
                    return;
                }
            }
        }
    }

    /// Fills every class buffer. Blocking.
    pub fn warm_all(&self) {
        if let Some(arts) = self.artifacts() {
            for class in arts.themes.class_to_theme.keys() {
                self.fill_class(&arts, class);
            }
        }
    }

    /// Starts a background refill of `class` unless one is running.
    pub fn schedule_refill(self: &Arc<Self>, arts: Arc<Artifacts>, class: String) {
        if !self.config.refill || self.cache.len(&class) >= self.cache.capacity() {
            return;
        }
        if !self.refilling.lock().unwrap().insert(class.clone()) {
            return;
        }
        let state = Arc::clone(self);
        tokio::task::spawn_blocking(move || {
            state.fill_class(&arts, &class);
            state.refilling.lock().unwrap().remove(&class);
        });
    }

    /// A caption for `class` that this session has not been served yet.
    ///
    /// The cache is consulted first; on a miss, up to `fresh_attempts`
    /// generations run on the request path. Blocking.
    pub fn serve_caption(&self, arts: &Artifacts, session: &str, class: &str) -> Result<GeneratedCaption, ServeError> {
        loop {
            let hit = self
                .cache
                .take(class, &mut |c| !self.sessions.has_seen(session, class, &c.digest()));
            match hit {
                Some(c) if self.sessions.mark_seen(session, class, &c.digest()) => return Ok(c),
                // raced with a concurrent request of the same session
                Some(_) => continue,
                None => break,
            }
        }
        for _ in 0..self.config.fresh_attempts {
            let caption = match self.generate_one(arts, class, GenPath::Request) {
                Ok(c) => c,
                Err(CaptionError::EmptyGeneration { .. }) => continue,
                Err(e) => return Err(e.into()),
            };
            if self.sessions.mark_seen(session, class, &caption.digest()) {
                return Ok(caption);
            }
        }
        Err(ServeError::Exhausted(class.to_string()))
    }
}
