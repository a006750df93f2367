//! Class-conditioned caption generation.
//!
//! Every training sequence is
//!
//! ```text
//! <class:NAME> top tokens... <sep> bottom tokens... <end>
//! ```
//!
//! and sampling always starts from the class control token. Backends
//! implement [`CaptionModel`]; the bundled one is an interpolated n-gram
//! model ([`NgramModel`]) in which the class token stays in the
//! conditioning context for the whole sequence.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::MemeRecord;

pub const SEP_TOKEN: &str = "<sep>";
pub const END_TOKEN: &str = "<end>";
pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_MAX_RETRIES: usize = 16;
const FORMAT_NAME: &str = "memeify-ngram";
const FORMAT_VERSION: u32 = 1;

pub type TokenId = u32;
const SEP: TokenId = 0;
const END: TokenId = 1;

#[derive(Debug, Error)]
pub enum CaptionError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("n-gram order must be at least 2, got {0}")]
    OrderTooLow(usize),
    #[error("smoothing must be finite and non-negative, got {0}")]
    BadSmoothing(f64),
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("max_tokens must be at least 1")]
    BadMaxTokens,
    #[error("no caption with a non-empty top after {attempts} attempts")]
    EmptyGeneration { attempts: usize },
    #[error("held-out set is empty")]
    EmptyHeldout,
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The control token that conditions generation on `class`.
pub fn class_token(class: &str) -> String {
    format!("<class:{class}>")
}

/// True for `<class:*>`, `<sep>` and `<end>`.
pub fn is_control_token(token: &str) -> bool {
    token == SEP_TOKEN || token == END_TOKEN || (token.starts_with("<class:") && token.ends_with('>'))
}

/// Caption-text tokens for language modeling.
///
/// Whitespace-separated, lowercased, with non-alphanumeric characters trimmed
/// from both ends (so `don't` survives but `<sep>` becomes `sep`).
pub fn lm_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self, CaptionError> {
        if tokens.len() < 2 || tokens[SEP as usize] != SEP_TOKEN || tokens[END as usize] != END_TOKEN {
            return Err(CaptionError::Format("vocabulary must start with <sep>, <end>".into()));
        }
        let index: HashMap<String, TokenId> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        if index.len() != tokens.len() {
            return Err(CaptionError::Format("duplicate vocabulary entry".into()));
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn sep(&self) -> TokenId {
        SEP
    }

    pub fn end(&self) -> TokenId {
        END
    }
}

/// Contract for a caption backend.
pub trait CaptionModel: Send + Sync {
    /// Stable identifier of the trained parameters.
    fn model_id(&self) -> &str;

    fn vocabulary(&self) -> &Vocabulary;

    fn has_class(&self, class: &str) -> bool;

    fn classes(&self) -> Vec<String>;

    /// Next-token probabilities after `<class:class>` followed by `history`.
    ///
    /// Entries are `(token, p)` with `p > 0`, summing to one.
    fn next_token_distribution(
        &self,
        class: &str,
        history: &[TokenId],
    ) -> Result<Vec<(TokenId, f64)>, CaptionError>;

    fn to_bytes(&self) -> Vec<u8>;
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Followers {
    total: u64,
    counts: BTreeMap<TokenId, u64>,
}

impl Followers {
    fn add(&mut self, tok: TokenId) {
        self.total += 1;
        *self.counts.entry(tok).or_insert(0) += 1;
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ClassCounts {
    /// Tokens this class may emit: its caption words plus `<sep>` and `<end>`.
    support: Vec<TokenId>,
    /// Keyed by the history suffix of length 0 to order-1, where the history
    /// starts with the class token itself.
    contexts: BTreeMap<Vec<TokenId>, Followers>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NgramConfig {
    pub order: usize,
    pub smoothing: f64,
}

impl Default for NgramConfig {
    fn default() -> Self {
        NgramConfig {
            order: DEFAULT_ORDER,
            smoothing: 0.0,
        }
    }
}

/// Interpolated class-conditioned n-gram model with additive smoothing.
///
/// For a history `h`, the estimate at each context length interpolates the
/// add-`s` estimate for that context with the estimate one token shorter,
/// weighted by `c(h) / (c(h) + s * distinct(h))`. The shortest context is the
/// class token alone. With `s = 0` the model reduces to maximum likelihood
/// at the longest observed context.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    config: NgramConfig,
    vocab: Vocabulary,
    classes: BTreeMap<String, ClassCounts>,
    id: String,
}

fn sequence(record: &MemeRecord) -> (Vec<String>, Vec<String>) {
    (lm_tokens(&record.caption_top), lm_tokens(&record.caption_bottom))
}

impl NgramModel {
    pub fn train<'a>(
        records: impl IntoIterator<Item = &'a MemeRecord>,
        config: NgramConfig,
    ) -> Result<Self, CaptionError> {
        if config.order < 2 {
            return Err(CaptionError::OrderTooLow(config.order));
        }
        if !config.smoothing.is_finite() || config.smoothing < 0.0 {
            return Err(CaptionError::BadSmoothing(config.smoothing));
        }
        let records: Vec<&MemeRecord> = records.into_iter().collect();
        if records.is_empty() {
            return Err(CaptionError::EmptyCorpus);
        }

        let mut words = BTreeSet::new();
        let mut class_names = BTreeSet::new();
        let tokenized: Vec<(&str, Vec<String>, Vec<String>)> = records
            .iter()
            .map(|r| {
                let (top, bottom) = sequence(r);
                words.extend(top.iter().cloned());
                words.extend(bottom.iter().cloned());
                class_names.insert(r.class_name.clone());
                (r.class_name.as_str(), top, bottom)
            })
            .collect();

        let mut tokens = vec![SEP_TOKEN.to_string(), END_TOKEN.to_string()];
        tokens.extend(class_names.iter().map(|c| class_token(c)));
        tokens.extend(words);
        let vocab = Vocabulary::from_tokens(tokens)?;

        let mut classes: BTreeMap<String, ClassCounts> = BTreeMap::new();
        let mut supports: BTreeMap<&str, BTreeSet<TokenId>> = BTreeMap::new();
        for (class, top, bottom) in &tokenized {
            let class_id = vocab.id(&class_token(class)).unwrap();
            let seq: Vec<TokenId> = std::iter::once(class_id)
                .chain(top.iter().map(|w| vocab.id(w).unwrap()))
                .chain(std::iter::once(SEP))
                .chain(bottom.iter().map(|w| vocab.id(w).unwrap()))
                .chain(std::iter::once(END))
                .collect();
            let counts = classes.entry(class.to_string()).or_default();
            let support = supports.entry(class).or_default();
            for (i, &tok) in seq.iter().enumerate().skip(1) {
                support.insert(tok);
                for len in 0..=i.min(config.order - 1) {
                    counts
                        .contexts
                        .entry(seq[i - len..i].to_vec())
                        .or_default()
                        .add(tok);
                }
            }
        }
        for (class, support) in supports {
            let counts = classes.get_mut(class).unwrap();
            counts.support = support.into_iter().collect();
            // sep and end are always emittable
            for t in [SEP, END] {
                if let Err(pos) = counts.support.binary_search(&t) {
                    counts.support.insert(pos, t);
                }
            }
        }

        let mut model = NgramModel {
            config,
            vocab,
            classes,
            id: String::new(),
        };
        model.id = model_id_of(&model.to_bytes());
        Ok(model)
    }

    pub fn config(&self) -> NgramConfig {
        self.config
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CaptionError> {
        let file: NgramFile =
            serde_json::from_slice(bytes).map_err(|e| CaptionError::Format(e.to_string()))?;
        if file.format != FORMAT_NAME || file.version != FORMAT_VERSION {
            return Err(CaptionError::Format(format!(
                "unsupported format {} v{}",
                file.format, file.version
            )));
        }
        if file.order < 2 {
            return Err(CaptionError::OrderTooLow(file.order));
        }
        let vocab = Vocabulary::from_tokens(file.vocabulary)?;
        let n = vocab.len() as TokenId;
        let mut classes = BTreeMap::new();
        for c in file.classes {
            if vocab.id(&class_token(&c.name)).is_none() {
                return Err(CaptionError::Format(format!("class {} has no control token", c.name)));
            }
            let mut counts = ClassCounts {
                support: c.support,
                contexts: BTreeMap::new(),
            };
            for ctx in c.contexts {
                let mut f = Followers::default();
                for [tok, count] in ctx.followers {
                    if tok >= u64::from(n) {
                        return Err(CaptionError::Format(format!("token id {tok} out of range")));
                    }
                    f.total += count;
                    f.counts.insert(tok as TokenId, count);
                }
                counts.contexts.insert(ctx.context, f);
            }
            classes.insert(c.name, counts);
        }
        Ok(NgramModel {
            config: NgramConfig {
                order: file.order,
                smoothing: file.smoothing,
            },
            vocab,
            classes,
            id: model_id_of(bytes),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CaptionError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CaptionError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    fn class_counts(&self, class: &str) -> Result<&ClassCounts, CaptionError> {
        self.classes
            .get(class)
            .ok_or_else(|| CaptionError::UnknownClass(class.to_string()))
    }
}

fn model_id_of(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

impl CaptionModel for NgramModel {
    fn model_id(&self) -> &str {
        &self.id
    }

    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn has_class(&self, class: &str) -> bool {
        self.classes.contains_key(class)
    }

    fn classes(&self) -> Vec<String> {
        self.classes.keys().cloned().collect()
    }

    fn next_token_distribution(
        &self,
        class: &str,
        history: &[TokenId],
    ) -> Result<Vec<(TokenId, f64)>, CaptionError> {
        let counts = self.class_counts(class)?;
        let class_id = self
            .vocab
            .id(&class_token(class))
            .ok_or_else(|| CaptionError::UnknownClass(class.to_string()))?;
        let mut full = Vec::with_capacity(history.len() + 1);
        full.push(class_id);
        full.extend_from_slice(history);
        let history = full.as_slice();
        let s = self.config.smoothing;
        let support_size = counts.support.len() as f64;

        let add_s = |f: &Followers, tok: TokenId| {
            let c = f.counts.get(&tok).copied().unwrap_or(0) as f64;
            (c + s) / (f.total as f64 + s * support_size)
        };

        let base = &counts.contexts[&Vec::new()];
        let mut probs: Vec<f64> = counts.support.iter().map(|&t| add_s(base, t)).collect();
        let max_len = history.len().min(self.config.order - 1);
        for len in 1..=max_len {
            let ctx = &history[history.len() - len..];
            let Some(f) = counts.contexts.get(ctx) else { break };
            let weight = f.total as f64 / (f.total as f64 + s * f.counts.len() as f64);
            for (p, &t) in probs.iter_mut().zip(&counts.support) {
                *p = weight * add_s(f, t) + (1.0 - weight) * *p;
            }
        }
        Ok(counts
            .support
            .iter()
            .copied()
            .zip(probs)
            .filter(|(_, p)| *p > 0.0)
            .collect())
    }

    fn to_bytes(&self) -> Vec<u8> {
        let file = NgramFile {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            order: self.config.order,
            smoothing: self.config.smoothing,
            vocabulary: self.vocab.tokens.clone(),
            classes: self
                .classes
                .iter()
                .map(|(name, c)| ClassFile {
                    name: name.clone(),
                    support: c.support.clone(),
                    contexts: c
                        .contexts
                        .iter()
                        .map(|(ctx, f)| ContextFile {
                            context: ctx.clone(),
                            followers: f
                                .counts
                                .iter()
                                .map(|(&t, &n)| [u64::from(t), n])
                                .collect(),
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_vec(&file).expect("model serialization is infallible")
    }
}

#[derive(Serialize, Deserialize)]
struct NgramFile {
    format: String,
    version: u32,
    order: usize,
    smoothing: f64,
    vocabulary: Vec<String>,
    classes: Vec<ClassFile>,
}

#[derive(Serialize, Deserialize)]
struct ClassFile {
    name: String,
    support: Vec<TokenId>,
    contexts: Vec<ContextFile>,
}

#[derive(Serialize, Deserialize)]
struct ContextFile {
    context: Vec<TokenId>,
    followers: Vec<[u64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedCaption {
    pub class_name: String,
    pub top: String,
    pub bottom: String,
    pub seed: u64,
    pub model_id: String,
}

impl GeneratedCaption {
    /// Hex SHA-256 over class, top and bottom; identifies the caption text.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.class_name.as_bytes());
        h.update([0]);
        h.update(self.top.as_bytes());
        h.update([0]);
        h.update(self.bottom.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_tokens: usize,
    pub max_retries: usize,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: 1.0,
            max_tokens: 40,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }
}

/// Samples a token with probabilities raised to `1 / temperature`.
///
/// Works in log space so tiny temperatures collapse to the argmax set.
fn sample_token(dist: &[(TokenId, f64)], temperature: f64, rng: &mut impl Rng) -> Option<TokenId> {
    let max_log = dist
        .iter()
        .map(|(_, p)| p.ln())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max_log.is_finite() {
        return None;
    }
    let weights: Vec<f64> = dist
        .iter()
        .map(|(_, p)| ((p.ln() - max_log) / temperature).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    let mut chosen = None;
    for ((tok, _), w) in dist.iter().zip(&weights) {
        if *w <= 0.0 {
            continue;
        }
        chosen = Some(*tok);
        if target < *w {
            break;
        }
        target -= w;
    }
    chosen
}

/// Samples a two-part caption for `class`.
///
/// A pure function of the model, class, seed and sampling parameters.
/// Samples whose top part comes out empty are redrawn from the same random
/// stream up to `max_retries` times.
pub fn generate(
    model: &dyn CaptionModel,
    class: &str,
    seed: u64,
    params: &SamplingParams,
) -> Result<GeneratedCaption, CaptionError> {
    if !model.has_class(class) {
        return Err(CaptionError::UnknownClass(class.to_string()));
    }
    if !(params.temperature.is_finite() && params.temperature > 0.0) {
        return Err(CaptionError::BadTemperature(params.temperature));
    }
    if params.max_tokens == 0 {
        return Err(CaptionError::BadMaxTokens);
    }
    let vocab = model.vocabulary();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..=params.max_retries {
        let mut history = Vec::new();
        let mut top: Vec<&str> = Vec::new();
        let mut bottom: Vec<&str> = Vec::new();
        let mut in_bottom = false;
        for _ in 0..params.max_tokens {
            let mut dist = model.next_token_distribution(class, &history)?;
            if in_bottom {
                // a caption has at most two parts
                dist.retain(|(t, _)| *t != vocab.sep());
            }
            let Some(tok) = sample_token(&dist, params.temperature, &mut rng) else { break };
            if tok == vocab.end() {
                break;
            }
            if tok == vocab.sep() {
                in_bottom = true;
            } else {
                let word = vocab.token(tok);
                debug_assert!(!is_control_token(word));
                if in_bottom {
                    bottom.push(word);
                } else {
                    top.push(word);
                }
            }
            history.push(tok);
        }
        if !top.is_empty() {
            return Ok(GeneratedCaption {
                class_name: class.to_string(),
                top: top.join(" "),
                bottom: bottom.join(" "),
                seed,
                model_id: model.model_id().to_string(),
            });
        }
    }
    Err(CaptionError::EmptyGeneration {
        attempts: params.max_retries + 1,
    })
}

/// Per-token perplexity of held-out captions.
///
/// The class token is conditioning only; every caption token plus `<sep>`
/// and `<end>` is scored. A token the model gives zero probability yields
/// infinity.
pub fn perplexity<'a>(
    model: &dyn CaptionModel,
    heldout: impl IntoIterator<Item = &'a MemeRecord>,
) -> Result<f64, CaptionError> {
    let vocab = model.vocabulary();
    let mut log_sum = 0f64;
    let mut scored = 0usize;
    for record in heldout {
        if !model.has_class(&record.class_name) {
            return Err(CaptionError::UnknownClass(record.class_name.clone()));
        }
        let (top, bottom) = sequence(record);
        let seq: Vec<Option<TokenId>> = top
            .iter()
            .map(|w| vocab.id(w))
            .chain(std::iter::once(Some(vocab.sep())))
            .chain(bottom.iter().map(|w| vocab.id(w)))
            .chain(std::iter::once(Some(vocab.end())))
            .collect();
        let mut history = Vec::with_capacity(seq.len());
        for tok in seq {
            scored += 1;
            let Some(tok) = tok else { return Ok(f64::INFINITY) };
            let dist = model.next_token_distribution(&record.class_name, &history)?;
            let p = dist.iter().find(|(t, _)| *t == tok).map_or(0.0, |(_, p)| *p);
            if p <= 0.0 {
                return Ok(f64::INFINITY);
            }
            log_sum += p.ln();
            history.push(tok);
        }
    }
    if scored == 0 {
        return Err(CaptionError::EmptyHeldout);
    }
    Ok((-log_sum / scored as f64).exp())
}
