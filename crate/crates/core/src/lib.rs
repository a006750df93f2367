//! Core pipeline for class-conditioned meme generation.
//!
//! * [`corpus`] reads and samples line-delimited meme records.
//! * [`embeddings`] averages word vectors over caption tokens.
//! * [`themes`] clusters caption vectors and labels classes with themes.
//! * [`captiongen`] trains and samples class-conditioned caption models.
//! * [`imageindex`] matches images to meme classes through LSH tables.
//! * [`renderer`] draws two-part captions onto base images.
//! * [`evalkit`] computes the user-study metrics.
//! * [`synthetic`] builds planted-theme corpora for demos and tests.

pub mod captiongen;
pub mod corpus;
pub mod embeddings;
pub mod evalkit;
pub mod imageindex;
pub mod renderer;
pub mod synthetic;
pub mod themes;

pub use captiongen::{generate, CaptionModel, GeneratedCaption, NgramConfig, NgramModel, SamplingParams};
pub use corpus::{parse_corpus, stratified_sample, CorpusStats, MemeRecord};
pub use embeddings::{caption_vector, embed_corpus, load_embeddings, tokenize, CaptionVector, EmbeddingTable};
pub use imageindex::{extract_features, FeatureVector, LshIndex};
pub use renderer::{render_meme, RenderSpec};
pub use themes::{fit_theme_model, FitParams, Theme, ThemeModel};
