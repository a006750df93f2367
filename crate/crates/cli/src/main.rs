//! `memeify`: builds pipeline artifacts and serves them.
//!
//! Stages: `ingest`, `embed`, `cluster`, `train`, `index`, then `generate`,
//! `render`, `serve` and `eval` over the results. Every stage that draws
//! random numbers takes a mandatory `--seed`.
//!
//! Exit codes: 0 success, 1 stage failure, 2 usage error, 3 missing input.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use memeify_core::captiongen::{generate, NgramConfig, NgramModel, SamplingParams};
use memeify_core::corpus::parse_corpus;
use memeify_core::embeddings::{embed_corpus, load_embeddings, load_vectors, write_vectors};
use memeify_core::evalkit::{
    metrics, misclassification_rate, rating_summary, reconstruct_matrix, theme_recovery,
    ConfusionMatrix, RatingTable, ThemeRecoveryData,
};
use memeify_core::imageindex::{decode_image, LshIndex, PixelHistogramExtractor};
use memeify_core::renderer::{render_meme, RenderSpec};
use memeify_core::themes::{fit_theme_model, parse_theme_names, FitParams};
use memeify_service::state::scan_images;
use memeify_service::{AppState, Artifacts, ServiceConfig};
use serde_json::json;
use thiserror::Error;

#[derive(Parser)]
#[command(name = "memeify", version, about = "Class-conditioned meme generation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus and write per-class counts.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        stats_out: PathBuf,
    },
    /// Average word vectors over each caption.
    Embed {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster caption vectors and label classes with themes.
    Cluster {
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        seed: u64,
        /// Theme name bindings (`Theme = index | anchor words`).
        #[arg(long)]
        names: PathBuf,
        /// Embedding table, needed for anchor-word bindings.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        /// Flag this upper quantile of centroid distances as residual.
        #[arg(long)]
        residual_quantile: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the class-conditioned caption model.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, default_value_t = 0.0)]
        smoothing: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample captions for a class; one JSON object per line.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        class: String,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        /// Number of captions, drawn with seeds `seed`, `seed + 1`, ...
        #[arg(long, default_value_t = 1)]
        count: u64,
    },
    /// Build the image lookup index from a directory of class images.
    Index {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        bits: usize,
        #[arg(long, default_value_t = 8)]
        tables: usize,
    },
    /// Draw a two-part caption onto an image.
    Render {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        top: String,
        #[arg(long, default_value = "")]
        bottom: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluation metrics.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Percent metrics for a `tp,fn,fp,tn` confusion matrix.
    Metrics {
        #[arg(long)]
        cm: String,
    },
    /// Theme recovery accuracy from `true_theme,predicted_theme` rows.
    Recover {
        #[arg(long)]
        csv: PathBuf,
    },
    /// Mean ratings from `theme,condition,rating` rows.
    Ratings {
        #[arg(long)]
        csv: PathBuf,
    },
    /// Integer confusion matrix matching reported percentages.
    Reconstruct {
        #[arg(long)]
        precision: f64,
        #[arg(long)]
        recall: f64,
        #[arg(long)]
        accuracy: f64,
        #[arg(long)]
        n_pos: u64,
        #[arg(long)]
        n_neg: u64,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("input not found: {0}")]
    MissingInput(PathBuf),
    #[error("{0}")]
    Stage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::MissingInput(_) => 3,
            CliError::Stage(_) => 1,
        }
    }
}

fn stage(e: impl Display) -> CliError {
    CliError::Stage(e.to_string())
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingInput(path.to_path_buf()))
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(stage)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| stage(format!("{}: {e}", path.display())))
}

fn print_json(value: &impl serde::Serialize) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(value).map_err(stage)?);
    Ok(())
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest { input, stats_out } => {
            require(&input)?;
            let (_, stats) = parse_corpus(&input).map_err(stage)?;
            log::info!("{} records in {} classes", stats.record_count, stats.class_count);
            write_json(&stats_out, &stats)
        }
        Command::Embed { table, corpus, out } => {
            require(&table)?;
            require(&corpus)?;
            let table = load_embeddings(&table).map_err(stage)?;
            let (records, _) = parse_corpus(&corpus).map_err(stage)?;
            let (vectors, skipped) = embed_corpus(&records, &table);
            if !skipped.is_empty() {
                log::warn!("{} records have no known words and were skipped", skipped.len());
            }
            let mut w = BufWriter::new(File::create(&out).map_err(stage)?);
            write_vectors(&mut w, &vectors).map_err(stage)?;
            w.flush().map_err(stage)?;
            log::info!("wrote {} vectors", vectors.len());
            Ok(())
        }
        Command::Cluster {
            vectors,
            k,
            seed,
            names,
            table,
            restarts,
            residual_quantile,
            out,
        } => {
            require(&vectors)?;
            require(&names)?;
            if let Some(t) = &table {
                require(t)?;
            }
            let points = load_vectors(&vectors).map_err(stage)?;
            let text = std::fs::read_to_string(&names).map_err(stage)?;
            let bindings = parse_theme_names(&text).map_err(stage)?;
            let table = table.map(load_embeddings).transpose().map_err(stage)?;
            let mut params = FitParams::new(k, seed);
            params.restarts = restarts;
            params.residual_quantile = residual_quantile;
            let model = fit_theme_model(&points, &params, &bindings, table.as_ref()).map_err(stage)?;
            write_json(&out, &model)?;
            print_json(&model.summary())
        }
        Command::Train {
            corpus,
            order,
            smoothing,
            out,
        } => {
            require(&corpus)?;
            let (records, _) = parse_corpus(&corpus).map_err(stage)?;
            let model = NgramModel::train(&records, NgramConfig { order, smoothing }).map_err(stage)?;
            model.save(&out).map_err(stage)
        }
        Command::Generate {
            model,
            class,
            seed,
            temperature,
            count,
        } => {
            require(&model)?;
            let model = NgramModel::load(&model).map_err(stage)?;
            let params = SamplingParams {
                temperature,
                ..SamplingParams::default()
            };
            for i in 0..count {
                let caption = generate(&model, &class, seed.wrapping_add(i), &params).map_err(stage)?;
                println!(
                    "{}",
                    json!({
                        "class": caption.class_name,
                        "top": caption.top,
                        "bottom": caption.bottom,
                        "seed": caption.seed,
                        "digest": caption.digest(),
                    })
                );
            }
            Ok(())
        }
        Command::Index {
            images,
            out,
            seed,
            bits,
            tables,
        } => {
            require(&images)?;
            let paths = scan_images(&images).map_err(stage)?;
            let mut decoded = BTreeMap::new();
            for (class, path) in paths {
                let bytes = std::fs::read(&path).map_err(stage)?;
                let img = decode_image(&bytes).map_err(|e| stage(format!("{}: {e}", path.display())))?;
                decoded.insert(class, img);
            }
            let index = LshIndex::build(&decoded, &PixelHistogramExtractor, bits, tables, seed).map_err(stage)?;
            index.save(&out).map_err(stage)?;
            log::info!("indexed {} classes", index.entries().len());
            Ok(())
        }
        Command::Render {
            image,
            top,
            bottom,
            out,
        } => {
            require(&image)?;
            let bytes = std::fs::read(&image).map_err(stage)?;
            let base = decode_image(&bytes).map_err(stage)?;
            let png = render_meme(&base, &top, &bottom, &RenderSpec::default()).map_err(stage)?;
            std::fs::write(&out, png).map_err(stage)
        }
        Command::Serve { config } => {
            require(&config)?;
            let config = ServiceConfig::load(&config).map_err(stage)?;
            serve(config)
        }
        Command::Eval { command } => eval(command),
    }
}

fn serve(config: ServiceConfig) -> Result<(), CliError> {
    for path in [&config.theme_model, &config.caption_model, &config.lsh_index, &config.images]
        .into_iter()
        .flatten()
    {
        require(path)?;
    }
    let listen = config.listen;
    let loadable = config.theme_model.is_some() && config.caption_model.is_some();
    let artifacts = if loadable {
        Some(Artifacts::load(&config).map_err(stage)?)
    } else {
        log::warn!("theme_model or caption_model not configured; serving 503 until loaded");
        None
    };
    let state = Arc::new(AppState::new(config));
    if let Some(a) = artifacts {
        state.install(a);
    }
    let runtime = tokio::runtime::Runtime::new().map_err(stage)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen).await.map_err(stage)?;
        let addr = listener.local_addr().map_err(stage)?;
        println!("listening on http://{addr}");
        std::io::stdout().flush().map_err(stage)?;
        memeify_service::serve(listener, state).await.map_err(stage)
    })
}

fn eval(command: EvalCommand) -> Result<(), CliError> {
    match command {
        EvalCommand::Metrics { cm } => {
            let cm = ConfusionMatrix::parse(&cm).map_err(stage)?;
            let m = metrics(&cm).map_err(stage)?;
            let miss = misclassification_rate(&cm).ok();
            print_json(&json!({
                "precision": m.precision,
                "recall": m.recall,
                "accuracy": m.accuracy,
                "f1": m.f1,
                "misclassification_rate": miss,
            }))
        }
        EvalCommand::Recover { csv } => {
            require(&csv)?;
            let file = File::open(&csv).map_err(stage)?;
            let data = ThemeRecoveryData::from_csv(file).map_err(stage)?;
            print_json(&theme_recovery(&data).map_err(stage)?)
        }
        EvalCommand::Ratings { csv } => {
            require(&csv)?;
            let file = File::open(&csv).map_err(stage)?;
            let table = RatingTable::from_csv(file).map_err(stage)?;
            print_json(&rating_summary(&table).map_err(stage)?)
        }
        EvalCommand::Reconstruct {
            precision,
            recall,
            accuracy,
            n_pos,
            n_neg,
        } => print_json(&reconstruct_matrix(precision, recall, accuracy, n_pos, n_neg).map_err(stage)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("memeify: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
