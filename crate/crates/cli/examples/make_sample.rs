//! Writes the bundled six-class sample: corpus, embedding table, theme name
//! bindings, class images and a service config.
//!
//! `cargo run -p memeify-cli --example make_sample -- [OUT_DIR]`

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use memeify_core::corpus::write_corpus;
use memeify_core::synthetic::{class_image, plant, sample_classes};

const SERVE_CONF: &str = "\
# Paths are relative to this file; build them with the pipeline in README.md.
listen = 127.0.0.1:8080
theme_model = build/themes.json
caption_model = build/captions.model
lsh_index = build/index.bin
images = images
seed = 1
cache_capacity = 32
";

fn main() -> std::io::Result<()> {
    let out = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data/sample"));
    std::fs::create_dir_all(out.join("images"))?;
    let corpus = plant(&sample_classes(60), 32, 7);

    let mut w = BufWriter::new(File::create(out.join("corpus.jsonl"))?);
    write_corpus(&mut w, &corpus.records)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(out.join("embeddings.txt"))?);
    corpus.table.write(&mut w)?;
    w.flush()?;
    std::fs::write(out.join("names.conf"), &corpus.names_config)?;
    std::fs::write(out.join("serve.conf"), SERVE_CONF)?;
    for class in corpus.expected.keys() {
        class_image(class, 320, 240)
            .save(out.join("images").join(format!("{class}.png")))
            .map_err(std::io::Error::other)?;
    }
    println!("wrote {} records for {} classes to {}", corpus.records.len(), corpus.expected.len(), out.display());
    Ok(())
}
