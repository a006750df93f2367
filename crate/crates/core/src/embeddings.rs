//! Word embedding tables and averaged caption vectors.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::MemeRecord;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot open embedding table {path}: {source}")]
    Open { path: PathBuf, source: io::Error },
    #[error("read error at line {line}: {source}")]
    Read { line: usize, source: io::Error },
    #[error("embedding table is empty")]
    Empty,
    #[error("line {line}: expected {expected} components, found {found}")]
    Dimension {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: cannot parse {token:?} as a float")]
    Parse { line: usize, token: String },
    #[error("line {line}: word has no vector")]
    MissingVector { line: usize },
    #[error("no token of {caption:?} is in the vocabulary")]
    Unembeddable { caption: String },
    #[error("vectors file line {line}: {message}")]
    VectorsFormat { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Lowercased alphanumeric tokens; every non-alphanumeric run is a separator.
pub fn tokenize(caption: &str) -> Vec<String> {
    caption
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Fixed-dimension map from lowercase word to vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    entries: HashMap<String, Vec<f32>>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        EmbeddingTable {
            dimension,
            entries: HashMap::new(),
        }
    }

    /// Inserts a vector, returning the previous one for the same word.
    ///
    /// Panics if the vector has the wrong dimension.
    pub fn insert(&mut self, word: &str, vector: Vec<f32>) -> Option<Vec<f32>> {
        assert_eq!(vector.len(), self.dimension, "vector dimension mismatch");
        self.entries.insert(word.to_lowercase(), vector)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    /// Seeded random unit vectors, one per word. Order of `vocabulary` matters.
    pub fn demo<S: AsRef<str>>(vocabulary: &[S], dimension: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = EmbeddingTable::new(dimension);
        for word in vocabulary {
            let mut v: Vec<f64> = (0..dimension)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            v.iter_mut().for_each(|x| *x /= norm);
            table.insert(word.as_ref(), v.into_iter().map(|x| x as f32).collect());
        }
        table
    }

    /// Reads the `word v1 v2 ... vd` text format.
    pub fn read<R: BufRead>(reader: R) -> Result<Self, EmbeddingError> {
        let mut table: Option<EmbeddingTable> = None;
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|source| EmbeddingError::Read {
                line: line_no,
                source,
            })?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let vector = parts
                .map(|t| {
                    t.parse::<f32>().map_err(|_| EmbeddingError::Parse {
                        line: line_no,
                        token: t.to_string(),
                    })
                })
                .collect::<Result<Vec<f32>, _>>()?;
            if vector.is_empty() {
                return Err(EmbeddingError::MissingVector { line: line_no });
            }
            let table = table.get_or_insert_with(|| EmbeddingTable::new(vector.len()));
            if vector.len() != table.dimension {
                return Err(EmbeddingError::Dimension {
                    line: line_no,
                    expected: table.dimension,
                    found: vector.len(),
                });
            }
            if table.insert(word, vector).is_some() {
                log::warn!("duplicate embedding for {word:?} at line {line_no}; keeping the last");
            }
        }
        table.ok_or(EmbeddingError::Empty)
    }

    /// Writes the text format with words in sorted order.
    pub fn write<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        let mut words: Vec<_> = self.entries.keys().collect();
        words.sort();
        for w in words {
            write!(out, "{w}")?;
            for x in &self.entries[w] {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable, EmbeddingError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| EmbeddingError::Open {
        path: path.to_path_buf(),
        source,
    })?;
    EmbeddingTable::read(BufReader::new(file))
}

/// Mean of the vectors of the caption's in-vocabulary tokens.
///
/// Out-of-vocabulary tokens are skipped. A caption with no known token is an
/// error rather than a zero vector.
pub fn caption_vector(caption: &str, table: &EmbeddingTable) -> Result<Vec<f32>, EmbeddingError> {
    let mut sum = vec![0f64; table.dimension];
    let mut hits = 0usize;
    for tok in tokenize(caption) {
        if let Some(v) = table.get(&tok) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += f64::from(*x);
            }
            hits += 1;
        }
    }
    if hits == 0 {
        return Err(EmbeddingError::Unembeddable {
            caption: caption.to_string(),
        });
    }
    Ok(sum.into_iter().map(|s| (s / hits as f64) as f32).collect())
}

/// Averaged vector of one meme's full caption, tagged with its id and class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionVector {
    pub id: String,
    #[serde(rename = "class")]
    pub class_name: String,
    pub vector: Vec<f32>,
}

/// Embeds every record's top and bottom text as one caption.
///
/// Records with no in-vocabulary token are skipped and returned by id.
pub fn embed_corpus(
    records: &[MemeRecord],
    table: &EmbeddingTable,
) -> (Vec<CaptionVector>, Vec<String>) {
    let mut vectors = Vec::with_capacity(records.len());
    let mut skipped = Vec::new();
    for r in records {
        let text = format!("{} {}", r.caption_top, r.caption_bottom);
        match caption_vector(&text, table) {
            Ok(vector) => vectors.push(CaptionVector {
                id: r.id.clone(),
                class_name: r.class_name.clone(),
                vector,
            }),
            Err(_) => skipped.push(r.id.clone()),
        }
    }
    (vectors, skipped)
}

/// Writes one JSON object per line.
pub fn write_vectors<W: io::Write>(mut out: W, vectors: &[CaptionVector]) -> io::Result<()> {
    for v in vectors {
        serde_json::to_writer(&mut out, v)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_vectors<R: BufRead>(reader: R) -> Result<Vec<CaptionVector>, EmbeddingError> {
    let mut out: Vec<CaptionVector> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| EmbeddingError::Read { line: i + 1, source })?;
        if line.trim().is_empty() {
            continue;
        }
        let v: CaptionVector =
            serde_json::from_str(&line).map_err(|e| EmbeddingError::VectorsFormat {
                line: i + 1,
                message: e.to_string(),
            })?;
        if let Some(first) = out.first() {
            if first.vector.len() != v.vector.len() {
                return Err(EmbeddingError::Dimension {
                    line: i + 1,
                    expected: first.vector.len(),
                    found: v.vector.len(),
                });
            }
        }
        out.push(v);
    }
    Ok(out)
}

pub fn load_vectors(path: impl AsRef<Path>) -> Result<Vec<CaptionVector>, EmbeddingError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| EmbeddingError::Open {
        path: path.to_path_buf(),
        source,
    })?;
    read_vectors(BufReader::new(file))
}
