//! Image features and a random-hyperplane LSH lookup table over class images.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use image::DynamicImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GRID: u32 = 16;
pub const HIST_BINS: usize = 8;
pub const FEATURE_DIM: usize = (GRID * GRID) as usize + 3 * HIST_BINS;
pub const DEFAULT_BITS: usize = 16;
pub const DEFAULT_TABLES: usize = 8;
const INDEX_FORMAT: &str = "memeify-lsh";
const INDEX_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("image has zero area")]
    ZeroArea,
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("feature vector has zero norm")]
    ZeroNorm,
    #[error("duplicate class {0:?}")]
    DuplicateClass(String),
    #[error("feature extraction failed for class {class}: {source}")]
    Extraction {
        class: String,
        source: Box<IndexError>,
    },
    #[error("no class images")]
    NoImages,
    #[error("bits per signature must be in 1..=64, got {0}")]
    BadBits(usize),
    #[error("table count must be at least 1")]
    BadTables,
    #[error("query dimension {found} does not match index dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("index is empty")]
    EmptyIndex,
    #[error("index file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// L2-normalized feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    /// Normalizes `values` to unit length.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self, IndexError> {
        let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(IndexError::ZeroNorm);
        }
        values.iter_mut().for_each(|x| *x /= norm);
        Ok(FeatureVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Dot product; for unit vectors, the cosine similarity.
    pub fn cosine(&self, other: &FeatureVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = IndexError;

    /// Accepts only vectors already of unit length, unchanged.
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() >= 1e-6 {
            return Err(IndexError::Format(format!("feature vector norm {norm} is not 1")));
        }
        Ok(FeatureVector(v))
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

/// Image to vector contract used by the index.
pub trait FeatureExtractor: Send + Sync {
    fn extract(&self, image: &DynamicImage) -> Result<FeatureVector, IndexError>;
    fn dim(&self) -> usize;
}

/// 16x16 area-averaged luminance plus an 8-bin histogram per RGB channel.
#[derive(Debug, Clone, Copy, Default)]
pub struct PixelHistogramExtractor;

impl FeatureExtractor for PixelHistogramExtractor {
    fn extract(&self, image: &DynamicImage) -> Result<FeatureVector, IndexError> {
        extract_features(image)
    }

    fn dim(&self) -> usize {
        FEATURE_DIM
    }
}

fn luminance(rgb: [u8; 3]) -> f64 {
    (0.299 * f64::from(rgb[0]) + 0.587 * f64::from(rgb[1]) + 0.114 * f64::from(rgb[2])) / 255.0
}

/// Box-filter resample of a row-major grid to `out x out`, weighting each
/// source pixel by its exact overlap with the target cell.
fn area_average(values: &[f64], width: u32, height: u32, out: u32) -> Vec<f64> {
    let (w, h) = (f64::from(width), f64::from(height));
    let o = f64::from(out);
    // overlap of [lo, hi) with source cell i, along one axis
    let spans = |len: f64, n: u32| -> Vec<Vec<(usize, f64)>> {
        (0..out)
            .map(|k| {
                let lo = f64::from(k) * len / o;
                let hi = f64::from(k + 1) * len / o;
                let first = lo.floor() as u32;
                let last = (hi.ceil() as u32).min(n);
                (first..last)
                    .filter_map(|i| {
                        let a = lo.max(f64::from(i));
                        let b = hi.min(f64::from(i + 1));
                        (b > a).then_some((i as usize, b - a))
                    })
                    .collect()
            })
            .collect()
    };
    let xs = spans(w, width);
    let ys = spans(h, height);
    let cell_area = (w / o) * (h / o);
    let mut grid = Vec::with_capacity((out * out) as usize);
    for yspan in &ys {
        for xspan in &xs {
            let mut acc = 0.0;
            for &(y, wy) in yspan {
                let row = y * width as usize;
                for &(x, wx) in xspan {
                    acc += values[row + x] * wx * wy;
                }
            }
            grid.push(acc / cell_area);
        }
    }
    grid
}

/// Deterministic 280-dimensional feature vector of an image.
pub fn extract_features(image: &DynamicImage) -> Result<FeatureVector, IndexError> {
    let (width, height) = (image.width(), image.height());
    if width == 0 || height == 0 {
        return Err(IndexError::ZeroArea);
    }
    let rgb = image.to_rgb8();
    let mut luma = Vec::with_capacity((width * height) as usize);
    let mut hist = [[0u64; HIST_BINS]; 3];
    for px in rgb.pixels() {
        luma.push(luminance(px.0));
        for (c, &v) in px.0.iter().enumerate() {
            hist[c][(v as usize * HIST_BINS) / 256] += 1;
        }
    }
    let mut values = area_average(&luma, width, height, GRID);
    let n = f64::from(width) * f64::from(height);
    for channel in &hist {
        values.extend(channel.iter().map(|&c| c as f64 / n));
    }
    FeatureVector::normalized(values)
}

pub fn decode_image(bytes: &[u8]) -> Result<DynamicImage, IndexError> {
    image::load_from_memory(bytes).map_err(|e| IndexError::Decode(e.to_string()))
}

/// `count` seeded random unit hyperplane normals of dimension `dim`.
pub fn random_hyperplanes(dim: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            if let Ok(unit) = FeatureVector::normalized(v) {
                break unit.0;
            }
        })
        .collect()
}

/// Sign bits of `v` against each hyperplane; bit `i` is set when the dot
/// product with hyperplane `i` is non-negative.
pub fn signature(hyperplanes: &[Vec<f64>], v: &[f64]) -> u64 {
    hyperplanes.iter().enumerate().fold(0u64, |sig, (i, h)| {
        let dot: f64 = h.iter().zip(v).map(|(a, b)| a * b).sum();
        if dot >= 0.0 {
            sig | (1 << i)
        } else {
            sig
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub class_name: String,
    pub vector: FeatureVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LookupResult {
    pub class_name: String,
    pub similarity: f64,
    /// Number of distinct entries sharing at least one bucket with the query.
    pub candidates: usize,
    /// No bucket matched, so every entry was scanned.
    pub fallback: bool,
}

/// Random-hyperplane LSH tables over class feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LshIndex {
    seed: u64,
    bits: usize,
    dim: usize,
    hyperplanes: Vec<Vec<Vec<f64>>>,
    buckets: Vec<HashMap<u64, Vec<usize>>>,
    signatures: Vec<Vec<u64>>,
    entries: Vec<IndexEntry>,
}

impl LshIndex {
    /// Builds `tables` tables of `bits`-bit signatures over `entries`.
    pub fn from_vectors(
        entries: Vec<IndexEntry>,
        bits: usize,
        tables: usize,
        seed: u64,
    ) -> Result<Self, IndexError> {
        if !(1..=64).contains(&bits) {
            return Err(IndexError::BadBits(bits));
        }
        if tables == 0 {
            return Err(IndexError::BadTables);
        }
        let dim = entries.first().ok_or(IndexError::NoImages)?.vector.dim();
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.class_name.as_str()) {
                return Err(IndexError::DuplicateClass(e.class_name.clone()));
            }
            if e.vector.dim() != dim {
                return Err(IndexError::DimensionMismatch {
                    expected: dim,
                    found: e.vector.dim(),
                });
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hyperplanes: Vec<Vec<Vec<f64>>> = (0..tables)
            .map(|_| random_hyperplanes(dim, bits, &mut rng))
            .collect();
        let mut buckets = vec![HashMap::new(); tables];
        let mut signatures = vec![Vec::with_capacity(entries.len()); tables];
        for (t, planes) in hyperplanes.iter().enumerate() {
            for (id, e) in entries.iter().enumerate() {
                let sig = signature(planes, e.vector.as_slice());
                signatures[t].push(sig);
                buckets[t].entry(sig).or_insert_with(Vec::new).push(id);
            }
        }
        Ok(LshIndex {
            seed,
            bits,
            dim,
            hyperplanes,
            buckets,
            signatures,
            entries,
        })
    }

    /// Extracts features for every class image and indexes them.
    pub fn build(
        class_images: &BTreeMap<String, DynamicImage>,
        extractor: &dyn FeatureExtractor,
        bits: usize,
        tables: usize,
        seed: u64,
    ) -> Result<Self, IndexError> {
        if class_images.is_empty() {
            return Err(IndexError::NoImages);
        }
        let entries = class_images
            .iter()
            .map(|(class, img)| {
                extractor
                    .extract(img)
                    .map(|vector| IndexEntry {
                        class_name: class.clone(),
                        vector,
                    })
                    .map_err(|e| IndexError::Extraction {
                        class: class.clone(),
                        source: Box::new(e),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_vectors(entries, bits, tables, seed)
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn tables(&self) -> usize {
        self.hyperplanes.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    /// Signature of entry `id` in table `table`.
    pub fn entry_signature(&self, table: usize, id: usize) -> u64 {
        self.signatures[table][id]
    }

    pub fn bucket(&self, table: usize, signature: u64) -> &[usize] {
        self.buckets[table].get(&signature).map_or(&[], Vec::as_slice)
    }

    /// Signatures of `v` in every table.
    pub fn signatures_of(&self, v: &FeatureVector) -> Vec<u64> {
        self.hyperplanes
            .iter()
            .map(|planes| signature(planes, v.as_slice()))
            .collect()
    }

    /// Entry ids sharing a bucket with the query, with their collision counts.
    pub fn candidates(&self, query: &FeatureVector) -> Result<BTreeMap<usize, usize>, IndexError> {
        self.check_query(query)?;
        let mut votes = BTreeMap::new();
        for (t, sig) in self.signatures_of(query).into_iter().enumerate() {
            for &id in self.bucket(t, sig) {
                *votes.entry(id).or_insert(0) += 1;
            }
        }
        Ok(votes)
    }

    fn check_query(&self, query: &FeatureVector) -> Result<(), IndexError> {
        if self.entries.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                found: query.dim(),
            });
        }
        Ok(())
    }

    /// Closest class for `query`.
    ///
    /// With `rerank`, the candidate with the highest cosine similarity wins;
    /// otherwise the candidate colliding in the most tables. Ties go to the
    /// lexicographically smallest class. When no bucket matches, every entry
    /// is ranked by cosine and the result is flagged as a fallback.
    pub fn lookup(&self, query: &FeatureVector, rerank: bool) -> Result<LookupResult, IndexError> {
        let votes = self.candidates(query)?;
        let fallback = votes.is_empty();
        let pool: Vec<(usize, usize)> = if fallback {
            (0..self.entries.len()).map(|id| (id, 0)).collect()
        } else {
            votes.into_iter().collect()
        };
        let score = |id: usize| self.entries[id].vector.cosine(query);
        let best = pool
            .iter()
            .map(|&(id, v)| (id, v, score(id)))
            .max_by(|a, b| {
                let primary = if rerank || fallback {
                    a.2.total_cmp(&b.2)
                } else {
                    a.1.cmp(&b.1).then(a.2.total_cmp(&b.2))
                };
                // reversed so the smaller class name is the max on ties
                primary.then_with(|| {
                    self.entries[b.0]
                        .class_name
                        .cmp(&self.entries[a.0].class_name)
                })
            })
            .expect("pool is non-empty");
        Ok(LookupResult {
            class_name: self.entries[best.0].class_name.clone(),
            similarity: best.2,
            candidates: if fallback { 0 } else { pool.len() },
            fallback,
        })
    }

    /// Exhaustive cosine ranking over all entries, ties by class name.
    pub fn brute_force(&self, query: &FeatureVector) -> Result<(String, f64), IndexError> {
        self.check_query(query)?;
        let best = self
            .entries
            .iter()
            .map(|e| (e, e.vector.cosine(query)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.class_name.cmp(&a.0.class_name)))
            .unwrap();
        Ok((best.0.class_name.clone(), best.1))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let file = IndexFile {
            format: INDEX_FORMAT.into(),
            version: INDEX_VERSION,
            seed: self.seed,
            bits: self.bits,
            tables: self.tables(),
            entries: self.entries.clone(),
            signatures: self.signatures.clone(),
        };
        serde_json::to_vec(&file).expect("index serialization is infallible")
    }

    /// Loads an index, regenerating hyperplanes from the stored seed and
    /// checking them against the stored signatures.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let file: IndexFile =
            serde_json::from_slice(bytes).map_err(|e| IndexError::Format(e.to_string()))?;
        if file.format != INDEX_FORMAT || file.version != INDEX_VERSION {
            return Err(IndexError::Format(format!(
                "unsupported format {} v{}",
                file.format, file.version
            )));
        }
        let index = Self::from_vectors(file.entries, file.bits, file.tables, file.seed)?;
        if index.signatures != file.signatures {
            return Err(IndexError::Format("stored signatures do not match the seed".into()));
        }
        Ok(index)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    format: String,
    version: u32,
    seed: u64,
    bits: usize,
    tables: usize,
    entries: Vec<IndexEntry>,
    signatures: Vec<Vec<u64>>,
}
