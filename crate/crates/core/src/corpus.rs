//! Meme corpus format, parsing and stratified sampling.
//!
//! A corpus file is UTF-8 text with one JSON object per line:
//!
//! ```text
//! {"id":"1","class":"futuruma_fry","caption_top":"not sure if smart","caption_bottom":"or just british"}
//! ```
//!
//! `image` is optional. Class names are normalized to lowercase with
//! underscores on the way in.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot open corpus {path}: {source}")]
    Open { path: PathBuf, source: io::Error },
    #[error("read error at line {line}: {source}")]
    Read { line: usize, source: io::Error },
    #[error("malformed record at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("empty caption_top at line {line}")]
    EmptyCaption { line: usize },
    #[error("empty class name at line {line}")]
    EmptyClass { line: usize },
    #[error("duplicate id {id:?} at line {line}")]
    DuplicateId { line: usize, id: String },
    #[error("sample size {requested} exceeds corpus size {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("stratified sample of {requested} cannot cover every class; dropped: {dropped:?}")]
    StratificationImpossible {
        requested: usize,
        dropped: Vec<String>,
    },
}

/// One captioned meme.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemeRecord {
    pub id: String,
    #[serde(rename = "class")]
    pub class_name: String,
    pub caption_top: String,
    #[serde(default)]
    pub caption_bottom: String,
    #[serde(rename = "image", default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

impl MemeRecord {
    /// Builds a record, normalizing the class name and checking invariants.
    pub fn new(
        id: impl Into<String>,
        class_name: &str,
        caption_top: impl Into<String>,
        caption_bottom: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let record = MemeRecord {
            id: id.into(),
            class_name: normalize_class_name(class_name),
            caption_top: caption_top.into(),
            caption_bottom: caption_bottom.into(),
            image_ref: None,
        };
        record.validate(0)?;
        Ok(record)
    }

    fn validate(&self, line: usize) -> Result<(), CorpusError> {
        if self.class_name.is_empty() {
            return Err(CorpusError::EmptyClass { line });
        }
        if self.caption_top.trim().is_empty() {
            return Err(CorpusError::EmptyCaption { line });
        }
        if self.id.is_empty() {
            return Err(CorpusError::Malformed {
                line,
                message: "empty id".into(),
            });
        }
        Ok(())
    }

    /// Serializes to the single-line corpus format (no trailing newline).
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serialization is infallible")
    }
}

/// Lowercase, with runs of whitespace and hyphens collapsed to `_`.
pub fn normalize_class_name(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_sep = false;
    for ch in raw.trim().chars() {
        if ch.is_whitespace() || ch == '-' || ch == '_' {
            pending_sep = !out.is_empty();
            continue;
        }
        if pending_sep {
            out.push('_');
            pending_sep = false;
        }
        out.extend(ch.to_lowercase());
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub record_count: usize,
    pub class_count: usize,
    pub per_class_counts: BTreeMap<String, usize>,
}

impl CorpusStats {
    pub fn observe(&mut self, record: &MemeRecord) {
        self.record_count += 1;
        *self
            .per_class_counts
            .entry(record.class_name.clone())
            .or_insert(0) += 1;
        self.class_count = self.per_class_counts.len();
    }

    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a MemeRecord>) -> Self {
        let mut stats = CorpusStats::default();
        for r in records {
            stats.observe(r);
        }
        stats
    }
}

/// Streaming reader over a line-delimited corpus.
///
/// Blank lines are skipped. Line numbers in errors are 1-based.
pub struct CorpusReader<R> {
    lines: io::Lines<R>,
    line_no: usize,
    seen_ids: HashSet<String>,
    stats: CorpusStats,
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(reader: R) -> Self {
        CorpusReader {
            lines: reader.lines(),
            line_no: 0,
            seen_ids: HashSet::new(),
            stats: CorpusStats::default(),
        }
    }

    /// Statistics over the records emitted so far.
    pub fn stats(&self) -> &CorpusStats {
        &self.stats
    }

    fn parse_line(&mut self, line: &str) -> Result<MemeRecord, CorpusError> {
        let line_no = self.line_no;
        let mut record: MemeRecord =
            serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        record.class_name = normalize_class_name(&record.class_name);
        record.validate(line_no)?;
        if !self.seen_ids.insert(record.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                id: record.id,
            });
        }
        self.stats.observe(&record);
        Ok(record)
    }
}

impl CorpusReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| CorpusError::Open {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(CorpusReader::new(BufReader::new(file)))
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<MemeRecord, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let line = match line {
                Ok(l) => l,
                Err(source) => {
                    return Some(Err(CorpusError::Read {
                        line: self.line_no,
                        source,
                    }))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse_line(&line));
        }
    }
}

/// Parses a whole corpus file, stopping at the first bad line.
pub fn parse_corpus(path: impl AsRef<Path>) -> Result<(Vec<MemeRecord>, CorpusStats), CorpusError> {
    let mut reader = CorpusReader::open(path)?;
    let records = reader.by_ref().collect::<Result<Vec<_>, _>>()?;
    Ok((records, reader.stats().clone()))
}

/// Writes records in the corpus line format.
pub fn write_corpus<W: io::Write>(mut out: W, records: &[MemeRecord]) -> io::Result<()> {
    for r in records {
        writeln!(out, "{}", r.to_line())?;
    }
    Ok(())
}

/// Per-class sample sizes for a proportional allocation of `n` records.
///
/// Each class receives either the floor or the ceiling of its exact share.
/// Leftover units go first to classes whose floor is zero, then by largest
/// fractional remainder; ties resolve by class name. Classes still at zero
/// are reported as dropped.
pub fn proportional_allocation(
    per_class: &BTreeMap<String, usize>,
    n: usize,
) -> (BTreeMap<String, usize>, Vec<String>) {
    let total: usize = per_class.values().sum();
    let mut alloc = BTreeMap::new();
    if total == 0 {
        return (alloc, Vec::new());
    }
    // exact share = n * count / total = floor + rem / total
    let mut remainders = Vec::with_capacity(per_class.len());
    let mut assigned = 0usize;
    for (class, &count) in per_class {
        let scaled = n as u128 * count as u128;
        let floor = (scaled / total as u128) as usize;
        let rem = (scaled % total as u128) as usize;
        alloc.insert(class.clone(), floor);
        assigned += floor;
        remainders.push((class.clone(), floor, rem));
    }
    remainders.sort_by(|a, b| {
        let a_zero = a.1 == 0;
        let b_zero = b.1 == 0;
        b_zero
            .cmp(&a_zero)
            .then(b.2.cmp(&a.2))
            .then(a.0.cmp(&b.0))
    });
    let mut leftover = n - assigned;
    for (class, _, rem) in &remainders {
        if leftover == 0 {
            break;
        }
        if *rem == 0 {
            continue;
        }
        *alloc.get_mut(class).unwrap() += 1;
        leftover -= 1;
    }
    debug_assert_eq!(leftover, 0);
    let dropped = alloc
        .iter()
        .filter(|(_, &v)| v == 0)
        .map(|(k, _)| k.clone())
        .collect();
    (alloc, dropped)
}

/// Draws a class-stratified sample of `n` records.
///
/// The result preserves corpus order. Fails when `n` exceeds the corpus or
/// when some class would receive no records.
pub fn stratified_sample(
    records: &[MemeRecord],
    n: usize,
    seed: u64,
) -> Result<Vec<MemeRecord>, CorpusError> {
    if n > records.len() {
        return Err(CorpusError::SampleTooLarge {
            requested: n,
            available: records.len(),
        });
    }
    let mut by_class: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_class.entry(r.class_name.clone()).or_default().push(i);
    }
    let counts = by_class
        .iter()
        .map(|(k, v)| (k.clone(), v.len()))
        .collect();
    let (alloc, dropped) = proportional_allocation(&counts, n);
    if !dropped.is_empty() {
        return Err(CorpusError::StratificationImpossible {
            requested: n,
            dropped,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(n);
    for (class, mut indices) in by_class {
        let take = alloc[&class];
        indices.shuffle(&mut rng);
        picked.extend_from_slice(&indices[..take]);
    }
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| records[i].clone()).collect())
}
