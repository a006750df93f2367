//! Theme discovery: k-means over caption vectors and the class labeling rule.
//!
//! A class takes the theme of its dominant cluster only when strictly more
//! than 90% of its memes fall in that cluster; every other class is `Normie`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::{caption_vector, CaptionVector, EmbeddingError, EmbeddingTable};

#[derive(Debug, Error)]
pub enum ThemeError {
    #[error("no vectors to cluster")]
    NoVectors,
    #[error("vectors have zero dimension")]
    ZeroDimension,
    #[error("vector {index} has dimension {found}, expected {expected}")]
    InconsistentDimension {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("k = {k} but only {distinct} distinct points")]
    TooFewPoints { k: usize, distinct: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("class {0:?} has no memes")]
    EmptyClass(String),
    #[error("unknown theme {0:?}")]
    UnknownTheme(String),
    #[error("theme names: {0}")]
    Names(String),
    #[error("anchor for {theme}: {source}")]
    Anchor {
        theme: Theme,
        source: EmbeddingError,
    },
}

/// The five clustered themes plus the residual `Normie`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Theme {
    Savage,
    Depressing,
    Unexpected,
    Frustrated,
    Wholesome,
    Normie,
}

impl Theme {
    pub const ALL: [Theme; 6] = [
        Theme::Normie,
        Theme::Savage,
        Theme::Depressing,
        Theme::Unexpected,
        Theme::Frustrated,
        Theme::Wholesome,
    ];
    pub const CLUSTERED: [Theme; 5] = [
        Theme::Savage,
        Theme::Depressing,
        Theme::Unexpected,
        Theme::Frustrated,
        Theme::Wholesome,
    ];
    pub const RESIDUAL: Theme = Theme::Normie;

    pub fn name(self) -> &'static str {
        match self {
            Theme::Savage => "Savage",
            Theme::Depressing => "Depressing",
            Theme::Unexpected => "Unexpected",
            Theme::Frustrated => "Frustrated",
            Theme::Wholesome => "Wholesome",
            Theme::Normie => "Normie",
        }
    }
}

impl fmt::Display for Theme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Theme {
    type Err = ThemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Theme::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ThemeError::UnknownTheme(s.to_string()))
    }
}

/// Cluster membership of a single meme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterLabel {
    Cluster(usize),
    Residual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub id: String,
    pub label: ClusterLabel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams {
            k,
            seed,
            max_iters: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f32>>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares after each assignment step.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl KMeansResult {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().unwrap_or(&0.0)
    }
}

fn sq_dist(a: &[f32], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, c)| {
            let d = f64::from(*x) - c;
            d * d
        })
        .sum()
}

fn check_vectors(vectors: &[Vec<f32>]) -> Result<usize, ThemeError> {
    let first = vectors.first().ok_or(ThemeError::NoVectors)?;
    let dim = first.len();
    if dim == 0 {
        return Err(ThemeError::ZeroDimension);
    }
    if let Some((index, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != dim) {
        return Err(ThemeError::InconsistentDimension {
            index,
            expected: dim,
            found: v.len(),
        });
    }
    Ok(dim)
}

fn distinct_count(vectors: &[Vec<f32>]) -> usize {
    vectors
        .iter()
        .map(|v| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
        .collect::<HashSet<_>>()
        .len()
}

/// Nearest centroid; ties go to the lower index.
fn nearest(v: &[f32], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(v, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn seed_centroids(vectors: &[Vec<f32>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let to_f64 = |v: &Vec<f32>| v.iter().map(|&x| f64::from(x)).collect::<Vec<f64>>();
    let mut centroids = vec![to_f64(&vectors[rng.random_range(0..vectors.len())])];
    let mut d2: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            pick = Some(i);
            if target < w {
                break;
            }
            target -= w;
        }
        // distinct_count >= k guarantees some positive weight remains
        let pick = pick.expect("positive D^2 mass while fewer than k centers");
        let c = to_f64(&vectors[pick]);
        for (w, v) in d2.iter_mut().zip(vectors) {
            *w = w.min(sq_dist(v, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's k-means with k-means++ seeding.
///
/// Stops when every centroid moves less than `tol` (Euclidean) or after
/// `max_iters` updates. An emptied cluster keeps its previous centroid.
pub fn kmeans(vectors: &[Vec<f32>], params: &KMeansParams) -> Result<KMeansResult, ThemeError> {
    let dim = check_vectors(vectors)?;
    if params.k == 0 {
        return Err(ThemeError::ZeroK);
    }
    let distinct = distinct_count(vectors);
    if params.k > distinct {
        return Err(ThemeError::TooFewPoints {
            k: params.k,
            distinct,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = seed_centroids(vectors, params.k, &mut rng);
    let mut assignments = vec![0usize; vectors.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    let assign = |centroids: &[Vec<f64>], assignments: &mut [usize]| -> f64 {
        let mut obj = 0.0;
        for (a, v) in assignments.iter_mut().zip(vectors) {
            let (i, d) = nearest(v, centroids);
            *a = i;
            obj += d;
        }
        obj
    };

    while iterations < params.max_iters {
        history.push(assign(&centroids, &mut assignments));
        iterations += 1;

        let mut sums = vec![vec![0f64; dim]; params.k];
        let mut counts = vec![0usize; params.k];
        for (&a, v) in assignments.iter().zip(vectors) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(v) {
                *s += f64::from(*x);
            }
        }
        let mut shift = 0f64;
        for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
            if n == 0 {
                continue;
            }
            let updated: Vec<f64> = s.into_iter().map(|x| x / n as f64).collect();
            let moved = c
                .iter()
                .zip(&updated)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            shift = shift.max(moved);
            *c = updated;
        }
        if shift < params.tol {
            converged = true;
            break;
        }
    }
    history.push(assign(&centroids, &mut assignments));

    Ok(KMeansResult {
        centroids: centroids
            .into_iter()
            .map(|c| c.into_iter().map(|x| x as f32).collect())
            .collect(),
        assignments,
        objective_history: history,
        iterations,
        converged,
    })
}

/// Runs `restarts` seeded k-means runs and keeps the lowest objective.
///
/// Run `i` uses seed `params.seed + i`; the first run with the minimal
/// objective wins.
pub fn kmeans_best_of(
    vectors: &[Vec<f32>],
    params: &KMeansParams,
    restarts: usize,
) -> Result<KMeansResult, ThemeError> {
    let mut best = kmeans(vectors, params)?;
    for i in 1..restarts.max(1) as u64 {
        let run = kmeans(
            vectors,
            &KMeansParams {
                seed: params.seed.wrapping_add(i),
                ..*params
            },
        )?;
        if run.objective() < best.objective() {
            best = run;
        }
    }
    Ok(best)
}

/// Marks points whose distance to their centroid exceeds the given quantile
/// of all such distances as residual.
pub fn flag_residuals(
    vectors: &[Vec<f32>],
    result: &KMeansResult,
    quantile: f64,
) -> Vec<ClusterLabel> {
    let centroids: Vec<Vec<f64>> = result
        .centroids
        .iter()
        .map(|c| c.iter().map(|&x| f64::from(x)).collect())
        .collect();
    let dists: Vec<f64> = vectors
        .iter()
        .zip(&result.assignments)
        .map(|(v, &a)| sq_dist(v, &centroids[a]).sqrt())
        .collect();
    let mut sorted = dists.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rank = ((quantile.clamp(0.0, 1.0) * sorted.len() as f64).ceil() as usize).max(1);
    let threshold = sorted[rank - 1];
    dists
        .iter()
        .zip(&result.assignments)
        .map(|(&d, &a)| {
            if d > threshold {
                ClusterLabel::Residual
            } else {
                ClusterLabel::Cluster(a)
            }
        })
        .collect()
}

/// Dominant cluster of one class and the share of its memes inside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassFraction {
    pub cluster: Option<usize>,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassThemes {
    pub class_to_theme: BTreeMap<String, Theme>,
    pub fractions: BTreeMap<String, ClassFraction>,
}

/// Labels each class with the theme of the cluster holding strictly more
/// than 90% of its memes, or `Normie` otherwise.
///
/// `cluster_themes[i]` is the theme attached to cluster `i`.
pub fn assign_class_themes(
    by_class: &BTreeMap<String, Vec<ClusterLabel>>,
    cluster_themes: &[Theme],
) -> Result<ClassThemes, ThemeError> {
    let mut out = ClassThemes::default();
    for (class, labels) in by_class {
        if labels.is_empty() {
            return Err(ThemeError::EmptyClass(class.clone()));
        }
        let mut counts = vec![0usize; cluster_themes.len()];
        for label in labels {
            if let ClusterLabel::Cluster(i) = label {
                if *i < counts.len() {
                    counts[*i] += 1;
                }
            }
        }
        // lowest index wins ties
        let dominant = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .fold(None::<(usize, usize)>, |best, (i, &c)| match best {
                Some((_, bc)) if bc >= c => best,
                _ => Some((i, c)),
            });
        let total = labels.len();
        let (cluster, hits) = match dominant {
            Some((i, c)) => (Some(i), c),
            None => (None, 0),
        };
        // strictly more than 90%, in exact integer arithmetic
        let theme = match cluster {
            Some(i) if hits * 10 > total * 9 => cluster_themes[i],
            _ => Theme::RESIDUAL,
        };
        out.class_to_theme.insert(class.clone(), theme);
        out.fractions.insert(
            class.clone(),
            ClassFraction {
                cluster,
                fraction: hits as f64 / total as f64,
            },
        );
    }
    Ok(out)
}

/// Class count per theme; every theme is present, possibly with zero.
pub fn theme_summary(class_to_theme: &BTreeMap<String, Theme>) -> BTreeMap<Theme, usize> {
    let mut summary: BTreeMap<Theme, usize> = Theme::ALL.iter().map(|&t| (t, 0)).collect();
    for theme in class_to_theme.values() {
        *summary.get_mut(theme).unwrap() += 1;
    }
    summary
}

/// How a theme name is attached to a cluster.
#[derive(Debug, Clone, PartialEq)]
pub enum NameBinding {
    Index(usize),
    /// Caption whose averaged vector picks the nearest centroid.
    Anchor(String),
}

/// Parses a `Theme = <cluster index | anchor words>` config file.
pub fn parse_theme_names(text: &str) -> Result<Vec<(Theme, NameBinding)>, ThemeError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ThemeError::Names(format!("line {}: expected `Theme = value`", i + 1)))?;
        let theme: Theme = key.trim().parse()?;
        if theme == Theme::RESIDUAL {
            return Err(ThemeError::Names(format!(
                "line {}: {} is the residual theme and cannot name a cluster",
                i + 1,
                theme
            )));
        }
        let value = value.trim();
        let binding = match value.parse::<usize>() {
            Ok(idx) => NameBinding::Index(idx),
            Err(_) if !value.is_empty() => NameBinding::Anchor(value.to_string()),
            Err(_) => {
                return Err(ThemeError::Names(format!("line {}: empty value", i + 1)));
            }
        };
        out.push((theme, binding));
    }
    Ok(out)
}

/// Resolves name bindings to a per-cluster theme list.
///
/// Bindings must cover every cluster exactly once.
pub fn resolve_theme_names(
    bindings: &[(Theme, NameBinding)],
    centroids: &[Vec<f32>],
    table: Option<&EmbeddingTable>,
) -> Result<Vec<Theme>, ThemeError> {
    let k = centroids.len();
    if bindings.len() != k {
        return Err(ThemeError::Names(format!(
            "{} names for {} clusters",
            bindings.len(),
            k
        )));
    }
    let c64: Vec<Vec<f64>> = centroids
        .iter()
        .map(|c| c.iter().map(|&x| f64::from(x)).collect())
        .collect();
    let mut slots: Vec<Option<Theme>> = vec![None; k];
    let mut used = HashSet::new();
    for (theme, binding) in bindings {
        if !used.insert(*theme) {
            return Err(ThemeError::Names(format!("{theme} named twice")));
        }
        let idx = match binding {
            NameBinding::Index(i) => *i,
            NameBinding::Anchor(words) => {
                let table = table.ok_or_else(|| {
                    ThemeError::Names(format!("{theme} uses an anchor but no embedding table was given"))
                })?;
                let v = caption_vector(words, table).map_err(|source| ThemeError::Anchor {
                    theme: *theme,
                    source,
                })?;
                if v.len() != c64.first().map_or(0, Vec::len) {
                    return Err(ThemeError::Names(format!("{theme} anchor has the wrong dimension")));
                }
                nearest(&v, &c64).0
            }
        };
        if idx >= k {
            return Err(ThemeError::Names(format!("{theme} bound to cluster {idx} >= k = {k}")));
        }
        if let Some(prev) = slots[idx] {
            return Err(ThemeError::Names(format!(
                "{theme} and {prev} both bound to cluster {idx}"
            )));
        }
        slots[idx] = Some(*theme);
    }
    Ok(slots.into_iter().map(|t| t.expect("bijection checked")).collect())
}

/// Centroids, cluster names and the class labeling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThemeModel {
    pub k: usize,
    pub centroids: Vec<Vec<f32>>,
    pub theme_names: Vec<Theme>,
    pub residual_name: Theme,
    pub class_to_theme: BTreeMap<String, Theme>,
    pub assignment_fractions: BTreeMap<String, ClassFraction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assignments: Vec<ClusterAssignment>,
}

impl ThemeModel {
    /// Builds a model from per-meme labels grouped by class.
    pub fn from_labels(
        centroids: Vec<Vec<f32>>,
        theme_names: Vec<Theme>,
        by_class: &BTreeMap<String, Vec<ClusterLabel>>,
    ) -> Result<Self, ThemeError> {
        if theme_names.len() != centroids.len() {
            return Err(ThemeError::Names(format!(
                "{} names for {} clusters",
                theme_names.len(),
                centroids.len()
            )));
        }
        let labeled = assign_class_themes(by_class, &theme_names)?;
        Ok(ThemeModel {
            k: centroids.len(),
            centroids,
            theme_names,
            residual_name: Theme::RESIDUAL,
            class_to_theme: labeled.class_to_theme,
            assignment_fractions: labeled.fractions,
            assignments: Vec::new(),
        })
    }

    /// A model carrying only a class labeling, with no geometry.
    pub fn from_class_map(class_to_theme: BTreeMap<String, Theme>) -> Self {
        ThemeModel {
            k: 0,
            centroids: Vec::new(),
            theme_names: Vec::new(),
            residual_name: Theme::RESIDUAL,
            assignment_fractions: BTreeMap::new(),
            class_to_theme,
            assignments: Vec::new(),
        }
    }

    pub fn theme_of(&self, class: &str) -> Option<Theme> {
        self.class_to_theme.get(class).copied()
    }

    pub fn summary(&self) -> BTreeMap<Theme, usize> {
        theme_summary(&self.class_to_theme)
    }

    /// Non-empty themes and their sorted classes, ordered by theme name.
    pub fn themes_with_classes(&self) -> Vec<(Theme, Vec<String>)> {
        let mut grouped: BTreeMap<&'static str, (Theme, Vec<String>)> = BTreeMap::new();
        for (class, theme) in &self.class_to_theme {
            grouped
                .entry(theme.name())
                .or_insert_with(|| (*theme, Vec::new()))
                .1
                .push(class.clone());
        }
        grouped
            .into_values()
            .map(|(t, mut classes)| {
                classes.sort();
                (t, classes)
            })
            .collect()
    }
}

/// Settings for [`fit_theme_model`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitParams {
    pub kmeans: KMeansParams,
    /// Seeded k-means runs; the lowest objective wins.
    pub restarts: usize,
    /// When set, points beyond this quantile of centroid distances are residual.
    pub residual_quantile: Option<f64>,
}

impl FitParams {
    pub fn new(k: usize, seed: u64) -> Self {
        FitParams {
            kmeans: KMeansParams::new(k, seed),
            restarts: 10,
            residual_quantile: None,
        }
    }
}

/// Clusters caption vectors, names the clusters and labels every class.
pub fn fit_theme_model(
    points: &[CaptionVector],
    params: &FitParams,
    bindings: &[(Theme, NameBinding)],
    table: Option<&EmbeddingTable>,
) -> Result<ThemeModel, ThemeError> {
    let vectors: Vec<Vec<f32>> = points.iter().map(|p| p.vector.clone()).collect();
    let result = kmeans_best_of(&vectors, &params.kmeans, params.restarts)?;
    let labels: Vec<ClusterLabel> = match params.residual_quantile {
        Some(q) => flag_residuals(&vectors, &result, q),
        None => result.assignments.iter().map(|&a| ClusterLabel::Cluster(a)).collect(),
    };
    let names = resolve_theme_names(bindings, &result.centroids, table)?;
    let mut by_class: BTreeMap<String, Vec<ClusterLabel>> = BTreeMap::new();
    for (p, label) in points.iter().zip(&labels) {
        by_class.entry(p.class_name.clone()).or_default().push(*label);
    }
    let mut model = ThemeModel::from_labels(result.centroids, names, &by_class)?;
    model.assignments = points
        .iter()
        .zip(labels)
        .map(|(p, label)| ClusterAssignment {
            id: p.id.clone(),
            label,
        })
        .collect();
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(spec: &[(usize, usize)]) -> Vec<ClusterLabel> {
        spec.iter()
            .flat_map(|&(c, n)| std::iter::repeat_n(ClusterLabel::Cluster(c), n))
            .collect()
    }

    #[test]
    fn ninety_percent_rule() {
        let names = [Theme::Savage, Theme::Wholesome];
        let mut by_class = BTreeMap::new();
        by_class.insert("a".to_string(), labels(&[(0, 95), (1, 5)]));
        by_class.insert("b".to_string(), labels(&[(0, 60), (1, 40)]));
        by_class.insert("c".to_string(), labels(&[(1, 90), (0, 10)]));
        by_class.insert("d".to_string(), labels(&[(1, 91), (0, 9)]));
        let out = assign_class_themes(&by_class, &names).unwrap();
        assert_eq!(out.class_to_theme["a"], Theme::Savage);
        assert_eq!(out.class_to_theme["b"], Theme::Normie);
        assert_eq!(out.class_to_theme["c"], Theme::Normie);
        assert_eq!(out.class_to_theme["d"], Theme::Wholesome);
        assert!((out.fractions["a"].fraction - 0.95).abs() < 1e-12);
        assert_eq!(out.fractions["c"].cluster, Some(1));
    }

    #[test]
    fn residual_labels_count_against_purity() {
        let mut by_class = BTreeMap::new();
        let mut l = labels(&[(0, 9)]);
        l.push(ClusterLabel::Residual);
        by_class.insert("x".to_string(), l);
        let out = assign_class_themes(&by_class, &[Theme::Savage]).unwrap();
        assert_eq!(out.class_to_theme["x"], Theme::Normie);
    }

    #[test]
    fn empty_class_is_error() {
        let mut by_class = BTreeMap::new();
        by_class.insert("x".to_string(), Vec::new());
        assert!(matches!(
            assign_class_themes(&by_class, &[Theme::Savage]),
            Err(ThemeError::EmptyClass(_))
        ));
    }

    #[test]
    fn summary_of_many_classes() {
        let counts = [
            (Theme::Normie, 44),
            (Theme::Savage, 22),
            (Theme::Depressing, 18),
            (Theme::Unexpected, 20),
            (Theme::Frustrated, 14),
            (Theme::Wholesome, 10),
        ];
        let mut map = BTreeMap::new();
        for (theme, n) in counts {
            for i in 0..n {
                map.insert(format!("{}_{i}", theme.name().to_lowercase()), theme);
            }
        }
        let s = theme_summary(&map);
        for (theme, n) in counts {
            assert_eq!(s[&theme], n);
        }
        assert_eq!(s.values().sum::<usize>(), 128);
        assert!(theme_summary(&BTreeMap::new()).values().all(|&v| v == 0));
    }

    #[test]
    fn kmeans_recovers_repeated_locations() {
        let locs = [[0.0f32, 0.0], [5.0, 1.0], [-3.0, 7.0]];
        let mut pts = Vec::new();
        for l in &locs {
            for _ in 0..4 {
                pts.push(l.to_vec());
            }
        }
        let r = kmeans(&pts, &KMeansParams::new(3, 17)).unwrap();
        let mut got = r.centroids.clone();
        got.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let mut want: Vec<Vec<f32>> = locs.iter().map(|l| l.to_vec()).collect();
        want.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(got, want);
        assert!(r.converged);
    }

    #[test]
    fn kmeans_errors() {
        assert!(matches!(kmeans(&[], &KMeansParams::new(1, 0)), Err(ThemeError::NoVectors)));
        assert!(matches!(
            kmeans(&[vec![], vec![]], &KMeansParams::new(1, 0)),
            Err(ThemeError::ZeroDimension)
        ));
        assert!(matches!(
            kmeans(&[vec![1.0], vec![1.0], vec![2.0]], &KMeansParams::new(3, 0)),
            Err(ThemeError::TooFewPoints { k: 3, distinct: 2 })
        ));
        assert!(matches!(
            kmeans(&[vec![1.0], vec![1.0, 2.0]], &KMeansParams::new(1, 0)),
            Err(ThemeError::InconsistentDimension { index: 1, .. })
        ));
    }

    #[test]
    fn residual_quantile_flags_outliers() {
        let mut pts: Vec<Vec<f32>> = (0..9).map(|i| vec![i as f32 * 0.01]).collect();
        pts.push(vec![10.0]);
        let r = kmeans(&pts, &KMeansParams::new(1, 0)).unwrap();
        let flagged = flag_residuals(&pts, &r, 0.9);
        assert_eq!(flagged[9], ClusterLabel::Residual);
        assert!(flagged[..9].iter().all(|l| *l == ClusterLabel::Cluster(0)));
    }

    #[test]
    fn names_config_parses_and_resolves() {
        let text = "# names\nSavage = 1\nWholesome = hug puppy\n";
        let bindings = parse_theme_names(text).unwrap();
        assert_eq!(bindings[0], (Theme::Savage, NameBinding::Index(1)));
        let mut table = EmbeddingTable::new(2);
        table.insert("hug", vec![0.0, 1.0]);
        table.insert("puppy", vec![0.2, 0.8]);
        let centroids = vec![vec![0.1, 0.9], vec![1.0, 0.0]];
        let names = resolve_theme_names(&bindings, &centroids, Some(&table)).unwrap();
        assert_eq!(names, vec![Theme::Wholesome, Theme::Savage]);

        let clash = parse_theme_names("Savage = 0\nWholesome = 0\n").unwrap();
        assert!(resolve_theme_names(&clash, &centroids, None).is_err());
        assert!(parse_theme_names("Normie = 0").is_err());
        assert!(parse_theme_names("Silly = 0").is_err());
    }

    #[test]
    fn themes_with_classes_is_sorted_and_skips_empty() {
        let mut map = BTreeMap::new();
        map.insert("zeta".to_string(), Theme::Savage);
        map.insert("alpha".to_string(), Theme::Savage);
        map.insert("mid".to_string(), Theme::Depressing);
        let model = ThemeModel::from_class_map(map);
        let listed = model.themes_with_classes();
        assert_eq!(listed.len(), 2);
        assert_eq!(listed[0].0, Theme::Depressing);
        assert_eq!(listed[1], (Theme::Savage, vec!["alpha".into(), "zeta".into()]));
    }

    proptest! {
        #[test]
        fn kmeans_objective_never_increases(
            pts in proptest::collection::vec(proptest::collection::vec(-10.0f32..10.0, 3), 6..40),
            k in 1usize..5,
            seed in 0u64..1000,
        ) {
            prop_assume!(distinct_count(&pts) >= k);
            let r = kmeans(&pts, &KMeansParams { k, seed, max_iters: 50, tol: 1e-9 }).unwrap();
            for w in r.objective_history.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-9);
            }
            let again = kmeans(&pts, &KMeansParams { k, seed, max_iters: 50, tol: 1e-9 }).unwrap();
            prop_assert_eq!(r.assignments, again.assignments);
        }

        #[test]
        fn class_labeling_partitions_classes(
            classes in proptest::collection::btree_map("[a-z]{1,6}", proptest::collection::vec(0usize..4, 1..30), 0..12),
        ) {
            let by_class: BTreeMap<String, Vec<ClusterLabel>> = classes
                .into_iter()
                .map(|(c, l)| (c, l.into_iter().map(ClusterLabel::Cluster).collect()))
                .collect();
            let names = [Theme::Savage, Theme::Depressing, Theme::Unexpected, Theme::Frustrated];
            let out = assign_class_themes(&by_class, &names).unwrap();
            prop_assert_eq!(out.class_to_theme.len(), by_class.len());
            prop_assert!(by_class.keys().all(|c| out.class_to_theme.contains_key(c)));
            prop_assert_eq!(theme_summary(&out.class_to_theme).values().sum::<usize>(), by_class.len());
            for (c, theme) in &out.class_to_theme {
                if *theme != Theme::Normie {
                    prop_assert!(out.fractions[c].fraction > 0.9);
                }
            }
        }
    }
}
