//! Evaluation arithmetic for the user studies: confusion-matrix metrics,
//! rating summaries and theme-recovery accuracy.
//!
//! In the differentiation study the positive class is "original meme", so a
//! generated meme judged original is a false positive.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::themes::Theme;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("confusion matrix is all zero")]
    EmptyMatrix,
    #[error("no negatives (fp + tn = 0)")]
    NoNegatives,
    #[error("no integer matrix within {tolerance} of the given metrics (best deviation {best})")]
    Inconsistent { tolerance: f64, best: f64 },
    #[error("{count} integer matrices fit the metrics equally well")]
    Ambiguous { count: usize },
    #[error("theme {0} has no samples")]
    EmptyTheme(Theme),
    #[error("rating {rating} for {theme} is outside 1..=5")]
    RatingOutOfRange { theme: Theme, rating: u8 },
    #[error("csv: {0}")]
    Csv(String),
}

/// Rounds half up at `decimals` places, absorbing binary representation
/// error in the last few ulps (so 85.45 rounds to 85.5).
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let scaled = x * scale;
    (scaled + 0.5 + scaled.abs() * 1e-12).floor() / scale
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fn_, fp, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    /// Parses `tp,fn,fp,tn`.
    pub fn parse(s: &str) -> Result<Self, EvalError> {
        let parts = s
            .split(',')
            .map(|p| p.trim().parse::<u64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| EvalError::Csv(format!("bad matrix {s:?}: {e}")))?;
        match parts.as_slice() {
            [tp, fn_, fp, tn] => Ok(ConfusionMatrix::new(*tp, *fn_, *fp, *tn)),
            _ => Err(EvalError::Csv(format!("expected tp,fn,fp,tn, got {s:?}"))),
        }
    }

    fn raw(&self) -> RawMetrics {
        let ratio = |num: u64, den: u64| (den > 0).then(|| 100.0 * num as f64 / den as f64);
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let accuracy = 100.0 * (self.tp + self.tn) as f64 / self.total() as f64;
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        RawMetrics {
            precision,
            recall,
            accuracy,
            f1,
        }
    }
}

struct RawMetrics {
    precision: Option<f64>,
    recall: Option<f64>,
    accuracy: f64,
    f1: Option<f64>,
}

/// Percentages rounded half-up to two decimals; `None` when undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub accuracy: f64,
    pub f1: Option<f64>,
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let raw = cm.raw();
    let r2 = |x: f64| round_half_up(x, 2);
    Ok(Metrics {
        precision: raw.precision.map(r2),
        recall: raw.recall.map(r2),
        accuracy: r2(raw.accuracy),
        f1: raw.f1.map(r2),
    })
}

/// Share of negatives (generated memes) judged positive (original), in percent.
pub fn misclassification_rate(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    let negatives = cm.fp + cm.tn;
    if negatives == 0 {
        return Err(EvalError::NoNegatives);
    }
    Ok(round_half_up(100.0 * cm.fp as f64 / negatives as f64, 2))
}

pub const RECONSTRUCT_TOLERANCE: f64 = 0.01;

/// Finds the integer matrix with `n_pos` positives and `n_neg` negatives
/// whose precision, recall and accuracy best match the given percentages.
///
/// Searches every `(tp, fp)`; the winner minimizes the largest absolute
/// deviation and must be unique and within [`RECONSTRUCT_TOLERANCE`].
pub fn reconstruct_matrix(
    precision: f64,
    recall: f64,
    accuracy: f64,
    n_pos: u64,
    n_neg: u64,
) -> Result<ConfusionMatrix, EvalError> {
    if n_pos + n_neg == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let mut best = f64::INFINITY;
    let mut winners: Vec<ConfusionMatrix> = Vec::new();
    for tp in 0..=n_pos {
        for fp in 0..=n_neg {
            let cm = ConfusionMatrix::new(tp, n_pos - tp, fp, n_neg - fp);
            let raw = cm.raw();
            let dev = match (raw.precision, raw.recall) {
                (Some(p), Some(r)) => (p - precision)
                    .abs()
                    .max((r - recall).abs())
                    .max((raw.accuracy - accuracy).abs()),
                _ => continue,
            };
            if dev < best - 1e-12 {
                best = dev;
                winners.clear();
                winners.push(cm);
            } else if (dev - best).abs() <= 1e-12 {
                winners.push(cm);
            }
        }
    }
    if best > RECONSTRUCT_TOLERANCE {
        return Err(EvalError::Inconsistent {
            tolerance: RECONSTRUCT_TOLERANCE,
            best,
        });
    }
    match winners.as_slice() {
        [only] => Ok(*only),
        _ => Err(EvalError::Ambiguous {
            count: winners.len(),
        }),
    }
}

/// Which memes a rating refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Original,
    Ours,
    Baseline,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Original, Condition::Ours, Condition::Baseline];
}

impl std::str::FromStr for Condition {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "original" | "aro" => Ok(Condition::Original),
            "ours" | "generated" | "arg" => Ok(Condition::Ours),
            "baseline" | "arb" => Ok(Condition::Baseline),
            other => Err(EvalError::Csv(format!("unknown condition {other:?}"))),
        }
    }
}

/// Integer ratings in 1..=5 per theme and condition.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RatingTable {
    ratings: BTreeMap<Theme, BTreeMap<Condition, Vec<u8>>>,
}

impl RatingTable {
    pub fn add(&mut self, theme: Theme, condition: Condition, rating: u8) -> Result<(), EvalError> {
        if !(1..=5).contains(&rating) {
            return Err(EvalError::RatingOutOfRange { theme, rating });
        }
        self.ratings
            .entry(theme)
            .or_default()
            .entry(condition)
            .or_default()
            .push(rating);
        Ok(())
    }

    /// Reads a `theme,condition,rating` CSV with a header row.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, EvalError> {
        let mut table = RatingTable::default();
        for row in csv_rows(reader, &["theme", "condition", "rating"])? {
            let theme: Theme = row[0].parse().map_err(|e| EvalError::Csv(format!("{e}")))?;
            let condition: Condition = row[1].parse()?;
            let rating: u8 = row[2]
                .trim()
                .parse()
                .map_err(|_| EvalError::Csv(format!("bad rating {:?}", row[2])))?;
            table.add(theme, condition, rating)?;
        }
        Ok(table)
    }
}

fn csv_rows<R: Read>(reader: R, header: &[&str]) -> Result<Vec<Vec<String>>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let found: Vec<String> = rdr
        .headers()
        .map_err(|e| EvalError::Csv(e.to_string()))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    if found != header {
        return Err(EvalError::Csv(format!("expected header {header:?}, got {found:?}")));
    }
    rdr.records()
        .map(|r| {
            r.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(|e| EvalError::Csv(e.to_string()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSummary {
    /// Per theme, per condition mean (2 decimals).
    pub per_theme: BTreeMap<Theme, BTreeMap<Condition, f64>>,
    /// Mean of the per-theme means, per condition (2 decimals).
    pub overall: BTreeMap<Condition, f64>,
}

/// Unrounded mean of per-group means.
pub fn mean_of_means(means: &[f64]) -> f64 {
    means.iter().sum::<f64>() / means.len() as f64
}

/// Overall rating from per-theme means, two decimals.
pub fn overall_rating(per_theme_means: &[f64]) -> f64 {
    round_half_up(mean_of_means(per_theme_means), 2)
}

/// Overall recovery accuracy from per-theme accuracies, one decimal.
pub fn overall_recovery(per_theme_accuracies: &[f64]) -> f64 {
    round_half_up(mean_of_means(per_theme_accuracies), 1)
}

/// Every theme in the table needs at least one rating for every condition
/// that appears anywhere in the table.
pub fn rating_summary(table: &RatingTable) -> Result<RatingSummary, EvalError> {
    let conditions: Vec<Condition> = Condition::ALL
        .into_iter()
        .filter(|c| table.ratings.values().any(|m| m.contains_key(c)))
        .collect();
    let mut per_theme = BTreeMap::new();
    let mut raw_means: BTreeMap<Condition, Vec<f64>> = BTreeMap::new();
    for (&theme, by_cond) in &table.ratings {
        let mut row = BTreeMap::new();
        for &c in &conditions {
            let r = by_cond
                .get(&c)
                .filter(|v| !v.is_empty())
                .ok_or(EvalError::EmptyTheme(theme))?;
            let mean = r.iter().map(|&x| f64::from(x)).sum::<f64>() / r.len() as f64;
            raw_means.entry(c).or_default().push(mean);
            row.insert(c, round_half_up(mean, 2));
        }
        per_theme.insert(theme, row);
    }
    let overall = raw_means
        .into_iter()
        .map(|(c, means)| (c, overall_rating(&means)))
        .collect();
    Ok(RatingSummary { per_theme, overall })
}

/// `(true theme, predicted theme)` judgments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ThemeRecoveryData {
    pub pairs: Vec<(Theme, Theme)>,
}

impl ThemeRecoveryData {
    /// Reads a `true_theme,predicted_theme` CSV with a header row.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, EvalError> {
        let pairs = csv_rows(reader, &["true_theme", "predicted_theme"])?
            .into_iter()
            .map(|row| {
                let parse = |s: &str| s.parse::<Theme>().map_err(|e| EvalError::Csv(e.to_string()));
                Ok((parse(&row[0])?, parse(&row[1])?))
            })
            .collect::<Result<_, EvalError>>()?;
        Ok(ThemeRecoveryData { pairs })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    /// Percent correct per true theme (1 decimal).
    pub per_theme: BTreeMap<Theme, f64>,
    /// Unweighted mean of the per-theme accuracies (1 decimal).
    pub overall: f64,
}

/// Every one of the six themes must have at least one sample.
pub fn theme_recovery(data: &ThemeRecoveryData) -> Result<RecoverySummary, EvalError> {
    let mut counts: BTreeMap<Theme, (u64, u64)> = BTreeMap::new();
    for &(truth, predicted) in &data.pairs {
        let e = counts.entry(truth).or_insert((0, 0));
        e.1 += 1;
        if truth == predicted {
            e.0 += 1;
        }
    }
    let mut raw = Vec::with_capacity(Theme::ALL.len());
    let mut per_theme = BTreeMap::new();
    for theme in Theme::ALL {
        let &(correct, total) = counts
            .get(&theme)
            .filter(|(_, t)| *t > 0)
            .ok_or(EvalError::EmptyTheme(theme))?;
        let acc = 100.0 * correct as f64 / total as f64;
        raw.push(acc);
        per_theme.insert(theme, round_half_up(acc, 1));
    }
    Ok(RecoverySummary {
        per_theme,
        overall: overall_recovery(&raw),
    })
}
