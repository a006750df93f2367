//! Deterministic synthetic corpora with planted themes, for demos and tests.
//!
//! Each clustered theme owns a small vocabulary whose embedding vectors sit
//! tightly around a random direction. Residual vocabulary is split evenly
//! across those directions. A class drawing all its captions from one
//! themed vocabulary lands in one cluster, while a class diluted with
//! captions from other themes, or built from residual words, does not.

use std::collections::BTreeMap;

use image::{Rgb, RgbImage};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::corpus::MemeRecord;
use crate::embeddings::EmbeddingTable;
use crate::themes::Theme;

/// Spread of themed word vectors around their theme direction.
const WORD_NOISE: f64 = 0.3;

pub fn theme_words(theme: Theme) -> &'static [&'static str] {
    match theme {
        Theme::Savage => &[
            "roasted", "burn", "destroyed", "clapback", "shade", "rekt", "owned", "savage", "mic",
            "drop", "receipts", "petty",
        ],
        Theme::Depressing => &[
            "alone", "monday", "tired", "rain", "empty", "sad", "crying", "nobody", "lonely",
            "broke", "again", "gray",
        ],
        Theme::Unexpected => &[
            "plot", "twist", "suddenly", "surprise", "wait", "actually", "reveal", "shocked",
            "turns", "out", "whoa", "bamboozled",
        ],
        Theme::Frustrated => &[
            "why", "wifi", "slow", "printer", "buffering", "traffic", "stuck", "loading", "error",
            "jammed", "lag", "rage",
        ],
        Theme::Wholesome => &[
            "friend", "hug", "kind", "puppy", "grandma", "smile", "thanks", "proud", "sunshine",
            "cookies", "helped", "cheer",
        ],
        Theme::Normie => &[
            "brace", "yourselves", "coming", "winter", "not", "sure", "if", "smart", "just",
            "british", "one", "does", "simply", "memes",
        ],
    }
}

/// One class of a planted corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedClass {
    pub name: String,
    pub theme: Theme,
    /// Share of captions drawn from the theme's own vocabulary; the rest
    /// rotate through the other clustered themes. Ignored for `Normie`.
    pub purity: f64,
    pub size: usize,
}

impl PlantedClass {
    pub fn new(name: &str, theme: Theme, purity: f64, size: usize) -> Self {
        PlantedClass {
            name: name.to_string(),
            theme,
            purity,
            size,
        }
    }

    /// Theme the strictly-more-than-90% rule must give this class.
    pub fn expected_theme(&self) -> Theme {
        if self.theme != Theme::RESIDUAL && self.pure_count() * 10 > self.size * 9 {
            self.theme
        } else {
            Theme::RESIDUAL
        }
    }

    fn pure_count(&self) -> usize {
        (self.purity.clamp(0.0, 1.0) * self.size as f64).round() as usize
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub records: Vec<MemeRecord>,
    pub table: EmbeddingTable,
    pub expected: BTreeMap<String, Theme>,
    /// Theme names config binding each clustered theme by anchor words.
    pub names_config: String,
}

/// The six-class demo corpus: one pure class per theme.
pub fn sample_classes(size: usize) -> Vec<PlantedClass> {
    [
        ("roast_master", Theme::Savage),
        ("sad_keanu", Theme::Depressing),
        ("plot_twist_pete", Theme::Unexpected),
        ("angry_printer", Theme::Frustrated),
        ("good_guy_greg", Theme::Wholesome),
        ("imminent_ned", Theme::Normie),
    ]
    .into_iter()
    .map(|(name, theme)| PlantedClass::new(name, theme, 1.0, size))
    .collect()
}

/// Twelve classes, two per theme; one class of each clustered theme is
/// diluted to `diluted_purity`.
pub fn paired_classes(size: usize, diluted_purity: f64) -> Vec<PlantedClass> {
    let mut out = Vec::new();
    for theme in Theme::ALL {
        let base = theme.name().to_lowercase();
        if theme == Theme::RESIDUAL {
            out.push(PlantedClass::new(&format!("{base}_a"), theme, 1.0, size));
            out.push(PlantedClass::new(&format!("{base}_b"), theme, 1.0, size));
        } else {
            out.push(PlantedClass::new(&format!("{base}_pure"), theme, 1.0, size));
            out.push(PlantedClass::new(&format!("{base}_diluted"), theme, diluted_purity, size));
        }
    }
    out
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn gaussian(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Embedding table over every theme vocabulary.
///
/// Residual word `j` sits near the direction of clustered theme `j mod 5`,
/// so residual captions spread evenly over the clusters.
pub fn planted_table(dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = EmbeddingTable::new(dim);
    let scale = WORD_NOISE / (dim as f64).sqrt();
    let centers: Vec<Vec<f64>> = Theme::CLUSTERED
        .iter()
        .map(|_| unit(gaussian(dim, &mut rng)))
        .collect();
    for theme in Theme::ALL {
        let own = Theme::CLUSTERED.iter().position(|t| *t == theme);
        for (j, word) in theme_words(theme).iter().enumerate() {
            let center = &centers[own.unwrap_or(j % centers.len())];
            let v: Vec<f32> = center
                .iter()
                .zip(gaussian(dim, &mut rng))
                .map(|(c, n)| (c + scale * n) as f32)
                .collect();
            table.insert(word, v);
        }
    }
    table
}

/// Words a caption of `theme` may use; residual captions use one group.
fn caption_words(theme: Theme, group: usize) -> Vec<&'static str> {
    let words = theme_words(theme);
    if theme != Theme::RESIDUAL {
        return words.to_vec();
    }
    let groups = Theme::CLUSTERED.len();
    words
        .iter()
        .enumerate()
        .filter(|(j, _)| j % groups == group % groups)
        .map(|(_, w)| *w)
        .collect()
}

fn caption_part(words: &[&str], rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(2..=4);
    (0..n)
        .map(|_| *words.choose(rng).expect("non-empty vocabulary"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Builds the corpus, its embedding table and the expected labeling.
pub fn plant(classes: &[PlantedClass], dim: usize, seed: u64) -> PlantedCorpus {
    let table = planted_table(dim, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
    let mut records = Vec::new();
    let mut expected = BTreeMap::new();
    for class in classes {
        let others: Vec<Theme> = Theme::CLUSTERED
            .into_iter()
            .filter(|t| *t != class.theme)
            .collect();
        let pure = class.pure_count();
        for i in 0..class.size {
            let theme = if class.theme == Theme::RESIDUAL || i < pure {
                class.theme
            } else {
                others[(i - pure) % others.len()]
            };
            let words = caption_words(theme, i);
            let top = caption_part(&words, &mut rng);
            let bottom = caption_part(&words, &mut rng);
            let record = MemeRecord::new(format!("{}-{i:04}", class.name), &class.name, top, bottom)
                .expect("synthetic records are valid");
            records.push(record);
        }
        expected.insert(class.name.clone(), class.expected_theme());
    }
    let names_config = Theme::CLUSTERED
        .iter()
        .map(|t| format!("{t} = {}\n", theme_words(*t)[..4].join(" ")))
        .collect();
    PlantedCorpus {
        records,
        table,
        expected,
        names_config,
    }
}

/// A distinct, deterministic picture for `class`: a two-color gradient with
/// class-specific stripes.
pub fn class_image(class: &str, width: u32, height: u32) -> RgbImage {
    let h = Sha256::digest(class.as_bytes());
    let a = [h[0], h[1], h[2]];
    let b = [h[3], h[4], h[5]];
    let period = 6 + u32::from(h[6] % 24);
    let diagonal = h[7] % 2 == 1;
    RgbImage::from_fn(width, height, |x, y| {
        let t = x as f32 / width.max(1) as f32;
        let stripe = if diagonal { (x + y) / period } else { y / period } % 2 == 0;
        let mut px = [0u8; 3];
        for c in 0..3 {
            let v = f32::from(a[c]) * (1.0 - t) + f32::from(b[c]) * t;
            px[c] = if stripe { v as u8 } else { 255 - v as u8 };
        }
        Rgb(px)
    })
}
