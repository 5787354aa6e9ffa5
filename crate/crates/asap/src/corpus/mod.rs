//! Data model, file I/O, curation filters, splits, and statistics for
//! ASAP-style review corpora.

mod curation;
mod io;
mod stats;
pub mod synthetic;

pub use curation::{curate, curate_with_quality, CurationConfig, CurationReport};
pub use io::{read_csv, read_raw_records, write_csv, RawRecord, NOT_MENTIONED_SENTINEL};
pub use stats::{compute_stats, CorpusStats};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed rating {value:?} in record {id:?}: stars must be integers 1..=5")]
    MalformedRating { id: String, value: String },
    #[error("unknown polarity {value:?} for aspect {aspect:?} in record {id:?}")]
    UnknownPolarity {
        id: String,
        aspect: String,
        value: String,
    },
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("duplicate review id {0:?}")]
    DuplicateId(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("bad split ratios {0:?}: must be positive and sum to 1")]
    BadRatios([f64; 3]),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Sentiment polarity toward a mentioned aspect category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Negative,
    Neutral,
    Positive,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Negative, Polarity::Neutral, Polarity::Positive];

    /// Canonical numeric code: -1 / 0 / +1.
    pub fn code(self) -> i8 {
        match self {
            Polarity::Negative => -1,
            Polarity::Neutral => 0,
            Polarity::Positive => 1,
        }
    }

    pub fn from_code(code: i8) -> Option<Polarity> {
        match code {
            -1 => Some(Polarity::Negative),
            0 => Some(Polarity::Neutral),
            1 => Some(Polarity::Positive),
            _ => None,
        }
    }

    /// Class index used by the classification heads and metrics:
    /// Negative -> 0, Neutral -> 1, Positive -> 2.
    pub fn class_index(self) -> usize {
        match self {
            Polarity::Negative => 0,
            Polarity::Neutral => 1,
            Polarity::Positive => 2,
        }
    }

    pub fn from_class_index(idx: usize) -> Option<Polarity> {
        match idx {
            0 => Some(Polarity::Negative),
            1 => Some(Polarity::Neutral),
            2 => Some(Polarity::Positive),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Polarity::Negative => "Negative",
            Polarity::Neutral => "Neutral",
            Polarity::Positive => "Positive",
        }
    }
}

/// One entry of the aspect taxonomy: a coarse#fine category name plus a
/// human-readable definition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectEntry {
    pub name: String,
    pub definition: String,
}

/// Ordered list of aspect categories. The default taxonomy is the fixed
/// 18-entry restaurant taxonomy; custom taxonomies are allowed for tests
/// and other domains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectTaxonomy {
    entries: Vec<AspectEntry>,
}

const DEFAULT_TAXONOMY: [(&str, &str); 18] = [
    ("Location#Transportation", "Convenient public transportation to the restaurant"),
    ("Location#Downtown", "Whether the restaurant is located near downtown"),
    ("Location#Easy_to_find", "Whether the restaurant is easy to find"),
    ("Service#Queue", "Whether the queue time is acceptable"),
    ("Service#Hospitality", "Waiters/waitresses' attitude/hospitality"),
    ("Service#Parking", "Parking convenience"),
    ("Service#Timely", "Order/Serving time"),
    ("Price#Level", "Price level"),
    ("Price#Cost_effective", "Whether the restaurant is cost-effective"),
    ("Price#Discount", "Discount strength"),
    ("Ambience#Decoration", "Decoration level"),
    ("Ambience#Noise", "Whether the restaurant is noisy"),
    ("Ambience#Space", "Dining space and seat size"),
    ("Ambience#Sanitary", "Sanitary condition"),
    ("Food#Portion", "Food portion"),
    ("Food#Taste", "Food taste"),
    ("Food#Appearance", "Food appearance"),
    ("Food#Recommend", "Whether the food is worth being recommended"),
];

impl AspectTaxonomy {
    /// The fixed 18-category restaurant taxonomy, in corpus column order.
    pub fn default_restaurant() -> Self {
        AspectTaxonomy {
            entries: DEFAULT_TAXONOMY
                .iter()
                .map(|(name, def)| AspectEntry {
                    name: (*name).to_string(),
                    definition: (*def).to_string(),
                })
                .collect(),
        }
    }

    /// Build a custom taxonomy. Panics on duplicate names or an empty list.
    pub fn new(entries: Vec<AspectEntry>) -> Self {
        assert!(!entries.is_empty(), "taxonomy must have at least one entry");
        let mut seen = std::collections::HashSet::new();
        for e in &entries {
            assert!(seen.insert(e.name.clone()), "duplicate aspect name {:?}", e.name);
        }
        AspectTaxonomy { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[AspectEntry] {
        &self.entries
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    /// Fingerprint used to reject checkpoints trained on a different
    /// taxonomy: the count plus the ordered names.
    pub fn fingerprint(&self) -> String {
        format!("{}:{}", self.len(), self.names().join(","))
    }
}

/// One user review with its star rating and per-aspect polarity labels.
///
/// `labels[i]` is `Some` exactly when aspect `i` is mentioned; the mention
/// mask and the mentioned-aspect count are derived from that.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Review {
    pub id: String,
    pub text: String,
    /// Star rating in 1..=5.
    pub rating: u8,
    /// One entry per taxonomy aspect, `None` when not mentioned.
    pub labels: Vec<Option<Polarity>>,
}

impl Review {
    /// Binary mention mask: `mask[i] = true` iff aspect `i` is labeled.
    pub fn mask(&self) -> Vec<bool> {
        self.labels.iter().map(|l| l.is_some()).collect()
    }

    /// Number of mentioned aspects (K).
    pub fn mentioned_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
    Unsplit,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
            Split::Unsplit => "unsplit",
        };
        f.write_str(s)
    }
}

/// A collection of reviews sharing one taxonomy. Review ids are unique.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub reviews: Vec<Review>,
    pub split: Split,
    pub taxonomy: AspectTaxonomy,
}

impl Dataset {
    pub fn new(
        reviews: Vec<Review>,
        split: Split,
        taxonomy: AspectTaxonomy,
    ) -> Result<Self, CorpusError> {
        let mut seen = std::collections::HashSet::new();
        for r in &reviews {
            if !seen.insert(r.id.clone()) {
                return Err(CorpusError::DuplicateId(r.id.clone()));
            }
            assert_eq!(
                r.labels.len(),
                taxonomy.len(),
                "review {} has {} label slots for a {}-aspect taxonomy",
                r.id,
                r.labels.len(),
                taxonomy.len()
            );
        }
        Ok(Dataset { reviews, split, taxonomy })
    }

    pub fn len(&self) -> usize {
        self.reviews.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reviews.is_empty()
    }
}

/// Randomly partition a dataset into train/dev/test with the given ratios.
/// Deterministic for a fixed seed; the partition is disjoint and exhaustive.
pub fn split(
    ds: &Dataset,
    seed: u64,
    ratios: (f64, f64, f64),
) -> Result<(Dataset, Dataset, Dataset), CorpusError> {
    let (rt, rd, re) = ratios;
    let sum = rt + rd + re;
    if rt <= 0.0 || rd <= 0.0 || re <= 0.0 || (sum - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadRatios([rt, rd, re]));
    }
    let n = ds.reviews.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let n_train = ((n as f64 * rt).round() as usize).min(n);
    let n_dev = ((n as f64 * rd).round() as usize).min(n - n_train);
    let take = |idx: &[usize], split: Split| -> Dataset {
        Dataset {
            reviews: idx.iter().map(|&i| ds.reviews[i].clone()).collect(),
            split,
            taxonomy: ds.taxonomy.clone(),
        }
    };
    let train = take(&order[..n_train], Split::Train);
    let dev = take(&order[n_train..n_train + n_dev], Split::Dev);
    let test = take(&order[n_train + n_dev..], Split::Test);
    Ok((train, dev, test))
}

/// True for code points in the CJK Unified Ideographs block or Extension A.
pub fn is_chinese_char(c: char) -> bool {
    matches!(c, '\u{4E00}'..='\u{9FFF}' | '\u{3400}'..='\u{4DBF}')
}

/// Number of Chinese characters in a string.
pub fn chinese_char_count(text: &str) -> usize {
    text.chars().filter(|&c| is_chinese_char(c)).count()
}

/// Ratio of non-Chinese characters among non-whitespace code points.
/// Returns 0 for a string with no non-whitespace content.
pub fn non_chinese_ratio(text: &str) -> f64 {
    let total = text.chars().filter(|c| !c.is_whitespace()).count();
    if total == 0 {
        return 0.0;
    }
    let non_cjk = text
        .chars()
        .filter(|c| !c.is_whitespace() && !is_chinese_char(*c))
        .count();
    non_cjk as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_taxonomy_has_18_unique_entries() {
        let tax = AspectTaxonomy::default_restaurant();
        assert_eq!(tax.len(), 18);
        assert_eq!(tax.index_of("Food#Taste"), Some(15));
        assert_eq!(tax.index_of("Ambience#Decoration"), Some(10));
        let names = tax.names();
        let unique: std::collections::HashSet<_> = names.iter().collect();
        assert_eq!(unique.len(), 18);
    }

    #[test]
    fn polarity_codes_round_trip() {
        for p in Polarity::ALL {
            assert_eq!(Polarity::from_code(p.code()), Some(p));
            assert_eq!(Polarity::from_class_index(p.class_index()), Some(p));
        }
        assert_eq!(Polarity::from_code(2), None);
    }

    #[test]
    fn review_mask_matches_labels() {
        let r = Review {
            id: "r1".into(),
            text: "好".into(),
            rating: 5,
            labels: vec![Some(Polarity::Positive), None, Some(Polarity::Negative)],
        };
        assert_eq!(r.mask(), vec![true, false, true]);
        assert_eq!(r.mentioned_count(), 2);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let tax = AspectTaxonomy::new(vec![AspectEntry {
            name: "A#B".into(),
            definition: "x".into(),
        }]);
        let r = Review {
            id: "dup".into(),
            text: "好".into(),
            rating: 3,
            labels: vec![Some(Polarity::Neutral)],
        };
        let err = Dataset::new(vec![r.clone(), r], Split::Unsplit, tax).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId(_)));
    }

    fn tiny_dataset(n: usize) -> Dataset {
        let tax = AspectTaxonomy::default_restaurant();
        let reviews = (0..n)
            .map(|i| {
                let mut labels = vec![None; tax.len()];
                labels[i % tax.len()] = Some(Polarity::Positive);
                Review {
                    id: format!("r{i}"),
                    text: "还不错的一家店".into(),
                    rating: (i % 5 + 1) as u8,
                    labels,
                }
            })
            .collect();
        Dataset::new(reviews, Split::Unsplit, tax).unwrap()
    }

    #[test]
    fn split_exact_division() {
        let ds = tiny_dataset(100);
        let (tr, dv, te) = split(&ds, 42, (0.8, 0.1, 0.1)).unwrap();
        assert_eq!((tr.len(), dv.len(), te.len()), (80, 10, 10));
        assert_eq!(tr.split, Split::Train);
    }

    #[test]
    fn split_deterministic_and_exhaustive() {
        let ds = tiny_dataset(37);
        let (a1, b1, c1) = split(&ds, 7, (0.6, 0.2, 0.2)).unwrap();
        let (a2, b2, c2) = split(&ds, 7, (0.6, 0.2, 0.2)).unwrap();
        let ids = |d: &Dataset| d.reviews.iter().map(|r| r.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&a1), ids(&a2));
        assert_eq!(ids(&b1), ids(&b2));
        assert_eq!(ids(&c1), ids(&c2));
        let mut all: Vec<String> = ids(&a1).into_iter().chain(ids(&b1)).chain(ids(&c1)).collect();
        all.sort();
        let mut orig: Vec<String> = ds.reviews.iter().map(|r| r.id.clone()).collect();
        orig.sort();
        assert_eq!(all, orig);
    }

    #[test]
    fn split_bad_ratios() {
        let ds = tiny_dataset(10);
        assert!(matches!(
            split(&ds, 0, (0.5, 0.5, 0.5)),
            Err(CorpusError::BadRatios(_))
        ));
    }

    #[test]
    fn chinese_char_detection() {
        assert!(is_chinese_char('好'));
        assert!(is_chinese_char('㐀')); // Extension A
        assert!(!is_chinese_char('a'));
        assert!(!is_chinese_char('。'));
        assert_eq!(chinese_char_count("好吃 yummy 。"), 2);
    }
}
