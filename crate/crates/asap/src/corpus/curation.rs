//! Corpus curation: privacy-field stripping, length bounds, and the
//! non-Chinese-character ratio filter.

use super::io::{parse_review, RawRecord, NOT_MENTIONED_SENTINEL};
use super::{
    chinese_char_count, non_chinese_ratio, AspectTaxonomy, CorpusError, Dataset, Split,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

fn default_min_chars() -> usize {
    50
}
fn default_max_chars() -> usize {
    1000
}
fn default_max_ratio() -> f64 {
    0.70
}
fn default_sentinel() -> i64 {
    NOT_MENTIONED_SENTINEL
}

/// Thresholds and stripping rules for [`curate`]. Deserializable from a
/// TOML config file; every field has the standard default.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurationConfig {
    /// Minimum Chinese-character count, inclusive.
    #[serde(default = "default_min_chars")]
    pub min_chinese_chars: usize,
    /// Maximum Chinese-character count, inclusive.
    #[serde(default = "default_max_chars")]
    pub max_chinese_chars: usize,
    /// Reviews with a non-Chinese ratio strictly above this are dropped.
    #[serde(default = "default_max_ratio")]
    pub max_non_chinese_ratio: f64,
    /// Extra metadata columns to strip beyond the unrecognized ones.
    #[serde(default)]
    pub strip_fields: Vec<String>,
    /// Numeric aspect-cell value meaning "not mentioned".
    #[serde(default = "default_sentinel")]
    pub sentinel: i64,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            min_chinese_chars: default_min_chars(),
            max_chinese_chars: default_max_chars(),
            max_non_chinese_ratio: default_max_ratio(),
            strip_fields: Vec::new(),
            sentinel: default_sentinel(),
        }
    }
}

impl CurationConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| {
            CorpusError::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("bad curation config {}: {e}", path.display()),
            ))
        })
    }
}

/// Tally of what curation kept, dropped, and stripped.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CurationReport {
    pub kept: usize,
    pub dropped_short: usize,
    pub dropped_long: usize,
    pub dropped_non_chinese: usize,
    pub dropped_low_quality: usize,
    pub dropped_malformed: usize,
    /// Metadata column names removed from the output.
    pub dropped_fields: Vec<String>,
}

impl CurationReport {
    pub fn total_seen(&self) -> usize {
        self.kept
            + self.dropped_short
            + self.dropped_long
            + self.dropped_non_chinese
            + self.dropped_low_quality
            + self.dropped_malformed
    }
}

/// Curate raw records with the default (keep-everything) quality hook.
pub fn curate(
    raw: &[RawRecord],
    taxonomy: &AspectTaxonomy,
    rules: &CurationConfig,
) -> (Dataset, CurationReport) {
    curate_with_quality(raw, taxonomy, rules, |_| true)
}

/// Curate raw records into a dataset.
///
/// Steps, in order: strip metadata columns, enforce the Chinese-character
/// length bounds, enforce the non-Chinese ratio bound, then apply the
/// pluggable quality predicate (a stand-in for an external low-quality
/// review classifier; the default keeps everything). Records that fail to
/// parse are counted as `dropped_malformed`, never an error.
pub fn curate_with_quality(
    raw: &[RawRecord],
    taxonomy: &AspectTaxonomy,
    rules: &CurationConfig,
    quality: impl Fn(&str) -> bool,
) -> (Dataset, CurationReport) {
    let mut report = CurationReport::default();
    let mut stripped: BTreeSet<String> = BTreeSet::new();
    let known: BTreeSet<&str> = ["id", "review", "star"]
        .into_iter()
        .chain(taxonomy.names())
        .collect();

    let mut reviews = Vec::new();
    let mut seen_ids = std::collections::HashSet::new();
    for record in raw {
        for (key, _) in &record.fields {
            if !known.contains(key.as_str()) || rules.strip_fields.contains(key) {
                stripped.insert(key.clone());
            }
        }
        let text = record.get("review").unwrap_or("");
        let cjk = chinese_char_count(text);
        if cjk < rules.min_chinese_chars {
            report.dropped_short += 1;
            continue;
        }
        if cjk > rules.max_chinese_chars {
            report.dropped_long += 1;
            continue;
        }
        if non_chinese_ratio(text) > rules.max_non_chinese_ratio {
            report.dropped_non_chinese += 1;
            continue;
        }
        if !quality(text) {
            report.dropped_low_quality += 1;
            continue;
        }
        match parse_review(record, taxonomy, rules.sentinel) {
            Ok(review) if seen_ids.insert(review.id.clone()) => {
                reviews.push(review);
                report.kept += 1;
            }
            _ => report.dropped_malformed += 1,
        }
    }
    report.dropped_fields = stripped.into_iter().collect();

    let ds = Dataset {
        reviews,
        split: Split::Unsplit,
        taxonomy: taxonomy.clone(),
    };
    (ds, report)
}
