//! CSV serialization for review corpora.
//!
//! Canonical layout: UTF-8 CSV with header `id,review,star,<aspect names
//! in taxonomy order>`. A not-mentioned aspect is an empty cell; a numeric
//! sentinel (default -2) is also accepted on input for compatibility with
//! externally published encodings.

use super::{AspectTaxonomy, CorpusError, Dataset, Polarity, Review, Split};
use std::path::Path;

/// Numeric cell value treated as "aspect not mentioned" on input.
pub const NOT_MENTIONED_SENTINEL: i64 = -2;

/// One raw CSV row as ordered (column, value) pairs. Keeps columns the
/// data model does not know about so curation can strip and report them.
#[derive(Debug, Clone)]
pub struct RawRecord {
    pub fields: Vec<(String, String)>,
}

impl RawRecord {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Read a CSV file into raw records without interpreting any cell.
pub fn read_raw_records(path: &Path) -> Result<Vec<RawRecord>, CorpusError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let fields = headers
            .iter()
            .cloned()
            .zip(row.iter().map(|v| v.to_string()))
            .collect();
        records.push(RawRecord { fields });
    }
    Ok(records)
}

/// Parse one keyed record into a [`Review`].
///
/// The record must carry `id`, `review`, `star`, and one column per
/// taxonomy entry. Aspect cells hold -1/0/1, the sentinel, or nothing.
pub fn parse_review(
    record: &RawRecord,
    taxonomy: &AspectTaxonomy,
    sentinel: i64,
) -> Result<Review, CorpusError> {
    let require = |key: &str| -> Result<&str, CorpusError> {
        record
            .get(key)
            .ok_or_else(|| CorpusError::MissingColumn(key.to_string()))
    };
    let id = require("id")?.to_string();
    let text = require("review")?.to_string();
    let star_raw = require("star")?.trim().to_string();
    let rating: u8 = match star_raw.parse::<i64>() {
        Ok(v @ 1..=5) => v as u8,
        _ => {
            return Err(CorpusError::MalformedRating {
                id,
                value: star_raw,
            })
        }
    };

    let mut labels = Vec::with_capacity(taxonomy.len());
    for entry in taxonomy.entries() {
        let cell = record
            .get(&entry.name)
            .ok_or_else(|| CorpusError::MissingColumn(entry.name.clone()))?
            .trim();
        let label = if cell.is_empty() {
            None
        } else {
            match cell.parse::<i64>() {
                Ok(v) if v == sentinel => None,
                Ok(v @ -1..=1) => Polarity::from_code(v as i8),
                _ => {
                    return Err(CorpusError::UnknownPolarity {
                        id: id.clone(),
                        aspect: entry.name.clone(),
                        value: cell.to_string(),
                    })
                }
            }
        };
        labels.push(label);
    }
    Ok(Review { id, text, rating, labels })
}

/// Read a whole CSV file into a [`Dataset`].
pub fn read_csv(
    path: &Path,
    taxonomy: &AspectTaxonomy,
    split: Split,
) -> Result<Dataset, CorpusError> {
    let records = read_raw_records(path)?;
    let reviews = records
        .iter()
        .map(|r| parse_review(r, taxonomy, NOT_MENTIONED_SENTINEL))
        .collect::<Result<Vec<_>, _>>()?;
    Dataset::new(reviews, split, taxonomy.clone())
}

/// Write a dataset in the canonical CSV layout.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<(), CorpusError> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string(), "review".to_string(), "star".to_string()];
    header.extend(ds.taxonomy.names().iter().map(|n| n.to_string()));
    writer.write_record(&header)?;
    for r in &ds.reviews {
        let mut row = vec![r.id.clone(), r.text.clone(), r.rating.to_string()];
        for label in &r.labels {
            row.push(match label {
                Some(p) => p.code().to_string(),
                None => String::new(),
            });
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
