//! Dataset statistics: counts, averages, and label/rating distributions.

use super::{chinese_char_count, CorpusError, Dataset, Polarity};
use serde::{Deserialize, Serialize};

/// Corpus-level statistics in the shape of the dataset distribution table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub review_count: usize,
    pub avg_sentences_per_review: f64,
    pub avg_aspects_per_review: f64,
    /// Average review length counted in Chinese characters.
    pub avg_length_chars: f64,
    /// (positive, negative, neutral) label counts over all mentioned aspects.
    pub polarity_counts: (usize, usize, usize),
    /// Counts for 1..=5 stars.
    pub rating_histogram: [usize; 5],
}

/// Sentence terminators used when counting sentences: the standard
/// Chinese terminators plus their ASCII counterparts.
const SENTENCE_TERMINATORS: [char; 6] = ['。', '！', '？', '.', '!', '?'];

/// Number of sentences in a review: terminator-delimited chunks that
/// contain at least one non-whitespace character.
pub fn sentence_count(text: &str) -> usize {
    text.split(SENTENCE_TERMINATORS)
        .filter(|chunk| chunk.chars().any(|c| !c.is_whitespace()))
        .count()
}

pub fn compute_stats(ds: &Dataset) -> Result<CorpusStats, CorpusError> {
    if ds.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    let n = ds.reviews.len();
    let mut sentences = 0usize;
    let mut aspects = 0usize;
    let mut length = 0usize;
    let mut pos = 0usize;
    let mut neg = 0usize;
    let mut neu = 0usize;
    let mut histogram = [0usize; 5];
    for r in &ds.reviews {
        sentences += sentence_count(&r.text);
        aspects += r.mentioned_count();
        length += chinese_char_count(&r.text);
        histogram[(r.rating - 1) as usize] += 1;
        for label in r.labels.iter().flatten() {
            match label {
                Polarity::Positive => pos += 1,
                Polarity::Negative => neg += 1,
                Polarity::Neutral => neu += 1,
            }
        }
    }
    Ok(CorpusStats {
        review_count: n,
        avg_sentences_per_review: sentences as f64 / n as f64,
        avg_aspects_per_review: aspects as f64 / n as f64,
        avg_length_chars: length as f64 / n as f64,
        polarity_counts: (pos, neg, neu),
        rating_histogram: histogram,
    })
}

impl CorpusStats {
    /// Plain-text table mirroring the distribution-table layout.
    pub fn render_table(&self, split_name: &str) -> String {
        let mut out = String::new();
        out.push_str(
            "split    reviews  avg_sent  avg_asp  avg_len  positive  negative  neutral  1*     2*     3*     4*     5*\n",
        );
        out.push_str(&format!(
            "{:<8} {:<8} {:<9.1} {:<8.1} {:<8.1} {:<9} {:<9} {:<8} {:<6} {:<6} {:<6} {:<6} {:<6}\n",
            split_name,
            self.review_count,
            self.avg_sentences_per_review,
            self.avg_aspects_per_review,
            self.avg_length_chars,
            self.polarity_counts.0,
            self.polarity_counts.1,
            self.polarity_counts.2,
            self.rating_histogram[0],
            self.rating_histogram[1],
            self.rating_histogram[2],
            self.rating_histogram[3],
            self.rating_histogram[4],
        ));
        out
    }
}
