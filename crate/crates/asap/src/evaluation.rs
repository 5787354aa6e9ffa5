//! Metrics, attention-weight export, and the content-rating disagreement
//! detector.

use crate::corpus::{Dataset, Review};
use crate::joint::JointPrediction;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction count {got} does not match gold review count {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("prediction carries no attention trace")]
    MissingTrace,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Per-aspect diagnostic line of the ACSA report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AspectBreakdown {
    pub aspect: String,
    pub pairs: usize,
    pub accuracy: f64,
}

/// ACSA metrics over all (review, mentioned-aspect) pairs pooled into one
/// 3-class confusion matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AcsaMetrics {
    pub macro_f1: f64,
    pub accuracy: f64,
    /// F1 for (Negative, Neutral, Positive).
    pub per_class_f1: [f64; 3],
    /// `confusion[gold][predicted]` counts.
    pub confusion: [[usize; 3]; 3],
    pub per_aspect: Vec<AspectBreakdown>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RpMetrics {
    pub mae: f64,
    /// Accuracy after nearest-category mapping of the predicted rating.
    pub accuracy: f64,
}

/// Score ACSA predictions against gold labels. The predicted class per
/// pair is the argmax of the aspect's distribution; only mentioned pairs
/// are scored. A class entirely absent from gold is excluded from the
/// macro average; otherwise 0/0 F1 counts as 0.
pub fn evaluate_acsa(
    preds: &[JointPrediction],
    gold: &Dataset,
) -> Result<AcsaMetrics, EvalError> {
    if preds.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            expected: gold.len(),
            got: preds.len(),
        });
    }
    let n_aspects = gold.taxonomy.len();
    let mut confusion = [[0usize; 3]; 3];
    let mut aspect_pairs = vec![0usize; n_aspects];
    let mut aspect_hits = vec![0usize; n_aspects];
    for (pred, review) in preds.iter().zip(&gold.reviews) {
        for (i, label) in review.labels.iter().enumerate() {
            let Some(gold_label) = label else { continue };
            let g = gold_label.class_index();
            let p = pred.argmax_class(i);
            confusion[g][p] += 1;
            aspect_pairs[i] += 1;
            if g == p {
                aspect_hits[i] += 1;
            }
        }
    }
    let total: usize = confusion.iter().flatten().sum();
    let correct: usize = (0..3).map(|c| confusion[c][c]).sum();
    let accuracy = if total > 0 {
        correct as f64 / total as f64
    } else {
        0.0
    };

    let mut per_class_f1 = [0.0f64; 3];
    let mut included = Vec::new();
    for c in 0..3 {
        let tp = confusion[c][c];
        let gold_count: usize = confusion[c].iter().sum();
        let pred_count: usize = (0..3).map(|g| confusion[g][c]).sum();
        let denom = gold_count + pred_count;
        per_class_f1[c] = if denom > 0 {
            2.0 * tp as f64 / denom as f64
        } else {
            0.0
        };
        if gold_count > 0 {
            included.push(per_class_f1[c]);
        }
    }
    let macro_f1 = if included.is_empty() {
        0.0
    } else {
        included.iter().sum::<f64>() / included.len() as f64
    };

    let per_aspect = gold
        .taxonomy
        .names()
        .iter()
        .enumerate()
        .map(|(i, name)| AspectBreakdown {
            aspect: name.to_string(),
            pairs: aspect_pairs[i],
            accuracy: if aspect_pairs[i] > 0 {
                aspect_hits[i] as f64 / aspect_pairs[i] as f64
            } else {
                0.0
            },
        })
        .collect();

    Ok(AcsaMetrics {
        macro_f1,
        accuracy,
        per_class_f1,
        confusion,
        per_aspect,
    })
}

/// MAE over the raw predicted ratings plus accuracy after
/// [`map_to_star`].
pub fn evaluate_rp(preds: &[JointPrediction], gold: &Dataset) -> Result<RpMetrics, EvalError> {
    if preds.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            expected: gold.len(),
            got: preds.len(),
        });
    }
    let n = gold.len();
    let mut abs_err = 0.0;
    let mut hits = 0usize;
    for (pred, review) in preds.iter().zip(&gold.reviews) {
        abs_err += (review.rating as f64 - pred.predicted_rating).abs();
        if map_to_star(pred.predicted_rating)? == review.rating {
            hits += 1;
        }
    }
    Ok(RpMetrics {
        mae: abs_err / n as f64,
        accuracy: hits as f64 / n as f64,
    })
}

/// Map a real-valued rating prediction to the nearest star: round half
/// away from zero, then clamp to 1..=5.
pub fn map_to_star(g_hat: f64) -> Result<u8, EvalError> {
    if !g_hat.is_finite() {
        return Err(EvalError::NonFiniteInput);
    }
    Ok(g_hat.round().clamp(1.0, 5.0) as u8)
}

/// Content-rating disagreement verdict.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Unreliability {
    pub flagged: bool,
    /// `|g_hat - rating|`, usable for ranking.
    pub margin: f64,
}

/// Default disagreement threshold, in stars. Boundary inclusive.
pub const DEFAULT_UNRELIABLE_THRESHOLD: f64 = 2.0;

/// Flag a review whose predicted rating disagrees with its user rating by
/// at least `threshold` stars.
pub fn detect_unreliable(
    review: &Review,
    g_hat: f64,
    threshold: f64,
) -> Result<Unreliability, EvalError> {
    if !g_hat.is_finite() || !threshold.is_finite() {
        return Err(EvalError::NonFiniteInput);
    }
    assert!(threshold > 0.0, "threshold must be positive");
    let margin = (g_hat - review.rating as f64).abs();
    Ok(Unreliability {
        flagged: margin >= threshold,
        margin,
    })
}

/// One line of the attention export: the weights of one mentioned aspect.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub review_id: String,
    pub aspect: String,
    pub tokens: Vec<String>,
    pub weights: Vec<f64>,
}

/// Export attention weights of all mentioned aspects of one review as
/// line-delimited records, plus an optional self-contained HTML heatmap.
/// `tokens` must be the token strings the prediction was computed from;
/// weights are reported for valid positions only.
pub fn export_attention(
    review: &Review,
    pred: &JointPrediction,
    taxonomy_names: &[&str],
    tokens: &[String],
    jsonl_path: &Path,
    html_path: Option<&Path>,
) -> Result<Vec<AttentionTrace>, EvalError> {
    let attention = pred.attention.as_ref().ok_or(EvalError::MissingTrace)?;
    let mut traces = Vec::new();
    for (i, label) in review.labels.iter().enumerate() {
        if label.is_none() {
            continue;
        }
        let alpha = &attention[i].alpha;
        let weights: Vec<f64> = alpha.iter().take(tokens.len()).copied().collect();
        traces.push(AttentionTrace {
            review_id: review.id.clone(),
            aspect: taxonomy_names[i].to_string(),
            tokens: tokens.to_vec(),
            weights,
        });
    }
    let mut file = std::fs::File::create(jsonl_path)?;
    for trace in &traces {
        serde_json::to_writer(&mut file, trace)?;
        file.write_all(b"\n")?;
    }
    if let Some(html_path) = html_path {
        std::fs::write(html_path, render_heatmap_html(review, &traces))?;
    }
    Ok(traces)
}

/// Self-contained HTML page: one row per aspect, token background
/// intensity proportional to its attention weight.
fn render_heatmap_html(review: &Review, traces: &[AttentionTrace]) -> String {
    let mut html = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">\n<style>\n\
         body{font-family:sans-serif;margin:2em}\n\
         .tok{padding:1px 2px;border-radius:2px}\n\
         .aspect{margin:1em 0}\n\
         h3{margin-bottom:0.2em}\n</style></head><body>\n",
    );
    html.push_str(&format!(
        "<h2>Attention weights for review {}</h2>\n<p>rating: {}</p>\n",
        html_escape(&review.id),
        review.rating
    ));
    for trace in traces {
        let max_w = trace.weights.iter().cloned().fold(0.0_f64, f64::max).max(1e-12);
        html.push_str(&format!(
            "<div class=\"aspect\"><h3>{}</h3><div>",
            html_escape(&trace.aspect)
        ));
        for (token, &w) in trace.tokens.iter().zip(&trace.weights) {
            let intensity = w / max_w;
            html.push_str(&format!(
                "<span class=\"tok\" title=\"{w:.4}\" style=\"background:rgba(255,80,0,{intensity:.3})\">{}</span>",
                html_escape(token)
            ));
        }
        html.push_str("</div></div>\n");
    }
    html.push_str("</body></html>\n");
    html
}

fn html_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Plain-text summary mirroring the results-table layout.
pub fn render_metrics_table(acsa: Option<&AcsaMetrics>, rp: Option<&RpMetrics>) -> String {
    let mut out = String::new();
    out.push_str("task  metric    value\n");
    if let Some(a) = acsa {
        out.push_str(&format!("ACSA  Macro-F1  {:.2}%\n", a.macro_f1 * 100.0));
        out.push_str(&format!("ACSA  Acc.      {:.2}%\n", a.accuracy * 100.0));
    }
    if let Some(r) = rp {
        out.push_str(&format!("RP    MAE       {:.4}\n", r.mae));
        out.push_str(&format!("RP    Acc.      {:.2}%\n", r.accuracy * 100.0));
    }
    out
}
