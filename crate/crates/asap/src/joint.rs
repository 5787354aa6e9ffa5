//! The multi-task head: per-aspect attention pooling and classification
//! plus the rating regression head, with the gated ACSA loss, the RP
//! loss, and their weighted sum.
//!
//! Plain `ndarray` forward functions implement the model equations for
//! inference; [`build_batch_graph`] builds the same computation on the
//! autodiff tape for training. A test pins the two paths to each other.

use crate::autodiff::{Graph, NodeId};
use crate::corpus::{Polarity, Review};
use crate::encoder::{EncoderOutput, EncoderParamNodes, TinyEncoder, TokenSequence};
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of polarity classes.
pub const NUM_CLASSES: usize = 3;

#[derive(Debug, Error)]
pub enum JointError {
    #[error("aspect index {0} out of range for {1} aspects")]
    IndexOutOfRange(usize, usize),
    #[error("review {0:?} mentions no aspect")]
    NoMentionedAspect(String),
    #[error("encoder error: {0}")]
    Encoder(#[from] crate::encoder::EncoderError),
}

/// Trainable weights of one aspect head.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AspectHead {
    /// `d x d` attention transform.
    pub w_a: Array2<f64>,
    /// `d x 1` attention scoring vector.
    pub omega: Array2<f64>,
    /// `d x d` representation transform.
    pub w_p: Array2<f64>,
    /// `C x d` classification weights.
    pub w_q: Array2<f64>,
    /// `C x 1` classification bias.
    pub b_q: Array2<f64>,
}

/// All trainable head weights: one [`AspectHead`] per aspect (no sharing
/// across aspects) plus the rating regression head.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadParams {
    pub aspects: Vec<AspectHead>,
    /// `d x d` rating transform.
    pub w_r: Array2<f64>,
    /// `d x 1` rating bias.
    pub b_r: Array2<f64>,
    /// `d x 1` rating readout.
    pub beta: Array2<f64>,
}

impl HeadParams {
    pub fn init(d: usize, n_aspects: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.02).unwrap();
        let mut sample = |rows: usize, cols: usize| {
            Array2::from_shape_fn((rows, cols), |_| normal.sample(&mut rng))
        };
        let aspects = (0..n_aspects)
            .map(|_| AspectHead {
                w_a: sample(d, d),
                omega: sample(d, 1),
                w_p: sample(d, d),
                w_q: sample(NUM_CLASSES, d),
                b_q: Array2::zeros((NUM_CLASSES, 1)),
            })
            .collect();
        HeadParams {
            aspects,
            w_r: sample(d, d),
            b_r: Array2::zeros((d, 1)),
            beta: sample(d, 1),
        }
    }

    pub fn n_aspects(&self) -> usize {
        self.aspects.len()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_r.nrows()
    }

    /// Named tensors in the canonical flat order; `param_leaves` mirrors it.
    pub fn named(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = Vec::new();
        for (i, a) in self.aspects.iter().enumerate() {
            out.push((format!("aspect{i}.w_a"), &a.w_a));
            out.push((format!("aspect{i}.omega"), &a.omega));
            out.push((format!("aspect{i}.w_p"), &a.w_p));
            out.push((format!("aspect{i}.w_q"), &a.w_q));
            out.push((format!("aspect{i}.b_q"), &a.b_q));
        }
        out.push(("rating.w_r".to_string(), &self.w_r));
        out.push(("rating.b_r".to_string(), &self.b_r));
        out.push(("rating.beta".to_string(), &self.beta));
        out
    }

    pub fn flat_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = Vec::new();
        for a in self.aspects.iter_mut() {
            out.push(&mut a.w_a);
            out.push(&mut a.omega);
            out.push(&mut a.w_p);
            out.push(&mut a.w_q);
            out.push(&mut a.b_q);
        }
        out.push(&mut self.w_r);
        out.push(&mut self.b_r);
        out.push(&mut self.beta);
        out
    }

    pub fn param_leaves(&self, g: &mut Graph) -> HeadParamNodes {
        let mut flat = Vec::new();
        let aspects = self
            .aspects
            .iter()
            .map(|a| {
                let nodes = AspectHeadNodes {
                    w_a: g.leaf(a.w_a.clone()),
                    omega: g.leaf(a.omega.clone()),
                    w_p: g.leaf(a.w_p.clone()),
                    w_q: g.leaf(a.w_q.clone()),
                    b_q: g.leaf(a.b_q.clone()),
                };
                flat.extend([nodes.w_a, nodes.omega, nodes.w_p, nodes.w_q, nodes.b_q]);
                nodes
            })
            .collect();
        let w_r = g.leaf(self.w_r.clone());
        let b_r = g.leaf(self.b_r.clone());
        let beta = g.leaf(self.beta.clone());
        flat.extend([w_r, b_r, beta]);
        HeadParamNodes {
            aspects,
            w_r,
            b_r,
            beta,
            flat,
        }
    }
}

pub struct AspectHeadNodes {
    pub w_a: NodeId,
    pub omega: NodeId,
    pub w_p: NodeId,
    pub w_q: NodeId,
    pub b_q: NodeId,
}

pub struct HeadParamNodes {
    pub aspects: Vec<AspectHeadNodes>,
    pub w_r: NodeId,
    pub b_r: NodeId,
    pub beta: NodeId,
    flat: Vec<NodeId>,
}

impl HeadParamNodes {
    pub fn flat(&self) -> &[NodeId] {
        &self.flat
    }
}

/// Attention pooling result for one aspect: the weight vector, the pooled
/// representation, and (when tracing) the intermediate transform.
#[derive(Debug, Clone)]
pub struct AttentionResult {
    pub alpha: Array1<f64>,
    pub r: Array1<f64>,
    pub m: Option<Array2<f64>>,
}

/// Per-review model output: one class distribution per aspect and the
/// unclamped predicted rating.
#[derive(Debug, Clone)]
pub struct JointPrediction {
    /// `N x C`; every row is a distribution. Only rows of mentioned
    /// aspects are meaningful, but all N are computed.
    pub class_probs: Array2<f64>,
    pub predicted_rating: f64,
    /// Per-aspect attention traces, present when tracing was requested.
    pub attention: Option<Vec<AttentionResult>>,
}

impl JointPrediction {
    pub fn argmax_class(&self, aspect: usize) -> usize {
        let row = self.class_probs.row(aspect);
        let mut best = 0;
        for c in 1..row.len() {
            if row[c] > row[best] {
                best = c;
            }
        }
        best
    }
}

fn masked_softmax(scores: &Array1<f64>, valid: &[bool]) -> Array1<f64> {
    let max = scores
        .iter()
        .zip(valid)
        .filter(|(_, &v)| v)
        .map(|(s, _)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = Array1::zeros(scores.len());
    let mut denom = 0.0;
    for i in 0..scores.len() {
        if valid[i] {
            out[i] = (scores[i] - max).exp();
            denom += out[i];
        }
    }
    out / denom
}

/// Attention pooling for one aspect over encoder output.
pub fn attention_pool(
    enc: &EncoderOutput,
    aspect: usize,
    params: &HeadParams,
    trace: bool,
) -> Result<AttentionResult, JointError> {
    let head = params
        .aspects
        .get(aspect)
        .ok_or(JointError::IndexOutOfRange(aspect, params.n_aspects()))?;
    let m = head.w_a.dot(&enc.h).mapv(f64::tanh);
    let omega = head.omega.column(0).to_owned();
    let scores = omega.dot(&m);
    let alpha = masked_softmax(&scores, &enc.valid);
    let pooled = enc.h.dot(&alpha);
    let r = head.w_p.dot(&pooled).mapv(f64::tanh);
    Ok(AttentionResult {
        alpha,
        r,
        m: trace.then(|| m),
    })
}

/// Per-aspect softmax classification of a pooled representation.
pub fn classify_aspect(
    r: &Array1<f64>,
    aspect: usize,
    params: &HeadParams,
) -> Result<Array1<f64>, JointError> {
    let head = params
        .aspects
        .get(aspect)
        .ok_or(JointError::IndexOutOfRange(aspect, params.n_aspects()))?;
    let logits = head.w_q.dot(r) + head.b_q.column(0);
    let valid = vec![true; logits.len()];
    Ok(masked_softmax(&logits, &valid))
}

/// Gated ACSA loss: mean negative log-likelihood over mentioned aspects.
/// `label_codes` at positions where `mask` is false are ignored.
pub fn acsa_loss_masked(
    class_probs: &Array2<f64>,
    label_codes: &[usize],
    mask: &[bool],
) -> Result<f64, JointError> {
    assert_eq!(class_probs.nrows(), mask.len());
    assert_eq!(label_codes.len(), mask.len());
    let k = mask.iter().filter(|&&m| m).count();
    if k == 0 {
        return Err(JointError::NoMentionedAspect(String::new()));
    }
    let mut total = 0.0;
    for i in 0..mask.len() {
        if mask[i] {
            total -= class_probs[(i, label_codes[i])].ln();
        }
    }
    Ok(total / k as f64)
}

/// [`acsa_loss_masked`] with labels in the data-model shape.
pub fn acsa_loss(
    class_probs: &Array2<f64>,
    labels: &[Option<Polarity>],
) -> Result<f64, JointError> {
    let mask: Vec<bool> = labels.iter().map(|l| l.is_some()).collect();
    let codes: Vec<usize> = labels
        .iter()
        .map(|l| l.map(|p| p.class_index()).unwrap_or(0))
        .collect();
    acsa_loss_masked(class_probs, &codes, &mask)
}

/// Rating regression head over the pooled review vector. The output is an
/// unclamped real value.
pub fn rating_head(pooled: &Array1<f64>, params: &HeadParams) -> f64 {
    let t = (params.w_r.dot(pooled) + params.b_r.column(0)).mapv(f64::tanh);
    params.beta.column(0).dot(&t)
}

/// Absolute-error rating loss.
pub fn rp_loss(g_hat: f64, g: u8) -> f64 {
    (g as f64 - g_hat).abs()
}

/// Full inference for one encoded review: all N aspect distributions plus
/// the predicted rating.
pub fn predict_review(
    enc: &EncoderOutput,
    params: &HeadParams,
    trace: bool,
) -> Result<JointPrediction, JointError> {
    let n = params.n_aspects();
    let mut class_probs = Array2::zeros((n, NUM_CLASSES));
    let mut traces = trace.then(Vec::new);
    for i in 0..n {
        let att = attention_pool(enc, i, params, trace)?;
        let dist = classify_aspect(&att.r, i, params)?;
        class_probs.row_mut(i).assign(&dist);
        if let Some(ts) = traces.as_mut() {
            ts.push(att);
        }
    }
    let predicted_rating = rating_head(&enc.pooled, params);
    Ok(JointPrediction {
        class_probs,
        predicted_rating,
        attention: traces,
    })
}

/// Relative weights of the two loss terms; (1, 1) is the plain sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub acsa: f64,
    pub rp: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { acsa: 1.0, rp: 1.0 }
    }
}

/// A review prepared for the model: tokenized, with label codes and mask.
#[derive(Debug, Clone)]
pub struct PreparedReview {
    pub id: String,
    pub seq: TokenSequence,
    pub label_codes: Vec<usize>,
    pub mask: Vec<bool>,
    pub rating: u8,
}

impl PreparedReview {
    pub fn from_review(review: &Review, encoder: &TinyEncoder) -> Result<Self, JointError> {
        if review.mentioned_count() == 0 {
            return Err(JointError::NoMentionedAspect(review.id.clone()));
        }
        let seq = encoder.tokenize_to_sequence(&review.text)?;
        Ok(PreparedReview {
            id: review.id.clone(),
            seq,
            label_codes: review
                .labels
                .iter()
                .map(|l| l.map(|p| p.class_index()).unwrap_or(0))
                .collect(),
            mask: review.mask(),
            rating: review.rating,
        })
    }
}

/// The training-side computation for one batch, built on the autodiff
/// tape: graph, scalar loss nodes, and the parameter leaves whose
/// gradients the optimizer consumes.
pub struct BatchGraph {
    pub graph: Graph,
    pub loss: NodeId,
    pub acsa: NodeId,
    pub rp: NodeId,
    pub enc_nodes: EncoderParamNodes,
    pub head_nodes: HeadParamNodes,
    pub predictions: Option<Vec<JointPrediction>>,
}

/// Build the joint forward graph for a batch. Both loss terms are means
/// over the batch. With `predict_all`, distributions for every aspect of
/// every review are extracted from the graph.
pub fn build_batch_graph(
    batch: &[PreparedReview],
    encoder: &TinyEncoder,
    heads: &HeadParams,
    weights: LossWeights,
    predict_all: bool,
) -> Result<BatchGraph, JointError> {
    assert!(!batch.is_empty(), "batch must be non-empty");
    let mut g = Graph::new();
    let enc_nodes = encoder.param_leaves(&mut g);
    let head_nodes = heads.param_leaves(&mut g);
    let n = heads.n_aspects();

    let mut acsa_terms = Vec::new();
    let mut rp_terms = Vec::new();
    let mut predictions = predict_all.then(Vec::new);

    for review in batch {
        let k = review.mask.iter().filter(|&&m| m).count();
        if k == 0 {
            return Err(JointError::NoMentionedAspect(review.id.clone()));
        }
        let h = encoder.build_graph(&mut g, &enc_nodes, &review.seq)?;

        let mut nll_terms = Vec::new();
        let mut probs = predict_all.then(|| Array2::zeros((n, NUM_CLASSES)));
        let mut traces = predict_all.then(Vec::new);
        for i in 0..n {
            if !review.mask[i] && !predict_all {
                continue;
            }
            let head = &head_nodes.aspects[i];
            let wh = g.matmul(head.w_a, h);
            let m = g.tanh(wh);
            let omega_t = g.transpose(head.omega);
            let scores = g.matmul(omega_t, m);
            let scores_col = g.transpose(scores);
            let alpha = g.masked_softmax_cols(scores_col, review.seq.valid.clone());
            let pooled = g.matmul(h, alpha);
            let wp = g.matmul(head.w_p, pooled);
            let r = g.tanh(wp);
            let logits_m = g.matmul(head.w_q, r);
            let logits = g.add(logits_m, head.b_q);
            let logp = g.log_softmax_cols(logits);
            if review.mask[i] {
                nll_terms.push((g.pick(logp, review.label_codes[i], 0), -1.0 / k as f64));
            }
            if let Some(p) = probs.as_mut() {
                for c in 0..NUM_CLASSES {
                    p[(i, c)] = g.value(logp)[(c, 0)].exp();
                }
            }
            if let Some(ts) = traces.as_mut() {
                ts.push(AttentionResult {
                    alpha: g.value(alpha).column(0).to_owned(),
                    r: g.value(r).column(0).to_owned(),
                    m: Some(g.value(m).clone()),
                });
            }
        }
        let review_acsa = g.sum_scaled(&nll_terms);
        acsa_terms.push((review_acsa, 1.0));

        let pooled = g.gather_cols(h, vec![0]);
        let wr = g.matmul(head_nodes.w_r, pooled);
        let pre = g.add(wr, head_nodes.b_r);
        let t = g.tanh(pre);
        let beta_t = g.transpose(head_nodes.beta);
        let g_hat = g.matmul(beta_t, t);
        let neg = g.scale(g_hat, -1.0);
        let diff = g.add_scalar(neg, review.rating as f64);
        let review_rp = g.abs(diff);
        rp_terms.push((review_rp, 1.0));

        if let Some(preds) = predictions.as_mut() {
            preds.push(JointPrediction {
                class_probs: probs.unwrap(),
                predicted_rating: g.scalar(g_hat),
                attention: traces,
            });
        }
    }

    let b = batch.len() as f64;
    let acsa_mean_terms: Vec<_> = acsa_terms.iter().map(|&(id, _)| (id, 1.0 / b)).collect();
    let rp_mean_terms: Vec<_> = rp_terms.iter().map(|&(id, _)| (id, 1.0 / b)).collect();
    let acsa = g.sum_scaled(&acsa_mean_terms);
    let rp = g.sum_scaled(&rp_mean_terms);
    let loss = g.sum_scaled(&[(acsa, weights.acsa), (rp, weights.rp)]);

    Ok(BatchGraph {
        graph: g,
        loss,
        acsa,
        rp,
        enc_nodes,
        head_nodes,
        predictions,
    })
}

/// Forward loss and predictions for a batch of reviews.
pub struct JointForwardResult {
    pub loss: f64,
    pub acsa_loss: f64,
    pub rp_loss: f64,
    pub predictions: Vec<JointPrediction>,
}

/// Joint loss (weighted sum of the two task losses, averaged over the
/// batch) plus per-review predictions for all N aspects.
pub fn joint_forward_loss(
    batch: &[Review],
    encoder: &TinyEncoder,
    heads: &HeadParams,
    weights: LossWeights,
) -> Result<JointForwardResult, JointError> {
    let prepared = batch
        .iter()
        .map(|r| PreparedReview::from_review(r, encoder))
        .collect::<Result<Vec<_>, _>>()?;
    let bg = build_batch_graph(&prepared, encoder, heads, weights, true)?;
    Ok(JointForwardResult {
        loss: bg.graph.scalar(bg.loss),
        acsa_loss: bg.graph.scalar(bg.acsa),
        rp_loss: bg.graph.scalar(bg.rp),
        predictions: bg.predictions.unwrap(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synthetic, AspectTaxonomy};
    use crate::encoder::{ContextualEncoder, EncoderConfig, Vocab};
    use ndarray::array;

    fn fixture_output(d: usize, z: usize) -> EncoderOutput {
        let h = Array2::from_shape_fn((d, z), |(i, j)| ((i * 7 + j * 3) as f64 * 0.13).sin());
        EncoderOutput {
            pooled: h.column(0).to_owned(),
            valid: vec![true; z],
            h,
        }
    }

    #[test]
    fn zero_omega_gives_uniform_attention() {
        let d = 4;
        let mut params = HeadParams::init(d, 2, 0);
        params.aspects[1].omega.fill(0.0);
        let enc = fixture_output(d, 5);
        let att = attention_pool(&enc, 1, &params, false).unwrap();
        for &a in att.alpha.iter() {
            assert!((a - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn single_token_attention() {
        let d = 4;
        let params = HeadParams::init(d, 1, 1);
        let enc = fixture_output(d, 1);
        let att = attention_pool(&enc, 0, &params, false).unwrap();
        assert_eq!(att.alpha.len(), 1);
        assert!((att.alpha[0] - 1.0).abs() < 1e-12);
        let expected = params.aspects[0]
            .w_p
            .dot(&enc.h.column(0).to_owned())
            .mapv(f64::tanh);
        for (a, b) in att.r.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_index_out_of_range() {
        let params = HeadParams::init(4, 2, 0);
        let enc = fixture_output(4, 3);
        assert!(matches!(
            attention_pool(&enc, 2, &params, false),
            Err(JointError::IndexOutOfRange(2, 2))
        ));
    }

    #[test]
    fn zero_classifier_is_uniform() {
        let d = 4;
        let mut params = HeadParams::init(d, 1, 0);
        params.aspects[0].w_q.fill(0.0);
        params.aspects[0].b_q.fill(0.0);
        let r = Array1::from_vec(vec![0.3, -0.5, 0.1, 0.9]);
        let dist = classify_aspect(&r, 0, &params).unwrap();
        for &p in dist.iter() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dominant_logit_wins() {
        let d = 4;
        let mut params = HeadParams::init(d, 1, 0);
        params.aspects[0].w_q.fill(0.0);
        params.aspects[0].b_q = array![[10.0], [0.0], [0.0]];
        let r = Array1::zeros(d);
        let dist = classify_aspect(&r, 0, &params).unwrap();
        assert!(dist[0] >= 0.9999);
    }

    #[test]
    fn uniform_predictions_cost_ln3() {
        let probs = Array2::from_elem((5, 3), 1.0 / 3.0);
        let labels = vec![
            Some(Polarity::Positive),
            None,
            Some(Polarity::Negative),
            Some(Polarity::Neutral),
            None,
        ];
        let loss = acsa_loss(&probs, &labels).unwrap();
        assert!((loss - 3.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn no_mentioned_aspect_is_an_error() {
        let probs = Array2::from_elem((3, 3), 1.0 / 3.0);
        let labels = vec![None, None, None];
        assert!(matches!(
            acsa_loss(&probs, &labels),
            Err(JointError::NoMentionedAspect(_))
        ));
    }

    #[test]
    fn perfect_prediction_limit() {
        let eps = 1e-9;
        let mut probs = Array2::from_elem((1, 3), eps / 2.0);
        probs[(0, 2)] = 1.0 - eps;
        let loss = acsa_loss(&probs, &[Some(Polarity::Positive)]).unwrap();
        assert!(loss < 1e-8);
    }

    #[test]
    fn zero_rating_head() {
        let d = 4;
        let mut params = HeadParams::init(d, 1, 0);
        params.w_r.fill(0.0);
        params.b_r.fill(0.0);
        let pooled = Array1::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
        assert_eq!(rating_head(&pooled, &params), 0.0);

        let mut params = HeadParams::init(d, 1, 0);
        params.beta.fill(0.0);
        assert_eq!(rating_head(&pooled, &params), 0.0);
    }

    #[test]
    fn rp_loss_arithmetic() {
        assert_eq!(rp_loss(4.0, 4), 0.0);
        assert_eq!(rp_loss(4.5, 2), 2.5);
        // no clamping in the loss
        assert_eq!(rp_loss(-1.0, 5), 6.0);
    }

    fn tiny_setup() -> (TinyEncoder, HeadParams, crate::corpus::Dataset) {
        let tax = AspectTaxonomy::default_restaurant();
        let ds = synthetic::generate(&tax, 6, 11);
        let mut vocab = Vocab::new();
        vocab
            .extend_from_texts(ds.reviews.iter().map(|r| r.text.as_str()), 32)
            .unwrap();
        let config = EncoderConfig {
            d: 8,
            layers: 1,
            heads: 2,
            vocab_size: 0,
            max_len: 32,
            init_seed: 5,
        };
        let encoder = TinyEncoder::new(config, vocab);
        let heads = HeadParams::init(8, tax.len(), 6);
        (encoder, heads, ds)
    }

    /// The graph path and the plain inference path compute the same model.
    #[test]
    fn graph_forward_matches_plain_forward() {
        let (encoder, heads, ds) = tiny_setup();
        let result =
            joint_forward_loss(&ds.reviews, &encoder, &heads, LossWeights::default()).unwrap();
        for (review, pred) in ds.reviews.iter().zip(&result.predictions) {
            let seq = encoder.tokenize_to_sequence(&review.text).unwrap();
            let enc_out = encoder.encode(&seq).unwrap();
            let plain = predict_review(&enc_out, &heads, false).unwrap();
            let diff = (&plain.class_probs - &pred.class_probs)
                .iter()
                .map(|v| v.abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-12, "class prob mismatch {diff}");
            assert!((plain.predicted_rating - pred.predicted_rating).abs() < 1e-12);
        }
    }

    /// Joint loss decomposes additively into its two terms.
    #[test]
    fn loss_additivity() {
        let (encoder, heads, ds) = tiny_setup();
        let both =
            joint_forward_loss(&ds.reviews, &encoder, &heads, LossWeights::default()).unwrap();
        assert!((both.loss - (both.acsa_loss + both.rp_loss)).abs() < 1e-12);

        let no_rp = joint_forward_loss(
            &ds.reviews,
            &encoder,
            &heads,
            LossWeights { acsa: 1.0, rp: 0.0 },
        )
        .unwrap();
        assert_eq!(no_rp.loss, no_rp.acsa_loss);
    }

    /// Perturbing aspect j's head leaves every other aspect's output
    /// untouched, given a frozen encoder.
    #[test]
    fn per_aspect_parameter_isolation() {
        let (encoder, mut heads, ds) = tiny_setup();
        let seq = encoder.tokenize_to_sequence(&ds.reviews[0].text).unwrap();
        let enc_out = encoder.encode(&seq).unwrap();
        let before = predict_review(&enc_out, &heads, false).unwrap();
        heads.aspects[3].w_q.fill(7.0);
        heads.aspects[3].omega.fill(-2.0);
        let after = predict_review(&enc_out, &heads, false).unwrap();
        for i in 0..heads.n_aspects() {
            let same = before.class_probs.row(i) == after.class_probs.row(i);
            assert_eq!(same, i != 3, "aspect {i}");
        }
        assert_eq!(before.predicted_rating, after.predicted_rating);
    }

    #[test]
    fn distributions_are_valid() {
        let (encoder, heads, ds) = tiny_setup();
        let result =
            joint_forward_loss(&ds.reviews, &encoder, &heads, LossWeights::default()).unwrap();
        for pred in &result.predictions {
            for row in pred.class_probs.rows() {
                let sum: f64 = row.sum();
                assert!((sum - 1.0).abs() < 1e-6);
                assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            }
        }
    }
}
