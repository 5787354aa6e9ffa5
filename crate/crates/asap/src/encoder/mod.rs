//! Contextual token encoders.
//!
//! [`TinyEncoder`] is a self-contained small transformer that trains on a
//! laptop and honors the same output contract a pretrained contextual
//! encoder would: a `d x Z` token-embedding matrix plus a pooled review
//! vector taken from position 0. Any pretrained binding can plug in via
//! [`ContextualEncoder`].

mod tokenizer;

pub use tokenizer::{tokenize, Vocab, PAD_ID, PAD_TOKEN, START_ID, START_TOKEN, UNK_ID, UNK_TOKEN};

use crate::autodiff::{Graph, NodeId};
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("text is empty")]
    EmptyText,
    #[error("token id {0} out of vocabulary (size {1})")]
    OutOfVocab(u32, usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// A tokenized review: token ids plus a validity mask distinguishing real
/// tokens from padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub valid: Vec<bool>,
}

impl TokenSequence {
    pub fn new(ids: Vec<u32>) -> Self {
        let valid = vec![true; ids.len()];
        TokenSequence { ids, valid }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Extend with PAD tokens (marked invalid) up to `len`.
    pub fn pad_to(&self, len: usize) -> TokenSequence {
        assert!(len >= self.len());
        let mut ids = self.ids.clone();
        let mut valid = self.valid.clone();
        ids.resize(len, PAD_ID);
        valid.resize(len, false);
        TokenSequence { ids, valid }
    }
}

/// Encoder output for one sequence: token embeddings `H` (`d x Z`,
/// columns are tokens), the pooled review vector, and the validity mask.
/// Columns at invalid positions are meaningless and must be skipped via
/// the mask.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub h: Array2<f64>,
    pub pooled: Array1<f64>,
    pub valid: Vec<bool>,
}

impl EncoderOutput {
    pub fn hidden_size(&self) -> usize {
        self.h.nrows()
    }

    pub fn seq_len(&self) -> usize {
        self.h.ncols()
    }
}

/// Contract any contextual encoder binding must satisfy.
pub trait ContextualEncoder {
    fn hidden_size(&self) -> usize;
    fn encode(&self, seq: &TokenSequence) -> Result<EncoderOutput, EncoderError>;
}

fn default_max_len() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Hidden size; must be divisible by `heads`.
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    pub vocab_size: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    pub init_seed: u64,
}

impl EncoderConfig {
    pub fn tiny_default(init_seed: u64) -> Self {
        EncoderConfig {
            d: 64,
            layers: 2,
            heads: 4,
            vocab_size: 0,
            max_len: 512,
            init_seed,
        }
    }

    pub fn validate(&self) {
        assert!(self.d > 0 && self.d % self.heads == 0, "d must be divisible by heads");
        assert!(self.layers > 0);
        assert!(self.max_len >= 2);
    }

    fn ff(&self) -> usize {
        2 * self.d
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerParams {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub ln1_gain: Array2<f64>,
    pub ln1_bias: Array2<f64>,
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
    pub ln2_gain: Array2<f64>,
    pub ln2_bias: Array2<f64>,
}

/// All trainable encoder weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderParams {
    pub token_embed: Array2<f64>,
    pub pos_embed: Array2<f64>,
    pub layers: Vec<LayerParams>,
}

impl EncoderParams {
    pub fn init(config: &EncoderConfig, vocab_size: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let normal = Normal::new(0.0, 0.02).unwrap();
        let d = config.d;
        let mut sample = |rows: usize, cols: usize| {
            Array2::from_shape_fn((rows, cols), |_| normal.sample(&mut rng))
        };
        let token_embed = sample(d, vocab_size);
        let pos_embed = sample(d, config.max_len);
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                wq: sample(d, d),
                wk: sample(d, d),
                wv: sample(d, d),
                wo: sample(d, d),
                ln1_gain: Array2::ones((d, 1)),
                ln1_bias: Array2::zeros((d, 1)),
                w1: sample(config.ff(), d),
                b1: Array2::zeros((config.ff(), 1)),
                w2: sample(d, config.ff()),
                b2: Array2::zeros((d, 1)),
                ln2_gain: Array2::ones((d, 1)),
                ln2_bias: Array2::zeros((d, 1)),
            })
            .collect();
        EncoderParams {
            token_embed,
            pos_embed,
            layers,
        }
    }

    /// Named tensors in the canonical flat order used by the optimizer and
    /// the gradient extraction. `leaves` must mirror this order.
    pub fn named(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = vec![
            ("token_embed".to_string(), &self.token_embed),
            ("pos_embed".to_string(), &self.pos_embed),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.wq"), &l.wq));
            out.push((format!("layer{i}.wk"), &l.wk));
            out.push((format!("layer{i}.wv"), &l.wv));
            out.push((format!("layer{i}.wo"), &l.wo));
            out.push((format!("layer{i}.ln1_gain"), &l.ln1_gain));
            out.push((format!("layer{i}.ln1_bias"), &l.ln1_bias));
            out.push((format!("layer{i}.w1"), &l.w1));
            out.push((format!("layer{i}.b1"), &l.b1));
            out.push((format!("layer{i}.w2"), &l.w2));
            out.push((format!("layer{i}.b2"), &l.b2));
            out.push((format!("layer{i}.ln2_gain"), &l.ln2_gain));
            out.push((format!("layer{i}.ln2_bias"), &l.ln2_bias));
        }
        out
    }

    pub fn flat_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out: Vec<&mut Array2<f64>> = vec![&mut self.token_embed, &mut self.pos_embed];
        for l in self.layers.iter_mut() {
            out.push(&mut l.wq);
            out.push(&mut l.wk);
            out.push(&mut l.wv);
            out.push(&mut l.wo);
            out.push(&mut l.ln1_gain);
            out.push(&mut l.ln1_bias);
            out.push(&mut l.w1);
            out.push(&mut l.b1);
            out.push(&mut l.w2);
            out.push(&mut l.b2);
            out.push(&mut l.ln2_gain);
            out.push(&mut l.ln2_bias);
        }
        out
    }
}

/// Leaf node ids for every encoder tensor, in the same order as
/// [`EncoderParams::named`].
pub struct EncoderParamNodes {
    pub token_embed: NodeId,
    pub pos_embed: NodeId,
    pub layers: Vec<Vec<NodeId>>,
    flat: Vec<NodeId>,
}

impl EncoderParamNodes {
    pub fn flat(&self) -> &[NodeId] {
        &self.flat
    }
}

/// The built-in small transformer encoder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TinyEncoder {
    pub config: EncoderConfig,
    pub vocab: Vocab,
    pub params: EncoderParams,
}

impl TinyEncoder {
    /// Initialize fresh weights for the vocabulary.
    pub fn new(mut config: EncoderConfig, vocab: Vocab) -> Self {
        config.vocab_size = vocab.len();
        config.validate();
        let params = EncoderParams::init(&config, vocab.len());
        TinyEncoder {
            config,
            vocab,
            params,
        }
    }

    pub fn tokenize_to_sequence(&self, text: &str) -> Result<TokenSequence, EncoderError> {
        let tokens = tokenize(text, self.config.max_len)?;
        Ok(TokenSequence::new(self.vocab.to_ids(&tokens)))
    }

    fn check_sequence(&self, seq: &TokenSequence) -> Result<(), EncoderError> {
        if seq.ids.len() != seq.valid.len() {
            return Err(EncoderError::ShapeMismatch(format!(
                "ids len {} vs valid len {}",
                seq.ids.len(),
                seq.valid.len()
            )));
        }
        if seq.is_empty() {
            return Err(EncoderError::EmptyText);
        }
        if seq.ids.len() > self.config.max_len {
            return Err(EncoderError::ShapeMismatch(format!(
                "sequence length {} exceeds max_len {}",
                seq.ids.len(),
                self.config.max_len
            )));
        }
        for &id in &seq.ids {
            if id as usize >= self.vocab.len() {
                return Err(EncoderError::OutOfVocab(id, self.vocab.len()));
            }
        }
        Ok(())
    }

    /// Insert one leaf per parameter tensor, in canonical order.
    pub fn param_leaves(&self, g: &mut Graph) -> EncoderParamNodes {
        let mut flat = Vec::new();
        let token_embed = g.leaf(self.params.token_embed.clone());
        let pos_embed = g.leaf(self.params.pos_embed.clone());
        flat.push(token_embed);
        flat.push(pos_embed);
        let mut layers = Vec::new();
        for l in &self.params.layers {
            let ids: Vec<NodeId> = [
                &l.wq, &l.wk, &l.wv, &l.wo, &l.ln1_gain, &l.ln1_bias, &l.w1, &l.b1, &l.w2,
                &l.b2, &l.ln2_gain, &l.ln2_bias,
            ]
            .into_iter()
            .map(|t| g.leaf(t.clone()))
            .collect();
            flat.extend(&ids);
            layers.push(ids);
        }
        EncoderParamNodes {
            token_embed,
            pos_embed,
            layers,
            flat,
        }
    }

    /// Build the forward graph for one sequence; returns the node holding
    /// `H` (`d x Z`). The pooled vector is column 0 of `H`.
    pub fn build_graph(
        &self,
        g: &mut Graph,
        nodes: &EncoderParamNodes,
        seq: &TokenSequence,
    ) -> Result<NodeId, EncoderError> {
        self.check_sequence(seq)?;
        let z = seq.len();
        let head_dim = self.config.d / self.config.heads;

        let ids: Vec<usize> = seq.ids.iter().map(|&i| i as usize).collect();
        let tok = g.gather_cols(nodes.token_embed, ids);
        let pos = g.gather_cols(nodes.pos_embed, (0..z).collect());
        let mut x = g.add(tok, pos);

        for layer in &nodes.layers {
            let [wq, wk, wv, wo, ln1_gain, ln1_bias, w1, b1, w2, b2, ln2_gain, ln2_bias] =
                layer[..]
            else {
                unreachable!("layer node arity");
            };
            let q = g.matmul(wq, x);
            let k = g.matmul(wk, x);
            let v = g.matmul(wv, x);
            let mut head_outputs = Vec::with_capacity(self.config.heads);
            for h in 0..self.config.heads {
                let start = h * head_dim;
                let qh = g.slice_rows(q, start, head_dim);
                let kh = g.slice_rows(k, start, head_dim);
                let vh = g.slice_rows(v, start, head_dim);
                let kt = g.transpose(kh);
                // rows index keys, columns index queries
                let scores = g.matmul(kt, qh);
                let scaled = g.scale(scores, 1.0 / (head_dim as f64).sqrt());
                let attn = g.masked_softmax_cols(scaled, seq.valid.clone());
                head_outputs.push(g.matmul(vh, attn));
            }
            let concat = g.concat_rows(&head_outputs);
            let proj = g.matmul(wo, concat);
            let res = g.add(x, proj);
            x = g.layer_norm_cols(res, ln1_gain, ln1_bias);

            let h1 = g.matmul(w1, x);
            let h1b = g.add_col(h1, b1);
            let act = g.tanh(h1b);
            let h2 = g.matmul(w2, act);
            let h2b = g.add_col(h2, b2);
            let res2 = g.add(x, h2b);
            x = g.layer_norm_cols(res2, ln2_gain, ln2_bias);
        }
        Ok(x)
    }
}

impl ContextualEncoder for TinyEncoder {
    fn hidden_size(&self) -> usize {
        self.config.d
    }

    fn encode(&self, seq: &TokenSequence) -> Result<EncoderOutput, EncoderError> {
        let mut g = Graph::new();
        let nodes = self.param_leaves(&mut g);
        let h_node = self.build_graph(&mut g, &nodes, seq)?;
        let h = g.value(h_node).clone();
        let pooled = h.column(0).to_owned();
        Ok(EncoderOutput {
            h,
            pooled,
            valid: seq.valid.clone(),
        })
    }
}
