//! Optimization loop, checkpointing, and deterministic replay.

mod adam;

pub use adam::{clip_global_norm, AdamState};

use crate::corpus::{Dataset, Split};
use crate::encoder::{ContextualEncoder, TinyEncoder};
use crate::evaluation::{evaluate_acsa, evaluate_rp};
use crate::joint::{
    build_batch_graph, predict_review, HeadParams, JointPrediction, LossWeights, PreparedReview,
};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("taxonomy mismatch: {0}")]
    TaxonomyMismatch(String),
    #[error("non-finite loss at step {step} (epoch {epoch}, batch {batch})")]
    NonFiniteLoss {
        step: u64,
        epoch: usize,
        batch: usize,
    },
    #[error("refusing to train on the {0} split")]
    SplitMisuse(Split),
    #[error(transparent)]
    Joint(#[from] crate::joint::JointError),
    #[error(transparent)]
    Eval(#[from] crate::evaluation::EvalError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

fn default_batch_size() -> usize {
    16
}
fn default_epochs() -> usize {
    3
}
fn default_lr() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_max_len() -> usize {
    512
}

/// Training protocol knobs. Defaults follow the standard recipe:
/// Adam(0.9, 0.999), 3 epochs, batch size 16, max sequence length 512,
/// learning rate 1e-3 for the tiny encoder (a pretrained-adapter path
/// would use 5e-5).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_eps")]
    pub adam_eps: f64,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub loss_weights: LossWeights,
    /// Linear warmup steps; 0 disables (constant schedule).
    #[serde(default)]
    pub warmup_steps: u64,
    /// Global-norm gradient clipping; off by default.
    #[serde(default)]
    pub grad_clip: Option<f64>,
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: default_batch_size(),
            epochs: default_epochs(),
            learning_rate: default_lr(),
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_eps: default_eps(),
            max_len: default_max_len(),
            seed: 0,
            loss_weights: LossWeights::default(),
            warmup_steps: 0,
            grad_clip: None,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) {
        assert!(self.batch_size >= 1);
        assert!(self.epochs >= 1);
        assert!(self.learning_rate > 0.0);
        assert!((0.0..1.0).contains(&self.adam_beta1));
        assert!((0.0..1.0).contains(&self.adam_beta2));
    }
}

/// Dev metrics snapshot recorded per epoch and inside checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevMetrics {
    pub macro_f1: f64,
    pub accuracy: f64,
    pub mae: f64,
    pub rp_accuracy: f64,
}

/// A serializable snapshot of the whole training state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    /// Taxonomy fingerprint; loading against a mismatched taxonomy fails.
    pub taxonomy_fingerprint: String,
    pub encoder: TinyEncoder,
    pub heads: HeadParams,
    pub optimizer: Option<AdamState>,
    pub epoch: usize,
    pub step: u64,
    pub dev_metrics: Option<DevMetrics>,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut ckpt: Checkpoint = serde_json::from_reader(file)?;
        ckpt.encoder.vocab.rebuild_index();
        Ok(ckpt)
    }
}

/// One optimizer step, as reported to the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub loss_acsa: f64,
    pub loss_rp: f64,
    pub loss_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub dev: Option<DevMetrics>,
}

/// Structured training events, emitted in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainEvent {
    Step(StepRecord),
    Epoch(EpochRecord),
}

/// Everything `train` hands back: per-epoch history and where the
/// tracked checkpoints went.
#[derive(Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub steps: Vec<StepRecord>,
    /// (epoch, path) of the best-dev-Macro-F1 checkpoint, when a dev set
    /// and a checkpoint dir were given.
    pub best_macro_f1: Option<(usize, PathBuf)>,
    /// (epoch, path) of the best-dev-MAE checkpoint.
    pub best_mae: Option<(usize, PathBuf)>,
    pub final_checkpoint: Option<PathBuf>,
}

fn check_taxonomy(a: &Dataset, b: &Dataset) -> Result<(), TrainError> {
    if a.taxonomy.fingerprint() != b.taxonomy.fingerprint() {
        return Err(TrainError::TaxonomyMismatch(format!(
            "{} vs {}",
            a.taxonomy.fingerprint(),
            b.taxonomy.fingerprint()
        )));
    }
    Ok(())
}

/// Train the joint model in place. Deterministic for a fixed seed and
/// config: two runs produce identical per-step loss sequences.
pub fn train(
    train_ds: &Dataset,
    dev_ds: Option<&Dataset>,
    cfg: &TrainConfig,
    encoder: &mut TinyEncoder,
    heads: &mut HeadParams,
    mut on_event: impl FnMut(&TrainEvent),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate();
    if train_ds.split == Split::Test {
        return Err(TrainError::SplitMisuse(Split::Test));
    }
    if let Some(dev) = dev_ds {
        if dev.split == Split::Test {
            return Err(TrainError::SplitMisuse(Split::Test));
        }
        check_taxonomy(train_ds, dev)?;
    }
    if heads.n_aspects() != train_ds.taxonomy.len() {
        return Err(TrainError::TaxonomyMismatch(format!(
            "heads cover {} aspects, dataset taxonomy has {}",
            heads.n_aspects(),
            train_ds.taxonomy.len()
        )));
    }

    let prepared: Vec<PreparedReview> = train_ds
        .reviews
        .iter()
        .map(|r| PreparedReview::from_review(r, encoder))
        .collect::<Result<_, _>>()?;

    let shapes: Vec<(usize, usize)> = encoder
        .params
        .named()
        .iter()
        .map(|(_, t)| t.dim())
        .chain(heads.named().iter().map(|(_, t)| t.dim()))
        .collect();
    let mut adam = AdamState::new(
        cfg.learning_rate,
        cfg.adam_beta1,
        cfg.adam_beta2,
        cfg.adam_eps,
        &shapes,
    );

    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut outcome = TrainOutcome {
        history: Vec::new(),
        steps: Vec::new(),
        best_macro_f1: None,
        best_mae: None,
        final_checkpoint: None,
    };
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_mae = f64::INFINITY;
    let mut step: u64 = 0;

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);

        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<PreparedReview> =
                chunk.iter().map(|&i| prepared[i].clone()).collect();
            let bg = build_batch_graph(&batch, encoder, heads, cfg.loss_weights, false)?;
            step += 1;
            let loss = bg.graph.scalar(bg.loss);
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    step,
                    epoch,
                    batch: batch_idx,
                });
            }
            let record = StepRecord {
                step,
                epoch,
                loss_acsa: bg.graph.scalar(bg.acsa),
                loss_rp: bg.graph.scalar(bg.rp),
                loss_total: loss,
            };
            on_event(&TrainEvent::Step(record.clone()));
            outcome.steps.push(record);

            let grads_all = bg.graph.gradients(bg.loss);
            let mut grads: Vec<Array2<f64>> = bg
                .enc_nodes
                .flat()
                .iter()
                .chain(bg.head_nodes.flat())
                .map(|&id| grads_all.of(id).clone())
                .collect();
            if let Some(max_norm) = cfg.grad_clip {
                clip_global_norm(&mut grads, max_norm);
            }
            let lr = if cfg.warmup_steps > 0 && step < cfg.warmup_steps {
                cfg.learning_rate * step as f64 / cfg.warmup_steps as f64
            } else {
                cfg.learning_rate
            };
            let mut params: Vec<&mut Array2<f64>> = encoder.params.flat_mut();
            params.extend(heads.flat_mut());
            adam.step(&mut params, &grads, lr);
        }

        let dev_metrics = match dev_ds {
            Some(dev) => {
                let preds = predict_with(encoder, heads, dev)?;
                let acsa = evaluate_acsa(&preds, dev)?;
                let rp = evaluate_rp(&preds, dev)?;
                Some(DevMetrics {
                    macro_f1: acsa.macro_f1,
                    accuracy: acsa.accuracy,
                    mae: rp.mae,
                    rp_accuracy: rp.accuracy,
                })
            }
            None => None,
        };
        let record = EpochRecord {
            epoch,
            dev: dev_metrics,
        };
        on_event(&TrainEvent::Epoch(record.clone()));
        outcome.history.push(record);

        if let Some(dir) = &cfg.checkpoint_dir {
            let ckpt = Checkpoint {
                version: CHECKPOINT_VERSION,
                config: cfg.clone(),
                taxonomy_fingerprint: train_ds.taxonomy.fingerprint(),
                encoder: encoder.clone(),
                heads: heads.clone(),
                optimizer: Some(adam.clone()),
                epoch,
                step,
                dev_metrics,
            };
            let path = dir.join(format!("epoch_{epoch}.json"));
            ckpt.save(&path)?;
            if epoch == cfg.epochs {
                outcome.final_checkpoint = Some(path.clone());
            }
            if let Some(m) = dev_metrics {
                if m.macro_f1 > best_f1 {
                    best_f1 = m.macro_f1;
                    outcome.best_macro_f1 = Some((epoch, path.clone()));
                }
                if m.mae < best_mae {
                    best_mae = m.mae;
                    outcome.best_mae = Some((epoch, path));
                }
            }
        }
    }
    Ok(outcome)
}

/// Inference over a dataset with live model state; no parameter mutation.
pub fn predict_with(
    encoder: &TinyEncoder,
    heads: &HeadParams,
    ds: &Dataset,
) -> Result<Vec<JointPrediction>, TrainError> {
    predict_with_trace(encoder, heads, ds, false)
}

pub fn predict_with_trace(
    encoder: &TinyEncoder,
    heads: &HeadParams,
    ds: &Dataset,
    trace: bool,
) -> Result<Vec<JointPrediction>, TrainError> {
    ds.reviews
        .iter()
        .map(|r| {
            let seq = encoder.tokenize_to_sequence(&r.text)?;
            let out = encoder.encode(&seq)?;
            Ok(predict_review(&out, heads, trace)?)
        })
        .collect::<Result<Vec<_>, crate::joint::JointError>>()
        .map_err(TrainError::from)
}

/// Inference from a saved checkpoint. The checkpoint's taxonomy
/// fingerprint must match the dataset's.
pub fn predict(ds: &Dataset, ckpt: &Checkpoint) -> Result<Vec<JointPrediction>, TrainError> {
    predict_trace(ds, ckpt, false)
}

pub fn predict_trace(
    ds: &Dataset,
    ckpt: &Checkpoint,
    trace: bool,
) -> Result<Vec<JointPrediction>, TrainError> {
    if ckpt.taxonomy_fingerprint != ds.taxonomy.fingerprint() {
        return Err(TrainError::TaxonomyMismatch(format!(
            "checkpoint {} vs dataset {}",
            ckpt.taxonomy_fingerprint,
            ds.taxonomy.fingerprint()
        )));
    }
    predict_with_trace(&ckpt.encoder, &ckpt.heads, ds, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synthetic, AspectTaxonomy};
    use crate::encoder::{EncoderConfig, Vocab};

    fn setup(seed: u64) -> (TinyEncoder, HeadParams, Dataset) {
        let tax = AspectTaxonomy::default_restaurant();
        let mut ds = synthetic::generate(&tax, 12, 100);
        ds.split = Split::Train;
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
            init_seed: seed,
        };
        let encoder = TinyEncoder::new(config, vocab);
        let heads = HeadParams::init(8, tax.len(), seed + 1);
        (encoder, heads, ds)
    }

    fn short_cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 4,
            epochs: 2,
            learning_rate: 1e-3,
            seed: 9,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn identical_seeds_give_identical_loss_sequences() {
        let run = || {
            let (mut enc, mut heads, ds) = setup(21);
            let mut steps = Vec::new();
            train(&ds, None, &short_cfg(), &mut enc, &mut heads, |e| {
                if let TrainEvent::Step(s) = e {
                    steps.push(s.loss_total);
                }
            })
            .unwrap();
            steps
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn refuses_test_split() {
        let (mut enc, mut heads, mut ds) = setup(3);
        ds.split = Split::Test;
        let err = train(&ds, None, &short_cfg(), &mut enc, &mut heads, |_| {}).unwrap_err();
        assert!(matches!(err, TrainError::SplitMisuse(Split::Test)));
    }

    #[test]
    fn checkpoint_round_trip_reproduces_dev_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let (mut enc, mut heads, ds) = setup(5);
        let mut dev = ds.clone();
        dev.split = Split::Dev;
        let cfg = TrainConfig {
            checkpoint_dir: Some(dir.path().to_path_buf()),
            epochs: 1,
            batch_size: 4,
            seed: 2,
            ..TrainConfig::default()
        };
        let outcome = train(&ds, Some(&dev), &cfg, &mut enc, &mut heads, |_| {}).unwrap();
        let path = outcome.final_checkpoint.unwrap();
        let ckpt = Checkpoint::load(&path).unwrap();
        let recorded = ckpt.dev_metrics.unwrap();

        let preds = predict(&dev, &ckpt).unwrap();
        let acsa = evaluate_acsa(&preds, &dev).unwrap();
        let rp = evaluate_rp(&preds, &dev).unwrap();
        assert_eq!(recorded.macro_f1, acsa.macro_f1);
        assert_eq!(recorded.mae, rp.mae);
    }

    #[test]
    fn predict_is_pure_and_matches_loss_path() {
        let (enc, heads, ds) = setup(8);
        let a = predict_with(&enc, &heads, &ds).unwrap();
        let b = predict_with(&enc, &heads, &ds).unwrap();
        assert_eq!(a.len(), ds.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.class_probs, y.class_probs);
            assert_eq!(x.predicted_rating, y.predicted_rating);
        }
        let fwd = crate::joint::joint_forward_loss(
            &ds.reviews,
            &enc,
            &heads,
            LossWeights::default(),
        )
        .unwrap();
        for (x, y) in a.iter().zip(&fwd.predictions) {
            let diff = (&x.class_probs - &y.class_probs)
                .iter()
                .map(|v| v.abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-12);
        }
    }

    #[test]
    fn empty_dataset_predicts_empty() {
        let (enc, heads, ds) = setup(4);
        let empty = Dataset::new(vec![], Split::Unsplit, ds.taxonomy.clone()).unwrap();
        let ckpt = Checkpoint {
            version: CHECKPOINT_VERSION,
            config: TrainConfig::default(),
            taxonomy_fingerprint: ds.taxonomy.fingerprint(),
            encoder: enc,
            heads,
            optimizer: None,
            epoch: 0,
            step: 0,
            dev_metrics: None,
        };
        assert!(predict(&empty, &ckpt).unwrap().is_empty());
    }

    #[test]
    fn taxonomy_mismatch_rejected() {
        let (enc, heads, ds) = setup(4);
        let other_tax = AspectTaxonomy::new(vec![crate::corpus::AspectEntry {
            name: "X#y".into(),
            definition: String::new(),
        }]);
        let other = Dataset::new(vec![], Split::Unsplit, other_tax).unwrap();
        let ckpt = Checkpoint {
            version: CHECKPOINT_VERSION,
            config: TrainConfig::default(),
            taxonomy_fingerprint: ds.taxonomy.fingerprint(),
            encoder: enc,
            heads,
            optimizer: None,
            epoch: 0,
            step: 0,
            dev_metrics: None,
        };
        assert!(matches!(
            predict(&other, &ckpt),
            Err(TrainError::TaxonomyMismatch(_))
        ));
    }
}
