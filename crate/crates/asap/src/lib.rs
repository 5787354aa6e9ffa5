//! Joint aspect-category sentiment analysis (ACSA) and review rating
//! prediction (RP) for restaurant-style review corpora.
//!
//! The pipeline: load and curate a review corpus ([`corpus`]), encode
//! reviews into contextual token embeddings ([`encoder`]), run per-aspect
//! attention-pooling classification heads plus a rating regression head
//! ([`joint`]), train the whole thing with Adam ([`training`]), and score
//! the results with Macro-F1 / accuracy / MAE ([`evaluation`]).

pub mod autodiff;
pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod evaluation;
pub mod joint;
pub mod training;

pub use corpus::{AspectTaxonomy, Dataset, Polarity, Review, Split};
pub use encoder::{EncoderConfig, EncoderOutput, TinyEncoder, TokenSequence};
pub use joint::{HeadParams, JointPrediction};
pub use training::{Checkpoint, TrainConfig};
