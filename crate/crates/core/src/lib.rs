//! Context-dependent CTC losses over explicit finite-state topologies.
//!
//! The crate builds decoding and numerator automata for context-independent,
//! bi-character, and tri-character symbol inventories, runs exact
//! forward-backward over them, and exposes three training losses: locally
//! normalized CTC, globally normalized CTC-G, and CTC-GB with
//! context-dependent blanks. Prototypes for the scoring layer come either
//! from a look-up table or from a character-embedding network that
//! generalizes to unseen contexts. A small synthetic-speech harness trains
//! end to end and decodes with a character n-gram LM.
//!
//! Everything is generic over the float type through [`scalar::Scalar`];
//! the `*64` aliases fix `f64`, the precision all oracle comparisons use.

pub mod alphabet;
pub mod cde;
pub mod checkpoint;
pub mod config;
pub mod decoder;
pub mod error;
pub mod experiment;
pub mod forward_backward;
pub mod graph;
pub mod loss;
pub mod mat;
pub mod model;
pub mod oracle;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};

pub type Mat64 = mat::Mat<f64>;
pub type ScoreMatrix64 = forward_backward::ScoreMatrix<f64>;
pub type Posterior64 = forward_backward::Posterior<f64>;
pub type LossResult64 = loss::LossResult<f64>;
pub type CdeParams64 = cde::CdeParams<f64>;
pub type PrototypeTable64 = cde::PrototypeTable<f64>;
pub type Encoder64 = model::Encoder<f64>;
pub type Model64 = model::Model<f64>;
pub type Utterance64 = model::Utterance<f64>;
pub type Adam64 = model::Adam<f64>;
pub type NGramLM64 = decoder::NGramLM<f64>;
