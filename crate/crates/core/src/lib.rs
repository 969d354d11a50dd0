//! Sentence-level aspect attribution for multi-aspect review rating.
//!
//! A document is a list of sentences. An encoder turns each sentence into a
//! feature vector, and an attribution head assigns every sentence a
//! distribution over aspects together with a rating score. Per-aspect
//! document ratings are pooled from those sentence scores, so a trained
//! model can point at the sentences behind each aspect rating.
//!
//! The crate carries its own small reverse-mode autodiff engine
//! ([`tensor`]) and everything around it: text handling ([`text`]),
//! encoders, heads, training, evaluation and snippet extraction.

pub mod attribution;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod heads;
pub mod model;
mod params;
pub mod selftest;
pub mod tensor;
pub mod text;
pub mod training;

pub use attribution::{DocumentView, Polarity, Snippet};
pub use encoders::{EncoderConfig, EncoderKind};
pub use error::{Error, Result};
pub use evaluation::MetricReport;
pub use heads::{AttributionResult, MaskMode, Prediction, PredictionSet, Variant};
pub use model::{Architecture, Model, ModelConfig};
pub use tensor::{Graph, ParamStore, Tensor, Var};
pub use text::{AspectSet, CorpusRecord, ReviewDocument, SentenceLabel, Vocabulary};
pub use training::{Checkpoint, TrainConfig};
