//! # seqlab
//!
//! A self-contained sequence-labeling toolkit: a Bi-LSTM-CRF named-entity
//! recognizer built end to end on its own dense-tensor reverse-mode
//! autodiff, with skip-gram word embeddings, character-level features,
//! Nadam training, and chunk-level evaluation. No external machine-learning
//! framework is involved.
//!
//! ## Layout
//!
//! | module | contents |
//! |---|---|
//! | [`tensor`] | dense tensors, the differentiation tape, forward ops and the reverse sweep |
//! | [`params`] | named parameter storage shared by model, optimizer, and checkpoints |
//! | [`features`] | vocabularies, word/character embeddings, skip-gram training, one-hot tags |
//! | [`recurrent`] | LSTM cell, bidirectional encoders, character features, the stacked sentence encoder |
//! | [`crf`] | sequence scoring, exact log-partition, NLL with analytic gradients, Viterbi |
//! | [`optim`] | Nadam updates and the two-phase learning-rate schedule |
//! | [`data`] | 4-column corpus IO, IOB2 validation, batching, synthetic data |
//! | [`eval`] | chunk-level precision/recall/F1 with the micro-averaged total row |
//! | [`model`] | the assembled tagger |
//! | [`train`] | the training loop with validation-based model selection |
//! | [`config`] / [`checkpoint`] / [`cli`] | run configuration, binary checkpoints, command entry points |
//!
//! The `examples/` directory holds one runnable program per major
//! capability (`autodiff_basics`, `lstm_encoding`, `crf_decode`,
//! `skipgram_embeddings`, `evaluate_report`, `train_ner`); the thin
//! `seqlab` binary exposes the `embed-train`, `train`, `eval`, `tag`, and
//! `synth` commands.
//!
//! Element precision is generic over [`tensor::Real`] (`f32` for training,
//! `f64` for verification), and every code path is deterministic for a
//! fixed seed.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod crf;
pub mod data;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod optim;
pub mod params;
pub mod recurrent;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
