//! Corpus pipeline for formality transfer and formality-sensitive machine
//! translation: preprocessing, n-gram language models, cross-entropy
//! difference selection, joint BPE, multi-task dataset assembly, and
//! evaluation (BLEU, significance tests, human-judgment aggregation).

pub mod assembly;
pub mod bpe;
pub mod ced;
pub mod error;
pub mod humaneval;
pub mod metrics;
pub mod ngram;
pub mod style;
pub mod synthetic;
pub mod textproc;

pub use error::{Error, Result};
pub use ngram::{lm_cross_entropy, lm_train, LmConfig, NGramModel, Smoothing};
pub use style::{Style, StyleTag};
pub use textproc::{RawLine, TokenSeq, TruecaseModel};
