//! LM-guided iterative CTC decoding.
//!
//! The decoder grows token hypotheses one token at a time: a language model
//! proposes the next tokens, a CTC forced aligner scores each proposal against
//! the emission matrix, and a beam keeps the best combined scores. Greedy and
//! prefix-beam baselines and a WER/CER harness are included for comparison.

pub mod aligner;
pub mod baselines;
pub mod decoder;
pub mod emissions;
pub mod eval;
pub mod lm;
pub mod synth;
pub mod vocab;

pub use aligner::{AlignOptions, AlignState, AlignStats, AlignerCache, AlignmentResult};
pub use decoder::{decode, DecoderConfig, Hypothesis, StopReason};
pub use emissions::{CharAlphabet, EmissionMatrix};
pub use lm::{LanguageModel, NgramLm, NgramModel, RemoteLm, UniformLm};
pub use vocab::{TokenId, Vocabulary};
