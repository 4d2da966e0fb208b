//! Next-token language models.
//!
//! Every model answers one question: the `k` most probable next tokens for a
//! prefix, with natural-log probabilities, sorted best first (ties by id).

mod ngram;
mod remote;
pub mod stub;

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::vocab::{TokenId, Vocabulary};

pub use ngram::{NgramLm, NgramModel, DEFAULT_OOV_FLOOR};
pub use remote::{RemoteConfig, RemoteLm};

/// Default number of candidates requested per prefix.
pub const DEFAULT_TOP_K: usize = 5000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("server answered HTTP {status}: {excerpt}")]
    Status { status: u16, excerpt: String },
    #[error("protocol error: {message} (payload: {excerpt})")]
    Protocol { message: String, excerpt: String },
    #[error("ARPA format error at line {line}: {message}")]
    Arpa { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl LmError {
    /// Whether repeating the request may succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            LmError::Transport(_) | LmError::Timeout => true,
            LmError::Status { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmCandidate {
    pub token: TokenId,
    pub log_prob: f64,
}

/// Sorts best first, breaking ties by token id.
pub fn sort_candidates(c: &mut [LmCandidate]) {
    c.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob).then(a.token.cmp(&b.token)));
}

pub trait LanguageModel: Send + Sync {
    fn top_k(&self, prefix: &[TokenId], k: usize) -> Result<Vec<LmCandidate>, LmError>;

    /// Answers several prefixes; results are in input order.
    fn top_k_batch(&self, prefixes: &[Vec<TokenId>], k: usize) -> Vec<Result<Vec<LmCandidate>, LmError>> {
        prefixes.iter().map(|p| self.top_k(p, k)).collect()
    }
}

/// Every token, EOS included, is equally likely.
#[derive(Debug, Clone)]
pub struct UniformLm {
    size: usize,
}

impl UniformLm {
    pub fn new(vocab: &Vocabulary) -> Self {
        Self { size: vocab.len() }
    }
}

impl LanguageModel for UniformLm {
    fn top_k(&self, _prefix: &[TokenId], k: usize) -> Result<Vec<LmCandidate>, LmError> {
        if k == 0 {
            return Err(LmError::InvalidK);
        }
        let lp = -(self.size as f64).ln();
        Ok((0..self.size.min(k)).map(|i| LmCandidate { token: TokenId(i as u32), log_prob: lp }).collect())
    }
}

/// Per-utterance memo of `prefix -> top_k`, so identical prefixes are only
/// sent to the model once.
pub struct MemoLm<'a> {
    inner: &'a dyn LanguageModel,
    memo: HashMap<Vec<TokenId>, (usize, Arc<Vec<LmCandidate>>)>,
    evaluations: usize,
}

impl<'a> MemoLm<'a> {
    pub fn new(inner: &'a dyn LanguageModel) -> Self {
        Self { inner, memo: HashMap::new(), evaluations: 0 }
    }

    /// Number of requests that reached the underlying model.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn distinct_prefixes(&self) -> usize {
        self.memo.len()
    }

    fn cached(&self, prefix: &[TokenId], k: usize) -> Option<Arc<Vec<LmCandidate>>> {
        let (asked, list) = self.memo.get(prefix)?;
        if *asked >= k || list.len() < *asked {
            if list.len() <= k {
                Some(Arc::clone(list))
            } else {
                Some(Arc::new(list[..k].to_vec()))
            }
        } else {
            None
        }
    }

    /// Fetches all missing prefixes in one batch.
    pub fn prefetch(&mut self, prefixes: &[Vec<TokenId>], k: usize) -> Result<(), LmError> {
        let mut missing: Vec<Vec<TokenId>> = Vec::new();
        for p in prefixes {
            if self.cached(p, k).is_none() && !missing.contains(p) {
                missing.push(p.clone());
            }
        }
        if missing.is_empty() {
            return Ok(());
        }
        let results = self.inner.top_k_batch(&missing, k);
        self.evaluations += missing.len();
        for (p, r) in missing.into_iter().zip(results) {
            self.memo.insert(p, (k, Arc::new(r?)));
        }
        Ok(())
    }

    pub fn top_k(&mut self, prefix: &[TokenId], k: usize) -> Result<Arc<Vec<LmCandidate>>, LmError> {
        if let Some(c) = self.cached(prefix, k) {
            return Ok(c);
        }
        let list = Arc::new(self.inner.top_k(prefix, k)?);
        self.evaluations += 1;
        self.memo.insert(prefix.to_vec(), (k, Arc::clone(&list)));
        Ok(list)
    }
}
