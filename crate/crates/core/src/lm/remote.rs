//! HTTP client for a next-token service.
//!
//! Request: `POST {endpoint}/v1/topk` with `{"prefix": [surface...], "k": n}`.
//! Response: `{"log_base": "e" | "10", "candidates": [{"token": s, "logprob": x}]}`.

use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;

use super::{sort_candidates, LanguageModel, LmCandidate, LmError};
use crate::vocab::{TokenId, Vocabulary};

const EXCERPT_LEN: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8080".into(),
            timeout: Duration::from_secs(30),
            max_retries: 2,
            max_in_flight: 4,
        }
    }
}

#[derive(Deserialize)]
struct Reply {
    log_base: Option<String>,
    candidates: Vec<ReplyCandidate>,
}

#[derive(Deserialize)]
struct ReplyCandidate {
    token: String,
    logprob: f64,
}

fn excerpt(s: &str) -> String {
    let mut end = s.len().min(EXCERPT_LEN);
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    s[..end].to_string()
}

pub struct RemoteLm {
    config: RemoteConfig,
    vocab: Arc<Vocabulary>,
    agent: ureq::Agent,
    url: String,
}

impl RemoteLm {
    pub fn new(config: RemoteConfig, vocab: Arc<Vocabulary>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        let url = format!("{}/v1/topk", config.endpoint.trim_end_matches('/'));
        Self { config, vocab, agent, url }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn request_once(&self, body: &str) -> Result<String, LmError> {
        let mut resp =
            self.agent.post(&self.url).header("content-type", "application/json").send(body).map_err(|e| match e {
                ureq::Error::Timeout(_) => LmError::Timeout,
                ureq::Error::Io(ref io) if io.kind() == std::io::ErrorKind::TimedOut => LmError::Timeout,
                other => LmError::Transport(other.to_string()),
            })?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => LmError::Timeout,
            other => LmError::Transport(other.to_string()),
        })?;
        if status != 200 {
            return Err(LmError::Status { status, excerpt: excerpt(&text) });
        }
        Ok(text)
    }

    fn parse(&self, text: &str, k: usize) -> Result<Vec<LmCandidate>, LmError> {
        let protocol = |message: String| LmError::Protocol { message, excerpt: excerpt(text) };
        let reply: Reply = serde_json::from_str(text).map_err(|e| protocol(e.to_string()))?;
        let scale = match reply.log_base.as_deref() {
            None | Some("e") => 1.0,
            Some("10") => std::f64::consts::LN_10,
            Some(other) => return Err(protocol(format!("unsupported log_base {other:?}"))),
        };
        let mut out = Vec::with_capacity(reply.candidates.len());
        let mut unknown = 0usize;
        for c in reply.candidates {
            if !c.logprob.is_finite() && c.logprob != f64::NEG_INFINITY || c.logprob > 1e-9 {
                return Err(protocol(format!("invalid logprob {} for {:?}", c.logprob, c.token)));
            }
            match self.vocab.lookup_surface(&c.token) {
                Some(id) => {
                    if !out.iter().any(|x: &LmCandidate| x.token == id) {
                        out.push(LmCandidate { token: id, log_prob: c.logprob * scale });
                    }
                }
                None => unknown += 1,
            }
        }
        if unknown > 0 {
            log::warn!("remote LM returned {unknown} tokens outside the vocabulary");
        }
        sort_candidates(&mut out);
        out.truncate(k);
        Ok(out)
    }
}

impl LanguageModel for RemoteLm {
    fn top_k(&self, prefix: &[TokenId], k: usize) -> Result<Vec<LmCandidate>, LmError> {
        if k == 0 {
            return Err(LmError::InvalidK);
        }
        let surfaces: Vec<&str> = prefix.iter().map(|&t| self.vocab.token(t).surface.as_str()).collect();
        let body = serde_json::json!({ "prefix": surfaces, "k": k }).to_string();
        let mut attempt = 0;
        loop {
            match self.request_once(&body) {
                Ok(text) => return self.parse(&text, k),
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    attempt += 1;
                    log::debug!("remote LM retry {attempt}: {e}");
                    std::thread::sleep(Duration::from_millis(50 << attempt.min(6)));
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn top_k_batch(&self, prefixes: &[Vec<TokenId>], k: usize) -> Vec<Result<Vec<LmCandidate>, LmError>> {
        let width = self.config.max_in_flight.max(1);
        let mut out = Vec::with_capacity(prefixes.len());
        for chunk in prefixes.chunks(width) {
            let results: Vec<_> = std::thread::scope(|s| {
                let handles: Vec<_> = chunk.iter().map(|p| s.spawn(move || self.top_k(p, k))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(LmError::Transport("worker panicked".into()))))
                    .collect()
            });
            out.extend(results);
        }
        out
    }
}
