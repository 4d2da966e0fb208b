//! Iterative LM-guided beam decoder.
//!
//! Each iteration asks the language model for the top-K next tokens of every
//! live hypothesis, force-aligns each candidate after the hypothesis' frames,
//! and keeps the B best of all extensions and finished hypotheses under
//!
//! ```text
//! score = acoustic + alpha * lm + beta * tokens
//! ```
//!
//! A live hypothesis carries the acoustic score of its best partial
//! alignment. When it finishes, the frames after its last token are scored
//! as blanks so that finished hypotheses compare over the whole utterance.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aligner::{
    align_from_scratch, is_log_zero, log_mul, AlignError, AlignOptions, AlignState, AlignStats, AlignerCache,
    AlignmentResult, LOG_ZERO,
};
use crate::emissions::{EmissionMatrix, EmissionView};
use crate::lm::{LanguageModel, LmCandidate, LmError, MemoLm, DEFAULT_TOP_K};
use crate::vocab::{TokenId, Vocabulary};

/// Candidate alignments are spread over the rayon pool above this count.
const PARALLEL_ALIGN_THRESHOLD: usize = 64;
const CONSISTENCY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub alpha: f64,
    pub beta: f64,
}

/// Tuned `(alpha, beta)` per dataset and language model.
pub const PRESETS: [Preset; 9] = [
    Preset { name: "wsj0-llama2", alpha: 0.0650, beta: 0.0051 },
    Preset { name: "wsj0-falcon", alpha: 0.0949, beta: 0.0073 },
    Preset { name: "wsj0-gpt2", alpha: 0.0626, beta: 0.0090 },
    Preset { name: "tedlium3-llama2", alpha: 0.0679, beta: 0.0028 },
    Preset { name: "tedlium3-falcon", alpha: 0.0695, beta: 0.0015 },
    Preset { name: "tedlium3-gpt2", alpha: 0.0689, beta: 0.0061 },
    Preset { name: "allsstar-llama2", alpha: 0.0694, beta: 0.0331 },
    Preset { name: "allsstar-falcon", alpha: 0.1379, beta: 0.0161 },
    Preset { name: "allsstar-gpt2", alpha: 0.0999, beta: 0.0449 },
];

pub const DEFAULT_PRESET: &str = "wsj0-llama2";

pub fn preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name.eq_ignore_ascii_case(name))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignMode {
    /// Extend the parent's alignment state by one token.
    #[default]
    Cached,
    /// Realign the whole token sequence from frame 0 for every candidate.
    Recompute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    pub alpha: f64,
    pub beta: f64,
    pub beam_width: usize,
    pub candidates_k: usize,
    /// `None` derives a horizon of one token per 100 ms of audio.
    pub max_iterations: Option<usize>,
    pub acoustic_floor: f64,
    pub lookahead_frames: usize,
    pub eos_margin: f64,
    /// Prune alignment end frames scoring this far (nats) below the best.
    pub frontier_beam: f64,
    pub align_mode: AlignMode,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        let p = preset(DEFAULT_PRESET).expect("default preset exists");
        Self {
            alpha: p.alpha,
            beta: p.beta,
            beam_width: 5,
            candidates_k: DEFAULT_TOP_K,
            max_iterations: None,
            acoustic_floor: 0.3,
            lookahead_frames: crate::aligner::DEFAULT_LOOKAHEAD_FRAMES,
            eos_margin: 1.0,
            frontier_beam: 30.0,
            align_mode: AlignMode::Cached,
        }
    }
}

impl DecoderConfig {
    pub fn from_preset(name: &str) -> Option<Self> {
        preset(name).map(|p| Self { alpha: p.alpha, beta: p.beta, ..Self::default() })
    }

    /// Every violated constraint, not just the first.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        if !self.alpha.is_finite() {
            errs.push(format!("alpha must be finite, got {}", self.alpha));
        }
        if !self.beta.is_finite() {
            errs.push(format!("beta must be finite, got {}", self.beta));
        }
        if self.beam_width == 0 {
            errs.push("beam_width must be at least 1".into());
        }
        if self.candidates_k == 0 {
            errs.push("candidates_k must be at least 1".into());
        }
        if self.max_iterations == Some(0) {
            errs.push("max_iterations must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.acoustic_floor) {
            errs.push(format!("acoustic_floor must be in [0, 1], got {}", self.acoustic_floor));
        }
        if self.lookahead_frames == 0 {
            errs.push("lookahead_frames must be at least 1".into());
        }
        if self.eos_margin.is_nan() || self.eos_margin < 0.0 {
            errs.push(format!("eos_margin must be non-negative, got {}", self.eos_margin));
        }
        if self.frontier_beam.is_nan() || self.frontier_beam < 0.0 {
            errs.push(format!("frontier_beam must be non-negative, got {}", self.frontier_beam));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    pub fn horizon(&self, emissions: &EmissionMatrix) -> usize {
        self.max_iterations.unwrap_or_else(|| {
            let ms = emissions.num_frames() as u64 * emissions.frame_ms() as u64;
            (ms.div_ceil(100) as usize).max(1)
        })
    }

    pub fn align_options(&self) -> AlignOptions {
        AlignOptions { window: self.lookahead_frames, overlap: true, frontier_beam: self.frontier_beam }
    }
}

/// `prev + log_p_am + alpha * log_p_lm + beta`
pub fn step_score(prev: f64, log_p_am: f64, log_p_lm: f64, config: &DecoderConfig) -> f64 {
    prev + log_p_am + config.alpha * log_p_lm + config.beta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The language model ended the sentence.
    Eos,
    /// No candidate aligns well enough to continue.
    AcousticFloor,
    /// The best alignment already reaches the last frame.
    AudioExhausted,
    /// Token budget reached.
    Horizon,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Eos => "eos",
            StopReason::AcousticFloor => "acoustic_floor",
            StopReason::AudioExhausted => "audio_exhausted",
            StopReason::Horizon => "horizon",
        })
    }
}

/// One accumulation step. Finishing without a token has `counted == false`
/// and carries only the blank tail (plus the EOS probability when stopping
/// on EOS).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub log_p_am: f64,
    pub log_p_lm: f64,
    pub counted: bool,
}

#[derive(Debug, Clone)]
pub struct Hypothesis {
    /// Includes a trailing EOS when the hypothesis stopped on it.
    pub tokens: Vec<TokenId>,
    /// Segment start frame of each entry of `tokens`.
    pub alignments: Vec<usize>,
    /// Segment end frame (exclusive) of each entry of `tokens`.
    pub segment_ends: Vec<usize>,
    pub acoustic_score: f64,
    pub lm_score: f64,
    /// Tokens excluding EOS.
    pub token_count: usize,
    pub combined_score: f64,
    pub steps: Vec<Step>,
    pub finished: Option<StopReason>,
    /// Frame after the last emitted character of the scored path.
    pub end_frame: usize,
    state: Arc<AlignState>,
}

impl Hypothesis {
    pub fn empty() -> Self {
        Self {
            tokens: Vec::new(),
            alignments: Vec::new(),
            segment_ends: Vec::new(),
            acoustic_score: 0.0,
            lm_score: 0.0,
            token_count: 0,
            combined_score: 0.0,
            steps: Vec::new(),
            finished: None,
            end_frame: 0,
            state: AlignState::root(),
        }
    }

    pub fn is_finished(&self) -> bool {
        self.finished.is_some()
    }

    pub fn state(&self) -> &Arc<AlignState> {
        &self.state
    }

    /// Tokens without the trailing EOS.
    pub fn words(&self) -> &[TokenId] {
        &self.tokens[..self.token_count]
    }

    pub fn text(&self, vocab: &Vocabulary) -> String {
        vocab.render(self.words())
    }

    /// `acoustic + alpha * lm + beta * count` from the stored parts.
    pub fn decomposed_score(&self, config: &DecoderConfig) -> f64 {
        self.acoustic_score + config.alpha * self.lm_score + config.beta * self.token_count as f64
    }

    fn push_step(&mut self, step: Step, config: &DecoderConfig) {
        self.combined_score = if step.counted {
            step_score(self.combined_score, step.log_p_am, step.log_p_lm, config)
        } else {
            self.combined_score + step.log_p_am + config.alpha * step.log_p_lm
        };
        self.acoustic_score += step.log_p_am;
        self.lm_score += step.log_p_lm;
        self.steps.push(step);
    }

    fn fill_alignments(&mut self) {
        let segs = if self.token_count == 0 { Vec::new() } else { self.state.backtrace(self.end_frame) };
        self.alignments = segs.iter().map(|a| a.start_frame).collect();
        self.segment_ends = segs.iter().map(|a| a.end_frame).collect();
    }
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("invalid decoder configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("vocabulary alphabet does not match the emission alphabet")]
    AlphabetMismatch,
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error("no hypothesis could be completed")]
    NoFeasiblePath { best_partial: Box<Hypothesis> },
    #[error("score recursion mismatch: stored {stored}, replayed {replayed}")]
    Inconsistent { stored: f64, replayed: f64 },
}

/// Replays a hypothesis' steps and checks the stored cumulative score.
pub fn recursion_check(h: &Hypothesis, config: &DecoderConfig) -> Result<f64, DecodeError> {
    let mut s = 0.0;
    let (mut am, mut lm, mut count) = (0.0, 0.0, 0usize);
    for step in &h.steps {
        s = if step.counted {
            count += 1;
            step_score(s, step.log_p_am, step.log_p_lm, config)
        } else {
            s + step.log_p_am + config.alpha * step.log_p_lm
        };
        am += step.log_p_am;
        lm += step.log_p_lm;
    }
    let decomposed = am + config.alpha * lm + config.beta * count as f64;
    let ok = count == h.token_count
        && (s - h.combined_score).abs() <= CONSISTENCY_TOLERANCE
        && (decomposed - h.combined_score).abs() <= CONSISTENCY_TOLERANCE
        && (am - h.acoustic_score).abs() <= CONSISTENCY_TOLERANCE
        && (lm - h.lm_score).abs() <= CONSISTENCY_TOLERANCE;
    if ok {
        Ok(s)
    } else {
        Err(DecodeError::Inconsistent { stored: h.combined_score, replayed: s })
    }
}

/// The `b` best hypotheses: higher score, then fewer tokens, then smaller ids.
pub fn beam_top_b(mut candidates: Vec<Hypothesis>, b: usize) -> Vec<Hypothesis> {
    candidates.sort_by(|x, y| {
        y.combined_score
            .total_cmp(&x.combined_score)
            .then(x.token_count.cmp(&y.token_count))
            .then_with(|| x.tokens.cmp(&y.tokens))
    });
    candidates.truncate(b);
    candidates
}

/// Caches shared by all decodes of one utterance (e.g. across a parameter
/// sweep): LM answers per prefix and alignment states per token prefix.
pub struct DecodeCache<'a> {
    pub lm: MemoLm<'a>,
    pub states: AlignerCache,
    infeasible: HashSet<Vec<TokenId>>,
    blank_tail: Vec<f64>,
}

impl<'a> DecodeCache<'a> {
    pub fn new(lm: &'a dyn LanguageModel, emissions: &EmissionMatrix) -> Self {
        Self {
            lm: MemoLm::new(lm),
            states: AlignerCache::new(),
            infeasible: HashSet::new(),
            blank_tail: blank_suffix(&emissions.view()),
        }
    }
}

/// `out[f]` is the log-probability of blanks on every frame from `f` on.
fn blank_suffix(view: &EmissionView) -> Vec<f64> {
    let t = view.num_frames();
    let blank = view.alphabet().blank_index();
    let mut out = vec![0.0; t + 1];
    for f in (0..t).rev() {
        out[f] = log_mul(view.log_prob(f, blank), out[f + 1]);
    }
    out
}

#[derive(Debug, Clone)]
pub struct DecodeOutput {
    pub best: Hypothesis,
    /// Final beam, best first.
    pub beam: Vec<Hypothesis>,
    pub iterations: usize,
    /// Every hypothesis that entered a beam, for consistency checks.
    pub visited: Vec<Hypothesis>,
}

#[derive(Debug, Clone, Default)]
pub struct DecodeOptions {
    /// Keep every hypothesis that entered a beam in [`DecodeOutput::visited`].
    pub record_visited: bool,
}

struct Expansion {
    token: TokenId,
    log_p_lm: f64,
    state: Arc<AlignState>,
    last: AlignmentResult,
}

/// Geometric-mean frame probability of a step: the acoustic increment spread
/// over the new token's segment. The increment is used rather than the
/// segment's own likelihood because the best path may re-segment the prefix.
pub fn step_frame_prob(log_p_am: f64, last: &AlignmentResult) -> f64 {
    let frames = (last.end_frame - last.start_frame).max(1) as f64;
    (log_p_am / frames).exp()
}

/// Outcome of evaluating a live hypothesis.
pub enum StopDecision {
    Continue,
    Finished(StopReason),
}

enum Evaluation {
    Finished { reason: StopReason, eos_log_prob: Option<f64> },
    Expand { children: Vec<Expansion>, eos_log_prob: Option<f64> },
}

struct Ctx<'c, 'a> {
    view: EmissionView<'c>,
    vocab: &'c Vocabulary,
    config: &'c DecoderConfig,
    opts: AlignOptions,
    horizon: usize,
    cache: &'c mut DecodeCache<'a>,
    stats: Option<&'c AlignStats>,
}

impl Ctx<'_, '_> {
    fn frames(&self) -> usize {
        self.view.num_frames()
    }

    fn align_children(&mut self, h: &Hypothesis, cands: &[LmCandidate]) -> Vec<Option<Arc<AlignState>>> {
        let eos = self.vocab.eos_id();
        let mut out: Vec<Option<Arc<AlignState>>> = vec![None; cands.len()];
        let mut todo = Vec::new();
        let mut key = h.tokens.clone();
        for (i, c) in cands.iter().enumerate() {
            if c.token == eos {
                continue;
            }
            key.push(c.token);
            if self.config.align_mode == AlignMode::Cached {
                if let Some(s) = self.cache.states.get(&key) {
                    out[i] = Some(Arc::clone(s));
                } else if !self.cache.infeasible.contains(&key) {
                    todo.push(i);
                }
            } else {
                todo.push(i);
            }
            key.pop();
        }
        let align = |i: &usize| -> Option<Arc<AlignState>> {
            let token = cands[*i].token;
            let result = match self.config.align_mode {
                AlignMode::Cached => {
                    let chars = &self.vocab.token(token).chars;
                    h.state.extend(chars, &self.view, &self.opts, self.stats)
                }
                AlignMode::Recompute => {
                    let seq: Vec<&[usize]> = h
                        .tokens
                        .iter()
                        .chain(std::iter::once(&token))
                        .map(|t| self.vocab.token(*t).chars.as_slice())
                        .collect();
                    align_from_scratch(&seq, &self.view, &self.opts, self.stats)
                }
            };
            match result {
                Ok(s) => Some(s),
                Err(AlignError::Infeasible) => None,
                Err(e) => unreachable!("vocabulary tokens always have characters: {e}"),
            }
        };
        let aligned: Vec<Option<Arc<AlignState>>> = if todo.len() > PARALLEL_ALIGN_THRESHOLD {
            todo.par_iter().map(align).collect()
        } else {
            todo.iter().map(align).collect()
        };
        for (i, s) in todo.into_iter().zip(aligned) {
            if self.config.align_mode == AlignMode::Cached {
                key.push(cands[i].token);
                match &s {
                    Some(s) => self.cache.states.insert(key.clone(), Arc::clone(s)),
                    None => {
                        self.cache.infeasible.insert(key.clone());
                    }
                }
                key.pop();
            }
            out[i] = s;
        }
        out
    }

    fn evaluate(&mut self, h: &Hypothesis) -> Result<Evaluation, DecodeError> {
        let (best_end, _) = h.state.best();
        if best_end == self.frames() {
            return Ok(Evaluation::Finished { reason: StopReason::AudioExhausted, eos_log_prob: None });
        }
        if h.token_count >= self.horizon {
            return Ok(Evaluation::Finished { reason: StopReason::Horizon, eos_log_prob: None });
        }
        let cands = self.cache.lm.top_k(&h.tokens, self.config.candidates_k)?;
        let eos = self.vocab.eos_id();
        let eos_log_prob = cands.iter().find(|c| c.token == eos).map(|c| c.log_prob);
        if let Some(lp) = eos_log_prob {
            let best_other = cands.iter().find(|c| c.token != eos).map(|c| c.log_prob);
            let complete = match best_other {
                None => true,
                Some(o) => lp.exp() > self.config.eos_margin * o.exp(),
            };
            if complete {
                return Ok(Evaluation::Finished { reason: StopReason::Eos, eos_log_prob: Some(lp) });
            }
        }
        let states = self.align_children(h, &cands);
        let mut children = Vec::with_capacity(cands.len());
        let mut best_prob: Option<f64> = None;
        for (c, s) in cands.iter().zip(states) {
            let Some(state) = s else { continue };
            let (end, score) = state.best();
            let last = state.last_token_alignment(end);
            if !self.vocab.token(c.token).is_whitespace() {
                let p = step_frame_prob(score - h.acoustic_score, &last);
                best_prob = Some(best_prob.map_or(p, |b: f64| b.max(p)));
            }
            children.push(Expansion { token: c.token, log_p_lm: c.log_prob, state, last });
        }
        match best_prob {
            Some(p) if p >= self.config.acoustic_floor => Ok(Evaluation::Expand { children, eos_log_prob }),
            _ => Ok(Evaluation::Finished { reason: StopReason::AcousticFloor, eos_log_prob: None }),
        }
    }

    /// Scores the unexplained frames as blanks and freezes `h`.
    fn finish(&self, h: &Hypothesis, reason: StopReason, eos_log_prob: Option<f64>) -> Option<Hypothesis> {
        let tail = &self.cache.blank_tail;
        let (end, full) = h
            .state
            .frontier()
            .iter()
            .map(|(f, s)| (f, log_mul(s, tail[f])))
            .fold((0, LOG_ZERO), |acc, (f, s)| if s > acc.1 { (f, s) } else { acc });
        if is_log_zero(full) {
            return None;
        }
        let mut out = h.clone();
        out.end_frame = end;
        out.fill_alignments();
        let step = Step { log_p_am: full - h.acoustic_score, log_p_lm: eos_log_prob.unwrap_or(0.0), counted: false };
        out.push_step(step, self.config);
        if reason == StopReason::Eos {
            out.tokens.push(self.vocab.eos_id());
            out.alignments.push(end);
            out.segment_ends.push(self.frames());
        }
        out.finished = Some(reason);
        Some(out)
    }

    fn child(&self, h: &Hypothesis, e: Expansion) -> Hypothesis {
        let (end, acoustic) = e.state.best();
        let mut out = Hypothesis {
            tokens: h.tokens.clone(),
            alignments: Vec::new(),
            segment_ends: Vec::new(),
            acoustic_score: h.acoustic_score,
            lm_score: h.lm_score,
            token_count: h.token_count + 1,
            combined_score: h.combined_score,
            steps: h.steps.clone(),
            finished: None,
            end_frame: end,
            state: e.state,
        };
        out.tokens.push(e.token);
        out.push_step(Step { log_p_am: acoustic - h.acoustic_score, log_p_lm: e.log_p_lm, counted: true }, self.config);
        debug_assert_eq!(e.last.end_frame, end);
        out
    }
}

/// Decodes one utterance.
pub fn decode(
    emissions: &EmissionMatrix,
    lm: &dyn LanguageModel,
    vocab: &Vocabulary,
    config: &DecoderConfig,
) -> Result<DecodeOutput, DecodeError> {
    let mut cache = DecodeCache::new(lm, emissions);
    decode_with(emissions, vocab, config, &mut cache, None, &DecodeOptions::default())
}

/// Like [`decode`], reusing `cache` and recording alignment work in `stats`.
pub fn decode_with<'a>(
    emissions: &EmissionMatrix,
    vocab: &Vocabulary,
    config: &DecoderConfig,
    cache: &mut DecodeCache<'a>,
    stats: Option<&AlignStats>,
    options: &DecodeOptions,
) -> Result<DecodeOutput, DecodeError> {
    config.validate().map_err(DecodeError::Config)?;
    if **vocab.alphabet() != **emissions.alphabet() {
        return Err(DecodeError::AlphabetMismatch);
    }
    let horizon = config.horizon(emissions);
    let mut ctx = Ctx { view: emissions.view(), vocab, config, opts: config.align_options(), horizon, cache, stats };
    let mut beam = vec![Hypothesis::empty()];
    let mut visited = Vec::new();
    let mut best_partial = Hypothesis::empty();
    let mut iterations = 0;
    // Every live hypothesis gains a token per round, so `horizon + 1` rounds
    // are enough to finish all of them.
    while beam.iter().any(|h| !h.is_finished()) && iterations <= horizon {
        iterations += 1;
        let live: Vec<Vec<TokenId>> = beam.iter().filter(|h| !h.is_finished()).map(|h| h.tokens.clone()).collect();
        ctx.cache.lm.prefetch(&live, config.candidates_k)?;
        let mut next = Vec::new();
        for h in beam {
            if h.is_finished() {
                next.push(h);
                continue;
            }
            if best_partial.token_count == 0 || h.combined_score > best_partial.combined_score {
                best_partial = h.clone();
            }
            match ctx.evaluate(&h)? {
                Evaluation::Finished { reason, eos_log_prob } => {
                    next.extend(ctx.finish(&h, reason, eos_log_prob));
                }
                Evaluation::Expand { children, eos_log_prob } => {
                    if let Some(lp) = eos_log_prob {
                        next.extend(ctx.finish(&h, StopReason::Eos, Some(lp)));
                    }
                    next.extend(children.into_iter().map(|e| ctx.child(&h, e)));
                }
            }
        }
        beam = beam_top_b(next, config.beam_width);
        for h in beam.iter_mut().filter(|h| !h.is_finished()) {
            h.fill_alignments();
        }
        if log::log_enabled!(log::Level::Trace) {
            for (i, h) in beam.iter().enumerate() {
                log::trace!("iter {iterations} #{i} {:.4} [{}] {:?}", h.combined_score, h.text(vocab), h.finished);
            }
        }
        if options.record_visited {
            visited.extend(beam.iter().cloned());
        }
    }
    let beam: Vec<Hypothesis> = beam
        .into_iter()
        .filter_map(|h| if h.is_finished() { Some(h) } else { ctx.finish(&h, StopReason::Horizon, None) })
        .collect();
    let beam = beam_top_b(beam, usize::MAX);
    let Some(best) = beam.first().cloned() else {
        return Err(DecodeError::NoFeasiblePath { best_partial: Box::new(best_partial) });
    };
    Ok(DecodeOutput { best, beam, iterations, visited })
}

/// Evaluates the stopping criteria for a single live hypothesis.
pub fn should_stop(
    h: &Hypothesis,
    lm: &dyn LanguageModel,
    emissions: &EmissionMatrix,
    vocab: &Vocabulary,
    config: &DecoderConfig,
) -> Result<StopDecision, DecodeError> {
    let mut cache = DecodeCache::new(lm, emissions);
    let mut ctx = Ctx {
        view: emissions.view(),
        vocab,
        config,
        opts: config.align_options(),
        horizon: config.horizon(emissions),
        cache: &mut cache,
        stats: None,
    };
    Ok(match ctx.evaluate(h)? {
        Evaluation::Finished { reason, .. } => StopDecision::Finished(reason),
        Evaluation::Expand { .. } => StopDecision::Continue,
    })
}

impl Hypothesis {
    /// Extends `self` by `token`, for building hypotheses by hand.
    pub fn extended(
        &self,
        token: TokenId,
        log_p_lm: f64,
        emissions: &EmissionMatrix,
        vocab: &Vocabulary,
        config: &DecoderConfig,
    ) -> Result<Hypothesis, AlignError> {
        let state = self.state.extend(&vocab.token(token).chars, &emissions.view(), &config.align_options(), None)?;
        let (end, acoustic) = state.best();
        let mut out = self.clone();
        out.tokens.push(token);
        out.token_count += 1;
        out.end_frame = end;
        out.state = state;
        out.push_step(Step { log_p_am: acoustic - self.acoustic_score, log_p_lm, counted: true }, config);
        out.fill_alignments();
        Ok(out)
    }
}
