//! Viterbi forced alignment of token character sequences onto CTC emissions.
//!
//! A token with characters `c1..cm` is aligned over the state sequence
//! `ε c1 ε c2 … ε cm`: every blank is optional except between repeated
//! characters, and there is no trailing blank (silence after a token belongs
//! to whatever follows it). The end frame of an alignment is exclusive: it is
//! the frame after the last emission of `cm`.
//!
//! A prefix of tokens is summarised by an [`AlignState`], whose frontier holds
//! the best log-score of the prefix for every possible end frame. Extending a
//! state re-enters the trellis one frame early, on the frame holding the
//! previous token's last character, so that the CTC repeat rule is enforced
//! across the token boundary. That overlap frame is already paid for in the
//! frontier and is not scored again.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

use crate::emissions::EmissionView;
use crate::vocab::{TokenId, Vocabulary};

/// Stand-in for `ln 0`. Anything at or below it is unreachable.
pub const LOG_ZERO: f64 = -1.0e30;
pub const DEFAULT_LOOKAHEAD_FRAMES: usize = 75;

#[inline]
pub fn is_log_zero(x: f64) -> bool {
    x <= LOG_ZERO || x.is_nan()
}

/// Saturating log-domain product.
#[inline]
pub fn log_mul(a: f64, b: f64) -> f64 {
    if is_log_zero(a) || is_log_zero(b) {
        LOG_ZERO
    } else {
        a + b
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("cannot align an empty character sequence")]
    EmptyChars,
    #[error("start frame {start} is outside the {frames} available frames")]
    StartOutOfRange { start: usize, frames: usize },
    #[error("no feasible alignment within the window")]
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignOptions {
    /// Frames a token may extend past the current position.
    pub window: usize,
    /// Splice through the previous token's final frame. Disabling this is
    /// only useful to demonstrate what goes wrong without it.
    pub overlap: bool,
    /// Frontier cells scoring worse than `best - frontier_beam` are dropped.
    pub frontier_beam: f64,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self { window: DEFAULT_LOOKAHEAD_FRAMES, overlap: true, frontier_beam: f64::INFINITY }
    }
}

/// Counters for the complexity envelope.
#[derive(Debug, Default)]
pub struct AlignStats {
    cells: AtomicU64,
    extensions: AtomicU64,
}

impl AlignStats {
    pub fn cells(&self) -> u64 {
        self.cells.load(Ordering::Relaxed)
    }

    pub fn extensions(&self) -> u64 {
        self.extensions.load(Ordering::Relaxed)
    }

    fn record(&self, cells: u64) {
        self.cells.fetch_add(cells, Ordering::Relaxed);
        self.extensions.fetch_add(1, Ordering::Relaxed);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    /// First frame of the token's segment (leading blanks included).
    pub start_frame: usize,
    /// Exclusive.
    pub end_frame: usize,
    pub log_likelihood: f64,
    /// `[start, end)` per character; together they partition the segment.
    pub char_spans: Vec<(usize, usize)>,
}

impl AlignmentResult {
    /// Geometric-mean per-frame probability along the path.
    pub fn per_frame_prob(&self) -> f64 {
        let n = (self.end_frame - self.start_frame).max(1) as f64;
        (self.log_likelihood / n).exp()
    }
}

/// Best log-score of a prefix for each exclusive end frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frontier {
    offset: usize,
    scores: Vec<f64>,
}

impl Frontier {
    pub fn single(frame: usize, score: f64) -> Self {
        Self { offset: frame, scores: vec![score] }
    }

    fn empty() -> Self {
        Self { offset: 0, scores: Vec::new() }
    }

    pub fn get(&self, frame: usize) -> f64 {
        frame.checked_sub(self.offset).and_then(|i| self.scores.get(i)).copied().unwrap_or(LOG_ZERO)
    }

    /// Reachable `(end_frame, score)` pairs in frame order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.scores.iter().enumerate().filter(|(_, s)| !is_log_zero(**s)).map(move |(i, &s)| (self.offset + i, s))
    }

    pub fn is_empty(&self) -> bool {
        self.iter().next().is_none()
    }

    /// Highest score; ties go to the earliest end frame.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.iter().fold(None, |acc, (f, s)| match acc {
            Some((_, bs)) if bs >= s => acc,
            _ => Some((f, s)),
        })
    }

    fn first_frame(&self) -> Option<usize> {
        self.iter().next().map(|(f, _)| f)
    }

    fn prune(&mut self, beam: f64) {
        let Some((_, best)) = self.best() else {
            *self = Self::empty();
            return;
        };
        if beam.is_finite() {
            for s in &mut self.scores {
                if *s < best - beam {
                    *s = LOG_ZERO;
                }
            }
        }
        let first = self.scores.iter().position(|s| !is_log_zero(*s)).unwrap_or(0);
        let last = self.scores.iter().rposition(|s| !is_log_zero(*s)).map_or(0, |i| i + 1);
        self.scores = self.scores[first..last].to_vec();
        self.offset += first;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateLabel {
    Blank,
    Char(usize),
}

const BP_NONE: u8 = u8::MAX;
const BP_STAY: u8 = 0;
const BP_ADVANCE: u8 = 1;
const BP_SKIP: u8 = 2;
const BP_ENTER: u8 = 3;

/// Max-product trellis over `ε c1 ε c2 … ε cm` for frames `[first, first+frames)`.
#[derive(Debug, Clone)]
pub struct Trellis {
    first: usize,
    frames: usize,
    labels: Vec<StateLabel>,
    scores: Vec<f64>,
    backpointers: Vec<u8>,
}

impl Trellis {
    pub fn num_frames(&self) -> usize {
        self.frames
    }

    pub fn num_states(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[StateLabel] {
        &self.labels
    }

    /// Best log-prob of consuming frames up to `t` (relative) ending in state `s`.
    pub fn score(&self, t: usize, s: usize) -> f64 {
        self.scores[t * self.labels.len() + s]
    }

    pub fn column(&self, t: usize) -> &[f64] {
        let n = self.labels.len();
        &self.scores[t * n..(t + 1) * n]
    }

    fn bp(&self, t: usize, s: usize) -> u8 {
        self.backpointers[t * self.labels.len() + s]
    }

    /// Walks back from the final character state at absolute frame
    /// `end_frame - 1`. Returns the segment start and per-character spans.
    fn backtrace(&self, end_frame: usize) -> (usize, Vec<(usize, usize)>) {
        let n_chars = self.labels.len() / 2;
        let mut spans = vec![(0usize, 0usize); n_chars];
        let mut t = end_frame - 1 - self.first;
        let mut s = self.labels.len() - 1;
        spans[n_chars - 1].1 = end_frame;
        loop {
            let char_idx = s / 2;
            spans[char_idx].0 = self.first + t;
            match self.bp(t, s) {
                BP_ENTER => return (self.first + t, spans),
                BP_STAY => {}
                BP_ADVANCE => {
                    if s.is_multiple_of(2) {
                        // ε_j entered from c_j: char j ends here
                        spans[char_idx - 1].1 = self.first + t;
                    }
                    s -= 1;
                }
                BP_SKIP => {
                    spans[char_idx - 1].1 = self.first + t;
                    s -= 2;
                }
                _ => unreachable!("backtrace through an unreachable cell"),
            }
            t -= 1;
        }
    }

    /// State index per frame along the best path ending at `end_frame`.
    pub fn best_path(&self, end_frame: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut t = end_frame - 1 - self.first;
        let mut s = self.labels.len() - 1;
        loop {
            path.push(s);
            match self.bp(t, s) {
                BP_ENTER => break,
                BP_STAY => {}
                BP_ADVANCE => s -= 1,
                BP_SKIP => s -= 2,
                _ => unreachable!(),
            }
            t -= 1;
        }
        path.reverse();
        path
    }
}

/// Runs the trellis for `chars` with entry scores taken from `entries`
/// (entry at frame `f` means frames `< f` are consumed and, when
/// `prev_char` is set, the previous character was emitted at `f - 1`).
/// Frames at or beyond `limit` are not considered.
fn run_trellis(
    emissions: &EmissionView,
    chars: &[usize],
    prev_char: Option<usize>,
    entries: &Frontier,
    limit: usize,
) -> Trellis {
    let blank = emissions.alphabet().blank_index();
    let n_states = 2 * chars.len();
    let mut labels = Vec::with_capacity(n_states);
    for &c in chars {
        labels.push(StateLabel::Blank);
        labels.push(StateLabel::Char(c));
    }
    let first = entries.first_frame().unwrap_or(limit).min(limit);
    let frames = limit - first;
    let mut scores = vec![LOG_ZERO; frames * n_states];
    let mut bps = vec![BP_NONE; frames * n_states];

    for rel in 0..frames {
        let t = first + rel;
        let entry = entries.get(t);
        for s in 0..n_states {
            let mut best = LOG_ZERO;
            let mut bp = BP_NONE;
            let mut consider = |score: f64, code: u8| {
                if !is_log_zero(score) && score > best {
                    best = score;
                    bp = code;
                }
            };
            if rel > 0 {
                let prev = &scores[(rel - 1) * n_states..rel * n_states];
                consider(prev[s], BP_STAY);
                if s > 0 {
                    consider(prev[s - 1], BP_ADVANCE);
                }
                if s % 2 == 1 && s >= 3 && chars[s / 2] != chars[s / 2 - 1] {
                    consider(prev[s - 2], BP_SKIP);
                }
            }
            let may_enter = match s {
                0 => true,
                1 => prev_char != Some(chars[0]),
                _ => false,
            };
            if may_enter {
                consider(entry, BP_ENTER);
            }
            if bp != BP_NONE {
                let symbol = match labels[s] {
                    StateLabel::Blank => blank,
                    StateLabel::Char(c) => c,
                };
                let v = log_mul(best, emissions.log_prob(t, symbol));
                if !is_log_zero(v) {
                    scores[rel * n_states + s] = v;
                    bps[rel * n_states + s] = bp;
                }
            }
        }
    }
    Trellis { first, frames, labels, scores, backpointers: bps }
}

/// Standard trellis for `chars` starting at frame 0 of `emissions`.
pub fn viterbi_trellis(chars: &[usize], emissions: &EmissionView) -> Trellis {
    run_trellis(emissions, chars, None, &Frontier::single(0, 0.0), emissions.num_frames())
}

/// Aligns one token starting at `start_frame`. With `prev_char` set, the
/// previous character is taken to occupy frame `start_frame - 1`.
pub fn align_token(
    chars: &[usize],
    start_frame: usize,
    emissions: &EmissionView,
    opts: &AlignOptions,
    prev_char: Option<usize>,
) -> Result<AlignmentResult, AlignError> {
    if chars.is_empty() {
        return Err(AlignError::EmptyChars);
    }
    let frames = emissions.num_frames();
    if start_frame >= frames {
        return Err(AlignError::StartOutOfRange { start: start_frame, frames });
    }
    let prev = if opts.overlap && start_frame > 0 { prev_char } else { None };
    let limit = frames.min(start_frame.saturating_add(opts.window));
    let trellis = run_trellis(emissions, chars, prev, &Frontier::single(start_frame, 0.0), limit);
    let last = trellis.num_states() - 1;
    let (end, score) = (0..trellis.num_frames())
        .map(|t| (trellis.first + t + 1, trellis.score(t, last)))
        .filter(|(_, s)| !is_log_zero(*s))
        .fold(None, |acc: Option<(usize, f64)>, (e, s)| match acc {
            Some((_, bs)) if bs >= s => acc,
            _ => Some((e, s)),
        })
        .ok_or(AlignError::Infeasible)?;
    let (start, char_spans) = trellis.backtrace(end);
    Ok(AlignmentResult { start_frame: start, end_frame: end, log_likelihood: score, char_spans })
}

/// Alignment summary of a token prefix; one node per token, linked to the
/// prefix it extends.
#[derive(Debug)]
pub struct AlignState {
    parent: Option<Arc<AlignState>>,
    depth: usize,
    last_char: Option<usize>,
    frontier: Frontier,
    trellis: Option<Trellis>,
}

impl AlignState {
    pub fn root() -> Arc<Self> {
        Arc::new(Self { parent: None, depth: 0, last_char: None, frontier: Frontier::single(0, 0.0), trellis: None })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn frontier(&self) -> &Frontier {
        &self.frontier
    }

    pub fn parent(&self) -> Option<&Arc<AlignState>> {
        self.parent.as_ref()
    }

    /// Best end frame and cumulative acoustic score.
    pub fn best(&self) -> (usize, f64) {
        self.frontier.best().expect("states are never created with an empty frontier")
    }

    /// Aligns one more token after this prefix.
    pub fn extend(
        self: &Arc<Self>,
        chars: &[usize],
        emissions: &EmissionView,
        opts: &AlignOptions,
        stats: Option<&AlignStats>,
    ) -> Result<Arc<AlignState>, AlignError> {
        if chars.is_empty() {
            return Err(AlignError::EmptyChars);
        }
        let frames = emissions.num_frames();
        let (anchor, _) = self.best();
        let limit = frames.min(anchor.saturating_add(opts.window));
        let prev = if opts.overlap { self.last_char } else { None };
        let trellis = run_trellis(emissions, chars, prev, &self.frontier, limit);
        if let Some(stats) = stats {
            let overlap_cells = if prev.is_some() { self.frontier.iter().count() } else { 0 };
            stats.record((trellis.num_frames() * trellis.num_states() + overlap_cells) as u64);
        }
        let last = trellis.num_states() - 1;
        let mut frontier = Frontier {
            offset: trellis.first + 1,
            scores: (0..trellis.num_frames()).map(|t| trellis.score(t, last)).collect(),
        };
        frontier.prune(opts.frontier_beam);
        if frontier.is_empty() {
            return Err(AlignError::Infeasible);
        }
        Ok(Arc::new(AlignState {
            parent: Some(Arc::clone(self)),
            depth: self.depth + 1,
            last_char: chars.last().copied(),
            frontier,
            trellis: Some(trellis),
        }))
    }

    /// Alignment of this state's own (last) token for the prefix path
    /// ending at `end_frame`.
    pub fn last_token_alignment(&self, end_frame: usize) -> AlignmentResult {
        let trellis = self.trellis.as_ref().expect("root has no token");
        let (start, char_spans) = trellis.backtrace(end_frame);
        let parent = self.parent.as_ref().expect("non-root has a parent");
        AlignmentResult {
            start_frame: start,
            end_frame,
            log_likelihood: self.frontier.get(end_frame) - parent.frontier.get(start),
            char_spans,
        }
    }

    /// Per-token alignments of the best path ending at `end_frame`, first token first.
    pub fn backtrace(&self, end_frame: usize) -> Vec<AlignmentResult> {
        let mut out = Vec::with_capacity(self.depth);
        let mut node = self;
        let mut end = end_frame;
        while node.trellis.is_some() {
            let a = node.last_token_alignment(end);
            end = a.start_frame;
            out.push(a);
            node = node.parent.as_ref().expect("non-root has a parent");
        }
        out.reverse();
        out
    }
}

/// Realigns a whole token sequence from frame 0 without reusing anything.
pub fn align_from_scratch(
    token_chars: &[&[usize]],
    emissions: &EmissionView,
    opts: &AlignOptions,
    stats: Option<&AlignStats>,
) -> Result<Arc<AlignState>, AlignError> {
    token_chars.iter().try_fold(AlignState::root(), |state, chars| state.extend(chars, emissions, opts, stats))
}

/// Prefix-keyed store of alignment states for one utterance.
#[derive(Debug, Default)]
pub struct AlignerCache {
    states: HashMap<Vec<TokenId>, Arc<AlignState>>,
    hits: u64,
    misses: u64,
}

impl AlignerCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn get(&self, prefix: &[TokenId]) -> Option<&Arc<AlignState>> {
        self.states.get(prefix)
    }

    pub fn insert(&mut self, prefix: Vec<TokenId>, state: Arc<AlignState>) {
        self.states.insert(prefix, state);
    }

    /// State for `prefix`, rebuilt token by token from the longest cached
    /// ancestor (or the root) on a miss.
    pub fn state_for(
        &mut self,
        prefix: &[TokenId],
        vocab: &Vocabulary,
        emissions: &EmissionView,
        opts: &AlignOptions,
        stats: Option<&AlignStats>,
    ) -> Result<Arc<AlignState>, AlignError> {
        if prefix.is_empty() {
            return Ok(AlignState::root());
        }
        if let Some(s) = self.states.get(prefix) {
            self.hits += 1;
            return Ok(Arc::clone(s));
        }
        self.misses += 1;
        let mut known = prefix.len();
        let mut state = AlignState::root();
        while known > 0 {
            if let Some(s) = self.states.get(&prefix[..known]) {
                state = Arc::clone(s);
                break;
            }
            known -= 1;
        }
        for n in known..prefix.len() {
            let chars = vocab.decompose_token(prefix[n]).map_err(|_| AlignError::EmptyChars)?;
            state = state.extend(chars, emissions, opts, stats)?;
            self.states.insert(prefix[..=n].to_vec(), Arc::clone(&state));
        }
        Ok(state)
    }

    /// Aligns `token` after `prefix`, reusing the cached prefix state. The
    /// result is identical to rebuilding the prefix from scratch.
    pub fn align_incremental(
        &mut self,
        prefix: &[TokenId],
        token: TokenId,
        vocab: &Vocabulary,
        emissions: &EmissionView,
        opts: &AlignOptions,
    ) -> Result<(Arc<AlignState>, AlignmentResult), AlignError> {
        let parent = self.state_for(prefix, vocab, emissions, opts, None)?;
        let chars = vocab.decompose_token(token).map_err(|_| AlignError::EmptyChars)?;
        let state = parent.extend(chars, emissions, opts, None)?;
        let (end, _) = state.best();
        let result = state.last_token_alignment(end);
        let mut key = prefix.to_vec();
        key.push(token);
        self.states.insert(key, Arc::clone(&state));
        Ok((state, result))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emissions::{CharAlphabet, EmissionMatrix};

    // ∅ | a b c l
    fn matrix(rows: &[[f64; 6]]) -> EmissionMatrix {
        let alphabet = Arc::new(CharAlphabet::parse("∅|abcl").unwrap());
        let probs: Vec<f64> = rows.iter().flatten().copied().collect();
        EmissionMatrix::from_probs(&probs, rows.len(), alphabet, 20).unwrap()
    }

    const A: usize = 2;
    const B: usize = 3;
    const C: usize = 4;
    const L: usize = 5;

    #[test]
    fn single_frame_identity() {
        let m = matrix(&[[0.0, 0.0, 0.0, 0.0, 1.0, 0.0]]);
        let r = align_token(&[C], 0, &m.view(), &AlignOptions::default(), None).unwrap();
        assert_eq!(r.end_frame, 1);
        assert_eq!(r.log_likelihood, 0.0);
        assert_eq!(r.char_spans, vec![(0, 1)]);
    }

    #[test]
    fn one_char_one_frame_trellis() {
        let m = matrix(&[[0.5, 0.0, 0.0, 0.0, 0.5, 0.0]]);
        let t = viterbi_trellis(&[C], &m.view());
        assert_eq!(t.num_states(), 2);
        assert_eq!(t.score(0, 1), 0.5f32.ln() as f64);
        // the leading blank alone never completes the token
        assert_eq!(t.labels()[0], StateLabel::Blank);
    }

    #[test]
    fn repeated_chars_need_a_blank() {
        let row = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let m = matrix(&[row; 4]);
        let t = viterbi_trellis(&[L, L], &m.view());
        assert!((0..4).all(|f| is_log_zero(t.score(f, 3))));
        assert_eq!(align_token(&[L, L], 0, &m.view(), &AlignOptions::default(), None), Err(AlignError::Infeasible));
    }

    #[test]
    fn errors() {
        let m = matrix(&[[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]]);
        let opts = AlignOptions::default();
        assert_eq!(align_token(&[], 0, &m.view(), &opts, None), Err(AlignError::EmptyChars));
        assert_eq!(
            align_token(&[A], 1, &m.view(), &opts, None),
            Err(AlignError::StartOutOfRange { start: 1, frames: 1 })
        );
        assert_eq!(align_token(&[A], 0, &m.view(), &opts, None), Err(AlignError::Infeasible));
    }

    #[test]
    fn spans_partition_segment() {
        let m = matrix(&[
            [0.9, 0.0, 0.1, 0.0, 0.0, 0.0],
            [0.1, 0.0, 0.9, 0.0, 0.0, 0.0],
            [0.8, 0.0, 0.1, 0.1, 0.0, 0.0],
            [0.1, 0.0, 0.0, 0.9, 0.0, 0.0],
            [0.9, 0.0, 0.0, 0.1, 0.0, 0.0],
        ]);
        let r = align_token(&[A, B], 0, &m.view(), &AlignOptions::default(), None).unwrap();
        assert_eq!(r.start_frame, 0);
        assert_eq!(r.end_frame, 4);
        assert_eq!(r.char_spans, vec![(0, 2), (2, 4)]);
        let v = m.view();
        let expect = [(0, 0), (1, A), (2, 0), (3, B)].iter().fold(0.0, |acc, &(t, s)| acc + v.log_prob(t, s));
        assert_eq!(r.log_likelihood, expect);
    }

    #[test]
    fn window_limits_reach() {
        let mut rows = vec![[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]; 5];
        rows.push([0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let m = matrix(&rows);
        let narrow = AlignOptions { window: 5, ..AlignOptions::default() };
        assert_eq!(align_token(&[A], 0, &m.view(), &narrow, None), Err(AlignError::Infeasible));
        let wide = AlignOptions { window: 6, ..AlignOptions::default() };
        assert_eq!(align_token(&[A], 0, &m.view(), &wide, None).unwrap().end_frame, 6);
    }

    #[test]
    fn overlap_enforces_repeat_rule_across_tokens() {
        // "l" then "l": frames l l ε l
        let m = matrix(&[
            [0.05, 0.0, 0.0, 0.0, 0.0, 0.95],
            [0.05, 0.0, 0.0, 0.0, 0.0, 0.95],
            [0.5, 0.0, 0.0, 0.0, 0.0, 0.5],
            [0.5, 0.0, 0.0, 0.0, 0.0, 0.5],
        ]);
        let view = m.view();
        let opts = AlignOptions::default();
        let first = AlignState::root().extend(&[L], &view, &opts, None).unwrap();
        assert_eq!(first.best().0, 1);
        let second = first.extend(&[L], &view, &opts, None).unwrap();
        let no_overlap = AlignOptions { overlap: false, ..opts };
        let naive = first.extend(&[L], &view, &no_overlap, None).unwrap();
        // without the overlap frame, "l" at frame 1 directly after "l" at frame 0 is accepted
        assert_eq!(naive.best().0, 2);
        assert!(naive.best().1 > second.best().1);
        assert_ne!(second.best().0, 2);
    }

    #[test]
    fn incremental_matches_rebuild() {
        let m = matrix(&[
            [0.6, 0.1, 0.1, 0.1, 0.05, 0.05],
            [0.1, 0.6, 0.1, 0.1, 0.05, 0.05],
            [0.1, 0.1, 0.6, 0.1, 0.05, 0.05],
            [0.3, 0.1, 0.1, 0.4, 0.05, 0.05],
            [0.1, 0.1, 0.1, 0.1, 0.55, 0.05],
            [0.3, 0.3, 0.1, 0.1, 0.1, 0.1],
        ]);
        let vocab = Vocabulary::from_lines(["▁a", "b", "c"], Arc::clone(m.alphabet())).unwrap();
        let view = m.view();
        let opts = AlignOptions::default();
        let mut cache = AlignerCache::new();
        let (_, empty) = cache.align_incremental(&[], TokenId(0), &vocab, &view, &opts).unwrap();
        let chars = vocab.decompose_token(TokenId(0)).unwrap();
        assert_eq!(empty, align_token(chars, 0, &view, &opts, None).unwrap());
        let (s, _) = cache.align_incremental(&[TokenId(0)], TokenId(1), &vocab, &view, &opts).unwrap();
        let (s2, _) = cache.align_incremental(&[TokenId(0), TokenId(1)], TokenId(2), &vocab, &view, &opts).unwrap();
        assert_eq!(cache.hits(), 2);
        let rebuilt = align_from_scratch(
            &[chars, vocab.decompose_token(TokenId(1)).unwrap(), vocab.decompose_token(TokenId(2)).unwrap()],
            &view,
            &opts,
            None,
        )
        .unwrap();
        assert_eq!(rebuilt.frontier(), s2.frontier());
        assert_eq!(s.depth(), 2);
        let (end, total) = s2.best();
        let parts = s2.backtrace(end);
        assert_eq!(parts.len(), 3);
        let sum: f64 = parts.iter().map(|a| a.log_likelihood).sum();
        assert!((sum - total).abs() < 1e-9);
        for w in parts.windows(2) {
            assert_eq!(w[0].end_frame, w[1].start_frame);
        }
    }
}
