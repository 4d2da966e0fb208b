//! Brute-force decoder: enumerates every token sequence up to the horizon and
//! every way of splitting the frames between its tokens, then applies the
//! stopping rules directly to those exhaustive scores.

use std::collections::HashMap;

use llmbeam_core::{EmissionMatrix, TokenId, Vocabulary};

use crate::ctc::log_table;
use crate::table_lm::TableLm;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub alpha: f64,
    pub beta: f64,
    pub acoustic_floor: f64,
    pub eos_margin: f64,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutput {
    /// Without EOS.
    pub tokens: Vec<TokenId>,
    pub eos: bool,
    pub score: f64,
}

/// Best score of one token on frames `[s, e)` ending on its last character:
/// `(any start, start not directly on the first character)`.
type SegBest = (Option<f64>, Option<f64>);

/// Best score of a prefix per end frame, with the start frame of the last
/// token's segment on that best split.
type Ends = Vec<Option<(f64, usize)>>;

pub struct DecoderOracle<'a> {
    logp: Vec<Vec<f64>>,
    blank: usize,
    frames: usize,
    vocab: &'a Vocabulary,
    lm: &'a TableLm,
    cfg: OracleConfig,
    segs: HashMap<(TokenId, usize, usize), SegBest>,
    ends: HashMap<Vec<TokenId>, Ends>,
    tail: Vec<f64>,
    pub sequences_visited: usize,
}

fn better(acc: &mut Option<f64>, v: f64) {
    if acc.is_none_or(|a| v > a) {
        *acc = Some(v);
    }
}

impl<'a> DecoderOracle<'a> {
    pub fn new(m: &EmissionMatrix, vocab: &'a Vocabulary, lm: &'a TableLm, cfg: OracleConfig) -> Self {
        let logp = log_table(m);
        let blank = m.alphabet().blank_index();
        let frames = logp.len();
        let mut tail = vec![0.0; frames + 1];
        for (f, t) in tail.iter_mut().enumerate().take(frames) {
            *t = logp[f..].iter().map(|row| row[blank]).sum();
        }
        Self {
            logp,
            blank,
            frames,
            vocab,
            lm,
            cfg,
            segs: HashMap::new(),
            ends: HashMap::new(),
            tail,
            sequences_visited: 0,
        }
    }

    fn seg(&mut self, token: TokenId, s: usize, e: usize) -> SegBest {
        if let Some(v) = self.segs.get(&(token, s, e)) {
            return *v;
        }
        let chars = self.vocab.token(token).chars.clone();
        let mut best: SegBest = (None, None);
        // leading blanks, then for each char a duration and (except after
        // the last) a run of blanks, mandatory between equal chars
        for lead in 0..(e - s) {
            let acc: f64 = (s..s + lead).map(|t| self.logp[t][self.blank]).sum();
            self.compositions(&chars, 0, s + lead, e, acc, lead == 0, &mut best);
        }
        self.segs.insert((token, s, e), best);
        best
    }

    #[allow(clippy::too_many_arguments)]
    fn compositions(&self, chars: &[usize], i: usize, t: usize, e: usize, acc: f64, direct: bool, best: &mut SegBest) {
        let c = chars[i];
        let last = i + 1 == chars.len();
        let mut a = acc;
        for d in 1..=(e - t) {
            a += self.logp[t + d - 1][c];
            let after = t + d;
            if last {
                if after == e {
                    better(&mut best.0, a);
                    if !direct {
                        better(&mut best.1, a);
                    }
                }
                continue;
            }
            let min_gap = usize::from(chars[i + 1] == c);
            let mut g_acc = a;
            for g in 0..(e - after) {
                if g > 0 {
                    g_acc += self.logp[after + g - 1][self.blank];
                }
                if g >= min_gap {
                    self.compositions(chars, i + 1, after + g, e, g_acc, direct, best);
                }
            }
        }
    }

    fn ends(&mut self, w: &[TokenId]) -> Ends {
        if let Some(v) = self.ends.get(w) {
            return v.clone();
        }
        let mut out: Ends = vec![None; self.frames + 1];
        if w.is_empty() {
            out[0] = Some((0.0, 0));
        } else {
            let prev = self.ends(&w[..w.len() - 1]);
            let token = w[w.len() - 1];
            let first = self.vocab.token(token).chars[0];
            let prev_char = w.len().checked_sub(2).map(|i| *self.vocab.token(w[i]).chars.last().unwrap());
            for (s, p) in prev.iter().enumerate() {
                let Some((ps, _)) = *p else { continue };
                for (e, slot) in out.iter_mut().enumerate().skip(s + 1) {
                    let (any, indirect) = self.seg(token, s, e);
                    let v = if prev_char == Some(first) { indirect } else { any };
                    if let Some(v) = v {
                        let total = ps + v;
                        if slot.is_none_or(|(b, _)| total > b) {
                            *slot = Some((total, s));
                        }
                    }
                }
            }
        }
        self.ends.insert(w.to_vec(), out.clone());
        out
    }

    fn best_end(ends: &Ends) -> Option<(usize, f64, usize)> {
        let mut best: Option<(usize, f64, usize)> = None;
        for (f, e) in ends.iter().enumerate() {
            if let Some((s, start)) = e {
                if best.is_none_or(|(_, b, _)| *s > b) {
                    best = Some((f, *s, *start));
                }
            }
        }
        best
    }

    fn full(&self, ends: &Ends) -> f64 {
        ends.iter().enumerate().filter_map(|(f, e)| e.map(|(s, _)| s + self.tail[f])).fold(f64::NEG_INFINITY, f64::max)
    }

    fn offer(&self, best: &mut Option<OracleOutput>, w: &[TokenId], ends: &Ends, lm: f64, eos_lp: Option<f64>) {
        let c = &self.cfg;
        let score = self.full(ends) + c.alpha * (lm + eos_lp.unwrap_or(0.0)) + c.beta * w.len() as f64;
        if best.as_ref().is_none_or(|b| score > b.score) {
            *best = Some(OracleOutput { tokens: w.to_vec(), eos: eos_lp.is_some(), score });
        }
    }

    fn visit(&mut self, w: Vec<TokenId>, lm: f64, best: &mut Option<OracleOutput>) {
        self.sequences_visited += 1;
        let ends = self.ends(&w);
        let (end, score, _) = Self::best_end(&ends).expect("visited prefixes are feasible");
        if end == self.frames || w.len() >= self.cfg.horizon {
            self.offer(best, &w, &ends, lm, None);
            return;
        }
        let dist = self.lm.distribution(&w);
        let eos = self.vocab.eos_id();
        let eos_lp = dist[eos.index()];
        let max_other = dist
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != eos.index())
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        if eos_lp.exp() > self.cfg.eos_margin * max_other.exp() {
            self.offer(best, &w, &ends, lm, Some(eos_lp));
            return;
        }
        let mut feasible = Vec::new();
        let mut best_prob: Option<f64> = None;
        for t in self.vocab.tokens().iter().filter(|t| !t.is_eos) {
            let mut child = w.clone();
            child.push(t.id);
            let Some((e, s, start)) = Self::best_end(&self.ends(&child)) else { continue };
            if !t.is_whitespace() {
                let p = ((s - score) / (e - start).max(1) as f64).exp();
                best_prob = Some(best_prob.map_or(p, |b: f64| b.max(p)));
            }
            feasible.push(t.id);
        }
        if best_prob.is_none_or(|p| p < self.cfg.acoustic_floor) {
            self.offer(best, &w, &ends, lm, None);
            return;
        }
        self.offer(best, &w, &ends, lm, Some(eos_lp));
        for t in feasible {
            let mut child = w.clone();
            child.push(t);
            self.visit(child, lm + dist[t.index()], best);
        }
    }

    pub fn run(&mut self) -> OracleOutput {
        let mut best = None;
        self.visit(Vec::new(), 0.0, &mut best);
        best.expect("the empty hypothesis always yields an output")
    }
}
