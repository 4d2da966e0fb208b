//! Reference decoders: greedy CTC collapse and prefix beam search with
//! word-level N-gram fusion.

use std::collections::HashMap;

use crate::emissions::{CharAlphabet, EmissionMatrix};
use crate::lm::NgramModel;

/// Argmax per frame, merge repeats, drop blanks, separators become spaces.
pub fn greedy_decode(emissions: &EmissionMatrix) -> String {
    let blank = emissions.alphabet().blank_index();
    let mut path = Vec::new();
    let mut prev = None;
    for t in 0..emissions.num_frames() {
        let row = emissions.row(t);
        let best = row.iter().enumerate().fold(0, |b, (i, v)| if *v > row[b] { i } else { b });
        if Some(best) != prev && best != blank {
            path.push(best);
        }
        prev = Some(best);
    }
    render(emissions.alphabet(), &path)
}

/// Label sequence to text, with separators as single spaces and no padding.
pub fn render(alphabet: &CharAlphabet, labels: &[usize]) -> String {
    let sep = alphabet.separator_index();
    let mut out = String::with_capacity(labels.len());
    for &l in labels {
        if l == sep {
            if !out.is_empty() && !out.ends_with(' ') {
                out.push(' ');
            }
        } else {
            out.push(alphabet.symbol(l));
        }
    }
    if out.ends_with(' ') {
        out.pop();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrefixBeamConfig {
    pub beam_width: usize,
    pub lm_weight: f64,
    /// Added once per word.
    pub word_bonus: f64,
    /// Symbols below this frame log-probability are not expanded.
    pub min_log_prob: f64,
}

impl Default for PrefixBeamConfig {
    fn default() -> Self {
        Self { beam_width: 1500, lm_weight: 2.0, word_bonus: -1.0, min_log_prob: 0.001f64.ln() }
    }
}

impl PrefixBeamConfig {
    /// No pruning and no LM: the beam holds exact CTC label probabilities.
    pub fn exhaustive() -> Self {
        Self { beam_width: usize::MAX, lm_weight: 0.0, word_bonus: 0.0, min_log_prob: f64::NEG_INFINITY }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrefixBeamEntry {
    /// Collapsed label sequence.
    pub prefix: Vec<usize>,
    pub p_blank: f64,
    pub p_nonblank: f64,
    /// LM log-probability of the words completed so far.
    pub lm_score: f64,
    pub words: usize,
}

impl PrefixBeamEntry {
    pub fn ctc_log_prob(&self) -> f64 {
        log_add(self.p_blank, self.p_nonblank)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrefixBeamHypothesis {
    pub text: String,
    pub labels: Vec<usize>,
    pub ctc_log_prob: f64,
    pub lm_score: f64,
    pub words: usize,
    pub score: f64,
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

struct WordLm<'a> {
    model: Option<&'a NgramModel>,
    alphabet: &'a CharAlphabet,
    memo: HashMap<Vec<usize>, (f64, usize)>,
}

impl WordLm<'_> {
    fn words(&self, labels: &[usize]) -> Vec<String> {
        let sep = self.alphabet.separator_index();
        labels
            .split(|&l| l == sep)
            .filter(|w| !w.is_empty())
            .map(|w| w.iter().map(|&l| self.alphabet.symbol(l)).collect())
            .collect()
    }

    /// LM score and word count of the words completed in `labels`, i.e.
    /// those followed by a separator.
    fn completed(&mut self, labels: &[usize]) -> (f64, usize) {
        if let Some(v) = self.memo.get(labels) {
            return *v;
        }
        let sep = self.alphabet.separator_index();
        let done = match labels.iter().rposition(|&l| l == sep) {
            Some(i) => &labels[..i],
            None => &[][..],
        };
        let words = self.words(done);
        let score = match self.model {
            Some(m) => (0..words.len())
                .map(|i| {
                    let hist: Vec<&str> = words[..i].iter().map(String::as_str).collect();
                    m.score(&hist, &words[i])
                })
                .sum(),
            None => 0.0,
        };
        let v = (score, words.len());
        self.memo.insert(labels.to_vec(), v);
        v
    }

    /// Score and word count of a finished transcript, including the sentence end.
    fn full(&self, labels: &[usize]) -> (f64, usize) {
        let words = self.words(labels);
        let score = match self.model {
            Some(m) => {
                let mut s = 0.0;
                for i in 0..=words.len() {
                    let hist: Vec<&str> = words[..i].iter().map(String::as_str).collect();
                    s += m.score(&hist, words.get(i).map_or("</s>", String::as_str));
                }
                s
            }
            None => 0.0,
        };
        (score, words.len())
    }
}

fn slot<'m>(
    next: &'m mut HashMap<Vec<usize>, PrefixBeamEntry>,
    wlm: &mut WordLm,
    prefix: &[usize],
) -> &'m mut PrefixBeamEntry {
    if !next.contains_key(prefix) {
        let (lm_score, words) = wlm.completed(prefix);
        next.insert(
            prefix.to_vec(),
            PrefixBeamEntry {
                prefix: prefix.to_vec(),
                p_blank: f64::NEG_INFINITY,
                p_nonblank: f64::NEG_INFINITY,
                lm_score,
                words,
            },
        );
    }
    next.get_mut(prefix).expect("inserted above")
}

/// Runs CTC prefix beam search and returns the final beam, best first.
pub fn prefix_beam_search(
    emissions: &EmissionMatrix,
    lm: Option<&NgramModel>,
    config: &PrefixBeamConfig,
) -> Vec<PrefixBeamHypothesis> {
    let alphabet = emissions.alphabet();
    let blank = alphabet.blank_index();
    let mut wlm = WordLm { model: lm, alphabet, memo: HashMap::new() };
    let rank =
        |e: &PrefixBeamEntry| e.ctc_log_prob() + config.lm_weight * e.lm_score + config.word_bonus * e.words as f64;

    let mut beam = vec![PrefixBeamEntry {
        prefix: Vec::new(),
        p_blank: 0.0,
        p_nonblank: f64::NEG_INFINITY,
        lm_score: 0.0,
        words: 0,
    }];
    for t in 0..emissions.num_frames() {
        let mut next: HashMap<Vec<usize>, PrefixBeamEntry> = HashMap::new();
        for e in &beam {
            let total = e.ctc_log_prob();
            for c in 0..alphabet.len() {
                let lp = emissions.log_prob(t, c);
                if lp < config.min_log_prob || lp == f64::NEG_INFINITY {
                    continue;
                }
                if c == blank {
                    let n = slot(&mut next, &mut wlm, &e.prefix);
                    n.p_blank = log_add(n.p_blank, total + lp);
                    continue;
                }
                let mut extended = e.prefix.clone();
                extended.push(c);
                if e.prefix.last() == Some(&c) {
                    let same = slot(&mut next, &mut wlm, &e.prefix);
                    same.p_nonblank = log_add(same.p_nonblank, e.p_nonblank + lp);
                    let n = slot(&mut next, &mut wlm, &extended);
                    n.p_nonblank = log_add(n.p_nonblank, e.p_blank + lp);
                } else {
                    let n = slot(&mut next, &mut wlm, &extended);
                    n.p_nonblank = log_add(n.p_nonblank, total + lp);
                }
            }
        }
        // a repeat with no blank before it creates an empty slot
        let mut entries: Vec<PrefixBeamEntry> =
            next.into_values().filter(|e| e.ctc_log_prob() > f64::NEG_INFINITY).collect();
        entries.sort_by(|a, b| rank(b).total_cmp(&rank(a)).then_with(|| a.prefix.cmp(&b.prefix)));
        entries.truncate(config.beam_width);
        beam = entries;
    }

    let mut out: Vec<PrefixBeamHypothesis> = beam
        .into_iter()
        .map(|e| {
            let (lm_score, words) = wlm.full(&e.prefix);
            let ctc = e.ctc_log_prob();
            PrefixBeamHypothesis {
                text: render(alphabet, &e.prefix),
                labels: e.prefix,
                ctc_log_prob: ctc,
                lm_score,
                words,
                score: ctc + config.lm_weight * lm_score + config.word_bonus * words as f64,
            }
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.labels.cmp(&b.labels)));
    out
}

/// Best transcript of [`prefix_beam_search`].
pub fn prefix_beam_decode(emissions: &EmissionMatrix, lm: Option<&NgramModel>, config: &PrefixBeamConfig) -> String {
    prefix_beam_search(emissions, lm, config).into_iter().next().map(|h| h.text).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    /// One-hot rows over `∅|ehlo`, given as symbols.
    fn sharp(path: &str) -> EmissionMatrix {
        let a = Arc::new(CharAlphabet::parse("∅|ehlo").unwrap());
        let n = a.len();
        let mut probs = Vec::new();
        for ch in path.chars() {
            let hot = a.index_of(ch).unwrap();
            let mut row = vec![0.02; n];
            row[hot] = 1.0 - 0.02 * (n - 1) as f64;
            probs.extend(row);
        }
        EmissionMatrix::from_probs(&probs, path.chars().count(), a, 20).unwrap()
    }

    #[test]
    fn greedy_collapse() {
        assert_eq!(greedy_decode(&sharp("hh∅el∅lo")), "hello");
        assert_eq!(greedy_decode(&sharp("∅∅∅")), "");
        assert_eq!(greedy_decode(&sharp("e∅e")), "ee");
        assert_eq!(greedy_decode(&sharp("|he|||∅|lo|")), "he lo");
    }

    #[test]
    fn narrow_beam_matches_greedy_on_sharp_input() {
        let m = sharp("hh∅el∅lo|∅he");
        let c = PrefixBeamConfig { beam_width: 1, lm_weight: 0.0, word_bonus: 0.0, ..PrefixBeamConfig::default() };
        assert_eq!(prefix_beam_decode(&m, None, &c), greedy_decode(&m));
    }
}
