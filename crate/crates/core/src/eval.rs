//! Text normalization, WER/CER and acronym analysis.

use serde::Serialize;

/// Lowercases, keeps only `a-z` and whitespace, merges runs of two or more
/// single-letter words ("u s a" -> "usa") and collapses whitespace.
pub fn normalize(text: &str) -> String {
    normalize_marked(text).0.join(" ")
}

/// Normalized words plus a flag per word telling whether it is an acronym:
/// a merged single-letter run, or an all-caps word of two or more letters
/// in the original text.
pub fn normalize_marked(text: &str) -> (Vec<String>, Vec<bool>) {
    let mut raw: Vec<(String, bool)> = Vec::new();
    for word in text.split_whitespace() {
        let letters: String = word.chars().filter(char::is_ascii_alphabetic).collect();
        if letters.is_empty() {
            continue;
        }
        let caps = letters.len() >= 2 && letters.chars().all(|c| c.is_ascii_uppercase());
        raw.push((letters.to_ascii_lowercase(), caps));
    }
    let mut words = Vec::with_capacity(raw.len());
    let mut acronym = Vec::with_capacity(raw.len());
    let mut i = 0;
    while i < raw.len() {
        let mut j = i;
        while j < raw.len() && raw[j].0.len() == 1 {
            j += 1;
        }
        if j - i >= 2 {
            words.push(raw[i..j].iter().map(|(w, _)| w.as_str()).collect());
            acronym.push(true);
            i = j;
        } else {
            words.push(raw[i].0.clone());
            acronym.push(raw[i].1);
            i += 1;
        }
    }
    (words, acronym)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    Match,
    Substitution,
    Insertion,
    Deletion,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EditCounts {
    pub hits: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    pub fn reference_len(&self) -> usize {
        self.hits + self.substitutions + self.deletions
    }

    fn add(&mut self, o: &EditCounts) {
        self.hits += o.hits;
        self.substitutions += o.substitutions;
        self.insertions += o.insertions;
        self.deletions += o.deletions;
    }
}

/// Minimum-edit alignment as a list of operations in reference order.
/// Among equal-cost alignments, matches and substitutions are preferred
/// over deletions, and deletions over insertions.
pub fn align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Vec<EditOp> {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for (j, cell) in d.iter_mut().take(w).enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = sub.min(del).min(ins);
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if here == d[(i - 1) * w + j - 1] + usize::from(!same) {
                ops.push(if same { EditOp::Match } else { EditOp::Substitution });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == d[(i - 1) * w + j] + 1 {
            ops.push(EditOp::Deletion);
            i -= 1;
        } else {
            ops.push(EditOp::Insertion);
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

pub fn count_edits(ops: &[EditOp]) -> EditCounts {
    let mut c = EditCounts::default();
    for op in ops {
        match op {
            EditOp::Match => c.hits += 1,
            EditOp::Substitution => c.substitutions += 1,
            EditOp::Insertion => c.insertions += 1,
            EditOp::Deletion => c.deletions += 1,
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRate {
    pub counts: EditCounts,
}

impl ErrorRate {
    /// Errors per reference unit. Infinite when the reference is empty and
    /// the hypothesis is not.
    pub fn rate(&self) -> f64 {
        let n = self.counts.reference_len();
        match (n, self.counts.errors()) {
            (0, 0) => 0.0,
            (0, _) => f64::INFINITY,
            (n, e) => e as f64 / n as f64,
        }
    }

    pub fn is_infinite(&self) -> bool {
        self.rate().is_infinite()
    }
}

/// Word error rate between two already normalized strings.
pub fn wer(reference: &str, hypothesis: &str) -> ErrorRate {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    ErrorRate { counts: count_edits(&align(&r, &h)) }
}

/// Character error rate; spaces count as characters.
pub fn cer(reference: &str, hypothesis: &str) -> ErrorRate {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    ErrorRate { counts: count_edits(&align(&r, &h)) }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtteranceScore {
    pub utt_id: String,
    /// Fractions, not percentages; `None` when the reference is empty and
    /// the hypothesis is not.
    pub wer: Option<f64>,
    pub cer: Option<f64>,
    pub has_acronym: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcronymExample {
    pub utt_id: String,
    pub acronym: String,
    /// Hypothesis word aligned to the acronym, if any.
    pub hypothesis: Option<String>,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcronymReport {
    pub total: usize,
    pub correct: usize,
    /// `None` when there are no acronyms.
    pub accuracy: Option<f64>,
    /// Corpus WER (percent) over utterances with / without acronyms.
    pub wer_with: Option<f64>,
    pub cer_with: Option<f64>,
    pub wer_without: Option<f64>,
    pub cer_without: Option<f64>,
    pub examples: Vec<AcronymExample>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Percentages, micro-averaged: total edits over total reference length.
    pub wer: f64,
    pub cer: f64,
    pub word_counts: EditCounts,
    pub char_counts: EditCounts,
    pub utterances: usize,
    /// Utterances left out of the totals (empty reference, non-empty hypothesis).
    pub excluded: Vec<String>,
    pub per_utterance: Vec<UtteranceScore>,
    pub acronyms: Option<AcronymReport>,
}

/// Per-utterance input: id, raw reference, raw hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub utt_id: String,
    pub reference: String,
    pub hypothesis: String,
}

struct Scored {
    words: EditCounts,
    chars: EditCounts,
    excluded: bool,
    has_acronym: bool,
}

fn percent(c: &EditCounts) -> f64 {
    let n = c.reference_len();
    if n == 0 {
        0.0
    } else {
        100.0 * c.errors() as f64 / n as f64
    }
}

/// Scores a corpus after normalizing both sides.
pub fn evaluate(pairs: &[EvalPair], with_acronyms: bool) -> EvalReport {
    let mut scored = Vec::with_capacity(pairs.len());
    let mut per_utterance = Vec::with_capacity(pairs.len());
    let mut excluded = Vec::new();
    let mut examples = Vec::new();
    for p in pairs {
        let (rw, marks) = normalize_marked(&p.reference);
        let hyp = normalize(&p.hypothesis);
        let hw: Vec<&str> = hyp.split_whitespace().collect();
        let rw_ref: Vec<&str> = rw.iter().map(String::as_str).collect();
        let ops = align(&rw_ref, &hw);
        let words = ErrorRate { counts: count_edits(&ops) };
        let chars = cer(&rw.join(" "), &hyp);
        let is_excluded = words.is_infinite();
        if is_excluded {
            log::warn!("{}: empty reference with non-empty hypothesis, excluded", p.utt_id);
            excluded.push(p.utt_id.clone());
        }
        let has_acronym = marks.iter().any(|&m| m);
        if with_acronyms && has_acronym {
            let (mut ri, mut hi) = (0, 0);
            for op in &ops {
                let (r, h) = match op {
                    EditOp::Match | EditOp::Substitution => (Some(ri), Some(hi)),
                    EditOp::Deletion => (Some(ri), None),
                    EditOp::Insertion => (None, Some(hi)),
                };
                if let Some(r) = r.filter(|&r| marks[r]) {
                    examples.push(AcronymExample {
                        utt_id: p.utt_id.clone(),
                        acronym: rw[r].clone(),
                        hypothesis: h.map(|h| hw[h].to_string()),
                        correct: *op == EditOp::Match,
                    });
                }
                ri += usize::from(r.is_some());
                hi += usize::from(h.is_some());
            }
        }
        per_utterance.push(UtteranceScore {
            utt_id: p.utt_id.clone(),
            wer: (!is_excluded).then(|| words.rate()),
            cer: (!chars.is_infinite()).then(|| chars.rate()),
            has_acronym,
        });
        scored.push(Scored { words: words.counts, chars: chars.counts, excluded: is_excluded, has_acronym });
    }
    let totals = |filter: &dyn Fn(&Scored) -> bool| {
        let mut w = EditCounts::default();
        let mut c = EditCounts::default();
        let mut any = false;
        for s in scored.iter().filter(|s| !s.excluded && filter(s)) {
            w.add(&s.words);
            c.add(&s.chars);
            any = true;
        }
        (w, c, any)
    };
    let (word_counts, char_counts, _) = totals(&|_| true);
    let acronyms = with_acronyms.then(|| {
        let (ww, cw, any_with) = totals(&|s| s.has_acronym);
        let (wo, co, any_without) = totals(&|s| !s.has_acronym);
        let correct = examples.iter().filter(|e| e.correct).count();
        AcronymReport {
            total: examples.len(),
            correct,
            accuracy: (!examples.is_empty()).then(|| correct as f64 / examples.len() as f64),
            wer_with: any_with.then(|| percent(&ww)),
            cer_with: any_with.then(|| percent(&cw)),
            wer_without: any_without.then(|| percent(&wo)),
            cer_without: any_without.then(|| percent(&co)),
            examples,
        }
    });
    EvalReport {
        wer: percent(&word_counts),
        cer: percent(&char_counts),
        word_counts,
        char_counts,
        utterances: pairs.len(),
        excluded,
        per_utterance,
        acronyms,
    }
}

impl EvalReport {
    /// Plain-text summary table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let w = &self.word_counts;
        s.push_str(&format!(
            "utterances {:>6}   excluded {:>4}\nWER {:>7.2}%   (S {} I {} D {} / N {})\nCER {:>7.2}%   (S {} I {} D {} / N {})\n",
            self.utterances,
            self.excluded.len(),
            self.wer,
            w.substitutions,
            w.insertions,
            w.deletions,
            w.reference_len(),
            self.cer,
            self.char_counts.substitutions,
            self.char_counts.insertions,
            self.char_counts.deletions,
            self.char_counts.reference_len(),
        ));
        if let Some(a) = &self.acronyms {
            let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.2}"));
            s.push_str(&format!(
                "acronyms {} / {}   accuracy {}\nwith acronyms     WER {}  CER {}\nwithout acronyms  WER {}  CER {}\n",
                a.correct,
                a.total,
                opt(a.accuracy),
                opt(a.wer_with),
                opt(a.cer_with),
                opt(a.wer_without),
                opt(a.cer_without),
            ));
        }
        s
    }
}
