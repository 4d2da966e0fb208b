use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use super::{sort_candidates, LanguageModel, LmCandidate, LmError};
use crate::vocab::{TokenId, Vocabulary};

/// `ln(1e-10)`, returned for words the model has never seen when it has no `<unk>`.
pub const DEFAULT_OOV_FLOOR: f64 = -23.025850929940457;

const BOS: &str = "<s>";
const EOS: &str = "</s>";
const UNK: &str = "<unk>";

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    log_prob: f64,
    backoff: f64,
}

/// Backoff N-gram model. Scores are kept in natural log.
#[derive(Debug, Clone)]
pub struct NgramModel {
    order: usize,
    words: HashMap<String, u32>,
    names: Vec<String>,
    entries: HashMap<Vec<u32>, Entry>,
    oov_floor: f64,
}

impl NgramModel {
    pub fn load_arpa(path: &Path) -> Result<Self, LmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LmError::Io(e.to_string()))?;
        Self::parse_arpa(&text)
    }

    pub fn parse_arpa(text: &str) -> Result<Self, LmError> {
        let err = |line: usize, message: String| LmError::Arpa { line: line + 1, message };
        let mut model = Self {
            order: 0,
            words: HashMap::new(),
            names: Vec::new(),
            entries: HashMap::new(),
            oov_floor: DEFAULT_OOV_FLOOR,
        };
        let mut declared: BTreeMap<usize, usize> = BTreeMap::new();
        let mut found: BTreeMap<usize, usize> = BTreeMap::new();
        let mut section: Option<usize> = None;
        let mut in_data = false;
        let mut ended = false;
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if line == "\\data\\" {
                in_data = true;
                section = None;
                continue;
            }
            if line == "\\end\\" {
                ended = true;
                break;
            }
            if let Some(n) = line.strip_prefix('\\').and_then(|l| l.strip_suffix("-grams:")) {
                let n: usize = n.parse().map_err(|_| err(no, format!("bad section {line:?}")))?;
                if !declared.contains_key(&n) {
                    return Err(err(no, format!("section for undeclared order {n}")));
                }
                section = Some(n);
                in_data = false;
                continue;
            }
            if in_data {
                let rest = line
                    .strip_prefix("ngram ")
                    .ok_or_else(|| err(no, format!("expected `ngram N=count`, got {line:?}")))?;
                let (n, count) = rest
                    .split_once('=')
                    .and_then(|(n, c)| Some((n.trim().parse().ok()?, c.trim().parse().ok()?)))
                    .ok_or_else(|| err(no, format!("bad count line {line:?}")))?;
                declared.insert(n, count);
                model.order = model.order.max(n);
                continue;
            }
            let Some(n) = section else {
                return Err(err(no, format!("content outside any section: {line:?}")));
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != n + 1 && fields.len() != n + 2 {
                return Err(err(no, format!("expected {n} words, got {line:?}")));
            }
            let log10: f64 = fields[0].parse().map_err(|_| err(no, format!("bad probability {:?}", fields[0])))?;
            if log10 > 0.0 {
                return Err(err(no, format!("positive log-probability {log10}")));
            }
            let backoff10: f64 = match fields.get(n + 1) {
                Some(b) => b.parse().map_err(|_| err(no, format!("bad backoff {b:?}")))?,
                None => 0.0,
            };
            let key: Vec<u32> = fields[1..=n].iter().map(|w| model.intern(w)).collect();
            model.entries.insert(
                key,
                Entry { log_prob: log10 * std::f64::consts::LN_10, backoff: backoff10 * std::f64::consts::LN_10 },
            );
            *found.entry(n).or_default() += 1;
        }
        if !ended {
            return Err(err(text.lines().count(), "missing \\end\\".into()));
        }
        if declared.is_empty() {
            return Err(err(0, "missing \\data\\ header".into()));
        }
        for (n, count) in &declared {
            let got = found.get(n).copied().unwrap_or(0);
            if got != *count {
                log::warn!("ARPA declares {count} {n}-grams but contains {got}");
            }
        }
        Ok(model)
    }

    fn intern(&mut self, w: &str) -> u32 {
        if let Some(&id) = self.words.get(w) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(w.to_string());
        self.words.insert(w.to_string(), id);
        id
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn with_oov_floor(mut self, floor: f64) -> Self {
        self.oov_floor = floor;
        self
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.get(word).is_some_and(|id| self.entries.contains_key(&vec![*id]))
    }

    fn word_id(&self, w: &str) -> Option<u32> {
        self.words.get(w).copied()
    }

    /// `ln P(word | history)`, with `<s>` implicitly prepended to `history`.
    pub fn score(&self, history: &[&str], word: &str) -> f64 {
        let mut ctx: Vec<Option<u32>> = Vec::with_capacity(history.len() + 1);
        ctx.push(self.word_id(BOS));
        ctx.extend(history.iter().map(|w| self.word_id(w).or_else(|| self.word_id(UNK))));
        let w = self.word_id(word).filter(|id| self.entries.contains_key(&vec![*id]));
        match w.or_else(|| self.word_id(UNK)) {
            Some(w) => self.score_ids(&ctx, w),
            None => self.oov_floor,
        }
    }

    fn score_ids(&self, context: &[Option<u32>], w: u32) -> f64 {
        let keep = context.len().min(self.order.saturating_sub(1));
        let context = &context[context.len() - keep..];
        let mut backoff = 0.0;
        for start in 0..=context.len() {
            let ctx = &context[start..];
            let Some(ctx) = ctx.iter().copied().collect::<Option<Vec<u32>>>() else {
                continue;
            };
            let mut key = ctx.clone();
            key.push(w);
            if let Some(e) = self.entries.get(&key) {
                return backoff + e.log_prob;
            }
            if !ctx.is_empty() {
                backoff += self.entries.get(&ctx).map_or(0.0, |e| e.backoff);
            }
        }
        self.oov_floor
    }

    /// Bigram model with absolute discounting and backoff to maximum-likelihood
    /// unigrams. Each sentence is a list of words.
    pub fn estimate_bigram(sentences: &[Vec<String>], discount: f64) -> Self {
        let mut unigram: BTreeMap<&str, f64> = BTreeMap::new();
        let mut bigram: BTreeMap<(&str, &str), f64> = BTreeMap::new();
        let mut total = 0.0;
        for s in sentences {
            let mut prev = BOS;
            for w in s.iter().map(String::as_str).chain(std::iter::once(EOS)) {
                *unigram.entry(w).or_default() += 1.0;
                *bigram.entry((prev, w)).or_default() += 1.0;
                total += 1.0;
                prev = w;
            }
        }
        let mut model = Self {
            order: 2,
            words: HashMap::new(),
            names: Vec::new(),
            entries: HashMap::new(),
            oov_floor: DEFAULT_OOV_FLOOR,
        };
        let p_uni: BTreeMap<&str, f64> = unigram.iter().map(|(w, c)| (*w, c / total)).collect();
        let bos = model.intern(BOS);
        model.entries.insert(vec![bos], Entry { log_prob: -99.0 * std::f64::consts::LN_10, backoff: 0.0 });
        for (w, p) in &p_uni {
            let id = model.intern(w);
            model.entries.insert(vec![id], Entry { log_prob: p.ln(), backoff: 0.0 });
        }
        let mut ctx_count: BTreeMap<&str, (f64, f64, f64)> = BTreeMap::new();
        for ((v, w), c) in &bigram {
            let e = ctx_count.entry(v).or_default();
            e.0 += c;
            e.1 += 1.0;
            e.2 += p_uni[w];
        }
        for ((v, w), c) in &bigram {
            let (cv, _, _) = ctx_count[v];
            let key = vec![model.intern(v), model.intern(w)];
            model.entries.insert(key, Entry { log_prob: ((c - discount) / cv).ln(), backoff: 0.0 });
        }
        for (v, (cv, types, seen_mass)) in ctx_count {
            let left = discount * types / cv;
            let denom = 1.0 - seen_mass;
            let bow = if denom > 1e-12 { (left / denom).ln() } else { -99.0 };
            let id = model.intern(v);
            if let Some(e) = model.entries.get_mut(&vec![id]) {
                e.backoff = bow;
            }
        }
        model
    }

    pub fn write_arpa<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut by_order: Vec<Vec<(&Vec<u32>, &Entry)>> = vec![Vec::new(); self.order];
        for (k, e) in &self.entries {
            by_order[k.len() - 1].push((k, e));
        }
        let name = |k: &Vec<u32>| k.iter().map(|&i| self.names[i as usize].as_str()).collect::<Vec<_>>().join(" ");
        writeln!(w, "\\data\\")?;
        for (i, list) in by_order.iter().enumerate() {
            writeln!(w, "ngram {}={}", i + 1, list.len())?;
        }
        for (i, list) in by_order.iter_mut().enumerate() {
            list.sort_by_key(|(k, _)| name(k));
            writeln!(w, "\n\\{}-grams:", i + 1)?;
            for (k, e) in list.iter() {
                let lp = e.log_prob / std::f64::consts::LN_10;
                if i + 1 < self.order {
                    let bo = e.backoff / std::f64::consts::LN_10;
                    writeln!(w, "{lp:.9}\t{}\t{bo:.9}", name(k))?;
                } else {
                    writeln!(w, "{lp:.9}\t{}", name(k))?;
                }
            }
        }
        writeln!(w, "\n\\end\\")?;
        Ok(())
    }
}

/// An [`NgramModel`] bound to a token vocabulary.
#[derive(Debug, Clone)]
pub struct NgramLm {
    model: Arc<NgramModel>,
    vocab: Arc<Vocabulary>,
    names: Vec<String>,
}

impl NgramLm {
    pub fn new(model: Arc<NgramModel>, vocab: Arc<Vocabulary>) -> Self {
        let names = vocab
            .tokens()
            .iter()
            .map(|t| {
                if t.is_eos {
                    EOS.to_string()
                } else if model.contains(&t.surface) {
                    t.surface.clone()
                } else {
                    t.text.clone()
                }
            })
            .collect();
        Self { model, vocab, names }
    }

    pub fn model(&self) -> &NgramModel {
        &self.model
    }

    /// `ln P(token | prefix)`.
    pub fn score_token(&self, prefix: &[TokenId], token: TokenId) -> f64 {
        let history: Vec<&str> = prefix.iter().map(|t| self.names[t.index()].as_str()).collect();
        self.model.score(&history, &self.names[token.index()])
    }
}

impl LanguageModel for NgramLm {
    fn top_k(&self, prefix: &[TokenId], k: usize) -> Result<Vec<LmCandidate>, LmError> {
        if k == 0 {
            return Err(LmError::InvalidK);
        }
        let history: Vec<&str> = prefix.iter().map(|t| self.names[t.index()].as_str()).collect();
        let mut out: Vec<LmCandidate> = self
            .vocab
            .tokens()
            .iter()
            .map(|t| LmCandidate { token: t.id, log_prob: self.model.score(&history, &self.names[t.id.index()]) })
            .collect();
        sort_candidates(&mut out);
        out.truncate(k);
        Ok(out)
    }
}
