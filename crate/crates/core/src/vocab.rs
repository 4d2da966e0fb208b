//! Token inventory: loading, alphabetic filtering and character decomposition.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::emissions::CharAlphabet;

/// Word-boundary marker used by sentencepiece-style token lists.
pub const WORD_MARKER: char = '▁';
pub const EOS_TEXT: &str = "</s>";

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("vocabulary is empty after filtering ({dropped} tokens dropped)")]
    Empty { dropped: usize },
    #[error("duplicate token {0:?}")]
    Duplicate(String),
    #[error("character {ch:?} of {text:?} is not in the alphabet")]
    OutOfAlphabet { text: String, ch: char },
    #[error("the end-of-sentence token has no character decomposition")]
    Eos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub id: TokenId,
    /// Lowercase letters, without the word marker.
    pub text: String,
    /// Form used in token lists, ARPA files and the remote protocol.
    pub surface: String,
    /// Alphabet indices, separator-prefixed when `word_initial`.
    pub chars: Vec<usize>,
    pub word_initial: bool,
    pub is_eos: bool,
}

impl Token {
    /// A token made only of the word separator.
    pub fn is_whitespace(&self) -> bool {
        !self.is_eos && self.text.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<Token>,
    eos: TokenId,
    alphabet: Arc<CharAlphabet>,
    by_key: HashMap<(bool, String), TokenId>,
    uses_markers: bool,
    dropped: Vec<String>,
    merged: usize,
}

/// Maps `text` to alphabet indices, prepending the separator iff `word_initial`.
pub fn decompose(alphabet: &CharAlphabet, text: &str, word_initial: bool) -> Result<Vec<usize>, VocabError> {
    let mut chars = Vec::with_capacity(text.len() + 1);
    if word_initial {
        chars.push(alphabet.separator_index());
    }
    for ch in text.chars().flat_map(char::to_lowercase) {
        match alphabet.index_of(ch) {
            Some(i) if alphabet.is_letter(i) => chars.push(i),
            _ => return Err(VocabError::OutOfAlphabet { text: text.to_string(), ch }),
        }
    }
    Ok(chars)
}

impl Vocabulary {
    pub fn load(path: &Path, alphabet: Arc<CharAlphabet>) -> Result<Self, VocabError> {
        let content = std::fs::read_to_string(path)?;
        Self::from_lines(content.lines(), alphabet)
    }

    /// Builds a vocabulary from token-list lines. Lines starting with `#` are
    /// comments. If no line carries the `▁` marker, every token is treated as
    /// a whole word.
    pub fn from_lines<'a, I>(lines: I, alphabet: Arc<CharAlphabet>) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let raw: Vec<&str> =
            lines.into_iter().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).collect();
        let uses_markers = raw.iter().any(|l| l.starts_with(WORD_MARKER));

        let mut tokens: Vec<Token> = Vec::new();
        let mut by_key = HashMap::new();
        let mut seen_raw: HashMap<&str, ()> = HashMap::new();
        let mut dropped = Vec::new();
        let mut merged = 0;
        for line in raw {
            if seen_raw.insert(line, ()).is_some() {
                return Err(VocabError::Duplicate(line.to_string()));
            }
            let (marked, body) = match line.strip_prefix(WORD_MARKER) {
                Some(rest) => (true, rest),
                None => (false, line),
            };
            if !body.chars().all(|c| c.is_ascii_alphabetic()) || (body.is_empty() && !marked) {
                dropped.push(line.to_string());
                continue;
            }
            let word_initial = marked || !uses_markers;
            let text = body.to_ascii_lowercase();
            let key = (word_initial, text.clone());
            if by_key.contains_key(&key) {
                merged += 1;
                continue;
            }
            let chars = match decompose(&alphabet, &text, word_initial) {
                Ok(c) => c,
                Err(_) => {
                    dropped.push(line.to_string());
                    continue;
                }
            };
            let id = TokenId(tokens.len() as u32);
            let surface = if uses_markers && word_initial { format!("{WORD_MARKER}{text}") } else { text.clone() };
            by_key.insert(key, id);
            tokens.push(Token { id, text, surface, chars, word_initial, is_eos: false });
        }
        if tokens.is_empty() {
            return Err(VocabError::Empty { dropped: dropped.len() });
        }
        if !dropped.is_empty() {
            log::info!("vocabulary: dropped {} non-alphabetic tokens", dropped.len());
        }
        let eos = TokenId(tokens.len() as u32);
        tokens.push(Token {
            id: eos,
            text: EOS_TEXT.to_string(),
            surface: EOS_TEXT.to_string(),
            chars: Vec::new(),
            word_initial: false,
            is_eos: true,
        });
        Ok(Self { tokens, eos, alphabet, by_key, uses_markers, dropped, merged })
    }

    /// All tokens including EOS, indexed by id.
    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn token(&self, id: TokenId) -> &Token {
        &self.tokens[id.index()]
    }

    /// Number of tokens including EOS.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos
    }

    pub fn alphabet(&self) -> &Arc<CharAlphabet> {
        &self.alphabet
    }

    pub fn uses_markers(&self) -> bool {
        self.uses_markers
    }

    /// Raw lines rejected by the alphabetic filter.
    pub fn dropped(&self) -> &[String] {
        &self.dropped
    }

    /// Number of case variants folded into an earlier entry.
    pub fn merged(&self) -> usize {
        self.merged
    }

    pub fn decompose(&self, text: &str, word_initial: bool) -> Result<Vec<usize>, VocabError> {
        decompose(&self.alphabet, text, word_initial)
    }

    pub fn decompose_token(&self, id: TokenId) -> Result<&[usize], VocabError> {
        let t = self.token(id);
        if t.is_eos {
            return Err(VocabError::Eos);
        }
        Ok(&t.chars)
    }

    /// Resolves a token written in list/protocol form (`▁the`, ` the`, `the`).
    pub fn lookup_surface(&self, surface: &str) -> Option<TokenId> {
        if surface == EOS_TEXT {
            return Some(self.eos);
        }
        let (marked, body) = match surface.strip_prefix(WORD_MARKER) {
            Some(rest) => (true, rest),
            None => match surface.strip_prefix(' ') {
                Some(rest) => (true, rest),
                None => (false, surface),
            },
        };
        if !body.chars().all(|c| c.is_ascii_alphabetic()) {
            return None;
        }
        let word_initial = marked || !self.uses_markers;
        self.by_key.get(&(word_initial, body.to_ascii_lowercase())).copied()
    }

    /// Lines that reload to an identical vocabulary.
    pub fn to_lines(&self) -> Vec<String> {
        self.tokens.iter().filter(|t| !t.is_eos).map(|t| t.surface.clone()).collect()
    }

    /// Concatenates token texts, inserting a space before word-initial tokens.
    pub fn render(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for &id in ids {
            let t = self.token(id);
            if t.is_eos {
                continue;
            }
            if t.word_initial && !out.is_empty() {
                out.push(' ');
            }
            out.push_str(&t.text);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn english() -> Arc<CharAlphabet> {
        Arc::new(CharAlphabet::english())
    }

    #[test]
    fn filters_non_alphabetic() {
        let v = Vocabulary::from_lines(["the", "Th3", "$", "cat"], english()).unwrap();
        let texts: Vec<&str> = v.tokens().iter().filter(|t| !t.is_eos).map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["the", "cat"]);
        assert_eq!(v.dropped().len(), 2);
        assert_eq!(v.len(), 3);
        assert!(v.token(v.eos_id()).is_eos);
    }

    #[test]
    fn single_token_is_word_initial_without_markers() {
        let a = english();
        let v = Vocabulary::from_lines(["a"], a.clone()).unwrap();
        let t = v.token(TokenId(0));
        assert_eq!(t.chars, vec![a.separator_index(), a.index_of('a').unwrap()]);
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(Vocabulary::from_lines(Vec::<&str>::new(), english()), Err(VocabError::Empty { dropped: 0 })));
        assert!(matches!(Vocabulary::from_lines(["42", "#comment"], english()), Err(VocabError::Empty { dropped: 1 })));
    }

    #[test]
    fn duplicates_and_case_merge() {
        assert!(matches!(Vocabulary::from_lines(["cat", "cat"], english()), Err(VocabError::Duplicate(_))));
        let v = Vocabulary::from_lines(["Cat", "cat", "dog"], english()).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.merged(), 1);
        assert_eq!(v.token(TokenId(0)).text, "cat");
    }

    #[test]
    fn decomposition() {
        let a = english();
        let idx = |c| a.index_of(c).unwrap();
        let sep = a.separator_index();
        assert_eq!(decompose(&a, "cat", true).unwrap(), vec![sep, idx('c'), idx('a'), idx('t')]);
        assert_eq!(decompose(&a, "s", false).unwrap(), vec![idx('s')]);
        assert!(matches!(decompose(&a, "Café", true), Err(VocabError::OutOfAlphabet { ch: 'é', .. })));
    }

    #[test]
    fn markers_and_whitespace_tokens() {
        let v = Vocabulary::from_lines(["▁the", "s", "▁", "▁x1"], english()).unwrap();
        assert!(v.uses_markers());
        let the = v.lookup_surface("▁the").unwrap();
        assert!(v.token(the).word_initial);
        assert_eq!(v.lookup_surface(" the"), Some(the));
        let s = v.lookup_surface("s").unwrap();
        assert!(!v.token(s).word_initial);
        let ws = v.lookup_surface("▁").unwrap();
        assert!(v.token(ws).is_whitespace());
        assert_eq!(v.dropped(), ["▁x1"]);
        assert_eq!(v.render(&[the, s, the]), "thes the");
        assert!(matches!(v.decompose_token(v.eos_id()), Err(VocabError::Eos)));
    }

    #[test]
    fn filtering_is_idempotent() {
        let v = Vocabulary::from_lines(["▁Hello", "wor", "ld", "▁3d", "▁x"], english()).unwrap();
        let lines = v.to_lines();
        let again = Vocabulary::from_lines(lines.iter().map(String::as_str), english()).unwrap();
        assert!(again.dropped().is_empty());
        assert_eq!(again.to_lines(), lines);
    }
}
