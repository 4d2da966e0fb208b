//! Synthetic emissions: renders text into a sharp CTC posterior matrix with
//! optional logit noise, plus matching vocabulary and bigram LM files.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::emissions::{CharAlphabet, EmissionFormat, EmissionMatrix, EmissionsError, DEFAULT_FRAME_MS};
use crate::eval::normalize;
use crate::lm::NgramModel;

/// Logit gap between the rendered symbol and every other symbol.
pub const TARGET_MARGIN: f64 = 8.0;
pub const BIGRAM_DISCOUNT: f64 = 0.5;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{utt_id}: character {ch:?} is not in the alphabet")]
    OutOfAlphabet { utt_id: String, ch: char },
    #[error("{utt_id}: {message}")]
    Invalid { utt_id: String, message: String },
    #[error("spec line {line}: {message}")]
    Spec { line: usize, message: String },
    #[error(transparent)]
    Emissions(#[from] EmissionsError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub utt_id: String,
    pub text: String,
    pub frames_per_char: usize,
    pub temperature: f64,
}

impl SynthSpec {
    /// Parses `utt_id<TAB>text[<TAB>frames_per_char[<TAB>temperature]]`
    /// lines; `#` starts a comment line.
    pub fn parse_list(
        content: &str,
        default_frames: usize,
        default_temperature: f64,
    ) -> Result<Vec<SynthSpec>, SynthError> {
        let mut out = Vec::new();
        for (i, line) in content.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| SynthError::Spec { line: i + 1, message };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 2 || cols.len() > 4 {
                return Err(err(format!("expected 2 to 4 tab-separated columns, got {}", cols.len())));
            }
            let frames_per_char = match cols.get(2) {
                Some(s) => s.trim().parse().map_err(|_| err(format!("bad frames_per_char {s:?}")))?,
                None => default_frames,
            };
            let temperature = match cols.get(3) {
                Some(s) => s.trim().parse().map_err(|_| err(format!("bad temperature {s:?}")))?,
                None => default_temperature,
            };
            out.push(SynthSpec {
                utt_id: cols[0].trim().to_string(),
                text: cols[1].to_string(),
                frames_per_char,
                temperature,
            });
        }
        Ok(out)
    }
}

/// Per-frame symbol indices for `text`: each word is the separator followed
/// by its letters, every label lasts `frames_per_char` frames, a blank frame
/// splits identical neighbours, and one blank label pads each end.
pub fn render_frames(alphabet: &CharAlphabet, spec: &SynthSpec) -> Result<Vec<usize>, SynthError> {
    if spec.frames_per_char == 0 {
        return Err(SynthError::Invalid {
            utt_id: spec.utt_id.clone(),
            message: "frames_per_char must be at least 1".into(),
        });
    }
    for ch in spec.text.chars().flat_map(char::to_lowercase) {
        let known = alphabet.index_of(ch).is_some_and(|i| alphabet.is_letter(i));
        if ch.is_alphanumeric() && !known {
            return Err(SynthError::OutOfAlphabet { utt_id: spec.utt_id.clone(), ch });
        }
    }
    let blank = alphabet.blank_index();
    let mut labels = vec![blank];
    for word in normalize(&spec.text).split(' ').filter(|w| !w.is_empty()) {
        labels.push(alphabet.separator_index());
        labels.extend(word.chars().map(|c| alphabet.index_of(c).expect("checked above")));
    }
    labels.push(blank);
    let mut frames = Vec::with_capacity(labels.len() * (spec.frames_per_char + 1));
    for (i, &l) in labels.iter().enumerate() {
        if i > 0 && labels[i - 1] == l && l != blank {
            frames.push(blank);
        }
        frames.extend(std::iter::repeat_n(l, spec.frames_per_char));
    }
    Ok(frames)
}

/// Renders one utterance. `seed` fully determines the noise.
pub fn synthesize(alphabet: &Arc<CharAlphabet>, spec: &SynthSpec, seed: u64) -> Result<EmissionMatrix, SynthError> {
    if !(spec.temperature >= 0.0 && spec.temperature.is_finite()) {
        return Err(SynthError::Invalid {
            utt_id: spec.utt_id.clone(),
            message: format!("temperature must be a non-negative number, got {}", spec.temperature),
        });
    }
    let frames = render_frames(alphabet, spec)?;
    let c = alphabet.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(frames.len() * c);
    let mut logits = vec![0.0f64; c];
    for &target in &frames {
        for (s, l) in logits.iter_mut().enumerate() {
            let base = if s == target { 0.0 } else { -TARGET_MARGIN };
            let noise: f64 = if spec.temperature > 0.0 { StandardNormal.sample(&mut rng) } else { 0.0 };
            *l = base + spec.temperature * noise;
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        data.extend(logits.iter().map(|l| (l - lse) as f32));
    }
    Ok(EmissionMatrix::from_log_probs(data, frames.len(), Arc::clone(alphabet), DEFAULT_FRAME_MS)?)
}

/// Per-utterance seed derived from the corpus seed and the utterance index.
pub fn utterance_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rand::Rng::random(&mut rng)
}

/// Sorted distinct words of the normalized texts.
pub fn corpus_vocabulary<'a>(texts: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let set: BTreeSet<String> = texts
        .into_iter()
        .flat_map(|t| normalize(t).split(' ').map(String::from).collect::<Vec<_>>())
        .filter(|w| !w.is_empty())
        .collect();
    set.into_iter().collect()
}

pub fn corpus_bigram<'a>(texts: impl IntoIterator<Item = &'a str>) -> NgramModel {
    let sentences: Vec<Vec<String>> =
        texts.into_iter().map(|t| normalize(t).split_whitespace().map(String::from).collect()).collect();
    NgramModel::estimate_bigram(&sentences, BIGRAM_DISCOUNT)
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub specs: Vec<SynthSpec>,
    pub matrices: Vec<EmissionMatrix>,
}

pub fn synthesize_corpus(
    alphabet: &Arc<CharAlphabet>,
    specs: &[SynthSpec],
    seed: u64,
) -> Result<SynthCorpus, SynthError> {
    let matrices = specs
        .iter()
        .enumerate()
        .map(|(i, s)| synthesize(alphabet, s, utterance_seed(seed, i)))
        .collect::<Result<_, _>>()?;
    Ok(SynthCorpus { specs: specs.to_vec(), matrices })
}

impl SynthCorpus {
    /// Writes `emissions/<id>.ctce`, `refs.tsv`, `vocab.txt` and `lm.arpa`.
    pub fn write(&self, dir: &Path) -> Result<(), SynthError> {
        let em = dir.join("emissions");
        std::fs::create_dir_all(&em)?;
        let mut refs = std::io::BufWriter::new(std::fs::File::create(dir.join("refs.tsv"))?);
        for (spec, m) in self.specs.iter().zip(&self.matrices) {
            m.save(&em.join(format!("{}.ctce", spec.utt_id)), EmissionFormat::Binary)?;
            writeln!(refs, "{}\t{}", spec.utt_id, spec.text)?;
        }
        refs.flush()?;
        let texts: Vec<&str> = self.specs.iter().map(|s| s.text.as_str()).collect();
        let mut vocab = corpus_vocabulary(texts.iter().copied()).join("\n");
        vocab.push('\n');
        std::fs::write(dir.join("vocab.txt"), vocab)?;
        let lm = std::io::BufWriter::new(std::fs::File::create(dir.join("lm.arpa"))?);
        corpus_bigram(texts).write_arpa(lm)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::greedy_decode;

    fn spec(text: &str, temperature: f64) -> SynthSpec {
        SynthSpec { utt_id: "u".into(), text: text.into(), frames_per_char: 2, temperature }
    }

    #[test]
    fn clean_render_decodes_greedily() {
        let a = Arc::new(CharAlphabet::english());
        for text in ["hello", "Hello, world!", "the U. S. A. committee", "aa bb  ccc"] {
            let m = synthesize(&a, &spec(text, 0.0), 1).unwrap();
            assert_eq!(greedy_decode(&m), normalize(text), "{text}");
        }
    }

    #[test]
    fn repeated_letters_get_a_blank() {
        let a = CharAlphabet::english();
        let f = render_frames(&a, &SynthSpec { frames_per_char: 1, ..spec("ll", 0.0) }).unwrap();
        let l = a.index_of('l').unwrap();
        assert_eq!(f, vec![0, a.separator_index(), l, 0, l, 0]);
    }

    #[test]
    fn rejects_foreign_letters() {
        let a = Arc::new(CharAlphabet::english());
        assert!(matches!(synthesize(&a, &spec("café", 0.0), 1), Err(SynthError::OutOfAlphabet { ch: 'é', .. })));
    }

    #[test]
    fn noise_is_seeded() {
        let a = Arc::new(CharAlphabet::english());
        let x = synthesize(&a, &spec("noisy words", 1.5), 7).unwrap();
        let y = synthesize(&a, &spec("noisy words", 1.5), 7).unwrap();
        let z = synthesize(&a, &spec("noisy words", 1.5), 8).unwrap();
        assert_eq!(x, y);
        assert_ne!(x, z);
    }

    #[test]
    fn spec_lines() {
        let s = SynthSpec::parse_list("# c\na\thello there\nb\tbye\t4\t0.5\n", 3, 0.0).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].frames_per_char, s[0].temperature), (3, 0.0));
        assert_eq!((s[1].frames_per_char, s[1].temperature), (4, 0.5));
        assert!(SynthSpec::parse_list("onlyone\n", 3, 0.0).is_err());
    }
}
