//! Random instances.

use std::sync::Arc;

use llmbeam_core::{CharAlphabet, EmissionMatrix, Vocabulary};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// `∅|abc`: few letters, so repeats and shared prefixes are common.
pub fn small_alphabet() -> Arc<CharAlphabet> {
    Arc::new(CharAlphabet::parse("∅|abc").expect("valid alphabet"))
}

/// Softmax of Gaussian logits with standard deviation `spread`.
pub fn random_matrix<R: Rng>(rng: &mut R, alphabet: &Arc<CharAlphabet>, frames: usize, spread: f64) -> EmissionMatrix {
    let c = alphabet.len();
    let mut data = Vec::with_capacity(frames * c);
    for _ in 0..frames {
        let logits: Vec<f64> = (0..c)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * spread
            })
            .collect();
        push_softmax(&mut data, &logits);
    }
    EmissionMatrix::from_log_probs(data, frames, Arc::clone(alphabet), 20).expect("normalized rows")
}

/// Frames follow `labels` (one symbol index per frame) with a logit boost
/// of `margin` plus Gaussian noise of standard deviation `noise`.
pub fn noisy_render<R: Rng>(
    rng: &mut R,
    alphabet: &Arc<CharAlphabet>,
    labels: &[usize],
    margin: f64,
    noise: f64,
) -> EmissionMatrix {
    let c = alphabet.len();
    let mut data = Vec::with_capacity(labels.len() * c);
    for &l in labels {
        let logits: Vec<f64> = (0..c)
            .map(|s| {
                let z: f64 = StandardNormal.sample(rng);
                let boost = if s == l { margin } else { 0.0 };
                boost + z * noise
            })
            .collect();
        push_softmax(&mut data, &logits);
    }
    EmissionMatrix::from_log_probs(data, labels.len(), Arc::clone(alphabet), 20).expect("normalized rows")
}

fn push_softmax(data: &mut Vec<f32>, logits: &[f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    data.extend(logits.iter().map(|l| (l - lse) as f32));
}

/// Random letter string over the alphabet's letters.
pub fn random_word<R: Rng>(rng: &mut R, alphabet: &CharAlphabet, min: usize, max: usize) -> String {
    let letters: Vec<char> =
        (0..alphabet.len()).filter(|&i| alphabet.is_letter(i)).map(|i| alphabet.symbol(i)).collect();
    let n = rng.random_range(min..=max);
    (0..n).map(|_| *letters.choose(rng).expect("alphabet has letters")).collect()
}

/// Between 2 and `max_tokens` distinct tokens. With `markers`, tokens are
/// randomly word-initial (`▁x`) or not, and a lone `▁` may appear.
pub fn random_vocab<R: Rng>(rng: &mut R, alphabet: &Arc<CharAlphabet>, max_tokens: usize, markers: bool) -> Vocabulary {
    let n = rng.random_range(2..=max_tokens.max(2));
    let mut lines: Vec<String> = Vec::new();
    if markers && rng.random_bool(0.3) {
        lines.push("▁".into());
    }
    let mut guard = 0;
    while lines.len() < n && guard < 1000 {
        guard += 1;
        let w = random_word(rng, alphabet, 1, 3);
        let line = if !markers || rng.random_bool(0.5) { format!("▁{w}") } else { w };
        let line = if markers { line } else { line.trim_start_matches('▁').to_string() };
        if !lines.contains(&line) {
            lines.push(line);
        }
    }
    if markers && !lines.iter().any(|l| l.starts_with('▁')) {
        lines.push("▁a".into());
    }
    Vocabulary::from_lines(lines.iter().map(String::as_str), Arc::clone(alphabet)).expect("non-empty vocabulary")
}
