//! A language model defined by a seeded hash of the prefix.

use llmbeam_core::lm::{sort_candidates, LanguageModel, LmCandidate, LmError};
use llmbeam_core::TokenId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every prefix gets its own softmax distribution over all `size` tokens,
/// drawn from logits `N(0, spread^2)` seeded by `(seed, prefix)`.
#[derive(Debug, Clone)]
pub struct TableLm {
    size: usize,
    seed: u64,
    spread: f64,
    /// Multiplies every log-probability; 1.0 leaves the model normalized.
    pub scale: f64,
}

impl TableLm {
    pub fn new(size: usize, seed: u64, spread: f64) -> Self {
        Self { size, seed, spread, scale: 1.0 }
    }

    /// `ln P(token | prefix)` for every token id.
    pub fn distribution(&self, prefix: &[TokenId]) -> Vec<f64> {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.seed;
        for t in prefix {
            h = (h ^ (t.0 as u64 + 1)).wrapping_mul(0x0100_0000_01b3);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let logits: Vec<f64> = (0..self.size)
            .map(|_| {
                let u: f64 = rng.random_range(-1.0..1.0);
                u * self.spread
            })
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        logits.iter().map(|l| (l - lse) * self.scale).collect()
    }
}

impl LanguageModel for TableLm {
    fn top_k(&self, prefix: &[TokenId], k: usize) -> Result<Vec<LmCandidate>, LmError> {
        if k == 0 {
            return Err(LmError::InvalidK);
        }
        let mut c: Vec<LmCandidate> = self
            .distribution(prefix)
            .into_iter()
            .enumerate()
            .map(|(i, lp)| LmCandidate { token: TokenId(i as u32), log_prob: lp })
            .collect();
        sort_candidates(&mut c);
        c.truncate(k);
        Ok(c)
    }
}
