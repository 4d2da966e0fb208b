//! Exhaustive CTC path enumeration.

use std::collections::HashMap;

use llmbeam_core::EmissionMatrix;

/// Dense `ln p(frame, symbol)` table.
pub fn log_table(m: &EmissionMatrix) -> Vec<Vec<f64>> {
    (0..m.num_frames()).map(|t| m.row(t).iter().map(|&v| v as f64).collect()).collect()
}

/// All labelings of `frames` frames that collapse to `chars`, finish on the
/// last character, and would not merge with `prev` emitted just before.
pub fn token_paths(frames: usize, chars: &[usize], blank: usize, prev: Option<usize>) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(frames);
    let mut labels: Vec<usize> = chars.to_vec();
    labels.push(blank);
    labels.sort_unstable();
    labels.dedup();
    #[allow(clippy::too_many_arguments)]
    fn rec(
        frames: usize,
        chars: &[usize],
        blank: usize,
        labels: &[usize],
        emitted: usize,
        last: Option<usize>,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if cur.len() == frames {
            if emitted == chars.len() && last == chars.last().copied() {
                out.push(cur.clone());
            }
            return;
        }
        for &l in labels {
            let next_emitted = if l == blank {
                emitted
            } else if Some(l) == last {
                if emitted == 0 {
                    // would extend the previous token's final character
                    continue;
                }
                emitted
            } else if emitted < chars.len() && chars[emitted] == l {
                emitted + 1
            } else {
                continue;
            };
            cur.push(l);
            rec(frames, chars, blank, labels, next_emitted, Some(l), cur, out);
            cur.pop();
        }
    }
    rec(frames, chars, blank, &labels, 0, prev, &mut cur, &mut out);
    out
}

/// Sum of `ln p` along `path`, starting at frame `start`, left to right.
pub fn path_score(logp: &[Vec<f64>], start: usize, path: &[usize]) -> f64 {
    let mut s = 0.0;
    for (i, &l) in path.iter().enumerate() {
        s += logp[start + i][l];
    }
    s
}

/// State indices in the `ε c1 ε c2 … ε cm` topology for a token path.
pub fn states_of(path: &[usize], chars: &[usize], blank: usize) -> Vec<usize> {
    let mut emitted = 0;
    let mut last = None;
    path.iter()
        .map(|&l| {
            if l == blank {
                last = None;
                2 * emitted
            } else {
                if last != Some(l) {
                    emitted += 1;
                }
                last = Some(l);
                debug_assert_eq!(chars[emitted - 1], l);
                2 * (emitted - 1) + 1
            }
        })
        .collect()
}

/// Best path of `chars` over frames `[start, end)`, by enumeration.
pub fn best_token_path(
    logp: &[Vec<f64>],
    start: usize,
    end: usize,
    chars: &[usize],
    blank: usize,
    prev: Option<usize>,
) -> Option<(f64, Vec<usize>)> {
    token_paths(end - start, chars, blank, prev).into_iter().map(|p| (path_score(logp, start, &p), p)).fold(
        None,
        |acc, (s, p)| match acc {
            Some((bs, _)) if bs >= s => acc,
            _ => Some((s, p)),
        },
    )
}

fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut last = None;
    for &l in path {
        if Some(l) != last && l != blank {
            out.push(l);
        }
        last = Some(l);
    }
    out
}

/// `P(labeling | X)` for every labeling, summing all `C^T` frame paths.
pub fn labeling_probs(logp: &[Vec<f64>], blank: usize) -> HashMap<Vec<usize>, f64> {
    let t = logp.len();
    let c = logp.first().map_or(0, Vec::len);
    let mut out: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut path = vec![0usize; t];
    loop {
        let p: f64 = path.iter().enumerate().map(|(i, &l)| logp[i][l]).sum::<f64>().exp();
        *out.entry(collapse(&path, blank)).or_default() += p;
        let mut i = 0;
        loop {
            if i == t {
                return out;
            }
            path[i] += 1;
            if path[i] < c {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }
}
