use llmbeam_core::aligner::{align_token, viterbi_trellis, AlignOptions, AlignState, LOG_ZERO};
use llmbeam_testkit::ctc::{best_token_path, log_table, path_score, states_of, token_paths};
use llmbeam_testkit::gen::{random_matrix, small_alphabet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;

fn random_chars<R: Rng>(rng: &mut R, symbols: usize, max_len: usize) -> Vec<usize> {
    let n = rng.random_range(1..=max_len);
    (0..n).map(|_| rng.random_range(1..symbols)).collect()
}

#[test]
fn trellis_matches_enumeration_for_every_end_frame() {
    let alphabet = small_alphabet();
    let blank = alphabet.blank_index();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..500 {
        let frames = rng.random_range(1..=12);
        let m = random_matrix(&mut rng, &alphabet, frames, 2.0);
        let logp = log_table(&m);
        let chars = random_chars(&mut rng, alphabet.len(), 4);
        let trellis = viterbi_trellis(&chars, &m.view());
        let last = trellis.num_states() - 1;
        for end in 1..=frames {
            let brute = best_token_path(&logp, 0, end, &chars, blank, None);
            let got = trellis.score(end - 1, last);
            match brute {
                None => assert_eq!(got, LOG_ZERO, "case {case}: end {end} should be unreachable"),
                Some((score, _)) => {
                    assert!((got - score).abs() < TOL, "case {case} end {end}: {got} vs {score}");
                    let states = trellis.best_path(end);
                    assert_eq!(states.len(), end);
                    // the returned path must be a valid path with the optimal score
                    let labels: Vec<usize> =
                        states.iter().map(|&s| if s % 2 == 0 { blank } else { chars[s / 2] }).collect();
                    assert!(token_paths(end, &chars, blank, None).contains(&labels), "case {case}: invalid path");
                    assert_eq!(states_of(&labels, &chars, blank), states);
                    assert!((path_score(&logp, 0, &labels) - score).abs() < TOL);
                }
            }
        }
    }
}

#[test]
fn align_token_picks_the_best_end_within_the_window() {
    let alphabet = small_alphabet();
    let blank = alphabet.blank_index();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..300 {
        let frames = rng.random_range(2..=10);
        let m = random_matrix(&mut rng, &alphabet, frames, 2.0);
        let logp = log_table(&m);
        let chars = random_chars(&mut rng, alphabet.len(), 3);
        let start = rng.random_range(0..frames);
        let prev = if start > 0 && rng.random_bool(0.5) { Some(chars[0]) } else { None };
        let window = rng.random_range(1..=frames);
        let opts = AlignOptions { window, ..AlignOptions::default() };
        let brute = (start + 1..=frames.min(start + window))
            .filter_map(|e| best_token_path(&logp, start, e, &chars, blank, prev).map(|(s, _)| (e, s)))
            .fold(None, |acc: Option<(usize, f64)>, (e, s)| match acc {
                Some((_, b)) if b >= s => acc,
                _ => Some((e, s)),
            });
        let got = align_token(&chars, start, &m.view(), &opts, prev);
        match brute {
            None => assert!(got.is_err(), "case {case}: expected infeasible"),
            Some((end, score)) => {
                let r = got.unwrap_or_else(|e| panic!("case {case}: {e}"));
                assert!((r.log_likelihood - score).abs() < TOL, "case {case}");
                assert_eq!(r.end_frame, end, "case {case}");
                assert_eq!(r.start_frame, start);
                // spans tile the segment, one per character, in order
                assert_eq!(r.char_spans.len(), chars.len());
                assert_eq!(r.char_spans.last().unwrap().1, end);
                assert!(r.char_spans.windows(2).all(|w| w[0].1 <= w[1].0));
                assert!(r.char_spans.iter().all(|(a, b)| a < b && *a >= start));
            }
        }
    }
}

/// Best joint score of a token sequence ending exactly at `end`, over all
/// boundary placements, by enumeration.
fn joint_best(
    logp: &[Vec<f64>],
    tokens: &[Vec<usize>],
    blank: usize,
    start: usize,
    end: usize,
    prev: Option<usize>,
) -> Option<f64> {
    let Some((first, rest)) = tokens.split_first() else {
        return (start == end).then_some(0.0);
    };
    let mut best: Option<f64> = None;
    for mid in start + 1..=end {
        let Some((s, _)) = best_token_path(logp, start, mid, first, blank, prev) else { continue };
        if let Some(r) = joint_best(logp, rest, blank, mid, end, first.last().copied()) {
            if best.is_none_or(|b| s + r > b) {
                best = Some(s + r);
            }
        }
    }
    best
}

#[test]
fn multi_token_frontier_is_the_exact_joint_maximum() {
    let alphabet = small_alphabet();
    let blank = alphabet.blank_index();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let opts = AlignOptions::default();
    for case in 0..120 {
        let frames = rng.random_range(2..=9);
        let m = random_matrix(&mut rng, &alphabet, frames, 2.0);
        let logp = log_table(&m);
        let n = rng.random_range(1..=3);
        let tokens: Vec<Vec<usize>> = (0..n).map(|_| random_chars(&mut rng, alphabet.len(), 2)).collect();
        let mut state = Ok(AlignState::root());
        for t in &tokens {
            state = state.and_then(|s| s.extend(t, &m.view(), &opts, None));
        }
        for end in 0..=frames {
            let brute = joint_best(&logp, &tokens, blank, 0, end, None);
            match (&state, brute) {
                (Ok(s), Some(b)) => {
                    let got = s.frontier().get(end);
                    assert!((got - b).abs() < TOL, "case {case} end {end}: {got} vs {b}");
                    // per-token backtrace re-scores to the same total
                    let segs = s.backtrace(end);
                    assert_eq!(segs.len(), tokens.len());
                    assert_eq!(segs[0].start_frame, 0);
                    assert!(segs.windows(2).all(|w| w[0].end_frame == w[1].start_frame));
                    let total: f64 = segs.iter().map(|a| a.log_likelihood).sum();
                    assert!((total - b).abs() < 1e-6);
                }
                (Ok(s), None) => assert_eq!(s.frontier().get(end), LOG_ZERO, "case {case} end {end}"),
                (Err(_), Some(_)) => panic!("case {case}: reported infeasible but end {end} is reachable"),
                (Err(_), None) => {}
            }
        }
    }
}
