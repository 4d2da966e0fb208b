use std::sync::Arc;

use llmbeam_core::aligner::AlignStats;
use llmbeam_core::decoder::{
    decode_with, recursion_check, AlignMode, DecodeCache, DecodeOptions, DecodeOutput, DecoderConfig,
};
use llmbeam_core::{CharAlphabet, EmissionMatrix, LanguageModel, UniformLm, Vocabulary};
use llmbeam_testkit::gen::{noisy_render, random_vocab, small_alphabet};
use llmbeam_testkit::TableLm;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Case {
    vocab: Vocabulary,
    matrix: EmissionMatrix,
    lm: TableLm,
}

/// A noisy rendering of a random token sequence, 20 to 60 frames long.
fn case<R: Rng>(rng: &mut R) -> Case {
    let alphabet = small_alphabet();
    let markers = rng.random_bool(0.5);
    let vocab = random_vocab(rng, &alphabet, 8, markers);
    let blank = alphabet.blank_index();
    let words: Vec<_> = vocab.tokens().iter().filter(|t| !t.is_eos).collect();
    let mut labels = vec![blank; rng.random_range(0..3)];
    while labels.len() < 20 {
        for &c in &words.choose(rng).unwrap().chars {
            if labels.last() == Some(&c) || rng.random_bool(0.2) {
                labels.push(blank);
            }
            labels.extend(std::iter::repeat_n(c, rng.random_range(1..=3)));
        }
    }
    labels.push(blank);
    let noise = rng.random_range(0.5..2.0);
    let matrix = noisy_render(rng, &alphabet, &labels, 4.0, noise);
    let lm = TableLm::new(vocab.len(), rng.random(), rng.random_range(0.5..2.0));
    Case { vocab, matrix, lm }
}

fn config<R: Rng>(rng: &mut R, vocab: &Vocabulary) -> DecoderConfig {
    DecoderConfig {
        alpha: rng.random_range(0.0..1.0),
        beta: rng.random_range(-0.2..0.5),
        beam_width: rng.random_range(1..=6),
        candidates_k: rng.random_range(1..=vocab.len()),
        max_iterations: Some(rng.random_range(2..=8)),
        acoustic_floor: *[0.0, 0.1, 0.3].choose(rng).unwrap(),
        lookahead_frames: rng.random_range(8..=40),
        ..DecoderConfig::default()
    }
}

fn run(
    c: &Case,
    lm: &dyn LanguageModel,
    config: &DecoderConfig,
    stats: Option<&AlignStats>,
) -> (DecodeOutput, usize, usize) {
    let mut cache = DecodeCache::new(lm, &c.matrix);
    let out = decode_with(&c.matrix, &c.vocab, config, &mut cache, stats, &DecodeOptions { record_visited: true })
        .expect("decodes");
    (out, cache.lm.evaluations(), cache.lm.distinct_prefixes())
}

#[test]
fn cached_and_recomputed_alignments_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut multi = 0;
    let mut i = 0;
    while multi < 100 {
        i += 1;
        assert!(i < 1000, "too few multi-token decodes");
        let c = case(&mut rng);
        let cfg = config(&mut rng, &c.vocab);
        let (a, _, _) = run(&c, &c.lm, &DecoderConfig { align_mode: AlignMode::Cached, ..cfg.clone() }, None);
        let (b, _, _) = run(&c, &c.lm, &DecoderConfig { align_mode: AlignMode::Recompute, ..cfg }, None);
        assert_eq!(a.visited.len(), b.visited.len(), "case {i}");
        for (x, y) in a.visited.iter().zip(&b.visited) {
            assert_eq!(x.tokens, y.tokens, "case {i}");
            assert!((x.combined_score - y.combined_score).abs() <= 1e-9, "case {i}");
            assert_eq!((&x.alignments, &x.segment_ends, x.end_frame), (&y.alignments, &y.segment_ends, y.end_frame));
        }
        multi += usize::from(a.best.token_count >= 2);
    }
}

#[test]
fn every_hypothesis_replays_and_telescopes() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for i in 0..80 {
        let c = case(&mut rng);
        let cfg = config(&mut rng, &c.vocab);
        let (out, _, _) = run(&c, &c.lm, &cfg, None);
        for h in out.visited.iter().chain(&out.beam) {
            recursion_check(h, &cfg).unwrap_or_else(|e| panic!("case {i}: {e}"));
            let d = h.decomposed_score(&cfg);
            assert!((d - h.combined_score).abs() <= 1e-9);
            if !h.is_finished() && h.token_count > 0 {
                // acoustic score is the sum of the per-token segment scores
                let segs = h.state().backtrace(h.end_frame);
                let sum: f64 = segs.iter().map(|s| s.log_likelihood).sum();
                assert!((sum - h.acoustic_score).abs() < 1e-6, "case {i}: {sum} vs {}", h.acoustic_score);
                assert_eq!(h.alignments, segs.iter().map(|s| s.start_frame).collect::<Vec<_>>());
            }
        }
    }
}

#[test]
fn scaling_lm_and_dividing_alpha_keeps_the_ranking() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for i in 0..60 {
        let c = case(&mut rng);
        let cfg = DecoderConfig { alpha: rng.random_range(0.1..1.0), ..config(&mut rng, &c.vocab) };
        let factor = rng.random_range(0.2..5.0);
        let mut scaled = c.lm.clone();
        scaled.scale = factor;
        let (a, _, _) = run(&c, &c.lm, &cfg, None);
        let (b, _, _) = run(&c, &scaled, &DecoderConfig { alpha: cfg.alpha / factor, ..cfg }, None);
        assert_eq!(a.visited.len(), b.visited.len(), "case {i}");
        for (x, y) in a.visited.iter().zip(&b.visited) {
            assert_eq!(x.tokens, y.tokens, "case {i}");
            assert!((x.combined_score - y.combined_score).abs() < 1e-9, "case {i}");
        }
    }
}

#[test]
fn each_prefix_reaches_the_lm_once() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for i in 0..60 {
        let c = case(&mut rng);
        let cfg = config(&mut rng, &c.vocab);
        let (out, evaluations, distinct) = run(&c, &c.lm, &cfg, None);
        assert_eq!(evaluations, distinct, "case {i}");
        assert!(evaluations <= cfg.beam_width * out.iterations, "case {i}");
        // a second decode over the same cache (as in a sweep) asks nothing new
        let mut cache = DecodeCache::new(&c.lm, &c.matrix);
        let opts = DecodeOptions::default();
        decode_with(&c.matrix, &c.vocab, &cfg, &mut cache, None, &opts).unwrap();
        let before = cache.lm.evaluations();
        decode_with(&c.matrix, &c.vocab, &cfg, &mut cache, None, &opts).unwrap();
        assert_eq!(cache.lm.evaluations(), before);
    }
}

#[test]
fn alignment_work_stays_inside_the_envelope() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    for i in 0..60 {
        let c = case(&mut rng);
        let cfg = config(&mut rng, &c.vocab);
        let stats = AlignStats::default();
        let (out, _, _) = run(&c, &c.lm, &cfg, Some(&stats));
        let t = c.matrix.num_frames() as u64;
        let max_states = c.vocab.tokens().iter().map(|t| 2 * t.chars.len()).max().unwrap() as u64;
        // each extension fills at most (window + 1) frames of every state plus its overlap cells
        let per_ext = (cfg.lookahead_frames as u64 + 1) * max_states + t + 1;
        let bound = out.iterations as u64 * (cfg.beam_width * cfg.candidates_k) as u64 * per_ext;
        assert!(stats.cells() <= bound, "case {i}: {} > {bound}", stats.cells());
    }
}

#[test]
fn wider_beams_usually_do_not_lose_score() {
    // Beam search is not monotone in general: a wider beam can let an early
    // high scorer crowd out the eventual winner. Count how often it happens.
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    let (mut checked, mut worse) = (0, 0);
    for _ in 0..100 {
        let c = case(&mut rng);
        let cfg = config(&mut rng, &c.vocab);
        let mut prev = f64::NEG_INFINITY;
        for b in 1..=6 {
            let (out, _, _) = run(&c, &c.lm, &DecoderConfig { beam_width: b, ..cfg.clone() }, None);
            checked += 1;
            if out.best.combined_score < prev - 1e-9 {
                worse += 1;
            }
            prev = prev.max(out.best.combined_score);
        }
    }
    eprintln!("{worse} of {checked} widenings lost score");
    assert!(worse * 10 <= checked, "{worse} of {checked}");
}

#[test]
fn uniform_lm_gives_acoustic_ranking() {
    let a = Arc::new(CharAlphabet::parse("∅|abc").unwrap());
    let v = Vocabulary::from_lines(["▁ab", "▁c", "▁ba"], Arc::clone(&a)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let labels = [0, 1, 2, 2, 3, 0, 1, 4, 4, 0, 1, 3, 3, 2, 0];
    let m = noisy_render(&mut rng, &a, &labels, 5.0, 0.3);
    let lm = UniformLm::new(&v);
    let cfg = DecoderConfig {
        alpha: 0.0,
        beta: 0.0,
        acoustic_floor: 0.0,
        max_iterations: Some(4),
        ..DecoderConfig::default()
    };
    let c = Case { vocab: v, matrix: m, lm: TableLm::new(4, 0, 1.0) };
    let (out, _, _) = run(&c, &lm, &cfg, None);
    assert_eq!(out.best.text(&c.vocab), "ab c ba");
}
