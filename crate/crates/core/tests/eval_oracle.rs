use llmbeam_core::eval::{align, count_edits, evaluate, normalize, wer, EditOp, EvalPair};
use llmbeam_testkit::edit::levenshtein;
use proptest::prelude::*;

fn words() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(
        prop::sample::select(vec!["the", "cat", "sat", "on", "mat", "dog"]).prop_map(String::from),
        0..8,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn edit_counts_equal_recursive_distance(r in words(), h in words()) {
        let ops = align(&r, &h);
        prop_assert_eq!(count_edits(&ops).errors(), levenshtein(&r, &h));
        let rc: Vec<char> = r.join(" ").chars().collect();
        let hc: Vec<char> = h.join(" ").chars().collect();
        prop_assert_eq!(count_edits(&align(&rc, &hc)).errors(), levenshtein(&rc, &hc));
    }

    #[test]
    fn alignment_replays_reference_into_hypothesis(r in words(), h in words()) {
        let (mut i, mut j) = (0, 0);
        for op in align(&r, &h) {
            match op {
                EditOp::Match => { prop_assert_eq!(&r[i], &h[j]); i += 1; j += 1; }
                EditOp::Substitution => { prop_assert_ne!(&r[i], &h[j]); i += 1; j += 1; }
                EditOp::Deletion => i += 1,
                EditOp::Insertion => j += 1,
            }
        }
        prop_assert_eq!((i, j), (r.len(), h.len()));
    }

    #[test]
    fn wer_sanity(r in words(), h in words()) {
        let (rs, hs) = (r.join(" "), h.join(" "));
        prop_assert_eq!(wer(&rs, &rs).rate(), 0.0);
        if !r.is_empty() {
            prop_assert!(wer(&rs, &hs).rate() <= (r.len() + h.len()) as f64 / r.len() as f64);
        }
        prop_assert_eq!(wer(&rs, &hs).counts.errors(), wer(&hs, &rs).counts.errors());
    }

    #[test]
    fn normalize_is_idempotent_and_clean(s in "[ a-zA-Z.,'!?-]{0,40}") {
        let n = normalize(&s);
        prop_assert_eq!(normalize(&n), n.clone());
        prop_assert!(n.chars().all(|c| c.is_ascii_lowercase() || c == ' '));
        prop_assert!(!n.contains("  ") && !n.starts_with(' ') && !n.ends_with(' '));
    }

    #[test]
    fn corpus_rates_are_micro_averaged(pairs in prop::collection::vec((words(), words()), 1..6)) {
        let input: Vec<EvalPair> = pairs
            .iter()
            .enumerate()
            .map(|(i, (r, h))| EvalPair { utt_id: i.to_string(), reference: r.join(" "), hypothesis: h.join(" ") })
            .collect();
        let report = evaluate(&input, false);
        let (mut errors, mut n, mut cerr, mut cn) = (0usize, 0usize, 0usize, 0usize);
        for (r, h) in &pairs {
            if r.is_empty() && !h.is_empty() {
                continue;
            }
            errors += levenshtein(r, h);
            n += r.len();
            let (rc, hc): (Vec<char>, Vec<char>) = (r.join(" ").chars().collect(), h.join(" ").chars().collect());
            cerr += levenshtein(&rc, &hc);
            cn += rc.len();
        }
        let pct = |e: usize, n: usize| if n == 0 { 0.0 } else { 100.0 * e as f64 / n as f64 };
        prop_assert!((report.wer - pct(errors, n)).abs() < 1e-9);
        prop_assert!((report.cer - pct(cerr, cn)).abs() < 1e-9);
    }
}
