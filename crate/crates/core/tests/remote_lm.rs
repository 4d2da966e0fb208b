use std::sync::Arc;
use std::time::Duration;

use llmbeam_core::decoder::DecoderConfig;
use llmbeam_core::lm::stub::{StubResponse, StubServer};
use llmbeam_core::lm::{LanguageModel, LmError, RemoteConfig, RemoteLm};
use llmbeam_core::synth::{synthesize, SynthSpec};
use llmbeam_core::{decode, CharAlphabet, TokenId, Vocabulary};
use llmbeam_testkit::TableLm;

fn vocab() -> Arc<Vocabulary> {
    let a = Arc::new(CharAlphabet::english());
    Arc::new(Vocabulary::from_lines(["▁the", "▁cat", "▁sat", "s", "▁on", "▁mat"], a).unwrap())
}

/// Serves `lm` over the wire, translating surfaces both ways.
fn serve(lm: TableLm, vocab: Arc<Vocabulary>) -> StubServer {
    StubServer::start(move |req| {
        let ids: Option<Vec<TokenId>> = req.prefix.iter().map(|s| vocab.lookup_surface(s)).collect();
        let Some(ids) = ids else { return StubResponse::status(400) };
        let list: Vec<(String, f64)> = lm
            .top_k(&ids, req.k)
            .unwrap()
            .into_iter()
            .map(|c| (vocab.token(c.token).surface.clone(), c.log_prob))
            .collect();
        StubResponse::candidates(&list)
    })
    .unwrap()
}

fn remote(server: &StubServer, vocab: &Arc<Vocabulary>, timeout: Duration, retries: u32) -> RemoteLm {
    let config = RemoteConfig { endpoint: server.endpoint(), timeout, max_retries: retries, max_in_flight: 3 };
    RemoteLm::new(config, Arc::clone(vocab))
}

#[test]
fn remote_answers_match_the_served_model() {
    let v = vocab();
    let local = TableLm::new(v.len(), 5, 2.0);
    let server = serve(local.clone(), Arc::clone(&v));
    let lm = remote(&server, &v, Duration::from_secs(5), 0);
    let prefixes: Vec<Vec<TokenId>> =
        vec![vec![], vec![TokenId(0)], vec![TokenId(0), TokenId(1)], vec![TokenId(1), TokenId(3)], vec![TokenId(5)]];
    for p in &prefixes {
        assert_eq!(lm.top_k(p, 4).unwrap(), local.top_k(p, 4).unwrap());
    }
    let batch = lm.top_k_batch(&prefixes, 100);
    for (p, got) in prefixes.iter().zip(batch) {
        assert_eq!(got.unwrap(), local.top_k(p, 100).unwrap(), "batch results keep input order");
    }
}

#[test]
fn decoding_through_the_wire_equals_decoding_locally() {
    let v = vocab();
    let local = TableLm::new(v.len(), 9, 1.0);
    let server = serve(local.clone(), Arc::clone(&v));
    let lm = remote(&server, &v, Duration::from_secs(5), 0);
    let spec =
        SynthSpec { utt_id: "u".into(), text: "the cats sat on the mat".into(), frames_per_char: 2, temperature: 0.5 };
    let m = synthesize(v.alphabet(), &spec, 3).unwrap();
    let config = DecoderConfig::default();
    let a = decode(&m, &local, &v, &config).unwrap();
    let b = decode(&m, &lm, &v, &config).unwrap();
    assert_eq!(a.best.tokens, b.best.tokens);
    assert_eq!(a.best.combined_score, b.best.combined_score);
    assert_eq!(a.best.text(&v), "the cats sat on the mat");
}

#[test]
fn base_ten_scores_and_unknown_tokens() {
    let v = vocab();
    let server = StubServer::start(|_| {
        StubResponse::json(
            r#"{"log_base":"10","candidates":[{"token":"▁cat","logprob":-1.0},{"token":"dog","logprob":-0.1},{"token":"</s>","logprob":-2.0}]}"#,
        )
    })
    .unwrap();
    let got = remote(&server, &v, Duration::from_secs(5), 0).top_k(&[], 10).unwrap();
    assert_eq!(got.len(), 2, "dog is not in the vocabulary");
    assert_eq!(got[0].token, v.lookup_surface("▁cat").unwrap());
    assert!((got[0].log_prob + std::f64::consts::LN_10).abs() < 1e-12);
    assert_eq!(got[1].token, v.eos_id());
}

#[test]
fn malformed_payloads_are_protocol_errors() {
    let v = vocab();
    for body in [
        "not json",
        r#"{"candidates":[{"token":"▁cat"}]}"#,
        r#"{"log_base":"2","candidates":[]}"#,
        r#"{"candidates":[{"token":"▁cat","logprob":0.5}]}"#,
    ] {
        let server = StubServer::start(move |_| StubResponse::json(body)).unwrap();
        match remote(&server, &v, Duration::from_secs(5), 2).top_k(&[], 3) {
            Err(LmError::Protocol { excerpt, .. }) => assert_eq!(excerpt, body),
            other => panic!("{body}: {other:?}"),
        }
        assert_eq!(server.requests(), 1, "protocol errors are not retried");
    }
}

#[test]
fn slow_server_times_out_after_retries() {
    let v = vocab();
    let server = StubServer::start(|_| StubResponse::candidates(&[]).delayed(Duration::from_millis(600))).unwrap();
    let err = remote(&server, &v, Duration::from_millis(100), 1).top_k(&[], 3).unwrap_err();
    assert_eq!(err, LmError::Timeout);
    assert_eq!(server.requests(), 2);
}

#[test]
fn http_errors_carry_the_status() {
    let v = vocab();
    let server = StubServer::start(|_| StubResponse::status(404)).unwrap();
    let err = remote(&server, &v, Duration::from_secs(5), 3).top_k(&[], 3).unwrap_err();
    assert!(matches!(err, LmError::Status { status: 404, .. }), "{err:?}");
    assert_eq!(server.requests(), 1, "client errors are final");

    let server = StubServer::start(|_| StubResponse::status(503)).unwrap();
    let err = remote(&server, &v, Duration::from_secs(5), 2).top_k(&[], 3).unwrap_err();
    assert!(matches!(err, LmError::Status { status: 503, .. }));
    assert_eq!(server.requests(), 3, "server errors are retried");
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let v = vocab();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let config =
        RemoteConfig { endpoint: format!("http://127.0.0.1:{port}"), max_retries: 0, ..RemoteConfig::default() };
    let err = RemoteLm::new(config, v).top_k(&[], 3).unwrap_err();
    assert!(matches!(err, LmError::Transport(_)), "{err:?}");
}
