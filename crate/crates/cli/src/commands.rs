use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use llmbeam_core::aligner::align_from_scratch;
use llmbeam_core::decoder::{
    decode_with, DecodeCache, DecodeError, DecodeOptions, DecoderConfig, Hypothesis, StopReason,
};
use llmbeam_core::eval::{evaluate, normalize, EvalPair};
use llmbeam_core::lm::{NgramLm, NgramModel, RemoteConfig};
use llmbeam_core::synth::{synthesize_corpus, SynthError, SynthSpec};
use llmbeam_core::{CharAlphabet, LanguageModel, RemoteLm, TokenId, UniformLm, Vocabulary};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{AlignDumpCmd, DecodeCmd, EvalCmd, SweepCmd, SynthCmd};
use crate::config::{LmSpec, RunConfig};
use crate::data::{load_utterances, load_vocab, pair_up, read_hypotheses, read_references, Utterance};
use crate::error::CliError;

#[derive(Debug, Serialize)]
pub struct TokenRecord {
    pub text: String,
    pub start_ms: u64,
    pub end_ms: u64,
}

#[derive(Debug, Serialize)]
pub struct DecodeRecord {
    pub utt_id: String,
    pub text: String,
    pub score: f64,
    pub acoustic_score: f64,
    pub lm_score: f64,
    pub tokens: Vec<TokenRecord>,
    pub stop_reason: Option<StopReason>,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn build_lm(spec: &LmSpec, vocab: &Arc<Vocabulary>, remote: &RemoteConfig) -> Result<Box<dyn LanguageModel>, CliError> {
    Ok(match spec {
        LmSpec::Uniform => Box::new(UniformLm::new(vocab)),
        LmSpec::Ngram(path) => {
            let model = NgramModel::load_arpa(path)
                .map_err(|e| CliError::Config(vec![format!("LM {}: {e}", path.display())]))?;
            Box::new(NgramLm::new(Arc::new(model), Arc::clone(vocab)))
        }
        LmSpec::Remote(_) => Box::new(RemoteLm::new(remote.clone(), Arc::clone(vocab))),
    })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Other(format!("thread pool: {e}")))
}

/// Everything a decoding command needs, loaded and cross-checked.
struct Session {
    config: RunConfig,
    utterances: Vec<Utterance>,
    vocab: Arc<Vocabulary>,
    lm: Box<dyn LanguageModel>,
}

impl Session {
    fn open(config: RunConfig) -> Result<Self, CliError> {
        let utterances = load_utterances(&config.emissions)?;
        let alphabet = Arc::clone(utterances[0].matrix.alphabet());
        let vocab = Arc::new(load_vocab(&config.vocab, &alphabet)?);
        let lm = build_lm(&config.lm, &vocab, &config.remote)?;
        log::info!(
            "{} utterances, {} tokens, preset {} (alpha {}, beta {})",
            utterances.len(),
            vocab.len(),
            config.preset,
            config.decoder.alpha,
            config.decoder.beta
        );
        Ok(Self { config, utterances, vocab, lm })
    }
}

fn record(
    utt: &Utterance,
    vocab: &Vocabulary,
    h: &Hypothesis,
    iterations: usize,
    error: Option<String>,
) -> DecodeRecord {
    let ms = u64::from(utt.matrix.frame_ms());
    let tokens = h
        .words()
        .iter()
        .enumerate()
        .map(|(i, &t)| TokenRecord {
            text: vocab.token(t).surface.clone(),
            start_ms: h.alignments.get(i).map_or(0, |&f| f as u64 * ms),
            end_ms: h.segment_ends.get(i).map_or(0, |&f| f as u64 * ms),
        })
        .collect();
    DecodeRecord {
        utt_id: utt.id.clone(),
        text: h.text(vocab),
        score: h.combined_score,
        acoustic_score: h.acoustic_score,
        lm_score: h.lm_score,
        tokens,
        stop_reason: h.finished,
        iterations,
        error,
    }
}

/// Decodes one utterance. LM failures abort the run; anything else is
/// reported in the record.
fn decode_one(
    utt: &Utterance,
    vocab: &Vocabulary,
    config: &DecoderConfig,
    cache: &mut DecodeCache,
) -> Result<DecodeRecord, CliError> {
    match decode_with(&utt.matrix, vocab, config, cache, None, &DecodeOptions::default()) {
        Ok(out) => Ok(record(utt, vocab, &out.best, out.iterations, None)),
        Err(DecodeError::Lm(e)) => Err(CliError::Protocol(format!("{}: {e}", utt.id))),
        Err(DecodeError::NoFeasiblePath { best_partial }) => {
            log::warn!("{}: no hypothesis could be completed", utt.id);
            Ok(record(utt, vocab, &best_partial, 0, Some("no feasible path".into())))
        }
        Err(e) => {
            log::warn!("{}: {e}", utt.id);
            Ok(record(utt, vocab, &Hypothesis::empty(), 0, Some(e.to_string())))
        }
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, CliError> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| CliError::io(format!("creating {}", path.display()), e))
}

pub fn decode(cmd: &DecodeCmd) -> Result<(), CliError> {
    let session = Session::open(RunConfig::resolve(&cmd.run)?)?;
    let Session { config, utterances, vocab, lm } = &session;
    let records: Vec<DecodeRecord> = pool(config.workers)?.install(|| {
        utterances
            .par_iter()
            .map(|u| decode_one(u, vocab, &config.decoder, &mut DecodeCache::new(lm.as_ref(), &u.matrix)))
            .collect::<Result<_, _>>()
    })?;
    let mut out: Box<dyn Write> = match &cmd.output {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let werr = |e: std::io::Error| CliError::io("writing records", e);
    for r in &records {
        serde_json::to_writer(&mut out, r).map_err(|e| werr(e.into()))?;
        out.write_all(b"\n").map_err(werr)?;
    }
    out.flush().map_err(werr)?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    log::info!("decoded {} utterances ({failed} failed)", records.len());
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SurfacePoint {
    pub alpha: f64,
    pub beta: f64,
    pub wer: f64,
    pub cer: f64,
}

pub fn sweep(cmd: &SweepCmd) -> Result<(), CliError> {
    let mut errs = Vec::new();
    if cmd.alpha_grid.is_empty() {
        errs.push("alpha grid is empty".to_string());
    }
    if cmd.beta_grid.is_empty() {
        errs.push("beta grid is empty".to_string());
    }
    if !cmd.reference.is_file() {
        errs.push(format!("reference file {} does not exist", cmd.reference.display()));
    }
    let config = match RunConfig::resolve(&cmd.run) {
        Ok(c) => Some(c),
        Err(CliError::Config(e)) => {
            errs.extend(e);
            None
        }
        Err(e) => return Err(e),
    };
    if !errs.is_empty() {
        return Err(CliError::Config(errs));
    }
    let session = Session::open(config.expect("no errors"))?;
    let Session { config, utterances, vocab, lm } = &session;
    let refs: std::collections::HashMap<String, String> = read_references(&cmd.reference)?.into_iter().collect();
    let missing: Vec<&str> = utterances.iter().map(|u| u.id.as_str()).filter(|id| !refs.contains_key(*id)).collect();
    if !missing.is_empty() {
        return Err(CliError::Mismatch(format!("no reference for {}", missing.join(", "))));
    }
    let grid: Vec<(f64, f64)> =
        cmd.alpha_grid.iter().flat_map(|&a| cmd.beta_grid.iter().map(move |&b| (a, b))).collect();

    // one cache per utterance, shared by every grid point
    let texts: Vec<Vec<String>> = pool(config.workers)?.install(|| {
        utterances
            .par_iter()
            .map(|u| {
                let mut cache = DecodeCache::new(lm.as_ref(), &u.matrix);
                grid.iter()
                    .map(|&(alpha, beta)| {
                        let cfg = DecoderConfig { alpha, beta, ..config.decoder.clone() };
                        decode_one(u, vocab, &cfg, &mut cache).map(|r| r.text)
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()
    })?;

    let surface: Vec<SurfacePoint> = grid
        .iter()
        .enumerate()
        .map(|(p, &(alpha, beta))| {
            let pairs: Vec<EvalPair> = utterances
                .iter()
                .zip(&texts)
                .map(|(u, t)| EvalPair {
                    utt_id: u.id.clone(),
                    reference: refs[&u.id].clone(),
                    hypothesis: t[p].clone(),
                })
                .collect();
            let r = evaluate(&pairs, false);
            SurfacePoint { alpha, beta, wer: r.wer, cer: r.cer }
        })
        .collect();
    let best = surface
        .iter()
        .fold(None::<&SurfacePoint>, |acc, s| match acc {
            Some(b) if (b.wer, b.cer) <= (s.wer, s.cer) => acc,
            _ => Some(s),
        })
        .expect("grid is non-empty");
    if let Some(path) = &cmd.surface {
        let mut w = csv::Writer::from_writer(create(path)?);
        for s in &surface {
            w.serialize(s).map_err(|e| CliError::Other(format!("writing {}: {e}", path.display())))?;
        }
        w.flush().map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    }
    let summary = serde_json::json!({
        "alpha": best.alpha,
        "beta": best.beta,
        "wer": best.wer,
        "cer": best.cer,
        "points": surface.len(),
    });
    println!("{summary}");
    Ok(())
}

pub fn eval(cmd: &EvalCmd) -> Result<(), CliError> {
    let refs = read_references(&cmd.reference)?;
    let hyps = read_hypotheses(&cmd.hyp)?;
    let report = evaluate(&pair_up(&refs, &hyps)?, cmd.acronyms);
    print!("{}", report.table());
    if let Some(path) = &cmd.json {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &report).map_err(|e| CliError::io("writing report", e.into()))?;
        w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| CliError::io("writing report", e))?;
    }
    Ok(())
}

pub fn synth(cmd: &SynthCmd) -> Result<(), CliError> {
    let content = std::fs::read_to_string(&cmd.spec)
        .map_err(|e| CliError::Config(vec![format!("spec file {}: {e}", cmd.spec.display())]))?;
    let specs = SynthSpec::parse_list(&content, cmd.frames_per_char, cmd.temperature)
        .map_err(|e| CliError::Config(vec![e.to_string()]))?;
    let alphabet = Arc::new(CharAlphabet::english());
    let corpus = synthesize_corpus(&alphabet, &specs, cmd.seed).map_err(|e| match e {
        SynthError::Io(io) => CliError::io("synthesizing", io),
        SynthError::Spec { .. } => CliError::Config(vec![e.to_string()]),
        other => CliError::Mismatch(other.to_string()),
    })?;
    corpus.write(&cmd.out).map_err(|e| CliError::Other(format!("writing {}: {e}", cmd.out.display())))?;
    log::info!("wrote {} utterances to {}", specs.len(), cmd.out.display());
    Ok(())
}

/// Splits normalized text into tokens, longest match first; each word
/// starts with a word-initial token.
pub fn tokenize(vocab: &Vocabulary, text: &str) -> Result<Vec<TokenId>, String> {
    let mut out = Vec::new();
    for word in normalize(text).split_whitespace() {
        let mut rest = word;
        let mut first = true;
        while !rest.is_empty() {
            if !first && !vocab.uses_markers() {
                return Err(format!("word {word:?} is not in the vocabulary"));
            }
            let found = (1..=rest.len()).rev().find_map(|n| {
                let piece = &rest[..n];
                let surface = if first && vocab.uses_markers() { format!("▁{piece}") } else { piece.to_string() };
                vocab.lookup_surface(&surface).map(|id| (id, n))
            });
            let (id, n) = found.ok_or_else(|| format!("cannot split {word:?} into vocabulary tokens"))?;
            out.push(id);
            rest = &rest[n..];
            first = false;
        }
    }
    Ok(out)
}

pub fn align_dump(cmd: &AlignDumpCmd) -> Result<(), CliError> {
    let session = Session::open(RunConfig::resolve(&cmd.run)?)?;
    let Session { config, utterances, vocab, lm } = &session;
    let utt = match (&cmd.utt, utterances.len()) {
        (Some(id), _) => utterances
            .iter()
            .find(|u| &u.id == id)
            .ok_or_else(|| CliError::Config(vec![format!("no utterance {id:?}")]))?,
        (None, 1) => &utterances[0],
        (None, n) => return Err(CliError::Config(vec![format!("{n} utterances found, pick one with --utt")])),
    };
    let tokens = match &cmd.text {
        Some(t) => tokenize(vocab, t).map_err(|e| CliError::Config(vec![e]))?,
        None => {
            let mut cache = DecodeCache::new(lm.as_ref(), &utt.matrix);
            let r = decode_with(&utt.matrix, vocab, &config.decoder, &mut cache, None, &DecodeOptions::default())
                .map_err(|e| match e {
                    DecodeError::Lm(e) => CliError::Protocol(e.to_string()),
                    other => CliError::Mismatch(other.to_string()),
                })?;
            r.best.words().to_vec()
        }
    };
    let chars: Vec<&[usize]> = tokens.iter().map(|&t| vocab.token(t).chars.as_slice()).collect();
    let view = utt.matrix.view();
    let state = align_from_scratch(&chars, &view, &config.decoder.align_options(), None)
        .map_err(|e| CliError::Mismatch(format!("{}: transcript cannot be aligned: {e}", utt.id)))?;
    let (end, score) = state.best();
    let ms = u64::from(utt.matrix.frame_ms());
    let alphabet = utt.matrix.alphabet();
    let mut out = std::io::stdout().lock();
    let werr = |e: std::io::Error| CliError::io("writing alignment", e);
    let segs = if tokens.is_empty() { Vec::new() } else { state.backtrace(end) };
    for (t, seg) in tokens.iter().zip(&segs) {
        let chars: Vec<_> = vocab
            .token(*t)
            .chars
            .iter()
            .zip(&seg.char_spans)
            .map(|(&c, &(s, e))| serde_json::json!({ "char": alphabet.symbol(c).to_string(), "start_frame": s, "end_frame": e }))
            .collect();
        let line = serde_json::json!({
            "token": vocab.token(*t).surface,
            "start_frame": seg.start_frame,
            "end_frame": seg.end_frame,
            "start_ms": seg.start_frame as u64 * ms,
            "end_ms": seg.end_frame as u64 * ms,
            "log_likelihood": seg.log_likelihood,
            "chars": chars,
        });
        writeln!(out, "{line}").map_err(werr)?;
    }
    let summary = serde_json::json!({
        "utt_id": utt.id,
        "tokens": tokens.len(),
        "end_frame": end,
        "frames": utt.matrix.num_frames(),
        "log_likelihood": score,
    });
    writeln!(out, "{summary}").map_err(werr)?;
    Ok(())
}
