//! Input files: emission sets, token lists, references and hypotheses.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use llmbeam_core::emissions::{load_emissions, EmissionFormat};
use llmbeam_core::{CharAlphabet, EmissionMatrix, Vocabulary};
use serde::Deserialize;

use crate::error::CliError;

pub struct Utterance {
    pub id: String,
    pub matrix: EmissionMatrix,
}

fn is_emission_file(p: &Path) -> bool {
    matches!(p.extension().and_then(|e| e.to_str()), Some("ctce" | "txt"))
}

/// One file, or every `.ctce` / `.txt` file of a directory in name order.
/// All matrices must share one alphabet.
pub fn load_utterances(path: &Path) -> Result<Vec<Utterance>, CliError> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_emission_file(p))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(CliError::Config(vec![format!("no emission files in {}", path.display())]));
    }
    let mut out: Vec<Utterance> = Vec::with_capacity(files.len());
    for f in files {
        let matrix = load_emissions(&f, EmissionFormat::from_path(&f))
            .map_err(|e| CliError::Mismatch(format!("{}: {e}", f.display())))?;
        if let Some(first) = out.first() {
            if first.matrix.alphabet() != matrix.alphabet() {
                return Err(CliError::Mismatch(format!(
                    "{} uses alphabet {} but {} uses {}",
                    f.display(),
                    matrix.alphabet(),
                    first.id,
                    first.matrix.alphabet()
                )));
            }
        }
        let id = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out.push(Utterance { id, matrix });
    }
    Ok(out)
}

pub fn load_vocab(path: &Path, alphabet: &Arc<CharAlphabet>) -> Result<Vocabulary, CliError> {
    let v = Vocabulary::load(path, Arc::clone(alphabet))
        .map_err(|e| CliError::Config(vec![format!("vocabulary {}: {e}", path.display())]))?;
    if !v.dropped().is_empty() {
        log::warn!("dropped {} tokens outside the alphabet", v.dropped().len());
    }
    Ok(v)
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))
}

/// `utt_id<TAB>text` lines; a line without a tab is an empty transcript.
pub fn parse_tsv(content: &str, what: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in content.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line.split_once('\t').unwrap_or((line, ""));
        let id = id.trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(CliError::Mismatch(format!("duplicate utterance {id:?} in {what}")));
        }
        out.push((id, text.to_string()));
    }
    Ok(out)
}

#[derive(Deserialize)]
struct JsonHyp {
    utt_id: String,
    text: String,
}

pub fn read_references(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    parse_tsv(&read(path)?, &path.display().to_string())
}

/// TSV, or JSONL records as written by `decode`.
pub fn read_hypotheses(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let content = read(path)?;
    let jsonl = path.extension().is_some_and(|e| e == "jsonl") || content.trim_start().starts_with('{');
    if !jsonl {
        return parse_tsv(&content, &path.display().to_string());
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let h: JsonHyp = serde_json::from_str(line)
            .map_err(|e| CliError::Mismatch(format!("{} line {}: {e}", path.display(), i + 1)))?;
        if !seen.insert(h.utt_id.clone()) {
            return Err(CliError::Mismatch(format!("duplicate utterance {:?} in {}", h.utt_id, path.display())));
        }
        out.push((h.utt_id, h.text));
    }
    Ok(out)
}

/// Pairs hypotheses with references in reference order. Any id present on
/// only one side is a mismatch; all of them are listed.
pub fn pair_up(
    refs: &[(String, String)],
    hyps: &[(String, String)],
) -> Result<Vec<llmbeam_core::eval::EvalPair>, CliError> {
    let hyp_map: std::collections::HashMap<&str, &str> = hyps.iter().map(|(i, t)| (i.as_str(), t.as_str())).collect();
    let ref_ids: HashSet<&str> = refs.iter().map(|(i, _)| i.as_str()).collect();
    let missing: Vec<&str> = refs.iter().map(|(i, _)| i.as_str()).filter(|i| !hyp_map.contains_key(i)).collect();
    let extra: Vec<&str> = hyps.iter().map(|(i, _)| i.as_str()).filter(|i| !ref_ids.contains(i)).collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut msg = Vec::new();
        if !missing.is_empty() {
            msg.push(format!("no hypothesis for {}", missing.join(", ")));
        }
        if !extra.is_empty() {
            msg.push(format!("no reference for {}", extra.join(", ")));
        }
        return Err(CliError::Mismatch(msg.join("; ")));
    }
    Ok(refs
        .iter()
        .map(|(id, r)| llmbeam_core::eval::EvalPair {
            utt_id: id.clone(),
            reference: r.clone(),
            hypothesis: hyp_map[id.as_str()].to_string(),
        })
        .collect())
}
