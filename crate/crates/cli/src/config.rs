//! Run configuration: flags (and their `LLMBEAM_*` variables) override the
//! TOML file, which overrides the preset, which overrides the defaults.

use std::path::{Path, PathBuf};
use std::time::Duration;

use llmbeam_core::decoder::{preset, AlignMode, DecoderConfig, DEFAULT_PRESET, PRESETS};
use llmbeam_core::lm::RemoteConfig;
use serde::Deserialize;

use crate::args::RunArgs;
use crate::error::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub emissions: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub lm: Option<String>,
    pub preset: Option<String>,
    pub workers: Option<usize>,
    pub lm_timeout_ms: Option<u64>,
    pub lm_retries: Option<u32>,
    pub lm_max_in_flight: Option<usize>,
    #[serde(default)]
    pub decoder: DecoderSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderSection {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub beam_width: Option<usize>,
    pub candidates_k: Option<usize>,
    pub max_iterations: Option<usize>,
    pub acoustic_floor: Option<f64>,
    pub lookahead_frames: Option<usize>,
    pub eos_margin: Option<f64>,
    pub frontier_beam: Option<f64>,
    pub align_mode: Option<AlignMode>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("config file {}: {e}", path.display()))?;
        let mut cfg: FileConfig = toml::from_str(&text).map_err(|e| format!("config file {}: {e}", path.display()))?;
        // relative paths in the file are relative to the file
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.emissions, &mut cfg.vocab].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(Ok(LmSpec::Ngram(p))) = cfg.lm.as_deref().map(LmSpec::parse) {
            if p.is_relative() {
                cfg.lm = Some(format!("ngram:{}", base.join(p).display()));
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LmSpec {
    Uniform,
    Ngram(PathBuf),
    Remote(String),
}

impl LmSpec {
    pub fn parse(s: &str) -> Result<Self, String> {
        if s == "uniform" {
            Ok(LmSpec::Uniform)
        } else if let Some(p) = s.strip_prefix("ngram:") {
            Ok(LmSpec::Ngram(PathBuf::from(p)))
        } else if let Some(u) = s.strip_prefix("remote:") {
            Ok(LmSpec::Remote(u.to_string()))
        } else if s.ends_with(".arpa") {
            Ok(LmSpec::Ngram(PathBuf::from(s)))
        } else {
            Err(format!("unknown LM {s:?}: expected uniform, ngram:<file> or remote:<url>"))
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub emissions: PathBuf,
    pub vocab: PathBuf,
    pub lm: LmSpec,
    pub preset: String,
    pub decoder: DecoderConfig,
    pub remote: RemoteConfig,
    pub workers: usize,
}

impl RunConfig {
    /// Resolves every layer and reports all problems at once.
    pub fn resolve(args: &RunArgs) -> Result<Self, CliError> {
        let mut errs = Vec::new();
        let file = match &args.config {
            Some(p) => FileConfig::load(p).unwrap_or_else(|e| {
                errs.push(e);
                FileConfig::default()
            }),
            None => FileConfig::default(),
        };
        let d = &file.decoder;

        let preset_name = args.preset.clone().or(file.preset.clone()).unwrap_or_else(|| DEFAULT_PRESET.to_string());
        let base = match preset(&preset_name) {
            Some(p) => DecoderConfig { alpha: p.alpha, beta: p.beta, ..DecoderConfig::default() },
            None => {
                let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
                errs.push(format!("unknown preset {preset_name:?} (known: {})", names.join(", ")));
                DecoderConfig::default()
            }
        };
        let decoder = DecoderConfig {
            alpha: args.alpha.or(d.alpha).unwrap_or(base.alpha),
            beta: args.beta.or(d.beta).unwrap_or(base.beta),
            beam_width: args.beam_width.or(d.beam_width).unwrap_or(base.beam_width),
            candidates_k: args.candidates_k.or(d.candidates_k).unwrap_or(base.candidates_k),
            max_iterations: args.max_iterations.or(d.max_iterations).or(base.max_iterations),
            acoustic_floor: args.acoustic_floor.or(d.acoustic_floor).unwrap_or(base.acoustic_floor),
            lookahead_frames: args.lookahead_frames.or(d.lookahead_frames).unwrap_or(base.lookahead_frames),
            eos_margin: args.eos_margin.or(d.eos_margin).unwrap_or(base.eos_margin),
            frontier_beam: args.frontier_beam.or(d.frontier_beam).unwrap_or(base.frontier_beam),
            align_mode: args.align_mode.map(AlignMode::from).or(d.align_mode).unwrap_or(base.align_mode),
        };
        if let Err(e) = decoder.validate() {
            errs.extend(e);
        }

        let emissions = args.emissions.clone().or(file.emissions.clone());
        match &emissions {
            None => errs.push("no emissions given (--emissions)".into()),
            Some(p) if !p.exists() => errs.push(format!("emissions path {} does not exist", p.display())),
            _ => {}
        }
        let vocab = args.vocab.clone().or(file.vocab.clone());
        match &vocab {
            None => errs.push("no vocabulary given (--vocab)".into()),
            Some(p) if !p.is_file() => errs.push(format!("vocabulary file {} does not exist", p.display())),
            _ => {}
        }
        let lm = match LmSpec::parse(args.lm.as_deref().or(file.lm.as_deref()).unwrap_or("uniform")) {
            Ok(LmSpec::Ngram(p)) if !p.is_file() => {
                errs.push(format!("LM file {} does not exist", p.display()));
                LmSpec::Uniform
            }
            Ok(l) => l,
            Err(e) => {
                errs.push(e);
                LmSpec::Uniform
            }
        };
        let workers = args.workers.or(file.workers).unwrap_or(1);
        if workers == 0 {
            errs.push("workers must be at least 1".into());
        }
        let defaults = RemoteConfig::default();
        let mut remote = RemoteConfig {
            endpoint: String::new(),
            timeout: args.lm_timeout_ms.or(file.lm_timeout_ms).map_or(defaults.timeout, Duration::from_millis),
            max_retries: args.lm_retries.or(file.lm_retries).unwrap_or(defaults.max_retries),
            max_in_flight: args.lm_max_in_flight.or(file.lm_max_in_flight).unwrap_or(defaults.max_in_flight),
        };
        if let LmSpec::Remote(url) = &lm {
            remote.endpoint = url.clone();
        }
        if remote.max_in_flight == 0 {
            errs.push("lm_max_in_flight must be at least 1".into());
        }

        if !errs.is_empty() {
            return Err(CliError::Config(errs));
        }
        Ok(RunConfig {
            emissions: emissions.expect("checked"),
            vocab: vocab.expect("checked"),
            lm,
            preset: preset_name,
            decoder,
            remote,
            workers,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(dir: &Path, name: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, "x\n").unwrap();
        p
    }

    #[test]
    fn precedence_flag_file_preset_default() {
        let dir = tempfile::tempdir().unwrap();
        let em = touch(dir.path(), "u.ctce");
        let vocab = touch(dir.path(), "vocab.txt");
        let cfg_path = dir.path().join("run.toml");
        std::fs::write(
            &cfg_path,
            "preset = \"tedlium3-gpt2\"\nvocab = \"vocab.txt\"\n[decoder]\nbeta = 0.5\nbeam_width = 7\n",
        )
        .unwrap();
        let args = RunArgs { config: Some(cfg_path), emissions: Some(em), beam_width: Some(3), ..RunArgs::default() };
        let rc = RunConfig::resolve(&args).unwrap();
        assert_eq!(rc.preset, "tedlium3-gpt2");
        assert_eq!(rc.decoder.alpha, 0.0689, "from the preset");
        assert_eq!(rc.decoder.beta, 0.5, "file beats preset");
        assert_eq!(rc.decoder.beam_width, 3, "flag beats file");
        assert_eq!(rc.decoder.candidates_k, 5000, "default");
        assert_eq!(rc.vocab, vocab);
        assert_eq!(rc.lm, LmSpec::Uniform);
    }

    #[test]
    fn all_problems_are_reported() {
        let args = RunArgs {
            preset: Some("nope".into()),
            beam_width: Some(0),
            acoustic_floor: Some(2.0),
            lm: Some("ngram:/does/not/exist.arpa".into()),
            ..RunArgs::default()
        };
        let Err(CliError::Config(errs)) = RunConfig::resolve(&args) else { panic!("expected config errors") };
        assert_eq!(errs.len(), 6, "{errs:#?}");
    }

    #[test]
    fn lm_specs() {
        assert_eq!(LmSpec::parse("uniform").unwrap(), LmSpec::Uniform);
        assert_eq!(LmSpec::parse("x.arpa").unwrap(), LmSpec::Ngram("x.arpa".into()));
        assert_eq!(LmSpec::parse("remote:http://h:1").unwrap(), LmSpec::Remote("http://h:1".into()));
        assert!(LmSpec::parse("gpt").is_err());
    }
}
