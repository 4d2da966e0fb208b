use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use llmbeam_core::decoder::AlignMode;

#[derive(Debug, Parser)]
#[command(name = "llmbeam", version, about = "LM-guided CTC beam decoding, baselines and ASR scoring")]
pub struct Cli {
    /// More log output (-v info, -vv debug, -vvv per-iteration beam dumps).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode emission matrices into JSONL transcript records.
    Decode(DecodeCmd),
    /// Score hypotheses against references.
    Eval(EvalCmd),
    /// Grid-search alpha and beta on a dev set.
    Sweep(SweepCmd),
    /// Render texts into synthetic emissions plus matching vocab and LM files.
    Synth(SynthCmd),
    /// Print the frame alignment of a transcript (or of the decoded best).
    AlignDump(AlignDumpCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlignModeArg {
    Cached,
    Recompute,
}

impl From<AlignModeArg> for AlignMode {
    fn from(a: AlignModeArg) -> Self {
        match a {
            AlignModeArg::Cached => AlignMode::Cached,
            AlignModeArg::Recompute => AlignMode::Recompute,
        }
    }
}

/// Settings shared by every command that decodes. Unset values fall back to
/// the config file, then the preset, then built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML config file.
    #[arg(long, env = "LLMBEAM_CONFIG")]
    pub config: Option<PathBuf>,
    /// Emission file or directory of `.ctce` / `.txt` files.
    #[arg(long, env = "LLMBEAM_EMISSIONS")]
    pub emissions: Option<PathBuf>,
    /// Token list, one token per line.
    #[arg(long, env = "LLMBEAM_VOCAB")]
    pub vocab: Option<PathBuf>,
    /// `uniform`, `ngram:<file.arpa>` or `remote:<url>`.
    #[arg(long, env = "LLMBEAM_LM")]
    pub lm: Option<String>,
    /// Named (dataset, LM) weight preset, e.g. `wsj0-llama2`.
    #[arg(long, env = "LLMBEAM_PRESET")]
    pub preset: Option<String>,
    #[arg(long, env = "LLMBEAM_ALPHA", allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, env = "LLMBEAM_BETA", allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, env = "LLMBEAM_BEAM_WIDTH")]
    pub beam_width: Option<usize>,
    #[arg(long, env = "LLMBEAM_CANDIDATES_K")]
    pub candidates_k: Option<usize>,
    #[arg(long, env = "LLMBEAM_MAX_ITERATIONS")]
    pub max_iterations: Option<usize>,
    #[arg(long, env = "LLMBEAM_ACOUSTIC_FLOOR")]
    pub acoustic_floor: Option<f64>,
    #[arg(long, env = "LLMBEAM_LOOKAHEAD_FRAMES")]
    pub lookahead_frames: Option<usize>,
    #[arg(long, env = "LLMBEAM_EOS_MARGIN")]
    pub eos_margin: Option<f64>,
    #[arg(long, env = "LLMBEAM_FRONTIER_BEAM")]
    pub frontier_beam: Option<f64>,
    #[arg(long, env = "LLMBEAM_ALIGN_MODE", value_enum)]
    pub align_mode: Option<AlignModeArg>,
    /// Per-request timeout of the remote LM.
    #[arg(long, env = "LLMBEAM_LM_TIMEOUT_MS")]
    pub lm_timeout_ms: Option<u64>,
    #[arg(long, env = "LLMBEAM_LM_RETRIES")]
    pub lm_retries: Option<u32>,
    #[arg(long, env = "LLMBEAM_LM_MAX_IN_FLIGHT")]
    pub lm_max_in_flight: Option<usize>,
    /// Utterances decoded in parallel.
    #[arg(long, env = "LLMBEAM_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DecodeCmd {
    #[command(flatten)]
    pub run: RunArgs,
    /// JSONL output file; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalCmd {
    /// References, `utt_id<TAB>text`.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Hypotheses as TSV or decode JSONL.
    #[arg(long)]
    pub hyp: PathBuf,
    /// Add acronym accuracy and with/without-acronym splits.
    #[arg(long)]
    pub acronyms: bool,
    /// Also write the full report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepCmd {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub alpha_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub beta_grid: Vec<f64>,
    /// Dev-set references, `utt_id<TAB>text`.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// CSV file for the full WER surface.
    #[arg(long)]
    pub surface: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthCmd {
    /// `utt_id<TAB>text[<TAB>frames_per_char[<TAB>temperature]]` lines.
    #[arg(long)]
    pub spec: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub frames_per_char: usize,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
}

#[derive(Debug, Args)]
pub struct AlignDumpCmd {
    #[command(flatten)]
    pub run: RunArgs,
    /// Utterance to pick when `--emissions` is a directory.
    #[arg(long)]
    pub utt: Option<String>,
    /// Transcript to align; the decoded best hypothesis when absent.
    #[arg(long)]
    pub text: Option<String>,
}
