//! `amrnmt` subcommands. Every flag can also come from a `--config` JSON
//! object with the same (kebab-case) keys; flags win over the file.

mod commands;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::DEFAULT_BUCKETS;
use crate::model::{Candidate, Mode};

pub const SEED_ENV: &str = "AMRNMT_SEED";
const DEFAULT_SEED: u64 = 1;

#[derive(Parser, Debug)]
#[command(name = "amrnmt", version, about = "Translation with a sentence encoder, an AMR graph encoder and a doubly-attentive decoder")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Learn and apply BPE, build vocabularies, write filtered corpora.
    Preprocess(PreprocessArgs),
    /// Train a model and write checkpoints and a log.
    Train(TrainArgs),
    /// Decode a BPE'd source file with a checkpoint.
    Translate(TranslateArgs),
    /// Corpus BLEU, optionally broken down by source length.
    Evaluate(EvaluateArgs),
}

/// Options every subcommand shares.
#[derive(Args, Debug, Serialize)]
pub struct Common {
    /// JSON file with default values for any flag.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Print the resolved settings as JSON and exit.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub show_config: bool,
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct PreprocessArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_src: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_tgt: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_amr: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_src: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_tgt: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_amr: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_src: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_tgt: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_amr: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub src_merges: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tgt_merges: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub src_vocab_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tgt_vocab_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph_vocab_size: Option<usize>,
    /// Drop train/dev pairs with more words than this on either side (0: keep all).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_len: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct PreprocessSettings {
    pub train_src: Option<PathBuf>,
    pub train_tgt: Option<PathBuf>,
    pub train_amr: Option<PathBuf>,
    pub dev_src: Option<PathBuf>,
    pub dev_tgt: Option<PathBuf>,
    pub dev_amr: Option<PathBuf>,
    pub test_src: Option<PathBuf>,
    pub test_tgt: Option<PathBuf>,
    pub test_amr: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub src_merges: usize,
    pub tgt_merges: usize,
    pub src_vocab_size: usize,
    pub tgt_vocab_size: usize,
    pub graph_vocab_size: usize,
    pub max_len: usize,
}

impl Default for PreprocessSettings {
    fn default() -> Self {
        PreprocessSettings {
            train_src: None,
            train_tgt: None,
            train_amr: None,
            dev_src: None,
            dev_tgt: None,
            dev_amr: None,
            test_src: None,
            test_tgt: None,
            test_amr: None,
            out: None,
            src_merges: 8000,
            tgt_merges: 8000,
            src_vocab_size: 50_000,
            tgt_vocab_size: 50_000,
            graph_vocab_size: 40_000,
            max_len: 50,
        }
    }
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    /// seq2seq, dual2seq, dual2seq-linamr or dual2seq-self.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_src: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_tgt: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_amr: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_src: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_tgt: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_amr: Option<PathBuf>,
    /// Directory written by `preprocess` (vocabulary files).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocab_dir: Option<PathBuf>,
    /// Directory for checkpoints and the training log.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Continue from this checkpoint.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embed: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph_hidden: Option<usize>,
    /// Graph state transitions.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropout: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grn_candidate: Option<Candidate>,
    /// Feed only [e; ζ] to the decoder LSTM in dual modes.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub no_feed_graph_context: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<u64>,
    /// Falls back to $AMRNMT_SEED, then 1.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_neighbors: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_len: Option<usize>,
    /// Global gradient-norm cap; 0 disables clipping.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip: Option<f64>,
    /// Plain shuffling instead of length-bucketed batches.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub no_bucketing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct TrainSettings {
    pub mode: Mode,
    pub train_src: Option<PathBuf>,
    pub train_tgt: Option<PathBuf>,
    pub train_amr: Option<PathBuf>,
    pub dev_src: Option<PathBuf>,
    pub dev_tgt: Option<PathBuf>,
    pub dev_amr: Option<PathBuf>,
    pub vocab_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub embed: usize,
    pub hidden: usize,
    pub graph_hidden: usize,
    pub steps: usize,
    pub dropout: f64,
    pub grn_candidate: Candidate,
    pub no_feed_graph_context: bool,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: u64,
    pub seed: Option<u64>,
    pub max_neighbors: usize,
    pub max_len: usize,
    pub clip: f64,
    pub no_bucketing: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            mode: Mode::Dual2seq,
            train_src: None,
            train_tgt: None,
            train_amr: None,
            dev_src: None,
            dev_tgt: None,
            dev_amr: None,
            vocab_dir: None,
            out: None,
            resume: None,
            embed: 500,
            hidden: 500,
            graph_hidden: 500,
            steps: 10,
            dropout: 0.2,
            grn_candidate: Candidate::Sigmoid,
            no_feed_graph_context: false,
            lr: 0.0005,
            batch_size: 128,
            epochs: 30,
            seed: None,
            max_neighbors: 6,
            max_len: 50,
            clip: 5.0,
            no_bucketing: false,
        }
    }
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TranslateArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Refuse a checkpoint trained in another mode.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    /// BPE'd source sentences, one per line.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// AMR file aligned with the input (dual2seq and dual2seq-linamr).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amr: Option<PathBuf>,
    /// Defaults to standard output.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beam_size: Option<usize>,
    /// Maximum output length in BPE units.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_len: Option<usize>,
    /// Rank hypotheses by total log-probability.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub no_length_norm: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct TranslateSettings {
    pub checkpoint: Option<PathBuf>,
    pub mode: Option<Mode>,
    pub input: Option<PathBuf>,
    pub amr: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub beam_size: usize,
    pub max_len: usize,
    pub no_length_norm: bool,
}

impl Default for TranslateSettings {
    fn default() -> Self {
        TranslateSettings {
            checkpoint: None,
            mode: None,
            input: None,
            amr: None,
            output: None,
            beam_size: 5,
            max_len: 100,
            no_length_norm: false,
        }
    }
}

#[derive(Args, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvaluateArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    /// System output, one tokenized sentence per line.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hyp: Option<PathBuf>,
    #[arg(long = "ref")]
    #[serde(rename = "ref", skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
    /// Source file whose word counts pick the length bucket.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub src: Option<PathBuf>,
    /// Score per source-length bucket, e.g. "1-10,11-20,21-30,31+".
    #[arg(long, num_args = 0..=1, default_missing_value = DEFAULT_BUCKETS)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length_buckets: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct EvaluateSettings {
    pub hyp: Option<PathBuf>,
    #[serde(rename = "ref")]
    pub reference: Option<PathBuf>,
    pub src: Option<PathBuf>,
    pub length_buckets: Option<String>,
}

/// File values first, then every flag that was given.
fn resolve<A: Serialize, S: DeserializeOwned>(args: &A, config: Option<&Path>) -> Result<S> {
    let mut merged = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let v: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            match v {
                serde_json::Value::Object(m) => m,
                _ => return Err(Error::Config(format!("{}: expected a JSON object", p.display()))),
            }
        }
        None => serde_json::Map::new(),
    };
    if let serde_json::Value::Object(flags) = serde_json::to_value(args)? {
        merged.extend(flags);
    }
    serde_json::from_value(serde_json::Value::Object(merged)).map_err(|e| Error::Config(e.to_string()))
}

/// `--seed`, else `$AMRNMT_SEED`, else 1.
pub fn resolve_seed(explicit: Option<u64>) -> Result<u64> {
    if let Some(s) = explicit {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}={v} is not an unsigned integer"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn show<S: Serialize>(settings: &S) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(settings)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess(a) => {
            let s: PreprocessSettings = resolve(&a, a.common.config.as_deref())?;
            if a.common.show_config {
                return show(&s);
            }
            commands::preprocess(&s)
        }
        Command::Train(a) => {
            let mut s: TrainSettings = resolve(&a, a.common.config.as_deref())?;
            s.seed = Some(resolve_seed(s.seed)?);
            if a.common.show_config {
                return show(&s);
            }
            commands::train(&s)
        }
        Command::Translate(a) => {
            let s: TranslateSettings = resolve(&a, a.common.config.as_deref())?;
            if a.common.show_config {
                return show(&s);
            }
            commands::translate(&s)
        }
        Command::Evaluate(a) => {
            let s: EvaluateSettings = resolve(&a, a.common.config.as_deref())?;
            if a.common.show_config {
                return show(&s);
            }
            commands::evaluate(&s)
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns
/// the process exit status. Failures print one line to stderr.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("amrnmt: error: {msg}");
            1
        }
    }
}
