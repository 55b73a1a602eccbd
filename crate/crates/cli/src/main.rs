//! `countlab` command-line front end.
//!
//! Exit codes: 0 on success, 1 on domain errors, 2 on usage errors.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use countlab::{Language, Precision, QuantMode};

#[derive(Debug, Parser)]
#[command(name = "countlab", version, about = "Counting experiments with finite-precision recurrent networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags every subcommand accepts.
#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Print structured JSON on stdout.
    #[arg(long)]
    pub json: bool,
    /// JSON object of flag values (keys are flag names); explicit flags win.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct PrecisionArgs {
    /// Significand bits kept after rounding (1..=52).
    #[arg(long, default_value_t = 23)]
    pub mantissa_bits: u32,
    /// Where rounding applies: state, full or exact.
    #[arg(long, default_value = "state")]
    pub quant_mode: QuantMode,
}

impl PrecisionArgs {
    pub fn precision(&self) -> Result<Precision, commands::UsageError> {
        Precision::new(self.mantissa_bits, self.quant_mode).map_err(|e| commands::UsageError(e.to_string()))
    }
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// Language: anbn, anbncn, blocks:<m> or palindrome.
    #[arg(long, default_value = "anbn")]
    pub lang: Language,
    #[arg(long, default_value_t = 1)]
    pub n_min: usize,
    #[arg(long, default_value_t = 100)]
    pub n_max: usize,
    /// Total number of samples before the dev split.
    #[arg(long, default_value_t = 2000)]
    pub count: usize,
    #[arg(long, default_value_t = 0.1)]
    pub dev_fraction: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded train/dev split or a near-miss evaluation set.
    GenData {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        seed: u64,
        /// Emit the near-miss evaluation set (`--count` samples) instead of train/dev.
        #[arg(long)]
        eval: bool,
        /// Output directory (train.tsv and dev.tsv, or eval.tsv).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train a recognizer with per-sample SGD.
    Train {
        /// srnn, irnn, gru, lstm or lstm-id.
        #[arg(long)]
        cell: countlab::CellKind,
        #[arg(long, default_value_t = 10)]
        hidden: usize,
        #[command(flatten)]
        data: DataArgs,
        /// Read training samples from a `<word>\t<0|1>` file instead of generating them.
        #[arg(long, requires = "dev_file")]
        train_file: Option<PathBuf>,
        #[arg(long, requires = "train_file")]
        dev_file: Option<PathBuf>,
        #[arg(long, default_value_t = countlab::training::TrainConfig::default().learning_rate)]
        lr: f64,
        #[arg(long, default_value_t = countlab::training::TrainConfig::default().max_epochs)]
        epochs: usize,
        #[arg(long, default_value_t = countlab::training::TrainConfig::default().init_scale)]
        init_scale: f64,
        /// Gradient-norm clip; defaults to 1.0 for IRNN and off otherwise.
        #[arg(long)]
        clip_norm: Option<f64>,
        /// Width of a tanh readout layer (0 = linear readout).
        #[arg(long, default_value_t = countlab::training::TrainConfig::default().readout_hidden)]
        readout_hidden: usize,
        /// Seeds both data generation and training.
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        precision: PrecisionArgs,
        /// Checkpoint file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Accuracy of a model on a test file or a seeded near-miss set.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// `<word>\t<0|1>` file; without it a near-miss set is generated from --seed.
        #[arg(long)]
        testset: Option<PathBuf>,
        #[arg(long, default_value = "anbn")]
        lang: Language,
        #[arg(long, default_value_t = countlab::langdata::EVAL_SET_SIZE)]
        count: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        precision: PrecisionArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Check a^n b^n (and its +-1/+-2 perturbations) for n = 1..=limit.
    Sweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "anbn")]
        lang: Language,
        #[arg(long, default_value_t = 1000)]
        limit: usize,
        /// Anomalies listed in text output.
        #[arg(long, default_value_t = 10)]
        show: usize,
        #[command(flatten)]
        precision: PrecisionArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Record the state after every symbol and look for counting dimensions.
    Trace {
        #[arg(long)]
        model: PathBuf,
        /// Word or shorthand such as a100b100.
        #[arg(long)]
        word: String,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long, default_value_t = countlab::eval::COUNTING_THETA)]
        theta: f64,
        #[command(flatten)]
        precision: PrecisionArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Build a hand-set network and report how far it counts.
    Construct {
        /// lstm, lstm-id, irnn, srnn or gru.
        #[arg(long)]
        kind: String,
        #[arg(long, default_value = "anbn")]
        lang: Language,
        /// Machine name or JSON file; overrides --lang for lstm and irnn.
        #[arg(long)]
        machine: Option<String>,
        /// SRNN recurrent weight.
        #[arg(long, default_value_t = 1.0)]
        weight: f64,
        /// GRU division factor.
        #[arg(long, default_value_t = 2.0)]
        k: f64,
        /// Search limit for the SRNN and GRU failure point.
        #[arg(long, default_value_t = 1_000_000)]
        max_n: usize,
        /// Sweep limit used to verify the LSTM and IRNN constructions (0 skips).
        #[arg(long, default_value_t = 1000)]
        verify: usize,
        #[command(flatten)]
        precision: PrecisionArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a counter machine on a word.
    SkcmRun {
        /// anbn, anbncn, blocks:<m> or a JSON file.
        #[arg(long)]
        machine: String,
        /// Word or shorthand such as a3b3.
        #[arg(long)]
        word: String,
        #[command(flatten)]
        common: Common,
    },
    /// Find two words of one length that reach the same configuration.
    SkcmCollide {
        #[arg(long)]
        machine: String,
        /// Word length.
        #[arg(long)]
        m: usize,
        /// Letters to enumerate (default: the first two of the alphabet).
        #[arg(long)]
        letters: Option<String>,
        #[arg(long, default_value_t = countlab::skcm::DEFAULT_ENUMERATION_CAP)]
        cap: u128,
        /// Random suffixes used to confirm the pair is indistinguishable.
        #[arg(long, default_value_t = 0)]
        suffixes: usize,
        #[arg(long, default_value_t = 12)]
        suffix_len: usize,
        /// Required when --suffixes > 0.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare backpropagation with central finite differences on random instances.
    Gradcheck {
        #[arg(long)]
        cell: countlab::CellKind,
        #[arg(long, default_value_t = 4)]
        hidden: usize,
        #[arg(long, default_value_t = 0)]
        readout_hidden: usize,
        #[arg(long, default_value_t = 8)]
        length: usize,
        #[arg(long, default_value_t = 5)]
        instances: usize,
        #[arg(long, default_value_t = 1e-5)]
        fd_step: f64,
        #[arg(long, default_value_t = 0.8)]
        init_scale: f64,
        /// Exit with status 1 when the worst relative error exceeds this.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Sign-algebra check that a 3-dimensional squashing state cannot hold a binary counter.
    Infeasibility {
        /// increasing or bidirectional.
        #[arg(long)]
        scenario: countlab::constructions::binary::CounterScenario,
        #[arg(long, default_value_t = 3)]
        bits: usize,
        /// Random networks to try (0 skips the search).
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Pushes a halving stack encoding survives at a given precision.
    StackDemo {
        #[arg(long, default_value_t = 23)]
        mantissa_bits: u32,
        #[command(flatten)]
        common: Common,
    },
}

/// Insert the flags of a `--config` file after the subcommand name, skipping
/// any flag that is also given explicitly.
fn merge_config(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (i, a) in strs.iter().enumerate() {
        if a == "--config" {
            path = strs.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("config {path} is not valid JSON: {e}"))?;
    let obj = value.as_object().ok_or_else(|| format!("config {path} must be a JSON object"))?;
    let explicit: Vec<&str> =
        strs.iter().filter_map(|a| a.strip_prefix("--")).map(|a| a.split('=').next().unwrap_or(a)).collect();
    let mut extra = Vec::new();
    for (key, v) in obj {
        let name = key.replace('_', "-");
        if name == "config" || explicit.contains(&name.as_str()) {
            continue;
        }
        let flag = format!("--{name}");
        match v {
            serde_json::Value::Bool(true) => extra.push(flag),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::String(s) => extra.extend([flag, s.clone()]),
            serde_json::Value::Number(n) => extra.extend([flag, n.to_string()]),
            _ => return Err(format!("config key `{key}` must be a string, number or boolean")),
        }
    }
    // The subcommand is the first argument after the program name.
    let mut out = args;
    let at = 2.min(out.len());
    out.splice(at..at, extra.into_iter().map(OsString::from));
    Ok(out)
}

fn main() -> ExitCode {
    let args = match merge_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<commands::UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
