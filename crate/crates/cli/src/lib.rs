//! The `synst` command line: corpus preparation, training, decoding,
//! evaluation, analysis and latency benchmarks over one flat config.

pub mod commands;
pub mod corpus;
pub mod settings;

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use synst::Result;

pub use settings::Settings;

#[derive(Debug, Args, Default)]
pub struct Common {
    /// Experiment config: `key = value` lines, `include = FILE` allowed.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Override any config key; applied after all other flags.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// `seed`
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `output`: directory holding every artifact.
    #[arg(short, long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic parallel corpus with target parses.
    Synth(SynthArgs),
    /// Learn BPE, encode the corpus, extract chunks and write a manifest.
    Preprocess(PreprocessArgs),
    /// Train one system, logging dev scores and keeping the best checkpoint.
    Train(TrainArgs),
    /// Decode a source file with a checkpoint.
    Translate(TranslateArgs),
    /// Score translations (BLEU) and chunk sequences (chunk F1).
    Evaluate(EvaluateArgs),
    /// Chunk statistics and the parse-decoder layer sweep.
    Analyze(AnalyzeArgs),
    /// Time batch-size-one decoding of several checkpoints.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// `synth.kind`: toy or copy.
    #[arg(long)]
    pub kind: Option<String>,
    /// `synth.dir`
    #[arg(long)]
    pub dir: Option<PathBuf>,
    /// `synth.train`
    #[arg(long)]
    pub train: Option<usize>,
    /// `synth.dev`
    #[arg(long)]
    pub dev: Option<usize>,
    /// `synth.test`
    #[arg(long)]
    pub test: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// `bpe.merges`
    #[arg(long)]
    pub merges: Option<usize>,
    /// `chunk.k`
    #[arg(long)]
    pub k: Option<usize>,
    /// `chunk.mode`: fixed, sqrt-capped or random.
    #[arg(long)]
    pub chunk_mode: Option<String>,
    /// `chunk.strip_labels`
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub strip_labels: Option<bool>,
    /// `chunk.word_sizer`
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub word_sizer: Option<bool>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `train.run`: run directory name under `OUTPUT/runs`.
    #[arg(long)]
    pub run: Option<String>,
    /// `model.system`: vanilla, sat or synst.
    #[arg(long)]
    pub system: Option<String>,
    /// `model.k`
    #[arg(long)]
    pub k: Option<usize>,
    /// `model.mode`: joint or separate.
    #[arg(long)]
    pub mode: Option<String>,
    /// `model.parse_layers`
    #[arg(long)]
    pub parse_layers: Option<usize>,
    /// `train.epochs`
    #[arg(long)]
    pub epochs: Option<u64>,
    /// `train.resume`
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub resume: Option<bool>,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    /// `train.run`: selects `OUTPUT/runs/RUN/best.ckpt` by default.
    #[arg(long)]
    pub run: Option<String>,
    /// `translate.checkpoint`
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// `translate.input`
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `translate.output`
    #[arg(long = "out")]
    pub out: Option<PathBuf>,
    /// `decode.beam`
    #[arg(long)]
    pub beam: Option<usize>,
    /// `decode.max_len`
    #[arg(long)]
    pub max_len: Option<usize>,
    /// `translate.gold_chunks`: feed these chunk lines to the token decoder.
    #[arg(long)]
    pub gold_chunks: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// `eval.hyp`
    #[arg(long)]
    pub hyp: Option<PathBuf>,
    /// `eval.ref`
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// `eval.hyp_chunks`
    #[arg(long)]
    pub hyp_chunks: Option<PathBuf>,
    /// `eval.ref_chunks`
    #[arg(long)]
    pub ref_chunks: Option<PathBuf>,
    /// `eval.parsed_chunks`: chunks of a parse of the hypotheses.
    #[arg(long)]
    pub parsed_chunks: Option<PathBuf>,
    /// `eval.smoothing`: none or exp.
    #[arg(long)]
    pub smoothing: Option<String>,
    /// `eval.bag`: ignore chunk positions.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub bag: Option<bool>,
    /// `eval.csv`
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(subcommand)]
    pub what: Analysis,
}

#[derive(Debug, Subcommand)]
pub enum Analysis {
    /// Average chunk size per k.
    ChunkStats {
        /// `analyze.split`
        #[arg(long)]
        split: Option<String>,
        /// `analyze.ks`: comma-separated.
        #[arg(long)]
        ks: Option<String>,
        /// `chunk.word_sizer`
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        word_sizer: Option<bool>,
    },
    /// Speedup over beam-4 vanilla for SynST checkpoints of varying parse-decoder depth.
    Layers {
        /// `analyze.baseline`
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// `analyze.checkpoints`: comma-separated.
        #[arg(long)]
        checkpoints: Option<String>,
        /// `analyze.split`
        #[arg(long)]
        split: Option<String>,
        /// `analyze.sentences`: 0 for all.
        #[arg(long)]
        sentences: Option<usize>,
        /// `bench.runs`
        #[arg(long)]
        runs: Option<usize>,
    },
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// `bench.entries`: comma-separated `label=checkpoint[@beam]`, baseline first.
    #[arg(long)]
    pub entries: Option<String>,
    /// `bench.split`
    #[arg(long)]
    pub split: Option<String>,
    /// `bench.runs`
    #[arg(long)]
    pub runs: Option<usize>,
    /// `bench.sentences`: 0 for all.
    #[arg(long)]
    pub sentences: Option<usize>,
    /// `bench.threads`
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Parser)]
#[command(name = "synst", version, about = "Two-stage chunk-then-token translation experiments")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

type Overrides = Vec<(&'static str, Option<String>)>;

fn s<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(T::to_string)
}

fn p(v: &Option<PathBuf>) -> Option<String> {
    v.as_ref().map(|p| p.display().to_string())
}

impl Command {
    fn overrides(&self) -> Overrides {
        match self {
            Command::Synth(a) => vec![
                ("synth.kind", s(&a.kind)),
                ("synth.dir", p(&a.dir)),
                ("synth.train", s(&a.train)),
                ("synth.dev", s(&a.dev)),
                ("synth.test", s(&a.test)),
            ],
            Command::Preprocess(a) => vec![
                ("bpe.merges", s(&a.merges)),
                ("chunk.k", s(&a.k)),
                ("chunk.mode", s(&a.chunk_mode)),
                ("chunk.strip_labels", s(&a.strip_labels)),
                ("chunk.word_sizer", s(&a.word_sizer)),
            ],
            Command::Train(a) => vec![
                ("train.run", s(&a.run)),
                ("model.system", s(&a.system)),
                ("model.k", s(&a.k)),
                ("model.mode", s(&a.mode)),
                ("model.parse_layers", s(&a.parse_layers)),
                ("train.epochs", s(&a.epochs)),
                ("train.resume", s(&a.resume)),
            ],
            Command::Translate(a) => vec![
                ("train.run", s(&a.run)),
                ("translate.checkpoint", p(&a.checkpoint)),
                ("translate.input", p(&a.input)),
                ("translate.output", p(&a.out)),
                ("decode.beam", s(&a.beam)),
                ("decode.max_len", s(&a.max_len)),
                ("translate.gold_chunks", p(&a.gold_chunks)),
            ],
            Command::Evaluate(a) => vec![
                ("eval.hyp", p(&a.hyp)),
                ("eval.ref", p(&a.reference)),
                ("eval.hyp_chunks", p(&a.hyp_chunks)),
                ("eval.ref_chunks", p(&a.ref_chunks)),
                ("eval.parsed_chunks", p(&a.parsed_chunks)),
                ("eval.smoothing", s(&a.smoothing)),
                ("eval.bag", s(&a.bag)),
                ("eval.csv", p(&a.csv)),
            ],
            Command::Analyze(a) => match &a.what {
                Analysis::ChunkStats { split, ks, word_sizer } => vec![
                    ("analyze.split", s(split)),
                    ("analyze.ks", s(ks)),
                    ("chunk.word_sizer", s(word_sizer)),
                ],
                Analysis::Layers {
                    baseline,
                    checkpoints,
                    split,
                    sentences,
                    runs,
                } => vec![
                    ("analyze.baseline", p(baseline)),
                    ("analyze.checkpoints", s(checkpoints)),
                    ("analyze.split", s(split)),
                    ("analyze.sentences", s(sentences)),
                    ("bench.runs", s(runs)),
                ],
            },
            Command::Bench(a) => vec![
                ("bench.entries", s(&a.entries)),
                ("bench.split", s(&a.split)),
                ("bench.runs", s(&a.runs)),
                ("bench.sentences", s(&a.sentences)),
                ("bench.threads", s(&a.threads)),
            ],
        }
    }
}

/// Config file, then typed flags, then `--set` pairs.
pub fn settings_for(common: &Common, command: &Command) -> Result<Settings> {
    let mut settings = Settings::load(common.config.as_deref())?;
    let mut overrides = vec![("seed", s(&common.seed)), ("output", p(&common.output))];
    overrides.extend(command.overrides());
    for (key, value) in overrides {
        if let Some(v) = value {
            settings.set(key, &v)?;
        }
    }
    for pair in &common.set {
        settings.set_pair(pair)?;
    }
    Ok(settings)
}

/// Runs one command and returns its human-readable summary.
pub fn execute(command: &Command, settings: &Settings) -> Result<String> {
    let mut out = String::new();
    match command {
        Command::Synth(_) => {
            let cfg = commands::synth::run(settings)?;
            writeln!(out, "corpus written; include = {}", cfg.display()).unwrap();
        }
        Command::Preprocess(_) => out = commands::preprocess::run(settings)?.text,
        Command::Train(_) => {
            let t = commands::train::run(settings)?;
            writeln!(out, "run {} trained {} epochs ({} steps), final loss {:.4}", t.dir.display(), t.epochs_run, t.steps, t.last_loss).unwrap();
            if let Some(b) = t.best_bleu {
                writeln!(out, "best dev bleu {b:.2}").unwrap();
            }
        }
        Command::Translate(_) => {
            let t = commands::translate::run(settings)?;
            let passes: usize = t.results.iter().map(|r| r.passes).sum();
            writeln!(
                out,
                "{} lines written to {}, mean passes {:.3}",
                t.lines.len(),
                t.output.display(),
                passes as f64 / t.lines.len().max(1) as f64
            )
            .unwrap();
        }
        Command::Evaluate(_) => out = commands::evaluate::run(settings)?.to_table(),
        Command::Analyze(a) => match a.what {
            Analysis::ChunkStats { .. } => {
                writeln!(out, "k average_chunk_size chunks").unwrap();
                for r in commands::analyze::chunk_stats(settings)? {
                    writeln!(out, "{} {:.4} {}", r.k, r.average_chunk_size, r.chunks).unwrap();
                }
            }
            Analysis::Layers { .. } => {
                let sweep = commands::analyze::layer_sweep(settings)?;
                writeln!(out, "M speedup mean_passes layer_passes bleu").unwrap();
                for r in &sweep.rows {
                    writeln!(out, "{} {:.3} {:.3} {:.3} {:.2}", r.parse_layers, r.speedup, r.mean_passes, r.layer_passes, r.bleu).unwrap();
                }
                writeln!(out, "written to {}", sweep.csv_path.display()).unwrap();
            }
        },
        Command::Bench(_) => out = commands::bench::run(settings)?.to_table(),
    }
    Ok(out)
}

/// Parses arguments and runs the command. Usage errors carry clap's
/// rendered message.
pub fn run_args<I, T>(args: I) -> std::result::Result<String, RunError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let full = Cli::try_parse_from(args).map_err(RunError::Usage)?;
    let settings = settings_for(&full.common, &full.command).map_err(RunError::Failed)?;
    execute(&full.command, &settings).map_err(RunError::Failed)
}

#[derive(Debug)]
pub enum RunError {
    Usage(clap::Error),
    Failed(synst::Error),
}

impl RunError {
    /// One-line `error[kind]: message` rendering.
    pub fn line(&self) -> String {
        let (kind, message) = match self {
            RunError::Usage(e) => ("usage", e.to_string()),
            RunError::Failed(e) => (e.kind(), e.to_string()),
        };
        let message = message
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| l.strip_prefix("error: ").unwrap_or(l))
            .collect::<Vec<_>>()
            .join(" ");
        format!("error[{kind}]: {message}")
    }
}
