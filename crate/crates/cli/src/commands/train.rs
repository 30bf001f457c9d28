use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use synst::data::{build_examples, chunk_split};
use synst::models::{checkpoint, epoch_batches, Example, Model, System, Trainer};
use synst::tensor::{AdamConfig, NoamSchedule};
use synst::treebank::ChunkingMode;
use synst::{Error, Result};

use super::common::{load_split, score, SplitData};
use crate::corpus::{read_pairs, read_text, write_text, Preprocessed, SplitFiles};
use crate::settings::Settings;

pub const LOG_HEADER: &str = "epoch,step,train_loss,token_loss,parse_loss,dev_bleu,dev_chunk_f1,dev_exact_match,elapsed_s";

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub dir: PathBuf,
    pub epochs_run: u64,
    pub steps: u64,
    pub best_bleu: Option<f64>,
    pub last_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct State {
    epoch: u64,
    best_bleu: Option<f64>,
}

impl State {
    fn to_text(self) -> String {
        let best = self.best_bleu.map_or("none".to_string(), |b| format!("{b:?}"));
        format!("epoch {}\nbest_bleu {best}\n", self.epoch)
    }

    fn from_text(text: &str) -> Result<Self> {
        let mut state = State { epoch: 0, best_bleu: None };
        for line in text.lines() {
            let bad = || Error::Checkpoint(format!("bad training state line {line:?}"));
            match line.split_once(' ').ok_or_else(bad)? {
                ("epoch", v) => state.epoch = v.parse().map_err(|_| bad())?,
                ("best_bleu", "none") => state.best_bleu = None,
                ("best_bleu", v) => state.best_bleu = Some(v.parse().map_err(|_| bad())?),
                _ => return Err(bad()),
            }
        }
        Ok(state)
    }
}

pub fn run(s: &Settings) -> Result<TrainSummary> {
    let data = Preprocessed::load(&s.data_dir())?;
    let config = s.model_config(data.bpe.vocab().len(), data.chunk_vocab.len())?;
    let system = config.system;
    let seed = s.seed()?;
    let epochs: u64 = s.parse("train.epochs")?;
    let batch_tokens: usize = s.parse("train.batch_tokens")?;
    let eval_every: u64 = s.parse::<u64>("train.eval_every")?.max(1);
    let opts = s.chunk_options()?;
    let decode = s.decode_options()?;

    let mut train = load_split(&data, s, "train", system)?;
    let mut dev: Option<SplitData> = match SplitFiles::from_settings(s, "dev")? {
        Some(_) => Some(load_split(&data, s, "dev", system)?),
        None => None,
    };
    if let Some(d) = dev.as_mut() {
        d.truncate(s.parse("train.eval_sentences")?);
    }
    let resample = system == System::Synst && opts.mode == ChunkingMode::Random;
    let train_pairs = if resample {
        Some(read_pairs(&SplitFiles::require(s, "train")?)?)
    } else {
        None
    };

    let dir = s.run_dir();
    let schedule = NoamSchedule {
        dim: config.dim,
        warmup: s.parse("train.warmup")?,
        factor: s.parse("train.lr_factor")?,
    };
    let clip = match s.get("train.clip") {
        "none" => None,
        _ => Some(s.parse("train.clip")?),
    };
    let last_path = dir.join("last.ckpt");
    let log_path = dir.join("log.csv");
    let (mut trainer, mut state, mut log) = if s.flag("train.resume")? && last_path.exists() {
        let (model, adam) = checkpoint::load(&last_path)?;
        if model.config != config {
            return Err(Error::config("checkpoint configuration differs from the current settings"));
        }
        let adam = adam.ok_or_else(|| Error::Checkpoint("last.ckpt has no optimizer state".into()))?;
        let state = State::from_text(&read_text(&dir.join("state.txt"))?)?;
        (Trainer::resume(model, schedule, adam)?, state, read_text(&log_path)?)
    } else {
        let adam = AdamConfig {
            clip_norm: clip,
            ..AdamConfig::default()
        };
        let trainer = Trainer::new(Model::new(config.clone())?, schedule, adam);
        (trainer, State { epoch: 0, best_bleu: None }, format!("{LOG_HEADER}\n"))
    };
    write_text(&dir.join("config.txt"), &s.to_text())?;

    let start = Instant::now();
    let first_epoch = state.epoch;
    let mut last_loss = f64::NAN;
    for epoch in first_epoch..epochs {
        if let Some(pairs) = &train_pairs {
            let seqs = chunk_split(pairs, &data.bpe, &opts, seed, epoch);
            train.examples = build_examples(pairs, &data.bpe, Some((&seqs, &data.chunk_vocab)))?;
        }
        let (mut loss, mut token, mut parse, mut n) = (0.0, 0.0, 0.0, 0usize);
        for batch in epoch_batches(&train.examples, batch_tokens, seed, epoch) {
            let batch: Vec<Example> = batch.iter().map(|&i| train.examples[i].clone()).collect();
            let r = trainer.step(&batch)?;
            loss += r.loss;
            token += r.token_loss;
            parse += r.parse_loss.unwrap_or(0.0);
            n += 1;
        }
        let n = n.max(1) as f64;
        last_loss = loss / n;
        let mut row = format!("{},{},{:.6},{:.6},", epoch + 1, trainer.step_count(), last_loss, token / n);
        if system == System::Synst {
            write!(row, "{:.6}", parse / n).unwrap();
        }
        let evaluate = (epoch + 1) % eval_every == 0 || epoch + 1 == epochs;
        match (&dev, evaluate) {
            (Some(d), true) => {
                let scores = score(&trainer.model, &data, d, &decode)?;
                write!(row, ",{:.4},", scores.bleu).unwrap();
                if let Some(a) = &scores.chunks {
                    write!(row, "{:.6},{:.6}", a.f1(), a.exact_match()).unwrap();
                } else {
                    row.push(',');
                }
                if state.best_bleu.map_or(true, |b| scores.bleu > b) {
                    state.best_bleu = Some(scores.bleu);
                    checkpoint::save(&dir.join("best.ckpt"), &trainer.model, None)?;
                }
            }
            _ => row.push_str(",,,"),
        }
        writeln!(row, ",{:.3}", start.elapsed().as_secs_f64()).unwrap();
        eprintln!("epoch {} loss {:.4}{}", epoch + 1, last_loss, state.best_bleu.map_or(String::new(), |b| format!(" best dev bleu {b:.2}")));
        log.push_str(&row);
        state.epoch = epoch + 1;
        write_text(&log_path, &log)?;
        checkpoint::save(&last_path, &trainer.model, Some(&trainer.adam))?;
        write_text(&dir.join("state.txt"), &state.to_text())?;
    }
    if dev.is_none() {
        checkpoint::save(&dir.join("best.ckpt"), &trainer.model, None)?;
    }
    Ok(TrainSummary {
        dir,
        epochs_run: epochs.saturating_sub(first_epoch),
        steps: trainer.step_count(),
        best_bleu: state.best_bleu,
        last_loss,
    })
}
