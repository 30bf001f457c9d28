//! Flat `key = value` experiment configuration.
//!
//! Lines starting with `#` are comments. `include = PATH` splices another
//! file in place, resolved relative to the including file. Later
//! assignments win, and command-line overrides are applied last.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use synst::data::ChunkOptions;
use synst::models::{DecodeOptions, ModelConfig};
use synst::{Error, Result};

use crate::corpus::read_text;

const MAX_INCLUDE_DEPTH: usize = 16;

/// Every accepted key with its default. `model.*` keys are added from the
/// model configuration defaults.
const KEYS: &[(&str, &str)] = &[
    ("seed", "1"),
    ("output", "out"),
    ("train.source", ""),
    ("train.target", ""),
    ("train.parses", ""),
    ("dev.source", ""),
    ("dev.target", ""),
    ("dev.parses", ""),
    ("test.source", ""),
    ("test.target", ""),
    ("test.parses", ""),
    ("bpe.merges", "500"),
    ("chunk.k", "6"),
    ("chunk.mode", "fixed"),
    ("chunk.strip_labels", "false"),
    ("chunk.word_sizer", "false"),
    ("train.run", ""),
    ("train.epochs", "12"),
    ("train.batch_tokens", "600"),
    ("train.warmup", "400"),
    ("train.lr_factor", "0.7"),
    ("train.clip", "none"),
    ("train.eval_every", "1"),
    ("train.eval_sentences", "0"),
    ("train.resume", "false"),
    ("decode.beam", "1"),
    ("decode.max_len", "64"),
    ("decode.max_chunks", "32"),
    ("translate.checkpoint", ""),
    ("translate.input", ""),
    ("translate.output", ""),
    ("translate.gold_chunks", ""),
    ("eval.hyp", ""),
    ("eval.ref", ""),
    ("eval.hyp_chunks", ""),
    ("eval.ref_chunks", ""),
    ("eval.parsed_chunks", ""),
    ("eval.smoothing", "none"),
    ("eval.bag", "false"),
    ("eval.csv", ""),
    ("analyze.split", "dev"),
    ("analyze.ks", "1,2,3,4,5,6"),
    ("analyze.baseline", ""),
    ("analyze.checkpoints", ""),
    ("analyze.sentences", "0"),
    ("bench.entries", ""),
    ("bench.split", "dev"),
    ("bench.runs", "5"),
    ("bench.sentences", "0"),
    ("bench.warmup", "true"),
    ("bench.threads", "1"),
    ("synth.kind", "toy"),
    ("synth.dir", ""),
    ("synth.train", "5000"),
    ("synth.dev", "1000"),
    ("synth.test", "1000"),
    ("synth.copy_vocab", "20"),
];

/// Model keys that are derived from the data or the global seed.
const DERIVED_MODEL_KEYS: &[&str] = &["token_vocab", "chunk_vocab", "seed"];

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Default for Settings {
    fn default() -> Self {
        let mut values: BTreeMap<String, String> = KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for (k, v) in ModelConfig::default().to_pairs() {
            if !DERIVED_MODEL_KEYS.contains(&k) {
                values.insert(format!("model.{k}"), v);
            }
        }
        Self { values }
    }
}

impl Settings {
    /// Defaults, then the config file if one is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut s = Self::default();
        if let Some(p) = path {
            s.read_file(p, 0)?;
        }
        Ok(s)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut s = Self::default();
        s.read_str(text, Path::new("."), 0)?;
        Ok(s)
    }

    fn read_file(&mut self, path: &Path, depth: usize) -> Result<()> {
        if depth > MAX_INCLUDE_DEPTH {
            return Err(Error::config(format!("includes nested too deeply at {}", path.display())));
        }
        let text = read_text(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        self.read_str(&text, dir, depth)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    fn read_str(&mut self, text: &str, dir: &Path, depth: usize) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if key == "include" {
                self.read_file(&dir.join(value), depth + 1)?;
            } else {
                self.set(key, value)
                    .map_err(|e| Error::config(format!("line {}: {e}", i + 1)))?;
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(Error::config(format!("unknown key {key:?}"))),
        }
    }

    /// Applies a `KEY=VALUE` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::config(format!("expected KEY=VALUE, got {pair:?}")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("settings key {key:?} is not declared"))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key);
        v.parse()
            .map_err(|_| Error::config(format!("invalid value {v:?} for {key}")))
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            v => Err(Error::config(format!("invalid boolean {v:?} for {key}"))),
        }
    }

    /// `None` for an empty value.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.get(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| Error::config(format!("{key} is not set")))
    }

    /// Comma-separated items, empty entries dropped.
    pub fn list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect()
    }

    pub fn output(&self) -> PathBuf {
        PathBuf::from(self.get("output"))
    }

    pub fn data_dir(&self) -> PathBuf {
        self.output().join("data")
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse("seed")
    }

    /// Run name; defaults to the model system.
    pub fn run_name(&self) -> String {
        match self.get("train.run") {
            "" => self.get("model.system").to_string(),
            name => name.to_string(),
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output().join("runs").join(self.run_name())
    }

    /// Model hyperparameters; vocabulary sizes are filled in from the data.
    pub fn model_config(&self, token_vocab: usize, chunk_vocab: usize) -> Result<ModelConfig> {
        let mut c = ModelConfig::default();
        for (key, value) in &self.values {
            if let Some(k) = key.strip_prefix("model.") {
                c.set(k, value)?;
            }
        }
        c.token_vocab = token_vocab;
        c.chunk_vocab = chunk_vocab;
        c.seed = self.seed()?;
        c.validate()?;
        Ok(c)
    }

    pub fn chunk_options(&self) -> Result<ChunkOptions> {
        let k: usize = self.parse("chunk.k")?;
        if k == 0 {
            return Err(Error::config("chunk.k must be positive"));
        }
        Ok(ChunkOptions {
            k,
            mode: self.parse("chunk.mode")?,
            strip_labels: self.flag("chunk.strip_labels")?,
            word_sizer: self.flag("chunk.word_sizer")?,
        })
    }

    pub fn decode_options(&self) -> Result<DecodeOptions> {
        let beam: usize = self.parse("decode.beam")?;
        if beam == 0 {
            return Err(Error::config("decode.beam must be positive"));
        }
        Ok(DecodeOptions {
            beam,
            max_len: self.parse("decode.max_len")?,
            max_chunks: self.parse("decode.max_chunks")?,
        })
    }

    pub fn keys(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn to_text(&self) -> String {
        self.keys().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
