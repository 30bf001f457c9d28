use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum System {
    Vanilla,
    Sat,
    Synst,
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            System::Vanilla => "vanilla",
            System::Sat => "sat",
            System::Synst => "synst",
        })
    }
}

impl FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(System::Vanilla),
            "sat" => Ok(System::Sat),
            "synst" => Ok(System::Synst),
            _ => Err(Error::config(format!("unknown system {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrainMode {
    /// Parse and token decoders share one encoder.
    Joint,
    /// Parse and token decoders have disjoint parameters, including encoders.
    Separate,
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::Joint => "joint",
            TrainMode::Separate => "separate",
        })
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(TrainMode::Joint),
            "separate" => Ok(TrainMode::Separate),
            _ => Err(Error::config(format!("unknown training mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub system: System,
    pub mode: TrainMode,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub parse_layers: usize,
    pub heads: usize,
    pub dim: usize,
    pub ff_dim: usize,
    /// SAT group size, or the maximum chunk size for SynST.
    pub k: usize,
    pub dropout: f64,
    pub token_smoothing: f64,
    pub parse_smoothing: f64,
    /// Weight of the parse-decoder loss relative to the token-decoder loss.
    pub parse_loss_weight: f64,
    pub beam: usize,
    /// GNMT length-penalty exponent used to rank finished beam hypotheses.
    pub length_alpha: f64,
    pub token_vocab: usize,
    pub chunk_vocab: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            system: System::Vanilla,
            mode: TrainMode::Joint,
            encoder_layers: 2,
            decoder_layers: 2,
            parse_layers: 1,
            heads: 4,
            dim: 64,
            ff_dim: 128,
            k: 1,
            dropout: 0.1,
            token_smoothing: 0.0,
            parse_smoothing: 0.0,
            parse_loss_weight: 1.0,
            beam: 1,
            length_alpha: 0.6,
            token_vocab: 0,
            chunk_vocab: 0,
            max_len: 128,
            seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::config(m.to_string()));
        if self.parse_layers < 1 {
            return fail("parse_layers must be at least 1");
        }
        if self.k < 1 {
            return fail("k must be at least 1");
        }
        if self.beam < 1 {
            return fail("beam must be at least 1");
        }
        if self.encoder_layers < 1 || self.decoder_layers < 1 {
            return fail("encoder_layers and decoder_layers must be at least 1");
        }
        if self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::config(format!(
                "model dim {} not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        if self.dim % 2 != 0 {
            return fail("model dim must be even");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must be in [0, 1)");
        }
        if self.token_vocab <= crate::subword::TokenVocab::SPECIALS {
            return fail("token vocabulary is empty");
        }
        if self.system == System::Synst && self.chunk_vocab <= crate::treebank::ChunkVocab::SPECIALS {
            return fail("chunk vocabulary is empty");
        }
        if self.system == System::Vanilla && self.k != 1 {
            return fail("vanilla system requires k = 1");
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("system", self.system.to_string()),
            ("mode", self.mode.to_string()),
            ("encoder_layers", self.encoder_layers.to_string()),
            ("decoder_layers", self.decoder_layers.to_string()),
            ("parse_layers", self.parse_layers.to_string()),
            ("heads", self.heads.to_string()),
            ("dim", self.dim.to_string()),
            ("ff_dim", self.ff_dim.to_string()),
            ("k", self.k.to_string()),
            ("dropout", fmt_f64(self.dropout)),
            ("token_smoothing", fmt_f64(self.token_smoothing)),
            ("parse_smoothing", fmt_f64(self.parse_smoothing)),
            ("parse_loss_weight", fmt_f64(self.parse_loss_weight)),
            ("beam", self.beam.to_string()),
            ("length_alpha", fmt_f64(self.length_alpha)),
            ("token_vocab", self.token_vocab.to_string()),
            ("chunk_vocab", self.chunk_vocab.to_string()),
            ("max_len", self.max_len.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    /// Overrides fields from `key=value` pairs; unknown keys are errors.
    pub fn apply_pairs<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<()> {
        for (key, value) in pairs {
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::config(format!("invalid value {v:?} for {key}")))
        }
        match key {
            "system" => self.system = value.parse()?,
            "mode" => self.mode = value.parse()?,
            "encoder_layers" => self.encoder_layers = num(key, value)?,
            "decoder_layers" => self.decoder_layers = num(key, value)?,
            "parse_layers" => self.parse_layers = num(key, value)?,
            "heads" => self.heads = num(key, value)?,
            "dim" => self.dim = num(key, value)?,
            "ff_dim" => self.ff_dim = num(key, value)?,
            "k" => self.k = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "token_smoothing" => self.token_smoothing = num(key, value)?,
            "parse_smoothing" => self.parse_smoothing = num(key, value)?,
            "parse_loss_weight" => self.parse_loss_weight = num(key, value)?,
            "beam" => self.beam = num(key, value)?,
            "length_alpha" => self.length_alpha = num(key, value)?,
            "token_vocab" => self.token_vocab = num(key, value)?,
            "chunk_vocab" => self.chunk_vocab = num(key, value)?,
            "max_len" => self.max_len = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(Error::config(format!("unknown model key {key:?}"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("expected key=value, got {line:?}")))?;
            seen.insert(k.trim(), v.trim());
        }
        let mut config = Self::default();
        config.apply_pairs(seen)?;
        Ok(config)
    }
}

/// Shortest representation that parses back to the same value.
fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}
