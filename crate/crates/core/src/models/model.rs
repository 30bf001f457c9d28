use crate::error::{Error, Result};
use crate::rng::SeedStreams;
use crate::subword::TokenVocab;
use crate::tensor::{Graph, MaskKind, ParamStore, Scalar, Var};
use crate::treebank::ChunkVocab;

use super::config::{ModelConfig, System, TrainMode};
use super::transformer::{Decoder, Dims, Encoder, Packed};

/// One aligned training pair. `chunks` are ChunkVocab ids and
/// `chunk_sizes` their token counts (SynST only).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Example {
    pub line: usize,
    pub src: Vec<u32>,
    pub tgt: Vec<u32>,
    pub chunks: Vec<u32>,
    pub chunk_sizes: Vec<usize>,
}

/// Token-decoder input for a chunk sequence: each chunk id (offset into the
/// shared embedding table) followed by `size` MASK placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expanded {
    pub ids: Vec<u32>,
    pub mask_positions: Vec<usize>,
}

pub fn expand_chunk_ids(chunks: &[u32], sizes: &[usize], offset: u32) -> Expanded {
    let mut ids = Vec::with_capacity(chunks.len() + sizes.iter().sum::<usize>());
    let mut mask_positions = Vec::new();
    for (&c, &s) in chunks.iter().zip(sizes) {
        ids.push(offset + c);
        for _ in 0..s {
            mask_positions.push(ids.len());
            ids.push(TokenVocab::MASK);
        }
    }
    Expanded { ids, mask_positions }
}

/// [`expand_chunk_ids`] for a symbolic chunk sequence.
pub fn expand_chunks(seq: &crate::treebank::ChunkSequence, vocab: &ChunkVocab, offset: u32) -> Result<Expanded> {
    let ids = vocab.encode(seq)?;
    let sizes: Vec<usize> = seq.iter().map(|c| c.size).collect();
    Ok(expand_chunk_ids(&ids, &sizes, offset))
}

/// Decoder input for the autoregressive and semi-autoregressive systems:
/// position `i` sees target `i - k`, with the first `k` positions BOS.
pub fn shifted_input(tgt_with_eos: &[u32], k: usize) -> Vec<u32> {
    (0..tgt_with_eos.len())
        .map(|i| if i < k { TokenVocab::BOS } else { tgt_with_eos[i - k] })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Architecture {
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub parse_encoder: Option<Encoder>,
    pub parse_decoder: Option<Decoder>,
}

impl Architecture {
    pub fn build<T: Scalar>(config: &ModelConfig, store: &mut ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let mut rng = SeedStreams::new(config.seed).stream("init");
        let dims = Dims {
            dim: config.dim,
            heads: config.heads,
            ff_dim: config.ff_dim,
            dropout: config.dropout,
            max_positions: 2 * config.max_len + config.k + 2,
        };
        let v = config.token_vocab;
        let encoder = Encoder::new(store, "encoder", v, config.encoder_layers, dims, &mut rng)?;
        let (decoder, parse_encoder, parse_decoder) = match config.system {
            System::Vanilla | System::Sat => {
                let d = Decoder::new(store, "decoder", v, v, config.decoder_layers, dims, &mut rng)?;
                (d, None, None)
            }
            System::Synst => {
                let c = config.chunk_vocab;
                let d = Decoder::new(store, "decoder", v + c, v, config.decoder_layers, dims, &mut rng)?;
                let pe = match config.mode {
                    TrainMode::Joint => None,
                    TrainMode::Separate => Some(Encoder::new(
                        store,
                        "parse_encoder",
                        v,
                        config.encoder_layers,
                        dims,
                        &mut rng,
                    )?),
                };
                let pd = Decoder::new(store, "parse_decoder", c, c, config.parse_layers, dims, &mut rng)?;
                (d, pe, Some(pd))
            }
        };
        Ok(Self {
            encoder,
            decoder,
            parse_encoder,
            parse_decoder,
        })
    }

    /// Encoder feeding the parse decoder.
    pub fn parse_source_encoder(&self) -> &Encoder {
        self.parse_encoder.as_ref().unwrap_or(&self.encoder)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub token: Var,
    pub parse: Option<Var>,
}

pub fn check_example(ex: &Example, system: System) -> Result<()> {
    if ex.src.is_empty() {
        return Err(Error::data(Some(ex.line), "empty source sentence"));
    }
    if system == System::Synst {
        if ex.chunks.len() != ex.chunk_sizes.len() {
            return Err(Error::data(Some(ex.line), "chunk ids and sizes differ in length"));
        }
        let total: usize = ex.chunk_sizes.iter().sum();
        if total != ex.tgt.len() {
            return Err(Error::data(
                Some(ex.line),
                format!("chunk sizes sum to {total} but the target has {} tokens", ex.tgt.len()),
            ));
        }
    }
    Ok(())
}

/// Teacher-forced training losses for a batch. Cross-entropies are means
/// over the predicted positions of the batch.
pub fn batch_loss<T: Scalar>(
    arch: &Architecture,
    config: &ModelConfig,
    g: &mut Graph<'_, T>,
    batch: &[Example],
) -> Result<LossVars> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    for ex in batch {
        check_example(ex, config.system)?;
    }
    let src = Packed::new(batch.iter().map(|e| &e.src));
    let memory = arch.encoder.forward(g, &src)?;
    match config.system {
        System::Vanilla | System::Sat => {
            let k = if config.system == System::Vanilla { 1 } else { config.k };
            let mut input = Packed::default();
            let mut targets = Vec::new();
            for ex in batch {
                let mut y = ex.tgt.clone();
                y.push(TokenVocab::EOS);
                input.push(&shifted_input(&y, k));
                targets.extend(y.into_iter().map(Some));
            }
            let mask = if k == 1 { MaskKind::Causal } else { MaskKind::GroupCausal(k) };
            let logits = arch.decoder.forward(g, &input, &mask, memory, &src)?;
            let token = g.cross_entropy(logits, &targets, config.token_smoothing)?;
            Ok(LossVars {
                total: token,
                token,
                parse: None,
            })
        }
        System::Synst => {
            let offset = config.token_vocab as u32;
            let mut input = Packed::default();
            let mut targets = Vec::new();
            let mut parse_in = Packed::default();
            let mut parse_targets = Vec::new();
            for ex in batch {
                let e = expand_chunk_ids(&ex.chunks, &ex.chunk_sizes, offset);
                let mut row_targets = vec![None; e.ids.len()];
                for (&pos, &t) in e.mask_positions.iter().zip(&ex.tgt) {
                    row_targets[pos] = Some(t);
                }
                input.push(&e.ids);
                targets.extend(row_targets);
                let mut c = vec![ChunkVocab::BOS];
                c.extend_from_slice(&ex.chunks);
                parse_in.push(&c);
                parse_targets.extend(ex.chunks.iter().map(|&c| Some(c)));
                parse_targets.push(Some(ChunkVocab::EOS));
            }
            let logits = arch.decoder.forward(g, &input, &MaskKind::Full, memory, &src)?;
            let token = g.cross_entropy(logits, &targets, config.token_smoothing)?;
            let parse_memory = match &arch.parse_encoder {
                Some(enc) => enc.forward(g, &src)?,
                None => memory,
            };
            let pd = arch.parse_decoder.as_ref().expect("synst has a parse decoder");
            let plogits = pd.forward(g, &parse_in, &MaskKind::Causal, parse_memory, &src)?;
            let parse = g.cross_entropy(plogits, &parse_targets, config.parse_smoothing)?;
            let weighted = g.scale(parse, config.parse_loss_weight);
            let total = g.add(token, weighted)?;
            Ok(LossVars {
                total,
                token,
                parse: Some(parse),
            })
        }
    }
}

/// A configuration, its architecture and its weights.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub arch: Architecture,
    pub params: ParamStore<f32>,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let mut params = ParamStore::new();
        let arch = Architecture::build(&config, &mut params)?;
        Ok(Self { config, arch, params })
    }

    /// Rebuilds the architecture for `config` and installs `params`, which
    /// must match it name for name and shape for shape.
    pub fn with_params(config: ModelConfig, params: ParamStore<f32>) -> Result<Self> {
        let fresh = Self::new(config)?;
        if fresh.params.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                fresh.params.len(),
                params.len()
            )));
        }
        for ((_, a, ta), (_, b, tb)) in fresh.params.iter().zip(params.iter()) {
            if a != b || ta.shape() != tb.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter mismatch: {a} {:?} vs {b} {:?}",
                    ta.shape(),
                    tb.shape()
                )));
            }
        }
        Ok(Self {
            config: fresh.config,
            arch: fresh.arch,
            params,
        })
    }

    pub fn system(&self) -> System {
        self.config.system
    }
}
