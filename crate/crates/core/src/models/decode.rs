//! Inference for the three systems. Every decode runs single-threaded on
//! one sentence and reports the number of decoder passes it used.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::subword::TokenVocab;
use crate::tensor::kernels;
use crate::tensor::{MaskKind, ParamStore};
use crate::treebank::ChunkVocab;

use super::config::System;
use super::model::{expand_chunk_ids, Model};
use super::transformer::Decoder;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecodeResult {
    /// Output token ids, without the end symbol.
    pub tokens: Vec<u32>,
    /// Chunk ids from the parse decoder, without the end symbol (SynST).
    pub chunks: Vec<u32>,
    pub log_score: f64,
    /// Symbols produced by the step-wise stage, counting the end symbol
    /// when one was produced: `m` tokens, or `p` chunks for SynST.
    pub emitted: usize,
    pub passes: usize,
    /// Forward passes of the SynST token decoder.
    pub token_passes: usize,
    /// Mask-expanded token-decoder input (SynST).
    pub decoder_input: Vec<u32>,
    pub elapsed_ns: u64,
    pub truncated: bool,
    pub empty: bool,
}

/// Pass count implied by a single-hypothesis decode.
pub fn expected_passes(system: System, k: usize, r: &DecodeResult) -> usize {
    match system {
        System::Vanilla => r.emitted,
        System::Sat => r.emitted.div_ceil(k),
        System::Synst if r.empty => r.emitted,
        System::Synst => r.emitted + 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeOptions {
    pub beam: usize,
    pub max_len: usize,
    pub max_chunks: usize,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            beam: 1,
            max_len: 64,
            max_chunks: 64,
        }
    }
}

const TOKEN_BANNED: &[u32] = &[TokenVocab::PAD, TokenVocab::BOS, TokenVocab::MASK];
const FILL_BANNED: &[u32] = &[TokenVocab::PAD, TokenVocab::BOS, TokenVocab::EOS, TokenVocab::MASK];
const CHUNK_BANNED: &[u32] = &[ChunkVocab::PAD, ChunkVocab::BOS];

fn log_probs(logits: &[f32], cols: usize, banned: &[u32]) -> Vec<Vec<f64>> {
    logits
        .chunks(cols)
        .map(|row| {
            let mut lp: Vec<f64> = kernels::log_softmax_row(row).into_iter().map(f64::from).collect();
            for &b in banned {
                if let Some(x) = lp.get_mut(b as usize) {
                    *x = f64::NEG_INFINITY;
                }
            }
            lp
        })
        .collect()
}

/// GNMT length penalty `((5 + len) / 6)^alpha`.
pub fn length_penalty(len: usize, alpha: f64) -> f64 {
    ((5.0 + len as f64) / 6.0).powf(alpha)
}

#[derive(Debug, Clone, Default)]
struct Search {
    tokens: Vec<u32>,
    score: f64,
    emitted: usize,
    finished: bool,
    passes: usize,
}

/// One token per pass with a causal mask.
fn ar_greedy(dec: &Decoder, p: &ParamStore<f32>, memory: &[f32], max_steps: usize, eos: u32, banned: &[u32]) -> Result<Search> {
    let mut cache = dec.start(p, memory, max_steps.max(1));
    let cols = dec.out_vocab();
    let mut s = Search::default();
    let mut input = TokenVocab::BOS;
    while s.emitted < max_steps {
        let logits = dec.step(p, &mut cache, &[input], &MaskKind::Causal)?;
        s.passes += 1;
        let lp = log_probs(&logits, cols, banned).remove(0);
        let t = kernels::argmax(&lp) as u32;
        s.score += lp[t as usize];
        s.emitted += 1;
        if t == eos {
            s.finished = true;
            break;
        }
        s.tokens.push(t);
        input = t;
    }
    Ok(s)
}

/// `k` tokens per pass: each pass reads the previous group and predicts
/// the next one under a group-causal mask.
fn sat_greedy(dec: &Decoder, p: &ParamStore<f32>, memory: &[f32], k: usize, max_len: usize) -> Result<Search> {
    let groups = max_len.div_ceil(k);
    let mut cache = dec.start(p, memory, (groups * k).max(1));
    let cols = dec.out_vocab();
    let mut s = Search::default();
    let mut input = vec![TokenVocab::BOS; k];
    let mask = MaskKind::GroupCausal(k);
    'outer: for _ in 0..groups {
        let logits = dec.step(p, &mut cache, &input, &mask)?;
        s.passes += 1;
        let mut group = Vec::with_capacity(k);
        for lp in log_probs(&logits, cols, TOKEN_BANNED) {
            let t = kernels::argmax(&lp) as u32;
            s.score += lp[t as usize];
            s.emitted += 1;
            if t == TokenVocab::EOS {
                s.finished = true;
                break 'outer;
            }
            s.tokens.push(t);
            group.push(t);
            if s.emitted == max_len {
                break 'outer;
            }
        }
        input = group;
    }
    Ok(s)
}

/// The `n` best assignments of a product of independent per-position
/// distributions, best first; ties prefer lexicographically smaller ids.
pub fn top_products(rows: &[Vec<f64>], n: usize) -> Vec<(f64, Vec<u32>)> {
    let mut best: Vec<(f64, Vec<u32>)> = vec![(0.0, Vec::new())];
    for row in rows {
        let mut ids: Vec<u32> = (0..row.len() as u32).filter(|&i| row[i as usize].is_finite()).collect();
        ids.sort_by(|&a, &b| row[b as usize].total_cmp(&row[a as usize]).then(a.cmp(&b)));
        ids.truncate(n);
        let mut next = Vec::with_capacity(best.len() * ids.len());
        for (score, prefix) in &best {
            for &i in &ids {
                let mut seq = prefix.clone();
                seq.push(i);
                next.push((score + row[i as usize], seq));
            }
        }
        next.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        next.truncate(n);
        best = next;
    }
    best
}

#[derive(Debug, Clone)]
struct Hyp {
    tokens: Vec<u32>,
    score: f64,
    emitted: usize,
    next: Vec<u32>,
}

/// Beam search emitting groups of `k` symbols per pass (`k = 1` is ordinary
/// autoregressive beam search). Live hypotheses are ranked by total
/// log-probability; finished ones by log-probability divided by
/// [`length_penalty`].
#[allow(clippy::too_many_arguments)]
fn group_beam(
    dec: &Decoder,
    p: &ParamStore<f32>,
    memory: &[f32],
    k: usize,
    beam: usize,
    max_len: usize,
    eos: u32,
    banned: &[u32],
    alpha: f64,
) -> Result<Search> {
    let steps = max_len.div_ceil(k);
    let mut cache = dec.start(p, memory, (steps * k).max(1));
    let cols = dec.out_vocab();
    let mask = if k == 1 { MaskKind::Causal } else { MaskKind::GroupCausal(k) };
    let mut live = vec![Hyp {
        tokens: Vec::new(),
        score: 0.0,
        emitted: 0,
        next: vec![TokenVocab::BOS; k],
    }];
    let mut finished: Vec<Hyp> = Vec::new();
    let mut exhausted: Vec<Hyp> = Vec::new();
    let mut passes = 0;
    for _ in 0..steps {
        let input: Vec<u32> = live.iter().flat_map(|h| h.next.iter().copied()).collect();
        let logits = dec.step(p, &mut cache, &input, &mask)?;
        passes += 1;
        let lp = log_probs(&logits, cols, banned);
        struct Cand {
            parent: usize,
            group: Vec<u32>,
            score: f64,
            eos: bool,
        }
        let mut cands: Vec<Cand> = Vec::new();
        for (h, hyp) in live.iter().enumerate() {
            let room = max_len - hyp.emitted;
            // A group cut at EOS or max_len keeps the score of its best full
            // product, which is its first occurrence in the ranked list.
            for (full_score, full) in top_products(&lp[h * k..(h + 1) * k], 2 * beam) {
                let cut = full.iter().position(|&t| t == eos).map_or(full.len(), |e| e + 1).min(room);
                let group = full[..cut].to_vec();
                if cands.iter().any(|c| c.parent == h && c.group == group) {
                    continue;
                }
                let score = hyp.score + full_score;
                let eos_hit = group.last() == Some(&eos);
                cands.push(Cand {
                    parent: h,
                    group,
                    score,
                    eos: eos_hit,
                });
            }
        }
        cands.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.parent.cmp(&b.parent))
                .then_with(|| a.group.cmp(&b.group))
        });
        let mut next: Vec<(usize, Hyp)> = Vec::new();
        for (rank, c) in cands.into_iter().enumerate() {
            let parent = &live[c.parent];
            let mut tokens = parent.tokens.clone();
            let emitted = parent.emitted + c.group.len();
            if c.eos {
                if rank < beam {
                    tokens.extend_from_slice(&c.group[..c.group.len() - 1]);
                    finished.push(Hyp {
                        tokens,
                        score: c.score,
                        emitted,
                        next: Vec::new(),
                    });
                }
            } else if next.len() < beam {
                tokens.extend_from_slice(&c.group);
                let hyp = Hyp {
                    tokens,
                    score: c.score,
                    emitted,
                    next: c.group,
                };
                next.push((c.parent, hyp));
            }
        }
        let (full, open): (Vec<_>, Vec<_>) = next.into_iter().partition(|(_, h)| h.emitted >= max_len);
        exhausted.extend(full.into_iter().map(|(_, h)| h));
        let (parents, next): (Vec<usize>, Vec<Hyp>) = open.into_iter().unzip();
        live = next;
        if finished.len() >= beam || live.is_empty() {
            break;
        }
        cache.reorder(&parents, dec.dims.dim);
    }
    exhausted.extend(live);
    let normalized = |h: &Hyp| h.score / length_penalty(h.emitted, alpha);
    let pick = |pool: &[Hyp]| {
        pool.iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| normalized(a).total_cmp(&normalized(b)).then(j.cmp(i)))
            .map(|(_, h)| h.clone())
    };
    let (best, done) = match pick(&finished) {
        Some(h) => (h, true),
        None => {
            let best = exhausted
                .iter()
                .max_by(|a, b| a.score.total_cmp(&b.score))
                .cloned()
                .ok_or_else(|| Error::Numerical("beam search produced no hypothesis".into()))?;
            (best, false)
        }
    };
    Ok(Search {
        tokens: best.tokens,
        score: best.score,
        emitted: best.emitted,
        finished: done,
        passes,
    })
}

impl Model {
    fn check_source(&self, src: &[u32]) -> Result<()> {
        if src.is_empty() {
            return Err(Error::Empty("source sentence"));
        }
        if let Some(&bad) = src.iter().find(|&&t| t as usize >= self.config.token_vocab) {
            return Err(Error::data(None, format!("source id {bad} outside the vocabulary")));
        }
        Ok(())
    }

    fn check_len(&self, max_len: usize) -> Result<()> {
        if max_len == 0 || max_len > self.config.max_len {
            return Err(Error::config(format!(
                "max_len must be in 1..={}, got {max_len}",
                self.config.max_len
            )));
        }
        Ok(())
    }

    /// Encoder output `[len, dim]` for one sentence.
    pub fn encode(&self, src: &[u32]) -> Result<Vec<f32>> {
        self.check_source(src)?;
        self.arch.encoder.apply(&self.params, src)
    }

    fn finish(&self, s: Search, start: Instant) -> DecodeResult {
        DecodeResult {
            tokens: s.tokens,
            log_score: s.score,
            emitted: s.emitted,
            passes: s.passes,
            truncated: !s.finished,
            elapsed_ns: start.elapsed().as_nanos() as u64,
            ..DecodeResult::default()
        }
    }

    fn require_token_ar(&self) -> Result<()> {
        if self.config.system == System::Synst {
            return Err(Error::config("token-level autoregressive decoding needs a vanilla or SAT model"));
        }
        Ok(())
    }

    /// Autoregressive greedy decoding; one pass per emitted token.
    pub fn greedy(&self, src: &[u32], max_len: usize) -> Result<DecodeResult> {
        let start = Instant::now();
        self.require_token_ar()?;
        self.check_len(max_len)?;
        let memory = self.encode(src)?;
        let s = ar_greedy(&self.arch.decoder, &self.params, &memory, max_len, TokenVocab::EOS, TOKEN_BANNED)?;
        Ok(self.finish(s, start))
    }

    /// Autoregressive beam search of width `beam`.
    pub fn beam(&self, src: &[u32], beam: usize, max_len: usize) -> Result<DecodeResult> {
        self.sat_beam(src, 1, beam, max_len)
    }

    /// Semi-autoregressive greedy decoding with groups of `k`.
    pub fn sat(&self, src: &[u32], k: usize, max_len: usize) -> Result<DecodeResult> {
        let start = Instant::now();
        self.require_token_ar()?;
        self.check_len(max_len)?;
        if k == 0 {
            return Err(Error::config("group size must be at least 1"));
        }
        let memory = self.encode(src)?;
        let s = sat_greedy(&self.arch.decoder, &self.params, &memory, k, max_len)?;
        Ok(self.finish(s, start))
    }

    /// Group beam search: exact top candidates over products of the `k`
    /// independent per-position distributions of each pass.
    pub fn sat_beam(&self, src: &[u32], k: usize, beam: usize, max_len: usize) -> Result<DecodeResult> {
        let start = Instant::now();
        self.require_token_ar()?;
        self.check_len(max_len)?;
        if k == 0 || beam == 0 {
            return Err(Error::config("group size and beam width must be at least 1"));
        }
        let memory = self.encode(src)?;
        let s = group_beam(
            &self.arch.decoder,
            &self.params,
            &memory,
            k,
            beam,
            max_len,
            TokenVocab::EOS,
            TOKEN_BANNED,
            self.config.length_alpha,
        )?;
        Ok(self.finish(s, start))
    }

    fn require_synst(&self, vocab: &ChunkVocab) -> Result<()> {
        if self.config.system != System::Synst {
            return Err(Error::config("chunk decoding needs a SynST model"));
        }
        if vocab.len() != self.config.chunk_vocab {
            return Err(Error::config(format!(
                "chunk vocabulary has {} entries, model expects {}",
                vocab.len(),
                self.config.chunk_vocab
            )));
        }
        Ok(())
    }

    /// Two-stage decoding: the parse decoder emits chunk ids (greedy when
    /// `beam` is 1), then the token decoder fills every MASK in one pass.
    pub fn synst(&self, src: &[u32], vocab: &ChunkVocab, opts: &DecodeOptions) -> Result<DecodeResult> {
        self.synst_with(src, vocab, opts, opts.beam > 1)
    }

    /// [`Model::synst`] with the parse decoder always running beam search,
    /// even at width 1.
    pub fn synst_beam(&self, src: &[u32], vocab: &ChunkVocab, opts: &DecodeOptions) -> Result<DecodeResult> {
        self.synst_with(src, vocab, opts, true)
    }

    fn synst_with(&self, src: &[u32], vocab: &ChunkVocab, opts: &DecodeOptions, beam: bool) -> Result<DecodeResult> {
        let start = Instant::now();
        if opts.beam == 0 {
            return Err(Error::config("beam width must be at least 1"));
        }
        self.require_synst(vocab)?;
        self.check_len(opts.max_len)?;
        if opts.max_chunks == 0 || opts.max_chunks > self.config.max_len {
            return Err(Error::config("max_chunks must be in 1..=max_len"));
        }
        self.check_source(src)?;
        let token_memory = self.arch.encoder.apply(&self.params, src)?;
        let parse_memory = match &self.arch.parse_encoder {
            Some(enc) => enc.apply(&self.params, src)?,
            None => token_memory.clone(),
        };
        let pd = self.arch.parse_decoder.as_ref().expect("synst has a parse decoder");
        let s = if !beam {
            ar_greedy(pd, &self.params, &parse_memory, opts.max_chunks, ChunkVocab::EOS, CHUNK_BANNED)?
        } else {
            group_beam(
                pd,
                &self.params,
                &parse_memory,
                1,
                opts.beam,
                opts.max_chunks,
                ChunkVocab::EOS,
                CHUNK_BANNED,
                self.config.length_alpha,
            )?
        };
        let mut result = DecodeResult {
            log_score: s.score,
            emitted: s.emitted,
            passes: s.passes,
            truncated: !s.finished,
            ..DecodeResult::default()
        };
        let mut total = 0;
        for &c in &s.tokens {
            let size = vocab.chunk(c).map_or(0, |c| c.size);
            if size == 0 || total + size > opts.max_len {
                result.truncated = true;
                break;
            }
            total += size;
            result.chunks.push(c);
        }
        self.fill(&token_memory, vocab, &mut result)?;
        result.elapsed_ns = start.elapsed().as_nanos() as u64;
        Ok(result)
    }

    /// Token decoding from given chunk ids, skipping the parse decoder.
    pub fn synst_gold(&self, src: &[u32], vocab: &ChunkVocab, chunks: &[u32]) -> Result<DecodeResult> {
        let start = Instant::now();
        self.require_synst(vocab)?;
        if chunks.iter().any(|&c| vocab.chunk(c).is_none()) {
            return Err(Error::data(None, "gold chunk id outside the chunk vocabulary"));
        }
        let memory = self.encode(src)?;
        let mut result = DecodeResult {
            chunks: chunks.to_vec(),
            ..DecodeResult::default()
        };
        self.fill(&memory, vocab, &mut result)?;
        result.elapsed_ns = start.elapsed().as_nanos() as u64;
        Ok(result)
    }

    /// The one non-autoregressive pass: its input is fixed before any
    /// token is predicted and predictions are never fed back.
    fn fill(&self, memory: &[f32], vocab: &ChunkVocab, result: &mut DecodeResult) -> Result<()> {
        if result.chunks.is_empty() {
            result.empty = true;
            return Ok(());
        }
        let sizes: Vec<usize> = result.chunks.iter().map(|&c| vocab.chunk(c).map_or(0, |c| c.size)).collect();
        let expanded = expand_chunk_ids(&result.chunks, &sizes, self.config.token_vocab as u32);
        let dec = &self.arch.decoder;
        let logits = dec.apply(&self.params, memory, &expanded.ids, &MaskKind::Full)?;
        result.passes += 1;
        result.token_passes += 1;
        let lp = log_probs(&logits, dec.out_vocab(), FILL_BANNED);
        for &pos in &expanded.mask_positions {
            let t = kernels::argmax(&lp[pos]) as u32;
            result.log_score += lp[pos][t as usize];
            result.tokens.push(t);
        }
        result.decoder_input = expanded.ids;
        Ok(())
    }

    /// Decodes with the system's default procedure.
    pub fn decode(&self, src: &[u32], chunk_vocab: Option<&ChunkVocab>, opts: &DecodeOptions) -> Result<DecodeResult> {
        match self.config.system {
            System::Vanilla if opts.beam == 1 => self.greedy(src, opts.max_len),
            System::Vanilla => self.beam(src, opts.beam, opts.max_len),
            System::Sat if opts.beam == 1 => self.sat(src, self.config.k, opts.max_len),
            System::Sat => self.sat_beam(src, self.config.k, opts.beam, opts.max_len),
            System::Synst => {
                let vocab = chunk_vocab.ok_or_else(|| Error::config("SynST decoding needs a chunk vocabulary"))?;
                self.synst(src, vocab, opts)
            }
        }
    }
}
