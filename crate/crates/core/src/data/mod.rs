//! Aligned corpora, subword encoding and chunk extraction into training
//! examples.

pub mod toy;

use crate::error::{Error, Result};
use crate::models::Example;
use crate::rng::SeedStreams;
use crate::subword::{BpeModel, BpeTrainer};
use crate::treebank::{extract_chunks_adaptive, strip_labels, ChunkSequence, ChunkVocab, ChunkingMode, LeafSizer, ParseTree, WordSizer};

pub use toy::{copy_task, generate, ToyConfig, ToyPair};

/// Source words, target words and the target parse of one sentence pair.
pub type Pair = ToyPair;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkOptions {
    pub k: usize,
    pub mode: ChunkingMode,
    pub strip_labels: bool,
    /// Measure chunks in words instead of subword pieces.
    pub word_sizer: bool,
}

impl Default for ChunkOptions {
    fn default() -> Self {
        Self {
            k: 6,
            mode: ChunkingMode::Fixed,
            strip_labels: false,
            word_sizer: false,
        }
    }
}

/// Checks that every parse covers exactly its target words.
pub fn validate_pairs(pairs: &[Pair]) -> Result<()> {
    for (i, p) in pairs.iter().enumerate() {
        if p.source.is_empty() {
            return Err(Error::data(Some(i + 1), "empty source sentence"));
        }
        let leaves = p.parse.tokens();
        if leaves.len() != p.target.len() || leaves.iter().zip(&p.target).any(|(a, b)| a != b) {
            return Err(Error::data(Some(i + 1), "parse leaves do not match the target sentence"));
        }
    }
    Ok(())
}

/// Shared source and target subword model.
pub fn learn_bpe(pairs: &[Pair], merges: usize) -> Result<BpeModel> {
    BpeTrainer::new(merges).train(
        pairs
            .iter()
            .flat_map(|p| p.source.iter().chain(&p.target).map(String::as_str)),
    )
}

pub fn chunk_tree(tree: &ParseTree, bpe: &BpeModel, opts: &ChunkOptions, rng: &mut dyn rand::RngCore) -> ChunkSequence {
    let sizer: &dyn LeafSizer = if opts.word_sizer { &WordSizer } else { bpe };
    chunk_tree_sized(tree, sizer, opts, rng)
}

/// Like [`chunk_tree`] with an explicit sizer; `opts.word_sizer` is ignored.
pub fn chunk_tree_sized(tree: &ParseTree, sizer: &dyn LeafSizer, opts: &ChunkOptions, rng: &mut dyn rand::RngCore) -> ChunkSequence {
    let len = crate::treebank::sized_length(tree, sizer);
    let seq = extract_chunks_adaptive(tree, opts.k, len, opts.mode, sizer, rng);
    if opts.strip_labels {
        strip_labels(&seq)
    } else {
        seq
    }
}

/// Chunk sequences for a split. Random chunk sizes are drawn per sentence
/// from the `chunking` stream indexed by `epoch`.
pub fn chunk_split(pairs: &[Pair], bpe: &BpeModel, opts: &ChunkOptions, seed: u64, epoch: u64) -> Vec<ChunkSequence> {
    let sizer: &dyn LeafSizer = if opts.word_sizer { &WordSizer } else { bpe };
    chunk_split_sized(pairs, sizer, opts, seed, epoch)
}

pub fn chunk_split_sized(pairs: &[Pair], sizer: &dyn LeafSizer, opts: &ChunkOptions, seed: u64, epoch: u64) -> Vec<ChunkSequence> {
    let mut rng = SeedStreams::new(seed).indexed("chunking", epoch);
    pairs.iter().map(|p| chunk_tree_sized(&p.parse, sizer, opts, &mut rng)).collect()
}

pub fn build_examples(pairs: &[Pair], bpe: &BpeModel, chunks: Option<(&[ChunkSequence], &ChunkVocab)>) -> Result<Vec<Example>> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let src = bpe.encode_ids(&p.source.iter().map(String::as_str).collect::<Vec<_>>());
            let tgt = bpe.encode_ids(&p.target.iter().map(String::as_str).collect::<Vec<_>>());
            let (chunk_ids, sizes) = match chunks {
                Some((seqs, vocab)) => {
                    let seq = &seqs[i];
                    let sizes: Vec<usize> = seq.iter().map(|c| c.size).collect();
                    let ids = vocab
                        .encode(seq)
                        .map_err(|e| Error::data(Some(i + 1), e.to_string()))?;
                    (ids, sizes)
                }
                None => (Vec::new(), Vec::new()),
            };
            let ex = Example {
                line: i + 1,
                src,
                tgt,
                chunks: chunk_ids,
                chunk_sizes: sizes,
            };
            if chunks.is_some() {
                crate::models::check_example(&ex, crate::models::System::Synst)?;
            }
            Ok(ex)
        })
        .collect()
}

/// Target words from BPE ids, tolerating a dangling continuation marker.
pub fn detokenize(bpe: &BpeModel, ids: &[u32]) -> Vec<String> {
    let pieces = bpe.vocab().pieces_for(ids);
    crate::subword::decode_lenient(&pieces)
        .split_whitespace()
        .map(str::to_string)
        .collect()
}
