//! Constituency-parse ingestion and chunk-sequence extraction.

mod chunk;
mod tree;

pub use chunk::{
    average_chunk_size, chunk_size_stats, effective_k, extract_chunks, extract_chunks_adaptive,
    sized_length, strip_labels, ChunkId, ChunkSequence, ChunkSizeStats, ChunkVocab, ChunkingMode,
    LeafSizer, WordSizer, SENTINEL_LABEL,
};
pub use tree::{parse_bracketed, ParseTree};
