use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::{Rng, RngCore};

use super::tree::ParseTree;
use crate::error::{Error, Result};

/// Label used for every chunk once constituent types are stripped.
pub const SENTINEL_LABEL: &str = "#";

/// Counts how many target tokens a leaf contributes to a chunk.
pub trait LeafSizer {
    fn leaf_size(&self, token: &str) -> usize;
}

/// One token per word.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordSizer;

impl LeafSizer for WordSizer {
    fn leaf_size(&self, _token: &str) -> usize {
        1
    }
}

impl<F: Fn(&str) -> usize> LeafSizer for F {
    fn leaf_size(&self, token: &str) -> usize {
        self(token)
    }
}

/// A constituent label paired with the number of target tokens it spans.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChunkId {
    pub label: String,
    pub size: usize,
}

impl ChunkId {
    pub fn new(label: impl Into<String>, size: usize) -> Self {
        Self {
            label: label.into(),
            size,
        }
    }
}

impl fmt::Display for ChunkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.label, self.size)
    }
}

impl std::str::FromStr for ChunkId {
    type Err = Error;

    /// The size is the maximal trailing run of ASCII digits.
    fn from_str(s: &str) -> Result<Self> {
        let split = s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        let (label, digits) = s.split_at(split);
        let bad = |message: &str| Error::Parse {
            offset: 1,
            message: format!("chunk identifier {s:?}: {message}"),
        };
        if label.is_empty() {
            return Err(bad("missing label"));
        }
        let size: usize = digits.parse().map_err(|_| bad("missing size"))?;
        if size == 0 {
            return Err(bad("size must be positive"));
        }
        Ok(ChunkId::new(label, size))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ChunkSequence {
    pub chunks: Vec<ChunkId>,
}

impl ChunkSequence {
    pub fn new(chunks: Vec<ChunkId>) -> Self {
        Self { chunks }
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn total_size(&self) -> usize {
        self.chunks.iter().map(|c| c.size).sum()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ChunkId> {
        self.chunks.iter()
    }

    /// Parses the space-separated `label+size` line format.
    pub fn parse_line(line: &str) -> Result<Self> {
        line.split_whitespace()
            .map(str::parse)
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn to_line(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ChunkSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.chunks.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromIterator<ChunkId> for ChunkSequence {
    fn from_iter<I: IntoIterator<Item = ChunkId>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// Walks the tree depth-first from the root. A node whose span (in sizer
/// units) fits into `k` is emitted as one chunk and its subtree skipped;
/// otherwise the walk descends into its children left to right. Unary
/// chains therefore take the label of the highest fitting node.
///
/// A single leaf larger than `k` cannot be split without breaking mask
/// alignment, so it is emitted as an oversize chunk with a warning.
pub fn extract_chunks(tree: &ParseTree, k: usize, sizer: &dyn LeafSizer) -> ChunkSequence {
    assert!(k >= 1, "max chunk size must be positive");
    let nodes = tree.preorder();
    let spans = preorder_spans(tree, sizer);
    let mut chunks = Vec::new();
    let mut i = 0;
    while i < nodes.len() {
        let node = nodes[i];
        let (span, subtree_len) = spans[i];
        if span <= k || node.is_leaf() {
            if span > k {
                log::warn!(
                    "leaf {:?} spans {span} tokens, more than k={k}; emitting oversize chunk",
                    node.token().unwrap_or_default()
                );
            }
            chunks.push(ChunkId::new(node.label(), span));
            i += subtree_len;
        } else {
            i += 1;
        }
    }
    ChunkSequence::new(chunks)
}

/// (token span, number of pre-order nodes in the subtree) for every node in
/// pre-order.
fn preorder_spans(tree: &ParseTree, sizer: &dyn LeafSizer) -> Vec<(usize, usize)> {
    fn walk(node: &ParseTree, sizer: &dyn LeafSizer, out: &mut Vec<(usize, usize)>) -> (usize, usize) {
        let slot = out.len();
        out.push((0, 0));
        let entry = match node.token() {
            Some(tok) => (sizer.leaf_size(tok).max(1), 1),
            None => node.children().iter().fold((0, 1), |(span, len), child| {
                let (s, l) = walk(child, sizer, out);
                (span + s, len + l)
            }),
        };
        out[slot] = entry;
        entry
    }
    let mut out = Vec::new();
    walk(tree, sizer, &mut out);
    out
}

/// Total sizer units over all leaves.
pub fn sized_length(tree: &ParseTree, sizer: &dyn LeafSizer) -> usize {
    tree.tokens().iter().map(|t| sizer.leaf_size(t).max(1)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkingMode {
    /// Always use the configured `k`.
    Fixed,
    /// `min(k, floor(sqrt(T)))`, at least 1, for target length `T`.
    SqrtCapped,
    /// Uniform draw from `1..=k` per sentence.
    Random,
}

impl std::str::FromStr for ChunkingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "sqrt-capped" | "sqrt" => Ok(Self::SqrtCapped),
            "random" => Ok(Self::Random),
            other => Err(Error::config(format!("unknown chunking mode {other:?}"))),
        }
    }
}

impl fmt::Display for ChunkingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Fixed => "fixed",
            Self::SqrtCapped => "sqrt-capped",
            Self::Random => "random",
        })
    }
}

pub fn effective_k(k: usize, target_len: usize, mode: ChunkingMode, rng: &mut dyn RngCore) -> usize {
    assert!(k >= 1, "max chunk size must be positive");
    match mode {
        ChunkingMode::Fixed => k,
        ChunkingMode::SqrtCapped => k.min(isqrt(target_len)).max(1),
        ChunkingMode::Random => rng.gen_range(1..=k),
    }
}

fn isqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

pub fn extract_chunks_adaptive(
    tree: &ParseTree,
    k: usize,
    target_len: usize,
    mode: ChunkingMode,
    sizer: &dyn LeafSizer,
    rng: &mut dyn RngCore,
) -> ChunkSequence {
    extract_chunks(tree, effective_k(k, target_len, mode, rng), sizer)
}

pub fn strip_labels(seq: &ChunkSequence) -> ChunkSequence {
    seq.iter()
        .map(|c| ChunkId::new(SENTINEL_LABEL, c.size))
        .collect()
}

/// Aggregate chunk-size statistics over a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkSizeStats {
    pub total_size: usize,
    pub chunk_count: usize,
}

impl ChunkSizeStats {
    pub fn mean(&self) -> f64 {
        self.total_size as f64 / self.chunk_count as f64
    }
}

pub fn chunk_size_stats<'a>(corpus: impl IntoIterator<Item = &'a ChunkSequence>) -> Result<ChunkSizeStats> {
    let stats = corpus
        .into_iter()
        .fold(ChunkSizeStats { total_size: 0, chunk_count: 0 }, |acc, seq| {
            ChunkSizeStats {
                total_size: acc.total_size + seq.total_size(),
                chunk_count: acc.chunk_count + seq.len(),
            }
        });
    if stats.chunk_count == 0 {
        return Err(Error::Empty("chunk corpus"));
    }
    Ok(stats)
}

pub fn average_chunk_size<'a>(corpus: impl IntoIterator<Item = &'a ChunkSequence>) -> Result<f64> {
    chunk_size_stats(corpus).map(|s| s.mean())
}

/// Bijection between chunk identifiers and dense integer ids.
///
/// Ids 0..3 are reserved for PAD, BOS and EOS. The regular entries are
/// every observed label crossed with sizes `1..=k` (in sorted order),
/// followed by any oversize identifiers observed, so the vocabulary has at
/// most `|P| * k` regular entries when no leaf exceeds `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkVocab {
    entries: Vec<ChunkId>,
    index: HashMap<ChunkId, u32>,
}

impl ChunkVocab {
    pub const PAD: u32 = 0;
    pub const BOS: u32 = 1;
    pub const EOS: u32 = 2;
    pub const SPECIALS: usize = 3;
    const SPECIAL_NAMES: [&'static str; 3] = ["<pad>", "<s>", "</s>"];

    pub fn build<'a>(k: usize, corpus: impl IntoIterator<Item = &'a ChunkSequence>) -> Self {
        let mut labels = BTreeSet::new();
        let mut oversize = BTreeSet::new();
        for seq in corpus {
            for c in seq.iter() {
                labels.insert(c.label.clone());
                if c.size > k {
                    oversize.insert(c.clone());
                }
            }
        }
        let entries = labels
            .iter()
            .flat_map(|l| (1..=k).map(move |s| ChunkId::new(l.clone(), s)))
            .chain(oversize)
            .collect();
        Self::from_entries(entries)
    }

    pub fn from_entries(entries: Vec<ChunkId>) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), (i + Self::SPECIALS) as u32))
            .collect();
        Self { entries, index }
    }

    pub fn len(&self) -> usize {
        self.entries.len() + Self::SPECIALS
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn regular_len(&self) -> usize {
        self.entries.len()
    }

    pub fn id(&self, chunk: &ChunkId) -> Option<u32> {
        self.index.get(chunk).copied()
    }

    pub fn chunk(&self, id: u32) -> Option<&ChunkId> {
        (id as usize)
            .checked_sub(Self::SPECIALS)
            .and_then(|i| self.entries.get(i))
    }

    pub fn encode(&self, seq: &ChunkSequence) -> Result<Vec<u32>> {
        seq.iter()
            .map(|c| {
                self.id(c)
                    .ok_or_else(|| Error::data(None, format!("chunk {c} not in chunk vocabulary")))
            })
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> ChunkSequence {
        ids.iter().filter_map(|&i| self.chunk(i).cloned()).collect()
    }

    pub fn symbol(&self, id: u32) -> String {
        match self.chunk(id) {
            Some(c) => c.to_string(),
            None => Self::SPECIAL_NAMES
                .get(id as usize)
                .map_or_else(|| format!("<unk:{id}>"), |s| s.to_string()),
        }
    }

    /// One identifier per line; line `n` holds id `n + SPECIALS`.
    pub fn to_text(&self) -> String {
        self.entries.iter().map(|c| format!("{c}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse())
            .collect::<Result<Vec<_>>>()
            .map(Self::from_entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::parse_bracketed;
    use rand::SeedableRng;

    const STORE: &str = "(S (NP (DT the) (NN man)) (VP (VBD went) (PP (IN to) (NP (DT the) (NN store)))))";

    fn seq(s: &str) -> ChunkSequence {
        ChunkSequence::parse_line(s).unwrap()
    }

    #[test]
    fn hand_traced_store_sentence() {
        let t = parse_bracketed(STORE).unwrap();
        assert_eq!(extract_chunks(&t, 3, &WordSizer), seq("NP2 VBD1 PP3"));
        assert_eq!(extract_chunks(&t, 6, &WordSizer), seq("S6"));
        assert_eq!(extract_chunks(&t, 1, &WordSizer), seq("DT1 NN1 VBD1 IN1 DT1 NN1"));
        assert_eq!(extract_chunks(&t, 2, &WordSizer), seq("NP2 VBD1 IN1 NP2"));
    }

    #[test]
    fn unary_chain_takes_highest_label() {
        let t = parse_bracketed("(S (NP (NN dogs)) (VP (VBD ran)))").unwrap();
        assert_eq!(extract_chunks(&t, 1, &WordSizer), seq("NP1 VP1"));
    }

    #[test]
    fn subword_sizer_counts_pieces() {
        let t = parse_bracketed("(S (NP (DT the) (NN storekeeper)) (VP (VBD left)))").unwrap();
        let pieces = |w: &str| if w == "storekeeper" { 3 } else { 1 };
        assert_eq!(extract_chunks(&t, 4, &pieces), seq("NP4 VP1"));
        assert_eq!(extract_chunks(&t, 2, &pieces), seq("DT1 NN3 VP1"));
        assert_eq!(sized_length(&t, &pieces), 5);
    }

    #[test]
    fn sqrt_capped_and_random_modes() {
        let mut rng = crate::rng::Rng::seed_from_u64(1);
        assert_eq!(effective_k(6, 4, ChunkingMode::SqrtCapped, &mut rng), 2);
        assert_eq!(effective_k(6, 100, ChunkingMode::SqrtCapped, &mut rng), 6);
        assert_eq!(effective_k(6, 0, ChunkingMode::SqrtCapped, &mut rng), 1);
        assert_eq!(effective_k(6, 3, ChunkingMode::SqrtCapped, &mut rng), 1);
        let t = parse_bracketed(STORE).unwrap();
        let run = |seed| {
            let mut rng = crate::rng::Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| extract_chunks_adaptive(&t, 6, 6, ChunkingMode::Random, &WordSizer, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));
        for _ in 0..100 {
            let k = effective_k(6, 10, ChunkingMode::Random, &mut rng);
            assert!((1..=6).contains(&k));
        }
    }

    #[test]
    fn strip_labels_examples() {
        assert_eq!(strip_labels(&seq("NP3 VP2 PP4")).to_line(), "#3 #2 #4");
        assert_eq!(strip_labels(&seq("")), seq(""));
        assert_eq!(strip_labels(&seq("S6")).to_line(), "#6");
    }

    #[test]
    fn average_chunk_size_examples() {
        assert_eq!(average_chunk_size([&seq("NP2 VBD1 PP3")]).unwrap(), 2.0);
        assert_eq!(average_chunk_size([&seq("DT1 NN1"), &seq("VB1")]).unwrap(), 1.0);
        assert_eq!(average_chunk_size([&seq("S6")]).unwrap(), 6.0);
        assert!(average_chunk_size(std::iter::empty()).is_err());
        assert!(average_chunk_size([&seq("")]).is_err());
    }

    #[test]
    fn chunk_id_round_trip_and_errors() {
        let c: ChunkId = "NP12".parse().unwrap();
        assert_eq!(c, ChunkId::new("NP", 12));
        assert_eq!("#3".parse::<ChunkId>().unwrap().label, "#");
        assert!("NP".parse::<ChunkId>().is_err());
        assert!("3".parse::<ChunkId>().is_err());
        assert!("NP0".parse::<ChunkId>().is_err());
    }

    #[test]
    fn vocab_is_bounded_and_bijective() {
        let corpus = [seq("NP2 VBD1 PP3"), seq("NP1 VP4")];
        let v = ChunkVocab::build(4, &corpus);
        // labels {NP, PP, VBD, VP} x sizes 1..=4
        assert_eq!(v.regular_len(), 16);
        assert!(v.regular_len() <= 4 * 4);
        for id in ChunkVocab::SPECIALS as u32..v.len() as u32 {
            assert_eq!(v.id(v.chunk(id).unwrap()), Some(id));
        }
        let ids = v.encode(&corpus[0]).unwrap();
        assert_eq!(v.decode(&ids), corpus[0]);
        assert!(v.encode(&seq("ADJP1")).is_err());
        assert_eq!(ChunkVocab::from_text(&v.to_text()).unwrap(), v);
        assert_eq!(v.symbol(ChunkVocab::EOS), "</s>");
    }

    #[test]
    fn oversize_entries_are_appended() {
        let v = ChunkVocab::build(2, [&seq("NN5 DT1")]);
        assert_eq!(v.regular_len(), 2 * 2 + 1);
        assert!(v.id(&ChunkId::new("NN", 5)).is_some());
    }
}
