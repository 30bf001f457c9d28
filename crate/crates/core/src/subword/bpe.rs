use std::collections::{BTreeMap, HashMap, HashSet};

use super::vocab::TokenVocab;
use crate::error::{Error, Result};
use crate::treebank::LeafSizer;

/// Continuation marker appended to every non-final piece of a word.
pub const MARKER: &str = "@@";
/// Internal end-of-word suffix used while learning and applying merges.
const END: &str = "</w>";
const UNK_SYMBOL: &str = "<unk>";

/// Learned merge rules plus the subword vocabulary they induce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
    alphabet: HashSet<char>,
    vocab: TokenVocab,
}

#[derive(Debug, Clone, Copy)]
pub struct BpeTrainer {
    pub num_merges: usize,
    /// Pairs seen fewer times than this are never merged.
    pub min_frequency: usize,
}

impl BpeTrainer {
    pub fn new(num_merges: usize) -> Self {
        Self {
            num_merges,
            min_frequency: 2,
        }
    }

    /// Greedy most-frequent-pair merging over word types weighted by
    /// frequency. Ties go to the lexicographically smallest pair.
    pub fn train<'a, I>(&self, words: I) -> Result<BpeModel>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for w in words {
            *counts.entry(w).or_default() += 1;
        }
        if counts.is_empty() {
            return Err(Error::Empty("BPE training corpus"));
        }
        let alphabet: HashSet<char> = counts.keys().flat_map(|w| w.chars()).collect();
        let mut types: Vec<(Vec<String>, usize)> = counts
            .iter()
            .map(|(w, &c)| (initial_symbols(w, &alphabet), c))
            .collect();

        let mut merges = Vec::with_capacity(self.num_merges);
        while merges.len() < self.num_merges {
            let mut pair_counts: HashMap<(&str, &str), usize> = HashMap::new();
            for (symbols, c) in &types {
                for w in symbols.windows(2) {
                    *pair_counts.entry((&w[0], &w[1])).or_default() += c;
                }
            }
            let best = pair_counts
                .into_iter()
                .filter(|&(_, c)| c >= self.min_frequency.max(1))
                .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)));
            let Some(((l, r), _)) = best else { break };
            let pair = (l.to_string(), r.to_string());
            for (symbols, _) in &mut types {
                merge_pair(symbols, &pair.0, &pair.1);
            }
            merges.push(pair);
        }

        let mut model = BpeModel::from_merges(merges, alphabet);
        let mut piece_counts: HashMap<String, usize> = HashMap::new();
        for (w, &c) in &counts {
            for p in model.encode(w) {
                *piece_counts.entry(p).or_default() += c;
            }
        }
        let mut pieces: Vec<(String, usize)> = piece_counts.into_iter().collect();
        pieces.sort_by(|(pa, ca), (pb, cb)| cb.cmp(ca).then_with(|| pa.cmp(pb)));
        model.vocab = TokenVocab::from_pieces(pieces.into_iter().map(|(p, _)| p));
        Ok(model)
    }
}

pub fn bpe_train<'a>(corpus: impl IntoIterator<Item = &'a str>, num_merges: usize) -> Result<BpeModel> {
    BpeTrainer::new(num_merges).train(corpus)
}

fn initial_symbols(word: &str, alphabet: &HashSet<char>) -> Vec<String> {
    let n = word.chars().count();
    word.chars()
        .enumerate()
        .map(|(i, ch)| {
            let mut s = if alphabet.contains(&ch) {
                ch.to_string()
            } else {
                UNK_SYMBOL.to_string()
            };
            if i + 1 == n {
                s.push_str(END);
            }
            s
        })
        .collect()
}

fn merge_pair(symbols: &mut Vec<String>, left: &str, right: &str) {
    let mut i = 0;
    while i + 1 < symbols.len() {
        if symbols[i] == left && symbols[i + 1] == right {
            let r = symbols.remove(i + 1);
            symbols[i].push_str(&r);
        }
        i += 1;
    }
}

impl BpeModel {
    fn from_merges(merges: Vec<(String, String)>, alphabet: HashSet<char>) -> Self {
        let ranks = merges
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        Self {
            merges,
            ranks,
            alphabet,
            vocab: TokenVocab::from_pieces(std::iter::empty()),
        }
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn vocab(&self) -> &TokenVocab {
        &self.vocab
    }

    pub fn set_vocab(&mut self, vocab: TokenVocab) {
        self.vocab = vocab;
    }

    /// Splits into characters, then repeatedly applies the lowest-ranked
    /// applicable merge. Non-final pieces carry the `@@` marker.
    pub fn encode(&self, word: &str) -> Vec<String> {
        if word.is_empty() {
            return Vec::new();
        }
        let mut symbols = initial_symbols(word, &self.alphabet);
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())))
                .min()
                .copied();
            let Some(rank) = best else { break };
            let (l, r) = &self.merges[rank];
            merge_pair(&mut symbols, l, r);
        }
        let n = symbols.len();
        symbols
            .into_iter()
            .enumerate()
            .map(|(i, mut s)| {
                if i + 1 == n {
                    s.truncate(s.len() - END.len());
                } else {
                    s.push_str(MARKER);
                }
                s
            })
            .collect()
    }

    pub fn encode_sentence(&self, words: &[&str]) -> Vec<String> {
        words.iter().flat_map(|w| self.encode(w)).collect()
    }

    pub fn encode_ids(&self, words: &[&str]) -> Vec<u32> {
        self.vocab.ids(&self.encode_sentence(words))
    }

    /// Merges marked pieces into words and joins the words with spaces.
    pub fn decode<S: AsRef<str>>(&self, pieces: &[S]) -> Result<String> {
        decode_words(pieces).map(|w| w.join(" "))
    }

    /// Merge rules, one `left right` pair per line in rule order.
    pub fn merges_text(&self) -> String {
        self.merges.iter().map(|(l, r)| format!("{l} {r}\n")).collect()
    }

    pub fn from_parts(merges_text: &str, vocab: TokenVocab) -> Result<Self> {
        let mut merges = Vec::new();
        for (n, line) in merges_text.lines().enumerate() {
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                    merges.push((l.to_string(), r.to_string()))
                }
                _ => return Err(Error::data(Some(n + 1), format!("malformed merge rule {line:?}"))),
            }
        }
        let mut alphabet: HashSet<char> = HashSet::new();
        for (l, r) in &merges {
            for s in [l, r] {
                alphabet.extend(s.trim_end_matches(END).chars());
            }
        }
        for id in TokenVocab::SPECIALS..vocab.len() {
            let piece = vocab.piece(id as u32).unwrap_or_default();
            alphabet.extend(piece.trim_end_matches(MARKER).chars());
        }
        let mut model = Self::from_merges(merges, alphabet);
        model.vocab = vocab;
        Ok(model)
    }
}

impl LeafSizer for BpeModel {
    fn leaf_size(&self, token: &str) -> usize {
        self.encode(token).len().max(1)
    }
}

/// Strict inverse of the marker convention: a trailing `@@` on the final
/// piece is an error.
pub fn decode_words<S: AsRef<str>>(pieces: &[S]) -> Result<Vec<String>> {
    let mut words = Vec::new();
    let mut current = String::new();
    for p in pieces {
        let p = p.as_ref();
        match p.strip_suffix(MARKER) {
            Some(stem) => current.push_str(stem),
            None => {
                current.push_str(p);
                words.push(std::mem::take(&mut current));
            }
        }
    }
    if !current.is_empty() || pieces.last().is_some_and(|p| p.as_ref().ends_with(MARKER)) {
        return Err(Error::data(None, "dangling continuation marker at end of sequence"));
    }
    Ok(words)
}

/// Like [`decode_words`] but tolerates a dangling marker, as produced by
/// imperfect model output.
pub fn decode_lenient<S: AsRef<str>>(pieces: &[S]) -> String {
    let mut out = String::new();
    for p in pieces {
        let p = p.as_ref();
        match p.strip_suffix(MARKER) {
            Some(stem) => out.push_str(stem),
            None => {
                out.push_str(p);
                out.push(' ');
            }
        }
    }
    out.trim_end().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_merge_is_most_frequent_pair() {
        let m = bpe_train("aaab aaab".split(' '), 1).unwrap();
        assert_eq!(m.merges(), &[("a".to_string(), "a".to_string())]);
        assert_eq!(m.encode("aaab"), vec!["aa@@", "a@@", "b"]);
    }

    #[test]
    fn zero_merges_is_character_level() {
        let m = bpe_train("hello world".split(' '), 0).unwrap();
        assert!(m.merges().is_empty());
        assert_eq!(m.encode("hello"), vec!["h@@", "e@@", "l@@", "l@@", "o"]);
    }

    #[test]
    fn single_character_corpus_has_no_merges() {
        let m = bpe_train(["a", "a", "a"], 10).unwrap();
        assert!(m.merges().is_empty());
        assert_eq!(m.encode("a"), vec!["a"]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(bpe_train(std::iter::empty(), 3).is_err());
    }

    #[test]
    fn ties_break_lexicographically() {
        // (a,b) and (c,d</w>) both occur once per word
        let m = BpeTrainer { num_merges: 1, min_frequency: 1 }.train(["abcd"]).unwrap();
        assert_eq!(m.merges()[0], ("a".to_string(), "b".to_string()));
    }

    #[test]
    fn decode_examples() {
        let m = bpe_train(["x"], 0).unwrap();
        assert_eq!(m.decode(&["ign@@", "ores"]).unwrap(), "ignores");
        assert_eq!(m.decode(&["be@@", "foreh@@", "and"]).unwrap(), "beforehand");
        assert_eq!(m.decode(&["ign@@", "ores", "them"]).unwrap(), "ignores them");
        assert!(m.decode(&["ign@@"]).is_err());
        assert_eq!(decode_lenient(&["ign@@", "it", "the@@"]), "ignit the");
    }

    #[test]
    fn unknown_characters_become_unk() {
        let m = bpe_train(["abc"], 5).unwrap();
        let pieces = m.encode("axc");
        assert_eq!(pieces.len(), 3);
        assert_eq!(m.vocab().ids(&pieces)[1], TokenVocab::UNK);
    }

    #[test]
    fn merges_file_round_trip() {
        let words = "the cat sat on the mat with the other cat".split(' ');
        let m = bpe_train(words, 12).unwrap();
        let back = BpeModel::from_parts(&m.merges_text(), m.vocab().clone()).unwrap();
        for w in ["the", "cat", "mat", "other", "hat"] {
            assert_eq!(back.encode(w), m.encode(w));
        }
        assert!(BpeModel::from_parts("a b c\n", m.vocab().clone()).is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(words in prop::collection::vec("[a-f]{1,8}", 1..40), merges in 0usize..40) {
            let m = BpeTrainer { num_merges: merges, min_frequency: 1 }
                .train(words.iter().map(String::as_str))
                .unwrap();
            for w in &words {
                let pieces = m.encode(w);
                prop_assert!(!pieces.is_empty());
                prop_assert_eq!(m.leaf_size(w), pieces.len());
                prop_assert_eq!(&m.decode(&pieces).unwrap(), w);
                prop_assert!(m.vocab().ids(&pieces).iter().all(|&i| i != TokenVocab::UNK));
            }
        }
    }
}
