//! Synthetic template-translation corpora with target-side parses.
//!
//! The source language is verb-final with postpositions and explicit case
//! particles; the target is English-like. When a sentence has a
//! prepositional phrase the target places it either after the object or
//! before it, chosen at random and not signaled by the source, so the word
//! order of such targets is only recoverable from their parse.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::rng::SeedStreams;
use crate::treebank::ParseTree;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyPair {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub parse: ParseTree,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub seed: u64,
    pub pp_prob: f64,
    pub shift_prob: f64,
    pub adj_prob: f64,
    pub object_adj_prob: f64,
    /// Probability that a sentence has a second adjective on the subject.
    pub long_subject_prob: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            pp_prob: 0.75,
            shift_prob: 0.5,
            adj_prob: 0.8,
            object_adj_prob: 1.0,
            long_subject_prob: 0.0,
        }
    }
}

const NOUNS: &[&str] = &[
    "dog", "cat", "man", "woman", "child", "teacher", "farmer", "doctor", "bird", "horse", "king", "queen",
    "student", "painter", "baker", "soldier", "sailor", "window", "table", "garden", "river", "market", "bridge",
    "tower", "house", "forest", "mountain", "village", "kitchen", "library", "elephant", "butterfly", "neighbour",
    "musician", "stranger", "merchant", "engineer", "grandmother", "crocodile", "professor",
];
const ADJECTIVES: &[&str] = &[
    "big", "small", "old", "young", "red", "green", "happy", "tired", "clever", "quiet", "famous", "beautiful",
    "mysterious", "enormous", "curious",
];
const VERBS: &[&str] = &[
    "saw", "found", "followed", "helped", "visited", "painted", "watched", "called", "pushed", "carried", "admired",
    "ignored", "remembered", "photographed", "recognised", "greeted",
];
const PREPOSITIONS: &[&str] = &["near", "behind", "under", "beside", "inside", "beyond"];
const DETERMINERS: &[&str] = &["the", "a"];

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ne", "su", "ta", "ri", "po", "ve", "zu", "da", "fe", "gi", "ho", "ju", "ba", "xo", "wy", "qe",
    "sa",
];

/// Source-side word for a target lexeme: a fixed pseudo-word of two or
/// three syllables, unique across the lexicon.
fn pseudo_words(seed: u64, lexicon: &[&str], tag: &str, taken: &mut std::collections::HashSet<String>) -> Vec<String> {
    let mut rng = SeedStreams::new(seed).stream(tag);
    lexicon
        .iter()
        .map(|_| loop {
            let n = rng.gen_range(2..=3);
            let w: String = (0..n).map(|_| *SYLLABLES.choose(&mut rng).unwrap()).collect();
            if taken.insert(w.clone()) {
                break w;
            }
        })
        .collect()
}

/// Source particles: subject, object, definite, indefinite.
const PARTICLES: [&str; 4] = ["ga", "wo", "ko", "si"];

pub struct ToyLanguage {
    nouns: Vec<String>,
    adjectives: Vec<String>,
    verbs: Vec<String>,
    prepositions: Vec<String>,
}

impl ToyLanguage {
    pub fn new(seed: u64) -> Self {
        let mut taken: std::collections::HashSet<String> = PARTICLES.iter().map(|s| s.to_string()).collect();
        Self {
            nouns: pseudo_words(seed, NOUNS, "lex-noun", &mut taken),
            adjectives: pseudo_words(seed, ADJECTIVES, "lex-adj", &mut taken),
            verbs: pseudo_words(seed, VERBS, "lex-verb", &mut taken),
            prepositions: pseudo_words(seed, PREPOSITIONS, "lex-prep", &mut taken),
        }
    }
}

struct Np {
    det: usize,
    adjs: Vec<usize>,
    noun: usize,
}

impl Np {
    fn random(rng: &mut impl Rng, adj_prob: f64, extra_adj: bool) -> Self {
        let mut adjs = Vec::new();
        if rng.gen_bool(adj_prob) {
            adjs.push(rng.gen_range(0..ADJECTIVES.len()));
            if extra_adj {
                adjs.push(rng.gen_range(0..ADJECTIVES.len()));
            }
        }
        Self {
            det: rng.gen_range(0..DETERMINERS.len()),
            adjs,
            noun: rng.gen_range(0..NOUNS.len()),
        }
    }

    fn target(&self) -> (Vec<String>, ParseTree) {
        let mut words = vec![DETERMINERS[self.det].to_string()];
        let mut kids = vec![ParseTree::leaf("DT", DETERMINERS[self.det])];
        for &a in &self.adjs {
            words.push(ADJECTIVES[a].to_string());
            kids.push(ParseTree::leaf("JJ", ADJECTIVES[a]));
        }
        words.push(NOUNS[self.noun].to_string());
        kids.push(ParseTree::leaf("NN", NOUNS[self.noun]));
        (words, ParseTree::node("NP", kids))
    }

    /// Definiteness particle, noun, then adjectives in reverse order.
    fn source(&self, lang: &ToyLanguage) -> Vec<String> {
        let mut out = vec![PARTICLES[2 + self.det].to_string(), lang.nouns[self.noun].clone()];
        out.extend(self.adjs.iter().rev().map(|&a| lang.adjectives[a].clone()));
        out
    }
}

pub fn generate(config: &ToyConfig, n: usize, stream: &str) -> Vec<ToyPair> {
    let lang = ToyLanguage::new(config.seed);
    let mut rng = SeedStreams::new(config.seed).stream(stream);
    (0..n).map(|_| sentence(&lang, config, &mut rng)).collect()
}

fn sentence(lang: &ToyLanguage, config: &ToyConfig, rng: &mut impl Rng) -> ToyPair {
    let long = rng.gen_bool(config.long_subject_prob);
    let subj = Np::random(rng, config.adj_prob, long);
    let verb = rng.gen_range(0..VERBS.len());
    let obj = Np::random(rng, config.object_adj_prob, false);
    let pp = rng.gen_bool(config.pp_prob).then(|| {
        let np = Np {
            det: rng.gen_range(0..DETERMINERS.len()),
            adjs: Vec::new(),
            noun: rng.gen_range(0..NOUNS.len()),
        };
        (rng.gen_range(0..PREPOSITIONS.len()), np)
    });
    let shifted = pp.is_some() && rng.gen_bool(config.shift_prob);

    let mut source = subj.source(lang);
    source.push(PARTICLES[0].to_string());
    if let Some((prep, np)) = &pp {
        source.extend(np.source(lang));
        source.push(lang.prepositions[*prep].clone());
    }
    source.extend(obj.source(lang));
    source.push(PARTICLES[1].to_string());
    source.push(lang.verbs[verb].clone());

    let (subj_words, subj_tree) = subj.target();
    let (obj_words, obj_tree) = obj.target();
    let mut vp_words = vec![VERBS[verb].to_string()];
    let mut vp_kids = vec![ParseTree::leaf("VBD", VERBS[verb])];
    let pp_part = pp.as_ref().map(|(prep, np)| {
        let (w, t) = np.target();
        let mut words = vec![PREPOSITIONS[*prep].to_string()];
        words.extend(w);
        (words, ParseTree::node("PP", vec![ParseTree::leaf("IN", PREPOSITIONS[*prep]), t]))
    });
    match (pp_part, shifted) {
        (Some((pw, pt)), true) => {
            vp_words.extend(pw);
            vp_kids.push(pt);
            vp_words.extend(obj_words);
            vp_kids.push(obj_tree);
        }
        (Some((pw, pt)), false) => {
            vp_words.extend(obj_words);
            vp_kids.push(obj_tree);
            vp_words.extend(pw);
            vp_kids.push(pt);
        }
        (None, _) => {
            vp_words.extend(obj_words);
            vp_kids.push(obj_tree);
        }
    }
    let mut target = subj_words;
    target.extend(vp_words);
    let parse = ParseTree::node("S", vec![subj_tree, ParseTree::node("VP", vp_kids)]);
    ToyPair { source, target, parse }
}

/// Copy task: the target repeats the source; the parse is a flat
/// sentence node over one `W` pre-terminal per word.
pub fn copy_task(seed: u64, n: usize, vocab: usize, min_len: usize, max_len: usize, stream: &str) -> Vec<ToyPair> {
    let mut rng = SeedStreams::new(seed).stream(stream);
    let words: Vec<String> = (0..vocab).map(|i| format!("w{i}")).collect();
    (0..n)
        .map(|_| {
            let len = rng.gen_range(min_len..=max_len);
            let s: Vec<String> = (0..len).map(|_| words.choose(&mut rng).unwrap().clone()).collect();
            let parse = ParseTree::node("S", s.iter().map(|w| ParseTree::leaf("W", w.as_str())).collect());
            ToyPair {
                source: s.clone(),
                target: s,
                parse,
            }
        })
        .collect()
}
