//! Tree enumeration, random trees and a recursive chunking reference.
#![allow(dead_code)]

use rand::Rng;
use synst::treebank::{ChunkSequence, LeafSizer, ParseTree};

pub const LABELS: [&str; 5] = ["A", "B", "C", "D", "E"];

/// Unlabeled ordered tree shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Shape {
    Leaf,
    Node(Vec<Shape>),
}

impl Shape {
    pub fn nodes(&self) -> usize {
        match self {
            Shape::Leaf => 1,
            Shape::Node(c) => 1 + c.iter().map(Shape::nodes).sum::<usize>(),
        }
    }

    fn is_unary(&self) -> bool {
        matches!(self, Shape::Node(c) if c.len() == 1)
    }
}

/// Every shape with exactly `leaves` leaves. Internal nodes have at least
/// two children, except that with `unary` a node may have a single child
/// that is not itself unary.
pub fn shapes(leaves: usize, unary: bool) -> Vec<Shape> {
    let mut memo: Vec<Option<Vec<Shape>>> = vec![None; leaves + 1];
    shapes_memo(leaves, unary, &mut memo)
}

fn shapes_memo(n: usize, unary: bool, memo: &mut Vec<Option<Vec<Shape>>>) -> Vec<Shape> {
    if let Some(s) = &memo[n] {
        return s.clone();
    }
    let mut out = Vec::new();
    if n == 1 {
        out.push(Shape::Leaf);
    }
    for children in forests(n, 2, unary, memo) {
        out.push(Shape::Node(children));
    }
    if unary {
        let base: Vec<Shape> = out.iter().filter(|s| !s.is_unary()).cloned().collect();
        out.extend(base.into_iter().map(|s| Shape::Node(vec![s])));
    }
    memo[n] = Some(out.clone());
    out
}

/// Sequences of at least `min_parts` shapes with `n` leaves in total.
fn forests(n: usize, min_parts: usize, unary: bool, memo: &mut Vec<Option<Vec<Shape>>>) -> Vec<Vec<Shape>> {
    let mut out = Vec::new();
    if min_parts <= 1 {
        for s in shapes_memo(n, unary, memo) {
            out.push(vec![s]);
        }
    }
    for first in 1..n {
        let heads = shapes_memo(first, unary, memo);
        let tails = forests(n - first, min_parts.saturating_sub(1).max(1), unary, memo);
        for h in &heads {
            for t in &tails {
                let mut v = vec![h.clone()];
                v.extend(t.iter().cloned());
                out.push(v);
            }
        }
    }
    out
}

/// Token for leaf `i`; its length cycles through 1, 2, 3, 1, 1, 2, ...
pub fn token(i: usize) -> String {
    const LENGTHS: [usize; 6] = [1, 2, 3, 1, 1, 2];
    let c = (b'a' + (i % 26) as u8) as char;
    std::iter::repeat(c).take(LENGTHS[i % LENGTHS.len()]).collect()
}

pub fn length_sizer(tok: &str) -> usize {
    tok.chars().count()
}

/// Builds a tree from `shape`. `label(preorder index, depth)` names each node;
/// leaves get tokens from [`token`] in left-to-right order.
pub fn build(shape: &Shape, label: &mut dyn FnMut(usize, usize) -> String) -> ParseTree {
    fn go(s: &Shape, depth: usize, idx: &mut usize, leaf: &mut usize, label: &mut dyn FnMut(usize, usize) -> String) -> ParseTree {
        let name = label(*idx, depth);
        *idx += 1;
        match s {
            Shape::Leaf => {
                let t = token(*leaf);
                *leaf += 1;
                ParseTree::leaf(name, t)
            }
            Shape::Node(children) => {
                let kids = children.iter().map(|c| go(c, depth + 1, idx, leaf, label)).collect();
                ParseTree::node(name, kids)
            }
        }
    }
    go(shape, 0, &mut 0, &mut 0, label)
}

/// Label patterns used when the full labeling space is too large.
pub fn patterned(shape: &Shape) -> Vec<ParseTree> {
    vec![
        build(shape, &mut |i, _| LABELS[i % 5].to_string()),
        build(shape, &mut |_, d| LABELS[d % 5].to_string()),
        build(shape, &mut |_, _| LABELS[0].to_string()),
    ]
}

/// Every assignment of the five labels to the nodes of `shape`.
pub fn all_labelings(shape: &Shape, mut f: impl FnMut(ParseTree)) {
    let n = shape.nodes();
    let mut digits = vec![0usize; n];
    loop {
        f(build(shape, &mut |i, _| LABELS[digits[i]].to_string()));
        let mut pos = 0;
        loop {
            if pos == n {
                return;
            }
            digits[pos] += 1;
            if digits[pos] < LABELS.len() {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

/// Straightforward recursive restatement of the chunking rule.
pub fn reference_chunks(tree: &ParseTree, k: usize, sizer: &dyn LeafSizer) -> Vec<(String, usize)> {
    fn span(t: &ParseTree, sizer: &dyn LeafSizer) -> usize {
        match t.token() {
            Some(tok) => sizer.leaf_size(tok).max(1),
            None => t.children().iter().map(|c| span(c, sizer)).sum(),
        }
    }
    let s = span(tree, sizer);
    if s <= k || tree.is_leaf() {
        return vec![(tree.label().to_string(), s)];
    }
    tree.children().iter().flat_map(|c| reference_chunks(c, k, sizer)).collect()
}

pub fn as_pairs(seq: &ChunkSequence) -> Vec<(String, usize)> {
    seq.iter().map(|c| (c.label.clone(), c.size)).collect()
}

#[derive(Debug, Default)]
pub struct OracleSummary {
    pub trees: usize,
    pub checks: usize,
    pub mismatches: Vec<String>,
}

impl OracleSummary {
    pub fn check(&mut self, tree: &ParseTree) {
        self.trees += 1;
        let sizers: [&dyn LeafSizer; 2] = [&synst::treebank::WordSizer, &length_sizer];
        for sizer in sizers {
            for k in 1..=6 {
                self.checks += 1;
                let got = as_pairs(&synst::treebank::extract_chunks(tree, k, sizer));
                let want = reference_chunks(tree, k, sizer);
                if got != want && self.mismatches.len() < 10 {
                    self.mismatches.push(format!("{tree} k={k}: got {got:?}, want {want:?}"));
                }
            }
        }
    }
}

/// The enumerated oracle families, all with `k` in 1..=6 under a word sizer
/// and a variable-length sizer:
/// - every shape with up to 8 leaves and fan-out of at least 2, under three
///   label patterns;
/// - every shape with up to 5 leaves and unary chains of length one, under
///   the same patterns;
/// - every 5-labeling of every node of all shapes with up to 4 leaves and
///   fan-out of at least 2, and of all unary shapes with up to 2 leaves.
pub fn oracle_sweep() -> OracleSummary {
    let mut s = OracleSummary::default();
    for n in 1..=8 {
        for shape in shapes(n, false) {
            for t in patterned(&shape) {
                s.check(&t);
            }
        }
    }
    for n in 1..=5 {
        for shape in shapes(n, true) {
            for t in patterned(&shape) {
                s.check(&t);
            }
        }
    }
    for n in 1..=4 {
        for shape in shapes(n, false) {
            all_labelings(&shape, |t| s.check(&t));
        }
    }
    for n in 1..=2 {
        for shape in shapes(n, true) {
            all_labelings(&shape, |t| s.check(&t));
        }
    }
    s
}

/// Random tree with up to `max_leaves` leaves, unary chains included.
pub fn random_tree(rng: &mut impl Rng, max_leaves: usize) -> ParseTree {
    let leaves = rng.gen_range(1..=max_leaves);
    let mut next_leaf = 0;
    random_subtree(rng, leaves, &mut next_leaf, 0)
}

fn random_subtree(rng: &mut impl Rng, leaves: usize, next_leaf: &mut usize, depth: usize) -> ParseTree {
    let label = LABELS[rng.gen_range(0..LABELS.len())];
    if leaves == 1 && (depth > 6 || rng.gen_bool(0.7)) {
        let mut tok = token(*next_leaf);
        if rng.gen_bool(0.3) {
            tok.push_str(&"x".repeat(rng.gen_range(1..4)));
        }
        *next_leaf += 1;
        return ParseTree::leaf(label, tok);
    }
    if depth < 6 && rng.gen_bool(0.15) {
        return ParseTree::node(label, vec![random_subtree(rng, leaves, next_leaf, depth + 1)]);
    }
    if leaves == 1 {
        return ParseTree::node(label, vec![random_subtree(rng, 1, next_leaf, depth + 1)]);
    }
    let parts = rng.gen_range(2..=leaves.min(4));
    let mut cuts: Vec<usize> = (1..leaves).collect();
    for i in (1..cuts.len()).rev() {
        cuts.swap(i, rng.gen_range(0..=i));
    }
    let mut cuts: Vec<usize> = cuts.into_iter().take(parts - 1).collect();
    cuts.sort_unstable();
    let mut children = Vec::new();
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(leaves)) {
        children.push(random_subtree(rng, c - prev, next_leaf, depth + 1));
        prev = c;
    }
    ParseTree::node(label, children)
}
