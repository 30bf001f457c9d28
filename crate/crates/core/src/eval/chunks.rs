use std::collections::HashMap;

use crate::treebank::ChunkSequence;
use crate::{Error, Result};

/// Matching counts between predicted and gold chunk sequences, summed over
/// sentences. Rates are derived from the totals (micro-averaged).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ChunkAgreement {
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
    pub exact: usize,
    pub sentences: usize,
}

impl ChunkAgreement {
    pub fn precision(&self) -> f64 {
        ratio(self.matched, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.matched, self.gold)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn exact_match(&self) -> f64 {
        ratio(self.exact, self.sentences)
    }

    pub fn merge(&mut self, other: &ChunkAgreement) {
        self.matched += other.matched;
        self.predicted += other.predicted;
        self.gold += other.gold;
        self.exact += other.exact;
        self.sentences += other.sentences;
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn spans(seq: &ChunkSequence, positioned: bool) -> HashMap<(&str, usize, usize), usize> {
    let mut out = HashMap::new();
    let mut start = 0;
    for c in seq.iter() {
        let key = (c.label.as_str(), c.size, if positioned { start } else { 0 });
        *out.entry(key).or_insert(0) += 1;
        start += c.size;
    }
    out
}

/// Compares a single sentence. With `bag` set, chunk start offsets are
/// ignored and chunks match as a multiset.
pub fn chunk_f1_with(predicted: &ChunkSequence, gold: &ChunkSequence, bag: bool) -> ChunkAgreement {
    let p = spans(predicted, !bag);
    let g = spans(gold, !bag);
    let matched = p.iter().map(|(key, &n)| n.min(g.get(key).copied().unwrap_or(0))).sum();
    ChunkAgreement {
        matched,
        predicted: predicted.len(),
        gold: gold.len(),
        exact: usize::from(predicted == gold),
        sentences: 1,
    }
}

pub fn chunk_f1(predicted: &ChunkSequence, gold: &ChunkSequence) -> ChunkAgreement {
    chunk_f1_with(predicted, gold, false)
}

pub fn corpus_chunk_f1(predicted: &[ChunkSequence], gold: &[ChunkSequence], bag: bool) -> Result<ChunkAgreement> {
    if predicted.len() != gold.len() {
        return Err(Error::data(None, format!("{} predicted chunk lines but {} gold", predicted.len(), gold.len())));
    }
    let mut total = ChunkAgreement::default();
    for (p, g) in predicted.iter().zip(gold) {
        total.merge(&chunk_f1_with(p, g, bag));
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParseAgreement {
    pub predicted_vs_gold: ChunkAgreement,
    pub parsed_vs_gold: ChunkAgreement,
    pub parsed_vs_predicted: ChunkAgreement,
}

/// Three-way comparison between the parse decoder's chunks, the gold chunks,
/// and chunks extracted from a parse of the system's own translation.
pub fn parse_agreement_suite(
    predicted: &[ChunkSequence],
    gold: &[ChunkSequence],
    parsed_prediction: &[ChunkSequence],
    bag: bool,
) -> Result<ParseAgreement> {
    if gold.len() != predicted.len() {
        return Err(Error::data(None, format!("{} predicted chunk lines but {} gold", predicted.len(), gold.len())));
    }
    if parsed_prediction.len() < predicted.len() {
        let missing = parsed_prediction.len() + 1;
        return Err(Error::data(Some(missing), format!("missing parse for sentence {missing}")));
    }
    if parsed_prediction.len() > predicted.len() {
        return Err(Error::data(
            Some(predicted.len() + 1),
            format!("{} parses for {} sentences", parsed_prediction.len(), predicted.len()),
        ));
    }
    Ok(ParseAgreement {
        predicted_vs_gold: corpus_chunk_f1(predicted, gold, bag)?,
        parsed_vs_gold: corpus_chunk_f1(parsed_prediction, gold, bag)?,
        parsed_vs_predicted: corpus_chunk_f1(parsed_prediction, predicted, bag)?,
    })
}
