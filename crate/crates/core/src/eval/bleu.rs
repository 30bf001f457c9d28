use std::collections::HashMap;
use std::fmt;

use crate::{Error, Result};

pub const MAX_ORDER: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Smoothing {
    #[default]
    None,
    /// A zero-match order contributes 1 / (2^j * total) where j counts the
    /// zero-match orders seen so far. A hypothesis set without a single
    /// unigram match still scores 0.
    Exp,
}

impl std::str::FromStr for Smoothing {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Smoothing::None),
            "exp" => Ok(Smoothing::Exp),
            other => Err(Error::config(format!("unknown smoothing {other:?} (expected none|exp)"))),
        }
    }
}

impl fmt::Display for Smoothing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Smoothing::None => "none",
            Smoothing::Exp => "exp",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BleuReport {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    /// Possibly smoothed precisions used in the geometric mean.
    pub precisions: [f64; MAX_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
    pub brevity_penalty: f64,
    pub bleu: f64,
    pub smoothing: Smoothing,
}

impl BleuReport {
    pub fn raw_precision(&self, order: usize) -> f64 {
        let i = order - 1;
        if self.totals[i] == 0 {
            0.0
        } else {
            self.matches[i] as f64 / self.totals[i] as f64
        }
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            let key: Vec<&str> = w.iter().map(|s| s.as_ref()).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence-level statistics: clipped matches and hypothesis n-gram totals.
pub fn sentence_stats<S: AsRef<str>, R: AsRef<str>>(hyp: &[S], reference: &[R]) -> ([usize; MAX_ORDER], [usize; MAX_ORDER]) {
    let mut matches = [0; MAX_ORDER];
    let mut totals = [0; MAX_ORDER];
    for n in 1..=MAX_ORDER {
        let h = ngram_counts(hyp, n);
        let r = ngram_counts(reference, n);
        totals[n - 1] = hyp.len().saturating_sub(n - 1);
        matches[n - 1] = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
    }
    (matches, totals)
}

pub fn bleu_from_stats(
    matches: [usize; MAX_ORDER],
    totals: [usize; MAX_ORDER],
    hyp_len: usize,
    ref_len: usize,
    smoothing: Smoothing,
) -> BleuReport {
    let mut precisions = [0.0; MAX_ORDER];
    let mut zero_orders = 0u32;
    for i in 0..MAX_ORDER {
        precisions[i] = if totals[i] == 0 {
            0.0
        } else if matches[i] == 0 && smoothing == Smoothing::Exp {
            zero_orders += 1;
            1.0 / (2f64.powi(zero_orders as i32) * totals[i] as f64)
        } else {
            matches[i] as f64 / totals[i] as f64
        };
    }
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    let bleu = if matches[0] == 0 || precisions.iter().any(|&p| p <= 0.0) {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
        (100.0 * brevity_penalty * log_mean.exp()).min(100.0)
    };
    BleuReport { matches, totals, precisions, hyp_len, ref_len, brevity_penalty, bleu, smoothing }
}

/// Corpus BLEU-4 over pre-tokenized sentences with one reference each.
pub fn corpus_bleu<S: AsRef<str>, R: AsRef<str>>(
    hypotheses: &[Vec<S>],
    references: &[Vec<R>],
    smoothing: Smoothing,
) -> Result<BleuReport> {
    if hypotheses.len() != references.len() {
        return Err(Error::data(
            None,
            format!("{} hypotheses but {} references", hypotheses.len(), references.len()),
        ));
    }
    let mut matches = [0; MAX_ORDER];
    let mut totals = [0; MAX_ORDER];
    let (mut hyp_len, mut ref_len) = (0, 0);
    for (h, r) in hypotheses.iter().zip(references) {
        let (m, t) = sentence_stats(h, r);
        for i in 0..MAX_ORDER {
            matches[i] += m[i];
            totals[i] += t[i];
        }
        hyp_len += h.len();
        ref_len += r.len();
    }
    Ok(bleu_from_stats(matches, totals, hyp_len, ref_len, smoothing))
}
