//! Translation and chunk agreement metrics.

pub mod bleu;
pub mod chunks;
pub mod report;

pub use bleu::{bleu_from_stats, corpus_bleu, sentence_stats, BleuReport, Smoothing, MAX_ORDER};
pub use chunks::{chunk_f1, chunk_f1_with, corpus_chunk_f1, parse_agreement_suite, ChunkAgreement, ParseAgreement};
pub use report::MetricReport;

pub fn bleu_metrics(report: &BleuReport) -> MetricReport {
    let mut m = MetricReport::new();
    m.push("bleu", report.bleu);
    for n in 1..=MAX_ORDER {
        m.push(format!("p{n}"), report.raw_precision(n));
    }
    m.push("brevity_penalty", report.brevity_penalty);
    m.push("hyp_len", report.hyp_len as f64);
    m.push("ref_len", report.ref_len as f64);
    m
}

pub fn agreement_metrics(prefix: &str, a: &ChunkAgreement, m: &mut MetricReport) {
    m.push(format!("{prefix}_precision"), a.precision());
    m.push(format!("{prefix}_recall"), a.recall());
    m.push(format!("{prefix}_f1"), a.f1());
    m.push(format!("{prefix}_exact"), a.exact_match());
}
