use synst::eval::{agreement_metrics, bleu_metrics, corpus_bleu, corpus_chunk_f1, parse_agreement_suite, MetricReport, Smoothing};
use synst::Result;

use crate::corpus::{read_chunks, read_lines, words, write_text};
use crate::settings::Settings;

pub fn run(s: &Settings) -> Result<MetricReport> {
    let hyps: Vec<Vec<String>> = read_lines(&s.require_path("eval.hyp")?)?.iter().map(|l| words(l)).collect();
    let refs: Vec<Vec<String>> = read_lines(&s.require_path("eval.ref")?)?.iter().map(|l| words(l)).collect();
    let smoothing: Smoothing = s.parse("eval.smoothing")?;
    let bag = s.flag("eval.bag")?;
    let mut report = bleu_metrics(&corpus_bleu(&hyps, &refs, smoothing)?);

    if let (Some(h), Some(r)) = (s.path("eval.hyp_chunks"), s.path("eval.ref_chunks")) {
        let predicted = read_chunks(&h)?;
        let gold = read_chunks(&r)?;
        match s.path("eval.parsed_chunks") {
            Some(p) => {
                let suite = parse_agreement_suite(&predicted, &gold, &read_chunks(&p)?, bag)?;
                agreement_metrics("chunk", &suite.predicted_vs_gold, &mut report);
                agreement_metrics("parsed_vs_gold", &suite.parsed_vs_gold, &mut report);
                agreement_metrics("parsed_vs_predicted", &suite.parsed_vs_predicted, &mut report);
            }
            None => agreement_metrics("chunk", &corpus_chunk_f1(&predicted, &gold, bag)?, &mut report),
        }
    }

    let csv = s
        .path("eval.csv")
        .unwrap_or_else(|| s.output().join("eval").join("metrics.csv"));
    write_text(&csv, &report.to_csv())?;
    Ok(report)
}
