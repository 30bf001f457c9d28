use std::fmt::Write as _;
use std::path::PathBuf;

use synst::bench::{bench_decode, BenchConfig, BenchEntry};
use synst::data::{chunk_split_sized, detokenize};
use synst::eval::{corpus_bleu, Smoothing};
use synst::models::{checkpoint, DecodeOptions, Model, System};
use synst::treebank::{chunk_size_stats, LeafSizer, WordSizer};
use synst::{Error, Result};

use super::bench::{bench_config, BASELINE_BEAM};
use super::common::{decode_all, load_split};
use crate::corpus::{read_pairs, write_text, Preprocessed, SplitFiles};
use crate::settings::Settings;

pub const CHUNK_STATS_HEADER: &str = "split,k,mode,sizer,sentences,chunks,total_size,average_chunk_size";
pub const LAYER_SWEEP_HEADER: &str = "parse_layers,mean_ns_per_sentence,speedup,mean_passes,layer_passes,bleu";

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkStatsRow {
    pub k: usize,
    pub sentences: usize,
    pub chunks: usize,
    pub total_size: usize,
    pub average_chunk_size: f64,
}

pub fn chunk_stats(s: &Settings) -> Result<Vec<ChunkStatsRow>> {
    let split = s.get("analyze.split").to_string();
    let pairs = read_pairs(&SplitFiles::require(s, &split)?)?;
    let base = s.chunk_options()?;
    // The word sizer does not need the subword model.
    let bpe = match base.word_sizer {
        true => None,
        false => Some(Preprocessed::load(&s.data_dir())?.bpe),
    };
    let sizer: &dyn LeafSizer = match &bpe {
        Some(b) => b,
        None => &WordSizer,
    };
    let mut rows = Vec::new();
    let mut csv = format!("{CHUNK_STATS_HEADER}\n");
    for k in s.list("analyze.ks") {
        let k: usize = k.parse().map_err(|_| Error::config(format!("invalid k {k:?} in analyze.ks")))?;
        if k == 0 {
            return Err(Error::config("analyze.ks entries must be positive"));
        }
        let opts = synst::data::ChunkOptions { k, ..base };
        let seqs = chunk_split_sized(&pairs, sizer, &opts, s.seed()?, 0);
        let stats = chunk_size_stats(&seqs)?;
        let row = ChunkStatsRow {
            k,
            sentences: seqs.len(),
            chunks: stats.chunk_count,
            total_size: stats.total_size,
            average_chunk_size: stats.mean(),
        };
        let sizer = if base.word_sizer { "word" } else { "bpe" };
        writeln!(csv, "{split},{k},{},{sizer},{},{},{},{:.6}", opts.mode, row.sentences, row.chunks, row.total_size, row.average_chunk_size).unwrap();
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::config("analyze.ks is empty"));
    }
    write_text(&s.output().join("analysis").join(format!("chunk_stats_{split}.csv")), &csv)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerRow {
    pub parse_layers: usize,
    pub mean_ns_per_sentence: f64,
    pub speedup: f64,
    pub mean_passes: f64,
    /// Decoder layer evaluations per sentence: parse-decoder passes times
    /// its depth plus token-decoder passes times its depth.
    pub layer_passes: f64,
    pub bleu: f64,
}

pub struct LayerSweep {
    pub rows: Vec<LayerRow>,
    pub csv_path: PathBuf,
}

pub fn layer_sweep(s: &Settings) -> Result<LayerSweep> {
    let data = Preprocessed::load(&s.data_dir())?;
    let split = s.get("analyze.split").to_string();
    let (baseline, _) = checkpoint::load(&s.require_path("analyze.baseline")?)?;
    if baseline.system() != System::Vanilla {
        return Err(Error::config("analyze.baseline must be a vanilla checkpoint"));
    }
    let mut models: Vec<Model> = Vec::new();
    for path in s.list("analyze.checkpoints") {
        let (m, _) = checkpoint::load(&PathBuf::from(&path))?;
        if m.system() != System::Synst {
            return Err(Error::config(format!("{path} is not a SynST checkpoint")));
        }
        models.push(m);
    }
    if models.is_empty() {
        return Err(Error::config("analyze.checkpoints is empty"));
    }
    models.sort_by_key(|m| m.config.parse_layers);

    let mut eval = load_split(&data, s, &split, System::Vanilla)?;
    eval.truncate(s.parse("analyze.sentences")?);
    let sources = eval.sources();
    let greedy = s.decode_options()?;
    let labels: Vec<String> = models.iter().map(|m| format!("synst-m{}", m.config.parse_layers)).collect();
    let mut entries = vec![BenchEntry {
        label: "vanilla-b4",
        model: &baseline,
        chunk_vocab: None,
        options: DecodeOptions { beam: BASELINE_BEAM, ..greedy },
    }];
    for (m, label) in models.iter().zip(&labels) {
        entries.push(BenchEntry {
            label,
            model: m,
            chunk_vocab: Some(&data.chunk_vocab),
            options: DecodeOptions { beam: 1, ..greedy },
        });
    }
    let report = bench_decode(&split, &sources, &entries, &BenchConfig { baseline: 0, ..bench_config(s)? })?;

    let mut rows = Vec::new();
    let mut csv = format!("{LAYER_SWEEP_HEADER}\n");
    for (m, label) in models.iter().zip(&labels) {
        let results = decode_all(m, &data, &sources, &DecodeOptions { beam: 1, ..greedy })?;
        let hyps: Vec<Vec<String>> = results.iter().map(|r| detokenize(&data.bpe, &r.tokens)).collect();
        let bleu = corpus_bleu(&hyps, &eval.references, Smoothing::None)?.bleu;
        let depth = m.config.parse_layers as f64;
        let token_depth = m.config.decoder_layers as f64;
        let layer_passes = results
            .iter()
            .map(|r| (r.passes - r.token_passes) as f64 * depth + r.token_passes as f64 * token_depth)
            .sum::<f64>()
            / results.len() as f64;
        let bench = report.row(label).expect("bench row for every entry");
        let row = LayerRow {
            parse_layers: m.config.parse_layers,
            mean_ns_per_sentence: bench.mean_ns_per_sentence,
            speedup: bench.speedup,
            mean_passes: bench.mean_passes,
            layer_passes,
            bleu,
        };
        writeln!(
            csv,
            "{},{:.1},{:.4},{:.4},{:.4},{:.4}",
            row.parse_layers, row.mean_ns_per_sentence, row.speedup, row.mean_passes, row.layer_passes, row.bleu
        )
        .unwrap();
        rows.push(row);
    }
    let csv_path = s.output().join("analysis").join(format!("layer_sweep_{split}.csv"));
    write_text(&csv_path, &csv)?;
    Ok(LayerSweep { rows, csv_path })
}
