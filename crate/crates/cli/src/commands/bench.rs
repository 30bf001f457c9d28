use std::path::PathBuf;

use synst::bench::{bench_decode, BenchConfig, BenchEntry, BenchReport};
use synst::models::{checkpoint, DecodeOptions, Model};
use synst::{Error, Result};

use super::common::load_split;
use crate::corpus::{write_text, Preprocessed};
use crate::settings::Settings;

/// Beam width of the reference system all speedups are relative to.
pub const BASELINE_BEAM: usize = 4;

pub fn bench_config(s: &Settings) -> Result<BenchConfig> {
    Ok(BenchConfig {
        runs: s.parse("bench.runs")?,
        warmup: s.flag("bench.warmup")?,
        threads: s.parse("bench.threads")?,
        baseline: 0,
    })
}

/// One `label=checkpoint[@beam]` item of `bench.entries`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntrySpec {
    pub label: String,
    pub checkpoint: PathBuf,
    pub beam: usize,
}

pub fn parse_entry(item: &str) -> Result<EntrySpec> {
    let bad = || Error::config(format!("expected label=checkpoint[@beam], got {item:?}"));
    let (label, rest) = item.split_once('=').ok_or_else(bad)?;
    let (path, beam) = match rest.rsplit_once('@') {
        Some((p, b)) => (p, b.parse().map_err(|_| bad())?),
        None => (rest, 1),
    };
    if label.is_empty() || path.is_empty() || beam == 0 {
        return Err(bad());
    }
    Ok(EntrySpec {
        label: label.to_string(),
        checkpoint: PathBuf::from(path),
        beam,
    })
}

/// Benchmarks `bench.entries`; the first entry is the speedup baseline.
pub fn run(s: &Settings) -> Result<BenchReport> {
    let data = Preprocessed::load(&s.data_dir())?;
    let specs = s
        .list("bench.entries")
        .iter()
        .map(|e| parse_entry(e))
        .collect::<Result<Vec<_>>>()?;
    if specs.is_empty() {
        return Err(Error::config("bench.entries is empty"));
    }
    let models = specs
        .iter()
        .map(|e| checkpoint::load(&e.checkpoint).map(|(m, _)| m))
        .collect::<Result<Vec<Model>>>()?;
    let split = s.get("bench.split").to_string();
    let mut eval = load_split(&data, s, &split, synst::models::System::Vanilla)?;
    eval.truncate(s.parse("bench.sentences")?);
    let base = s.decode_options()?;
    let entries: Vec<BenchEntry> = specs
        .iter()
        .zip(&models)
        .map(|(e, m)| BenchEntry {
            label: &e.label,
            model: m,
            chunk_vocab: Some(&data.chunk_vocab),
            options: DecodeOptions { beam: e.beam, ..base },
        })
        .collect();
    let report = bench_decode(&split, &eval.sources(), &entries, &bench_config(s)?)?;
    let dir = s.output().join("bench");
    write_text(&dir.join(format!("{split}.csv")), &report.to_csv())?;
    write_text(&dir.join(format!("{split}.env.txt")), &format!("{}\n", report.fingerprint))?;
    Ok(report)
}
