//! Batch-size-one decode latency measurement.

use std::fmt::Write;
use std::time::Instant;

use crate::models::{DecodeOptions, Model, System};
use crate::treebank::{average_chunk_size, ChunkSequence, ChunkVocab};
use crate::{Error, Result};

/// One decoding setup to time.
#[derive(Clone, Copy)]
pub struct BenchEntry<'a> {
    pub label: &'a str,
    pub model: &'a Model,
    pub chunk_vocab: Option<&'a ChunkVocab>,
    pub options: DecodeOptions,
}

impl BenchEntry<'_> {
    /// Group size reported for the entry: `k` for SAT and SynST, 1 otherwise.
    pub fn k(&self) -> usize {
        match self.model.system() {
            System::Vanilla => 1,
            _ => self.model.config.k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchConfig {
    pub runs: usize,
    pub warmup: bool,
    pub threads: usize,
    /// Index of the entry every speedup is relative to.
    pub baseline: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            runs: 5,
            warmup: true,
            threads: 1,
            baseline: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fingerprint {
    pub host: String,
    pub os: &'static str,
    pub arch: &'static str,
    pub threads: usize,
    pub profile: &'static str,
}

impl Fingerprint {
    pub fn current(threads: usize) -> Self {
        let host = std::env::var("HOSTNAME")
            .ok()
            .or_else(|| std::fs::read_to_string("/etc/hostname").ok().map(|s| s.trim().to_string()))
            .unwrap_or_else(|| "unknown".into());
        Self {
            host,
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            threads,
            profile: if cfg!(debug_assertions) { "debug" } else { "release" },
        }
    }
}

impl std::fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "host={} os={} arch={} threads={} profile={}", self.host, self.os, self.arch, self.threads, self.profile)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub label: String,
    pub system: System,
    pub k: usize,
    pub beam: usize,
    /// Mean per-sentence time of each run.
    pub run_means_ns: Vec<f64>,
    pub mean_ns_per_sentence: f64,
    pub speedup: f64,
    pub mean_passes: f64,
    /// Per-sentence pass counts from the first run.
    pub passes: Vec<usize>,
    /// Whether every run produced the same pass counts.
    pub passes_stable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub dataset: String,
    pub sentences: usize,
    pub runs: usize,
    pub rows: Vec<BenchRow>,
    pub fingerprint: Fingerprint,
}

pub const CSV_HEADER: &str = "dataset,system,k,b,mean_ns_per_sentence,speedup,mean_passes";

impl BenchReport {
    pub fn row(&self, label: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{:.1},{:.4},{:.4}",
                self.dataset, r.label, r.k, r.beam, r.mean_ns_per_sentence, r.speedup, r.mean_passes
            )
            .unwrap();
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("# {} sentences, {} runs, {}\n", self.sentences, self.runs, self.fingerprint);
        writeln!(out, "{:<16} {:>3} {:>3} {:>12} {:>8} {:>8}", "system", "k", "b", "us/sentence", "speedup", "passes").unwrap();
        for r in &self.rows {
            writeln!(
                out,
                "{:<16} {:>3} {:>3} {:>12.1} {:>7.2}x {:>8.2}",
                r.label,
                r.k,
                r.beam,
                r.mean_ns_per_sentence / 1e3,
                r.speedup,
                r.mean_passes
            )
            .unwrap();
        }
        out
    }
}

fn decode_passes(e: &BenchEntry<'_>, src: &[u32]) -> Result<usize> {
    Ok(e.model.decode(src, e.chunk_vocab, &e.options)?.passes)
}

/// Times every entry on every sentence, one sentence per decode call.
/// Runs are interleaved across entries so that slow drift in machine load
/// affects all entries alike.
pub fn bench_decode(dataset: &str, sources: &[Vec<u32>], entries: &[BenchEntry<'_>], config: &BenchConfig) -> Result<BenchReport> {
    if config.runs < 1 {
        return Err(Error::config("bench needs at least one run"));
    }
    if config.threads != 1 {
        return Err(Error::config(format!("bench requires a single worker thread, got {}", config.threads)));
    }
    if entries.is_empty() || sources.is_empty() {
        return Err(Error::Empty("bench entries or sentences"));
    }
    if config.baseline >= entries.len() {
        return Err(Error::config(format!("baseline index {} out of range", config.baseline)));
    }
    if config.warmup {
        for e in entries {
            for s in sources {
                decode_passes(e, s)?;
            }
        }
    }
    let mut run_means = vec![Vec::with_capacity(config.runs); entries.len()];
    let mut passes: Vec<Vec<usize>> = vec![Vec::new(); entries.len()];
    let mut stable = vec![true; entries.len()];
    for run in 0..config.runs {
        for (i, e) in entries.iter().enumerate() {
            let mut total_ns = 0u128;
            let mut counts = Vec::with_capacity(sources.len());
            for s in sources {
                let start = Instant::now();
                let r = e.model.decode(s, e.chunk_vocab, &e.options)?;
                total_ns += start.elapsed().as_nanos();
                counts.push(r.passes);
            }
            run_means[i].push(total_ns as f64 / sources.len() as f64);
            if run == 0 {
                passes[i] = counts;
            } else if passes[i] != counts {
                stable[i] = false;
            }
        }
    }
    let means: Vec<f64> = run_means.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
    let base = means[config.baseline];
    let rows = entries
        .iter()
        .enumerate()
        .map(|(i, e)| BenchRow {
            label: e.label.to_string(),
            system: e.model.system(),
            k: e.k(),
            beam: e.options.beam,
            run_means_ns: run_means[i].clone(),
            mean_ns_per_sentence: means[i],
            speedup: if i == config.baseline { 1.0 } else { base / means[i] },
            mean_passes: passes[i].iter().sum::<usize>() as f64 / sources.len() as f64,
            passes: passes[i].clone(),
            passes_stable: stable[i],
        })
        .collect();
    Ok(BenchReport {
        dataset: dataset.to_string(),
        sentences: sources.len(),
        runs: config.runs,
        rows,
        fingerprint: Fingerprint::current(config.threads),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeSpeedupRow {
    pub dataset: String,
    pub k: usize,
    pub average_chunk_size: f64,
    pub speedup: f64,
}

/// Average chunk size next to a measured speedup for every dataset and `k`.
/// `chunk` produces a dataset's chunk sequences at a given `k`; `measure`
/// returns the speedup obtained on it.
pub fn chunk_size_vs_speedup<D, C, M>(datasets: &[(&str, D)], ks: &[usize], mut chunk: C, mut measure: M) -> Result<Vec<SizeSpeedupRow>>
where
    C: FnMut(&D, usize) -> Result<Vec<ChunkSequence>>,
    M: FnMut(&D, usize, &[ChunkSequence]) -> Result<f64>,
{
    if ks.is_empty() {
        return Err(Error::Empty("k values"));
    }
    if datasets.is_empty() {
        return Err(Error::Empty("datasets"));
    }
    let mut rows = Vec::new();
    for (name, d) in datasets {
        for &k in ks {
            let chunks = chunk(d, k)?;
            rows.push(SizeSpeedupRow {
                dataset: name.to_string(),
                k,
                average_chunk_size: average_chunk_size(&chunks)?,
                speedup: measure(d, k, &chunks)?,
            });
        }
    }
    Ok(rows)
}

pub fn size_speedup_csv(rows: &[SizeSpeedupRow]) -> String {
    let mut out = String::from("dataset,k,average_chunk_size,speedup\n");
    for r in rows {
        writeln!(out, "{},{},{:.4},{:.4}", r.dataset, r.k, r.average_chunk_size, r.speedup).unwrap();
    }
    out
}
