use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use synst::data::{build_examples, chunk_split, learn_bpe, ChunkOptions, Pair};
use synst::treebank::{ChunkSequence, ChunkVocab, ChunkingMode};
use synst::Result;

use crate::corpus::{ids_line, read_pairs, sha256_hex, write_lines, write_text, SplitFiles};
use crate::settings::Settings;

pub const SPLITS: [&str; 3] = ["train", "dev", "test"];

/// Keys whose values change the preprocessed artifacts.
const RECORDED_KEYS: [&str; 6] = ["seed", "bpe.merges", "chunk.k", "chunk.mode", "chunk.strip_labels", "chunk.word_sizer"];

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub role: &'static str,
    pub name: String,
    pub lines: usize,
    pub sha256: String,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub text: String,
}

impl Manifest {
    pub fn lines(&self, name: &str) -> Option<usize> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.lines)
    }
}

/// Chunking used for held-out splits: random sizes are a training-time
/// augmentation, so evaluation data is chunked at the maximum size.
fn eval_options(opts: &ChunkOptions) -> ChunkOptions {
    match opts.mode {
        ChunkingMode::Random => ChunkOptions { mode: ChunkingMode::Fixed, ..*opts },
        _ => *opts,
    }
}

pub fn run(s: &Settings) -> Result<Manifest> {
    let seed = s.seed()?;
    let opts = s.chunk_options()?;
    let merges: usize = s.parse("bpe.merges")?;

    let mut splits: Vec<(SplitFiles, Vec<Pair>)> = Vec::new();
    for name in SPLITS {
        let files = if name == "train" {
            Some(SplitFiles::require(s, name)?)
        } else {
            SplitFiles::from_settings(s, name)?
        };
        if let Some(files) = files {
            let pairs = read_pairs(&files)?;
            splits.push((files, pairs));
        }
    }

    let bpe = learn_bpe(&splits[0].1, merges)?;
    let chunks: Vec<Vec<ChunkSequence>> = splits
        .iter()
        .map(|(f, pairs)| {
            let o = if f.name == "train" { opts } else { eval_options(&opts) };
            chunk_split(pairs, &bpe, &o, seed, 0)
        })
        .collect();

    // Random sizes can reach any label that fixed sizes below k expose.
    let mut vocab_corpus: Vec<ChunkSequence> = chunks.concat();
    if opts.mode == ChunkingMode::Random {
        for k in 1..opts.k {
            let fixed = ChunkOptions { k, mode: ChunkingMode::Fixed, ..opts };
            vocab_corpus.extend(chunk_split(&splits[0].1, &bpe, &fixed, seed, 0));
        }
    }
    let vocab = ChunkVocab::build(opts.k, &vocab_corpus);

    let dir = s.data_dir();
    write_text(&dir.join("bpe.merges"), &bpe.merges_text())?;
    write_text(&dir.join("vocab.txt"), &bpe.vocab().to_text())?;
    write_text(&dir.join("chunk_vocab.txt"), &vocab.to_text())?;

    let mut entries = Vec::new();
    for ((files, pairs), seqs) in splits.iter().zip(&chunks) {
        build_examples(pairs, &bpe, Some((seqs, &vocab)))?;
        for (role, path) in [("source", &files.source), ("target", &files.target), ("parses", &files.parses)] {
            entries.push(describe("input", format!("{}.{role}", files.name), path)?);
        }
        let encode = |side: fn(&Pair) -> &Vec<String>| {
            pairs
                .iter()
                .map(|p| ids_line(&bpe.encode_ids(&side(p).iter().map(String::as_str).collect::<Vec<_>>())))
                .collect::<Vec<_>>()
        };
        let outputs = [
            ("src.ids", encode(|p| &p.source)),
            ("tgt.ids", encode(|p| &p.target)),
            ("chunks", seqs.iter().map(ChunkSequence::to_line).collect()),
        ];
        for (ext, lines) in outputs {
            let name = format!("{}.{ext}", files.name);
            let path = dir.join(&name);
            write_lines(&path, &lines)?;
            entries.push(describe("output", name, &path)?);
        }
    }
    for name in ["bpe.merges", "vocab.txt", "chunk_vocab.txt"] {
        entries.push(describe("output", name.to_string(), &dir.join(name))?);
    }

    let mut text = String::from("# role name lines sha256\n");
    for key in RECORDED_KEYS {
        writeln!(text, "setting {key} {}", s.get(key)).unwrap();
    }
    writeln!(text, "setting token_vocab {}", bpe.vocab().len()).unwrap();
    writeln!(text, "setting chunk_vocab {}", vocab.len()).unwrap();
    for e in &entries {
        writeln!(text, "{} {} {} {}", e.role, e.name, e.lines, e.sha256).unwrap();
    }
    write_text(&dir.join("manifest.txt"), &text)?;
    Ok(Manifest { entries, text })
}

fn describe(role: &'static str, name: String, path: &Path) -> Result<ManifestEntry> {
    let bytes = fs::read(path).map_err(synst::Error::Io)?;
    Ok(ManifestEntry {
        role,
        name,
        lines: String::from_utf8_lossy(&bytes).lines().count(),
        sha256: sha256_hex(&bytes),
    })
}
