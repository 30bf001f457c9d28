//! Reading and writing line-aligned corpus files.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use synst::data::Pair;
use synst::subword::{BpeModel, TokenVocab};
use synst::treebank::{parse_bracketed, ChunkSequence, ChunkVocab};
use synst::{Error, Result};

use crate::settings::Settings;

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(read_text(path)?.lines().map(str::to_string).collect())
}

/// Writes `text`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn write_lines<I, S>(path: &Path, lines: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut text = String::new();
    for l in lines {
        text.push_str(l.as_ref());
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn words(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_string).collect()
}

/// Paths of one split's source, target and parse files.
#[derive(Debug, Clone)]
pub struct SplitFiles {
    pub name: String,
    pub source: PathBuf,
    pub target: PathBuf,
    pub parses: PathBuf,
}

impl SplitFiles {
    /// `None` when the split's source is not configured.
    pub fn from_settings(s: &Settings, split: &str) -> Result<Option<Self>> {
        let Some(source) = s.path(&format!("{split}.source")) else {
            return Ok(None);
        };
        Ok(Some(Self {
            name: split.to_string(),
            source,
            target: s.require_path(&format!("{split}.target"))?,
            parses: s.require_path(&format!("{split}.parses"))?,
        }))
    }

    pub fn require(s: &Settings, split: &str) -> Result<Self> {
        Self::from_settings(s, split)?
            .ok_or_else(|| Error::config(format!("{split}.source is not set")))
    }
}

/// Reads an aligned split. Misalignment is reported at the first line
/// missing from the shorter file, or the first parse that disagrees with
/// its target sentence.
pub fn read_pairs(split: &SplitFiles) -> Result<Vec<Pair>> {
    let src = read_lines(&split.source)?;
    let tgt = read_lines(&split.target)?;
    let parses = read_lines(&split.parses)?;
    let n = src.len().min(tgt.len()).min(parses.len());
    if src.len() != n || tgt.len() != n || parses.len() != n {
        return Err(Error::data(
            Some(n + 1),
            format!(
                "{} split is misaligned: {} source, {} target, {} parse lines",
                split.name,
                src.len(),
                tgt.len(),
                parses.len()
            ),
        ));
    }
    let mut pairs = Vec::with_capacity(n);
    for (i, ((s, t), p)) in src.iter().zip(&tgt).zip(&parses).enumerate() {
        let parse = parse_bracketed(p).map_err(|e| Error::data(Some(i + 1), format!("{}: {e}", split.parses.display())))?;
        pairs.push(Pair {
            source: words(s),
            target: words(t),
            parse,
        });
    }
    synst::data::validate_pairs(&pairs).map_err(|e| match e {
        Error::Data { line, message } => Error::data(line, format!("{} split: {message}", split.name)),
        other => other,
    })?;
    Ok(pairs)
}

pub fn ids_line(ids: &[u32]) -> String {
    ids.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}

pub fn read_ids(path: &Path) -> Result<Vec<Vec<u32>>> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, l)| {
            l.split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::data(Some(i + 1), format!("{}: bad id {t:?}", path.display()))))
                .collect()
        })
        .collect()
}

pub fn read_chunks(path: &Path) -> Result<Vec<ChunkSequence>> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, l)| ChunkSequence::parse_line(l).map_err(|e| Error::data(Some(i + 1), format!("{}: {e}", path.display()))))
        .collect()
}

/// Subword model and chunk vocabulary produced by `preprocess`.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub dir: PathBuf,
    pub bpe: BpeModel,
    pub chunk_vocab: ChunkVocab,
}

impl Preprocessed {
    pub fn load(dir: &Path) -> Result<Self> {
        let vocab = TokenVocab::from_text(&read_text(&dir.join("vocab.txt"))?)?;
        let bpe = BpeModel::from_parts(&read_text(&dir.join("bpe.merges"))?, vocab)?;
        let chunk_vocab = ChunkVocab::from_text(&read_text(&dir.join("chunk_vocab.txt"))?)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            bpe,
            chunk_vocab,
        })
    }

    pub fn file(&self, split: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{split}.{ext}"))
    }

    pub fn encode(&self, words: &[String]) -> Vec<u32> {
        self.bpe.encode_ids(&words.iter().map(String::as_str).collect::<Vec<_>>())
    }
}
