use synst::data::detokenize;
use synst::eval::{corpus_bleu, corpus_chunk_f1, ChunkAgreement, Smoothing};
use synst::models::{check_example, DecodeOptions, DecodeResult, Example, Model, System};
use synst::treebank::ChunkSequence;
use synst::{Error, Result};

use crate::corpus::{read_chunks, read_ids, read_lines, words, Preprocessed};
use crate::settings::Settings;

/// A preprocessed split plus its raw reference translations.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub examples: Vec<Example>,
    pub references: Vec<Vec<String>>,
    pub chunks: Vec<ChunkSequence>,
}

impl SplitData {
    pub fn truncate(&mut self, n: usize) {
        if n > 0 {
            self.examples.truncate(n);
            self.references.truncate(n);
            self.chunks.truncate(n);
        }
    }

    pub fn sources(&self) -> Vec<Vec<u32>> {
        self.examples.iter().map(|e| e.src.clone()).collect()
    }
}

pub fn load_split(data: &Preprocessed, s: &Settings, split: &str, system: System) -> Result<SplitData> {
    let src = read_ids(&data.file(split, "src.ids"))?;
    let tgt = read_ids(&data.file(split, "tgt.ids"))?;
    let chunks = read_chunks(&data.file(split, "chunks"))?;
    let references: Vec<Vec<String>> = read_lines(&s.require_path(&format!("{split}.target"))?)?
        .iter()
        .map(|l| words(l))
        .collect();
    let n = src.len();
    if tgt.len() != n || chunks.len() != n || references.len() != n {
        return Err(Error::data(
            Some(n.min(tgt.len()).min(chunks.len()).min(references.len()) + 1),
            format!("preprocessed {split} files are misaligned; rerun preprocess"),
        ));
    }
    let mut examples = Vec::with_capacity(n);
    for (i, ((src, tgt), seq)) in src.into_iter().zip(tgt).zip(&chunks).enumerate() {
        let mut ex = Example {
            line: i + 1,
            src,
            tgt,
            ..Example::default()
        };
        if system == System::Synst {
            ex.chunks = data.chunk_vocab.encode(seq).map_err(|e| Error::data(Some(i + 1), e.to_string()))?;
            ex.chunk_sizes = seq.iter().map(|c| c.size).collect();
        }
        check_example(&ex, system)?;
        examples.push(ex);
    }
    Ok(SplitData {
        examples,
        references,
        chunks,
    })
}

pub fn decode_all(model: &Model, data: &Preprocessed, sources: &[Vec<u32>], opts: &DecodeOptions) -> Result<Vec<DecodeResult>> {
    sources
        .iter()
        .map(|src| model.decode(src, Some(&data.chunk_vocab), opts))
        .collect()
}

#[derive(Debug, Clone)]
pub struct DevScores {
    pub bleu: f64,
    pub chunks: Option<ChunkAgreement>,
}

pub fn score(model: &Model, data: &Preprocessed, split: &SplitData, opts: &DecodeOptions) -> Result<DevScores> {
    let results = decode_all(model, data, &split.sources(), opts)?;
    let hyps: Vec<Vec<String>> = results.iter().map(|r| detokenize(&data.bpe, &r.tokens)).collect();
    let bleu = corpus_bleu(&hyps, &split.references, Smoothing::None)?.bleu;
    let chunks = if model.system() == System::Synst {
        let predicted: Vec<ChunkSequence> = results.iter().map(|r| data.chunk_vocab.decode(&r.chunks)).collect();
        Some(corpus_chunk_f1(&predicted, &split.chunks, false)?)
    } else {
        None
    };
    Ok(DevScores { bleu, chunks })
}
