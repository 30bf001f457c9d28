use std::path::PathBuf;

use synst::data::detokenize;
use synst::models::{checkpoint, DecodeResult, System};
use synst::{Error, Result};

use crate::corpus::{read_chunks, read_lines, words, write_lines, Preprocessed};
use crate::settings::Settings;

pub const PASSES_HEADER: &str = "line,passes,emitted,tokens,chunks,truncated";

#[derive(Debug, Clone)]
pub struct Translations {
    pub output: PathBuf,
    pub lines: Vec<String>,
    pub chunk_lines: Option<Vec<String>>,
    pub results: Vec<DecodeResult>,
}

pub fn checkpoint_path(s: &Settings) -> PathBuf {
    s.path("translate.checkpoint")
        .unwrap_or_else(|| s.run_dir().join("best.ckpt"))
}

pub fn run(s: &Settings) -> Result<Translations> {
    let data = Preprocessed::load(&s.data_dir())?;
    let (model, _) = checkpoint::load(&checkpoint_path(s))?;
    let input = match s.path("translate.input") {
        Some(p) => p,
        None => s.require_path("dev.source")?,
    };
    let output = s
        .path("translate.output")
        .unwrap_or_else(|| s.output().join("translate").join(format!("{}.txt", s.run_name())));
    let opts = s.decode_options()?;
    let sources = read_lines(&input)?;
    let gold = match s.path("translate.gold_chunks") {
        Some(path) => {
            if model.system() != System::Synst {
                return Err(Error::config("gold chunks need a SynST checkpoint"));
            }
            let gold = read_chunks(&path)?;
            if gold.len() != sources.len() {
                return Err(Error::data(
                    Some(gold.len().min(sources.len()) + 1),
                    format!("{} has {} lines but the input has {}", path.display(), gold.len(), sources.len()),
                ));
            }
            Some(gold)
        }
        None => None,
    };

    let mut results = Vec::with_capacity(sources.len());
    for (i, line) in sources.iter().enumerate() {
        let src = data.encode(&words(line));
        let r = match &gold {
            Some(g) => {
                let ids = data.chunk_vocab.encode(&g[i]).map_err(|e| Error::data(Some(i + 1), e.to_string()))?;
                model.synst_gold(&src, &data.chunk_vocab, &ids)
            }
            None => model.decode(&src, Some(&data.chunk_vocab), &opts),
        }
        .map_err(|e| match e {
            Error::Data { line: None, message } => Error::data(Some(i + 1), message),
            other => other,
        })?;
        results.push(r);
    }

    let lines: Vec<String> = results.iter().map(|r| detokenize(&data.bpe, &r.tokens).join(" ")).collect();
    write_lines(&output, &lines)?;
    let chunk_lines = (model.system() == System::Synst).then(|| {
        results
            .iter()
            .map(|r| data.chunk_vocab.decode(&r.chunks).to_line())
            .collect::<Vec<_>>()
    });
    if let Some(c) = &chunk_lines {
        write_lines(&output.with_extension("chunks"), c)?;
    }
    let stats = std::iter::once(PASSES_HEADER.to_string()).chain(results.iter().enumerate().map(|(i, r)| {
        format!("{},{},{},{},{},{}", i + 1, r.passes, r.emitted, r.tokens.len(), r.chunks.len(), r.truncated)
    }));
    write_lines(&output.with_extension("passes.csv"), stats)?;
    Ok(Translations {
        output,
        lines,
        chunk_lines,
        results,
    })
}
