use std::path::PathBuf;

use synst::data::{copy_task, generate, Pair, ToyConfig};
use synst::{Error, Result};

use crate::corpus::{write_lines, write_text};
use crate::settings::Settings;

/// Writes a synthetic corpus plus a `corpus.cfg` with its split paths,
/// ready to be included from an experiment config.
pub fn run(s: &Settings) -> Result<PathBuf> {
    let dir = s.path("synth.dir").unwrap_or_else(|| s.output().join("corpus"));
    let seed = s.seed()?;
    let kind = s.get("synth.kind").to_string();
    let mut cfg = String::new();
    for split in ["train", "dev", "test"] {
        let n: usize = s.parse(&format!("synth.{split}"))?;
        if n == 0 {
            continue;
        }
        let pairs: Vec<Pair> = match kind.as_str() {
            "toy" => generate(&ToyConfig { seed, ..ToyConfig::default() }, n, split),
            "copy" => copy_task(seed, n, s.parse("synth.copy_vocab")?, 3, 10, split),
            other => return Err(Error::config(format!("unknown synth.kind {other:?}"))),
        };
        let files = [
            ("source", "src", pairs.iter().map(|p| p.source.join(" ")).collect::<Vec<_>>()),
            ("target", "tgt", pairs.iter().map(|p| p.target.join(" ")).collect()),
            ("parses", "parse", pairs.iter().map(|p| p.parse.serialize()).collect()),
        ];
        for (key, ext, lines) in files {
            let path = dir.join(format!("{split}.{ext}"));
            write_lines(&path, lines)?;
            cfg.push_str(&format!("{split}.{key} = {}\n", path.display()));
        }
    }
    let cfg_path = dir.join("corpus.cfg");
    write_text(&cfg_path, &cfg)?;
    Ok(cfg_path)
}
