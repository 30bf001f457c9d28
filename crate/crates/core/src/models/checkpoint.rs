//! Self-describing checkpoint files: a UTF-8 header (format version, model
//! configuration, parameter manifest, optional optimizer state) terminated
//! by a `[data]` line, then raw little-endian f32 buffers in manifest order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Adam, AdamConfig, ParamStore, Tensor};

use super::config::ModelConfig;
use super::model::Model;

pub const MAGIC: &str = "synst-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

pub fn to_bytes(model: &Model, optimizer: Option<&Adam>) -> Vec<u8> {
    let mut head = format!("{MAGIC}\nversion {FORMAT_VERSION}\n[config]\n");
    head.push_str(&model.config.to_text());
    head.push_str("[params]\n");
    for (_, name, t) in model.params.iter() {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        head.push_str(&format!("{name} {}\n", dims.join("x")));
    }
    if let Some(adam) = optimizer {
        let c = &adam.config;
        let clip = c.clip_norm.map_or("none".to_string(), |x| format!("{x:?}"));
        head.push_str(&format!(
            "[optimizer]\nstep {}\nbeta1 {:?}\nbeta2 {:?}\neps {:?}\nclip {clip}\n",
            adam.step, c.beta1, c.beta2, c.eps
        ));
    }
    head.push_str("[data]\n");
    let mut out = head.into_bytes();
    let mut put = |xs: &[f32]| {
        for x in xs {
            out.extend_from_slice(&x.to_le_bytes());
        }
    };
    for (_, _, t) in model.params.iter() {
        put(t.data());
    }
    if let Some(adam) = optimizer {
        for m in &adam.m {
            put(m);
        }
        for v in &adam.v {
            put(v);
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<(Model, Option<Adam>)> {
    const END: &[u8] = b"[data]\n";
    let split = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::Checkpoint("missing [data] marker".into()))?;
    let head = std::str::from_utf8(&bytes[..split]).map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
    let mut data = &bytes[split + END.len()..];

    let mut lines = head.lines();
    if lines.next() != Some(MAGIC) {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = lines
        .next()
        .and_then(|l| l.strip_prefix("version "))
        .and_then(|v| v.parse::<u32>().ok())
        .ok_or_else(|| Error::Checkpoint("missing format version".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let mut section = "";
    let mut config_text = String::new();
    let mut manifest: Vec<(String, Vec<usize>)> = Vec::new();
    let mut opt: Vec<(String, String)> = Vec::new();
    for line in lines {
        if line.starts_with('[') {
            section = line;
            continue;
        }
        match section {
            "[config]" => {
                config_text.push_str(line);
                config_text.push('\n');
            }
            "[params]" => {
                let (name, dims) = line
                    .rsplit_once(' ')
                    .ok_or_else(|| Error::Checkpoint(format!("bad manifest line {line:?}")))?;
                let shape = dims
                    .split('x')
                    .map(|d| d.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::Checkpoint(format!("bad shape in {line:?}")))?;
                manifest.push((name.to_string(), shape));
            }
            "[optimizer]" => {
                let (k, v) = line
                    .split_once(' ')
                    .ok_or_else(|| Error::Checkpoint(format!("bad optimizer line {line:?}")))?;
                opt.push((k.to_string(), v.to_string()));
            }
            _ => return Err(Error::Checkpoint(format!("unexpected header line {line:?}"))),
        }
    }
    let config = ModelConfig::from_text(&config_text)?;

    let mut take = |n: usize| -> Result<Vec<f32>> {
        if data.len() < n * 4 {
            return Err(Error::Checkpoint("truncated data section".into()));
        }
        let (now, rest) = data.split_at(n * 4);
        data = rest;
        Ok(now
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    };
    let mut params = ParamStore::new();
    for (name, shape) in &manifest {
        let n = shape.iter().product();
        params.insert(name.clone(), Tensor::new(shape, take(n)?)?)?;
    }
    let adam = if opt.is_empty() {
        None
    } else {
        let get = |key: &str| -> Result<&str> {
            opt.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Checkpoint(format!("optimizer field {key} missing")))
        };
        let num = |key: &str| -> Result<f64> {
            get(key)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad optimizer field {key}")))
        };
        let clip = match get("clip")? {
            "none" => None,
            _ => Some(num("clip")?),
        };
        let config = AdamConfig {
            beta1: num("beta1")?,
            beta2: num("beta2")?,
            eps: num("eps")?,
            clip_norm: clip,
        };
        let step = get("step")?
            .parse()
            .map_err(|_| Error::Checkpoint("bad optimizer step".into()))?;
        let sizes: Vec<usize> = manifest.iter().map(|(_, s)| s.iter().product()).collect();
        let m = sizes.iter().map(|&n| take(n)).collect::<Result<Vec<_>>>()?;
        let v = sizes.iter().map(|&n| take(n)).collect::<Result<Vec<_>>>()?;
        Some(Adam { config, step, m, v })
    };
    if !data.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", data.len())));
    }
    let model = Model::with_params(config, params)?;
    Ok((model, adam))
}

pub fn save(path: &Path, model: &Model, optimizer: Option<&Adam>) -> Result<()> {
    std::fs::write(path, to_bytes(model, optimizer))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(Model, Option<Adam>)> {
    from_bytes(&std::fs::read(path)?)
}
