//! Finite-difference checks of every tensor primitive and of a full
//! one-layer model step, shared by the unit suites and the acceptance run.
#![allow(dead_code)]

use rand::Rng;
use synst::data::{build_examples, chunk_split, generate, learn_bpe, ChunkOptions, ToyConfig};
use synst::models::{batch_loss, Architecture, ModelConfig, System};
use synst::rng::SeedStreams;
use synst::tensor::*;
use synst::treebank::ChunkVocab;

pub const PRIMITIVE_TOL: f64 = 1e-4;
pub const MODEL_TOL: f64 = 1e-3;
const EPS: f64 = 1e-5;

pub fn random_store(seed: u64, shapes: &[(&str, &[usize])]) -> (ParamStore<f64>, Vec<ParamId>) {
    let mut rng = SeedStreams::new(seed).stream("gradcheck");
    let mut store = ParamStore::new();
    let ids = shapes
        .iter()
        .map(|(n, s)| store.uniform(n, s, 1.0, &mut rng))
        .collect();
    (store, ids)
}

/// Projects a tensor-valued output to a scalar with fixed random weights so
/// every output entry contributes a distinct gradient.
pub fn probe(g: &mut Graph<'_, f64>, y: Var, seed: u64) -> synst::Result<Var> {
    let shape = g.shape(y).to_vec();
    let mut rng = SeedStreams::new(seed).stream("probe");
    let n: usize = shape.iter().product();
    let w = Tensor::new(&shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let w = g.input(w);
    let p = g.mul(y, w)?;
    Ok(g.sum(p))
}

pub fn matmul() -> Vec<GradCheckReport> {
    let mut out = Vec::new();
    for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
        let sa: &[usize] = if ta { &[4, 3] } else { &[3, 4] };
        let sb: &[usize] = if tb { &[5, 4] } else { &[4, 5] };
        let (store, ids) = random_store(11, &[("a", sa), ("b", sb)]);
        out.push(
            grad_check(&store, &[], EPS, |g| {
                let y = g.matmul_t(Var::Param(ids[0]), Var::Param(ids[1]), ta, tb)?;
                probe(g, y, 2)
            })
            .unwrap(),
        );
    }
    let (store, ids) = random_store(12, &[("a", &[3, 4])]);
    out.push(
        grad_check(&store, &[], EPS, |g| {
            let a = Var::Param(ids[0]);
            let y = g.matmul_t(a, a, false, true)?;
            probe(g, y, 3)
        })
        .unwrap(),
    );
    out
}

pub fn elementwise() -> Vec<GradCheckReport> {
    let (store, ids) = random_store(13, &[("a", &[3, 4]), ("b", &[3, 4]), ("c", &[4])]);
    let (a, b, c) = (Var::Param(ids[0]), Var::Param(ids[1]), Var::Param(ids[2]));
    let r = grad_check(&store, &[], EPS, |g| {
        let s = g.add(a, b)?;
        let r = g.add(s, c)?;
        let m = g.mul(r, a)?;
        let k = g.scale(m, -0.7);
        let y = g.relu(k);
        probe(g, y, 4)
    })
    .unwrap();
    let sq = grad_check(&store, &[], EPS, |g| {
        let m = g.mul(a, a)?;
        Ok(g.sum(m))
    })
    .unwrap();
    vec![r, sq]
}

pub fn layer_norm() -> Vec<GradCheckReport> {
    let (store, ids) = random_store(14, &[("x", &[4, 6]), ("gain", &[6]), ("bias", &[6])]);
    vec![grad_check(&store, &[], EPS, |g| {
        let y = g.layer_norm(Var::Param(ids[0]), Var::Param(ids[1]), Var::Param(ids[2]))?;
        probe(g, y, 5)
    })
    .unwrap()]
}

pub fn embed_and_gather() -> Vec<GradCheckReport> {
    let (store, ids) = random_store(15, &[("table", &[5, 3])]);
    vec![grad_check(&store, &[], EPS, |g| {
        let e = g.embed(Var::Param(ids[0]), &[4, 1, 1, 0])?;
        let y = g.gather_rows(e, &[3, 1, 1])?;
        probe(g, y, 6)
    })
    .unwrap()]
}

pub fn softmax() -> Vec<GradCheckReport> {
    let (store, ids) = random_store(16, &[("x", &[4, 4])]);
    let mask = AttentionMask::causal(4);
    [None, Some(&mask)]
        .into_iter()
        .map(|m| {
            grad_check(&store, &[], EPS, |g| {
                let y = g.softmax(Var::Param(ids[0]), m)?;
                probe(g, y, 7)
            })
            .unwrap()
        })
        .collect()
}

pub fn attention() -> Vec<GradCheckReport> {
    let (store, ids) = random_store(17, &[("q", &[9, 4]), ("k", &[9, 4]), ("v", &[9, 4])]);
    let segments = vec![
        AttnSegment::square(0, 3, MaskKind::Causal),
        AttnSegment {
            q_start: 3,
            q_len: 4,
            k_start: 3,
            k_len: 4,
            q_offset: 0,
            mask: MaskKind::GroupCausal(2),
        },
        AttnSegment::cross(7, 2, 0, 9),
    ];
    [1, 2]
        .into_iter()
        .map(|heads| {
            grad_check(&store, &[], EPS, |g| {
                let y = g.attention(Var::Param(ids[0]), Var::Param(ids[1]), Var::Param(ids[2]), heads, segments.clone())?;
                probe(g, y, 8)
            })
            .unwrap()
        })
        .collect()
}

pub fn dropout() -> Vec<GradCheckReport> {
    let (store, ids) = random_store(18, &[("x", &[5, 4])]);
    vec![grad_check_training(&store, &[], EPS, 99, |g| {
        let y = g.dropout(Var::Param(ids[0]), 0.4);
        probe(g, y, 9)
    })
    .unwrap()]
}

pub fn cross_entropy() -> Vec<GradCheckReport> {
    let (store, ids) = random_store(19, &[("logits", &[4, 6])]);
    [0.0, 0.1]
        .into_iter()
        .map(|smoothing| {
            grad_check(&store, &[], EPS, |g| {
                g.cross_entropy(Var::Param(ids[0]), &[Some(2), None, Some(5), Some(0)], smoothing)
            })
            .unwrap()
        })
        .collect()
}

/// Every primitive family by name.
pub fn primitives() -> Vec<(&'static str, Vec<GradCheckReport>)> {
    vec![
        ("matmul", matmul()),
        ("elementwise", elementwise()),
        ("layer_norm", layer_norm()),
        ("embed_gather", embed_and_gather()),
        ("softmax", softmax()),
        ("attention", attention()),
        ("dropout", dropout()),
        ("cross_entropy", cross_entropy()),
    ]
}

/// Full teacher-forced loss of a one-layer encoder-decoder on two toy
/// sentences, differentiated with respect to every parameter.
pub fn one_layer_model(system: System) -> GradCheckReport {
    let pairs = generate(&ToyConfig::default(), 3, "models-test");
    let bpe = learn_bpe(&pairs, 300).unwrap();
    let opts = ChunkOptions::default();
    let chunks = chunk_split(&pairs, &bpe, &opts, 3, 0);
    let vocab = ChunkVocab::build(opts.k, &chunks);
    let examples = build_examples(&pairs, &bpe, Some((&chunks, &vocab))).unwrap();
    let config = ModelConfig {
        system,
        k: match system {
            System::Vanilla => 1,
            System::Sat => 2,
            System::Synst => 6,
        },
        dim: 8,
        heads: 2,
        ff_dim: 12,
        encoder_layers: 1,
        decoder_layers: 1,
        parse_layers: 1,
        dropout: 0.0,
        token_vocab: bpe.vocab().len(),
        chunk_vocab: vocab.len(),
        max_len: 48,
        seed: 5,
        ..ModelConfig::default()
    };
    let mut store = ParamStore::<f64>::new();
    let arch = Architecture::build(&config, &mut store).unwrap();
    let batch = &examples[..2];
    grad_check(&store, &[], EPS, |g| Ok(batch_loss(&arch, &config, g, batch)?.total)).unwrap()
}

pub fn worst(reports: &[GradCheckReport]) -> f64 {
    reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max)
}
