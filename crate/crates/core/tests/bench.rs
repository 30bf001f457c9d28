use synst::bench::*;
use synst::data::{build_examples, chunk_split, generate, learn_bpe, ChunkOptions, ToyConfig};
use synst::models::{DecodeOptions, Model, ModelConfig, System};
use synst::treebank::{extract_chunks, parse_bracketed, ChunkSequence, ChunkVocab, ParseTree, WordSizer};

fn setup() -> (Vec<Vec<u32>>, Vec<Model>, ChunkVocab) {
    let pairs = generate(&ToyConfig::default(), 12, "bench-test");
    let bpe = learn_bpe(&pairs, 300).unwrap();
    let opts = ChunkOptions::default();
    let chunks = chunk_split(&pairs, &bpe, &opts, 1, 0);
    let vocab = ChunkVocab::build(opts.k, &chunks);
    let ex = build_examples(&pairs, &bpe, Some((&chunks, &vocab))).unwrap();
    let models = [System::Vanilla, System::Synst]
        .into_iter()
        .map(|system| {
            Model::new(ModelConfig {
                system,
                k: if system == System::Synst { 6 } else { 1 },
                dim: 16,
                heads: 2,
                ff_dim: 16,
                encoder_layers: 1,
                decoder_layers: 1,
                token_vocab: bpe.vocab().len(),
                chunk_vocab: vocab.len(),
                max_len: 32,
                ..ModelConfig::default()
            })
            .unwrap()
        })
        .collect();
    (ex.into_iter().map(|e| e.src).collect(), models, vocab)
}

fn opts(beam: usize) -> DecodeOptions {
    DecodeOptions { beam, max_len: 16, max_chunks: 8 }
}

#[test]
fn baseline_against_itself() {
    let (src, models, _) = setup();
    let e = BenchEntry { label: "vanilla-b4", model: &models[0], chunk_vocab: None, options: opts(4) };
    let report = bench_decode("toy", &src, &[e, BenchEntry { label: "again", ..e }], &BenchConfig { runs: 3, ..Default::default() }).unwrap();
    assert_eq!(report.rows[0].speedup, 1.0);
    let s = report.rows[1].speedup;
    assert!(s > 0.5 && s < 2.0, "{s}");
    assert_eq!(report.rows[0].passes, report.rows[1].passes);
    assert!(report.rows.iter().all(|r| r.passes_stable && r.run_means_ns.len() == 3));
}

#[test]
fn csv_has_fixed_columns() {
    let (src, models, vocab) = setup();
    let entries = [
        BenchEntry { label: "vanilla-b4", model: &models[0], chunk_vocab: None, options: opts(4) },
        BenchEntry { label: "synst", model: &models[1], chunk_vocab: Some(&vocab), options: opts(1) },
    ];
    let report = bench_decode("toy", &src[..4], &entries, &BenchConfig { runs: 1, warmup: false, ..Default::default() }).unwrap();
    let csv = report.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let row: Vec<&str> = lines.nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..4], ["toy", "synst", "6", "1"]);
    assert_eq!(row.len(), 7);
    assert!(report.to_table().contains("synst"));
}

#[test]
fn guards() {
    let (src, models, _) = setup();
    let e = [BenchEntry { label: "v", model: &models[0], chunk_vocab: None, options: opts(1) }];
    assert!(bench_decode("toy", &src, &e, &BenchConfig { runs: 0, ..Default::default() }).is_err());
    assert!(bench_decode("toy", &src, &e, &BenchConfig { threads: 2, ..Default::default() }).is_err());
    assert!(bench_decode("toy", &src, &e, &BenchConfig { baseline: 3, ..Default::default() }).is_err());
}

#[test]
fn gold_chunk_pass_counts_are_below_token_counts() {
    let pairs = generate(&ToyConfig::default(), 300, "bench-count");
    let (mut synst, mut vanilla) = (0, 0);
    for p in &pairs {
        let c = extract_chunks(&p.parse, 6, &WordSizer);
        synst += c.len() + 2;
        vanilla += p.target.len() + 1;
    }
    assert!(synst < vanilla);
}

fn flat(words: usize, phrase: usize) -> ParseTree {
    let mut text = String::from("(S");
    let mut i = 0;
    while i < words {
        let n = phrase.min(words - i);
        text.push_str(" (NP");
        for _ in 0..n {
            text.push_str(&format!(" (NN w{i})"));
            i += 1;
        }
        text.push(')');
    }
    text.push(')');
    parse_bracketed(&text).unwrap()
}

/// Speedup implied by pass counts alone: autoregressive passes over SynST passes.
fn pass_ratio(trees: &Vec<ParseTree>, _k: usize, chunks: &[ChunkSequence]) -> synst::Result<f64> {
    let ar: usize = trees.iter().map(|t| t.leaf_count() + 1).sum();
    let two_stage: usize = chunks.iter().map(|c| c.len() + 2).sum();
    Ok(ar as f64 / two_stage as f64)
}

#[test]
fn longer_constituents_give_larger_speedups() {
    let short: Vec<ParseTree> = (0..20).map(|_| flat(12, 1)).collect();
    let long: Vec<ParseTree> = (0..20).map(|_| flat(12, 4)).collect();
    let rows = chunk_size_vs_speedup(
        &[("short", short), ("long", long)],
        &[6],
        |trees, k| Ok(trees.iter().map(|t| extract_chunks(t, k, &WordSizer)).collect()),
        pass_ratio,
    )
    .unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].average_chunk_size > rows[0].average_chunk_size);
    assert!(rows[1].speedup >= rows[0].speedup);
    assert!(size_speedup_csv(&rows).starts_with("dataset,k,average_chunk_size,speedup\n"));
}

#[test]
fn size_table_edge_cases() {
    let one: Vec<ParseTree> = vec![flat(4, 2)];
    let chunk = |t: &Vec<ParseTree>, k: usize| Ok(t.iter().map(|t| extract_chunks(t, k, &WordSizer)).collect());
    let rows = chunk_size_vs_speedup(&[("one", one.clone())], &[2], chunk, pass_ratio).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].average_chunk_size, 2.0);
    assert!(chunk_size_vs_speedup(&[("one", one)], &[], chunk, pass_ratio).is_err());
}
