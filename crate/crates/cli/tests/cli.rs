use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::sync::OnceLock;

use synst_cli::{run_args, RunError, Settings};
use tempfile::TempDir;

const TINY_MODEL: &str = "\
model.dim = 32
model.heads = 4
model.ff_dim = 64
model.encoder_layers = 1
model.decoder_layers = 1
model.dropout = 0.0
decode.max_len = 40
decode.max_chunks = 20
";

struct Exp {
    dir: TempDir,
    cfg: PathBuf,
}

impl Exp {
    /// Synthesizes a corpus and writes `exp.cfg` including it.
    fn synth(kind: &str, train: usize, dev: usize, extra: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().display().to_string();
        run(&["synth", "--kind", kind, "--dir", &format!("{root}/corpus"), "--train", &train.to_string(), "--dev", &dev.to_string(), "--test", "0"]).unwrap();
        Self::with_config(dir, &format!("include = corpus/corpus.cfg\n{extra}"))
    }

    fn with_config(dir: TempDir, body: &str) -> Self {
        let cfg = dir.path().join("exp.cfg");
        fs::write(&cfg, format!("output = {}\n{body}", dir.path().display())).unwrap();
        Self { dir, cfg }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Result<String, RunError> {
        let mut full = vec!["-c", self.cfg.to_str().unwrap()];
        full.extend_from_slice(args);
        run(&full)
    }

    fn read(&self, rel: &str) -> String {
        fs::read_to_string(self.path(rel)).unwrap()
    }
}

fn run(args: &[&str]) -> Result<String, RunError> {
    run_args(std::iter::once("synst").chain(args.iter().copied()))
}

fn kind(r: Result<String, RunError>) -> String {
    match r {
        Err(RunError::Failed(e)) => e.kind().to_string(),
        Err(RunError::Usage(e)) => format!("usage: {e}"),
        Ok(out) => panic!("expected an error, got {out}"),
    }
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn three_line_corpus(parses: &str) -> Exp {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("c");
    fs::create_dir(&c).unwrap();
    fs::write(c.join("s"), "der hund\nein kleines kind\nes regnet\n").unwrap();
    fs::write(c.join("t"), "the dog\na small child\nit rains\n").unwrap();
    fs::write(c.join("p"), parses).unwrap();
    let split = |prefix: &str| {
        format!(
            "{prefix}.source = {0}/s\n{prefix}.target = {0}/t\n{prefix}.parses = {0}/p\n",
            c.display()
        )
    };
    let body = format!("{}{}bpe.merges = 10\n", split("train"), split("dev"));
    Exp::with_config(dir, &body)
}

const THREE_PARSES: &str = "(S (NP (DT the) (NN dog)))\n(NP (DT a) (JJ small) (NN child))\n(S (NP (PRP it)) (VP (VBZ rains)))\n";

#[test]
fn includes_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("base.cfg"), "# shared\nchunk.k = 4\nmodel.dim = 16\n").unwrap();
    fs::create_dir(dir.path().join("sub")).unwrap();
    fs::write(dir.path().join("sub/exp.cfg"), "include = ../base.cfg\nmodel.dim = 24\n").unwrap();
    let s = Settings::load(Some(&dir.path().join("sub/exp.cfg"))).unwrap();
    assert_eq!(s.get("chunk.k"), "4");
    assert_eq!(s.get("model.dim"), "24");
    assert_eq!(s.model_config(10, 5).unwrap().dim, 24);

    assert!(Settings::from_text("no.such.key = 1").is_err());
    assert!(Settings::from_text("missing equals").is_err());
    let looped = dir.path().join("loop.cfg");
    fs::write(&looped, "include = loop.cfg\n").unwrap();
    assert!(Settings::load(Some(&looped)).is_err());
}

#[test]
fn typed_flags_and_set_pairs_reach_settings() {
    use clap::Parser;
    use synst_cli::{settings_for, Cli};
    let cli = Cli::try_parse_from([
        "synst", "--seed", "9", "-o", "/x", "-s", "model.dim=48", "train", "--system", "sat", "--k", "2", "--run", "r", "--epochs", "3", "--resume",
    ])
    .unwrap();
    let s = settings_for(&cli.common, &cli.command).unwrap();
    assert_eq!(s.get("seed"), "9");
    assert_eq!(s.get("output"), "/x");
    assert_eq!(s.get("model.dim"), "48");
    assert_eq!(s.get("model.system"), "sat");
    assert_eq!(s.get("model.k"), "2");
    assert_eq!(s.get("train.epochs"), "3");
    assert_eq!(s.get("train.resume"), "true");
    assert_eq!(s.run_dir(), PathBuf::from("/x/runs/r"));

    // Every typed flag of every command names a declared key.
    let lines: [&[&str]; 7] = [
        &["synth", "--kind", "copy", "--dir", "d", "--train", "1", "--dev", "1", "--test", "1"],
        &["preprocess", "--merges", "3", "--k", "2", "--chunk-mode", "random", "--strip-labels", "--word-sizer", "false"],
        &["translate", "--run", "a", "--checkpoint", "c", "--input", "i", "--out", "o", "--beam", "2", "--max-len", "9", "--gold-chunks", "g"],
        &["evaluate", "--hyp", "h", "--ref", "r", "--hyp-chunks", "a", "--ref-chunks", "b", "--parsed-chunks", "c", "--smoothing", "exp", "--bag", "--csv", "x"],
        &["analyze", "chunk-stats", "--split", "train", "--ks", "1,2", "--word-sizer"],
        &["analyze", "layers", "--baseline", "b", "--checkpoints", "a,b", "--split", "dev", "--sentences", "3", "--runs", "2"],
        &["bench", "--entries", "a=b@4", "--split", "dev", "--runs", "2", "--sentences", "5", "--threads", "1"],
    ];
    for line in lines {
        let cli = Cli::try_parse_from(std::iter::once("synst").chain(line.iter().copied())).unwrap();
        settings_for(&cli.common, &cli.command).unwrap_or_else(|e| panic!("{line:?}: {e}"));
    }
}

#[test]
fn manifest_counts_lines() {
    let exp = three_line_corpus(THREE_PARSES);
    let out = exp.run(&["preprocess"]).unwrap();
    assert!(out.contains("input train.source 3 "));
    let manifest = exp.read("data/manifest.txt");
    for name in ["train.source", "train.target", "train.parses", "dev.source", "train.tgt.ids", "train.chunks"] {
        assert!(manifest.lines().any(|l| l.split(' ').nth(1) == Some(name) && l.split(' ').nth(2) == Some("3")), "{name}");
    }
    assert_eq!(exp.read("data/train.chunks").lines().count(), 3);
}

#[test]
fn preprocess_inputs_are_validated() {
    let exp = three_line_corpus(THREE_PARSES);
    fs::remove_file(exp.path("c/p")).unwrap();
    assert_eq!(kind(exp.run(&["preprocess"])), "io");

    let exp = three_line_corpus(&THREE_PARSES.lines().take(2).map(|l| format!("{l}\n")).collect::<String>());
    match exp.run(&["preprocess"]) {
        Err(RunError::Failed(synst::Error::Data { line, .. })) => assert_eq!(line, Some(3)),
        other => panic!("{other:?}"),
    }

    let exp = three_line_corpus(&THREE_PARSES.replace("small", "tiny"));
    match exp.run(&["preprocess"]) {
        Err(RunError::Failed(synst::Error::Data { line, .. })) => assert_eq!(line, Some(2)),
        other => panic!("{other:?}"),
    }

    let exp = three_line_corpus(&THREE_PARSES.replace("(S (NP (DT the)", "(S (NP (DT the"));
    assert_eq!(kind(exp.run(&["preprocess"])), "data");
}

#[test]
fn preprocess_is_deterministic() {
    for mode in ["fixed", "random"] {
        let a = Exp::synth("toy", 300, 50, "");
        a.run(&["preprocess", "--chunk-mode", mode]).unwrap();
        let first = snapshot(&a.path("data"));
        a.run(&["preprocess", "--chunk-mode", mode]).unwrap();
        assert_eq!(first, snapshot(&a.path("data")));

        let b = Exp::synth("toy", 300, 50, "");
        b.run(&["preprocess", "--chunk-mode", mode]).unwrap();
        assert_eq!(first, snapshot(&b.path("data")), "separate output directories");
    }
}

#[test]
fn copy_task_smoke_training() {
    // Documented budget: 1000 pairs, one layer, 10 epochs of 600-token batches.
    let exp = Exp::synth("copy", 1000, 100, &format!("{TINY_MODEL}bpe.merges = 0\ntrain.epochs = 10\n"));
    exp.run(&["preprocess"]).unwrap();
    let out = exp.run(&["train"]).unwrap();
    assert!(out.contains("(600 steps)"), "{out}");
    exp.run(&["translate", "--out", exp.path("hyp.txt").to_str().unwrap()]).unwrap();
    let table = exp
        .run(&["evaluate", "--hyp", exp.path("hyp.txt").to_str().unwrap(), "--ref", exp.path("corpus/dev.tgt").to_str().unwrap()])
        .unwrap();
    let csv = exp.read("eval/metrics.csv");
    let bleu: f64 = csv.lines().find_map(|l| l.strip_prefix("bleu,")).unwrap().parse().unwrap();
    assert!(bleu > 90.0, "{table}");
}

#[test]
fn resume_is_bit_exact() {
    let body = format!("{TINY_MODEL}model.system = synst\nmodel.k = 6\nmodel.dropout = 0.2\ntrain.eval_sentences = 20\n");
    let exp = Exp::synth("toy", 300, 30, &body);
    exp.run(&["preprocess"]).unwrap();
    exp.run(&["train", "--run", "straight", "--epochs", "2"]).unwrap();
    exp.run(&["train", "--run", "resumed", "--epochs", "1"]).unwrap();
    exp.run(&["train", "--run", "resumed", "--epochs", "2", "--resume"]).unwrap();
    assert_eq!(fs::read(exp.path("runs/straight/last.ckpt")).unwrap(), fs::read(exp.path("runs/resumed/last.ckpt")).unwrap());
    let strip = |log: String| -> Vec<String> { log.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect() };
    let straight = strip(exp.read("runs/straight/log.csv"));
    assert_eq!(straight.len(), 3);
    assert_eq!(straight, strip(exp.read("runs/resumed/log.csv")));
    assert_eq!(exp.read("runs/straight/state.txt"), exp.read("runs/resumed/state.txt"));
}

#[test]
fn training_rejects_bad_data_and_divergence() {
    let exp = Exp::synth("toy", 100, 10, &format!("{TINY_MODEL}model.system = synst\nmodel.k = 6\n"));
    exp.run(&["preprocess"]).unwrap();
    let chunks = exp.read("data/train.chunks");
    let (first, rest) = chunks.split_once('\n').unwrap();
    let (head, last) = first.rsplit_once(' ').unwrap();
    let size: usize = last.trim_start_matches(|c: char| !c.is_ascii_digit()).parse().unwrap();
    let label = last.trim_end_matches(|c: char| c.is_ascii_digit());
    fs::write(exp.path("data/train.chunks"), format!("{head} {label}{}\n{rest}", size % 6 + 1)).unwrap();
    match exp.run(&["train", "--epochs", "1"]) {
        Err(RunError::Failed(synst::Error::Data { line, .. })) => assert_eq!(line, Some(1)),
        other => panic!("{other:?}"),
    }

    let exp = Exp::synth("toy", 100, 10, TINY_MODEL);
    exp.run(&["preprocess"]).unwrap();
    assert_eq!(kind(exp.run(&["train", "--epochs", "2", "-s", "train.lr_factor=1e30"])), "numerical");
}

/// A toy experiment with trained vanilla and SynST runs (parse-decoder
/// depths 1 to 3).
fn trained() -> &'static Exp {
    static EXP: OnceLock<Exp> = OnceLock::new();
    EXP.get_or_init(|| {
        let exp = Exp::synth("toy", 2000, 60, &format!("{TINY_MODEL}model.k = 6\ntrain.epochs = 4\ntrain.eval_every = 4\n"));
        exp.run(&["preprocess"]).unwrap();
        exp.run(&["train", "--system", "vanilla", "--k", "1"]).unwrap();
        for m in 1..=3 {
            let m = m.to_string();
            exp.run(&["train", "--system", "synst", "--parse-layers", &m, "--run", &format!("synst-m{m}")]).unwrap();
        }
        exp
    })
}

#[test]
fn translate_modes() {
    let exp = trained();
    let out = |name: &str| exp.path(name).display().to_string();
    exp.run(&["translate", "--run", "synst-m1", "--out", &out("t/default.txt")]).unwrap();
    exp.run(&["translate", "--run", "synst-m1", "--beam", "1", "--out", &out("t/beam1.txt")]).unwrap();
    exp.run(&["translate", "--run", "synst-m1", "--out", &out("t/again.txt")]).unwrap();
    for ext in ["txt", "chunks", "passes.csv"] {
        let default = exp.read(&format!("t/default.{ext}"));
        assert_eq!(default, exp.read(&format!("t/beam1.{ext}")), "{ext}");
        assert_eq!(default, exp.read(&format!("t/again.{ext}")), "{ext}");
    }
    assert_eq!(exp.read("t/default.chunks").lines().count(), 60);

    let gold = out("data/dev.chunks");
    exp.run(&["translate", "--run", "synst-m1", "--gold-chunks", &gold, "--out", &out("t/gold.txt")]).unwrap();
    let passes = exp.read("t/gold.passes.csv");
    assert_eq!(passes.lines().next(), Some("line,passes,emitted,tokens,chunks,truncated"));
    assert!(passes.lines().skip(1).all(|l| l.split(',').nth(1) == Some("1")));
    assert_eq!(exp.read("t/gold.chunks"), exp.read("data/dev.chunks"));
    // Token counts follow the gold chunk sizes exactly.
    let tgt = exp.read("data/dev.tgt.ids");
    for (row, ids) in passes.lines().skip(1).zip(tgt.lines()) {
        assert_eq!(row.split(',').nth(3).unwrap(), ids.split(' ').count().to_string());
    }

    let short = out("short.chunks");
    fs::write(&short, exp.read("data/dev.chunks").lines().take(5).collect::<Vec<_>>().join("\n")).unwrap();
    assert_eq!(kind(exp.run(&["translate", "--run", "synst-m1", "--gold-chunks", &short])), "data");
    assert_eq!(kind(exp.run(&["translate", "--run", "vanilla", "--gold-chunks", &gold])), "config");

    exp.run(&["translate", "--run", "vanilla", "--beam", "4", "--out", &out("t/v4.txt")]).unwrap();
    assert!(!exp.path("t/v4.chunks").exists());
}

#[test]
fn evaluate_identity_and_chunks() {
    let exp = trained();
    let reference = exp.path("corpus/dev.tgt").display().to_string();
    let chunks = exp.path("data/dev.chunks").display().to_string();
    let csv = exp.path("eval/identity.csv").display().to_string();
    let table = exp
        .run(&["evaluate", "--hyp", &reference, "--ref", &reference, "--hyp-chunks", &chunks, "--ref-chunks", &chunks, "--csv", &csv])
        .unwrap();
    assert!(table.contains("bleu"));
    let text = exp.read("eval/identity.csv");
    assert_eq!(text.lines().next(), Some("metric,value"));
    for expected in ["bleu,100", "chunk_f1,1", "chunk_exact,1"] {
        assert!(text.lines().any(|l| l.starts_with(expected) && l[expected.len()..].trim_matches(|c| c == '.' || c == '0').is_empty()), "{expected}\n{text}");
    }
    let empty = exp.path("empty.txt").display().to_string();
    fs::write(&empty, "").unwrap();
    assert_eq!(kind(exp.run(&["evaluate", "--hyp", &empty, "--ref", &reference])), "data");
}

#[test]
fn chunk_stats_word_sizer() {
    let exp = trained();
    let out = exp.run(&["analyze", "chunk-stats", "--ks", "1,2,6", "--word-sizer"]).unwrap();
    let csv = exp.read("analysis/chunk_stats_dev.csv");
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][7], "1.000000", "{out}");
    assert_eq!(rows[0][3], "word");
    let sizes: Vec<f64> = rows.iter().map(|r| r[7].parse().unwrap()).collect();
    assert!(sizes[0] < sizes[1] && sizes[1] < sizes[2]);
    assert_eq!(kind(exp.run(&["analyze", "chunk-stats", "--ks", "0"])), "config");
}

#[test]
fn layer_sweep_cost_grows_with_depth() {
    let exp = trained();
    let ckpt = |run: &str| exp.path(&format!("runs/{run}/best.ckpt")).display().to_string();
    let list = [ckpt("synst-m3"), ckpt("synst-m1"), ckpt("synst-m2")].join(",");
    exp.run(&["analyze", "layers", "--baseline", &ckpt("vanilla"), "--checkpoints", &list, "--runs", "1"]).unwrap();
    let csv = exp.read("analysis/layer_sweep_dev.csv");
    let rows: Vec<Vec<f64>> = csv.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), [1.0, 2.0, 3.0]);
    assert!(rows.windows(2).all(|w| w[1][4] > w[0][4]), "{csv}");

    assert_eq!(kind(exp.run(&["analyze", "layers", "--baseline", &ckpt("synst-m1"), "--checkpoints", &list])), "config");
    assert_eq!(kind(exp.run(&["analyze", "layers", "--baseline", &ckpt("vanilla"), "--checkpoints", &ckpt("vanilla")])), "config");
}

#[test]
fn bench_command() {
    let exp = trained();
    let ckpt = |run: &str| exp.path(&format!("runs/{run}/best.ckpt")).display().to_string();
    let entries = format!("vanilla-b4={}@4,vanilla={},synst={}", ckpt("vanilla"), ckpt("vanilla"), ckpt("synst-m1"));
    let table = exp.run(&["bench", "--entries", &entries, "--runs", "2", "--sentences", "10"]).unwrap();
    assert!(table.contains("synst"));
    let csv = exp.read("bench/dev.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("dataset,system,k,b,mean_ns_per_sentence,speedup,mean_passes"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!((first[0], first[1], first[3], first[5]), ("dev", "vanilla-b4", "4", "1.0000"));
    assert_eq!(csv.lines().count(), 4);
    assert!(!exp.read("bench/dev.env.txt").is_empty());

    assert_eq!(kind(exp.run(&["bench", "--entries", &entries, "--threads", "2"])), "config");
    assert_eq!(kind(exp.run(&["bench", "--entries", &entries, "--runs", "0"])), "config");
    assert_eq!(kind(exp.run(&["bench", "--entries", "nolabel"])), "config");
}

#[test]
fn binary_reports_one_line_errors() {
    let bin = env!("CARGO_BIN_EXE_synst");
    let out = Process::new(bin).args(["-c", "/nonexistent/exp.cfg", "preprocess"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[io]: "), "{err}");

    let out = Process::new(bin).args(["-s", "model.colour=red", "preprocess"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error[config]: "));

    let out = Process::new(bin).args(["frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[usage]: "));

    let out = Process::new(bin).arg("--help").output().unwrap();
    assert!(out.status.success());
}
