use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::io::Write;

fn poembert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poembert"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = poembert(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Pipeline {
    dir: tempfile::TempDir,
}

impl Pipeline {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// synth, preprocess and train-tokenizer for the gender task.
    fn prepared(n: &str) -> Self {
        let p = Pipeline {
            dir: tempfile::tempdir().unwrap(),
        };
        let (corpus, lines, vocab) = (p.path("corpus.tsv"), p.path("lines.txt"), p.path("vocab.txt"));
        ok(&["synth", "--n", n, "--seed", "3", "--signal", "gender", "--out", s(&corpus)]);
        ok(&["preprocess", "--corpus", s(&corpus), "--out", s(&lines)]);
        ok(&["train-tokenizer", "--lines", s(&lines), "--vocab-size", "300", "--out", s(&vocab)]);
        p
    }
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(poembert(&["bogus"]).status.code(), Some(2));
    assert_eq!(poembert(&["pretrain", "--preset", "huge"]).status.code(), Some(2));
    assert_eq!(poembert(&["--help"]).status.code(), Some(0));
}

#[test]
fn domain_errors_exit_one_with_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.tsv");
    let out = poembert(&["preprocess", "--corpus", s(&missing), "--out", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Io"));
}

#[test]
fn pipeline_writes_manifests_and_leaves_inputs_alone() {
    let p = Pipeline::prepared("200");
    let corpus_before = std::fs::read(p.path("corpus.tsv")).unwrap();
    let vocab_before = std::fs::read(p.path("vocab.txt")).unwrap();
    let (pre, ft, report) = (p.path("pre.ckpt"), p.path("ft.ckpt"), p.path("report.json"));
    ok(&["pretrain", "--lines", s(&p.path("lines.txt")), "--vocab", s(&p.path("vocab.txt")), "--preset", "tiny", "--steps", "5", "--out", s(&pre)]);
    ok(&[
        "finetune", "--ckpt", s(&pre), "--task", "gender", "--corpus", s(&p.path("corpus.tsv")), "--vocab",
        s(&p.path("vocab.txt")), "--preset", "tiny", "--steps", "5", "--out", s(&ft),
    ]);
    ok(&[
        "evaluate", "--ckpt", s(&ft), "--corpus", s(&p.path("corpus.tsv")), "--task", "gender", "--vocab",
        s(&p.path("vocab.txt")), "--out", s(&report),
    ]);
    for artifact in [&pre, &ft, &report] {
        let manifest = PathBuf::from(format!("{}.manifest.json", artifact.display()));
        let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
        assert!(m["inputs"].as_array().is_some_and(|a| !a.is_empty()), "{manifest:?}");
        assert!(m["seed"].is_u64());
    }
    assert!(p.path("report.txt").exists());
    assert!(p.path("report.confusion.csv").exists());
    assert_eq!(std::fs::read(p.path("corpus.tsv")).unwrap(), corpus_before);
    assert_eq!(std::fs::read(p.path("vocab.txt")).unwrap(), vocab_before);
}

#[test]
fn preprocessing_and_tokenizer_training_are_idempotent() {
    let p = Pipeline::prepared("150");
    ok(&["preprocess", "--corpus", s(&p.path("corpus.tsv")), "--out", s(&p.path("lines2.txt"))]);
    ok(&["train-tokenizer", "--lines", s(&p.path("lines2.txt")), "--vocab-size", "300", "--out", s(&p.path("vocab2.txt"))]);
    ok(&["encode", "--lines", s(&p.path("lines.txt")), "--vocab", s(&p.path("vocab.txt")), "--out", s(&p.path("a.jsonl"))]);
    ok(&["encode", "--lines", s(&p.path("lines.txt")), "--vocab", s(&p.path("vocab.txt")), "--out", s(&p.path("b.jsonl"))]);
    let read = |n: &str| std::fs::read(p.path(n)).unwrap();
    assert_eq!(read("lines.txt"), read("lines2.txt"));
    assert_eq!(read("vocab.txt"), read("vocab2.txt"));
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
}

#[test]
fn predict_reads_verses_and_prints_label_and_confidence() {
    let p = Pipeline::prepared("200");
    let (pre, ft) = (p.path("pre.ckpt"), p.path("ft.ckpt"));
    ok(&["pretrain", "--lines", s(&p.path("lines.txt")), "--vocab", s(&p.path("vocab.txt")), "--preset", "tiny", "--steps", "20", "--out", s(&pre)]);
    ok(&[
        "finetune", "--ckpt", s(&pre), "--task", "gender", "--corpus", s(&p.path("corpus.tsv")), "--vocab",
        s(&p.path("vocab.txt")), "--preset", "tiny", "--steps", "20", "--out", s(&ft),
    ]);
    let corpus = std::fs::read_to_string(p.path("corpus.tsv")).unwrap();
    let input: String = corpus
        .lines()
        .skip(1)
        .take(10)
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            format!("{}\t{}\n", f[1], f[2])
        })
        .collect();
    let mut child = Command::new(env!("CARGO_BIN_EXE_poembert"))
        .args(["predict", "--ckpt", s(&ft), "--vocab", s(&p.path("vocab.txt")), "--task", "gender"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 10);
    for line in text.lines() {
        let (label, conf) = line.split_once('\t').unwrap();
        assert!(["Male", "Female"].contains(&label), "{line}");
        let conf: f64 = conf.parse().unwrap();
        assert!((0.5..=1.0).contains(&conf), "{line}");
    }
}
