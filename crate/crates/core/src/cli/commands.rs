use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use super::config::resolve_train_config;
use super::manifest::Recorder;
use super::{Command, EvaluateArgs, FinetuneArgs, PretrainArgs, SplitPart, TrainFlags};
use crate::corpus::{deduplicate, generate_synthetic, load_corpus, split, taxonomies_json, write_corpus, CorpusStore};
use crate::corpus::LabelTaxonomy;
use crate::error::{Error, Result};
use crate::evaluation::evaluate;
use crate::model::predict;
use crate::preprocess::{preprocess_line, preprocess_verse};
use crate::tokenizer::{encode, train_wordpiece, Vocab};
use crate::training::{finetune, load_checkpoint, pretrain, save_checkpoint, SplitInfo, TrainConfig};

pub(super) fn run(command: Command, argv: &[String]) -> Result<()> {
    match command {
        Command::Synth(a) => {
            let rec = Recorder::start("synth", argv);
            let corpus = generate_synthetic(a.n, a.seed, a.signal);
            write_corpus(&corpus, &a.out, '\t')?;
            let mut artifacts = vec![a.out.clone()];
            if let Some(path) = &a.taxonomy {
                write_text(path, &(serde_json::to_string_pretty(&taxonomies_json())? + "\n"))?;
                artifacts.push(path.clone());
            }
            rec.finish(json!({"n": a.n, "signal": a.signal}), Some(a.seed), artifacts)?;
        }
        Command::Preprocess(a) => {
            let mut rec = Recorder::start("preprocess", argv);
            rec.input(&a.corpus)?;
            let mut corpus = load_corpus(&a.corpus, '\t')?;
            if !a.keep_duplicates {
                corpus = deduplicate(&corpus);
            }
            let mut out = String::new();
            for r in &corpus.records {
                let v = preprocess_verse(r)?;
                out.push_str(&format!("{}\t{}\n", v.verse_id, v.line));
            }
            write_text(&a.out, &out)?;
            rec.finish(
                json!({"deduplicate": !a.keep_duplicates, "verses": corpus.len()}),
                None,
                vec![a.out],
            )?;
        }
        Command::TrainTokenizer(a) => {
            let mut rec = Recorder::start("train-tokenizer", argv);
            rec.input(&a.lines)?;
            let lines = read_lines(&a.lines)?;
            let vocab = train_wordpiece(&lines, a.vocab_size, a.min_frequency)?;
            vocab.save(&a.out)?;
            rec.finish(
                json!({"vocab_size": a.vocab_size, "min_frequency": a.min_frequency, "tokens": vocab.len()}),
                None,
                vec![a.out],
            )?;
        }
        Command::Encode(a) => {
            let mut rec = Recorder::start("encode", argv);
            rec.input(&a.lines)?;
            rec.input(&a.vocab)?;
            if a.max_len < 2 {
                return Err(Error::InvalidConfig(format!("max_len {} < 2", a.max_len)));
            }
            let vocab = Vocab::load(&a.vocab)?;
            let mut out = String::new();
            for line in read_lines(&a.lines)? {
                out.push_str(&serde_json::to_string(&encode(&line, &vocab, a.max_len))?);
                out.push('\n');
            }
            write_text(&a.out, &out)?;
            rec.finish(json!({"max_len": a.max_len}), None, vec![a.out])?;
        }
        Command::Pretrain(a) => run_pretrain(a, argv)?,
        Command::Finetune(a) => run_finetune(a, argv)?,
        Command::Evaluate(a) => run_evaluate(a, argv)?,
        Command::Predict(a) => {
            let ckpt = load_checkpoint(&a.ckpt)?;
            let vocab = Vocab::load(&a.vocab)?;
            ckpt.check_vocab(&vocab)?;
            let tax = LabelTaxonomy::for_task(a.task);
            let stdin = std::io::stdin();
            let mut stdout = std::io::stdout().lock();
            for line in stdin.lock().lines() {
                let line = line.map_err(|e| Error::io("<stdin>", e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let mut halves = line.splitn(2, '\t');
                let h1 = halves.next().unwrap_or_default();
                let text = preprocess_line(h1, halves.next())?;
                let p = predict(&encode(&text, &vocab, ckpt.config.max_len), &ckpt.config, &ckpt.params, a.task)?;
                let label = tax.name_of(p.label).unwrap_or("?");
                writeln!(stdout, "{label}\t{:.6}", p.confidence).map_err(|e| Error::io("<stdout>", e))?;
            }
        }
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Lines of a text file; a leading `id<TAB>` column is dropped.
fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split_once('\t').map_or(l, |(_, rest)| rest).to_string())
        .collect())
}

fn apply_flags(flags: &TrainFlags, t: &mut TrainConfig) {
    if let Some(s) = flags.seed {
        t.seed = s;
    }
    if let Some(s) = flags.steps {
        t.max_steps = s;
    }
    if let Some(lr) = flags.lr {
        t.lr = lr;
    }
    if let Some(b) = flags.batch_size {
        t.batch_size = b;
    }
}

fn run_pretrain(a: PretrainArgs, argv: &[String]) -> Result<()> {
    let mut rec = Recorder::start("pretrain", argv);
    rec.input(&a.lines)?;
    rec.input(&a.vocab)?;
    if let Some(c) = &a.train.config {
        rec.input(c)?;
    }
    let (mut model, train, _) = resolve_train_config(a.train.preset, a.train.config.as_deref(), |t| {
        apply_flags(&a.train, t)
    })?;
    let lines = read_lines(&a.lines)?;
    let vocab = Vocab::load(&a.vocab)?;
    if model.vocab_size != vocab.len() {
        log::info!("model vocab_size {} set to the vocabulary's {}", model.vocab_size, vocab.len());
        model.vocab_size = vocab.len();
    }
    let out = pretrain(&lines, &vocab, &model, &train)?;
    save_checkpoint(&out.checkpoint, &a.out)?;
    let last = out.losses.iter().rev().flatten().next().copied();
    rec.finish(
        json!({"model": out.checkpoint.config, "train": train, "final_loss": last}),
        Some(train.seed),
        vec![a.out],
    )?;
    Ok(())
}

/// Labeled `(preprocessed line, label)` pairs for one task.
fn task_pairs(corpus: &CorpusStore, tax: &LabelTaxonomy) -> Result<Vec<(String, usize)>> {
    corpus
        .labeled(tax)
        .map(|(r, l)| Ok((preprocess_verse(r)?.line, l)))
        .collect()
}

/// Deduplicated, task-filtered corpus split as described by `info`.
fn split_corpus(path: &Path, info: &SplitInfo, tax: &LabelTaxonomy) -> Result<(CorpusStore, CorpusStore)> {
    let corpus = deduplicate(&load_corpus(path, '\t')?).filter_labeled(tax);
    split(&corpus, info.ratio, info.seed, info.stratify.then_some(tax))
}

fn run_finetune(a: FinetuneArgs, argv: &[String]) -> Result<()> {
    let mut rec = Recorder::start("finetune", argv);
    for p in [&a.ckpt, &a.corpus, &a.vocab] {
        rec.input(p)?;
    }
    if let Some(c) = &a.train.config {
        rec.input(c)?;
    }
    let (_, mut train, file) = resolve_train_config(a.train.preset, a.train.config.as_deref(), |t| {
        apply_flags(&a.train, t)
    })?;
    let steps_in_file = file.as_ref().is_some_and(|v| v.get("max_steps").is_some());
    if a.train.steps.is_none() && !steps_in_file {
        return Err(Error::InvalidConfig("fine-tuning needs --steps (or max_steps in --config)".into()));
    }
    train.head_only |= a.head_only;
    let ckpt = load_checkpoint(&a.ckpt)?;
    let vocab = Vocab::load(&a.vocab)?;
    ckpt.check_vocab(&vocab)?;
    let tax = LabelTaxonomy::for_task(a.task);
    let info = SplitInfo {
        task: a.task,
        ratio: a.ratio,
        seed: train.seed,
        stratify: a.stratify,
    };
    let (train_part, val_part) = split_corpus(&a.corpus, &info, &tax)?;
    log::info!("{} training / {} validation verses", train_part.len(), val_part.len());
    let pairs = task_pairs(&train_part, &tax)?;
    let mut out = finetune(&ckpt, &vocab, &pairs, &tax, &train)?;
    out.checkpoint.split = Some(info.clone());
    save_checkpoint(&out.checkpoint, &a.out)?;
    rec.finish(
        json!({"task": a.task, "split": info, "train": train, "train_verses": train_part.len(),
               "final_loss": out.losses.last()}),
        Some(train.seed),
        vec![a.out],
    )?;
    Ok(())
}

fn run_evaluate(a: EvaluateArgs, argv: &[String]) -> Result<()> {
    let mut rec = Recorder::start("evaluate", argv);
    for p in [&a.ckpt, &a.corpus, &a.vocab] {
        rec.input(p)?;
    }
    let ckpt = load_checkpoint(&a.ckpt)?;
    let vocab = Vocab::load(&a.vocab)?;
    ckpt.check_vocab(&vocab)?;
    let tax = LabelTaxonomy::for_task(a.task);
    let corpus = match (a.split, &ckpt.split) {
        (SplitPart::All, _) | (_, None) => deduplicate(&load_corpus(&a.corpus, '\t')?).filter_labeled(&tax),
        (part, Some(info)) => {
            if info.task != a.task {
                log::warn!("checkpoint split was recorded for {}, evaluating {}", info.task, a.task);
            }
            let (train, val) = split_corpus(&a.corpus, info, &tax)?;
            if part == SplitPart::Train {
                train
            } else {
                val
            }
        }
    };
    let pairs = task_pairs(&corpus, &tax)?;
    let report = evaluate(&ckpt, &vocab, &pairs, &tax, Default::default())?;
    write_text(&a.out, &(report.to_json()? + "\n"))?;
    let table_path = sibling(&a.out, "txt");
    let csv_path = sibling(&a.out, "confusion.csv");
    let table = report.to_table();
    write_text(&table_path, &table)?;
    write_text(&csv_path, &report.confusion_csv())?;
    print!("{table}");
    rec.finish(
        json!({"task": a.task, "split": format!("{:?}", a.split).to_lowercase(), "accuracy": report.accuracy,
               "samples": report.total_samples}),
        ckpt.split.as_ref().map(|s| s.seed),
        vec![a.out, table_path, csv_path],
    )?;
    Ok(())
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}
