use rand_chacha::ChaCha8Rng;

use super::checkpoint::{save_checkpoint, Checkpoint};
use super::config::TrainConfig;
use super::pretrain::{BatchGradients, EpochSampler};
use crate::corpus::{LabelTaxonomy, TaskId};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{classify_on_tape, encode_on_tape, BoundParams, ClassifierHead, ModelConfig, ModelParams};
use crate::numerics::rng::{example_stream, stream, Stream};
use crate::numerics::{AdamWState, Tape};
use crate::tokenizer::{encode, TokenSequence, Vocab};

#[derive(Debug, Clone, PartialEq)]
pub struct TaskExample {
    pub seq: TokenSequence,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneOutput {
    pub checkpoint: Checkpoint,
    /// Mean cross-entropy per step.
    pub losses: Vec<f64>,
}

fn trainable(task: TaskId, head_only: bool) -> impl Fn(&str) -> bool {
    let head = format!("head.{task}.");
    move |name: &str| {
        if name.starts_with("head.") {
            name.starts_with(&head)
        } else {
            !head_only && !name.starts_with("mlm.")
        }
    }
}

/// Classification loss gradients for a batch; the loss is the mean
/// cross-entropy over examples.
pub fn finetune_gradients(
    params: &ModelParams,
    cfg: &ModelConfig,
    task: TaskId,
    batch: &[&TaskExample],
    head_only: bool,
    dropout: Option<(u64, u64)>,
    exec: Exec,
) -> Result<BatchGradients> {
    let slots = params.named_tensors().len();
    let parts = exec.map(batch, |i, ex| {
        let n = ex.seq.len().max(1);
        let mut rng: Option<ChaCha8Rng> = dropout
            .filter(|_| cfg.dropout > 0.0)
            .map(|(seed, step)| example_stream(seed, Stream::Dropout, step, i as u64));
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, params, trainable(task, head_only));
        let (w, b) = bound.head(task)?;
        let x = encode_on_tape(&mut tape, &bound, cfg, &ex.seq.ids[..n], &ex.seq.attention_mask[..n], rng.as_mut())?;
        let logits = classify_on_tape(&mut tape, x, w, b)?;
        let loss = tape.cross_entropy(logits, &[ex.label])?;
        let value = tape.scalar(loss);
        tape.backward(loss)?;
        Ok(Some((value, 1, bound.take_grads(&mut tape))))
    });
    BatchGradients::reduce(parts, slots)
}

/// Attaches a fresh head for `taxonomy.task_id` and trains on
/// `(preprocessed line, label)` pairs.
pub fn finetune(
    ckpt: &Checkpoint,
    vocab: &Vocab,
    train: &[(String, usize)],
    taxonomy: &LabelTaxonomy,
    cfg: &TrainConfig,
) -> Result<FinetuneOutput> {
    cfg.validate()?;
    ckpt.check_vocab(vocab)?;
    let classes = taxonomy.len();
    if let Some(&(_, label)) = train.iter().find(|(_, l)| *l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let task = taxonomy.task_id;
    let mc = ModelConfig {
        dropout: cfg.dropout,
        ..ckpt.config.clone()
    };
    let mut params = ckpt.params.clone();
    params.heads.insert(
        task,
        ClassifierHead::init(mc.hidden, classes, &mut stream(cfg.seed, Stream::HeadInit)),
    );
    let examples: Vec<TaskExample> = train
        .iter()
        .map(|(line, label)| TaskExample {
            seq: encode(line, vocab, mc.max_len),
            label: *label,
        })
        .collect();
    let sizes: Vec<usize> = params.named_tensors().iter().map(|(_, t)| t.numel()).collect();
    let mut opt = AdamWState::new(&sizes, cfg.lr, cfg.weight_decay);
    let mut sampler = EpochSampler::new(examples.len(), cfg.seed);
    let mut losses = Vec::with_capacity(cfg.max_steps as usize);
    for step in 0..cfg.max_steps {
        let batch: Vec<&TaskExample> = sampler.next_batch(cfg.batch_size).into_iter().map(|i| &examples[i]).collect();
        let bg = finetune_gradients(&params, &mc, task, &batch, cfg.head_only, Some((cfg.seed, step)), cfg.exec)?;
        let loss = bg.mean_loss();
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        opt.step(&mut params.tensors_mut(), &bg.grads)?;
        losses.push(loss);
        if cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0 {
            log::info!("step {} {task} loss {loss:.4}", step + 1);
        }
    }
    let checkpoint = Checkpoint {
        config: mc,
        params,
        optimizer: Some(opt),
        step: cfg.max_steps,
        ..ckpt.clone()
    };
    if let Some(path) = &cfg.checkpoint_path {
        save_checkpoint(&checkpoint, path)?;
    }
    Ok(FinetuneOutput { checkpoint, losses })
}
