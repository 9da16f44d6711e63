use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{save_checkpoint, Checkpoint};
use super::config::TrainConfig;
use super::masking::apply_mlm_masking;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{encode_on_tape, mlm_logits_on_tape, BoundParams, ModelConfig, ModelParams};
use crate::numerics::rng::{example_stream, stream, Stream};
use crate::numerics::{AdamWState, Tape, IGNORE_INDEX};
use crate::tokenizer::{encode, TokenSequence, Vocab};

/// Summed gradients of one batch. `grads` follows
/// [`ModelParams::named_tensors`] order and is already divided by `count`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradients {
    /// Sum of per-target losses.
    pub loss_sum: f64,
    /// Number of targets (masked positions or examples).
    pub count: usize,
    pub grads: Vec<Option<Vec<f64>>>,
}

impl BatchGradients {
    pub fn mean_loss(&self) -> f64 {
        self.loss_sum / self.count as f64
    }

    /// Adds per-example results in order and normalizes by the target count.
    pub(crate) fn reduce(parts: Vec<Result<Option<(f64, usize, Vec<Option<Vec<f64>>>)>>>, slots: usize) -> Result<Self> {
        let mut out = Self {
            loss_sum: 0.0,
            count: 0,
            grads: vec![None; slots],
        };
        for part in parts {
            let Some((loss, count, grads)) = part? else { continue };
            out.loss_sum += loss;
            out.count += count;
            for (acc, g) in out.grads.iter_mut().zip(grads) {
                match (acc.as_mut(), g) {
                    (_, None) => {}
                    (None, Some(g)) => *acc = Some(g),
                    (Some(a), Some(g)) => a.iter_mut().zip(&g).for_each(|(x, y)| *x += y),
                }
            }
        }
        if out.count > 0 {
            let inv = 1.0 / out.count as f64;
            for g in out.grads.iter_mut().flatten() {
                g.iter_mut().for_each(|x| *x *= inv);
            }
        }
        Ok(out)
    }
}

pub fn encode_lines(lines: &[String], vocab: &Vocab, max_len: usize) -> Vec<TokenSequence> {
    lines.iter().map(|l| encode(l, vocab, max_len)).collect()
}

/// MLM loss gradients for a batch of masked sequences and their targets.
/// `dropout` is `(seed, step)`; example `i` then draws its dropout masks
/// from its own stream.
pub fn mlm_gradients(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &[(TokenSequence, Vec<usize>)],
    dropout: Option<(u64, u64)>,
    exec: Exec,
) -> Result<BatchGradients> {
    let slots = params.named_tensors().len();
    let parts = exec.map(batch, |i, (seq, targets)| {
        // Padding sits at the tail and never receives attention, so the
        // real prefix alone gives the same hidden states.
        let n = seq.len().max(1);
        let rows: Vec<usize> = (0..n).filter(|&p| targets[p] != IGNORE_INDEX).collect();
        if rows.is_empty() {
            return Ok(None);
        }
        let row_targets: Vec<usize> = rows.iter().map(|&p| targets[p]).collect();
        let mut rng: Option<ChaCha8Rng> = dropout
            .filter(|_| cfg.dropout > 0.0)
            .map(|(seed, step)| example_stream(seed, Stream::Dropout, step, i as u64));
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, params, |name| !name.starts_with("head."));
        let x = encode_on_tape(&mut tape, &bound, cfg, &seq.ids[..n], &seq.attention_mask[..n], rng.as_mut())?;
        let h = tape.gather_rows(x, &rows)?;
        let logits = mlm_logits_on_tape(&mut tape, &bound, h)?;
        let loss = tape.cross_entropy(logits, &row_targets)?;
        let count = rows.len();
        let loss_sum = tape.scalar(loss) * count as f64;
        tape.backward_with_seed(loss, count as f64)?;
        Ok(Some((loss_sum, count, bound.take_grads(&mut tape))))
    });
    BatchGradients::reduce(parts, slots)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainOutput {
    pub checkpoint: Checkpoint,
    /// Mean MLM loss per step; `None` where the batch had no masked
    /// position and the update was skipped.
    pub losses: Vec<Option<f64>>,
}

/// Seeded sampler over `0..n`: one shuffled pass per epoch, batches may
/// straddle epochs.
pub(crate) struct EpochSampler {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl EpochSampler {
    pub(crate) fn new(n: usize, seed: u64) -> Self {
        let mut rng = stream(seed, Stream::Shuffle);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self { order, cursor: 0, rng }
    }

    pub(crate) fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

pub fn pretrain(lines: &[String], vocab: &Vocab, model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<PretrainOutput> {
    cfg.validate()?;
    model_cfg.validate()?;
    if model_cfg.vocab_size != vocab.len() {
        return Err(Error::InvalidConfig(format!(
            "model vocab_size {} differs from vocabulary of {}",
            model_cfg.vocab_size,
            vocab.len()
        )));
    }
    if lines.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mc = ModelConfig {
        dropout: cfg.dropout,
        ..model_cfg.clone()
    };
    let mut params = ModelParams::init(&mc, &mut stream(cfg.seed, Stream::Init))?;
    let seqs = encode_lines(lines, vocab, mc.max_len);
    let sizes: Vec<usize> = params.named_tensors().iter().map(|(_, t)| t.numel()).collect();
    let mut opt = AdamWState::new(&sizes, cfg.lr, cfg.weight_decay);
    let mut sampler = EpochSampler::new(seqs.len(), cfg.seed);
    let mut mask_rng = stream(cfg.seed, Stream::Masking);
    let mut losses = Vec::with_capacity(cfg.max_steps as usize);
    let snapshot = |params: &ModelParams, opt: &AdamWState, step: u64| {
        let mut c = Checkpoint::new(mc.clone(), params.clone(), vocab);
        c.optimizer = Some(opt.clone());
        c.step = step;
        c
    };

    for step in 0..cfg.max_steps {
        let batch: Vec<(TokenSequence, Vec<usize>)> = sampler
            .next_batch(cfg.batch_size)
            .into_iter()
            .map(|i| apply_mlm_masking(&seqs[i], cfg, mc.vocab_size, &mut mask_rng))
            .collect();
        let bg = mlm_gradients(&params, &mc, &batch, Some((cfg.seed, step)), cfg.exec)?;
        if bg.count == 0 {
            losses.push(None);
            continue;
        }
        let loss = bg.mean_loss();
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        opt.step(&mut params.tensors_mut(), &bg.grads)?;
        losses.push(Some(loss));
        if cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0 {
            log::info!("step {} mlm loss {loss:.4}", step + 1);
            if let Some(path) = &cfg.checkpoint_path {
                save_checkpoint(&snapshot(&params, &opt, step + 1), path)?;
            }
        }
    }
    let checkpoint = snapshot(&params, &opt, cfg.max_steps);
    if let Some(path) = &cfg.checkpoint_path {
        save_checkpoint(&checkpoint, path)?;
    }
    Ok(PretrainOutput { checkpoint, losses })
}

/// Means over consecutive non-overlapping windows of `width` steps,
/// ignoring skipped steps. A trailing partial window is dropped.
pub fn window_means(losses: &[Option<f64>], width: usize) -> Vec<f64> {
    losses
        .chunks_exact(width)
        .filter_map(|w| {
            let vals: Vec<f64> = w.iter().flatten().copied().collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect()
}
