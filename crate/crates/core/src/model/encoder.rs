use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

use super::attention::multi_head_attention_on_tape;
use super::config::{ModelConfig, PositionalMode};
use super::params::{ClassifierHead, ModelParams};
use super::positional;
use crate::corpus::TaskId;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::numerics::{Tape, Tensor, Var};
use crate::tokenizer::TokenSequence;

#[derive(Debug, Clone, Copy)]
struct BoundLayer {
    query: Var,
    key: Var,
    value: Var,
    output: Var,
    attn_gain: Var,
    attn_bias: Var,
    ffn_in: Var,
    ffn_in_bias: Var,
    ffn_out: Var,
    ffn_out_bias: Var,
    ffn_gain: Var,
    ffn_bias: Var,
}

/// Parameters placed on a tape as leaves. `vars` follows the order of
/// [`ModelParams::named_tensors`].
#[derive(Debug, Clone)]
pub struct BoundParams {
    pub vars: Vec<Var>,
    token: Var,
    position: Option<Var>,
    layers: Vec<BoundLayer>,
    mlm_weight: Option<Var>,
    mlm_bias: Var,
    heads: BTreeMap<TaskId, (Var, Var)>,
}

impl BoundParams {
    /// Binds every array; `trainable(name)` decides which ones collect
    /// gradients.
    pub fn bind<'a>(tape: &mut Tape<'a>, params: &'a ModelParams, trainable: impl Fn(&str) -> bool) -> Self {
        let vars: Vec<Var> = params
            .named_tensors()
            .into_iter()
            .map(|(name, t)| tape.param(t, trainable(&name)))
            .collect();
        Self::from_vars(params, vars)
    }

    /// Structures leaves that were bound elsewhere, one per array in
    /// [`ModelParams::named_tensors`] order.
    pub fn from_vars(params: &ModelParams, vars: Vec<Var>) -> Self {
        assert_eq!(vars.len(), params.named_tensors().len(), "one var per parameter array");
        let mut it = vars.iter().copied();
        let mut next = || it.next().expect("binding follows named_tensors");
        let token = next();
        let position = params.position_embedding.as_ref().map(|_| next());
        let layers = params
            .layers
            .iter()
            .map(|_| BoundLayer {
                query: next(),
                key: next(),
                value: next(),
                output: next(),
                attn_gain: next(),
                attn_bias: next(),
                ffn_in: next(),
                ffn_in_bias: next(),
                ffn_out: next(),
                ffn_out_bias: next(),
                ffn_gain: next(),
                ffn_bias: next(),
            })
            .collect();
        let mlm_weight = params.mlm_weight.as_ref().map(|_| next());
        let mlm_bias = next();
        let heads = params.heads.keys().map(|&t| (t, (next(), next()))).collect();
        Self {
            vars,
            token,
            position,
            layers,
            mlm_weight,
            mlm_bias,
            heads,
        }
    }

    /// Takes accumulated gradients in binding order; `None` where nothing
    /// flowed or the array is frozen.
    pub fn take_grads(&self, tape: &mut Tape<'_>) -> Vec<Option<Vec<f64>>> {
        self.vars.iter().map(|&v| tape.take_grad(v)).collect()
    }

    pub fn head(&self, task: TaskId) -> Result<(Var, Var)> {
        self.heads.get(&task).copied().ok_or(Error::MissingHead(task.to_string()))
    }
}

/// Encoder over `ids` (no padding assumed unless `mask` says so). Dropout
/// is applied only when `rng` is given.
pub fn encode_on_tape(
    tape: &mut Tape<'_>,
    bound: &BoundParams,
    cfg: &ModelConfig,
    ids: &[u32],
    mask: &[u8],
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Var> {
    let n = ids.len();
    if n == 0 || n > cfg.max_len || mask.len() != n {
        return Err(Error::shape(
            "encoder",
            format!("{n} ids, {} mask entries, max_len {}", mask.len(), cfg.max_len),
        ));
    }
    let d = cfg.hidden;
    let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
    let mut x = tape.embedding(bound.token, &idx)?;
    match (cfg.positional_mode, bound.position) {
        (PositionalMode::Sinusoidal, _) => x = tape.add_const(x, &positional::table(n, d))?,
        (PositionalMode::Learned, Some(table)) => {
            let pos: Vec<usize> = (0..n).collect();
            let p = tape.embedding(table, &pos)?;
            x = tape.add(x, p)?;
        }
        (PositionalMode::Learned, None) => return Err(Error::shape("encoder", "missing position table")),
        (PositionalMode::None, _) => {}
    }
    let mask = if mask.iter().all(|&m| m != 0) { None } else { Some(mask) };
    for l in &bound.layers {
        let a = multi_head_attention_on_tape(tape, x, l.query, l.key, l.value, l.output, cfg.num_heads, mask)?;
        let a = tape.dropout(a, cfg.dropout, rng.as_deref_mut());
        let r = tape.add(x, a)?;
        x = tape.layer_norm(r, l.attn_gain, l.attn_bias)?;
        let h = tape.matmul(x, l.ffn_in)?;
        let h = tape.add_row(h, l.ffn_in_bias)?;
        let h = tape.gelu(h);
        let h = tape.matmul(h, l.ffn_out)?;
        let h = tape.add_row(h, l.ffn_out_bias)?;
        let h = tape.dropout(h, cfg.dropout, rng.as_deref_mut());
        let r = tape.add(x, h)?;
        x = tape.layer_norm(r, l.ffn_gain, l.ffn_bias)?;
    }
    Ok(x)
}

/// Vocabulary logits for each row of `hidden`.
pub fn mlm_logits_on_tape(tape: &mut Tape<'_>, bound: &BoundParams, hidden: Var) -> Result<Var> {
    let logits = match bound.mlm_weight {
        Some(w) => tape.matmul(hidden, w)?,
        None => tape.matmul_nt(hidden, bound.token)?,
    };
    tape.add_row(logits, bound.mlm_bias)
}

/// 1×K logits from the first ([CLS]) row.
pub fn classify_on_tape(tape: &mut Tape<'_>, hidden: Var, weight: Var, bias: Var) -> Result<Var> {
    let cls = tape.gather_rows(hidden, &[0])?;
    let logits = tape.matmul(cls, weight)?;
    tape.add_row(logits, bias)
}

/// Hidden states for every position of `seq` (max_len×d). Passing `rng`
/// turns on dropout; without it the result is a pure function of the
/// inputs.
pub fn encoder_forward(
    seq: &TokenSequence,
    cfg: &ModelConfig,
    params: &ModelParams,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, params, |_| false);
    let x = encode_on_tape(&mut tape, &bound, cfg, &seq.ids, &seq.attention_mask, rng)?;
    Ok(tape.to_tensor(x))
}

/// Evaluation-mode hidden states for a batch, shaped `[B, max_len, d]`.
pub fn encoder_forward_batch(
    seqs: &[TokenSequence],
    cfg: &ModelConfig,
    params: &ModelParams,
    exec: Exec,
) -> Result<Tensor> {
    let outs = exec.map(seqs, |_, s| encoder_forward(s, cfg, params, None));
    let mut data = Vec::with_capacity(seqs.len() * cfg.max_len * cfg.hidden);
    for (out, s) in outs.into_iter().zip(seqs) {
        let out = out?;
        if s.ids.len() != cfg.max_len {
            return Err(Error::shape("encoder_batch", format!("sequence of {} vs max_len {}", s.ids.len(), cfg.max_len)));
        }
        data.extend(out.data);
    }
    Tensor::new(vec![seqs.len(), cfg.max_len, cfg.hidden], data)
}

pub fn mlm_logits(hidden: &Tensor, params: &ModelParams) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, params, |_| false);
    let h = tape.param(hidden, false);
    let out = mlm_logits_on_tape(&mut tape, &bound, h)?;
    Ok(tape.to_tensor(out))
}

pub fn classify(hidden: &Tensor, head: &ClassifierHead) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let h = tape.param(hidden, false);
    let (w, b) = (tape.param(&head.weight, false), tape.param(&head.bias, false));
    let out = classify_on_tape(&mut tape, h, w, b)?;
    Ok(tape.value(out).to_vec())
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    /// Softmax probability of the predicted label.
    pub confidence: f64,
    pub logits: Vec<f64>,
}

/// Classifies one sequence. Padding is dropped before the forward pass;
/// masked keys get exactly zero attention weight so the real rows are
/// unchanged.
pub fn predict(seq: &TokenSequence, cfg: &ModelConfig, params: &ModelParams, task: TaskId) -> Result<Prediction> {
    let head = params.heads.get(&task).ok_or(Error::MissingHead(task.to_string()))?;
    let n = seq.len().max(1);
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, params, |_| false);
    let x = encode_on_tape(&mut tape, &bound, cfg, &seq.ids[..n], &seq.attention_mask[..n], None)?;
    let (w, b) = (tape.param(&head.weight, false), tape.param(&head.bias, false));
    let out = classify_on_tape(&mut tape, x, w, b)?;
    let logits = tape.value(out).to_vec();
    let label = argmax(&logits);
    let max = logits[label];
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    Ok(Prediction {
        label,
        confidence: 1.0 / z,
        logits,
    })
}
