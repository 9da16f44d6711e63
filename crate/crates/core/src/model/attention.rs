//! Scaled dot-product and multi-head self-attention.
//!
//! The `*_on_tape` functions build differentiable graphs; the plain
//! functions evaluate on tensors and exist for inference and testing.

use super::params::LayerParams;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var, MASK_BIAS};

/// Additive key bias: 0 at kept keys, −1e9 at masked ones. `None` when
/// nothing is masked.
pub fn mask_bias(mask: &[u8]) -> Result<Option<Vec<f64>>> {
    if !mask.is_empty() && mask.iter().all(|&m| m == 0) {
        return Err(Error::AllMasked { row: 0 });
    }
    if mask.iter().all(|&m| m != 0) {
        return Ok(None);
    }
    Ok(Some(mask.iter().map(|&m| if m == 0 { MASK_BIAS } else { 0.0 }).collect()))
}

fn check_mask(mask: Option<&[u8]>, m: usize) -> Result<Option<Vec<f64>>> {
    match mask {
        None => Ok(None),
        Some(mask) if mask.len() != m => Err(Error::shape("attention", format!("mask of {} for {m} keys", mask.len()))),
        Some(mask) => mask_bias(mask),
    }
}

/// Attention probabilities `softmax(QKᵀ/√d_k + bias)`.
pub fn attention_probs_on_tape(tape: &mut Tape<'_>, q: Var, k: Var, mask: Option<&[u8]>) -> Result<Var> {
    let ((_, dq), (m, dk)) = (tape.shape(q), tape.shape(k));
    if dq != dk {
        return Err(Error::shape("attention", format!("query width {dq} vs key width {dk}")));
    }
    let bias = check_mask(mask, m)?;
    let scores = tape.matmul_nt(q, k)?;
    let mut scores = tape.scale(scores, 1.0 / (dk as f64).sqrt());
    if let Some(bias) = bias {
        scores = tape.add_const_row(scores, &bias)?;
    }
    Ok(tape.softmax_rows(scores))
}

pub fn scaled_dot_attention_on_tape(tape: &mut Tape<'_>, q: Var, k: Var, v: Var, mask: Option<&[u8]>) -> Result<Var> {
    let (m, mv) = (tape.shape(k).0, tape.shape(v).0);
    if m != mv {
        return Err(Error::shape("attention", format!("{m} keys vs {mv} values")));
    }
    let p = attention_probs_on_tape(tape, q, k, mask)?;
    tape.matmul(p, v)
}

/// Projects `x`, attends per head over column blocks and projects the
/// concatenation by `w_o`.
#[allow(clippy::too_many_arguments)]
pub fn multi_head_attention_on_tape(
    tape: &mut Tape<'_>,
    x: Var,
    w_q: Var,
    w_k: Var,
    w_v: Var,
    w_o: Var,
    num_heads: usize,
    mask: Option<&[u8]>,
) -> Result<Var> {
    let d = tape.shape(x).1;
    if num_heads == 0 || d % num_heads != 0 {
        return Err(Error::shape("multi_head_attention", format!("width {d} over {num_heads} heads")));
    }
    let dk = d / num_heads;
    let q = tape.matmul(x, w_q)?;
    let k = tape.matmul(x, w_k)?;
    let v = tape.matmul(x, w_v)?;
    let mut heads = Vec::with_capacity(num_heads);
    for i in 0..num_heads {
        let qi = tape.slice_cols(q, i * dk, dk)?;
        let ki = tape.slice_cols(k, i * dk, dk)?;
        let vi = tape.slice_cols(v, i * dk, dk)?;
        heads.push(scaled_dot_attention_on_tape(tape, qi, ki, vi, mask)?);
    }
    let concat = if num_heads == 1 { heads[0] } else { tape.concat_cols(&heads)? };
    tape.matmul(concat, w_o)
}

fn matrix_shape(t: &Tensor, what: &str) -> Result<()> {
    if t.shape.len() == 2 {
        Ok(())
    } else {
        Err(Error::shape("attention", format!("{what} must be a matrix, got {:?}", t.shape)))
    }
}

/// `softmax(QKᵀ/√d_k + mask_bias)·V` on plain tensors.
pub fn scaled_dot_attention(q: &Tensor, k: &Tensor, v: &Tensor, mask: &[u8]) -> Result<Tensor> {
    for (t, n) in [(q, "Q"), (k, "K"), (v, "V")] {
        matrix_shape(t, n)?;
    }
    let mut tape = Tape::new();
    let (q, k, v) = (tape.param(q, false), tape.param(k, false), tape.param(v, false));
    let out = scaled_dot_attention_on_tape(&mut tape, q, k, v, Some(mask))?;
    Ok(tape.to_tensor(out))
}

/// The attention probability matrix alone (n×m).
pub fn attention_weights(q: &Tensor, k: &Tensor, mask: &[u8]) -> Result<Tensor> {
    matrix_shape(q, "Q")?;
    matrix_shape(k, "K")?;
    let mut tape = Tape::new();
    let (q, k) = (tape.param(q, false), tape.param(k, false));
    let out = attention_probs_on_tape(&mut tape, q, k, Some(mask))?;
    Ok(tape.to_tensor(out))
}

/// Multi-head self-attention of `x` (n×d) with one layer's projections.
pub fn multi_head_attention(x: &Tensor, layer: &LayerParams, num_heads: usize, mask: &[u8]) -> Result<Tensor> {
    matrix_shape(x, "X")?;
    let mut tape = Tape::new();
    let xv = tape.param(x, false);
    let [wq, wk, wv, wo] = [&layer.query, &layer.key, &layer.value, &layer.output].map(|t| tape.param(t, false));
    let out = multi_head_attention_on_tape(&mut tape, xv, wq, wk, wv, wo, num_heads, Some(mask))?;
    Ok(tape.to_tensor(out))
}
