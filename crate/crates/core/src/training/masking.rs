use rand::Rng;

use super::config::TrainConfig;
use crate::numerics::IGNORE_INDEX;
use crate::tokenizer::{is_special, TokenSequence, MASK, NUM_RESERVED};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskFate {
    Mask,
    Random(u32),
    Keep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskDecision {
    pub position: usize,
    pub fate: MaskFate,
}

/// Chooses positions and fates. Candidates are unpadded, non-reserved
/// tokens; each draws one uniform for selection and, if selected, one for
/// its fate (plus one for the replacement id when random).
pub fn plan_masking<R: Rng + ?Sized>(
    seq: &TokenSequence,
    cfg: &TrainConfig,
    vocab_size: usize,
    rng: &mut R,
) -> Vec<MaskDecision> {
    let split = cfg.mask_split;
    let mut out = Vec::new();
    for (position, (&id, &m)) in seq.ids.iter().zip(&seq.attention_mask).enumerate() {
        if m == 0 || is_special(id) {
            continue;
        }
        if rng.gen::<f64>() >= cfg.mask_ratio {
            continue;
        }
        let u: f64 = rng.gen();
        let fate = if u < split.mask_prob {
            MaskFate::Mask
        } else if u < split.mask_prob + split.random_prob && vocab_size > NUM_RESERVED {
            MaskFate::Random(rng.gen_range(NUM_RESERVED as u32..vocab_size as u32))
        } else {
            MaskFate::Keep
        };
        out.push(MaskDecision { position, fate });
    }
    out
}

/// Masked copy of `seq` and per-position targets: the original id where a
/// position was selected, [`IGNORE_INDEX`] elsewhere.
pub fn apply_mlm_masking<R: Rng + ?Sized>(
    seq: &TokenSequence,
    cfg: &TrainConfig,
    vocab_size: usize,
    rng: &mut R,
) -> (TokenSequence, Vec<usize>) {
    let mut masked = seq.clone();
    let mut targets = vec![IGNORE_INDEX; seq.ids.len()];
    for d in plan_masking(seq, cfg, vocab_size, rng) {
        targets[d.position] = seq.ids[d.position] as usize;
        match d.fate {
            MaskFate::Mask => masked.ids[d.position] = MASK,
            MaskFate::Random(id) => masked.ids[d.position] = id,
            MaskFate::Keep => {}
        }
    }
    (masked, targets)
}
