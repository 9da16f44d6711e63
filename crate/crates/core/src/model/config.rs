use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionalMode {
    Sinusoidal,
    Learned,
    /// No position signal at all; used to test permutation equivariance.
    None,
}

/// Architecture hyperparameters.
///
/// The FFN width (4·hidden) and the positional mode are assumptions: the
/// reference architecture only fixes layers, heads, hidden size, vocabulary
/// size and sequence length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub hidden: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub positional_mode: PositionalMode,
    pub tie_mlm_weights: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl ModelConfig {
    pub fn paper() -> Self {
        Self {
            num_layers: 10,
            num_heads: 12,
            hidden: 768,
            ffn_dim: 4 * 768,
            vocab_size: 50_000,
            max_len: 32,
            dropout: 0.1,
            positional_mode: PositionalMode::Sinusoidal,
            tie_mlm_weights: false,
        }
    }

    pub fn tiny() -> Self {
        Self {
            num_layers: 2,
            num_heads: 2,
            hidden: 32,
            ffn_dim: 4 * 32,
            vocab_size: 512,
            max_len: 32,
            dropout: 0.1,
            positional_mode: PositionalMode::Sinusoidal,
            tie_mlm_weights: false,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_heads == 0 || self.hidden == 0 || self.hidden % self.num_heads != 0 {
            return bad(format!("hidden {} not divisible by {} heads", self.hidden, self.num_heads));
        }
        if self.max_len < 2 {
            return bad(format!("max_len {} < 2", self.max_len));
        }
        if self.vocab_size <= crate::tokenizer::NUM_RESERVED {
            return bad(format!("vocab_size {} leaves no room past the reserved tokens", self.vocab_size));
        }
        if self.ffn_dim == 0 {
            return bad("ffn_dim is 0".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} not in [0, 1)", self.dropout));
        }
        Ok(())
    }
}
