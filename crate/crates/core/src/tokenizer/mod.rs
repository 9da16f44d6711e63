//! WordPiece vocabulary, fixed-length encoding and decoding.

mod train;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use train::train_wordpiece;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const MASK: u32 = 4;
pub const HEMISTICH_SEP: u32 = 5;
pub const EMPTY_HEMISTICH: u32 = 6;

pub const RESERVED: [&str; 7] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[s]", "[e]"];
pub const NUM_RESERVED: usize = RESERVED.len();
pub const CONTINUATION_PREFIX: &str = "##";
pub const MAX_WORD_CHARS: usize = 100;
pub const DEFAULT_MIN_FREQUENCY: u64 = 2;

pub fn is_special(id: u32) -> bool {
    (id as usize) < NUM_RESERVED
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    pub target_size: usize,
}

impl Vocab {
    /// Builds a vocabulary from an ordered token list whose first entries
    /// are the reserved tokens.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < NUM_RESERVED || tokens[..NUM_RESERVED].iter().zip(RESERVED).any(|(a, b)| a != b) {
            return Err(Error::InvalidConfig(
                "vocabulary must start with [PAD] [UNK] [CLS] [SEP] [MASK] [s] [e]".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate vocabulary token `{t}`")));
            }
        }
        let target_size = tokens.len();
        Ok(Self {
            tokens,
            index,
            target_size,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// File body: one token per line, line number = id.
    pub fn to_file_string(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    /// SHA-256 of the vocabulary file body, hex-encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_file_string().as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(String::from).collect())
    }

    /// Non-special vocabulary id for a piece, if any.
    fn piece(&self, s: &str) -> Option<u32> {
        self.id(s).filter(|&id| !is_special(id))
    }

    /// Greedy longest-match-first segmentation of one word. The whole word
    /// becomes `[UNK]` when any remainder cannot be matched.
    pub fn word_pieces(&self, word: &str, out: &mut Vec<u32>) {
        match word {
            "[s]" => return out.push(HEMISTICH_SEP),
            "[e]" => return out.push(EMPTY_HEMISTICH),
            _ => {}
        }
        let chars: Vec<(usize, char)> = word.char_indices().collect();
        if chars.len() > MAX_WORD_CHARS {
            return out.push(UNK);
        }
        let mark = out.len();
        let mut start = 0;
        let mut buf = String::new();
        while start < chars.len() {
            let mut found = None;
            for end in (start + 1..=chars.len()).rev() {
                let from = chars[start].0;
                let to = chars.get(end).map_or(word.len(), |c| c.0);
                buf.clear();
                if start > 0 {
                    buf.push_str(CONTINUATION_PREFIX);
                }
                buf.push_str(&word[from..to]);
                if let Some(id) = self.piece(&buf) {
                    found = Some((id, end));
                    break;
                }
            }
            match found {
                Some((id, end)) => {
                    out.push(id);
                    start = end;
                }
                None => {
                    out.truncate(mark);
                    return out.push(UNK);
                }
            }
        }
    }

    pub fn tokenize(&self, line: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for word in line.split_whitespace() {
            self.word_pieces(word, &mut out);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    pub max_len: usize,
}

impl TokenSequence {
    /// Number of real (unpadded) positions.
    pub fn len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check_invariants(&self, vocab_size: usize) -> std::result::Result<(), String> {
        if self.ids.len() != self.max_len || self.attention_mask.len() != self.max_len {
            return Err("length differs from max_len".into());
        }
        let real = self.len();
        if self.attention_mask[..real].iter().any(|&m| m != 1) || self.attention_mask[real..].iter().any(|&m| m != 0) {
            return Err("attention mask is not a prefix of ones".into());
        }
        if real < 2 || self.ids[0] != CLS {
            return Err("first position is not [CLS]".into());
        }
        let seps: Vec<usize> = (0..self.max_len).filter(|&i| self.ids[i] == SEP).collect();
        if seps != [real - 1] {
            return Err(format!("[SEP] at {seps:?}, expected only {}", real - 1));
        }
        if self.ids[real..].iter().any(|&id| id != PAD) {
            return Err("padding is not [PAD]".into());
        }
        if let Some(id) = self.ids.iter().find(|&&id| id as usize >= vocab_size) {
            return Err(format!("id {id} outside vocabulary"));
        }
        Ok(())
    }
}

/// `[CLS] pieces… [SEP] [PAD]…`, pieces truncated to `max_len - 2`.
pub fn encode(line: &str, vocab: &Vocab, max_len: usize) -> TokenSequence {
    assert!(max_len >= 2, "max_len must leave room for [CLS] and [SEP]");
    let mut pieces = vocab.tokenize(line);
    pieces.truncate(max_len - 2);
    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS);
    ids.extend(pieces);
    ids.push(SEP);
    let real = ids.len();
    ids.resize(max_len, PAD);
    let mut attention_mask = vec![1u8; real];
    attention_mask.resize(max_len, 0);
    TokenSequence {
        ids,
        attention_mask,
        max_len,
    }
}

/// Drops `[CLS]`/`[SEP]`/`[PAD]`, fuses `##` continuations, and separates
/// words with single spaces. `[UNK]` stays visible as a literal.
pub fn decode(ids: &[u32], vocab: &Vocab) -> Result<String> {
    let mut words: Vec<String> = Vec::new();
    for &id in ids {
        let tok = vocab.token(id).ok_or(Error::IdOutOfRange {
            id: id as usize,
            size: vocab.len(),
        })?;
        if matches!(id, CLS | SEP | PAD) {
            continue;
        }
        match (tok.strip_prefix(CONTINUATION_PREFIX), words.last_mut()) {
            (Some(rest), Some(last)) if !is_special(id) => last.push_str(rest),
            _ => words.push(tok.to_string()),
        }
    }
    Ok(words.join(" "))
}
