//! Binary checkpoint format.
//!
//! ```text
//! magic (8 bytes) | version u32 LE | header length u64 LE | JSON header | f64 LE arrays
//! ```
//!
//! The header carries the model config, vocabulary digest, step, split
//! metadata and an array manifest of names, shapes and byte offsets
//! relative to the start of the array section.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::TaskId;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::numerics::{AdamWState, Tensor};
use crate::tokenizer::Vocab;

pub const MAGIC: &[u8; 8] = b"PMBRTCKP";
pub const FORMAT_VERSION: u32 = 1;
const PREAMBLE: usize = 8 + 4 + 8;

/// How the fine-tuning corpus was split, so evaluation can rebuild the
/// validation half.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub task: TaskId,
    pub ratio: f64,
    pub seed: u64,
    pub stratify: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub params: ModelParams,
    /// SHA-256 of the vocabulary file body.
    pub vocab_digest: String,
    pub optimizer: Option<AdamWState>,
    pub step: u64,
    pub split: Option<SplitInfo>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    len: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab_digest: String,
    step: u64,
    split: Option<SplitInfo>,
    optimizer: Option<AdamWState>,
    arrays: Vec<ArrayEntry>,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: ModelParams, vocab: &Vocab) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config,
            params,
            vocab_digest: vocab.digest(),
            optimizer: None,
            step: 0,
            split: None,
        }
    }

    pub fn check_vocab(&self, vocab: &Vocab) -> Result<()> {
        let found = vocab.digest();
        if found == self.vocab_digest {
            Ok(())
        } else {
            Err(Error::DigestMismatch {
                expected: self.vocab_digest.clone(),
                found,
            })
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let named = self.params.named_tensors();
        let mut arrays: Vec<(String, Vec<usize>, &[f64])> =
            named.iter().map(|(n, t)| (n.clone(), t.shape.clone(), &t.data[..])).collect();
        if let Some(opt) = &self.optimizer {
            for (kind, moments) in [("m", &opt.m), ("v", &opt.v)] {
                if moments.len() != named.len() {
                    return Err(Error::shape("checkpoint", format!("{} optimizer {kind} slots", moments.len())));
                }
                for ((name, t), values) in named.iter().zip(moments) {
                    if values.len() != t.numel() {
                        return Err(Error::shape("checkpoint", format!("optimizer {kind} for {name}")));
                    }
                    arrays.push((format!("optim.{kind}.{name}"), vec![values.len()], &values[..]));
                }
            }
        }
        write_bytes(self, &arrays)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::CorruptFile(m.to_string());
        if bytes.len() < PREAMBLE || &bytes[..8] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let data_start = usize::try_from(header_len)
            .ok()
            .and_then(|h| h.checked_add(PREAMBLE))
            .filter(|&s| s <= bytes.len())
            .ok_or_else(|| corrupt("header runs past end of file"))?;
        let header: Header =
            serde_json::from_slice(&bytes[PREAMBLE..data_start]).map_err(|e| Error::CorruptFile(e.to_string()))?;
        let data = &bytes[data_start..];
        let mut expected_end = 0u64;
        let mut named = BTreeMap::new();
        let mut moments: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for entry in header.arrays {
            let count: usize = entry.shape.iter().product();
            if entry.offset != expected_end || entry.len != count as u64 * 8 {
                return Err(corrupt(&format!("array {} has inconsistent offset or length", entry.name)));
            }
            let end = entry.offset + entry.len;
            if end > data.len() as u64 {
                return Err(corrupt(&format!("array {} runs past end of file", entry.name)));
            }
            let values: Vec<f64> = data[entry.offset as usize..end as usize]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            expected_end = end;
            if entry.name.starts_with("optim.") {
                moments.insert(entry.name, values);
            } else {
                named.insert(entry.name, Tensor::new(entry.shape, values)?);
            }
        }
        if expected_end != data.len() as u64 {
            return Err(corrupt("trailing bytes after arrays"));
        }
        header.config.validate()?;
        let params = ModelParams::from_named(&header.config, named)?;
        let optimizer = match header.optimizer {
            None => None,
            Some(mut opt) => {
                let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
                let mut take = |k: &str, n: &str| {
                    moments
                        .remove(&format!("optim.{k}.{n}"))
                        .ok_or_else(|| corrupt(&format!("missing optimizer {k} for {n}")))
                };
                opt.m = names.iter().map(|n| take("m", n)).collect::<Result<_>>()?;
                opt.v = names.iter().map(|n| take("v", n)).collect::<Result<_>>()?;
                Some(opt)
            }
        };
        if let Some(extra) = moments.keys().next() {
            return Err(corrupt(&format!("unexpected array {extra}")));
        }
        Ok(Self {
            format_version: version,
            config: header.config,
            params,
            vocab_digest: header.vocab_digest,
            optimizer,
            step: header.step,
            split: header.split,
        })
    }
}

fn write_bytes(ckpt: &Checkpoint, all: &[(String, Vec<usize>, &[f64])]) -> Result<Vec<u8>> {
    let mut offset = 0u64;
    let arrays = all
        .iter()
        .map(|(name, shape, data)| {
            let len = data.len() as u64 * 8;
            let e = ArrayEntry {
                name: name.clone(),
                shape: shape.clone(),
                offset,
                len,
            };
            offset += len;
            e
        })
        .collect();
    let header = Header {
        config: ckpt.config.clone(),
        vocab_digest: ckpt.vocab_digest.clone(),
        step: ckpt.step,
        split: ckpt.split.clone(),
        optimizer: ckpt.optimizer.clone(),
        arrays,
    };
    let header = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(PREAMBLE + header.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&ckpt.format_version.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, _, data) in all {
        for x in data.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
