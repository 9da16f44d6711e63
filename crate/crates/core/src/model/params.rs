use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::{ModelConfig, PositionalMode};
use crate::corpus::TaskId;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

const INIT_STD: f64 = 0.02;

/// One encoder block. Query, key and value projections are stored as
/// `d×d` matrices; head `i` owns the column block `[i·d_k, (i+1)·d_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub query: Tensor,
    pub key: Tensor,
    pub value: Tensor,
    pub output: Tensor,
    pub attn_norm_gain: Tensor,
    pub attn_norm_bias: Tensor,
    pub ffn_in: Tensor,
    pub ffn_in_bias: Tensor,
    pub ffn_out: Tensor,
    pub ffn_out_bias: Tensor,
    pub ffn_norm_gain: Tensor,
    pub ffn_norm_bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub token_embedding: Tensor,
    /// Present only in learned positional mode.
    pub position_embedding: Option<Tensor>,
    pub layers: Vec<LayerParams>,
    /// Absent when the MLM projection is tied to the token embedding.
    pub mlm_weight: Option<Tensor>,
    pub mlm_bias: Tensor,
    pub heads: BTreeMap<TaskId, ClassifierHead>,
}

/// Normal(0, σ) resampled until it falls inside ±2σ.
fn truncated_normal<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let mut t = Tensor::zeros(shape);
    for x in &mut t.data {
        *x = loop {
            let v: f64 = normal.sample(rng);
            if v.abs() <= 2.0 * INIT_STD {
                break v;
            }
        };
    }
    t
}

impl LayerParams {
    fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let (d, f) = (cfg.hidden, cfg.ffn_dim);
        Self {
            query: truncated_normal(&[d, d], rng),
            key: truncated_normal(&[d, d], rng),
            value: truncated_normal(&[d, d], rng),
            output: truncated_normal(&[d, d], rng),
            attn_norm_gain: Tensor::filled(&[d], 1.0),
            attn_norm_bias: Tensor::zeros(&[d]),
            ffn_in: truncated_normal(&[d, f], rng),
            ffn_in_bias: Tensor::zeros(&[f]),
            ffn_out: truncated_normal(&[f, d], rng),
            ffn_out_bias: Tensor::zeros(&[d]),
            ffn_norm_gain: Tensor::filled(&[d], 1.0),
            ffn_norm_bias: Tensor::zeros(&[d]),
        }
    }

    fn tensors(&self) -> [(&'static str, &Tensor); 12] {
        [
            ("attention.query", &self.query),
            ("attention.key", &self.key),
            ("attention.value", &self.value),
            ("attention.output", &self.output),
            ("attention.norm.gain", &self.attn_norm_gain),
            ("attention.norm.bias", &self.attn_norm_bias),
            ("ffn.in.weight", &self.ffn_in),
            ("ffn.in.bias", &self.ffn_in_bias),
            ("ffn.out.weight", &self.ffn_out),
            ("ffn.out.bias", &self.ffn_out_bias),
            ("ffn.norm.gain", &self.ffn_norm_gain),
            ("ffn.norm.bias", &self.ffn_norm_bias),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 12] {
        [
            &mut self.query,
            &mut self.key,
            &mut self.value,
            &mut self.output,
            &mut self.attn_norm_gain,
            &mut self.attn_norm_bias,
            &mut self.ffn_in,
            &mut self.ffn_in_bias,
            &mut self.ffn_out,
            &mut self.ffn_out_bias,
            &mut self.ffn_norm_gain,
            &mut self.ffn_norm_bias,
        ]
    }
}

impl ClassifierHead {
    pub fn init<R: Rng + ?Sized>(hidden: usize, num_labels: usize, rng: &mut R) -> Self {
        Self {
            weight: truncated_normal(&[hidden, num_labels], rng),
            bias: Tensor::zeros(&[num_labels]),
        }
    }

    pub fn num_labels(&self) -> usize {
        self.bias.numel()
    }
}

impl ModelParams {
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let (d, v) = (cfg.hidden, cfg.vocab_size);
        let token_embedding = truncated_normal(&[v, d], rng);
        let position_embedding =
            (cfg.positional_mode == PositionalMode::Learned).then(|| truncated_normal(&[cfg.max_len, d], rng));
        let layers = (0..cfg.num_layers).map(|_| LayerParams::init(cfg, rng)).collect();
        let mlm_weight = (!cfg.tie_mlm_weights).then(|| truncated_normal(&[d, v], rng));
        Ok(Self {
            token_embedding,
            position_embedding,
            layers,
            mlm_weight,
            mlm_bias: Tensor::zeros(&[v]),
            heads: BTreeMap::new(),
        })
    }

    /// Every array with a stable name, in a fixed order shared by
    /// [`ModelParams::tensors_mut`], binding and checkpoints.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("embeddings.token".to_string(), &self.token_embedding)];
        if let Some(p) = &self.position_embedding {
            out.push(("embeddings.position".into(), p));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            out.extend(layer.tensors().into_iter().map(|(n, t)| (format!("layer.{i}.{n}"), t)));
        }
        if let Some(w) = &self.mlm_weight {
            out.push(("mlm.weight".into(), w));
        }
        out.push(("mlm.bias".into(), &self.mlm_bias));
        for (task, head) in &self.heads {
            out.push((format!("head.{task}.weight"), &head.weight));
            out.push((format!("head.{task}.bias"), &head.bias));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.token_embedding];
        if let Some(p) = &mut self.position_embedding {
            out.push(p);
        }
        for layer in &mut self.layers {
            out.extend(layer.tensors_mut());
        }
        if let Some(w) = &mut self.mlm_weight {
            out.push(w);
        }
        out.push(&mut self.mlm_bias);
        for head in self.heads.values_mut() {
            out.push(&mut head.weight);
            out.push(&mut head.bias);
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.all_finite())
    }

    /// Checks every array against the shapes implied by `cfg`.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let (d, v, f) = (cfg.hidden, cfg.vocab_size, cfg.ffn_dim);
        let expect = |name: &str, t: &Tensor, shape: &[usize]| {
            if t.shape == shape {
                Ok(())
            } else {
                Err(Error::shape("params", format!("{name}: expected {shape:?}, found {:?}", t.shape)))
            }
        };
        expect("embeddings.token", &self.token_embedding, &[v, d])?;
        match (&self.position_embedding, cfg.positional_mode) {
            (Some(p), PositionalMode::Learned) => expect("embeddings.position", p, &[cfg.max_len, d])?,
            (None, PositionalMode::Learned) => return Err(Error::shape("params", "missing position table")),
            (Some(_), _) => return Err(Error::shape("params", "unexpected position table")),
            (None, _) => {}
        }
        if self.layers.len() != cfg.num_layers {
            return Err(Error::shape("params", format!("{} layers vs {}", self.layers.len(), cfg.num_layers)));
        }
        for (i, l) in self.layers.iter().enumerate() {
            for (name, t) in l.tensors() {
                let shape: &[usize] = match name {
                    "ffn.in.weight" => &[d, f],
                    "ffn.in.bias" => &[f],
                    "ffn.out.weight" => &[f, d],
                    n if n.starts_with("attention.") && !n.contains("norm") => &[d, d],
                    _ => &[d],
                };
                expect(&format!("layer.{i}.{name}"), t, shape)?;
            }
        }
        match (&self.mlm_weight, cfg.tie_mlm_weights) {
            (Some(w), false) => expect("mlm.weight", w, &[d, v])?,
            (None, true) => {}
            _ => return Err(Error::shape("params", "mlm weight presence disagrees with tie_mlm_weights")),
        }
        expect("mlm.bias", &self.mlm_bias, &[v])?;
        for (task, h) in &self.heads {
            let k = h.num_labels();
            expect(&format!("head.{task}.weight"), &h.weight, &[d, k])?;
        }
        Ok(())
    }

    /// Rebuilds parameters from named arrays, as stored in a checkpoint.
    pub fn from_named(cfg: &ModelConfig, mut arrays: BTreeMap<String, Tensor>) -> Result<Self> {
        let mut take = |name: &str| {
            arrays
                .remove(name)
                .ok_or_else(|| Error::shape("params", format!("missing array {name}")))
        };
        let token_embedding = take("embeddings.token")?;
        let position_embedding = match cfg.positional_mode {
            PositionalMode::Learned => Some(take("embeddings.position")?),
            _ => None,
        };
        let mut layers = Vec::with_capacity(cfg.num_layers);
        for i in 0..cfg.num_layers {
            let mut t = |n: &str| take(&format!("layer.{i}.{n}"));
            layers.push(LayerParams {
                query: t("attention.query")?,
                key: t("attention.key")?,
                value: t("attention.value")?,
                output: t("attention.output")?,
                attn_norm_gain: t("attention.norm.gain")?,
                attn_norm_bias: t("attention.norm.bias")?,
                ffn_in: t("ffn.in.weight")?,
                ffn_in_bias: t("ffn.in.bias")?,
                ffn_out: t("ffn.out.weight")?,
                ffn_out_bias: t("ffn.out.bias")?,
                ffn_norm_gain: t("ffn.norm.gain")?,
                ffn_norm_bias: t("ffn.norm.bias")?,
            });
        }
        let mlm_weight = if cfg.tie_mlm_weights { None } else { Some(take("mlm.weight")?) };
        let mlm_bias = take("mlm.bias")?;
        let mut heads = BTreeMap::new();
        let head_names: Vec<String> = arrays.keys().filter(|k| k.starts_with("head.")).cloned().collect();
        for name in head_names {
            let Some(task) = name.strip_prefix("head.").and_then(|r| r.strip_suffix(".weight")) else {
                continue;
            };
            let id: TaskId = task.parse()?;
            let weight = arrays.remove(&name).expect("listed key");
            let bias = arrays
                .remove(&format!("head.{task}.bias"))
                .ok_or_else(|| Error::shape("params", format!("missing array head.{task}.bias")))?;
            heads.insert(id, ClassifierHead { weight, bias });
        }
        if let Some(extra) = arrays.keys().next() {
            return Err(Error::shape("params", format!("unexpected array {extra}")));
        }
        let params = Self {
            token_embedding,
            position_embedding,
            layers,
            mlm_weight,
            mlm_bias,
            heads,
        };
        params.check_shapes(cfg)?;
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::{stream, Stream};

    fn tiny() -> ModelConfig {
        ModelConfig {
            vocab_size: 40,
            hidden: 8,
            ffn_dim: 16,
            ..ModelConfig::tiny()
        }
    }

    #[test]
    fn init_shapes_and_values() {
        let cfg = tiny();
        let p = ModelParams::init(&cfg, &mut stream(1, Stream::Init)).unwrap();
        p.check_shapes(&cfg).unwrap();
        assert!(p.all_finite());
        assert!(p.token_embedding.data.iter().all(|x| x.abs() <= 0.04));
        assert!(p.layers[0].attn_norm_gain.data.iter().all(|&x| x == 1.0));
        assert!(p.layers[0].ffn_in_bias.data.iter().all(|&x| x == 0.0));
        let std = (p.token_embedding.data.iter().map(|x| x * x).sum::<f64>() / 320.0).sqrt();
        assert!((0.012..0.02).contains(&std), "{std}");
    }

    #[test]
    fn named_and_mut_orders_agree() {
        let cfg = ModelConfig {
            positional_mode: PositionalMode::Learned,
            ..tiny()
        };
        let mut p = ModelParams::init(&cfg, &mut stream(1, Stream::Init)).unwrap();
        p.heads
            .insert(TaskId::Gender, ClassifierHead::init(8, 2, &mut stream(1, Stream::HeadInit)));
        let shapes: Vec<Vec<usize>> = p.named_tensors().iter().map(|(_, t)| t.shape.clone()).collect();
        let shapes_mut: Vec<Vec<usize>> = p.tensors_mut().iter().map(|t| t.shape.clone()).collect();
        assert_eq!(shapes, shapes_mut);
        let named: BTreeMap<String, Tensor> =
            p.named_tensors().into_iter().map(|(n, t)| (n, t.clone())).collect();
        assert_eq!(ModelParams::from_named(&cfg, named).unwrap(), p);
    }

    #[test]
    fn tied_weights_drop_the_projection() {
        let cfg = ModelConfig {
            tie_mlm_weights: true,
            ..tiny()
        };
        let p = ModelParams::init(&cfg, &mut stream(1, Stream::Init)).unwrap();
        assert!(p.mlm_weight.is_none());
        p.check_shapes(&cfg).unwrap();
        assert!(p.check_shapes(&tiny()).is_err());
    }
}
