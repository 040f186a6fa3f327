use std::ops::Range;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::vocab::Vocab;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Dims {
    pub v: usize,
    pub e: usize,
    pub h: usize,
    /// Encoder output width (both directions).
    pub c: usize,
    pub a: usize,
}

/// Storage ranges of every tensor, resolved once.
#[derive(Clone, Debug)]
pub(crate) struct Offsets {
    pub embed: Range<usize>,
    pub enc_w: [Range<usize>; 2],
    pub enc_b: [Range<usize>; 2],
    pub init_w: Range<usize>,
    pub init_b: Range<usize>,
    pub dec_w: Range<usize>,
    pub dec_b: Range<usize>,
    pub att_q: Range<usize>,
    pub att_k: Range<usize>,
    pub att_b: Range<usize>,
    pub att_v: Range<usize>,
    pub hid_w: Range<usize>,
    pub hid_b: Range<usize>,
    pub ln: Option<(Range<usize>, Range<usize>)>,
    /// Equal to `embed` when the output projection is tied.
    pub out_w: Range<usize>,
    pub out_b: Range<usize>,
}

/// Flat parameter layout: named tensors in storage order plus view names that
/// resolve to one of them.
#[derive(Clone, Debug)]
pub struct Layout {
    tensors: Vec<TensorSpec>,
    aliases: Vec<(String, String)>,
    total: usize,
    pub(crate) dims: Dims,
    pub(crate) off: Offsets,
}

impl PartialEq for Layout {
    fn eq(&self, other: &Self) -> bool {
        self.tensors == other.tensors && self.aliases == other.aliases
    }
}

impl Layout {
    pub fn new(cfg: &ModelConfig, vocab_size: usize) -> Self {
        let (v, e, h, a) = (vocab_size, cfg.embed_dim, cfg.hidden_dim, cfg.attention_dim);
        let c = 2 * h;
        let mut tensors = Vec::new();
        let mut total = 0;
        let mut add = |name: &str, shape: &[usize]| {
            let spec = TensorSpec {
                name: name.to_string(),
                shape: shape.to_vec(),
                offset: total,
            };
            total += spec.len();
            let r = spec.range();
            tensors.push(spec);
            r
        };
        let embed = add("embed", &[v, e]);
        let enc_w0 = add("encoder.fwd.weight", &[4 * h, e + h]);
        let enc_b0 = add("encoder.fwd.bias", &[4 * h]);
        let enc_w1 = add("encoder.bwd.weight", &[4 * h, e + h]);
        let enc_b1 = add("encoder.bwd.bias", &[4 * h]);
        let init_w = add("decoder.init.weight", &[h, c]);
        let init_b = add("decoder.init.bias", &[h]);
        let dec_w = add("decoder.lstm.weight", &[4 * h, e + c + h]);
        let dec_b = add("decoder.lstm.bias", &[4 * h]);
        let att_q = add("attention.query", &[a, h]);
        let att_k = add("attention.key", &[a, c]);
        let att_b = add("attention.bias", &[a]);
        let att_v = add("attention.v", &[a]);
        let hid_w = add("output.hidden.weight", &[e, h + c]);
        let hid_b = add("output.hidden.bias", &[e]);
        let ln = cfg
            .layer_norm
            .then(|| (add("output.norm.gain", &[e]), add("output.norm.bias", &[e])));
        let out_w = if cfg.tie_output_embeddings {
            embed.clone()
        } else {
            add("output.weight", &[v, e])
        };
        let out_b = add("output.bias", &[v]);
        let out_name = if cfg.tie_output_embeddings { "embed" } else { "output.weight" };
        let aliases = [
            ("source_embedding", "embed"),
            ("target_embedding", "embed"),
            ("output_embedding", out_name),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        Layout {
            tensors,
            aliases,
            total,
            dims: Dims { v, e, h, c, a },
            off: Offsets {
                embed,
                enc_w: [enc_w0, enc_w1],
                enc_b: [enc_b0, enc_b1],
                init_w,
                init_b,
                dec_w,
                dec_b,
                att_q,
                att_k,
                att_b,
                att_v,
                hid_w,
                hid_b,
                ln,
                out_w,
                out_b,
            },
        }
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    pub fn aliases(&self) -> &[(String, String)] {
        &self.aliases
    }

    /// Total number of stored scalars (tied tensors counted once).
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// The tensor stored under `name` or aliased by it.
    pub fn spec(&self, name: &str) -> Option<&TensorSpec> {
        let target = self
            .aliases
            .iter()
            .find(|(a, _)| a == name)
            .map_or(name, |(_, t)| t.as_str());
        self.tensors.iter().find(|t| t.name == target)
    }
}

/// All trainable values of one model in a single buffer.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub vocab: Arc<Vocab>,
    layout: Arc<Layout>,
    values: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(config: ModelConfig, vocab: Arc<Vocab>) -> Result<Self> {
        config.validate()?;
        if vocab.is_empty() {
            return Err(Error::Empty("vocabulary"));
        }
        let layout = Arc::new(Layout::new(&config, vocab.len()));
        let values = vec![0.0; layout.len()];
        Ok(ModelParams {
            config,
            vocab,
            layout,
            values,
        })
    }

    pub fn from_values(config: ModelConfig, vocab: Arc<Vocab>, values: Vec<f64>) -> Result<Self> {
        let mut p = ModelParams::zeros(config, vocab)?;
        if values.len() != p.values.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, found {}",
                p.values.len(),
                values.len()
            )));
        }
        p.values = values;
        Ok(p)
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        let r = self.layout.spec(name)?.range();
        Some(&self.values[r])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let r = self.layout.spec(name)?.range();
        Some(&mut self.values[r])
    }

    /// Same tensor shapes and the same vocabulary.
    pub fn compatible(&self, other: &ModelParams) -> bool {
        *self.layout == *other.layout && self.vocab.tokens() == other.vocab.tokens()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

/// Glorot-uniform weights scaled by `init_scale`, zero biases except a unit
/// forget-gate bias in both LSTMs, unit layer-norm gain.
pub fn init_model(config: &ModelConfig, vocab: Arc<Vocab>, seed: u64) -> Result<ModelParams> {
    let mut p = ModelParams::zeros(config.clone(), vocab)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = p.layout.clone();
    let h = config.hidden_dim;
    for spec in layout.tensors() {
        let vals = &mut p.values[spec.range()];
        let bias = spec.name.ends_with(".bias");
        if spec.name == "output.norm.gain" {
            vals.fill(1.0);
        } else if bias {
            if spec.name.starts_with("encoder.") || spec.name == "decoder.lstm.bias" {
                vals[h..2 * h].fill(1.0);
            }
        } else {
            let (fan_out, fan_in) = match spec.shape[..] {
                [r, c] => (r, c),
                [n] => (1, n),
                _ => unreachable!(),
            };
            let bound = config.init_scale * (6.0 / (fan_in + fan_out) as f64).sqrt();
            vals.iter_mut().for_each(|x| *x = rng.gen_range(-bound..bound));
        }
    }
    Ok(p)
}
