//! Encoder-plus-head network shared by the spatial and temporal models.
//!
//! ```text
//! x [L×F] ─ embed (2×GELU) ─ e [L×d] ─ encoder ─ a [L×d]
//!        [a ‖ e] [L×2d] ─ 4 reduction layers ─ z [L×d/4]
//!        flatten [1×L·d/4] ─ GELU layer ─ identity layer ─ y [L]
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    check_rate, sinusoidal_encoding, Activation, Bound, Dropout, EncoderConfig, Linear, ParamStore,
    TransformerEncoder,
};
use crate::tensor::{Graph, Var};

/// Fixed affine map from network output to millimetres of SWE.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub mean: f64,
    pub std: f64,
}

impl Default for TargetScale {
    fn default() -> Self {
        Self {
            mean: 0.0,
            std: 1.0,
        }
    }
}

impl TargetScale {
    pub fn apply(&self, g: &mut Graph, y: Var) -> Result<Var> {
        if self.mean == 0.0 && self.std == 1.0 {
            return Ok(y);
        }
        let scaled = g.scale(y, self.std);
        let shift = g.constant(crate::tensor::Tensor::filled(g.shape(y), self.mean));
        g.add(scaled, shift)
    }
}

/// Architecture hyperparameters common to both attention models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub embed_dim: usize,
    pub encoder: EncoderConfig,
    pub reduction_dims: Vec<usize>,
    pub output_hidden_dim: usize,
    pub dropout_reduction: f64,
    pub dropout_output: f64,
}

impl HeadConfig {
    /// Halve three times then hold: `2d → d → d/2 → d/4 → d/4`.
    pub fn default_reduction(embed_dim: usize) -> Vec<usize> {
        vec![embed_dim, embed_dim / 2, embed_dim / 4, embed_dim / 4]
    }

    pub fn new(embed_dim: usize, n_heads: usize, n_layers: usize) -> Self {
        Self {
            embed_dim,
            encoder: EncoderConfig::new(embed_dim, n_heads, n_layers),
            reduction_dims: Self::default_reduction(embed_dim),
            output_hidden_dim: embed_dim,
            dropout_reduction: 0.20,
            dropout_output: 0.10,
        }
    }

    pub fn paper() -> Self {
        let mut c = Self::new(512, 16, 24);
        c.encoder = EncoderConfig::paper();
        c
    }

    /// Turns off every dropout site.
    pub fn without_dropout(mut self) -> Self {
        self.dropout_reduction = 0.0;
        self.dropout_output = 0.0;
        self.encoder.dropout_rate = 0.0;
        self
    }

    pub fn reduced_dim(&self) -> usize {
        *self.reduction_dims.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.embed_dim == 0 || self.output_hidden_dim == 0 {
            return Err(Error::config("embed and output widths must be positive"));
        }
        if self.encoder.model_dim != self.embed_dim {
            return Err(Error::config(format!(
                "encoder model_dim {} differs from embed_dim {}",
                self.encoder.model_dim, self.embed_dim
            )));
        }
        if self.reduction_dims.len() != 4 {
            return Err(Error::config(format!(
                "expected 4 reduction widths, got {}",
                self.reduction_dims.len()
            )));
        }
        if !(2 * self.embed_dim).is_multiple_of(8) || self.reduced_dim() != 2 * self.embed_dim / 8 {
            return Err(Error::config(format!(
                "last reduction width must be 2d/8 = {} for d = {}, got {}",
                2 * self.embed_dim / 8,
                self.embed_dim,
                self.reduced_dim()
            )));
        }
        if self.reduction_dims.contains(&0) {
            return Err(Error::config("reduction widths must be positive"));
        }
        check_rate(self.dropout_reduction)?;
        check_rate(self.dropout_output)
    }
}

/// Widths observed at each stage of one forward pass.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageWidths {
    pub embed: usize,
    pub concat: usize,
    pub reduced: usize,
    pub flattened: usize,
    pub output: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct AttentionNet {
    seq_len: usize,
    feature_dim: usize,
    head: HeadConfig,
    positional: bool,
    embed: [Linear; 2],
    encoder: TransformerEncoder,
    reduction: Vec<Linear>,
    out_hidden: Linear,
    out_final: Linear,
}

impl AttentionNet {
    pub(crate) fn new(
        seq_len: usize,
        feature_dim: usize,
        head: &HeadConfig,
        positional: bool,
    ) -> Result<Self> {
        head.validate()?;
        if seq_len == 0 || feature_dim == 0 {
            return Err(Error::config(
                "sequence length and feature width must be positive",
            ));
        }
        let d = head.embed_dim;
        let mut reduction = Vec::with_capacity(4);
        let mut width = 2 * d;
        for (i, &out) in head.reduction_dims.iter().enumerate() {
            // ReLU on the first and third reduction layers only.
            let act = if i % 2 == 0 {
                Activation::Relu
            } else {
                Activation::Identity
            };
            reduction.push(Linear::new(format!("reduce{i}"), width, out, act));
            width = out;
        }
        Ok(Self {
            seq_len,
            feature_dim,
            head: head.clone(),
            positional,
            embed: [
                Linear::new("embed0", feature_dim, d, Activation::Gelu),
                Linear::new("embed1", d, d, Activation::Gelu),
            ],
            encoder: TransformerEncoder::new("encoder", &head.encoder)?,
            reduction,
            out_hidden: Linear::new(
                "out0",
                seq_len * width,
                head.output_hidden_dim,
                Activation::Gelu,
            ),
            out_final: Linear::new(
                "out1",
                head.output_hidden_dim,
                seq_len,
                Activation::Identity,
            ),
        })
    }

    pub(crate) fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub(crate) fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub(crate) fn param_count(&self) -> usize {
        self.embed.iter().map(Linear::param_count).sum::<usize>()
            + self.encoder.param_count()
            + self
                .reduction
                .iter()
                .map(Linear::param_count)
                .sum::<usize>()
            + self.out_hidden.param_count()
            + self.out_final.param_count()
    }

    pub(crate) fn init(&self, seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        for l in &self.embed {
            l.init(&mut store, &mut rng);
        }
        self.encoder.init(&mut store, &mut rng);
        for l in &self.reduction {
            l.init(&mut store, &mut rng);
        }
        self.out_hidden.init(&mut store, &mut rng);
        self.out_final.init(&mut store, &mut rng);
        store
    }

    pub(crate) fn forward(
        &self,
        g: &mut Graph,
        p: &Bound,
        x: Var,
        drop: &mut Dropout,
        widths: Option<&mut StageWidths>,
    ) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        if shape != [self.seq_len, self.feature_dim] {
            return Err(Error::Shape {
                op: "attention_model",
                lhs: shape,
                rhs: vec![self.seq_len, self.feature_dim],
            });
        }
        let e = self.embed[0].forward(g, p, x)?;
        let mut e = self.embed[1].forward(g, p, e)?;
        if self.positional {
            let pe = g.constant(sinusoidal_encoding(self.seq_len, self.head.embed_dim));
            e = g.add(e, pe)?;
        }
        let embed_width = g.shape(e)[1];

        let a = self.encoder.forward(g, p, e, drop)?;
        let mut z = g.concat_cols(&[a, e])?;
        let concat_width = g.shape(z)[1];

        for layer in &self.reduction {
            z = layer.forward(g, p, z)?;
            z = drop.apply(g, z, self.head.dropout_reduction)?;
        }
        let reduced_width = g.shape(z)[1];

        let flat = g.reshape(z, &[1, self.seq_len * reduced_width])?;
        let flat_width = g.shape(flat)[1];
        let h = self.out_hidden.forward(g, p, flat)?;
        let h = drop.apply(g, h, self.head.dropout_output)?;
        let y = self.out_final.forward(g, p, h)?;
        let y = g.reshape(y, &[self.seq_len])?;

        if let Some(w) = widths {
            *w = StageWidths {
                embed: embed_width,
                concat: concat_width,
                reduced: reduced_width,
                flattened: flat_width,
                output: self.seq_len,
            };
        }
        Ok(y)
    }
}

/// Closed-form parameter count for an attention model of sequence length
/// `seq_len` over `feature_dim` inputs.
pub fn attention_param_count(seq_len: usize, feature_dim: usize, head: &HeadConfig) -> usize {
    let d = head.embed_dim;
    let lin = |i: usize, o: usize| i * o + o;
    let mut total = lin(feature_dim, d) + lin(d, d);
    total += TransformerEncoder::param_count_for(&head.encoder);
    let mut width = 2 * d;
    for &o in &head.reduction_dims {
        total += lin(width, o);
        width = o;
    }
    total += lin(seq_len * width, head.output_hidden_dim);
    total += lin(head.output_hidden_dim, seq_len);
    total
}

/// Widths an attention model would produce, derived from the config alone.
pub fn planned_widths(seq_len: usize, head: &HeadConfig) -> StageWidths {
    StageWidths {
        embed: head.embed_dim,
        concat: 2 * head.embed_dim,
        reduced: head.reduced_dim(),
        flattened: seq_len * head.reduced_dim(),
        output: seq_len,
    }
}
