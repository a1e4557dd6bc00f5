use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention::MultiHeadAttention;
use super::dropout::{check_rate, Dropout};
use super::linear::{Activation, Linear};
use super::params::{Bound, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub model_dim: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ffn_hidden_dim: usize,
    pub dropout_rate: f64,
}

impl EncoderConfig {
    /// `ffn_hidden_dim = 4 d`, dropout 0.1.
    pub fn new(model_dim: usize, n_heads: usize, n_layers: usize) -> Self {
        Self {
            model_dim,
            n_heads,
            n_layers,
            ffn_hidden_dim: 4 * model_dim,
            dropout_rate: 0.1,
        }
    }

    /// 16 heads, 24 blocks at `d = 512`.
    pub fn paper() -> Self {
        Self::new(512, 16, 24)
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_dim == 0
            || self.n_heads == 0
            || self.n_layers == 0
            || self.ffn_hidden_dim == 0
        {
            return Err(Error::config("encoder dimensions must be positive"));
        }
        if !self.model_dim.is_multiple_of(self.n_heads) {
            return Err(Error::config(format!(
                "model_dim {} is not divisible by n_heads {}",
                self.model_dim, self.n_heads
            )));
        }
        check_rate(self.dropout_rate)
    }
}

/// Row-wise layer norm followed by a learned gain and shift.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub name: String,
    pub dim: usize,
}

impl LayerNorm {
    pub fn param_count(&self) -> usize {
        2 * self.dim
    }

    pub fn init(&self, store: &mut ParamStore) {
        store.insert(
            format!("{}.gain", self.name),
            Tensor::filled(&[self.dim], 1.0),
        );
        store.insert(format!("{}.shift", self.name), Tensor::zeros(&[self.dim]));
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let z = g.layer_norm(x, LAYER_NORM_EPS)?;
        let z = g.mul_cols(z, p.var(&format!("{}.gain", self.name))?)?;
        g.add_bias(z, p.var(&format!("{}.shift", self.name))?)
    }
}

/// Post-norm block: `x = LN(x + attn(x))`, then `x = LN(x + ffn(x))`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayer {
    attn: MultiHeadAttention,
    norm1: LayerNorm,
    ffn_in: Linear,
    ffn_out: Linear,
    norm2: LayerNorm,
    dropout_rate: f64,
}

impl EncoderLayer {
    fn new(prefix: &str, cfg: &EncoderConfig) -> Result<Self> {
        let d = cfg.model_dim;
        Ok(Self {
            attn: MultiHeadAttention::new(format!("{prefix}.attn"), d, cfg.n_heads)?,
            norm1: LayerNorm {
                name: format!("{prefix}.norm1"),
                dim: d,
            },
            ffn_in: Linear::new(
                format!("{prefix}.ffn_in"),
                d,
                cfg.ffn_hidden_dim,
                Activation::Gelu,
            ),
            ffn_out: Linear::new(
                format!("{prefix}.ffn_out"),
                cfg.ffn_hidden_dim,
                d,
                Activation::Identity,
            ),
            norm2: LayerNorm {
                name: format!("{prefix}.norm2"),
                dim: d,
            },
            dropout_rate: cfg.dropout_rate,
        })
    }

    fn param_count(&self) -> usize {
        self.attn.param_count()
            + self.norm1.param_count()
            + self.ffn_in.param_count()
            + self.ffn_out.param_count()
            + self.norm2.param_count()
    }

    fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        self.attn.init(store, rng);
        self.norm1.init(store);
        self.ffn_in.init(store, rng);
        self.ffn_out.init(store, rng);
        self.norm2.init(store);
    }

    fn forward(&self, g: &mut Graph, p: &Bound, x: Var, drop: &mut Dropout) -> Result<Var> {
        let a = self.attn.forward(g, p, x)?;
        let a = drop.apply(g, a, self.dropout_rate)?;
        let h = g.add(x, a)?;
        let h = self.norm1.forward(g, p, h)?;

        let f = self.ffn_in.forward(g, p, h)?;
        let f = self.ffn_out.forward(g, p, f)?;
        let f = drop.apply(g, f, self.dropout_rate)?;
        let out = g.add(h, f)?;
        self.norm2.forward(g, p, out)
    }
}

/// Stack of `n_layers` encoder blocks; output shape equals input shape.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformerEncoder {
    pub cfg: EncoderConfig,
    layers: Vec<EncoderLayer>,
}

impl TransformerEncoder {
    pub fn new(name: &str, cfg: &EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let layers = (0..cfg.n_layers)
            .map(|i| EncoderLayer::new(&format!("{name}.layer{i:02}"), cfg))
            .collect::<Result<_>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            layers,
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(EncoderLayer::param_count).sum()
    }

    /// Closed form of [`Self::param_count`] straight from the config.
    pub fn param_count_for(cfg: &EncoderConfig) -> usize {
        let d = cfg.model_dim;
        let per_layer = (4 * d * d + 3 * d)
            + 2 * d
            + (d * cfg.ffn_hidden_dim + cfg.ffn_hidden_dim)
            + (cfg.ffn_hidden_dim * d + d)
            + 2 * d;
        cfg.n_layers * per_layer
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        for layer in &self.layers {
            layer.init(store, rng);
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var, drop: &mut Dropout) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 2 || shape[1] != self.cfg.model_dim {
            return Err(Error::Shape {
                op: "transformer_encoder",
                lhs: shape,
                rhs: vec![self.cfg.model_dim],
            });
        }
        self.layers
            .iter()
            .try_fold(x, |h, layer| layer.forward(g, p, h, drop))
    }
}

/// Fixed sinusoidal position table `[len×d]`:
/// `PE[pos, 2i] = sin(pos / 10000^(2i/d))`, `PE[pos, 2i+1] = cos(...)`.
pub fn sinusoidal_encoding(len: usize, d: usize) -> Tensor {
    let mut t = Tensor::zeros(&[len, d]);
    let data = t.data_mut();
    for pos in 0..len {
        for i in 0..d {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / d as f64);
            data[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    use super::*;
    use crate::nn::params::uniform_init;
    use crate::tensor::grad_check;

    fn build(cfg: &EncoderConfig, seed: u64) -> (TransformerEncoder, ParamStore) {
        let enc = TransformerEncoder::new("enc", cfg).unwrap();
        let mut store = ParamStore::new();
        enc.init(&mut store, &mut ChaCha8Rng::seed_from_u64(seed));
        (enc, store)
    }

    fn run(enc: &TransformerEncoder, store: &ParamStore, x: &Tensor) -> Tensor {
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let xv = g.constant(x.clone());
        let y = enc.forward(&mut g, &p, xv, &mut Dropout::eval()).unwrap();
        g.value(y).clone()
    }

    #[test]
    fn config_validation() {
        assert!(EncoderConfig::new(10, 3, 1).validate().is_err());
        assert!(EncoderConfig::new(12, 3, 1).validate().is_ok());
        let mut c = EncoderConfig::new(8, 2, 1);
        c.dropout_rate = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn shape_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (l, d, h) in [(1, 4, 1), (5, 8, 2), (9, 12, 3)] {
            let cfg = EncoderConfig::new(d, h, 2);
            let (enc, store) = build(&cfg, 9);
            let x = uniform_init(&[l, d], 1, &mut rng);
            assert_eq!(run(&enc, &store, &x).shape(), &[l, d]);
        }
    }

    #[test]
    fn permutation_equivariant() {
        let cfg = EncoderConfig::new(8, 2, 2);
        let (enc, store) = build(&cfg, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x = uniform_init(&[6, 8], 1, &mut rng);
        let y = run(&enc, &store, &x);
        let mut perm: Vec<usize> = (0..6).collect();
        perm.shuffle(&mut rng);
        let xp = Tensor::from_rows(&perm.iter().map(|&i| x.row(i).to_vec()).collect::<Vec<_>>())
            .unwrap();
        let yp = run(&enc, &store, &xp);
        for (k, &i) in perm.iter().enumerate() {
            for (a, b) in yp.row(k).iter().zip(y.row(i)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn param_count_closed_form() {
        let cfg = EncoderConfig::new(12, 3, 2);
        let (enc, store) = build(&cfg, 0);
        assert_eq!(enc.param_count(), store.num_scalars());
        assert_eq!(
            TransformerEncoder::param_count_for(&cfg),
            store.num_scalars()
        );
    }

    #[test]
    fn one_layer_gradients() {
        let cfg = EncoderConfig::new(4, 2, 1);
        let (enc, store) = build(&cfg, 3);
        let x = uniform_init(&[3, 4], 1, &mut ChaCha8Rng::seed_from_u64(8));
        let mut inputs = store.tensors();
        inputs.push(x);
        let n = store.len();
        let report = grad_check(
            |g, v| {
                let p = store.bind_vars(&v[..n])?;
                let y = enc.forward(g, &p, v[n], &mut Dropout::eval())?;
                let w = g.constant(uniform_init(&[3, 4], 1, &mut ChaCha8Rng::seed_from_u64(99)));
                let yw = g.mul(y, w)?;
                Ok(g.sum(yw))
            },
            &inputs,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn positional_table_first_row() {
        let pe = sinusoidal_encoding(3, 4);
        assert_eq!(pe.row(0), &[0.0, 1.0, 0.0, 1.0]);
        assert!((pe.row(1)[0] - 1f64.sin()).abs() < 1e-15);
    }
}
