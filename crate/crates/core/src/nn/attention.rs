use rand_chacha::ChaCha8Rng;

use super::params::{uniform_init, Bound, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Var};

/// Bidirectional multi-head self-attention over the rows of an `[L×d]` input.
///
/// The key projection carries no bias: a key bias shifts every score in a
/// row by the same amount, which softmax cancels, so it could never learn.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiHeadAttention {
    pub name: String,
    pub model_dim: usize,
    pub n_heads: usize,
}

/// Attention output plus the per-head `[L×L]` weight matrices.
pub struct AttentionTrace {
    pub output: Var,
    pub weights: Vec<Var>,
}

impl MultiHeadAttention {
    pub fn new(name: impl Into<String>, model_dim: usize, n_heads: usize) -> Result<Self> {
        if n_heads == 0 || !model_dim.is_multiple_of(n_heads) {
            return Err(Error::config(format!(
                "model_dim {model_dim} is not divisible by n_heads {n_heads}"
            )));
        }
        Ok(Self {
            name: name.into(),
            model_dim,
            n_heads,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.n_heads
    }

    fn key(&self, part: &str) -> String {
        format!("{}.{part}", self.name)
    }

    pub fn param_count(&self) -> usize {
        let d = self.model_dim;
        4 * d * d + 3 * d
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        let d = self.model_dim;
        for w in ["w_q", "w_k", "w_v", "w_o"] {
            store.insert(self.key(w), uniform_init(&[d, d], d, rng));
        }
        for b in ["b_q", "b_v", "b_o"] {
            store.insert(self.key(b), uniform_init(&[d], d, rng));
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        Ok(self.forward_traced(g, p, x)?.output)
    }

    pub fn forward_traced(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<AttentionTrace> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 2 || shape[1] != self.model_dim {
            return Err(Error::Shape {
                op: "multi_head_attention",
                lhs: shape,
                rhs: vec![self.model_dim],
            });
        }
        let proj = |g: &mut Graph, w: &str, b: Option<&str>| -> Result<Var> {
            let y = g.matmul(x, p.var(&self.key(w))?)?;
            match b {
                Some(b) => g.add_bias(y, p.var(&self.key(b))?),
                None => Ok(y),
            }
        };
        let q = proj(g, "w_q", Some("b_q"))?;
        let k = proj(g, "w_k", None)?;
        let v = proj(g, "w_v", Some("b_v"))?;

        let dh = self.head_dim();
        let inv_sqrt = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.n_heads);
        let mut weights = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let qh = g.slice_cols(q, h * dh, dh)?;
            let kh = g.slice_cols(k, h * dh, dh)?;
            let vh = g.slice_cols(v, h * dh, dh)?;
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, inv_sqrt);
            let attn = g.softmax_lastdim(scores);
            weights.push(attn);
            heads.push(g.matmul(attn, vh)?);
        }
        let cat = if heads.len() == 1 {
            heads[0]
        } else {
            g.concat_cols(&heads)?
        };
        let out = g.matmul(cat, p.var(&self.key("w_o"))?)?;
        let output = g.add_bias(out, p.var(&self.key("b_o"))?)?;
        Ok(AttentionTrace { output, weights })
    }
}
