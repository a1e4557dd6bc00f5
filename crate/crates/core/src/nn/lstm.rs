use rand_chacha::ChaCha8Rng;

use super::params::{uniform_init, Bound, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Single-layer LSTM. Gate blocks are packed `[input | forget | cell | output]`
/// along the last axis of `w_ih: [in×4h]`, `w_hh: [h×4h]`, `bias: [4h]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    pub name: String,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl Lstm {
    pub fn new(name: impl Into<String>, input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            name: name.into(),
            input_dim,
            hidden_dim,
        }
    }

    pub fn w_ih_key(&self) -> String {
        format!("{}.w_ih", self.name)
    }

    pub fn w_hh_key(&self) -> String {
        format!("{}.w_hh", self.name)
    }

    pub fn bias_key(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn param_count(&self) -> usize {
        let g = 4 * self.hidden_dim;
        self.input_dim * g + self.hidden_dim * g + g
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        let (i, h) = (self.input_dim, self.hidden_dim);
        store.insert(self.w_ih_key(), uniform_init(&[i, 4 * h], h, rng));
        store.insert(self.w_hh_key(), uniform_init(&[h, 4 * h], h, rng));
        store.insert(self.bias_key(), uniform_init(&[4 * h], h, rng));
    }

    /// Runs the recurrence from zero hidden and cell state and returns every
    /// hidden state stacked as `[T×h]`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, seq: Var) -> Result<Var> {
        let shape = g.shape(seq).to_vec();
        if shape.len() != 2 || shape[1] != self.input_dim {
            return Err(Error::Shape {
                op: "lstm",
                lhs: shape,
                rhs: vec![self.input_dim, 4 * self.hidden_dim],
            });
        }
        let steps = shape[0];
        let h_dim = self.hidden_dim;
        let w_ih = p.var(&self.w_ih_key())?;
        let w_hh = p.var(&self.w_hh_key())?;
        let bias = p.var(&self.bias_key())?;

        // Input projections for all steps at once.
        let xw = g.matmul(seq, w_ih)?;
        let xw = g.add_bias(xw, bias)?;

        let mut h = g.constant(Tensor::zeros(&[1, h_dim]));
        let mut c = g.constant(Tensor::zeros(&[1, h_dim]));
        let mut outputs = Vec::with_capacity(steps);
        for t in 0..steps {
            let x_t = g.slice_rows(xw, t, 1)?;
            let hw = g.matmul(h, w_hh)?;
            let gates = g.add(x_t, hw)?;
            let i_g = g.slice_cols(gates, 0, h_dim)?;
            let f_g = g.slice_cols(gates, h_dim, h_dim)?;
            let c_g = g.slice_cols(gates, 2 * h_dim, h_dim)?;
            let o_g = g.slice_cols(gates, 3 * h_dim, h_dim)?;
            let i_g = g.sigmoid(i_g);
            let f_g = g.sigmoid(f_g);
            let c_g = g.tanh(c_g);
            let o_g = g.sigmoid(o_g);
            let keep = g.mul(f_g, c)?;
            let write = g.mul(i_g, c_g)?;
            c = g.add(keep, write)?;
            let tc = g.tanh(c);
            h = g.mul(o_g, tc)?;
            outputs.push(h);
        }
        g.concat_rows(&outputs)
    }
}

/// Tensor-level LSTM forward.
pub fn lstm_forward(lstm: &Lstm, store: &ParamStore, seq: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let p = store.bind(&mut g);
    let x = g.constant(seq.clone());
    let y = lstm.forward(&mut g, &p, x)?;
    Ok(g.value(y).clone())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::tensor::grad_check;

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn zero_weights_give_zero_states() {
        let lstm = Lstm::new("l", 3, 4);
        let mut store = ParamStore::new();
        store.insert(lstm.w_ih_key(), Tensor::zeros(&[3, 16]));
        store.insert(lstm.w_hh_key(), Tensor::zeros(&[4, 16]));
        store.insert(lstm.bias_key(), Tensor::zeros(&[16]));
        let seq = Tensor::filled(&[5, 3], 0.7);
        let h = lstm_forward(&lstm, &store, &seq).unwrap();
        assert_eq!(h.shape(), &[5, 4]);
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_matches_cell_equations() {
        let lstm = Lstm::new("l", 2, 3);
        let mut store = ParamStore::new();
        lstm.init(&mut store, &mut ChaCha8Rng::seed_from_u64(4));
        let x = [0.3, -0.8];
        let seq = Tensor::from_rows(&[x.to_vec()]).unwrap();
        let h = lstm_forward(&lstm, &store, &seq).unwrap();

        let w = store.get(&lstm.w_ih_key()).unwrap().data();
        let b = store.get(&lstm.bias_key()).unwrap().data();
        let gate = |k: usize| x[0] * w[k] + x[1] * w[12 + k] + b[k];
        for j in 0..3 {
            let i = sigmoid(gate(j));
            let cand = gate(6 + j).tanh();
            let o = sigmoid(gate(9 + j));
            let c = i * cand;
            let expected = o * c.tanh();
            assert!((h.data()[j] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn gradients_through_three_steps() {
        let lstm = Lstm::new("l", 2, 4);
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        lstm.init(&mut store, &mut rng);
        let seq = uniform_init(&[3, 2], 1, &mut rng);
        let mut inputs = store.tensors();
        inputs.push(seq);
        let report = grad_check(
            |g, v| {
                let p = store.bind_vars(&v[..3])?;
                let h = lstm.forward(g, &p, v[3])?;
                let sq = g.mul(h, h)?;
                Ok(g.sum(sq))
            },
            &inputs,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn param_count_matches_store() {
        let lstm = Lstm::new("l", 5, 7);
        let mut store = ParamStore::new();
        lstm.init(&mut store, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(lstm.param_count(), store.num_scalars());
    }
}
