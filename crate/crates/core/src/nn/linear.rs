use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{uniform_init, Bound, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
    Relu,
    Identity,
}

/// `activation(x · W + b)` with `W: [in×out]`, `b: [out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl Linear {
    pub fn new(
        name: impl Into<String>,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
    ) -> Self {
        Self {
            name: name.into(),
            in_dim,
            out_dim,
            activation,
        }
    }

    pub fn weight_key(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_key(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        store.insert(
            self.weight_key(),
            uniform_init(&[self.in_dim, self.out_dim], self.in_dim, rng),
        );
        store.insert(
            self.bias_key(),
            uniform_init(&[self.out_dim], self.in_dim, rng),
        );
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let cols = *g.shape(x).last().unwrap_or(&0);
        if cols != self.in_dim {
            return Err(Error::Shape {
                op: "linear",
                lhs: g.shape(x).to_vec(),
                rhs: vec![self.in_dim, self.out_dim],
            });
        }
        let w = p.var(&self.weight_key())?;
        let b = p.var(&self.bias_key())?;
        let xw = g.matmul(x, w)?;
        let z = g.add_bias(xw, b)?;
        Ok(match self.activation {
            Activation::Gelu => g.gelu(z),
            Activation::Relu => g.relu(z),
            Activation::Identity => z,
        })
    }
}

/// Tensor-level forward of a single layer; handy outside a graph.
pub fn linear_forward(layer: &Linear, store: &ParamStore, input: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let mut single = ParamStore::new();
    for key in [layer.weight_key(), layer.bias_key()] {
        let t = store
            .get(&key)
            .ok_or_else(|| Error::contract(format!("missing parameter `{key}`")))?;
        single.insert(key, t.clone());
    }
    let bound = single.bind(&mut g);
    let x = g.constant(input.clone());
    let y = layer.forward(&mut g, &bound, x)?;
    Ok(g.value(y).clone())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::tensor::grad_check;

    #[test]
    fn identity_weight_passes_input_through() {
        let layer = Linear::new("l", 3, 3, Activation::Identity);
        let mut store = ParamStore::new();
        store.insert(layer.weight_key(), Tensor::eye(3));
        store.insert(layer.bias_key(), Tensor::zeros(&[3]));
        let x = Tensor::from_rows(&[vec![1.0, -2.0, 0.5], vec![3.0, 4.0, 5.0]]).unwrap();
        assert_eq!(linear_forward(&layer, &store, &x).unwrap(), x);
    }

    #[test]
    fn zero_weight_emits_bias_rows() {
        let layer = Linear::new("l", 2, 3, Activation::Identity);
        let mut store = ParamStore::new();
        store.insert(layer.weight_key(), Tensor::zeros(&[2, 3]));
        store.insert(layer.bias_key(), Tensor::vector(vec![0.5, -1.0, 2.0]));
        let x = Tensor::from_rows(&[vec![7.0, 8.0], vec![-1.0, 0.0], vec![3.0, 3.0]]).unwrap();
        let y = linear_forward(&layer, &store, &x).unwrap();
        for i in 0..3 {
            assert_eq!(y.row(i), &[0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn wrong_input_width_is_rejected() {
        let layer = Linear::new("l", 2, 3, Activation::Relu);
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        layer.init(&mut store, &mut rng);
        let x = Tensor::zeros(&[4, 5]);
        assert!(matches!(
            linear_forward(&layer, &store, &x),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn random_layer_shape_and_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for activation in [Activation::Gelu, Activation::Identity, Activation::Relu] {
            let layer = Linear::new("l", 4, 3, activation);
            let mut store = ParamStore::new();
            layer.init(&mut store, &mut rng);
            let x = uniform_init(&[5, 4], 1, &mut rng);
            assert_eq!(linear_forward(&layer, &store, &x).unwrap().shape(), &[5, 3]);
            assert_eq!(store.num_scalars(), layer.param_count());

            let mut inputs = store.tensors();
            inputs.push(x);
            let report = grad_check(
                |g, v| {
                    let bound = store.bind_vars(&v[..2])?;
                    let y = layer.forward(g, &bound, v[2])?;
                    let sq = g.mul(y, y)?;
                    Ok(g.sum(sq))
                },
                &inputs,
                1e-5,
            )
            .unwrap();
            assert!(report.max_rel_error < 1e-4, "{activation:?}: {report:?}");
        }
    }
}
