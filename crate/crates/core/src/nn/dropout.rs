use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Mode plus the random stream that drives dropout masks in one forward pass.
#[derive(Clone, Debug)]
pub struct Dropout {
    pub mode: Mode,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn eval() -> Self {
        Self {
            mode: Mode::Eval,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn train(seed: u64) -> Self {
        Self {
            mode: Mode::Train,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn new(mode: Mode, seed: u64) -> Self {
        Self {
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Inverted dropout: in train mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1/(1-rate)`.
    pub fn apply(&mut self, g: &mut Graph, x: Var, rate: f64) -> Result<Var> {
        check_rate(rate)?;
        if self.mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let mask = self.mask(g.shape(x), rate);
        let m = g.constant(mask);
        g.mul(x, m)
    }

    fn mask(&mut self, shape: &[usize], rate: f64) -> Tensor {
        let keep = 1.0 / (1.0 - rate);
        let mut t = Tensor::zeros(shape);
        for v in t.data_mut() {
            *v = if self.rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            };
        }
        t
    }
}

pub fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::contract(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    Ok(())
}

/// Tensor-level dropout.
pub fn dropout(input: &Tensor, rate: f64, drop: &mut Dropout) -> Result<Tensor> {
    let mut g = Graph::new();
    let x = g.constant(input.clone());
    let y = drop.apply(&mut g, x, rate)?;
    Ok(g.value(y).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Tensor {
        Tensor::vector((0..n).map(|i| 1.0 + i as f64 * 0.001).collect())
    }

    #[test]
    fn eval_mode_is_identity() {
        let x = ramp(100);
        assert_eq!(dropout(&x, 0.5, &mut Dropout::eval()).unwrap(), x);
    }

    #[test]
    fn zero_rate_is_identity_in_train_mode() {
        let x = ramp(100);
        assert_eq!(dropout(&x, 0.0, &mut Dropout::train(3)).unwrap(), x);
    }

    #[test]
    fn half_rate_statistics() {
        let x = Tensor::filled(&[100_000], 1.0);
        let y = dropout(&x, 0.5, &mut Dropout::train(42)).unwrap();
        let survivors: Vec<f64> = y.data().iter().copied().filter(|&v| v != 0.0).collect();
        let frac = survivors.len() as f64 / 100_000.0;
        assert!((frac - 0.5).abs() < 0.01, "survivor fraction {frac}");
        assert!(survivors.iter().all(|&v| v == 2.0));
    }

    #[test]
    fn rate_outside_unit_interval_is_rejected() {
        let x = ramp(3);
        assert!(dropout(&x, 1.0, &mut Dropout::train(0)).is_err());
        assert!(dropout(&x, -0.1, &mut Dropout::eval()).is_err());
    }
}
