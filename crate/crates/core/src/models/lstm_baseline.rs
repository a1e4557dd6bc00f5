use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention_net::TargetScale;
use super::{ModelKind, SequenceModel};
use crate::error::{Error, Result};
use crate::nn::{Activation, Bound, Dropout, Linear, Lstm, ParamStore};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmBaselineConfig {
    pub season_length: usize,
    pub feature_dim: usize,
    pub hidden_dim: usize,
    #[serde(default)]
    pub target: TargetScale,
}

impl LstmBaselineConfig {
    /// One layer, 128 hidden units.
    pub fn new(season_length: usize, feature_dim: usize) -> Self {
        Self {
            season_length,
            feature_dim,
            hidden_dim: 128,
            target: TargetScale::default(),
        }
    }
}

/// LSTM over the days of a season with a per-step linear head.
#[derive(Clone, Debug)]
pub struct LstmBaseline {
    pub cfg: LstmBaselineConfig,
    lstm: Lstm,
    head: Linear,
}

impl LstmBaseline {
    pub fn new(cfg: LstmBaselineConfig) -> Result<Self> {
        if cfg.season_length == 0 || cfg.feature_dim == 0 || cfg.hidden_dim == 0 {
            return Err(Error::config("LSTM dimensions must be positive"));
        }
        Ok(Self {
            lstm: Lstm::new("lstm", cfg.feature_dim, cfg.hidden_dim),
            head: Linear::new("head", cfg.hidden_dim, 1, Activation::Identity),
            cfg,
        })
    }

    pub fn head(&self) -> &Linear {
        &self.head
    }
}

impl SequenceModel for LstmBaseline {
    fn kind(&self) -> ModelKind {
        ModelKind::Lstm
    }

    fn seq_len(&self) -> usize {
        self.cfg.season_length
    }

    fn feature_dim(&self) -> usize {
        self.cfg.feature_dim
    }

    fn param_count(&self) -> usize {
        self.lstm.param_count() + self.head.param_count()
    }

    fn init_params(&self, seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        self.lstm.init(&mut store, &mut rng);
        self.head.init(&mut store, &mut rng);
        store
    }

    fn forward(&self, g: &mut Graph, p: &Bound, x: Var, _drop: &mut Dropout) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        if shape != [self.cfg.season_length, self.cfg.feature_dim] {
            return Err(Error::Shape {
                op: "lstm_baseline",
                lhs: shape,
                rhs: vec![self.cfg.season_length, self.cfg.feature_dim],
            });
        }
        let h = self.lstm.forward(g, p, x)?;
        let y = self.head.forward(g, p, h)?;
        let y = g.reshape(y, &[self.cfg.season_length])?;
        self.cfg.target.apply(g, y)
    }
}

pub fn lstm_baseline_forward(
    cfg: &LstmBaselineConfig,
    params: &ParamStore,
    x_seq: &Tensor,
) -> Result<Tensor> {
    LstmBaseline::new(cfg.clone())?.predict(params, x_seq)
}
