//! Spatial, temporal and ensemble attention models plus the LSTM and
//! linear-regression baselines.

mod attention;
mod attention_net;
mod checkpoint;
mod ensemble;
mod linear_regression;
mod lstm_baseline;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use attention::{
    spatial_forward, temporal_forward, SpatialModel, SpatialModelConfig, TemporalModel,
    TemporalModelConfig,
};
pub use attention_net::{
    attention_param_count, planned_widths, HeadConfig, StageWidths, TargetScale,
};
pub use checkpoint::{Checkpoint, ModelConfig, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use ensemble::{ensemble_mean, ensemble_predict};
pub use linear_regression::{linear_regression_fit, LinearRegression, NormalEquations};
pub use lstm_baseline::{lstm_baseline_forward, LstmBaseline, LstmBaselineConfig};

use crate::error::{Error, Result};
use crate::nn::{Bound, Dropout, ParamStore};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Spatial,
    Temporal,
    Ensemble,
    Lstm,
    Lr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Spatial,
        ModelKind::Temporal,
        ModelKind::Ensemble,
        ModelKind::Lstm,
        ModelKind::Lr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Spatial => "spatial",
            ModelKind::Temporal => "temporal",
            ModelKind::Ensemble => "ensemble",
            ModelKind::Lstm => "lstm",
            ModelKind::Lr => "lr",
        }
    }

    /// Whether one example covers every location of one day (`true`) or
    /// every day of one location (`false`).
    pub fn is_spatial(self) -> bool {
        self == ModelKind::Spatial
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown model kind `{s}`")))
    }
}

/// A network mapping a `[L×F]` sequence to `[L]` SWE values in mm.
pub trait SequenceModel: Sync {
    fn kind(&self) -> ModelKind;
    fn seq_len(&self) -> usize;
    fn feature_dim(&self) -> usize;
    fn param_count(&self) -> usize;
    fn init_params(&self, seed: u64) -> ParamStore;
    fn forward(&self, g: &mut Graph, p: &Bound, x: Var, drop: &mut Dropout) -> Result<Var>;

    fn run(&self, params: &ParamStore, x: &Tensor, drop: &mut Dropout) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = params.bind(&mut g);
        let xv = g.constant(x.clone());
        let y = self.forward(&mut g, &p, xv, drop)?;
        Ok(g.value(y).clone())
    }

    /// Eval-mode forward.
    fn predict(&self, params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        self.run(params, x, &mut Dropout::eval())
    }
}
