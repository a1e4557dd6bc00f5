use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    LinearRegression, LstmBaseline, LstmBaselineConfig, ModelKind, SequenceModel, SpatialModel,
    SpatialModelConfig, TemporalModel, TemporalModelConfig,
};
use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "swe-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

const LR_WEIGHTS: &str = "lr.weights";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelConfig {
    Spatial(SpatialModelConfig),
    Temporal(TemporalModelConfig),
    Lstm(LstmBaselineConfig),
    LinearRegression { feature_dim: usize, ridge: f64 },
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Spatial(_) => ModelKind::Spatial,
            ModelConfig::Temporal(_) => ModelKind::Temporal,
            ModelConfig::Lstm(_) => ModelKind::Lstm,
            ModelConfig::LinearRegression { .. } => ModelKind::Lr,
        }
    }

    /// The network for a neural config; `None` for linear regression.
    pub fn build(&self) -> Result<Option<Box<dyn SequenceModel>>> {
        Ok(match self {
            ModelConfig::Spatial(c) => Some(Box::new(SpatialModel::new(c.clone())?)),
            ModelConfig::Temporal(c) => Some(Box::new(TemporalModel::new(c.clone())?)),
            ModelConfig::Lstm(c) => Some(Box::new(LstmBaseline::new(c.clone())?)),
            ModelConfig::LinearRegression { .. } => None,
        })
    }
}

/// Trained parameters plus everything needed to run them on new data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub params: ParamStore,
    pub norm: Option<NormStats>,
    pub station_ids: Vec<String>,
    pub feature_names: Vec<String>,
}

impl Checkpoint {
    pub fn new(
        config: ModelConfig,
        params: ParamStore,
        norm: Option<NormStats>,
        station_ids: Vec<String>,
        feature_names: Vec<String>,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config,
            params,
            norm,
            station_ids,
            feature_names,
        }
    }

    pub fn from_linear(
        model: &LinearRegression,
        ridge: f64,
        norm: Option<NormStats>,
        station_ids: Vec<String>,
        feature_names: Vec<String>,
    ) -> Self {
        let mut params = ParamStore::new();
        params.insert(LR_WEIGHTS, Tensor::vector(model.weights.clone()));
        let config = ModelConfig::LinearRegression {
            feature_dim: model.feature_dim(),
            ridge,
        };
        Self::new(config, params, norm, station_ids, feature_names)
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind()
    }

    pub fn linear(&self) -> Result<LinearRegression> {
        let ModelConfig::LinearRegression { feature_dim, .. } = self.config else {
            return Err(Error::contract(
                "checkpoint does not hold a linear regression",
            ));
        };
        let w = self
            .params
            .get(LR_WEIGHTS)
            .ok_or_else(|| Error::data("linear checkpoint is missing its weights"))?;
        if w.numel() != feature_dim + 1 {
            return Err(Error::data("linear checkpoint weight length mismatch"));
        }
        Ok(LinearRegression {
            weights: w.data().to_vec(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        serde_json::to_writer(&mut w, self)?;
        std::io::Write::flush(&mut w).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_reader(std::io::BufReader::new(file))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::data(format!(
                "{}: unsupported checkpoint format {} v{}",
                path.display(),
                ck.format,
                ck.version
            )));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let cfg = LstmBaselineConfig {
            hidden_dim: 3,
            ..LstmBaselineConfig::new(5, 4)
        };
        let model = LstmBaseline::new(cfg.clone()).unwrap();
        let params = model.init_params(11);
        let mut ck = Checkpoint::new(
            ModelConfig::Lstm(cfg),
            params,
            None,
            vec!["A".into()],
            vec!["f".into()],
        );
        // values that need all 17 significant digits
        ck.params.insert(
            "extra",
            Tensor::vector(vec![0.1 + 0.2, 1.0 / 3.0, -2.5e-300]),
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.kind(), ModelKind::Lstm);
    }

    #[test]
    fn linear_round_trip() {
        let lr = LinearRegression {
            weights: vec![1.0, -2.0, 0.5],
        };
        let ck = Checkpoint::from_linear(&lr, 1e-8, None, vec![], vec![]);
        assert_eq!(ck.linear().unwrap(), lr);
        assert!(ck.config.build().unwrap().is_none());
    }

    #[test]
    fn wrong_format_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.json");
        let lr = LinearRegression { weights: vec![0.0] };
        let mut ck = Checkpoint::from_linear(&lr, 0.0, None, vec![], vec![]);
        ck.format = "other".into();
        ck.save(&path).unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
