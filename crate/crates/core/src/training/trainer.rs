use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::masked_sse;
use super::optim::{adamw_step, clip_global_norm, scheduler_lr, AdamState, TrainConfig};
use crate::data::SeasonDataset;
use crate::error::{Error, Result};
use crate::models::{
    HeadConfig, LinearRegression, LstmBaselineConfig, ModelConfig, ModelKind, NormalEquations,
    SequenceModel, SpatialModelConfig, TargetScale, TemporalModelConfig,
};
use crate::nn::{Dropout, ParamStore};
use crate::parallel::{self, Execution};
use crate::tensor::{Graph, Tensor};

/// Architecture choices that do not come from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub head: HeadConfig,
    pub lstm_hidden: usize,
    pub ridge: f64,
}

impl ModelSpec {
    /// Small attention head for desk-scale runs: d=32, 4 heads, 2 layers.
    pub fn desk() -> Self {
        Self {
            head: HeadConfig::new(32, 4, 2),
            lstm_hidden: 128,
            ridge: 1e-8,
        }
    }

    pub fn paper() -> Self {
        Self {
            head: HeadConfig::paper(),
            ..Self::desk()
        }
    }
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::desk()
    }
}

fn target_scale(ds: &SeasonDataset) -> TargetScale {
    ds.norm
        .as_ref()
        .map(|n| TargetScale {
            mean: n.label_mean,
            std: n.label_std,
        })
        .unwrap_or_default()
}

/// Model configuration sized to `ds`. The output scale is fixed to the
/// training-label mean and standard deviation.
pub fn model_config(kind: ModelKind, ds: &SeasonDataset, spec: &ModelSpec) -> Result<ModelConfig> {
    let f = ds.feature_dim();
    let target = target_scale(ds);
    Ok(match kind {
        ModelKind::Spatial => ModelConfig::Spatial(SpatialModelConfig {
            target,
            ..SpatialModelConfig::new(ds.n_stations(), f, spec.head.clone())
        }),
        ModelKind::Temporal => ModelConfig::Temporal(TemporalModelConfig {
            target,
            ..TemporalModelConfig::new(ds.season_length, f, spec.head.clone())
        }),
        ModelKind::Lstm => ModelConfig::Lstm(LstmBaselineConfig {
            hidden_dim: spec.lstm_hidden,
            target,
            ..LstmBaselineConfig::new(ds.season_length, f)
        }),
        ModelKind::Lr => ModelConfig::LinearRegression {
            feature_dim: f,
            ridge: spec.ridge,
        },
        ModelKind::Ensemble => {
            return Err(Error::config(
                "the ensemble is not trained; train spatial and temporal models and combine their predictions",
            ))
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Example {
    /// Day index `j` of season index `s`, all stations.
    Spatial { s: usize, j: usize },
    /// Station `i`, all days of season index `s`.
    Sequence { i: usize, s: usize },
}

impl Example {
    fn data(self, ds: &SeasonDataset) -> (Tensor, Vec<f64>, Vec<bool>) {
        match self {
            Example::Spatial { s, j } => ds.spatial_example(s, j),
            Example::Sequence { i, s } => ds.temporal_example(i, s),
        }
    }
}

fn examples(ds: &SeasonDataset, spatial: bool, seasons: &[usize]) -> Vec<Example> {
    let mut out = Vec::new();
    for &s in seasons {
        if spatial {
            for j in 0..ds.season_length {
                if (0..ds.n_stations()).any(|i| ds.label(i, j, s).is_some()) {
                    out.push(Example::Spatial { s, j });
                }
            }
        } else {
            for i in 0..ds.n_stations() {
                if (0..ds.season_length).any(|j| ds.label(i, j, s).is_some()) {
                    out.push(Example::Sequence { i, s });
                }
            }
        }
    }
    out
}

fn train_season_indices(ds: &SeasonDataset) -> Result<Vec<usize>> {
    if ds.norm.is_none() {
        return Err(Error::contract("training needs a normalised dataset"));
    }
    let split = ds
        .split
        .as_ref()
        .ok_or_else(|| Error::contract("training needs a dataset with a train/test split"))?;
    if split.train.is_empty() {
        return Err(Error::data("the training split is empty"));
    }
    split.train.iter().map(|&h| ds.season_index(h)).collect()
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    splitmix(splitmix(seed ^ splitmix(a)) ^ b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }

    /// `epoch,loss,lr`. Wall-clock time is left out so reruns match byte
    /// for byte.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("epoch,loss,lr\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.loss, e.lr));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParamStore,
    pub history: TrainHistory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Called after every epoch with the record and current parameters.
pub trait EpochObserver {
    fn on_epoch(&mut self, record: &EpochRecord, params: &ParamStore) -> Result<Control>;
}

impl<F: FnMut(&EpochRecord, &ParamStore) -> Result<Control>> EpochObserver for F {
    fn on_epoch(&mut self, record: &EpochRecord, params: &ParamStore) -> Result<Control> {
        self(record, params)
    }
}

/// Mini-batch AdamW on the pooled masked MSE of each batch.
pub fn train(
    model: &dyn SequenceModel,
    ds: &SeasonDataset,
    cfg: &TrainConfig,
    exec: Execution,
) -> Result<TrainOutcome> {
    train_observed(
        model,
        ds,
        cfg,
        exec,
        &mut |_: &EpochRecord, _: &ParamStore| Ok(Control::Continue),
    )
}

/// [`train`] with a per-epoch callback that may end training early.
pub fn train_observed(
    model: &dyn SequenceModel,
    ds: &SeasonDataset,
    cfg: &TrainConfig,
    exec: Execution,
    observer: &mut dyn EpochObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let seasons = train_season_indices(ds)?;
    if model.feature_dim() != ds.feature_dim() {
        return Err(Error::config(format!(
            "model expects {} features, dataset has {}",
            model.feature_dim(),
            ds.feature_dim()
        )));
    }
    let spatial = model.kind().is_spatial();
    let expected_len = if spatial {
        ds.n_stations()
    } else {
        ds.season_length
    };
    if model.seq_len() != expected_len {
        return Err(Error::config(format!(
            "model sequence length {} does not match the dataset ({expected_len})",
            model.seq_len()
        )));
    }
    let all = examples(ds, spatial, &seasons);
    if all.is_empty() {
        return Err(Error::data("no training example has an observed label"));
    }

    let mut params = model.init_params(cfg.seed);
    let mut state = AdamState::new(&params);
    let mut history = TrainHistory::default();
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let lr = scheduler_lr(epoch, cfg);
        let mut order: Vec<usize> = (0..all.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            cfg.seed,
            epoch as u64,
            0,
        )));

        let (mut epoch_sse, mut epoch_count) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let results =
                parallel::map_with(exec, batch, |&k| -> Result<(f64, usize, Vec<Tensor>)> {
                    let (x, y, mask) = all[k].data(ds);
                    let mut g = Graph::new();
                    let p = params.bind(&mut g);
                    let xv = g.constant(x);
                    let mut drop =
                        Dropout::train(derive_seed(cfg.seed, epoch as u64, k as u64 + 1));
                    let pred = model.forward(&mut g, &p, xv, &mut drop)?;
                    let (sse, count) = masked_sse(&mut g, pred, &y, &mask)?;
                    let value = g.value(sse).item()?;
                    let grads = g.backward(sse)?;
                    Ok((value, count, p.collect(&grads)))
                });
            let mut sse = 0.0;
            let mut count = 0usize;
            let mut grads: Option<Vec<Tensor>> = None;
            for r in results {
                let (v, c, gr) = r?;
                sse += v;
                count += c;
                match grads.as_mut() {
                    None => grads = Some(gr),
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&gr) {
                            a.data_mut()
                                .iter_mut()
                                .zip(b.data())
                                .for_each(|(x, y)| *x += y);
                        }
                    }
                }
            }
            let loss = sse / count as f64;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step,
                    value: loss,
                });
            }
            let mut grads = grads.expect("batches are non-empty");
            let inv = 1.0 / count as f64;
            for g in grads.iter_mut() {
                g.data_mut().iter_mut().for_each(|x| *x *= inv);
            }
            if let Some(c) = cfg.grad_clip {
                clip_global_norm(&mut grads, c);
            }
            adamw_step(&mut params, &grads, &mut state, cfg, lr)?;
            epoch_sse += sse;
            epoch_count += count;
            step += 1;
        }
        let record = EpochRecord {
            epoch,
            loss: epoch_sse / epoch_count as f64,
            lr,
            seconds: started.elapsed().as_secs_f64(),
        };
        let control = observer.on_epoch(&record, &params)?;
        history.epochs.push(record);
        if control == Control::Stop {
            break;
        }
    }
    Ok(TrainOutcome { params, history })
}

/// Ridge least squares over every labelled `(station, day, season)` of the
/// training split.
pub fn fit_linear(ds: &SeasonDataset, ridge: f64) -> Result<LinearRegression> {
    let seasons = train_season_indices(ds)?;
    let mut ne = NormalEquations::new(ds.feature_dim());
    for i in 0..ds.n_stations() {
        for j in 0..ds.season_length {
            for &s in &seasons {
                if let Some(y) = ds.label(i, j, s) {
                    ne.push(ds.features(i, j, s), y);
                }
            }
        }
    }
    ne.solve(ridge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, prepare_dataset, PrepareConfig, SyntheticConfig};

    fn tiny_dataset() -> SeasonDataset {
        let cfg = SyntheticConfig::new(4, 10, 3, 1);
        let (st, rec) = generate_synthetic(&cfg).unwrap();
        let prep = PrepareConfig {
            season: crate::data::SeasonConfig::new(10),
            test_years: vec![2004],
            ..PrepareConfig::default()
        };
        prepare_dataset(&st, &rec, &prep).unwrap()
    }

    fn tiny_spec() -> ModelSpec {
        let mut head = HeadConfig::new(8, 2, 1);
        head.encoder.ffn_hidden_dim = 16;
        ModelSpec {
            head,
            lstm_hidden: 4,
            ridge: 1e-8,
        }
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let ds = tiny_dataset();
        let cfg = model_config(ModelKind::Temporal, &ds, &tiny_spec()).unwrap();
        let model = cfg.build().unwrap().unwrap();
        let tc = TrainConfig {
            epochs: 0,
            seed: 5,
            ..TrainConfig::default()
        };
        let out = train(model.as_ref(), &ds, &tc, Execution::Parallel).unwrap();
        assert!(out.history.epochs.is_empty());
        assert_eq!(out.params, model.init_params(5));
    }

    #[test]
    fn lr_sequence_follows_scheduler_and_modes_agree() {
        let ds = tiny_dataset();
        let cfg = model_config(ModelKind::Lstm, &ds, &tiny_spec()).unwrap();
        let model = cfg.build().unwrap().unwrap();
        let tc = TrainConfig {
            epochs: 7,
            batch_size: 3,
            ..TrainConfig::default()
        };
        let a = train(model.as_ref(), &ds, &tc, Execution::Parallel).unwrap();
        let b = train(model.as_ref(), &ds, &tc, Execution::Sequential).unwrap();
        for (e, r) in a.history.epochs.iter().enumerate() {
            assert_eq!(r.lr, scheduler_lr(e, &tc));
        }
        assert_eq!(a.params, b.params);
        assert_eq!(a.history.losses(), b.history.losses());
    }

    #[test]
    fn ensemble_has_no_trainable_config() {
        let ds = tiny_dataset();
        assert!(model_config(ModelKind::Ensemble, &ds, &tiny_spec()).is_err());
    }

    #[test]
    fn unnormalised_dataset_is_refused() {
        let mut ds = tiny_dataset();
        ds.norm = None;
        assert!(fit_linear(&ds, 1e-8).is_err());
    }

    #[test]
    fn linear_fit_is_finite() {
        let ds = tiny_dataset();
        let lr = fit_linear(&ds, 1e-8).unwrap();
        assert_eq!(lr.weights.len(), ds.feature_dim() + 1);
        assert!(lr.weights.iter().all(|w| w.is_finite()));
    }
}
