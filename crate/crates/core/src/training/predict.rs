use crate::data::SeasonDataset;
use crate::error::{Error, Result};
use crate::eval::Predictions;
use crate::models::{Checkpoint, LinearRegression, ModelKind, SequenceModel};
use crate::nn::ParamStore;
use crate::parallel::{self, Execution};

/// Eval-mode predictions of `model` for every station and day of `seasons`.
pub fn predict_model(
    model: &dyn SequenceModel,
    params: &ParamStore,
    ds: &SeasonDataset,
    seasons: &[i32],
    exec: Execution,
) -> Result<Predictions> {
    let idx = seasons
        .iter()
        .map(|&h| ds.season_index(h))
        .collect::<Result<Vec<_>>>()?;
    let (n, m, ns) = (ds.n_stations(), ds.season_length, idx.len());
    let mut values = vec![0.0; n * ns * m];
    if model.kind().is_spatial() {
        let keys: Vec<(usize, usize)> = (0..ns).flat_map(|a| (0..m).map(move |j| (a, j))).collect();
        let outs = parallel::map_with(exec, &keys, |&(a, j)| {
            let (x, _, _) = ds.spatial_example(idx[a], j);
            model.predict(params, &x)
        });
        for (&(a, j), y) in keys.iter().zip(outs) {
            for (i, v) in y?.data().iter().enumerate() {
                values[(i * ns + a) * m + j] = *v;
            }
        }
    } else {
        let keys: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..ns).map(move |a| (i, a))).collect();
        let outs = parallel::map_with(exec, &keys, |&(i, a)| {
            let (x, _, _) = ds.temporal_example(i, idx[a]);
            model.predict(params, &x)
        });
        for (&(i, a), y) in keys.iter().zip(outs) {
            let k = (i * ns + a) * m;
            values[k..k + m].copy_from_slice(y?.data());
        }
    }
    Predictions::new(model.kind(), station_ids(ds), seasons.to_vec(), m, values)
}

fn station_ids(ds: &SeasonDataset) -> Vec<String> {
    ds.stations.iter().map(|s| s.station_id.clone()).collect()
}

pub fn predict_linear(
    lr: &LinearRegression,
    ds: &SeasonDataset,
    seasons: &[i32],
) -> Result<Predictions> {
    if lr.feature_dim() != ds.feature_dim() {
        return Err(Error::config(
            "linear model and dataset feature counts differ",
        ));
    }
    let mut values = Vec::with_capacity(ds.n_stations() * seasons.len() * ds.season_length);
    for i in 0..ds.n_stations() {
        for &h in seasons {
            let s = ds.season_index(h)?;
            for j in 0..ds.season_length {
                values.push(lr.predict_row(ds.features(i, j, s)));
            }
        }
    }
    Predictions::new(
        ModelKind::Lr,
        station_ids(ds),
        seasons.to_vec(),
        ds.season_length,
        values,
    )
}

/// Runs a checkpoint on `ds`, which must carry the same stations and
/// feature layout the checkpoint was trained with.
pub fn predict_checkpoint(
    ck: &Checkpoint,
    ds: &SeasonDataset,
    seasons: &[i32],
    exec: Execution,
) -> Result<Predictions> {
    if ck.feature_names != ds.feature_names {
        return Err(Error::data("checkpoint and dataset feature layouts differ"));
    }
    if ck.station_ids != station_ids(ds) {
        return Err(Error::data("checkpoint and dataset station lists differ"));
    }
    match ck.config.build()? {
        Some(model) => predict_model(model.as_ref(), &ck.params, ds, seasons, exec),
        None => predict_linear(&ck.linear()?, ds, seasons),
    }
}
