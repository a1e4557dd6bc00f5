use std::path::Path;

use serde::{Deserialize, Serialize};

use super::calendar::SeasonConfig;
use super::records::{DailyRecord, StationMeta, Variable};
use super::season::{assemble_season, filter_stations, StationSeason};
use super::split::{split_train_test, Split, DEFAULT_TEST_YEARS};
use crate::error::{Error, Result};
use crate::parallel;
use crate::tensor::Tensor;

pub const DATASET_FORMAT: &str = "swe-dataset";
pub const DATASET_VERSION: u32 = 1;

const N_STATIC_CONTINUOUS: usize = 4;
const N_DYNAMIC: usize = Variable::DYNAMIC.len();

/// Dynamic inputs of every station, day and season: `[n][m][S][7]`.
#[derive(Clone, Debug)]
pub struct AlphaCube {
    pub n: usize,
    pub m: usize,
    pub seasons: Vec<i32>,
    data: Vec<f64>,
}

impl AlphaCube {
    pub fn new(n: usize, m: usize, seasons: Vec<i32>, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * m * seasons.len() * N_DYNAMIC {
            return Err(Error::contract("alpha cube size mismatch"));
        }
        Ok(Self {
            n,
            m,
            seasons,
            data,
        })
    }

    pub fn get(&self, i: usize, j: usize, s: usize) -> &[f64] {
        let k = ((i * self.m + j) * self.seasons.len() + s) * N_DYNAMIC;
        &self.data[k..k + N_DYNAMIC]
    }
}

/// Mean of the dynamic inputs of station `i` on day `j` over the seasons
/// `h-w ..= h+w` that are present in the data.
pub fn compute_gamma(cube: &AlphaCube, i: usize, j: usize, h: i32, w: usize) -> Result<Vec<f64>> {
    if !cube.seasons.contains(&h) {
        return Err(Error::contract(format!("season {h} is not in the data")));
    }
    let w = w as i32;
    let mut sum = vec![0.0; N_DYNAMIC];
    let mut count = 0usize;
    for (s, &t) in cube.seasons.iter().enumerate() {
        if (h - w..=h + w).contains(&t) {
            for (acc, v) in sum.iter_mut().zip(cube.get(i, j, s)) {
                *acc += v;
            }
            count += 1;
        }
    }
    Ok(sum.into_iter().map(|v| v / count as f64).collect())
}

/// Number of `(location, season, day)` keys for a dataset of this shape.
pub fn key_count(n_stations: usize, n_seasons: usize, season_length: usize) -> usize {
    n_stations * n_seasons * season_length
}

/// Per-feature z-score parameters fitted on the training seasons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Divisor applied; 1.0 where the feature is only centred or untouched.
    pub std: Vec<f64>,
    /// `false` for one-hot columns, which are left as-is.
    pub continuous: Vec<bool>,
    /// Observed-label mean and standard deviation on the training seasons, mm.
    pub label_mean: f64,
    pub label_std: f64,
}

/// Features `[φ, α, γ]` for every `(station, day, season)`, with masks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeasonDataset {
    pub format: String,
    pub version: u32,
    pub stations: Vec<StationMeta>,
    pub seasons: Vec<i32>,
    pub season_length: usize,
    pub gamma_window: usize,
    pub land_cover_classes: Vec<u32>,
    pub feature_names: Vec<String>,
    /// `[n][m][S][F]`, row-major.
    features: Vec<f64>,
    /// `true` where the value was observed rather than filled.
    feature_mask: Vec<bool>,
    /// `[n][m][S]` SWE in mm; `0.0` where `label_mask` is `false`.
    labels: Vec<f64>,
    label_mask: Vec<bool>,
    pub norm: Option<NormStats>,
    pub split: Option<Split>,
}

impl SeasonDataset {
    /// Assembles features from per-season station series; `assembled[s]`
    /// holds the stations of `seasons[s]` in `stations` order.
    pub fn build(
        stations: Vec<StationMeta>,
        seasons: Vec<i32>,
        season_length: usize,
        assembled: &[Vec<StationSeason>],
        gamma_window: usize,
    ) -> Result<Self> {
        let (n, m, ns) = (stations.len(), season_length, seasons.len());
        if assembled.len() != ns || assembled.iter().any(|a| a.len() != n) {
            return Err(Error::contract(
                "assembled seasons do not match stations × seasons",
            ));
        }
        let mut land_cover_classes: Vec<u32> = stations.iter().map(|s| s.land_cover).collect();
        land_cover_classes.sort_unstable();
        land_cover_classes.dedup();

        let mut feature_names: Vec<String> = ["latitude", "longitude", "elevation_m", "southness"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        feature_names.extend(land_cover_classes.iter().map(|c| format!("land_cover_{c}")));
        feature_names.extend(Variable::DYNAMIC.iter().map(|v| v.name().to_string()));
        feature_names.extend(
            Variable::DYNAMIC
                .iter()
                .map(|v| format!("gamma_{}", v.name())),
        );
        let f = feature_names.len();

        let mut alpha = Vec::with_capacity(n * m * ns * N_DYNAMIC);
        let mut alpha_obs = Vec::with_capacity(n * m * ns * N_DYNAMIC);
        for i in 0..n {
            for j in 0..m {
                for season in assembled {
                    let st = &season[i];
                    if st.station_id != stations[i].station_id || st.dynamic.len() != m {
                        return Err(Error::contract(
                            "assembled station order or length mismatch",
                        ));
                    }
                    alpha.extend_from_slice(&st.dynamic[j]);
                    alpha_obs.extend_from_slice(&st.observed[j]);
                }
            }
        }
        let cube = AlphaCube::new(n, m, seasons.clone(), alpha)?;

        let mut features = Vec::with_capacity(n * m * ns * f);
        let mut feature_mask = Vec::with_capacity(n * m * ns * f);
        let mut labels = Vec::with_capacity(n * m * ns);
        let mut label_mask = Vec::with_capacity(n * m * ns);
        for (i, st) in stations.iter().enumerate() {
            for j in 0..m {
                for (s, &h) in seasons.iter().enumerate() {
                    features.extend_from_slice(&[
                        st.latitude,
                        st.longitude,
                        st.elevation,
                        st.southness,
                    ]);
                    features.extend(land_cover_classes.iter().map(|&c| {
                        if c == st.land_cover {
                            1.0
                        } else {
                            0.0
                        }
                    }));
                    features.extend_from_slice(cube.get(i, j, s));
                    features.extend(compute_gamma(&cube, i, j, h, gamma_window)?);

                    let k = ((i * m + j) * ns + s) * N_DYNAMIC;
                    feature_mask.extend(std::iter::repeat_n(
                        true,
                        N_STATIC_CONTINUOUS + land_cover_classes.len(),
                    ));
                    feature_mask.extend_from_slice(&alpha_obs[k..k + N_DYNAMIC]);
                    feature_mask.extend(std::iter::repeat_n(true, N_DYNAMIC));

                    let label = assembled[s][i].swe[j];
                    labels.push(label.unwrap_or(0.0));
                    label_mask.push(label.is_some());
                }
            }
        }
        Ok(Self {
            format: DATASET_FORMAT.to_string(),
            version: DATASET_VERSION,
            stations,
            seasons,
            season_length,
            gamma_window,
            land_cover_classes,
            feature_names,
            features,
            feature_mask,
            labels,
            label_mask,
            norm: None,
            split: None,
        })
    }

    pub fn n_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn n_seasons(&self) -> usize {
        self.seasons.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Number of `(location, season, day)` keys.
    pub fn n_keys(&self) -> usize {
        key_count(self.n_stations(), self.n_seasons(), self.season_length)
    }

    pub fn season_index(&self, h: i32) -> Result<usize> {
        self.seasons
            .iter()
            .position(|&s| s == h)
            .ok_or_else(|| Error::data(format!("season {h} is not in the dataset")))
    }

    pub fn station_index(&self, id: &str) -> Option<usize> {
        self.stations.iter().position(|s| s.station_id == id)
    }

    fn key(&self, i: usize, j: usize, s: usize) -> usize {
        (i * self.season_length + j) * self.n_seasons() + s
    }

    /// Feature vector of station `i`, day index `j` (0-based), season index `s`.
    pub fn features(&self, i: usize, j: usize, s: usize) -> &[f64] {
        let f = self.feature_dim();
        let k = self.key(i, j, s) * f;
        &self.features[k..k + f]
    }

    pub fn feature_observed(&self, i: usize, j: usize, s: usize) -> &[bool] {
        let f = self.feature_dim();
        let k = self.key(i, j, s) * f;
        &self.feature_mask[k..k + f]
    }

    pub fn label(&self, i: usize, j: usize, s: usize) -> Option<f64> {
        let k = self.key(i, j, s);
        self.label_mask[k].then_some(self.labels[k])
    }

    /// All stations on day `j` of season `s`: `([n×F], labels, mask)`.
    pub fn spatial_example(&self, s: usize, j: usize) -> (Tensor, Vec<f64>, Vec<bool>) {
        let n = self.n_stations();
        let mut x = Vec::with_capacity(n * self.feature_dim());
        let mut y = Vec::with_capacity(n);
        let mut mask = Vec::with_capacity(n);
        for i in 0..n {
            x.extend_from_slice(self.features(i, j, s));
            let k = self.key(i, j, s);
            y.push(self.labels[k]);
            mask.push(self.label_mask[k]);
        }
        let x = Tensor::new(vec![n, self.feature_dim()], x).expect("consistent layout");
        (x, y, mask)
    }

    /// All days of station `i` in season `s`: `([m×F], labels, mask)`.
    pub fn temporal_example(&self, i: usize, s: usize) -> (Tensor, Vec<f64>, Vec<bool>) {
        let m = self.season_length;
        let mut x = Vec::with_capacity(m * self.feature_dim());
        let mut y = Vec::with_capacity(m);
        let mut mask = Vec::with_capacity(m);
        for j in 0..m {
            x.extend_from_slice(self.features(i, j, s));
            let k = self.key(i, j, s);
            y.push(self.labels[k]);
            mask.push(self.label_mask[k]);
        }
        let x = Tensor::new(vec![m, self.feature_dim()], x).expect("consistent layout");
        (x, y, mask)
    }

    fn continuous_columns(&self) -> Vec<bool> {
        let k = self.land_cover_classes.len();
        (0..self.feature_dim())
            .map(|c| !(N_STATIC_CONTINUOUS..N_STATIC_CONTINUOUS + k).contains(&c))
            .collect()
    }

    /// Fits z-score statistics on `train_seasons` and applies them to every
    /// season. Columns with std below 1e-12 are only centred; one-hot
    /// columns and labels are left untouched.
    pub fn normalize(&mut self, train_seasons: &[i32]) -> Result<()> {
        if self.norm.is_some() {
            return Err(Error::contract("dataset is already normalised"));
        }
        if train_seasons.is_empty() {
            return Err(Error::contract(
                "normalisation needs at least one training season",
            ));
        }
        let train_idx = train_seasons
            .iter()
            .map(|&h| self.season_index(h))
            .collect::<Result<Vec<_>>>()?;
        let f = self.feature_dim();
        let continuous = self.continuous_columns();
        let (n, m) = (self.n_stations(), self.season_length);

        let mut sum = vec![0.0; f];
        let mut count = 0usize;
        let (mut lsum, mut lcount) = (0.0, 0usize);
        for i in 0..n {
            for j in 0..m {
                for &s in &train_idx {
                    for (acc, v) in sum.iter_mut().zip(self.features(i, j, s)) {
                        *acc += v;
                    }
                    count += 1;
                    if let Some(y) = self.label(i, j, s) {
                        lsum += y;
                        lcount += 1;
                    }
                }
            }
        }
        let mean: Vec<f64> = sum.iter().map(|v| v / count as f64).collect();
        let label_mean = if lcount > 0 {
            lsum / lcount as f64
        } else {
            0.0
        };
        let mut sq = vec![0.0; f];
        let mut lsq = 0.0;
        for i in 0..n {
            for j in 0..m {
                for &s in &train_idx {
                    for ((acc, v), mu) in sq.iter_mut().zip(self.features(i, j, s)).zip(&mean) {
                        *acc += (v - mu) * (v - mu);
                    }
                    if let Some(y) = self.label(i, j, s) {
                        lsq += (y - label_mean) * (y - label_mean);
                    }
                }
            }
        }
        let mut std = Vec::with_capacity(f);
        let mut center = Vec::with_capacity(f);
        for c in 0..f {
            let sd = (sq[c] / count as f64).sqrt();
            if !continuous[c] {
                center.push(0.0);
                std.push(1.0);
            } else {
                center.push(mean[c]);
                std.push(if sd < 1e-12 { 1.0 } else { sd });
            }
        }
        for row in self.features.chunks_mut(f) {
            for ((v, mu), sd) in row.iter_mut().zip(&center).zip(&std) {
                *v = (*v - mu) / sd;
            }
        }
        let label_std = if lcount > 0 {
            (lsq / lcount as f64).sqrt()
        } else {
            1.0
        };
        self.norm = Some(NormStats {
            mean: center,
            std,
            continuous,
            label_mean,
            label_std: if label_std < 1e-12 { 1.0 } else { label_std },
        });
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        serde_json::to_writer(&mut w, self)?;
        std::io::Write::flush(&mut w).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let ds: SeasonDataset = serde_json::from_reader(std::io::BufReader::new(file))?;
        if ds.format != DATASET_FORMAT || ds.version != DATASET_VERSION {
            return Err(Error::data(format!(
                "{}: unsupported dataset format {} v{}",
                path.display(),
                ds.format,
                ds.version
            )));
        }
        let keys = ds.n_keys();
        if ds.labels.len() != keys
            || ds.label_mask.len() != keys
            || ds.features.len() != keys * ds.feature_dim()
            || ds.feature_mask.len() != ds.features.len()
        {
            return Err(Error::data(format!(
                "{}: inconsistent array sizes",
                path.display()
            )));
        }
        Ok(ds)
    }
}

/// Fits normalisation on `train_seasons` and returns the dataset.
pub fn normalize_features(
    mut dataset: SeasonDataset,
    train_seasons: &[i32],
) -> Result<SeasonDataset> {
    dataset.normalize(train_seasons)?;
    Ok(dataset)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepareConfig {
    pub season: SeasonConfig,
    pub missing_threshold: f64,
    pub gamma_window: usize,
    pub test_years: Vec<i32>,
    /// Seasons to use; all seasons present in the records when `None`.
    pub seasons: Option<Vec<i32>>,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            season: SeasonConfig::default(),
            missing_threshold: 0.10,
            gamma_window: 1,
            test_years: DEFAULT_TEST_YEARS.to_vec(),
            seasons: None,
        }
    }
}

/// Filter, assemble, featurise, split and normalise.
pub fn prepare_dataset(
    stations: &[StationMeta],
    records: &[DailyRecord],
    cfg: &PrepareConfig,
) -> Result<SeasonDataset> {
    let seasons = match &cfg.seasons {
        Some(s) => s.clone(),
        None => {
            let mut s: Vec<i32> = records.iter().map(|r| r.season).collect();
            s.sort_unstable();
            s.dedup();
            s
        }
    };
    if seasons.is_empty() {
        return Err(Error::data("no seasons in the daily records"));
    }
    let kept = filter_stations(
        stations.iter().map(|s| s.station_id.as_str()),
        records,
        &seasons,
        &cfg.season,
        cfg.missing_threshold,
    );
    if kept.is_empty() {
        return Err(Error::data("no station passes the missing-value filter"));
    }
    let retained: Vec<StationMeta> = stations
        .iter()
        .filter(|s| kept.contains(&s.station_id))
        .cloned()
        .collect();
    let assembled = parallel::map(&seasons, |&h| {
        assemble_season(records, &kept, h, &cfg.season)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let split = split_train_test(&seasons, &cfg.test_years)?;
    let mut ds = SeasonDataset::build(
        retained,
        seasons,
        cfg.season.length,
        &assembled,
        cfg.gamma_window,
    )?;
    ds.normalize(&split.train)?;
    ds.split = Some(split);
    Ok(ds)
}
