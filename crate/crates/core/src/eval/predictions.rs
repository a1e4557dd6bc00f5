use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::{ensemble_mean, ModelKind};

pub const PREDICTIONS_HEADER: [&str; 5] = ["model", "station_id", "season", "day", "swe_mm"];

/// Predicted SWE for every `(station, season, day)` of a set of seasons.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    pub model: ModelKind,
    pub station_ids: Vec<String>,
    pub seasons: Vec<i32>,
    pub season_length: usize,
    /// `[station][season][day]`.
    values: Vec<f64>,
}

impl Predictions {
    pub fn new(
        model: ModelKind,
        station_ids: Vec<String>,
        seasons: Vec<i32>,
        season_length: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != station_ids.len() * seasons.len() * season_length {
            return Err(Error::contract(
                "prediction count does not match stations × seasons × days",
            ));
        }
        Ok(Self {
            model,
            station_ids,
            seasons,
            season_length,
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Days of station `i` in season index `s`.
    pub fn series(&self, i: usize, s: usize) -> &[f64] {
        let m = self.season_length;
        let k = (i * self.seasons.len() + s) * m;
        &self.values[k..k + m]
    }

    pub fn get(&self, i: usize, s: usize, day_index: usize) -> f64 {
        self.series(i, s)[day_index]
    }

    fn same_keys(&self, other: &Predictions) -> bool {
        self.station_ids == other.station_ids
            && self.seasons == other.seasons
            && self.season_length == other.season_length
    }

    /// Elementwise mean of aligned spatial and temporal predictions.
    pub fn ensemble(spatial: &Predictions, temporal: &Predictions) -> Result<Predictions> {
        if !spatial.same_keys(temporal) {
            return Err(Error::data(
                "spatial and temporal predictions cover different keys",
            ));
        }
        let values = ensemble_mean(&spatial.values, &temporal.values)?;
        Predictions::new(
            ModelKind::Ensemble,
            spatial.station_ids.clone(),
            spatial.seasons.clone(),
            spatial.season_length,
            values,
        )
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(PREDICTIONS_HEADER)?;
        for (i, id) in self.station_ids.iter().enumerate() {
            for (s, season) in self.seasons.iter().enumerate() {
                for (j, v) in self.series(i, s).iter().enumerate() {
                    w.write_record([
                        self.model.as_str(),
                        id,
                        &season.to_string(),
                        &(j + 1).to_string(),
                        &v.to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a predictions CSV covering every key of a single model.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::data(format!("{}: {other:?}", path.display())),
        })?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != PREDICTIONS_HEADER {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                msg: format!("expected header {}", PREDICTIONS_HEADER.join(",")),
            });
        }
        let mut model = None;
        let mut stations: Vec<String> = Vec::new();
        let mut seasons = BTreeSet::new();
        let mut max_day = 0usize;
        let mut rows: HashMap<(String, i32, usize), f64> = HashMap::new();
        for (k, rec) in r.records().enumerate() {
            let line = k as u64 + 2;
            let rec = rec?;
            let parse_err = |msg: String| Error::Parse {
                path: path.into(),
                line,
                msg,
            };
            if rec.len() != 5 {
                return Err(parse_err(format!("expected 5 fields, got {}", rec.len())));
            }
            let kind: ModelKind = rec[0]
                .parse()
                .map_err(|e: Error| parse_err(e.to_string()))?;
            if *model.get_or_insert(kind) != kind {
                return Err(parse_err("file mixes several models".into()));
            }
            let season: i32 = rec[2]
                .parse()
                .map_err(|_| parse_err(format!("bad season `{}`", &rec[2])))?;
            let day: usize = rec[3]
                .parse()
                .map_err(|_| parse_err(format!("bad day `{}`", &rec[3])))?;
            let v: f64 = rec[4]
                .parse()
                .map_err(|_| parse_err(format!("bad swe_mm `{}`", &rec[4])))?;
            if day == 0 {
                return Err(parse_err("day index starts at 1".into()));
            }
            let id = rec[1].to_string();
            if !stations.contains(&id) {
                stations.push(id.clone());
            }
            seasons.insert(season);
            max_day = max_day.max(day);
            if rows.insert((id, season, day), v).is_some() {
                return Err(parse_err("duplicate prediction key".into()));
            }
        }
        let model =
            model.ok_or_else(|| Error::data(format!("{}: no predictions", path.display())))?;
        let seasons: Vec<i32> = seasons.into_iter().collect();
        let mut values = Vec::with_capacity(stations.len() * seasons.len() * max_day);
        let mut missing = Vec::new();
        for id in &stations {
            for &h in &seasons {
                for day in 1..=max_day {
                    match rows.get(&(id.clone(), h, day)) {
                        Some(&v) => values.push(v),
                        None => {
                            missing.push(format!("({id}, {h}, {day})"));
                            values.push(f64::NAN);
                        }
                    }
                }
            }
        }
        if !missing.is_empty() {
            let shown: Vec<_> = missing.iter().take(5).cloned().collect();
            return Err(Error::data(format!(
                "{}: {} missing prediction keys, e.g. {}",
                path.display(),
                missing.len(),
                shown.join(" ")
            )));
        }
        Predictions::new(model, stations, seasons, max_day, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(model: ModelKind, offset: f64) -> Predictions {
        let values = (0..12).map(|k| k as f64 * 0.1 + offset).collect();
        Predictions::new(
            model,
            vec!["A".into(), "B".into()],
            vec![2010, 2011],
            3,
            values,
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let p = sample(ModelKind::Spatial, 1.0 / 3.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        p.write_csv(&path).unwrap();
        assert_eq!(Predictions::read_csv(&path).unwrap(), p);
    }

    #[test]
    fn gaps_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(
            &path,
            "model,station_id,season,day,swe_mm\nlr,A,2010,1,1\nlr,A,2010,3,1\n",
        )
        .unwrap();
        let err = Predictions::read_csv(&path).unwrap_err().to_string();
        assert!(err.contains("(A, 2010, 2)"), "{err}");
    }

    #[test]
    fn ensemble_is_the_mean() {
        let a = sample(ModelKind::Spatial, 0.0);
        let b = sample(ModelKind::Temporal, 2.0);
        let e = Predictions::ensemble(&a, &b).unwrap();
        for k in 0..12 {
            assert_eq!(e.values()[k], 0.5 * (a.values()[k] + b.values()[k]));
        }
        let mut c = sample(ModelKind::Temporal, 0.0);
        c.seasons = vec![2010, 2012];
        assert!(Predictions::ensemble(&a, &c).is_err());
    }
}
