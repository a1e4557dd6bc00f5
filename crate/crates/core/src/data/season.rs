use std::collections::HashMap;

use super::calendar::SeasonConfig;
use super::records::{DailyRecord, Variable};
use crate::error::{Error, Result};

/// Keeps a station iff, for every variable and every season, its missing
/// fraction is at most `threshold`. Days without a row count as missing.
pub fn filter_stations<'a>(
    station_ids: impl IntoIterator<Item = &'a str>,
    records: &[DailyRecord],
    seasons: &[i32],
    season: &SeasonConfig,
    threshold: f64,
) -> Vec<String> {
    let mut observed: HashMap<(&str, i32), [usize; Variable::ALL.len()]> = HashMap::new();
    for r in records {
        let counts = observed
            .entry((r.station_id.as_str(), r.season))
            .or_default();
        for (c, v) in counts.iter_mut().zip(Variable::ALL) {
            if r.get(v).is_some() {
                *c += 1;
            }
        }
    }
    let m = season.length;
    station_ids
        .into_iter()
        .filter(|id| {
            seasons.iter().all(|&h| {
                let counts = observed.get(&(*id, h)).copied().unwrap_or_default();
                counts
                    .iter()
                    .all(|&c| (m.saturating_sub(c)) as f64 / m as f64 <= threshold)
            })
        })
        .map(str::to_string)
        .collect()
}

/// Fills interior gaps by linear interpolation and edge gaps with the
/// nearest observed value. Errors when nothing is observed.
pub fn fill_gaps(values: &[Option<f64>]) -> Result<Vec<f64>> {
    let known: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    let (Some(&first), Some(&last)) = (known.first(), known.last()) else {
        return Err(Error::data("series has no observed values"));
    };
    let mut out = vec![0.0; values.len()];
    for (i, o) in out.iter_mut().enumerate() {
        *o = match values[i] {
            Some(v) => v,
            None if i < first => values[first].unwrap(),
            None if i > last => values[last].unwrap(),
            None => {
                let lo = known[known.partition_point(|&k| k < i) - 1];
                let hi = known[known.partition_point(|&k| k < i)];
                let (a, b) = (values[lo].unwrap(), values[hi].unwrap());
                let t = (i - lo) as f64 / (hi - lo) as f64;
                a + t * (b - a)
            }
        };
    }
    Ok(out)
}

/// One station's season, day-indexed from 0.
#[derive(Clone, Debug, PartialEq)]
pub struct StationSeason {
    pub station_id: String,
    pub season: i32,
    /// SWE labels; gaps stay missing.
    pub swe: Vec<Option<f64>>,
    /// Gap-filled dynamic inputs, `[day][Variable::DYNAMIC]`.
    pub dynamic: Vec<[f64; 7]>,
    /// Which dynamic values were observed before filling.
    pub observed: Vec<[bool; 7]>,
}

/// Lays out `records` of season `h` for each station in `station_ids` and
/// fills the dynamic gaps.
pub fn assemble_season(
    records: &[DailyRecord],
    station_ids: &[String],
    h: i32,
    season: &SeasonConfig,
) -> Result<Vec<StationSeason>> {
    let m = season.length;
    let index: HashMap<&str, usize> = station_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut raw: Vec<Vec<[Option<f64>; 8]>> = vec![vec![[None; 8]; m]; station_ids.len()];
    for r in records.iter().filter(|r| r.season == h) {
        if let Some(&i) = index.get(r.station_id.as_str()) {
            if (1..=m).contains(&r.day) {
                for (slot, v) in raw[i][r.day - 1].iter_mut().zip(Variable::ALL) {
                    *slot = r.get(v);
                }
            }
        }
    }
    station_ids
        .iter()
        .zip(raw)
        .map(|(id, days)| {
            let mut dynamic = vec![[0.0; 7]; m];
            let mut observed = vec![[false; 7]; m];
            for (k, _) in Variable::DYNAMIC.iter().enumerate() {
                let series: Vec<Option<f64>> = days.iter().map(|d| d[k + 1]).collect();
                let filled = fill_gaps(&series).map_err(|_| {
                    Error::data(format!(
                        "station {id} has no {} values in season {h}",
                        Variable::DYNAMIC[k].name()
                    ))
                })?;
                for j in 0..m {
                    dynamic[j][k] = filled[j];
                    observed[j][k] = series[j].is_some();
                }
            }
            Ok(StationSeason {
                station_id: id.clone(),
                season: h,
                swe: days.iter().map(|d| d[0]).collect(),
                dynamic,
                observed,
            })
        })
        .collect()
}
