use serde::{Deserialize, Serialize};

use super::predictions::Predictions;
use crate::data::SeasonDataset;
use crate::error::{Error, Result};
use crate::models::ModelKind;
use crate::parallel;

/// Nash-Sutcliffe efficiency, `1 − Σ(a−p)² / Σ(a−ā)²`. `None` when every
/// actual value is equal and the ratio is undefined.
pub fn nse(actual: &[f64], predicted: &[f64]) -> Result<Option<f64>> {
    if actual.len() != predicted.len() {
        return Err(Error::Shape {
            op: "nse",
            lhs: vec![actual.len()],
            rhs: vec![predicted.len()],
        });
    }
    if actual.len() < 2 {
        return Err(Error::contract("nse needs at least two values"));
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, p) in actual.iter().zip(predicted) {
        num += (a - p) * (a - p);
        den += (a - mean) * (a - mean);
    }
    Ok((den > 0.0).then(|| 1.0 - num / den))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationScore {
    pub station_id: String,
    pub elevation: f64,
    pub nse: Option<f64>,
    /// Mean of `predicted − observed` over labelled days, mm.
    pub mean_daily_error: f64,
    /// `(season, max predicted − max observed)`, mm.
    pub annual_max_error: Vec<(i32, f64)>,
}

/// Scores each station over the labelled days of the prediction seasons.
pub fn evaluate_locations(pred: &Predictions, ds: &SeasonDataset) -> Result<Vec<LocationScore>> {
    let ids: Vec<&str> = ds.stations.iter().map(|s| s.station_id.as_str()).collect();
    if pred
        .station_ids
        .iter()
        .map(String::as_str)
        .ne(ids.iter().copied())
    {
        let missing: Vec<&str> = ids
            .iter()
            .copied()
            .filter(|id| !pred.station_ids.iter().any(|p| p == id))
            .collect();
        return Err(Error::data(format!(
            "predictions do not cover the dataset stations in order; missing {missing:?}"
        )));
    }
    if pred.season_length != ds.season_length {
        return Err(Error::data(format!(
            "predictions cover {} days per season, dataset has {}",
            pred.season_length, ds.season_length
        )));
    }
    let season_idx = pred
        .seasons
        .iter()
        .map(|&h| ds.season_index(h))
        .collect::<Result<Vec<_>>>()?;
    let stations: Vec<usize> = (0..ds.n_stations()).collect();
    parallel::map(&stations, |&i| {
        let mut actual = Vec::new();
        let mut predicted = Vec::new();
        let mut annual = Vec::new();
        for (a, (&s, &h)) in season_idx.iter().zip(&pred.seasons).enumerate() {
            let series = pred.series(i, a);
            let mut obs_max: Option<f64> = None;
            for (j, &p) in series.iter().enumerate() {
                if let Some(y) = ds.label(i, j, s) {
                    actual.push(y);
                    predicted.push(p);
                    obs_max = Some(obs_max.map_or(y, |m| m.max(y)));
                }
            }
            if let Some(o) = obs_max {
                let pmax = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                annual.push((h, pmax - o));
            }
        }
        let st = &ds.stations[i];
        let nse = if actual.len() >= 2 {
            nse(&actual, &predicted)?
        } else {
            None
        };
        let mean_daily_error = if actual.is_empty() {
            0.0
        } else {
            predicted
                .iter()
                .zip(&actual)
                .map(|(p, a)| p - a)
                .sum::<f64>()
                / actual.len() as f64
        };
        Ok(LocationScore {
            station_id: st.station_id.clone(),
            elevation: st.elevation,
            nse,
            mean_daily_error,
            annual_max_error: annual,
        })
    })
    .into_iter()
    .collect()
}

pub const NSE_BIN_LABELS: [&str; 5] = ["<0", "[0,0.25)", "[0.25,0.5)", "[0.5,0.75)", "[0.75,1]"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NseHistogram {
    pub counts: [usize; 5],
    /// Fractions of the defined scores.
    pub fractions: [f64; 5],
    pub undefined: usize,
    pub fraction_above_half: f64,
}

pub fn bin_nse(scores: &[Option<f64>]) -> NseHistogram {
    let mut counts = [0usize; 5];
    let mut undefined = 0;
    let mut above = 0;
    for s in scores {
        match s {
            None => undefined += 1,
            Some(v) => {
                let b = if *v < 0.0 {
                    0
                } else if *v < 0.25 {
                    1
                } else if *v < 0.5 {
                    2
                } else if *v < 0.75 {
                    3
                } else {
                    4
                };
                counts[b] += 1;
                if *v > 0.5 {
                    above += 1;
                }
            }
        }
    }
    let defined = scores.len() - undefined;
    let frac = |c: usize| {
        if defined == 0 {
            0.0
        } else {
            c as f64 / defined as f64
        }
    };
    NseHistogram {
        counts,
        fractions: counts.map(frac),
        undefined,
        fraction_above_half: frac(above),
    }
}

pub const RMP_STEP: f64 = 0.01;
pub const RMP_MAX: f64 = 2.0;

/// `x_k = k / 100` for `k = 0..=200`.
pub fn rmp_grid() -> Vec<f64> {
    (0..=200).map(|k| k as f64 / 100.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmpCurve {
    pub model: ModelKind,
    /// Best NSE at the location minus this model's NSE; `None` if undefined.
    pub per_location: Vec<Option<f64>>,
    /// Fraction of locations with RMP ≤ `grid[k]`.
    pub fractions: Vec<f64>,
}

/// Relative model performance: distance of each model from the best model
/// at every location, and its cumulative distribution on [`rmp_grid`].
pub fn relative_model_performance(
    models: &[(ModelKind, Vec<Option<f64>>)],
) -> Result<Vec<RmpCurve>> {
    let n = models.first().map_or(0, |m| m.1.len());
    if models.iter().any(|m| m.1.len() != n) {
        return Err(Error::contract(
            "every model must be scored at every location",
        ));
    }
    let best: Vec<Option<f64>> = (0..n)
        .map(|i| {
            models
                .iter()
                .filter_map(|m| m.1[i])
                .fold(None, |b: Option<f64>, v| Some(b.map_or(v, |b| b.max(v))))
        })
        .collect();
    let grid = rmp_grid();
    Ok(models
        .iter()
        .map(|(kind, scores)| {
            let per_location: Vec<Option<f64>> = scores
                .iter()
                .zip(&best)
                .map(|(s, b)| s.zip(*b).map(|(s, b)| b - s))
                .collect();
            let defined: Vec<f64> = per_location.iter().flatten().copied().collect();
            let fractions = grid
                .iter()
                .map(|&x| {
                    if defined.is_empty() {
                        0.0
                    } else {
                        defined.iter().filter(|&&r| r <= x).count() as f64 / defined.len() as f64
                    }
                })
                .collect();
            RmpCurve {
                model: *kind,
                per_location,
                fractions,
            }
        })
        .collect())
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let k = values.len();
    Some(if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElevationGroup {
    pub min_elevation: f64,
    pub max_elevation: f64,
    pub n_locations: usize,
    /// Median NSE per model, in input model order.
    pub medians: Vec<(ModelKind, Option<f64>)>,
    pub best: Option<ModelKind>,
}

/// Splits locations into elevation quartiles and reports the median NSE of
/// each model per group. Locations are ranked by `(elevation, station_id)`
/// and rank `r` of `N` goes to group `floor(4r/N)`.
pub fn elevation_group_medians(
    locations: &[(String, f64)],
    models: &[(ModelKind, Vec<Option<f64>>)],
) -> Result<Vec<ElevationGroup>> {
    let n = locations.len();
    if n < 4 {
        return Err(Error::contract(format!(
            "elevation groups need at least 4 locations, got {n}"
        )));
    }
    if models.iter().any(|m| m.1.len() != n) {
        return Err(Error::contract(
            "every model must be scored at every location",
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        locations[a]
            .1
            .total_cmp(&locations[b].1)
            .then_with(|| locations[a].0.cmp(&locations[b].0))
    });
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); 4];
    for (r, &i) in order.iter().enumerate() {
        groups[4 * r / n].push(i);
    }
    Ok(groups
        .into_iter()
        .map(|members| {
            let medians: Vec<(ModelKind, Option<f64>)> = models
                .iter()
                .map(|(kind, scores)| {
                    let mut v: Vec<f64> = members.iter().filter_map(|&i| scores[i]).collect();
                    (*kind, median(&mut v))
                })
                .collect();
            let best = medians
                .iter()
                .filter_map(|(k, m)| m.map(|m| (*k, m)))
                .fold(None, |b: Option<(ModelKind, f64)>, (k, m)| match b {
                    Some((_, bm)) if bm >= m => b,
                    _ => Some((k, m)),
                })
                .map(|(k, _)| k);
            let elev: Vec<f64> = members.iter().map(|&i| locations[i].1).collect();
            ElevationGroup {
                min_elevation: elev.iter().copied().fold(f64::INFINITY, f64::min),
                max_elevation: elev.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                n_locations: members.len(),
                medians,
                best,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn nse_hand_cases() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(nse(&a, &a).unwrap(), Some(1.0));
        assert_eq!(nse(&a, &[2.0, 2.0, 2.0]).unwrap(), Some(0.0));
        assert_eq!(nse(&a, &[1.0, 1.0, 3.0]).unwrap(), Some(0.5));
        assert_eq!(nse(&[4.0, 4.0], &[1.0, 2.0]).unwrap(), None);
        assert!(nse(&[1.0], &[1.0]).is_err());
        assert!(nse(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn bins() {
        let h = bin_nse(&[Some(1.0), Some(1.0)]);
        assert_eq!(h.counts, [0, 0, 0, 0, 2]);
        let h = bin_nse(&[Some(-0.1), Some(0.6), Some(0.8), None]);
        assert_eq!(h.counts, [1, 0, 0, 1, 1]);
        assert_eq!(h.undefined, 1);
        assert!((h.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(bin_nse(&[Some(0.4), Some(0.6)]).fraction_above_half, 0.5);
    }

    #[test]
    fn rmp_cases() {
        let single =
            relative_model_performance(&[(ModelKind::Lr, vec![Some(0.3), Some(-2.0)])]).unwrap();
        assert_eq!(single[0].fractions[0], 1.0);
        let two = relative_model_performance(&[
            (ModelKind::Spatial, vec![Some(0.9)]),
            (ModelKind::Temporal, vec![Some(0.7)]),
        ])
        .unwrap();
        assert_eq!(two[0].per_location, vec![Some(0.0)]);
        assert!((two[1].per_location[0].unwrap() - 0.2).abs() < 1e-15);
        for c in &two {
            assert!(c.fractions.windows(2).all(|w| w[0] <= w[1]));
        }
        assert_eq!(two[1].fractions[19], 0.0);
        assert_eq!(two[1].fractions[21], 1.0);
    }

    #[test]
    fn elevation_groups_hand_case() {
        let locs: Vec<(String, f64)> = (0..8)
            .map(|k| (format!("S{k}"), 1000.0 + 100.0 * k as f64))
            .collect();
        let scores = vec![
            Some(0.1),
            Some(0.3),
            Some(0.5),
            Some(0.2),
            Some(0.9),
            Some(0.7),
            Some(0.0),
            None,
        ];
        let other = vec![Some(0.2); 8];
        let g = elevation_group_medians(
            &locs,
            &[(ModelKind::Spatial, scores), (ModelKind::Lr, other)],
        )
        .unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g[0].medians[0].1, Some(0.2));
        assert_eq!(g[1].medians[0].1, Some(0.35));
        assert_eq!(g[2].medians[0].1, Some(0.8));
        assert_eq!(g[3].medians[0].1, Some(0.0));
        assert_eq!(g[0].best, Some(ModelKind::Spatial));
        assert_eq!(g[3].best, Some(ModelKind::Lr));
        assert_eq!((g[0].min_elevation, g[0].max_elevation), (1000.0, 1100.0));
    }

    #[test]
    fn elevation_ties_broken_by_id() {
        let locs: Vec<(String, f64)> = ["D", "C", "B", "A"]
            .iter()
            .map(|s| (s.to_string(), 2000.0))
            .collect();
        let scores = vec![Some(4.0), Some(3.0), Some(2.0), Some(1.0)];
        let g = elevation_group_medians(&locs, &[(ModelKind::Lr, scores)]).unwrap();
        let medians: Vec<_> = g.iter().map(|x| x.medians[0].1.unwrap()).collect();
        assert_eq!(medians, vec![1.0, 2.0, 3.0, 4.0]);
        let same = elevation_group_medians(&locs, &[(ModelKind::Lr, vec![Some(0.5); 4])]).unwrap();
        assert!(same.iter().all(|x| x.medians[0].1 == Some(0.5)));
    }

    proptest! {
        #[test]
        fn nse_shift_invariant(
            pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40),
            c in -1000.0f64..1000.0,
        ) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let p: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let shifted_a: Vec<f64> = a.iter().map(|x| x + c).collect();
            let shifted_p: Vec<f64> = p.iter().map(|x| x + c).collect();
            if let (Some(x), Some(y)) = (nse(&a, &p).unwrap(), nse(&shifted_a, &shifted_p).unwrap()) {
                prop_assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn nse_decreases_when_moving_away(
            a in prop::collection::vec(-50.0f64..50.0, 3..30),
            k in 0usize..30,
            delta in 0.01f64..10.0,
        ) {
            let k = k % a.len();
            let mut p = a.clone();
            p[k] += 0.5;
            let mut q = p.clone();
            q[k] += delta;
            if let (Some(x), Some(y)) = (nse(&a, &p).unwrap(), nse(&a, &q).unwrap()) {
                prop_assert!(y < x);
            }
        }
    }
}
