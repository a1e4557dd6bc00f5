use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{
    bin_nse, elevation_group_medians, evaluate_locations, relative_model_performance, rmp_grid,
    ElevationGroup, LocationScore, NseHistogram, RmpCurve, NSE_BIN_LABELS,
};
use super::predictions::Predictions;
use crate::data::SeasonDataset;
use crate::error::{Error, Result};
use crate::models::ModelKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelScores {
    pub model: ModelKind,
    pub scores: Vec<LocationScore>,
    pub histogram: NseHistogram,
    pub median_nse: Option<f64>,
}

impl ModelScores {
    pub fn nse(&self) -> Vec<Option<f64>> {
        self.scores.iter().map(|s| s.nse).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seasons: Vec<i32>,
    pub models: Vec<ModelScores>,
    pub rmp_grid: Vec<f64>,
    pub rmp: Vec<RmpCurve>,
    /// Absent with fewer than four locations.
    pub elevation_groups: Option<Vec<ElevationGroup>>,
}

/// Scores every prediction set against `ds`; all sets must cover the same
/// seasons.
pub fn build_report(preds: &[Predictions], ds: &SeasonDataset) -> Result<EvalReport> {
    let first = preds
        .first()
        .ok_or_else(|| Error::data("no predictions to evaluate"))?;
    if preds.iter().any(|p| p.seasons != first.seasons) {
        return Err(Error::data("prediction sets cover different seasons"));
    }
    let mut models = Vec::with_capacity(preds.len());
    for p in preds {
        if models.iter().any(|m: &ModelScores| m.model == p.model) {
            return Err(Error::data(format!("model {} given twice", p.model)));
        }
        let scores = evaluate_locations(p, ds)?;
        let nse: Vec<Option<f64>> = scores.iter().map(|s| s.nse).collect();
        let mut defined: Vec<f64> = nse.iter().flatten().copied().collect();
        defined.sort_by(f64::total_cmp);
        let median_nse = (!defined.is_empty()).then(|| {
            let k = defined.len();
            if k % 2 == 1 {
                defined[k / 2]
            } else {
                0.5 * (defined[k / 2 - 1] + defined[k / 2])
            }
        });
        models.push(ModelScores {
            model: p.model,
            histogram: bin_nse(&nse),
            scores,
            median_nse,
        });
    }
    let per_model: Vec<(ModelKind, Vec<Option<f64>>)> =
        models.iter().map(|m| (m.model, m.nse())).collect();
    let rmp = relative_model_performance(&per_model)?;
    let locations: Vec<(String, f64)> = ds
        .stations
        .iter()
        .map(|s| (s.station_id.clone(), s.elevation))
        .collect();
    let elevation_groups = if locations.len() >= 4 {
        Some(elevation_group_medians(&locations, &per_model)?)
    } else {
        None
    };
    Ok(EvalReport {
        seasons: first.seasons.clone(),
        models,
        rmp_grid: rmp_grid(),
        rmp,
        elevation_groups,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

impl EvalReport {
    /// Writes `location_scores.csv`, `annual_max_error.csv`, `rmp_curves.csv`,
    /// `summary.json` and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        let path = dir.join("location_scores.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "model",
            "station_id",
            "nse",
            "mean_daily_err_mm",
            "elevation_m",
        ])?;
        for m in &self.models {
            for s in &m.scores {
                w.write_record([
                    m.model.as_str(),
                    &s.station_id,
                    &fmt_opt(s.nse),
                    &s.mean_daily_error.to_string(),
                    &s.elevation.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("annual_max_error.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["model", "station_id", "season", "annual_max_err_mm"])?;
        for m in &self.models {
            for s in &m.scores {
                for (h, e) in &s.annual_max_error {
                    w.write_record([
                        m.model.as_str(),
                        &s.station_id,
                        &h.to_string(),
                        &e.to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("rmp_curves.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["model", "rmp", "fraction"])?;
        for c in &self.rmp {
            for (x, f) in self.rmp_grid.iter().zip(&c.fractions) {
                w.write_record([c.model.as_str(), &x.to_string(), &f.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("summary.json");
        let text = serde_json::to_string_pretty(&self.summary())?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;

        let path = dir.join("report.json");
        let text = serde_json::to_string(self)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Reads the `report.json` written by [`EvalReport::write`].
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("report.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn summary(&self) -> serde_json::Value {
        let models: Vec<serde_json::Value> = self
            .models
            .iter()
            .map(|m| {
                serde_json::json!({
                    "model": m.model,
                    "locations": m.scores.len(),
                    "median_nse": m.median_nse,
                    "fraction_nse_above_0.5": m.histogram.fraction_above_half,
                    "undefined_nse": m.histogram.undefined,
                    "bins": NSE_BIN_LABELS.iter().zip(m.histogram.counts.iter().zip(&m.histogram.fractions))
                        .map(|(l, (c, f))| serde_json::json!({"bin": l, "count": c, "fraction": f}))
                        .collect::<Vec<_>>(),
                })
            })
            .collect();
        let samples = [0usize, 10, 25, 50, 100, 200];
        let rmp: Vec<serde_json::Value> = self
            .rmp
            .iter()
            .map(|c| {
                serde_json::json!({
                    "model": c.model,
                    "samples": samples.iter().map(|&k| serde_json::json!({"rmp": self.rmp_grid[k], "fraction": c.fractions[k]})).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({
            "seasons": self.seasons,
            "models": models,
            "elevation_groups": self.elevation_groups,
            "rmp": rmp,
        })
    }

    /// Plain-text summary table.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seasons: {:?}", self.seasons);
        let _ = writeln!(
            out,
            "{:<10} {:>6} {:>10} {:>8} {:>8} {:>10} {:>10} {:>10} {:>10}",
            "model", "n", "median", ">0.5", "<0", "[0,.25)", "[.25,.5)", "[.5,.75)", "[.75,1]"
        );
        for m in &self.models {
            let h = &m.histogram;
            let _ = writeln!(
                out,
                "{:<10} {:>6} {:>10} {:>8.3} {:>8.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3}",
                m.model.as_str(),
                m.scores.len(),
                m.median_nse.map_or("-".to_string(), |v| format!("{v:.4}")),
                h.fraction_above_half,
                h.fractions[0],
                h.fractions[1],
                h.fractions[2],
                h.fractions[3],
                h.fractions[4],
            );
        }
        if let Some(groups) = &self.elevation_groups {
            let _ = writeln!(out, "\nmedian NSE by elevation quartile");
            for (q, g) in groups.iter().enumerate() {
                let cells: Vec<String> = g
                    .medians
                    .iter()
                    .map(|(k, v)| {
                        format!("{}={}", k, v.map_or("-".to_string(), |v| format!("{v:.4}")))
                    })
                    .collect();
                let _ = writeln!(
                    out,
                    "Q{} [{:.0}-{:.0} m] {}  best: {}",
                    q + 1,
                    g.min_elevation,
                    g.max_elevation,
                    cells.join(" "),
                    g.best.map_or("-", |k| k.as_str())
                );
            }
        }
        out
    }
}
