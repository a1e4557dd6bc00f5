use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use swe_core::data::{PrepareConfig, SeasonConfig, SyntheticConfig, DEFAULT_TEST_YEARS};
use swe_core::models::{HeadConfig, ModelKind};
use swe_core::training::{ModelSpec, TrainConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Shape of the generated fixture data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_stations: usize,
    pub season_length: usize,
    pub n_seasons: usize,
    pub first_season: i32,
    pub noise: f64,
    pub missing_rate: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_stations: 8,
            season_length: 30,
            n_seasons: 4,
            first_season: 2002,
            noise: 5.0,
            missing_rate: 0.0,
        }
    }
}

/// Everything a subcommand needs. Built from defaults, then the `--config`
/// file, then flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub model: ModelKind,
    pub out: PathBuf,
    /// Dataset cache; `<out>/dataset.json` when unset.
    pub dataset: Option<PathBuf>,
    pub stations: Option<PathBuf>,
    pub daily: Option<PathBuf>,
    /// Unset means the default held-out years for real data and the last
    /// season for synthetic data.
    pub test_years: Option<Vec<i32>>,
    pub gamma_window: usize,
    pub season_length: usize,
    pub missing_threshold: f64,
    pub synth: SynthSpec,
    pub model_spec: ModelSpec,
    /// Batch size 0 picks the per-model default.
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            model: ModelKind::Ensemble,
            out: PathBuf::from("out"),
            dataset: None,
            stations: None,
            daily: None,
            test_years: None,
            gamma_window: 1,
            season_length: SeasonConfig::default().length,
            missing_threshold: 0.10,
            synth: SynthSpec::default(),
            model_spec: ModelSpec::desk(),
            train: TrainConfig {
                batch_size: 0,
                ..TrainConfig::default()
            },
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => bail!("{}: unsupported schema_version {v}", path.display()),
            None => bail!("{}: missing schema_version", path.display()),
        }
        serde_json::from_value(value).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.dataset
            .clone()
            .unwrap_or_else(|| self.out.join("dataset.json"))
    }

    pub fn use_paper_head(&mut self) {
        self.model_spec.head = HeadConfig::paper();
    }

    pub fn synthetic(&self) -> SyntheticConfig {
        let s = &self.synth;
        SyntheticConfig {
            first_season: s.first_season,
            noise: s.noise,
            missing_rate: s.missing_rate,
            ..SyntheticConfig::new(s.n_stations, s.season_length, s.n_seasons, self.seed)
        }
    }

    pub fn prepare(&self, synthetic: bool) -> PrepareConfig {
        let season_length = if synthetic {
            self.synth.season_length
        } else {
            self.season_length
        };
        let test_years = match &self.test_years {
            Some(t) => t.clone(),
            None if synthetic => {
                vec![self.synth.first_season + self.synth.n_seasons as i32 - 1]
            }
            None => DEFAULT_TEST_YEARS.to_vec(),
        };
        PrepareConfig {
            season: SeasonConfig::new(season_length),
            missing_threshold: self.missing_threshold,
            gamma_window: self.gamma_window,
            test_years,
            seasons: None,
        }
    }

    /// Training settings for one model kind, seeded from the run seed.
    pub fn train_config(&self, kind: ModelKind) -> TrainConfig {
        let mut cfg = self.train.clone();
        cfg.seed = self.seed;
        if cfg.batch_size == 0 {
            cfg.batch_size = TrainConfig::for_spatial(kind.is_spatial()).batch_size;
        }
        cfg
    }

    /// Writes the effective config next to the outputs of `command`.
    pub fn echo(&self, command: &str) -> Result<()> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(format!("{command}.config.json"));
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(
            &path,
            r#"{"schema_version": 1, "seed": 9, "synth": {"noise": 0.5}}"#,
        )
        .unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.synth.noise, 0.5);
        assert_eq!(cfg.synth.n_stations, 8);
        assert_eq!(cfg.gamma_window, 1);
    }

    #[test]
    fn schema_version_required() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 1}"#).unwrap();
        assert!(ExperimentConfig::load(&path).is_err());
        std::fs::write(&path, r#"{"schema_version": 2}"#).unwrap();
        assert!(ExperimentConfig::load(&path).is_err());
        std::fs::write(&path, r#"{"schema_version": 1, "sede": 1}"#).unwrap();
        assert!(ExperimentConfig::load(&path).is_err());
    }

    #[test]
    fn synthetic_test_year_defaults_to_last_season() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.prepare(true).test_years, vec![2005]);
        assert_eq!(cfg.prepare(false).test_years, DEFAULT_TEST_YEARS.to_vec());
    }

    #[test]
    fn batch_size_defaults_per_model() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.train_config(ModelKind::Spatial).batch_size, 16);
        assert_eq!(cfg.train_config(ModelKind::Temporal).batch_size, 32);
    }
}
