//! `swe` command-line driver: synthetic data, preparation, training,
//! prediction, evaluation and gradient checks.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use swe_core::models::ModelKind;

pub use config::{ExperimentConfig, SynthSpec, SCHEMA_VERSION};

#[derive(Parser, Debug)]
#[command(
    name = "swe",
    version,
    about = "Snow water-equivalent attention models"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// JSON experiment config; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// spatial, temporal, ensemble, lstm or lr.
    #[arg(long, global = true, value_parser = parse_kind)]
    model: Option<ModelKind>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dataset cache, default `<out>/dataset.json`.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Comma-separated held-out seasons.
    #[arg(long, global = true, value_delimiter = ',')]
    test_years: Option<Vec<i32>>,
    #[arg(long, global = true)]
    gamma_window: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    /// Initial learning rate.
    #[arg(long, global = true)]
    lr: Option<f64>,
    /// Learning-rate multiplier applied every scheduler period; 1 keeps it
    /// constant.
    #[arg(long, global = true)]
    scheduler_factor: Option<f64>,
    /// d=512, 16 heads, 24 encoder layers.
    #[arg(long, global = true)]
    paper_config: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Station and daily CSVs to a dataset cache.
    Prepare {
        #[arg(long)]
        stations: Option<PathBuf>,
        #[arg(long)]
        daily: Option<PathBuf>,
        #[arg(long)]
        season_length: Option<usize>,
        #[arg(long)]
        missing_threshold: Option<f64>,
    },
    /// Generate fixture CSVs and their dataset cache.
    Synth {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        seasons: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        missing_rate: Option<f64>,
    },
    /// Train a model; `ensemble` trains spatial and temporal.
    Train,
    /// Predict the test seasons from saved checkpoints.
    Predict {
        /// Predict every season, not just the test split.
        #[arg(long)]
        all_seasons: bool,
    },
    /// Score saved predictions and write the report files.
    Evaluate,
    /// Print the summary table of a written report.
    Report,
    /// Finite-difference check of every op, layer and model.
    Gradcheck {
        /// Tiny dimensions (the only size offered).
        #[arg(long)]
        tiny: bool,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
    },
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: swe_core::Error| e.to_string())
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.model {
            cfg.model = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = &self.dataset {
            cfg.dataset = Some(v.clone());
        }
        if let Some(v) = &self.test_years {
            cfg.test_years = Some(v.clone());
        }
        if let Some(v) = self.gamma_window {
            cfg.gamma_window = v;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(v) = self.lr {
            cfg.train.lr0 = v;
        }
        if let Some(v) = self.scheduler_factor {
            cfg.train.scheduler_factor = v;
        }
        if self.paper_config {
            cfg.use_paper_head();
        }
        Ok(cfg)
    }
}

/// Runs one invocation; `argv[0]` is the program name. Returns the exit
/// code after printing any diagnostic as a single line on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let rendered = e.to_string();
            let line = rendered
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments");
            eprintln!("{line}");
            return 2;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut cfg = cli.common.resolve()?;
    match cli.command {
        Command::Prepare {
            stations,
            daily,
            season_length,
            missing_threshold,
        } => {
            if stations.is_some() {
                cfg.stations = stations;
            }
            if daily.is_some() {
                cfg.daily = daily;
            }
            if let Some(v) = season_length {
                cfg.season_length = v;
            }
            if let Some(v) = missing_threshold {
                cfg.missing_threshold = v;
            }
            commands::prepare(&cfg)
        }
        Command::Synth {
            n,
            m,
            seasons,
            noise,
            missing_rate,
        } => {
            let s = &mut cfg.synth;
            if let Some(v) = n {
                s.n_stations = v;
            }
            if let Some(v) = m {
                s.season_length = v;
            }
            if let Some(v) = seasons {
                s.n_seasons = v;
            }
            if let Some(v) = noise {
                s.noise = v;
            }
            if let Some(v) = missing_rate {
                s.missing_rate = v;
            }
            commands::synth(&cfg)
        }
        Command::Train => commands::train(&cfg),
        Command::Predict { all_seasons } => commands::predict(&cfg, all_seasons),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Report => commands::report(&cfg),
        Command::Gradcheck { tiny, eps } => commands::gradcheck(tiny, eps),
    }
}
