use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use swe_core::data::{
    generate_synthetic, load_station_data_with, prepare_dataset, write_daily, write_stations,
    SeasonDataset,
};
use swe_core::diagnostics::gradcheck_suite;
use swe_core::eval::{build_report, EvalReport, Predictions};
use swe_core::models::{Checkpoint, ModelKind};
use swe_core::parallel::Execution;
use swe_core::training::{fit_linear, model_config, predict_checkpoint, train_observed, Control};

use crate::config::ExperimentConfig;

const GRADCHECK_TOL: f64 = 1e-4;

fn checkpoint_path(cfg: &ExperimentConfig, kind: ModelKind) -> PathBuf {
    cfg.out.join(format!("{kind}.ckpt.json"))
}

fn predictions_path(cfg: &ExperimentConfig, kind: ModelKind) -> PathBuf {
    cfg.out.join(format!("{kind}.predictions.csv"))
}

fn report_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.join("report")
}

fn require(path: &Path, what: &str, hint: &str) -> Result<()> {
    if !path.exists() {
        bail!("missing {what}: {} not found ({hint})", path.display());
    }
    Ok(())
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<SeasonDataset> {
    let path = cfg.dataset_path();
    require(&path, "dataset", "run `swe prepare` or `swe synth` first")?;
    Ok(SeasonDataset::load(&path)?)
}

fn save_dataset(cfg: &ExperimentConfig, ds: &SeasonDataset) -> Result<()> {
    let path = cfg.dataset_path();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    ds.save(&path)?;
    eprintln!(
        "dataset: {} stations, {} seasons, {} days -> {}",
        ds.n_stations(),
        ds.n_seasons(),
        ds.season_length,
        path.display()
    );
    Ok(())
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<()> {
    let (Some(stations), Some(daily)) = (&cfg.stations, &cfg.daily) else {
        bail!("prepare needs both --stations and --daily");
    };
    cfg.echo("prepare")?;
    let prep = cfg.prepare(false);
    let (meta, records) = load_station_data_with(stations, daily, &prep.season)?;
    let ds = prepare_dataset(&meta, &records, &prep)?;
    save_dataset(cfg, &ds)
}

pub fn synth(cfg: &ExperimentConfig) -> Result<()> {
    cfg.echo("synth")?;
    let (stations, records) = generate_synthetic(&cfg.synthetic())?;
    let data = cfg.out.join("data");
    std::fs::create_dir_all(&data).with_context(|| format!("creating {}", data.display()))?;
    write_stations(&data.join("stations.csv"), &stations)?;
    write_daily(&data.join("daily.csv"), &records)?;
    let ds = prepare_dataset(&stations, &records, &cfg.prepare(true))?;
    save_dataset(cfg, &ds)
}

fn kinds(model: ModelKind) -> Vec<ModelKind> {
    match model {
        ModelKind::Ensemble => vec![ModelKind::Spatial, ModelKind::Temporal],
        k => vec![k],
    }
}

pub fn train(cfg: &ExperimentConfig) -> Result<()> {
    let ds = load_dataset(cfg)?;
    cfg.echo("train")?;
    let ids: Vec<String> = ds.stations.iter().map(|s| s.station_id.clone()).collect();
    for kind in kinds(cfg.model) {
        let started = Instant::now();
        let config = model_config(kind, &ds, &cfg.model_spec)?;
        let ck = match config.build()? {
            None => {
                let lr = fit_linear(&ds, cfg.model_spec.ridge)?;
                Checkpoint::from_linear(
                    &lr,
                    cfg.model_spec.ridge,
                    ds.norm.clone(),
                    ids.clone(),
                    ds.feature_names.clone(),
                )
            }
            Some(model) => {
                let tc = cfg.train_config(kind);
                let mut log = |rec: &swe_core::training::EpochRecord, _: &_| {
                    eprintln!(
                        "{kind} epoch {:>4}  loss {:.6e}  lr {:.3e}  {:.2}s",
                        rec.epoch, rec.loss, rec.lr, rec.seconds
                    );
                    Ok(Control::Continue)
                };
                let out = train_observed(model.as_ref(), &ds, &tc, Execution::Parallel, &mut log)?;
                out.history
                    .write_csv(&cfg.out.join(format!("{kind}.history.csv")))?;
                Checkpoint::new(
                    config,
                    out.params,
                    ds.norm.clone(),
                    ids.clone(),
                    ds.feature_names.clone(),
                )
            }
        };
        let path = checkpoint_path(cfg, kind);
        ck.save(&path)?;
        eprintln!(
            "{kind}: {} in {:.1}s",
            path.display(),
            started.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

fn load_checkpoint(cfg: &ExperimentConfig, kind: ModelKind) -> Result<Checkpoint> {
    let path = checkpoint_path(cfg, kind);
    require(
        &path,
        &format!("{kind} checkpoint"),
        &format!("run `swe train --model {kind}` first"),
    )?;
    Ok(Checkpoint::load(&path)?)
}

pub fn predict(cfg: &ExperimentConfig, all_seasons: bool) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let seasons = if all_seasons {
        ds.seasons.clone()
    } else {
        let test = ds
            .split
            .as_ref()
            .map(|s| s.test.clone())
            .unwrap_or_default();
        if test.is_empty() {
            bail!("the dataset has no test seasons; pass --all-seasons");
        }
        test
    };
    // both checkpoints must exist before anything is written
    let cks = kinds(cfg.model)
        .into_iter()
        .map(|k| load_checkpoint(cfg, k))
        .collect::<Result<Vec<_>>>()?;
    cfg.echo("predict")?;
    let mut preds = cks
        .iter()
        .map(|ck| predict_checkpoint(ck, &ds, &seasons, Execution::Parallel))
        .collect::<swe_core::Result<Vec<_>>>()?;
    if cfg.model == ModelKind::Ensemble {
        let ens = Predictions::ensemble(&preds[0], &preds[1])?;
        preds.push(ens);
    }
    for p in &preds {
        let path = predictions_path(cfg, p.model);
        p.write_csv(&path)?;
        eprintln!("{}: {}", p.model, path.display());
    }
    Ok(())
}

pub fn evaluate(cfg: &ExperimentConfig) -> Result<()> {
    let wanted = predictions_path(cfg, cfg.model);
    require(
        &wanted,
        &format!("{} predictions", cfg.model),
        &format!("run `swe predict --model {}` first", cfg.model),
    )?;
    let ds = load_dataset(cfg)?;
    cfg.echo("evaluate")?;
    let mut preds = Vec::new();
    for kind in ModelKind::ALL {
        let path = predictions_path(cfg, kind);
        if path.exists() {
            preds.push(Predictions::read_csv(&path)?);
        }
    }
    let report = build_report(&preds, &ds)?;
    let dir = report_dir(cfg);
    std::fs::create_dir_all(&dir)?;
    report.write(&dir)?;
    print!("{}", report.render());
    Ok(())
}

pub fn report(cfg: &ExperimentConfig) -> Result<()> {
    let dir = report_dir(cfg);
    require(
        &dir.join("report.json"),
        "report",
        "run `swe evaluate` first",
    )?;
    print!("{}", EvalReport::load(&dir)?.render());
    Ok(())
}

pub fn gradcheck(tiny: bool, eps: f64) -> Result<()> {
    if !tiny {
        eprintln!("note: only the tiny configuration is available; running it");
    }
    let started = Instant::now();
    let cases = gradcheck_suite(eps)?;
    let mut worst = 0.0f64;
    for c in &cases {
        println!(
            "{:<24} {:>6} coords  max rel error {:.3e}",
            c.name, c.report.coordinates, c.report.max_rel_error
        );
        worst = worst.max(c.report.max_rel_error);
    }
    println!(
        "max rel error {worst:.3e} over {} cases in {:.2}s",
        cases.len(),
        started.elapsed().as_secs_f64()
    );
    if worst >= GRADCHECK_TOL {
        bail!("max relative error {worst:.3e} exceeds {GRADCHECK_TOL:e}");
    }
    Ok(())
}
