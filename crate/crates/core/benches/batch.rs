use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};
use swe_core::data::{
    generate_synthetic, prepare_dataset, PrepareConfig, SeasonConfig, SeasonDataset,
    SyntheticConfig,
};
use swe_core::models::ModelKind;
use swe_core::parallel::Execution;
use swe_core::training::{model_config, predict_model, train, ModelSpec, TrainConfig};

fn dataset() -> SeasonDataset {
    let mut cfg = SyntheticConfig::new(16, 40, 3, 5);
    cfg.noise = 2.0;
    let (stations, records) = generate_synthetic(&cfg).unwrap();
    let prep = PrepareConfig {
        season: SeasonConfig::new(40),
        test_years: vec![2004],
        ..PrepareConfig::default()
    };
    prepare_dataset(&stations, &records, &prep).unwrap()
}

fn one_epoch(c: &mut Criterion) {
    let ds = dataset();
    let mut group = c.benchmark_group("train_epoch");
    group.sample_size(10);
    group.measurement_time(Duration::from_secs(10));
    for kind in [ModelKind::Spatial, ModelKind::Temporal] {
        let config = model_config(kind, &ds, &ModelSpec::desk()).unwrap();
        let model = config.build().unwrap().unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 32,
            ..TrainConfig::default()
        };
        for exec in [Execution::Sequential, Execution::Parallel] {
            group.bench_function(format!("{kind}/{exec:?}"), |b| {
                b.iter(|| black_box(train(model.as_ref(), &ds, &cfg, exec).unwrap()))
            });
        }
    }
    group.finish();
}

fn predict(c: &mut Criterion) {
    let ds = dataset();
    let config = model_config(ModelKind::Temporal, &ds, &ModelSpec::desk()).unwrap();
    let model = config.build().unwrap().unwrap();
    let params = model.init_params(0);
    let seasons = ds.seasons.clone();
    let mut group = c.benchmark_group("predict");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_function(format!("temporal/{exec:?}"), |b| {
            b.iter(|| {
                black_box(predict_model(model.as_ref(), &params, &ds, &seasons, exec).unwrap())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, one_epoch, predict);
criterion_main!(benches);
