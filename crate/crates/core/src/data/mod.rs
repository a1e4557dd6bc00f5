//! Station ingestion, season assembly, features, splits and synthetic data.

mod calendar;
mod dataset;
mod records;
mod season;
mod split;
mod synthetic;

pub use calendar::SeasonConfig;
pub use dataset::{
    compute_gamma, key_count, normalize_features, prepare_dataset, AlphaCube, NormStats,
    PrepareConfig, SeasonDataset, DATASET_FORMAT, DATASET_VERSION,
};
pub use records::{
    compute_southness, load_station_data, load_station_data_with, read_daily, read_stations,
    write_daily, write_stations, DailyRecord, StationMeta, Variable, DAILY_HEADER, STATIONS_HEADER,
};
pub use season::{assemble_season, fill_gaps, filter_stations, StationSeason};
pub use split::{split_train_test, Split, DEFAULT_TEST_YEARS};
pub use synthetic::{generate_synthetic, SyntheticConfig};
