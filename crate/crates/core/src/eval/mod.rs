//! NSE, per-location error analyses and report files.

mod metrics;
mod predictions;
mod report;

pub use metrics::{
    bin_nse, elevation_group_medians, evaluate_locations, nse, relative_model_performance,
    rmp_grid, ElevationGroup, LocationScore, NseHistogram, RmpCurve, NSE_BIN_LABELS, RMP_MAX,
    RMP_STEP,
};
pub use predictions::{Predictions, PREDICTIONS_HEADER};
pub use report::{build_report, EvalReport, ModelScores};
