use crate::error::{Error, Result};

/// Elementwise arithmetic mean of two aligned prediction vectors.
pub fn ensemble_mean(spatial: &[f64], temporal: &[f64]) -> Result<Vec<f64>> {
    if spatial.len() != temporal.len() {
        return Err(Error::Shape {
            op: "ensemble",
            lhs: vec![spatial.len()],
            rhs: vec![temporal.len()],
        });
    }
    Ok(spatial
        .iter()
        .zip(temporal)
        .map(|(a, b)| 0.5 * (a + b))
        .collect())
}

/// Mean of two prediction sets whose rows carry `(station, season, day)`
/// keys; the keys must match row for row.
pub fn ensemble_predict<K: PartialEq + std::fmt::Debug>(
    spatial: &[(K, f64)],
    temporal: &[(K, f64)],
) -> Result<Vec<f64>> {
    if spatial.len() != temporal.len() {
        return Err(Error::Shape {
            op: "ensemble",
            lhs: vec![spatial.len()],
            rhs: vec![temporal.len()],
        });
    }
    if let Some((a, b)) = spatial.iter().zip(temporal).find(|(a, b)| a.0 != b.0) {
        return Err(Error::contract(format!(
            "ensemble inputs are misaligned: {:?} vs {:?}",
            a.0, b.0
        )));
    }
    let a: Vec<f64> = spatial.iter().map(|r| r.1).collect();
    let b: Vec<f64> = temporal.iter().map(|r| r.1).collect();
    ensemble_mean(&a, &b)
}
