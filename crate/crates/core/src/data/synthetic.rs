//! Desk-scale synthetic stations with accumulation, plateau and melt.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::calendar::SeasonConfig;
use super::records::{compute_southness, DailyRecord, StationMeta};
use crate::error::{Error, Result};

const LAND_COVER: [u32; 4] = [41, 42, 52, 71];
const CORR_DISTANCE_KM: f64 = 300.0;
const CORR_ELEVATION_M: f64 = 800.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_stations: usize,
    pub season_length: usize,
    pub n_seasons: usize,
    pub first_season: i32,
    /// Standard deviation of the additive noise, in units of each variable
    /// (mm for SWE, precipitation; °C; K).
    pub noise: f64,
    pub seed: u64,
    /// Probability that any non-label value is dropped.
    pub missing_rate: f64,
}

impl SyntheticConfig {
    pub fn new(n_stations: usize, season_length: usize, n_seasons: usize, seed: u64) -> Self {
        Self {
            n_stations,
            season_length,
            n_seasons,
            first_season: 2002,
            noise: 0.0,
            seed,
            missing_rate: 0.0,
        }
    }

    pub fn seasons(&self) -> Vec<i32> {
        (0..self.n_seasons as i32)
            .map(|k| self.first_season + k)
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.n_stations == 0 || self.n_seasons == 0 || self.season_length < 2 {
            return Err(Error::config(
                "synthetic set needs stations, seasons and at least 2 days",
            ));
        }
        if self.season_length > 365 {
            return Err(Error::config("season length cannot exceed 365 days"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::config("noise must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::config("missing rate must lie in [0, 1)"));
        }
        Ok(())
    }
}

fn distance_km(a: &StationMeta, b: &StationMeta) -> f64 {
    let lat = 0.5 * (a.latitude + b.latitude);
    let dy = (a.latitude - b.latitude) * 111.0;
    let dx = (a.longitude - b.longitude) * 111.0 * lat.to_radians().cos();
    dx.hypot(dy)
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
fn cholesky(a: &[f64], n: usize) -> Vec<f64> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                l[i * n + i] = (a[i * n + i] - s).max(1e-12).sqrt();
            } else {
                l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    l
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn elevation_norm(elev: f64) -> f64 {
    ((elev - 1200.0) / 2200.0).clamp(0.0, 1.0)
}

/// SWE at season fraction `u` for a curve with start, peak and melt-out.
fn swe_curve(u: f64, peak: f64, u_s: f64, u_p: f64, u_e: f64) -> f64 {
    if u <= u_s || u >= u_e {
        0.0
    } else if u <= u_p {
        let t = (u - u_s) / (u_p - u_s);
        peak * 0.5 * (1.0 - (std::f64::consts::PI * t).cos())
    } else {
        let t = (u - u_p) / (u_e - u_p);
        peak * (1.0 - t).powf(1.5)
    }
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<(Vec<StationMeta>, Vec<DailyRecord>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_stations;
    let m = cfg.season_length;

    let mut stations = Vec::with_capacity(n);
    for k in 0..n {
        let aspect_deg = rng.random_range(0.0..360.0);
        let slope_deg = rng.random_range(0.0..35.0);
        stations.push(StationMeta {
            station_id: format!("SYN{k:03}"),
            latitude: rng.random_range(37.0..48.0),
            longitude: rng.random_range(-122.0..-105.0),
            elevation: rng.random_range(1200.0..3400.0),
            aspect_deg,
            slope_deg,
            southness: compute_southness(aspect_deg, slope_deg)?,
            land_cover: LAND_COVER[rng.random_range(0..LAND_COVER.len())],
        });
    }

    let mut cov = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            let d = distance_km(&stations[a], &stations[b]);
            let de = (stations[a].elevation - stations[b].elevation).abs();
            cov[a * n + b] = (-d / CORR_DISTANCE_KM - de / CORR_ELEVATION_M).exp();
        }
        cov[a * n + a] += 1e-9;
    }
    let chol = cholesky(&cov, n);

    let season_cfg = SeasonConfig::new(m);
    let mut records = Vec::with_capacity(n * m * cfg.n_seasons);
    for season in cfg.seasons() {
        let season_factor = rng.random_range(0.6..1.4);
        let xi: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let local: Vec<f64> = (0..n)
            .map(|a| {
                let z: f64 = (0..=a).map(|b| chol[a * n + b] * xi[b]).sum();
                (0.15 * z).exp()
            })
            .collect();
        for (a, st) in stations.iter().enumerate() {
            let e = elevation_norm(st.elevation);
            let peak = (50.0 + 700.0 * e) * season_factor * local[a];
            let u_s = 0.12 - 0.04 * e;
            let u_p = 0.55 + 0.12 * e + rng.random_range(-0.03..0.03);
            let u_e = u_p + 0.25;
            let lapse = -0.0065 * (st.elevation - 1500.0);
            let mut prev = 0.0;
            for day in 1..=m {
                let u = (day - 1) as f64 / (m - 1) as f64;
                let clean = swe_curve(u, peak, u_s, u_p, u_e);
                let tavg = 6.0 + lapse - 12.0 * (std::f64::consts::PI * u).sin();
                let precip = 1.1 * (clean - prev).max(0.0) + 0.2 * season_factor;
                prev = clean;
                let tb37 = 255.0 - 0.09 * clean + 0.2 * tavg;
                let tb19 = 258.0 - 0.03 * clean + 0.2 * tavg;

                let mut jitter = |scale: f64| {
                    if cfg.noise > 0.0 {
                        cfg.noise * scale * normal(&mut rng)
                    } else {
                        0.0
                    }
                };
                let swe = if clean > 0.0 {
                    (clean + jitter(1.0)).max(0.0)
                } else {
                    0.0
                };
                let tavg_obs = tavg + jitter(0.1);
                let tmin = tavg_obs - 5.0 - jitter(0.05).abs();
                let tmax = tavg_obs + 5.0 + jitter(0.05).abs();
                let precip = (precip + jitter(0.1)).max(0.0);
                let tb19 = tb19 + jitter(0.05);
                let tb37 = tb37 + jitter(0.05);

                let mut keep = |v: f64| {
                    if cfg.missing_rate > 0.0 && rng.random_bool(cfg.missing_rate) {
                        None
                    } else {
                        Some(v)
                    }
                };
                let (tb_19v, tb_37v) = (keep(tb19), keep(tb37));
                records.push(DailyRecord {
                    station_id: st.station_id.clone(),
                    date: season_cfg.date_of(season, day),
                    season,
                    day,
                    swe: Some(swe),
                    precip: keep(precip),
                    temp_min: keep(tmin),
                    temp_max: keep(tmax),
                    temp_avg: keep(tavg_obs),
                    tb_19v,
                    tb_37v,
                    tb_diff: tb_19v.zip(tb_37v).map(|(a, b)| a - b),
                });
            }
        }
    }
    Ok((stations, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        let mut cfg = SyntheticConfig::new(5, 30, 2, 3);
        cfg.noise = 2.0;
        assert_eq!(
            generate_synthetic(&cfg).unwrap(),
            generate_synthetic(&cfg).unwrap()
        );
        let mut other = cfg.clone();
        other.seed = 4;
        assert_ne!(
            generate_synthetic(&cfg).unwrap().1,
            generate_synthetic(&other).unwrap().1
        );
    }

    #[test]
    fn melts_out_by_last_day() {
        let mut cfg = SyntheticConfig::new(10, 40, 3, 1);
        cfg.noise = 5.0;
        let (_, recs) = generate_synthetic(&cfg).unwrap();
        for r in recs.iter().filter(|r| r.day == 40) {
            assert_eq!(r.swe, Some(0.0));
        }
        assert!(recs.iter().any(|r| r.swe.unwrap() > 0.0));
    }

    #[test]
    fn higher_stations_peak_higher() {
        let cfg = SyntheticConfig::new(30, 60, 1, 9);
        let (stations, recs) = generate_synthetic(&cfg).unwrap();
        let peak = |id: &str| {
            recs.iter()
                .filter(|r| r.station_id == id)
                .map(|r| r.swe.unwrap())
                .fold(0.0, f64::max)
        };
        let lo = stations
            .iter()
            .min_by(|a, b| a.elevation.total_cmp(&b.elevation))
            .unwrap();
        let hi = stations
            .iter()
            .max_by(|a, b| a.elevation.total_cmp(&b.elevation))
            .unwrap();
        assert!(peak(&hi.station_id) > peak(&lo.station_id));
    }

    #[test]
    fn temperatures_ordered_and_dates_consistent() {
        let mut cfg = SyntheticConfig::new(4, 30, 2, 0);
        cfg.noise = 1.0;
        let (_, recs) = generate_synthetic(&cfg).unwrap();
        let season = SeasonConfig::new(30);
        for r in &recs {
            assert!(r.temp_min.unwrap() <= r.temp_max.unwrap());
            assert_eq!(season.locate(r.date), Some((r.season, r.day)));
        }
    }

    #[test]
    fn bad_config_rejected() {
        assert!(generate_synthetic(&SyntheticConfig::new(0, 30, 1, 0)).is_err());
        let mut cfg = SyntheticConfig::new(3, 30, 1, 0);
        cfg.missing_rate = 1.0;
        assert!(generate_synthetic(&cfg).is_err());
    }
}
