use std::collections::{HashMap, HashSet};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::calendar::SeasonConfig;
use crate::error::{Error, Result};

/// Static attributes of one station.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationMeta {
    pub station_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub elevation: f64,
    pub aspect_deg: f64,
    pub slope_deg: f64,
    pub southness: f64,
    pub land_cover: u32,
}

/// Daily variables carried by a [`DailyRecord`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variable {
    Swe,
    Precip,
    TempMin,
    TempMax,
    TempAvg,
    Tb19v,
    Tb37v,
    TbDiff,
}

impl Variable {
    /// The observed dynamic inputs, in feature order.
    pub const DYNAMIC: [Variable; 7] = [
        Variable::Precip,
        Variable::TempMin,
        Variable::TempMax,
        Variable::TempAvg,
        Variable::Tb19v,
        Variable::Tb37v,
        Variable::TbDiff,
    ];

    pub const ALL: [Variable; 8] = [
        Variable::Swe,
        Variable::Precip,
        Variable::TempMin,
        Variable::TempMax,
        Variable::TempAvg,
        Variable::Tb19v,
        Variable::Tb37v,
        Variable::TbDiff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variable::Swe => "swe_mm",
            Variable::Precip => "precip_mm",
            Variable::TempMin => "tmin_c",
            Variable::TempMax => "tmax_c",
            Variable::TempAvg => "tavg_c",
            Variable::Tb19v => "tb19v_k",
            Variable::Tb37v => "tb37v_k",
            Variable::TbDiff => "tbdiff_k",
        }
    }
}

/// One `(station, season, day)` row. `None` marks a missing value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub station_id: String,
    pub date: NaiveDate,
    pub season: i32,
    pub day: usize,
    pub swe: Option<f64>,
    pub precip: Option<f64>,
    pub temp_min: Option<f64>,
    pub temp_max: Option<f64>,
    pub temp_avg: Option<f64>,
    pub tb_19v: Option<f64>,
    pub tb_37v: Option<f64>,
    pub tb_diff: Option<f64>,
}

impl DailyRecord {
    pub fn get(&self, v: Variable) -> Option<f64> {
        match v {
            Variable::Swe => self.swe,
            Variable::Precip => self.precip,
            Variable::TempMin => self.temp_min,
            Variable::TempMax => self.temp_max,
            Variable::TempAvg => self.temp_avg,
            Variable::Tb19v => self.tb_19v,
            Variable::Tb37v => self.tb_37v,
            Variable::TbDiff => self.tb_diff,
        }
    }
}

/// `cos(aspect) · sin(slope)` with both angles in degrees.
pub fn compute_southness(aspect_deg: f64, slope_deg: f64) -> Result<f64> {
    if !(0.0..360.0).contains(&aspect_deg) {
        return Err(Error::contract(format!(
            "aspect {aspect_deg} outside [0, 360)"
        )));
    }
    if !(0.0..=90.0).contains(&slope_deg) {
        return Err(Error::contract(format!(
            "slope {slope_deg} outside [0, 90]"
        )));
    }
    Ok(aspect_deg.to_radians().cos() * slope_deg.to_radians().sin())
}

pub const STATIONS_HEADER: [&str; 7] = [
    "station_id",
    "lat",
    "lon",
    "elevation_m",
    "aspect_deg",
    "slope_deg",
    "land_cover",
];

pub const DAILY_HEADER: [&str; 9] = [
    "station_id",
    "date",
    "swe_mm",
    "precip_mm",
    "tmin_c",
    "tmax_c",
    "tavg_c",
    "tb19v_k",
    "tb37v_k",
];

fn open_csv(path: &Path, header: &[&str]) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let got: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if got != header {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!(
                "expected header `{}`, found `{}`",
                header.join(","),
                got.join(",")
            ),
        });
    }
    Ok(rdr)
}

struct RowCtx<'a> {
    path: &'a Path,
    line: u64,
}

impl RowCtx<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn required(&self, rec: &csv::StringRecord, idx: usize, name: &str) -> Result<f64> {
        self.optional(rec, idx, name)?
            .ok_or_else(|| self.err(format!("missing value for `{name}`")))
    }

    fn optional(&self, rec: &csv::StringRecord, idx: usize, name: &str) -> Result<Option<f64>> {
        let raw = rec.get(idx).unwrap_or("").trim();
        if raw.is_empty() {
            return Ok(None);
        }
        let v: f64 = raw
            .parse()
            .map_err(|_| self.err(format!("`{name}` is not a number: `{raw}`")))?;
        if !v.is_finite() {
            return Err(self.err(format!("`{name}` is not finite: `{raw}`")));
        }
        Ok(Some(v))
    }
}

pub fn read_stations(path: &Path) -> Result<Vec<StationMeta>> {
    let mut rdr = open_csv(path, &STATIONS_HEADER)?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let ctx = RowCtx {
            path,
            line: rec.position().map_or(0, |p| p.line()),
        };
        if rec.len() != STATIONS_HEADER.len() {
            return Err(ctx.err(format!(
                "expected {} fields, got {}",
                STATIONS_HEADER.len(),
                rec.len()
            )));
        }
        let station_id = rec[0].trim().to_string();
        if station_id.is_empty() {
            return Err(ctx.err("empty station_id"));
        }
        if !seen.insert(station_id.clone()) {
            return Err(ctx.err(format!("duplicate station `{station_id}`")));
        }
        let aspect_deg = ctx.required(&rec, 4, "aspect_deg")?;
        let slope_deg = ctx.required(&rec, 5, "slope_deg")?;
        let southness =
            compute_southness(aspect_deg, slope_deg).map_err(|e| ctx.err(e.to_string()))?;
        let land_cover: u32 = rec[6]
            .trim()
            .parse()
            .map_err(|_| ctx.err(format!("land_cover is not a class code: `{}`", &rec[6])))?;
        out.push(StationMeta {
            station_id,
            latitude: ctx.required(&rec, 1, "lat")?,
            longitude: ctx.required(&rec, 2, "lon")?,
            elevation: ctx.required(&rec, 3, "elevation_m")?,
            aspect_deg,
            slope_deg,
            southness,
            land_cover,
        });
    }
    Ok(out)
}

/// Reads `daily.csv`. Rows that fall outside the season window (and
/// 29 February) are skipped.
pub fn read_daily(
    path: &Path,
    known: &HashSet<&str>,
    season: &SeasonConfig,
) -> Result<Vec<DailyRecord>> {
    let mut rdr = open_csv(path, &DAILY_HEADER)?;
    let mut out = Vec::new();
    let mut seen: HashMap<(String, NaiveDate), u64> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let ctx = RowCtx {
            path,
            line: rec.position().map_or(0, |p| p.line()),
        };
        if rec.len() != DAILY_HEADER.len() {
            return Err(ctx.err(format!(
                "expected {} fields, got {}",
                DAILY_HEADER.len(),
                rec.len()
            )));
        }
        let station_id = rec[0].trim();
        if !known.contains(station_id) {
            return Err(ctx.err(format!("unknown station_id `{station_id}`")));
        }
        let date = NaiveDate::parse_from_str(rec[1].trim(), "%Y-%m-%d")
            .map_err(|_| ctx.err(format!("bad date `{}` (want YYYY-MM-DD)", &rec[1])))?;
        if let Some(prev) = seen.insert((station_id.to_string(), date), ctx.line) {
            return Err(ctx.err(format!(
                "duplicate row for {station_id} on {date} (first at line {prev})"
            )));
        }
        let Some((season_year, day)) = season.locate(date) else {
            continue;
        };
        let temp_min = ctx.optional(&rec, 4, "tmin_c")?;
        let temp_max = ctx.optional(&rec, 5, "tmax_c")?;
        if let (Some(lo), Some(hi)) = (temp_min, temp_max) {
            if lo > hi {
                return Err(ctx.err(format!("tmin_c {lo} exceeds tmax_c {hi}")));
            }
        }
        let tb_19v = ctx.optional(&rec, 7, "tb19v_k")?;
        let tb_37v = ctx.optional(&rec, 8, "tb37v_k")?;
        out.push(DailyRecord {
            station_id: station_id.to_string(),
            date,
            season: season_year,
            day,
            swe: ctx.optional(&rec, 2, "swe_mm")?,
            precip: ctx.optional(&rec, 3, "precip_mm")?,
            temp_min,
            temp_max,
            temp_avg: ctx.optional(&rec, 6, "tavg_c")?,
            tb_19v,
            tb_37v,
            tb_diff: tb_19v.zip(tb_37v).map(|(a, b)| a - b),
        });
    }
    Ok(out)
}

/// Loads `stations.csv` and `daily.csv` with a 270-day season.
pub fn load_station_data(
    meta_path: &Path,
    daily_path: &Path,
) -> Result<(Vec<StationMeta>, Vec<DailyRecord>)> {
    load_station_data_with(meta_path, daily_path, &SeasonConfig::default())
}

pub fn load_station_data_with(
    meta_path: &Path,
    daily_path: &Path,
    season: &SeasonConfig,
) -> Result<(Vec<StationMeta>, Vec<DailyRecord>)> {
    let stations = read_stations(meta_path)?;
    let known: HashSet<&str> = stations.iter().map(|s| s.station_id.as_str()).collect();
    let records = read_daily(daily_path, &known, season)?;
    Ok((stations, records))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_stations(path: &Path, stations: &[StationMeta]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(STATIONS_HEADER)?;
    for s in stations {
        w.write_record([
            s.station_id.clone(),
            s.latitude.to_string(),
            s.longitude.to_string(),
            s.elevation.to_string(),
            s.aspect_deg.to_string(),
            s.slope_deg.to_string(),
            s.land_cover.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_daily(path: &Path, records: &[DailyRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(DAILY_HEADER)?;
    for r in records {
        w.write_record([
            r.station_id.clone(),
            format!(
                "{:04}-{:02}-{:02}",
                r.date.year(),
                r.date.month(),
                r.date.day()
            ),
            fmt_opt(r.swe),
            fmt_opt(r.precip),
            fmt_opt(r.temp_min),
            fmt_opt(r.temp_max),
            fmt_opt(r.temp_avg),
            fmt_opt(r.tb_19v),
            fmt_opt(r.tb_37v),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        p
    }

    const STATIONS: &str = "station_id,lat,lon,elevation_m,aspect_deg,slope_deg,land_cover\n\
        A,40.5,-110.25,2500,180,30,42\n\
        B,41,-111,1800,0,90,71\n";

    #[test]
    fn southness_cases() {
        assert_eq!(compute_southness(123.0, 0.0).unwrap(), 0.0);
        assert!(compute_southness(90.0, 30.0).unwrap().abs() < 1e-16);
        assert_eq!(compute_southness(0.0, 90.0).unwrap(), 1.0);
        assert!(compute_southness(360.0, 10.0).is_err());
        assert!(compute_southness(10.0, 91.0).is_err());
    }

    #[test]
    fn two_by_two_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let meta = write(&dir, "stations.csv", STATIONS);
        let daily = write(
            &dir,
            "daily.csv",
            "station_id,date,swe_mm,precip_mm,tmin_c,tmax_c,tavg_c,tb19v_k,tb37v_k\n\
             A,2009-10-01,0,1.5,-3,4,0.5,250,245\n\
             A,2009-10-02,2.5,0,-4,3,-0.5,249,240\n\
             B,2009-10-01,,0.2,-1,6,2.5,251,250.5\n\
             B,2009-10-02,1,0,-2,5,1.5,,247\n",
        );
        let (stations, records) = load_station_data(&meta, &daily).unwrap();
        assert_eq!(stations.len(), 2);
        assert_eq!(stations[1].southness, 1.0);
        assert_eq!(records.len(), 4);
        let a2 = &records[1];
        assert_eq!(a2.station_id, "A");
        assert_eq!((a2.season, a2.day), (2010, 2));
        assert_eq!(a2.swe, Some(2.5));
        assert_eq!(a2.precip, Some(0.0));
        assert_eq!(a2.temp_min, Some(-4.0));
        assert_eq!(a2.temp_max, Some(3.0));
        assert_eq!(a2.temp_avg, Some(-0.5));
        assert_eq!(a2.tb_diff, Some(9.0));
        // blank SWE is missing, not zero
        assert_eq!(records[2].swe, None);
        assert_eq!(records[3].tb_19v, None);
        assert_eq!(records[3].tb_diff, None);
    }

    #[test]
    fn empty_daily_file_is_fine() {
        let dir = tempfile::tempdir().unwrap();
        let meta = write(&dir, "stations.csv", STATIONS);
        let daily = write(
            &dir,
            "daily.csv",
            "station_id,date,swe_mm,precip_mm,tmin_c,tmax_c,tavg_c,tb19v_k,tb37v_k\n",
        );
        let (_, records) = load_station_data(&meta, &daily).unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let meta = write(&dir, "stations.csv", STATIONS);
        let daily = write(
            &dir,
            "daily.csv",
            "station_id,date,swe_mm,precip_mm,tmin_c,tmax_c,tavg_c,tb19v_k,tb37v_k\n\
             A,2009-10-01,0,1,-3,4,0.5,250,245\n\
             A,2009-10-02,abc,1,-3,4,0.5,250,245\n",
        );
        let err = load_station_data(&meta, &daily).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn unknown_station_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let meta = write(&dir, "stations.csv", STATIONS);
        let daily = write(
            &dir,
            "daily.csv",
            "station_id,date,swe_mm,precip_mm,tmin_c,tmax_c,tavg_c,tb19v_k,tb37v_k\n\
             Z,2009-10-01,0,1,-3,4,0.5,250,245\n",
        );
        let err = load_station_data(&meta, &daily).unwrap_err();
        assert!(err.to_string().contains("unknown station_id `Z`"), "{err}");
    }

    #[test]
    fn inverted_temperatures_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let meta = write(&dir, "stations.csv", STATIONS);
        let daily = write(
            &dir,
            "daily.csv",
            "station_id,date,swe_mm,precip_mm,tmin_c,tmax_c,tavg_c,tb19v_k,tb37v_k\n\
             A,2009-10-01,0,1,5,4,0.5,250,245\n",
        );
        assert!(load_station_data(&meta, &daily).is_err());
    }

    #[test]
    fn write_then_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let meta = write(&dir, "stations.csv", STATIONS);
        let daily = write(
            &dir,
            "daily.csv",
            "station_id,date,swe_mm,precip_mm,tmin_c,tmax_c,tavg_c,tb19v_k,tb37v_k\n\
             A,2009-10-01,0.1,1.5,-3,4,0.5,250,245\n\
             B,2010-06-27,,0.2,-1,6,2.5,251,250.5\n",
        );
        let (stations, records) = load_station_data(&meta, &daily).unwrap();
        let meta2 = dir.path().join("s2.csv");
        let daily2 = dir.path().join("d2.csv");
        write_stations(&meta2, &stations).unwrap();
        write_daily(&daily2, &records).unwrap();
        let (s2, r2) = load_station_data(&meta2, &daily2).unwrap();
        assert_eq!(stations, s2);
        assert_eq!(records, r2);
    }
}
