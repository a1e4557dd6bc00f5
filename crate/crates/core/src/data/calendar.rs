//! Water-year day indexing. Day 1 is 1 October of the preceding calendar
//! year; 29 February is dropped so a season is always `length` days.

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonConfig {
    pub length: usize,
}

impl Default for SeasonConfig {
    fn default() -> Self {
        Self { length: 270 }
    }
}

fn is_leap_day(d: NaiveDate) -> bool {
    d.month() == 2 && d.day() == 29
}

impl SeasonConfig {
    pub fn new(length: usize) -> Self {
        Self { length }
    }

    pub fn season_start(season: i32) -> NaiveDate {
        NaiveDate::from_ymd_opt(season - 1, 10, 1).expect("valid water-year start")
    }

    /// `(season, day)` for a calendar date, or `None` when the date falls
    /// outside the season window or is 29 February.
    pub fn locate(&self, date: NaiveDate) -> Option<(i32, usize)> {
        if is_leap_day(date) {
            return None;
        }
        let season = if date.month() >= 10 {
            date.year() + 1
        } else {
            date.year()
        };
        let start = Self::season_start(season);
        let mut offset = (date - start).num_days();
        if let Some(leap) = NaiveDate::from_ymd_opt(season, 2, 29) {
            if date > leap {
                offset -= 1;
            }
        }
        let day = usize::try_from(offset).ok()? + 1;
        (day <= self.length).then_some((season, day))
    }

    /// Calendar date of `day` (1-based) in `season`.
    pub fn date_of(&self, season: i32, day: usize) -> NaiveDate {
        let mut date = Self::season_start(season) + Duration::days(day as i64 - 1);
        if let Some(leap) = NaiveDate::from_ymd_opt(season, 2, 29) {
            if date >= leap {
                date += Duration::days(1);
            }
        }
        date
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn first_day_is_october_first() {
        let s = SeasonConfig::default();
        assert_eq!(s.locate(ymd(2014, 10, 1)), Some((2015, 1)));
        assert_eq!(s.locate(ymd(2015, 1, 1)), Some((2015, 93)));
        assert_eq!(s.date_of(2015, 1), ymd(2014, 10, 1));
    }

    #[test]
    fn leap_day_is_dropped() {
        let s = SeasonConfig::default();
        assert_eq!(s.locate(ymd(2016, 2, 29)), None);
        assert_eq!(
            s.locate(ymd(2016, 2, 28)),
            s.locate(ymd(2015, 2, 28)).map(|(_, d)| (2016, d))
        );
        assert_eq!(
            s.locate(ymd(2016, 3, 1)),
            s.locate(ymd(2015, 3, 1)).map(|(_, d)| (2016, d))
        );
    }

    #[test]
    fn window_ends_at_length() {
        let s = SeasonConfig::default();
        // 270 days from 1 Oct ends on 27 June.
        assert_eq!(s.locate(ymd(2010, 6, 27)), Some((2010, 270)));
        assert_eq!(s.locate(ymd(2010, 6, 28)), None);
        assert_eq!(s.locate(ymd(2010, 9, 30)), None);
    }

    #[test]
    fn date_of_inverts_locate() {
        let s = SeasonConfig::default();
        for season in [2015, 2016] {
            for day in 1..=270 {
                assert_eq!(s.locate(s.date_of(season, day)), Some((season, day)));
            }
        }
    }
}
