use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Held-out water years, ordered by year.
pub const DEFAULT_TEST_YEARS: [i32; 5] = [2007, 2008, 2015, 2017, 2018];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<i32>,
    pub test: Vec<i32>,
}

impl Split {
    pub fn is_test(&self, season: i32) -> bool {
        self.test.contains(&season)
    }
}

/// Seasons listed in `test_years` go to test, the rest to train.
pub fn split_train_test(seasons: &[i32], test_years: &[i32]) -> Result<Split> {
    if let Some(missing) = test_years.iter().find(|y| !seasons.contains(y)) {
        return Err(Error::data(format!(
            "test year {missing} is not among the data seasons {seasons:?}"
        )));
    }
    let mut train: Vec<i32> = seasons
        .iter()
        .copied()
        .filter(|s| !test_years.contains(s))
        .collect();
    let mut test: Vec<i32> = seasons
        .iter()
        .copied()
        .filter(|s| test_years.contains(s))
        .collect();
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_years() {
        let seasons: Vec<i32> = (2002..=2019).collect();
        let s = split_train_test(&seasons, &DEFAULT_TEST_YEARS).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (13, 5));
        assert_eq!(s.test, vec![2007, 2008, 2015, 2017, 2018]);
    }

    #[test]
    fn custom_list() {
        let seasons: Vec<i32> = (2008..=2012).collect();
        let s = split_train_test(&seasons, &[2010]).unwrap();
        assert_eq!(s.test, vec![2010]);
        assert_eq!(s.train, vec![2008, 2009, 2011, 2012]);
    }

    #[test]
    fn absent_year_is_an_error() {
        let seasons: Vec<i32> = (2002..=2019).collect();
        assert!(split_train_test(&seasons, &[1999]).is_err());
    }
}
