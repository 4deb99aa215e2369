//! Calendar days stored as a signed offset from 1970-01-01.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Months, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// A calendar date as days since the Unix epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Day(pub i32);

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch")
}

impl Day {
    pub fn from_ymd(year: i32, month: u32, day: u32) -> Option<Day> {
        NaiveDate::from_ymd_opt(year, month, day).map(Day::from_naive)
    }

    pub fn from_naive(date: NaiveDate) -> Day {
        Day((date - epoch()).num_days() as i32)
    }

    pub fn to_naive(self) -> NaiveDate {
        epoch() + chrono::Duration::days(self.0 as i64)
    }

    /// ISO-8601 `YYYY-MM-DD`.
    pub fn parse_iso(s: &str) -> Option<Day> {
        NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok().map(Day::from_naive)
    }

    /// Day-first `D/M/YYYY`.
    pub fn parse_dmy(s: &str) -> Option<Day> {
        NaiveDate::parse_from_str(s.trim(), "%d/%m/%Y").ok().map(Day::from_naive)
    }

    pub fn plus_days(self, n: i32) -> Day {
        Day(self.0 + n)
    }

    /// Subtract whole calendar months, clamping to the end of shorter months.
    pub fn minus_months(self, months: u32) -> Day {
        Day::from_naive(self.to_naive().checked_sub_months(Months::new(months)).expect("date in range"))
    }

    /// 0 = Monday .. 6 = Sunday.
    pub fn weekday(self) -> usize {
        self.to_naive().weekday().num_days_from_monday() as usize
    }

    /// 1 = January .. 12 = December.
    pub fn month(self) -> u32 {
        self.to_naive().month()
    }

    pub fn day_of_month(self) -> u32 {
        self.to_naive().day()
    }
}

impl fmt::Display for Day {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_naive().format("%Y-%m-%d"))
    }
}

impl FromStr for Day {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Day::parse_iso(s).ok_or_else(|| Error::InvalidArgument(format!("bad date `{s}`")))
    }
}

impl Serialize for Day {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Day {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_is_zero() {
        assert_eq!(Day::from_ymd(1970, 1, 1), Some(Day(0)));
        assert_eq!(Day(0).weekday(), 3); // Thursday
    }

    #[test]
    fn month_subtraction_clamps() {
        let d = Day::from_ymd(2015, 7, 31).unwrap();
        assert_eq!(d.minus_months(2).to_string(), "2015-05-31");
        let d = Day::from_ymd(2015, 3, 31).unwrap();
        assert_eq!(d.minus_months(1).to_string(), "2015-02-28");
    }

    #[test]
    fn parses_both_formats() {
        assert_eq!(Day::parse_iso("2015-07-01"), Day::parse_dmy("1/7/2015"));
        assert!(Day::parse_iso("2015-02-30").is_none());
    }
}
