//! Date-indexed daily count series.
//!
//! [`DailySeries`] is the common currency of the pipeline: a contiguous run of
//! per-day values starting at a UTC calendar day. Series are immutable; every
//! transform returns a new value.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A UTC calendar day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DateDay(NaiveDate);

impl DateDay {
    pub fn from_ymd(year: i32, month: u32, day: u32) -> Option<Self> {
        NaiveDate::from_ymd_opt(year, month, day).map(DateDay)
    }

    pub fn from_naive(date: NaiveDate) -> Self {
        DateDay(date)
    }

    pub fn naive(self) -> NaiveDate {
        self.0
    }

    /// `self + n` days; `n` may be negative.
    ///
    /// # Panics
    /// Panics if the result leaves chrono's representable range (±262,000 years).
    pub fn add_days(self, n: i64) -> DateDay {
        self.checked_add_days(n).expect("date arithmetic overflow")
    }

    pub fn checked_add_days(self, n: i64) -> Option<DateDay> {
        let d = if n >= 0 {
            self.0.checked_add_days(Days::new(n as u64))
        } else {
            self.0.checked_sub_days(Days::new(n.unsigned_abs()))
        };
        d.map(DateDay)
    }

    /// Signed number of days from `self` to `other`.
    pub fn days_until(self, other: DateDay) -> i64 {
        (other.0 - self.0).num_days()
    }
}

impl fmt::Display for DateDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format("%Y-%m-%d"))
    }
}

impl FromStr for DateDay {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        // chrono accepts some non-padded forms; the file formats require YYYY-MM-DD.
        if s.len() != 10 || s.as_bytes()[4] != b'-' || s.as_bytes()[7] != b'-' {
            return Err(Error::Validation(format!("invalid date {s:?}, expected YYYY-MM-DD")));
        }
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map(DateDay)
            .map_err(|e| Error::Validation(format!("invalid date {s:?}: {e}")))
    }
}

impl Serialize for DateDay {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DateDay {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Contiguous daily values starting at `start`.
///
/// `offset` records the total constant added by [`DailySeries::shift_constant`].
/// The unshifted values are kept alongside, so shifting back to a zero offset
/// restores them bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct DailySeries {
    start: DateDay,
    values: Vec<f64>,
    base: Vec<f64>,
    offset: f64,
}

impl DailySeries {
    pub fn new(start: DateDay, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Validation("series must hold at least one day".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value at {}",
                start.add_days(i as i64)
            )));
        }
        Ok(DailySeries {
            start,
            base: values.clone(),
            values,
            offset: 0.0,
        })
    }

    /// Raw count series; every value must be non-negative.
    pub fn from_counts(start: DateDay, values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| *v < 0.0) {
            return Err(Error::Validation(format!(
                "negative count at {}",
                start.add_days(i as i64)
            )));
        }
        Self::new(start, values)
    }

    /// All-zero series covering `[from, to]`.
    pub fn zeros(from: DateDay, to: DateDay) -> Result<Self> {
        let n = from.days_until(to);
        if n < 0 {
            return Err(Error::Validation(format!("empty range {from}..{to}")));
        }
        Self::new(from, vec![0.0; n as usize + 1])
    }

    pub fn start(&self) -> DateDay {
        self.start
    }

    pub fn end(&self) -> DateDay {
        self.start.add_days(self.values.len() as i64 - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn covers(&self, from: DateDay, to: DateDay) -> bool {
        from <= to && from >= self.start && to <= self.end()
    }

    pub fn get(&self, date: DateDay) -> Option<f64> {
        let i = self.start.days_until(date);
        if i < 0 {
            return None;
        }
        self.values.get(i as usize).copied()
    }

    pub fn dates(&self) -> impl Iterator<Item = DateDay> + '_ {
        (0..self.values.len()).map(move |i| self.start.add_days(i as i64))
    }

    /// Copy of the days `[from, to]` inclusive.
    pub fn slice(&self, from: DateDay, to: DateDay) -> Result<DailySeries> {
        if from > to {
            return Err(Error::Validation(format!("slice bounds reversed: {from} > {to}")));
        }
        if !self.covers(from, to) {
            return Err(Error::Range(format!(
                "requested {from}..{to} but series covers {}..{}; missing {}",
                self.start,
                self.end(),
                describe_missing(self.start, self.end(), from, to)
            )));
        }
        let i = self.start.days_until(from) as usize;
        let j = self.start.days_until(to) as usize;
        Ok(DailySeries {
            start: from,
            values: self.values[i..=j].to_vec(),
            base: self.base[i..=j].to_vec(),
            offset: self.offset,
        })
    }

    /// Adds `c` to every value and records it in the offset.
    pub fn shift_constant(&self, c: f64) -> DailySeries {
        let offset = self.offset + c;
        let values = if offset == 0.0 {
            self.base.clone()
        } else {
            self.base.iter().map(|v| v + offset).collect()
        };
        DailySeries {
            start: self.start,
            values,
            base: self.base.clone(),
            offset,
        }
    }

    /// Values with the recorded offset removed.
    pub fn original_values(&self) -> &[f64] {
        &self.base
    }

    /// Window `[event - pre_days, event + post_days - 1]` displaced `lag_days`
    /// into the past, falling back to `fallback_lag_days` when any day of the
    /// primary window is missing. Negative lags displace into the future.
    pub fn lag_window(
        &self,
        event: DateDay,
        lag_days: i64,
        pre_days: usize,
        post_days: usize,
        fallback_lag_days: i64,
    ) -> Result<LaggedWindow> {
        let len = pre_days + post_days;
        if len == 0 {
            return Err(Error::Validation("lag window must span at least one day".into()));
        }
        let window = |lag: i64| {
            let from = event.add_days(-(pre_days as i64) - lag);
            (from, from.add_days(len as i64 - 1))
        };
        let (from, to) = window(lag_days);
        if self.covers(from, to) {
            return Ok(LaggedWindow {
                series: self.slice(from, to)?,
                lag_days,
                used_fallback: false,
            });
        }
        let (fb_from, fb_to) = window(fallback_lag_days);
        if self.covers(fb_from, fb_to) {
            return Ok(LaggedWindow {
                series: self.slice(fb_from, fb_to)?,
                lag_days: fallback_lag_days,
                used_fallback: true,
            });
        }
        Err(Error::DataAvailability(format!(
            "lag {lag_days} window {from}..{to} (missing {}) and fallback lag {fallback_lag_days} window {fb_from}..{fb_to} (missing {}) both unavailable",
            describe_missing(self.start, self.end(), from, to),
            describe_missing(self.start, self.end(), fb_from, fb_to),
        )))
    }
}

/// Result of [`DailySeries::lag_window`], recording which lag supplied the data.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedWindow {
    pub series: DailySeries,
    pub lag_days: i64,
    pub used_fallback: bool,
}

fn describe_missing(have_from: DateDay, have_to: DateDay, from: DateDay, to: DateDay) -> String {
    let mut parts = Vec::new();
    if from < have_from {
        let end = to.min(have_from.add_days(-1));
        parts.push(format!("{from}..{end}"));
    }
    if to > have_to {
        let begin = from.max(have_to.add_days(1));
        parts.push(format!("{begin}..{to}"));
    }
    parts.join(", ")
}

/// Stacks the `[from, to]` window of each series as a column.
pub fn align(series: &[&DailySeries], from: DateDay, to: DateDay) -> Result<DMatrix<f64>> {
    if from > to {
        return Err(Error::Validation(format!("align bounds reversed: {from} > {to}")));
    }
    let rows = from.days_until(to) as usize + 1;
    let mut m = DMatrix::zeros(rows, series.len());
    for (j, s) in series.iter().enumerate() {
        let window = s.slice(from, to).map_err(|e| match e {
            Error::Range(msg) => Error::Range(format!("series #{j}: {msg}")),
            other => other,
        })?;
        for (r, v) in window.values().iter().enumerate() {
            m[(r, j)] = *v;
        }
    }
    Ok(m)
}

#[derive(Debug, Deserialize)]
struct SeriesRow {
    date: String,
    value: f64,
}

/// Parses the `date,value` CSV format. Interior gaps are zero-filled; rows
/// must be strictly ascending and values non-negative.
pub fn parse_series_csv(text: &str, source: &str) -> Result<DailySeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(source, e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "date" || &headers[1] != "value" {
        return Err(Error::format(source, "header must be `date,value`"));
    }
    let mut start: Option<DateDay> = None;
    let mut values: Vec<f64> = Vec::new();
    for (line, row) in rdr.deserialize::<SeriesRow>().enumerate() {
        let row = row.map_err(|e| Error::format(source, format!("row {}: {e}", line + 2)))?;
        let date: DateDay = row
            .date
            .parse()
            .map_err(|e: Error| Error::format(source, format!("row {}: {e}", line + 2)))?;
        if !row.value.is_finite() || row.value < 0.0 {
            return Err(Error::format(
                source,
                format!("row {}: value must be finite and non-negative", line + 2),
            ));
        }
        match start {
            None => {
                start = Some(date);
                values.push(row.value);
            }
            Some(s) => {
                let idx = s.days_until(date);
                if idx < values.len() as i64 {
                    return Err(Error::format(
                        source,
                        format!("row {}: dates must be strictly ascending ({date})", line + 2),
                    ));
                }
                // cap gap fill so a hostile date cannot allocate unbounded memory
                if idx > 200_000 {
                    return Err(Error::format(source, format!("row {}: gap too large", line + 2)));
                }
                values.resize(idx as usize, 0.0);
                values.push(row.value);
            }
        }
    }
    let start = start.ok_or_else(|| Error::format(source, "no data rows"))?;
    DailySeries::new(start, values)
}

pub fn read_series_csv(path: &Path) -> Result<DailySeries> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_series_csv(&text, &path.display().to_string())
}

pub fn write_series_csv<W: Write>(s: &DailySeries, mut out: W) -> std::io::Result<()> {
    writeln!(out, "date,value")?;
    for (d, v) in s.dates().zip(s.values()) {
        writeln!(out, "{d},{v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(y: i32, m: u32, day: u32) -> DateDay {
        DateDay::from_ymd(y, m, day).unwrap()
    }

    fn jan() -> DailySeries {
        DailySeries::new(d(2017, 1, 1), (1..=31).map(f64::from).collect()).unwrap()
    }

    #[test]
    fn slice_single_day() {
        let s = jan().slice(d(2017, 1, 5), d(2017, 1, 5)).unwrap();
        assert_eq!(s.values(), &[5.0]);
        assert_eq!(s.start(), d(2017, 1, 5));
    }

    #[test]
    fn slice_full_span_is_identity() {
        let s = jan();
        assert_eq!(s.slice(s.start(), s.end()).unwrap(), s);
    }

    #[test]
    fn slice_positional() {
        // 2017-01-02 is a Monday
        let s = DailySeries::new(d(2017, 1, 2), vec![3.0, 1.0, 4.0, 1.0, 5.0]).unwrap();
        let w = s.slice(d(2017, 1, 3), d(2017, 1, 5)).unwrap();
        assert_eq!(w.values(), &[1.0, 4.0, 1.0]);
    }

    #[test]
    fn slice_out_of_range_names_missing_dates() {
        let err = jan().slice(d(2016, 12, 30), d(2017, 1, 2)).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Range(_)));
        assert!(msg.contains("2016-12-30..2016-12-31"), "{msg}");
    }

    #[test]
    fn shift_examples() {
        let z = DailySeries::new(d(2017, 1, 1), vec![0.0; 3]).unwrap();
        assert_eq!(z.shift_constant(1000.0).values(), &[1000.0; 3]);
        assert_eq!(z.shift_constant(1000.0).offset(), 1000.0);
        let s = DailySeries::new(d(2017, 1, 1), vec![2.0, 5.0]).unwrap();
        assert_eq!(s.shift_constant(1000.0).values(), &[1002.0, 1005.0]);
        assert_eq!(s.shift_constant(0.0), s);
    }

    #[test]
    fn lag_window_on_ramp() {
        let start = d(2016, 1, 1);
        let s = DailySeries::new(start, (0..500).map(f64::from).collect()).unwrap();
        let event = start.add_days(450);
        let w = s.lag_window(event, 365, 77, 7, -365).unwrap();
        assert!(!w.used_fallback);
        assert_eq!(w.series.len(), 84);
        let expected: Vec<f64> = (450 - 365 - 77..=450 - 365 + 6).map(|i| i as f64).collect();
        assert_eq!(w.series.values(), expected.as_slice());
    }

    #[test]
    fn lag_window_falls_back_to_future() {
        let start = d(2016, 1, 1);
        let s = DailySeries::new(start, (0..600).map(f64::from).collect()).unwrap();
        // primary window would start before the series
        let event = start.add_days(100);
        let w = s.lag_window(event, 365, 77, 7, -365).unwrap();
        assert!(w.used_fallback);
        assert_eq!(w.lag_days, -365);
        assert_eq!(w.series.values()[0], (100 + 365 - 77) as f64);
    }

    #[test]
    fn lag_window_both_unavailable() {
        let s = jan();
        let err = s.lag_window(d(2017, 1, 20), 365, 7, 7, -365).unwrap_err();
        assert!(matches!(err, Error::DataAvailability(_)));
    }

    #[test]
    fn lag_zero_is_event_window() {
        let s = jan();
        let event = d(2017, 1, 15);
        let w = s.lag_window(event, 0, 10, 7, 0).unwrap();
        assert_eq!(w.series, s.slice(d(2017, 1, 5), d(2017, 1, 21)).unwrap());
    }

    #[test]
    fn align_reports_offending_series() {
        let a = jan();
        let b = DailySeries::new(d(2017, 1, 10), vec![1.0; 5]).unwrap();
        let err = align(&[&a, &b], d(2017, 1, 1), d(2017, 1, 3)).unwrap_err();
        assert!(err.to_string().contains("series #1"));
    }

    #[test]
    fn csv_zero_fills_gaps() {
        let s = parse_series_csv("date,value\n2017-01-01,3\n2017-01-04,5\n", "t").unwrap();
        assert_eq!(s.values(), &[3.0, 0.0, 0.0, 5.0]);
    }

    #[test]
    fn csv_rejects_bad_input() {
        for text in [
            "",
            "day,value\n2017-01-01,1\n",
            "date,value\n",
            "date,value\n2017-01-02,1\n2017-01-01,1\n",
            "date,value\n2017-01-01,-1\n",
            "date,value\n2017-1-1,1\n",
            "date,value\n2017-01-01,NaN\n",
        ] {
            assert!(parse_series_csv(text, "t").is_err(), "{text:?}");
        }
    }

    #[test]
    fn csv_round_trip() {
        let s = DailySeries::new(d(2017, 2, 27), vec![1.0, 0.5, 2.0, 7.0]).unwrap();
        let mut buf = Vec::new();
        write_series_csv(&s, &mut buf).unwrap();
        let back = parse_series_csv(std::str::from_utf8(&buf).unwrap(), "t").unwrap();
        assert_eq!(back, s);
    }

    fn arb_series() -> impl Strategy<Value = DailySeries> {
        (0i64..2000, prop::collection::vec(0.0f64..1e6, 1..80)).prop_map(|(off, v)| {
            DailySeries::new(d(2015, 1, 1).add_days(off), v).unwrap()
        })
    }

    proptest! {
        #[test]
        fn slice_composition(s in arb_series(), a in 0usize..80, b in 0usize..80, c in 0usize..80, e in 0usize..80) {
            let n = s.len();
            let mut outer = [a % n, b % n];
            outer.sort();
            let span = outer[1] - outer[0];
            let mut inner = [outer[0] + c % (span + 1), outer[0] + e % (span + 1)];
            inner.sort();
            let at = |i: usize| s.start().add_days(i as i64);
            let twice = s.slice(at(outer[0]), at(outer[1])).unwrap()
                .slice(at(inner[0]), at(inner[1])).unwrap();
            prop_assert_eq!(twice, s.slice(at(inner[0]), at(inner[1])).unwrap());
        }

        #[test]
        fn shift_round_trip_is_bitwise(s in arb_series(), a in prop::sample::select(vec![0.0, 1.0, 1000.0, 0.5, 64.0, 1024.0])) {
            let back = s.shift_constant(a).shift_constant(-a);
            for (x, y) in back.values().iter().zip(s.values()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }

        #[test]
        fn align_matches_lookup(s1 in arb_series(), shift in -40i64..40, v in prop::collection::vec(0.0f64..1e6, 40..80)) {
            let s2 = DailySeries::new(s1.start().add_days(shift), v).unwrap();
            let from = s1.start().max(s2.start());
            let to = s1.end().min(s2.end());
            prop_assume!(from <= to);
            let m = align(&[&s1, &s2], from, to).unwrap();
            for r in 0..m.nrows() {
                let date = from.add_days(r as i64);
                prop_assert_eq!(m[(r, 0)], s1.get(date).unwrap());
                prop_assert_eq!(m[(r, 1)], s2.get(date).unwrap());
            }
        }
    }
}
