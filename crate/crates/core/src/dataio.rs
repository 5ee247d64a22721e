//! Price ingestion, daylight-saving normalization and the daily price panel.
//!
//! Raw input is one record per delivery hour in local market time. A spring
//! clock change leaves a date with 23 records (hour 02 missing), an autumn
//! change a date with 25 (hour 02 twice). [`dst_normalize`] turns either case
//! into a regular 24-value row.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::ops::Range;
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::DataError;

pub const HOURS: usize = 24;

/// Hour index affected by clock changes.
const DST_HOUR: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRecord {
    pub date: NaiveDate,
    pub hour: u32,
    pub price: f64,
}

/// Hourly records in delivery order, before clock-change normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    records: Vec<RawRecord>,
}

impl RawSeries {
    /// Validates ordering, contiguity and finiteness of the records.
    pub fn new(records: Vec<RawRecord>) -> Result<Self, DataError> {
        for (i, rec) in records.iter().enumerate() {
            check_record(rec, i + 1)?;
        }
        for (i, pair) in records.windows(2).enumerate() {
            check_successor(&pair[0], &pair[1], i + 2)?;
        }
        check_duplicates(&records)?;
        Ok(Self { records })
    }

    pub fn records(&self) -> &[RawRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn check_record(rec: &RawRecord, line: usize) -> Result<(), DataError> {
    if rec.hour >= HOURS as u32 {
        return Err(DataError::Malformed { line, message: format!("hour {} outside 0..23", rec.hour) });
    }
    if !rec.price.is_finite() {
        return Err(DataError::Malformed { line, message: format!("non-finite price {}", rec.price) });
    }
    Ok(())
}

fn check_successor(prev: &RawRecord, next: &RawRecord, line: usize) -> Result<(), DataError> {
    if next.date == prev.date {
        if next.hour < prev.hour {
            return Err(DataError::OutOfOrder { line, date: next.date, hour: next.hour });
        }
        return Ok(());
    }
    if next.date < prev.date {
        return Err(DataError::OutOfOrder { line, date: next.date, hour: next.hour });
    }
    if prev.date.succ_opt() != Some(next.date) {
        return Err(DataError::Gap { after: prev.date, next: next.date });
    }
    Ok(())
}

fn check_duplicates(records: &[RawRecord]) -> Result<(), DataError> {
    let mut dup_date: Option<NaiveDate> = None;
    for pair in records.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.date == b.date && a.hour == b.hour {
            if dup_date == Some(a.date) {
                return Err(DataError::Duplicate { date: a.date, hour: a.hour });
            }
            dup_date = Some(a.date);
        }
    }
    Ok(())
}

/// Parses a `YYYY-MM-DDTHH:00` timestamp.
pub fn parse_timestamp(text: &str) -> Result<(NaiveDate, u32), String> {
    let (date, time) = text.split_once('T').ok_or_else(|| format!("timestamp {text:?} lacks 'T'"))?;
    let date = NaiveDate::parse_from_str(date, "%Y-%m-%d").map_err(|e| format!("bad date {date:?}: {e}"))?;
    let mut parts = time.split(':');
    let hour = parts.next().unwrap_or_default();
    if hour.len() != 2 {
        return Err(format!("bad hour in {text:?}"));
    }
    let hour: u32 = hour.parse().map_err(|_| format!("bad hour in {text:?}"))?;
    let mut rest = 0;
    for part in parts {
        rest += 1;
        if part != "00" || rest > 2 {
            return Err(format!("timestamp {text:?} must be on the hour"));
        }
    }
    if rest == 0 {
        return Err(format!("timestamp {text:?} lacks minutes"));
    }
    Ok((date, hour))
}

/// Column layout of a raw CSV file.
#[derive(Debug, Clone)]
pub struct CsvColumns {
    pub timestamp: String,
    pub price: String,
}

impl Default for CsvColumns {
    fn default() -> Self {
        Self { timestamp: "timestamp".into(), price: "price".into() }
    }
}

pub fn ingest_csv(path: impl AsRef<Path>, columns: &CsvColumns) -> Result<RawSeries, DataError> {
    let file = std::fs::File::open(path)?;
    read_raw_csv(file, columns)
}

pub fn read_raw_csv<R: Read>(reader: R, columns: &CsvColumns) -> Result<RawSeries, DataError> {
    let mut lines = BufReader::new(reader).lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(DataError::Empty),
    };
    let names: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    let find = |name: &str| {
        names.iter().position(|n| *n == name).ok_or_else(|| DataError::Malformed {
            line: 1,
            message: format!("header lacks column {name:?}"),
        })
    };
    let ts_col = find(&columns.timestamp)?;
    let price_col = find(&columns.price)?;

    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let malformed = |message: String| DataError::Malformed { line: line_no, message };
        let ts = fields.get(ts_col).ok_or_else(|| malformed("missing timestamp field".into()))?;
        let price = fields.get(price_col).ok_or_else(|| malformed("missing price field".into()))?;
        let (date, hour) = parse_timestamp(ts).map_err(malformed)?;
        let price: f64 = price.parse().map_err(|_| malformed(format!("price {price:?} is not a number")))?;
        let rec = RawRecord { date, hour, price };
        check_record(&rec, line_no)?;
        if let Some(prev) = records.last() {
            check_successor(prev, &rec, line_no)?;
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(DataError::Empty);
    }
    check_duplicates(&records)?;
    Ok(RawSeries { records })
}

/// Sunday-based weekday enumeration: 0 = Sunday, ..., 6 = Saturday.
pub fn weekday_of(date: NaiveDate) -> usize {
    date.weekday().num_days_from_sunday() as usize
}

pub fn weekday_indicator(date: NaiveDate, k: usize) -> Result<u8, DataError> {
    if k > 6 {
        return Err(DataError::Weekday(k));
    }
    Ok(u8::from(weekday_of(date) == k))
}

pub const WEEKDAY_NAMES: [&str; 7] = ["Sun", "Mon", "Tue", "Wed", "Thu", "Fri", "Sat"];

/// D days by 24 hours of prices on consecutive calendar dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePanel {
    dates: Vec<NaiveDate>,
    prices: Vec<[f64; HOURS]>,
}

impl PricePanel {
    pub fn new(dates: Vec<NaiveDate>, prices: Vec<[f64; HOURS]>) -> Result<Self, DataError> {
        if dates.len() != prices.len() {
            return Err(DataError::Invalid(format!(
                "{} dates but {} price rows",
                dates.len(),
                prices.len()
            )));
        }
        for pair in dates.windows(2) {
            if pair[0].succ_opt() != Some(pair[1]) {
                return Err(DataError::Gap { after: pair[0], next: pair[1] });
            }
        }
        for (date, row) in dates.iter().zip(&prices) {
            if let Some(h) = row.iter().position(|v| !v.is_finite()) {
                return Err(DataError::Invalid(format!("{date}: non-finite price at hour {h:02}")));
            }
        }
        Ok(Self { dates, prices })
    }

    /// Panel of consecutive days starting at `start`.
    pub fn from_rows(start: NaiveDate, prices: Vec<[f64; HOURS]>) -> Result<Self, DataError> {
        let dates = (0..prices.len() as u64)
            .map(|i| start.checked_add_days(Days::new(i)).ok_or_else(|| DataError::Invalid("date overflow".into())))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(dates, prices)
    }

    /// Reshapes an hourly series `P_t`, `t = 24 d + h`, into a panel.
    pub fn from_hourly(start: NaiveDate, values: &[f64]) -> Result<Self, DataError> {
        if !values.len().is_multiple_of(HOURS) {
            return Err(DataError::Invalid(format!("{} values is not a whole number of days", values.len())));
        }
        let rows = values
            .chunks_exact(HOURS)
            .map(|c| {
                let mut row = [0.0; HOURS];
                row.copy_from_slice(c);
                row
            })
            .collect();
        Self::from_rows(start, rows)
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn rows(&self) -> &[[f64; HOURS]] {
        &self.prices
    }

    pub fn row(&self, d: usize) -> &[f64; HOURS] {
        &self.prices[d]
    }

    pub fn price(&self, d: usize, h: usize) -> f64 {
        self.prices[d][h]
    }

    pub fn weekday(&self, d: usize) -> usize {
        weekday_of(self.dates[d])
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.dates.first().copied()
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.dates.last().copied()
    }

    /// Hourly series of one hour of the day.
    pub fn column(&self, h: usize) -> Vec<f64> {
        self.prices.iter().map(|r| r[h]).collect()
    }

    /// Flattened hourly series, index `24 d + h`.
    pub fn hourly(&self) -> Vec<f64> {
        self.prices.iter().flatten().copied().collect()
    }

    pub fn slice(&self, range: Range<usize>) -> PricePanel {
        PricePanel { dates: self.dates[range.clone()].to_vec(), prices: self.prices[range].to_vec() }
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("date");
        for h in 0..HOURS {
            let _ = write!(out, ",h{h:02}");
        }
        out.push('\n');
        for (date, row) in self.dates.iter().zip(&self.prices) {
            let _ = write!(out, "{}", date.format("%Y-%m-%d"));
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn write_panel_csv<W: Write>(panel: &PricePanel, mut writer: W) -> std::io::Result<()> {
    writer.write_all(panel.to_csv_string().as_bytes())
}

pub fn read_panel_csv<R: Read>(reader: R) -> Result<PricePanel, DataError> {
    let mut lines = BufReader::new(reader).lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(DataError::Empty),
    };
    let expected: Vec<String> =
        std::iter::once("date".to_string()).chain((0..HOURS).map(|h| format!("h{h:02}"))).collect();
    let names: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    if names != expected {
        return Err(DataError::Malformed { line: 1, message: "expected header date,h00,...,h23".into() });
    }
    let mut dates = Vec::new();
    let mut prices = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let malformed = |message: String| DataError::Malformed { line: line_no, message };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != HOURS + 1 {
            return Err(malformed(format!("expected 25 fields, found {}", fields.len())));
        }
        let date = NaiveDate::parse_from_str(fields[0], "%Y-%m-%d")
            .map_err(|e| malformed(format!("bad date {:?}: {e}", fields[0])))?;
        let mut row = [0.0; HOURS];
        for (h, field) in fields[1..].iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| malformed(format!("price {field:?} is not a number")))?;
            if !v.is_finite() {
                return Err(malformed(format!("non-finite price {field:?}")));
            }
            row[h] = v;
        }
        dates.push(date);
        prices.push(row);
    }
    if dates.is_empty() {
        return Err(DataError::Empty);
    }
    PricePanel::new(dates, prices)
}

pub fn load_panel(path: impl AsRef<Path>) -> Result<PricePanel, DataError> {
    read_panel_csv(std::fs::File::open(path)?)
}

/// Maps each date to exactly 24 values: a missing hour 02 is the midpoint of
/// hours 01 and 03, a doubled hour 02 is the mean of its two records.
pub fn dst_normalize(raw: &RawSeries) -> Result<PricePanel, DataError> {
    let mut dates = Vec::new();
    let mut prices = Vec::new();
    let records = raw.records();
    let mut start = 0;
    while start < records.len() {
        let date = records[start].date;
        let end = start + records[start..].iter().take_while(|r| r.date == date).count();
        prices.push(normalize_day(date, &records[start..end])?);
        dates.push(date);
        start = end;
    }
    if dates.is_empty() {
        return Err(DataError::Empty);
    }
    PricePanel::new(dates, prices)
}

fn normalize_day(date: NaiveDate, day: &[RawRecord]) -> Result<[f64; HOURS], DataError> {
    let hours: Vec<u32> = day.iter().map(|r| r.hour).collect();
    let mut row = [f64::NAN; HOURS];
    match day.len() {
        24 => {
            if hours.iter().enumerate().any(|(i, &h)| h != i as u32) {
                return Err(DataError::DstHour { date });
            }
            for (slot, rec) in row.iter_mut().zip(day) {
                *slot = rec.price;
            }
        }
        23 => {
            let expected = (0..HOURS as u32).filter(|&h| h != DST_HOUR);
            if !hours.iter().copied().eq(expected) {
                return Err(DataError::DstHour { date });
            }
            for rec in day {
                row[rec.hour as usize] = rec.price;
            }
            let (h1, h3) = (DST_HOUR as usize - 1, DST_HOUR as usize + 1);
            row[DST_HOUR as usize] = 0.5 * (row[h1] + row[h3]);
        }
        25 => {
            let expected = (0..HOURS as u32).flat_map(|h| if h == DST_HOUR { vec![h, h] } else { vec![h] });
            if !hours.iter().copied().eq(expected) {
                return Err(DataError::DstHour { date });
            }
            let doubled: Vec<f64> = day.iter().filter(|r| r.hour == DST_HOUR).map(|r| r.price).collect();
            for rec in day {
                row[rec.hour as usize] = rec.price;
            }
            row[DST_HOUR as usize] = 0.5 * (doubled[0] + doubled[1]);
        }
        count => return Err(DataError::HourCount { date, count }),
    }
    Ok(row)
}

/// Sample mean `mu_h` of each hour over a window of rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourMeans(pub [f64; HOURS]);

impl HourMeans {
    pub fn get(&self, h: usize) -> f64 {
        self.0[h]
    }
}

/// Column means over `window` and the centered rows `Y = P - mu`.
pub fn demean(panel: &PricePanel, window: Range<usize>) -> Result<(HourMeans, Vec<[f64; HOURS]>), DataError> {
    if window.is_empty() || window.end > panel.len() {
        return Err(DataError::Invalid(format!("window {window:?} is empty or exceeds {} rows", panel.len())));
    }
    let rows = &panel.rows()[window];
    let n = rows.len() as f64;
    let mut mu = [0.0; HOURS];
    for row in rows {
        for (m, v) in mu.iter_mut().zip(row) {
            *m += v;
        }
    }
    mu.iter_mut().for_each(|m| *m /= n);
    let centered = rows
        .iter()
        .map(|row| {
            let mut y = [0.0; HOURS];
            for h in 0..HOURS {
                y[h] = row[h] - mu[h];
            }
            y
        })
        .collect();
    Ok((HourMeans(mu), centered))
}
