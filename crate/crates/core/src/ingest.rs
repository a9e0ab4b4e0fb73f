//! Trip record parsing, cleaning and hour-of-day slicing.
//!
//! Parsing and cleaning are separate steps: [`parse_trips`] turns CSV rows
//! into [`RawTrip`]s without judging them, [`clean_trips`] applies the
//! cleaning rules and accounts for every dropped row in [`CleaningStats`].

use std::collections::{BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, NaiveDateTime, Timelike, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TIMESTAMP_FORMATS: &[&str] = &["%d/%m/%Y %H:%M", "%d/%m/%Y %H:%M:%S", "%Y-%m-%d %H:%M:%S"];

/// One parsed but uncleaned rental row.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrip {
    pub rental_id: i64,
    pub duration: i64,
    pub bike_id: Option<i64>,
    pub start_time: NaiveDateTime,
    pub end_time: NaiveDateTime,
    pub start_station_id: Option<i64>,
    pub end_station_id: Option<i64>,
    pub start_station_name: String,
    pub end_station_name: String,
}

/// A rental that survived cleaning.
#[derive(Debug, Clone, PartialEq)]
pub struct TripRecord {
    pub rental_id: i64,
    pub duration: i64,
    pub bike_id: i64,
    pub start_time: NaiveDateTime,
    pub end_time: NaiveDateTime,
    pub start_station_id: i64,
    pub end_station_id: i64,
    pub start_station_name: String,
    pub end_station_name: String,
}

impl TripRecord {
    pub fn start_hour(&self) -> u32 {
        self.start_time.hour()
    }
}

impl From<TripRecord> for RawTrip {
    fn from(t: TripRecord) -> Self {
        RawTrip {
            rental_id: t.rental_id,
            duration: t.duration,
            bike_id: Some(t.bike_id),
            start_time: t.start_time,
            end_time: t.end_time,
            start_station_id: Some(t.start_station_id),
            end_station_id: Some(t.end_station_id),
            start_station_name: t.start_station_name,
            end_station_name: t.end_station_name,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningStats {
    pub total_read: u64,
    pub dropped_repair: u64,
    pub dropped_negative_or_no_destination: u64,
    pub dropped_no_origin: u64,
    pub dropped_no_bike_id: u64,
    pub dropped_weekend: u64,
    pub retained: u64,
}

impl CleaningStats {
    pub fn dropped(&self) -> u64 {
        self.dropped_repair
            + self.dropped_negative_or_no_destination
            + self.dropped_no_origin
            + self.dropped_no_bike_id
            + self.dropped_weekend
    }

    pub fn reconciles(&self) -> bool {
        self.retained + self.dropped() == self.total_read
    }
}

/// Maps trip fields to CSV header names. Defaults follow the TfL export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnSchema {
    pub rental_id: String,
    pub duration: String,
    pub bike_id: String,
    pub end_date: String,
    pub end_station_id: String,
    pub end_station_name: String,
    pub start_date: String,
    pub start_station_id: String,
    pub start_station_name: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        ColumnSchema {
            rental_id: "Rental Id".into(),
            duration: "Duration".into(),
            bike_id: "Bike Id".into(),
            end_date: "End Date".into(),
            end_station_id: "EndStation Id".into(),
            end_station_name: "EndStation Name".into(),
            start_date: "Start Date".into(),
            start_station_id: "StartStation Id".into(),
            start_station_name: "StartStation Name".into(),
        }
    }
}

/// Ingestion settings, usually loaded from a TOML file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub repair_station_ids: BTreeSet<i64>,
    pub drop_weekends: bool,
    pub columns: ColumnSchema,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            repair_station_ids: BTreeSet::new(),
            drop_weekends: true,
            columns: ColumnSchema::default(),
        }
    }
}

impl IngestConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Schema {
            context: "config".into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Schema { message, .. } => Error::Schema {
                context: path.display().to_string(),
                message,
            },
            other => other,
        })
    }
}

/// A data row that could not be turned into a [`RawTrip`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based line number in the source, counting the header as line 1.
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseReport {
    pub trips: Vec<RawTrip>,
    pub errors: Vec<RowError>,
}

struct ColumnIndex {
    rental_id: usize,
    duration: usize,
    bike_id: usize,
    end_date: usize,
    end_station_id: usize,
    end_station_name: usize,
    start_date: usize,
    start_station_id: usize,
    start_station_name: usize,
}

impl ColumnIndex {
    fn resolve(headers: &csv::StringRecord, schema: &ColumnSchema) -> Result<Self> {
        let lookup: HashMap<&str, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().trim_start_matches('\u{feff}'), i))
            .collect();
        let find = |name: &str| {
            lookup.get(name).copied().ok_or_else(|| Error::MissingColumn {
                context: "trips".into(),
                column: name.to_string(),
            })
        };
        Ok(ColumnIndex {
            rental_id: find(&schema.rental_id)?,
            duration: find(&schema.duration)?,
            bike_id: find(&schema.bike_id)?,
            end_date: find(&schema.end_date)?,
            end_station_id: find(&schema.end_station_id)?,
            end_station_name: find(&schema.end_station_name)?,
            start_date: find(&schema.start_date)?,
            start_station_id: find(&schema.start_station_id)?,
            start_station_name: find(&schema.start_station_name)?,
        })
    }
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
}

fn optional_int(s: &str) -> Option<i64> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    s.parse::<i64>()
        .ok()
        .or_else(|| s.parse::<f64>().ok().filter(|f| f.fract() == 0.0).map(|f| f as i64))
}

fn required_int(s: &str, field: &str) -> std::result::Result<i64, String> {
    optional_int(s).ok_or_else(|| format!("{field}: cannot parse {s:?} as integer"))
}

fn required_time(s: &str, field: &str) -> std::result::Result<NaiveDateTime, String> {
    parse_timestamp(s).ok_or_else(|| format!("{field}: cannot parse {s:?} as DD/MM/YYYY HH:MM"))
}

fn parse_row(rec: &csv::StringRecord, idx: &ColumnIndex) -> std::result::Result<RawTrip, String> {
    let get = |i: usize| rec.get(i).unwrap_or("");
    if rec.len() <= idx.max() {
        return Err(format!("expected at least {} fields, found {}", idx.max() + 1, rec.len()));
    }
    Ok(RawTrip {
        rental_id: required_int(get(idx.rental_id), "rental id")?,
        duration: required_int(get(idx.duration), "duration")?,
        bike_id: optional_int(get(idx.bike_id)),
        start_time: required_time(get(idx.start_date), "start date")?,
        end_time: required_time(get(idx.end_date), "end date")?,
        start_station_id: optional_int(get(idx.start_station_id)),
        end_station_id: optional_int(get(idx.end_station_id)),
        start_station_name: get(idx.start_station_name).trim().to_string(),
        end_station_name: get(idx.end_station_name).trim().to_string(),
    })
}

impl ColumnIndex {
    fn max(&self) -> usize {
        [
            self.rental_id,
            self.duration,
            self.bike_id,
            self.end_date,
            self.end_station_id,
            self.end_station_name,
            self.start_date,
            self.start_station_id,
            self.start_station_name,
        ]
        .into_iter()
        .max()
        .unwrap_or(0)
    }
}

/// Parses a trip CSV. A missing header or missing mapped column is fatal;
/// malformed data rows are skipped and recorded in the report.
pub fn parse_trips<R: Read>(source: R, schema: &ColumnSchema) -> Result<ParseReport> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || headers.iter().all(|h| h.trim().is_empty()) {
        return Err(Error::Schema {
            context: "trips".into(),
            message: "missing header row".into(),
        });
    }
    let idx = ColumnIndex::resolve(&headers, schema)?;

    let mut report = ParseReport::default();
    let mut seen_ids = std::collections::HashSet::new();
    for (row, rec) in reader.records().enumerate() {
        let line = row as u64 + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                report.errors.push(RowError {
                    line: e.position().map(|p| p.line()).unwrap_or(line),
                    message: e.to_string(),
                });
                continue;
            }
        };
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        match parse_row(&rec, &idx) {
            Ok(trip) if !seen_ids.insert(trip.rental_id) => report.errors.push(RowError {
                line,
                message: format!("duplicate rental id {}", trip.rental_id),
            }),
            Ok(trip) => report.trips.push(trip),
            Err(message) => report.errors.push(RowError { line, message }),
        }
    }
    Ok(report)
}

fn is_weekend(t: &NaiveDateTime) -> bool {
    matches!(t.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Applies the cleaning rules in fixed order (repair station, missing
/// destination or negative duration, missing origin, missing bike id,
/// weekend) so every dropped trip is charged to exactly one rule.
pub fn clean_trips<I>(
    trips: I,
    repair_station_ids: &BTreeSet<i64>,
    drop_weekends: bool,
) -> (Vec<TripRecord>, CleaningStats)
where
    I: IntoIterator<Item = RawTrip>,
{
    let mut stats = CleaningStats::default();
    let mut kept = Vec::new();
    for t in trips {
        stats.total_read += 1;
        let at_repair = |id: Option<i64>| id.is_some_and(|id| repair_station_ids.contains(&id));
        if at_repair(t.start_station_id) || at_repair(t.end_station_id) {
            stats.dropped_repair += 1;
            continue;
        }
        let Some(end_station_id) = t.end_station_id.filter(|_| t.duration >= 0) else {
            stats.dropped_negative_or_no_destination += 1;
            continue;
        };
        let Some(start_station_id) = t.start_station_id else {
            stats.dropped_no_origin += 1;
            continue;
        };
        let Some(bike_id) = t.bike_id else {
            stats.dropped_no_bike_id += 1;
            continue;
        };
        if drop_weekends && is_weekend(&t.start_time) {
            stats.dropped_weekend += 1;
            continue;
        }
        stats.retained += 1;
        kept.push(TripRecord {
            rental_id: t.rental_id,
            duration: t.duration,
            bike_id,
            start_time: t.start_time,
            end_time: t.end_time,
            start_station_id,
            end_station_id,
            start_station_name: t.start_station_name,
            end_station_name: t.end_station_name,
        });
    }
    (kept, stats)
}

fn check_hour(hour: u32) -> Result<()> {
    if hour > 23 {
        return Err(Error::InvalidArgument(format!("hour {hour} outside 0..=23")));
    }
    Ok(())
}

/// Trips whose start time falls in `hour`:00..`hour`:59.
pub fn filter_by_hour(trips: &[TripRecord], hour: u32) -> Result<Vec<TripRecord>> {
    check_hour(hour)?;
    Ok(trips
        .iter()
        .filter(|t| t.start_hour() == hour)
        .cloned()
        .collect())
}

/// Splits trips into 24 start-hour buckets without copying.
pub fn bucket_by_hour(trips: &[TripRecord]) -> [Vec<&TripRecord>; 24] {
    let mut buckets: [Vec<&TripRecord>; 24] = Default::default();
    for t in trips {
        buckets[t.start_hour() as usize].push(t);
    }
    buckets
}

/// Writes cleaned trips back out using the given column names.
pub fn write_trips<W: std::io::Write>(
    out: W,
    trips: &[TripRecord],
    schema: &ColumnSchema,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        &schema.rental_id,
        &schema.duration,
        &schema.bike_id,
        &schema.end_date,
        &schema.end_station_id,
        &schema.end_station_name,
        &schema.start_date,
        &schema.start_station_id,
        &schema.start_station_name,
    ])?;
    for t in trips {
        w.write_record([
            t.rental_id.to_string(),
            t.duration.to_string(),
            t.bike_id.to_string(),
            t.end_time.format("%d/%m/%Y %H:%M").to_string(),
            t.end_station_id.to_string(),
            t.end_station_name.clone(),
            t.start_time.format("%d/%m/%Y %H:%M").to_string(),
            t.start_station_id.to_string(),
            t.start_station_name.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<trips>", e))?;
    Ok(())
}
