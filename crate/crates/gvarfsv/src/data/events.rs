//! High-frequency announcement surprises and their monthly aggregation.
//!
//! Each announcement produces one surprise value per intraday window
//! (press release and, for some events, the press conference); the two
//! windows sum to the event's surprise and all events within a calendar
//! month sum to the monthly value. Months without announcements carry a
//! surprise of exactly zero — no announcement means no surprise.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use chrono::NaiveDateTime;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{DataError, Month};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    #[serde(rename = "US")]
    Us,
    #[serde(rename = "EA")]
    Ea,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::Us => "US",
            Region::Ea => "EA",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Instrument {
    RateSurprise,
    StockSurprise,
}

impl Instrument {
    /// Column offset within a region's surprise block.
    fn index(self) -> usize {
        match self {
            Instrument::RateSurprise => 0,
            Instrument::StockSurprise => 1,
        }
    }
}

impl fmt::Display for Instrument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Instrument::RateSurprise => "rate_surprise",
            Instrument::StockSurprise => "stock_surprise",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventWindow {
    PressRelease,
    Conference,
}

impl fmt::Display for EventWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventWindow::PressRelease => "press_release",
            EventWindow::Conference => "conference",
        })
    }
}

/// One intraday surprise observation, pre-aggregation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawEventRecord {
    pub timestamp: NaiveDateTime,
    pub region: Region,
    pub instrument: Instrument,
    pub window: EventWindow,
    pub value: f64,
}

/// Sums surprise events into a T×2m monthly matrix over `calendar`.
///
/// Column order follows the stacked system: the US block's m instruments,
/// then the EA block's. Events falling outside `calendar` are ignored —
/// surprise databases typically span more than the estimation sample.
/// Repeated (timestamp, region, instrument, window) rows are rejected with
/// a listing of every duplicate.
pub fn aggregate_surprises_to_monthly(
    events: &[RawEventRecord],
    calendar: &[Month],
    m: usize,
) -> Result<DMatrix<f64>, DataError> {
    let mut seen: HashMap<(NaiveDateTime, Region, Instrument, EventWindow), usize> =
        HashMap::new();
    let mut duplicates = Vec::new();
    for e in events {
        let key = (e.timestamp, e.region, e.instrument, e.window);
        let count = seen.entry(key).or_insert(0);
        *count += 1;
        if *count == 2 {
            duplicates.push(format!(
                "  {} {} {} {}",
                e.timestamp, e.region, e.instrument, e.window
            ));
        }
    }
    if !duplicates.is_empty() {
        duplicates.sort();
        return Err(DataError::DuplicateEvents {
            listing: duplicates.join("\n"),
        });
    }

    let month_row: HashMap<Month, usize> = calendar
        .iter()
        .enumerate()
        .map(|(r, &month)| (month, r))
        .collect();
    let mut out = DMatrix::zeros(calendar.len(), 2 * m);
    for (i, e) in events.iter().enumerate() {
        if !e.value.is_finite() {
            return Err(DataError::NonFinite {
                what: "surprise events".to_string(),
                row: i,
                col: 0,
            });
        }
        let idx = e.instrument.index();
        if idx >= m {
            return Err(DataError::InstrumentOutOfRange {
                instrument: e.instrument.to_string(),
                needed: idx + 1,
                m,
            });
        }
        let col = match e.region {
            Region::Us => idx,
            Region::Ea => m + idx,
        };
        let date = e.timestamp.date();
        let Some(month) = Month::new(
            chrono::Datelike::year(&date),
            chrono::Datelike::month(&date),
        ) else {
            continue;
        };
        if let Some(&row) = month_row.get(&month) {
            out[(row, col)] += e.value;
        }
    }
    Ok(out)
}

/// Reads an events CSV with columns
/// `timestamp,region,instrument,window,value`.
///
/// Timestamps accept `YYYY-MM-DDTHH:MM`, `YYYY-MM-DD HH:MM`, or a bare date.
pub fn read_events_csv(path: &Path) -> Result<Vec<RawEventRecord>, DataError> {
    let pstr = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| DataError::Csv {
            path: pstr.clone(),
            source,
        })?;
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let row = row.map_err(|source| DataError::Csv {
            path: pstr.clone(),
            source,
        })?;
        let field = |idx: usize, what: &'static str| -> Result<&str, DataError> {
            row.get(idx).ok_or_else(|| DataError::BadField {
                what,
                text: String::new(),
                path: pstr.clone(),
                line,
            })
        };
        let ts_text = field(0, "timestamp")?;
        let timestamp = parse_timestamp(ts_text).ok_or_else(|| DataError::BadField {
            what: "timestamp",
            text: ts_text.to_string(),
            path: pstr.clone(),
            line,
        })?;
        let region = match field(1, "region")? {
            "US" => Region::Us,
            "EA" => Region::Ea,
            other => {
                return Err(DataError::BadField {
                    what: "region",
                    text: other.to_string(),
                    path: pstr.clone(),
                    line,
                })
            }
        };
        let instrument = match field(2, "instrument")? {
            "rate_surprise" => Instrument::RateSurprise,
            "stock_surprise" => Instrument::StockSurprise,
            other => {
                return Err(DataError::BadField {
                    what: "instrument",
                    text: other.to_string(),
                    path: pstr.clone(),
                    line,
                })
            }
        };
        let window = match field(3, "window")? {
            "press_release" => EventWindow::PressRelease,
            "conference" => EventWindow::Conference,
            other => {
                return Err(DataError::BadField {
                    what: "window",
                    text: other.to_string(),
                    path: pstr.clone(),
                    line,
                })
            }
        };
        let value_text = field(4, "value")?;
        let value: f64 = value_text.parse().map_err(|_| DataError::BadField {
            what: "value",
            text: value_text.to_string(),
            path: pstr.clone(),
            line,
        })?;
        out.push(RawEventRecord {
            timestamp,
            region,
            instrument,
            window,
            value,
        });
    }
    Ok(out)
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M"))
        .ok()
        .or_else(|| {
            chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
        })
}
