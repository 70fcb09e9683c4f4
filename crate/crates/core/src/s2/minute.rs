use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{DateTime, Duration, FixedOffset, NaiveDate, NaiveDateTime, TimeZone};
use serde::{Deserialize, Serialize};

use crate::data::natural_cmp;
use crate::error::{Error, Result};

/// Korea Standard Time, UTC+09:00.
pub fn kst() -> FixedOffset {
    FixedOffset::east_opt(9 * 3600).expect("valid offset")
}

pub const DEFAULT_BOUNDARY_HOUR: u32 = 16;

/// One sensor reading. `timestamp` is Unix seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinuteRecord {
    pub subject: String,
    pub timestamp: i64,
    pub channel: String,
    pub value: f64,
}

/// Parses epoch seconds, RFC 3339, or a naive `YYYY-MM-DD[T ]HH:MM[:SS]`
/// read as local time in `tz`.
pub fn parse_instant(s: &str, tz: FixedOffset) -> Result<i64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Ok(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            if let Some(dt) = tz.from_local_datetime(&naive).single() {
                return Ok(dt.timestamp());
            }
        }
    }
    Err(Error::UnparseableTimestamp(s.to_string()))
}

#[derive(Deserialize)]
struct RawRecord {
    subject: String,
    timestamp: String,
    channel: String,
    value: f64,
}

/// Reads long-format minute data with columns
/// `subject,timestamp,channel,value`. Records come back sorted by
/// `(subject, channel, timestamp)`; repeated timestamps within a
/// `(subject, channel)` are rejected.
pub fn read_minute_csv<R: Read>(reader: R, tz: FixedOffset) -> Result<Vec<MinuteRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<RawRecord>() {
        let r = row?;
        if !r.value.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        out.push(MinuteRecord {
            timestamp: parse_instant(&r.timestamp, tz)?,
            subject: r.subject,
            channel: r.channel,
            value: r.value,
        });
    }
    sort_records(&mut out)?;
    Ok(out)
}

pub(crate) fn sort_records(records: &mut [MinuteRecord]) -> Result<()> {
    records.sort_by(|a, b| {
        natural_cmp(&a.subject, &b.subject)
            .then_with(|| a.channel.cmp(&b.channel))
            .then(a.timestamp.cmp(&b.timestamp))
    });
    for w in records.windows(2) {
        if w[0].subject == w[1].subject && w[0].channel == w[1].channel && w[0].timestamp == w[1].timestamp {
            return Err(Error::DuplicateKey {
                subject: w[0].subject.clone(),
                timestamp: format!("{} ({})", w[0].timestamp, w[0].channel),
            });
        }
    }
    Ok(())
}

pub fn write_minute_csv<W: Write>(records: &[MinuteRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["subject", "timestamp", "channel", "value"])?;
    for r in records {
        w.write_record([
            r.subject.as_str(),
            &r.timestamp.to_string(),
            r.channel.as_str(),
            &r.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Key of one analysis day: subject and the local date on which the day
/// starts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DayKey {
    pub subject: String,
    pub day: NaiveDate,
}

impl Ord for DayKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        natural_cmp(&self.subject, &other.subject).then(self.day.cmp(&other.day))
    }
}

impl PartialOrd for DayKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Records grouped by analysis day. Within a day the records keep the input
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisDays {
    pub boundary_hour: u32,
    pub tz: FixedOffset,
    pub groups: BTreeMap<DayKey, Vec<MinuteRecord>>,
}

impl AnalysisDays {
    /// Local wall-clock minute of day, in `0..1440`.
    pub fn local_minute(&self, timestamp: i64) -> u32 {
        let secs = (timestamp + i64::from(self.tz.local_minus_utc())).rem_euclid(86_400);
        (secs / 60) as u32
    }
}

/// Analysis day of an instant: the local calendar date of
/// `t - boundary_hour` hours.
pub fn analysis_day(timestamp: i64, boundary_hour: u32, tz: FixedOffset) -> Result<NaiveDate> {
    let utc = DateTime::from_timestamp(timestamp, 0).ok_or_else(|| Error::UnparseableTimestamp(timestamp.to_string()))?;
    let shifted = utc.with_timezone(&tz) - Duration::hours(i64::from(boundary_hour));
    Ok(shifted.date_naive())
}

pub fn reindex_analysis_days(records: &[MinuteRecord], boundary_hour: u32, tz: FixedOffset) -> Result<AnalysisDays> {
    if boundary_hour >= 24 {
        return Err(Error::InvalidConfig(format!("boundary hour {boundary_hour} outside 0..24")));
    }
    let mut groups: BTreeMap<DayKey, Vec<MinuteRecord>> = BTreeMap::new();
    for r in records {
        let day = analysis_day(r.timestamp, boundary_hour, tz)?;
        groups
            .entry(DayKey {
                subject: r.subject.clone(),
                day,
            })
            .or_default()
            .push(r.clone());
    }
    Ok(AnalysisDays {
        boundary_hour,
        tz,
        groups,
    })
}
