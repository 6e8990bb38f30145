//! Transaction-record analytics: handset lineages, subsidy forensics, and
//! usage statistics.
//!
//! The atomic input is one call event `(t, h, i, j, l_i, l_j, d)`: timestamp,
//! handset, caller account, callee account, caller tower, callee tower,
//! duration. Everything here is derived from streams of those tuples plus a
//! tower table and an optional handset-model registry.

mod lineage;
mod stats;

pub use lineage::*;
pub use stats::*;

use std::collections::HashMap;
use std::io::{Read, Write};

use chrono::{DateTime, Datelike, NaiveDate, Timelike};
use serde::{Deserialize, Serialize};

use crate::coverage::GeoPoint;
use crate::error::{Error, Result};

/// Account identifier (an anonymized phone number).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccountId(pub u64);

impl std::fmt::Display for AccountId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Handset (device) identifier, distinct from the account using it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HandsetId(pub u64);

impl std::fmt::Display for HandsetId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Cell tower identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TowerId(pub u64);

impl std::fmt::Display for TowerId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Handset model identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelId(pub u32);

/// One call event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionRecord {
    /// Timestamp, UTC seconds.
    pub t: i64,
    pub handset: HandsetId,
    pub caller: AccountId,
    pub callee: AccountId,
    pub caller_tower: TowerId,
    pub callee_tower: TowerId,
    /// Duration in seconds.
    pub duration_s: u32,
}

impl TransactionRecord {
    pub fn validate(&self) -> Result<()> {
        if self.caller == self.callee {
            return Err(Error::InvalidParameter(format!(
                "self call by account {} at t={}",
                self.caller, self.t
            )));
        }
        Ok(())
    }

    /// Total order used to make every per-handset and per-account walk
    /// independent of input ordering.
    pub(crate) fn sort_key(&self) -> (i64, u64, u64, u64, u64, u32) {
        (self.t, self.caller.0, self.callee.0, self.caller_tower.0, self.callee_tower.0, self.duration_s)
    }
}

/// Calendar month, the aggregation period of all monthly statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Self {
        assert!((1..=12).contains(&month), "month must be 1..=12");
        Self { year, month }
    }

    pub fn next(self) -> Self {
        if self.month == 12 {
            Self { year: self.year + 1, month: 1 }
        } else {
            Self { year: self.year, month: self.month + 1 }
        }
    }

    /// Months elapsed since another month (self - other).
    pub fn months_since(self, other: Self) -> i64 {
        (self.year as i64 - other.year as i64) * 12 + self.month as i64 - other.month as i64
    }
}

impl std::fmt::Display for YearMonth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl std::str::FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| Error::Parse(format!("expected YYYY-MM, got `{s}`")))?;
        let year: i32 = y.parse().map_err(|e| Error::Parse(format!("bad year in `{s}`: {e}")))?;
        let month: u32 = m.parse().map_err(|e| Error::Parse(format!("bad month in `{s}`: {e}")))?;
        if !(1..=12).contains(&month) {
            return Err(Error::Parse(format!("month out of range in `{s}`")));
        }
        Ok(Self { year, month })
    }
}

/// Local-time conventions for classifying calls.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceCalendar {
    /// Offset added to UTC timestamps before reading off dates and hours.
    pub tz_offset_secs: i32,
    /// Workday window, Mon-Fri, half-open hours [start, end).
    pub workday_hours: (u32, u32),
    /// Late-night window, wrapping midnight: hour >= start or hour < end.
    pub late_night_hours: (u32, u32),
    pub holidays: Vec<NaiveDate>,
}

impl Default for TraceCalendar {
    fn default() -> Self {
        Self {
            tz_offset_secs: 0,
            workday_hours: (8, 17),
            late_night_hours: (23, 5),
            holidays: Vec::new(),
        }
    }
}

impl TraceCalendar {
    fn local(&self, t: i64) -> chrono::NaiveDateTime {
        DateTime::from_timestamp(t + self.tz_offset_secs as i64, 0)
            .expect("timestamp in range")
            .naive_utc()
    }

    pub fn year_month(&self, t: i64) -> YearMonth {
        let dt = self.local(t);
        YearMonth { year: dt.year(), month: dt.month() }
    }

    pub fn is_workday(&self, t: i64) -> bool {
        let dt = self.local(t);
        let weekday = dt.weekday().num_days_from_monday();
        weekday < 5 && dt.hour() >= self.workday_hours.0 && dt.hour() < self.workday_hours.1
    }

    pub fn is_weekend(&self, t: i64) -> bool {
        self.local(t).weekday().num_days_from_monday() >= 5
    }

    pub fn is_late_night(&self, t: i64) -> bool {
        let h = self.local(t).hour();
        h >= self.late_night_hours.0 || h < self.late_night_hours.1
    }

    pub fn is_holiday(&self, t: i64) -> bool {
        self.holidays.contains(&self.local(t).date())
    }
}

/// Tower attributes used by the analytics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TowerInfo {
    pub position: GeoPoint,
    pub rural: bool,
    pub antenna_height_m: f64,
    pub active_month: u32,
}

/// Tower id -> attributes.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TowerTable {
    pub towers: HashMap<TowerId, TowerInfo>,
}

impl TowerTable {
    pub fn get(&self, id: TowerId) -> Option<&TowerInfo> {
        self.towers.get(&id)
    }
}

/// Handset -> model registry.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct HandsetRegistry {
    pub models: HashMap<HandsetId, ModelId>,
}

impl HandsetRegistry {
    pub fn model_of(&self, h: HandsetId) -> Option<ModelId> {
        self.models.get(&h).copied()
    }
}

fn parse_timestamp(s: &str) -> Result<i64> {
    let s = s.trim();
    if let Ok(epoch) = s.parse::<i64>() {
        return Ok(epoch);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.timestamp());
    }
    if let Ok(naive) = chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
        return Ok(naive.and_utc().timestamp());
    }
    if let Ok(naive) = chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S") {
        return Ok(naive.and_utc().timestamp());
    }
    Err(Error::Parse(format!("unparseable timestamp `{s}`")))
}

/// Read records from CSV with header `t,h,i,j,l_i,l_j,d`. Timestamps may be
/// epoch seconds or ISO-8601.
pub fn read_records_csv<R: Read>(reader: R) -> Result<Vec<TransactionRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expect = ["t", "h", "i", "j", "l_i", "l_j", "d"];
    let idx: Vec<usize> = expect
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| Error::Parse(format!("records csv missing column `{name}`")))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let field = |k: usize| row.get(idx[k]).unwrap_or("").trim();
        let rec = TransactionRecord {
            t: parse_timestamp(field(0))?,
            handset: HandsetId(field(1).parse().map_err(|e| Error::Parse(format!("bad h: {e}")))?),
            caller: AccountId(field(2).parse().map_err(|e| Error::Parse(format!("bad i: {e}")))?),
            callee: AccountId(field(3).parse().map_err(|e| Error::Parse(format!("bad j: {e}")))?),
            caller_tower: TowerId(field(4).parse().map_err(|e| Error::Parse(format!("bad l_i: {e}")))?),
            callee_tower: TowerId(field(5).parse().map_err(|e| Error::Parse(format!("bad l_j: {e}")))?),
            duration_s: field(6).parse().map_err(|e| Error::Parse(format!("bad d: {e}")))?,
        };
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

/// Write records in the canonical CSV layout (epoch-second timestamps).
pub fn write_records_csv<W: Write>(writer: W, records: &[TransactionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "h", "i", "j", "l_i", "l_j", "d"])?;
    for r in records {
        w.write_record([
            r.t.to_string(),
            r.handset.to_string(),
            r.caller.to_string(),
            r.callee.to_string(),
            r.caller_tower.to_string(),
            r.callee_tower.to_string(),
            r.duration_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a tower table from CSV with header
/// `id,lat,lon,rural[,height_m,active_month]`.
pub fn read_towers_csv<R: Read>(reader: R) -> Result<TowerTable> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (id_i, lat_i, lon_i, rural_i) = match (col("id"), col("lat"), col("lon"), col("rural")) {
        (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
        _ => return Err(Error::Parse("towers csv needs columns id,lat,lon,rural".into())),
    };
    let height_i = col("height_m");
    let active_i = col("active_month");
    let mut towers = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        let get = |i: usize| row.get(i).unwrap_or("").trim().to_string();
        let id = TowerId(get(id_i).parse().map_err(|e| Error::Parse(format!("bad tower id: {e}")))?);
        let lat: f64 = get(lat_i).parse().map_err(|e| Error::Parse(format!("bad lat: {e}")))?;
        let lon: f64 = get(lon_i).parse().map_err(|e| Error::Parse(format!("bad lon: {e}")))?;
        let rural = matches!(get(rural_i).as_str(), "1" | "true" | "TRUE" | "True");
        let antenna_height_m = match height_i {
            Some(i) => get(i).parse().unwrap_or(30.0),
            None => 30.0,
        };
        let active_month = match active_i {
            Some(i) => get(i).parse().unwrap_or(1),
            None => 1,
        };
        towers.insert(id, TowerInfo { position: GeoPoint { lat, lon }, rural, antenna_height_m, active_month });
    }
    Ok(TowerTable { towers })
}

/// Write a tower table in the layout accepted by [`read_towers_csv`].
pub fn write_towers_csv<W: Write>(writer: W, table: &TowerTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "lat", "lon", "rural", "height_m", "active_month"])?;
    let mut ids: Vec<_> = table.towers.keys().copied().collect();
    ids.sort();
    for id in ids {
        let info = &table.towers[&id];
        w.write_record([
            id.to_string(),
            info.position.lat.to_string(),
            info.position.lon.to_string(),
            if info.rural { "1".into() } else { "0".to_string() },
            info.antenna_height_m.to_string(),
            info.active_month.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a handset registry from CSV with header `h,model`.
pub fn read_handsets_csv<R: Read>(reader: R) -> Result<HandsetRegistry> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let h_i = headers
        .iter()
        .position(|h| h == "h")
        .ok_or_else(|| Error::Parse("handsets csv missing column `h`".into()))?;
    let m_i = headers
        .iter()
        .position(|h| h == "model")
        .ok_or_else(|| Error::Parse("handsets csv missing column `model`".into()))?;
    let mut models = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        let h: u64 = row.get(h_i).unwrap_or("").trim().parse().map_err(|e| Error::Parse(format!("bad h: {e}")))?;
        let m: u32 = row.get(m_i).unwrap_or("").trim().parse().map_err(|e| Error::Parse(format!("bad model: {e}")))?;
        models.insert(HandsetId(h), ModelId(m));
    }
    Ok(HandsetRegistry { models })
}

/// Write a handset registry in the layout accepted by [`read_handsets_csv`].
pub fn write_handsets_csv<W: Write>(writer: W, registry: &HandsetRegistry) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["h", "model"])?;
    let mut ids: Vec<_> = registry.models.keys().copied().collect();
    ids.sort();
    for id in ids {
        w.write_record([id.to_string(), registry.models[&id].0.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_csv_round_trip_and_iso_timestamps() {
        let records = vec![
            TransactionRecord {
                t: 1_199_145_600,
                handset: HandsetId(7),
                caller: AccountId(1),
                callee: AccountId(2),
                caller_tower: TowerId(3),
                callee_tower: TowerId(4),
                duration_s: 42,
            },
            TransactionRecord {
                t: 1_199_149_200,
                handset: HandsetId(8),
                caller: AccountId(2),
                callee: AccountId(1),
                caller_tower: TowerId(4),
                callee_tower: TowerId(3),
                duration_s: 5,
            },
        ];
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &records).unwrap();
        let back = read_records_csv(buf.as_slice()).unwrap();
        assert_eq!(back, records);

        let iso = "t,h,i,j,l_i,l_j,d\n2008-01-01T00:00:00,7,1,2,3,4,42\n";
        let parsed = read_records_csv(iso.as_bytes()).unwrap();
        assert_eq!(parsed[0].t, 1_199_145_600);
    }

    #[test]
    fn self_calls_rejected() {
        let csv = "t,h,i,j,l_i,l_j,d\n0,1,5,5,1,1,10\n";
        assert!(read_records_csv(csv.as_bytes()).is_err());
    }

    #[test]
    fn year_month_arithmetic() {
        let ym: YearMonth = "2007-12".parse().unwrap();
        assert_eq!(ym.next(), YearMonth::new(2008, 1));
        assert_eq!(YearMonth::new(2008, 3).months_since(YearMonth::new(2007, 12)), 3);
        assert_eq!(ym.to_string(), "2007-12");
        assert!("2008-13".parse::<YearMonth>().is_err());
    }

    #[test]
    fn calendar_classifies_windows() {
        let cal = TraceCalendar::default();
        // 2008-01-07 is a Monday.
        let monday_10am = chrono::NaiveDate::from_ymd_opt(2008, 1, 7)
            .unwrap()
            .and_hms_opt(10, 0, 0)
            .unwrap()
            .and_utc()
            .timestamp();
        assert!(cal.is_workday(monday_10am));
        assert!(!cal.is_weekend(monday_10am));
        assert!(!cal.is_late_night(monday_10am));
        let saturday = monday_10am + 5 * 86_400;
        assert!(cal.is_weekend(saturday));
        assert!(!cal.is_workday(saturday));
        let monday_2330 = monday_10am + 13 * 3600 + 1800;
        assert!(cal.is_late_night(monday_2330));
        let monday_4am = monday_10am - 6 * 3600;
        assert!(cal.is_late_night(monday_4am));
        assert_eq!(cal.year_month(monday_10am), YearMonth::new(2008, 1));
    }

    #[test]
    fn towers_csv_round_trip() {
        let mut table = TowerTable::default();
        table.towers.insert(
            TowerId(1),
            TowerInfo {
                position: GeoPoint { lat: -1.95, lon: 30.06 },
                rural: false,
                antenna_height_m: 25.0,
                active_month: 1,
            },
        );
        table.towers.insert(
            TowerId(2),
            TowerInfo {
                position: GeoPoint { lat: -2.6, lon: 29.74 },
                rural: true,
                antenna_height_m: 30.0,
                active_month: 14,
            },
        );
        let mut buf = Vec::new();
        write_towers_csv(&mut buf, &table).unwrap();
        let back = read_towers_csv(buf.as_slice()).unwrap();
        assert_eq!(back.towers.len(), 2);
        assert!(back.get(TowerId(2)).unwrap().rural);
        assert_eq!(back.get(TowerId(1)).unwrap().antenna_height_m, 25.0);
    }
}
