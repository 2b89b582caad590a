//! Per-appliance consumption CSVs, the household cache, the calendar
//! split and trajectory export.
//!
//! Input schema: one timestamp column (ISO-8601 local time, 15-minute
//! cadence) and one numeric column per metered circuit, in kW. A column
//! mapping assigns circuits to roles; numeric columns it does not mention
//! are summed into the non-shiftable load.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{standard_inventory, Household, SLOTS_PER_DAY, TIME_SHIFTABLE_NAMES};
use crate::environment::{Trajectory, TsDecision};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LoadError {
    #[error("{path}: cannot read: {message}")]
    Unreadable { path: PathBuf, message: String },
    #[error("{path}: missing column '{column}'")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: row {row}, column '{column}': cannot parse '{value}'")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{path}: row {row}: timestamp is not after the previous one")]
    NonMonotone { path: PathBuf, row: usize },
    #[error("{path}: row {row}: timestamp is not on the 15-minute grid")]
    OffGrid { path: PathBuf, row: usize },
    #[error("column mapping key '{key}': unknown role '{role}'")]
    UnknownRole { key: String, role: String },
    #[error("column mapping assigns role '{role}' twice")]
    DuplicateRole { role: String },
    #[error("{path}: no complete day left after repair")]
    Empty { path: PathBuf },
    #[error("household does not cover {} split date(s): {}", missing.len(), fmt_dates(missing))]
    Coverage { missing: Vec<NaiveDate> },
}

fn fmt_dates(d: &[NaiveDate]) -> String {
    let shown: Vec<String> = d.iter().take(10).map(|d| d.to_string()).collect();
    let more = if d.len() > 10 { ", ..." } else { "" };
    format!("{}{more}", shown.join(", "))
}

/// Role of a mapped column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    /// Index into the standard inventory (0..=4 controllable, 5 base).
    Appliance(usize),
    Ignore,
}

impl Role {
    pub fn parse(key: &str, role: &str) -> Result<Self, LoadError> {
        if let Some(i) = TIME_SHIFTABLE_NAMES.iter().position(|n| *n == role) {
            return Ok(Role::Appliance(i));
        }
        match role {
            "ac" => Ok(Role::Appliance(4)),
            "non_shiftable" => Ok(Role::Appliance(5)),
            "ignore" => Ok(Role::Ignore),
            _ => Err(LoadError::UnknownRole {
                key: key.into(),
                role: role.into(),
            }),
        }
    }
}

/// Which CSV column feeds which appliance role. Roles: `ev`,
/// `washing_machine`, `dishwasher`, `dryer`, `ac`, `non_shiftable`,
/// `ignore`. Several columns may feed `non_shiftable`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMapping {
    #[serde(default = "default_timestamp")]
    pub timestamp: String,
    /// Column holding the household id, if any.
    #[serde(default)]
    pub household_id: Option<String>,
    #[serde(default)]
    pub columns: BTreeMap<String, String>,
}

fn default_timestamp() -> String {
    "timestamp".into()
}

impl Default for ColumnMapping {
    /// The layout written by [`save_household_csv`].
    fn default() -> Self {
        let mut columns: BTreeMap<String, String> = TIME_SHIFTABLE_NAMES
            .iter()
            .map(|n| (n.to_string(), n.to_string()))
            .collect();
        columns.insert("ac".into(), "ac".into());
        columns.insert("base".into(), "non_shiftable".into());
        Self {
            timestamp: default_timestamp(),
            household_id: None,
            columns,
        }
    }
}

impl ColumnMapping {
    pub fn resolve(&self) -> Result<BTreeMap<String, Role>, LoadError> {
        let mut seen = BTreeSet::new();
        let mut out = BTreeMap::new();
        for (key, role) in &self.columns {
            let r = Role::parse(key, role)?;
            if let Role::Appliance(i) = r {
                if i < 5 && !seen.insert(i) {
                    return Err(LoadError::DuplicateRole { role: role.clone() });
                }
            }
            out.insert(key.clone(), r);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repair {
    pub timestamp: NaiveDateTime,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub path: PathBuf,
    pub household: String,
    pub rows: usize,
    pub days_loaded: usize,
    pub days_dropped: Vec<NaiveDate>,
    /// Slots filled by interpolation.
    pub repaired_slots: usize,
    pub repairs: Vec<Repair>,
    pub clamped_values: usize,
    pub unmapped_columns: Vec<String>,
}

/// Longest gap (in slots) repaired by interpolation.
pub const MAX_REPAIR_GAP: usize = 4;

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    for f in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, f) {
            return Some(t);
        }
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.naive_local());
    }
    for f in ["%Y-%m-%d %H:%M:%S%#z", "%Y-%m-%dT%H:%M:%S%#z"] {
        if let Ok(t) = DateTime::parse_from_str(s, f) {
            return Some(t.naive_local());
        }
    }
    None
}

fn slot_of(t: &NaiveDateTime) -> Option<usize> {
    (t.minute() % 15 == 0 && t.second() == 0 && t.nanosecond() == 0)
        .then(|| (t.hour() * 4 + t.minute() / 15) as usize)
}

/// Reads a household CSV. Short gaps are interpolated, days with longer
/// gaps or missing slots are dropped and negative readings clamped.
pub fn load_household(path: &Path, mapping: &ColumnMapping) -> Result<(Household, LoadReport), LoadError> {
    let roles = mapping.resolve()?;
    let unreadable = |e: &dyn std::fmt::Display| LoadError::Unreadable {
        path: path.into(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| unreadable(&e))?;
    let headers = reader.headers().map_err(|e| unreadable(&e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let ts_col = col(&mapping.timestamp).ok_or_else(|| LoadError::MissingColumn {
        path: path.into(),
        column: mapping.timestamp.clone(),
    })?;
    let id_col = match &mapping.household_id {
        Some(name) => Some(col(name).ok_or_else(|| LoadError::MissingColumn {
            path: path.into(),
            column: name.clone(),
        })?),
        None => None,
    };
    for key in roles.keys() {
        if col(key).is_none() {
            return Err(LoadError::MissingColumn {
                path: path.into(),
                column: key.clone(),
            });
        }
    }
    // target inventory slot of each data column
    let mut targets: Vec<(usize, usize)> = Vec::new();
    let mut unmapped = Vec::new();
    for (c, name) in headers.iter().enumerate() {
        if c == ts_col || Some(c) == id_col {
            continue;
        }
        match roles.get(name) {
            Some(Role::Appliance(i)) => targets.push((c, *i)),
            Some(Role::Ignore) => {}
            None => {
                unmapped.push(name.to_string());
                targets.push((c, 5));
            }
        }
    }

    let mut times: Vec<NaiveDateTime> = Vec::new();
    let mut values: Vec<Vec<Option<f64>>> = Vec::new();
    let mut household = None;
    let mut clamped = 0;
    for (k, rec) in reader.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| unreadable(&e))?;
        let raw_ts = rec.get(ts_col).unwrap_or("");
        let t = parse_timestamp(raw_ts).ok_or_else(|| LoadError::Parse {
            path: path.into(),
            row,
            column: mapping.timestamp.clone(),
            value: raw_ts.into(),
        })?;
        if slot_of(&t).is_none() {
            return Err(LoadError::OffGrid { path: path.into(), row });
        }
        if times.last().is_some_and(|p| *p >= t) {
            return Err(LoadError::NonMonotone { path: path.into(), row });
        }
        if household.is_none() {
            household = id_col.and_then(|c| rec.get(c)).map(str::to_string);
        }
        let mut v = Vec::with_capacity(targets.len());
        for &(c, _) in &targets {
            let cell = rec.get(c).unwrap_or("");
            if cell.is_empty() || cell.eq_ignore_ascii_case("nan") || cell.eq_ignore_ascii_case("na") {
                v.push(None);
                continue;
            }
            let x: f64 = cell.parse().map_err(|_| LoadError::Parse {
                path: path.into(),
                row,
                column: headers[c].to_string(),
                value: cell.into(),
            })?;
            if !x.is_finite() {
                v.push(None);
            } else if x < 0.0 {
                clamped += 1;
                v.push(Some(0.0));
            } else {
                v.push(Some(x));
            }
        }
        times.push(t);
        values.push(v);
    }
    let household = household.unwrap_or_else(|| {
        path.file_stem()
            .map_or_else(|| "household".into(), |s| s.to_string_lossy().into_owned())
    });
    let rows = times.len();
    let empty = || LoadError::Empty { path: path.into() };
    let (first, last) = match (times.first(), times.last()) {
        (Some(a), Some(b)) => (a.date(), b.date()),
        _ => return Err(empty()),
    };
    let ndays = (last - first).num_days() as usize + 1;
    let n = ndays * SLOTS_PER_DAY;
    let index_of = |t: &NaiveDateTime| (t.date() - first).num_days() as usize * SLOTS_PER_DAY + slot_of(t).expect("on grid");

    // dense grid per data column
    let mut grid = vec![vec![None; n]; targets.len()];
    for (t, v) in times.iter().zip(&values) {
        let k = index_of(t);
        for (c, x) in v.iter().enumerate() {
            grid[c][k] = *x;
        }
    }

    let mut repaired = BTreeMap::<usize, Vec<String>>::new();
    let mut bad_days = BTreeSet::new();
    for (c, series) in grid.iter_mut().enumerate() {
        let mut k = 0;
        while k < n {
            if series[k].is_some() {
                k += 1;
                continue;
            }
            let start = k;
            while k < n && series[k].is_none() {
                k += 1;
            }
            let len = k - start;
            if len <= MAX_REPAIR_GAP && start > 0 && k < n {
                let (a, b) = (series[start - 1].expect("known"), series[k].expect("known"));
                for (off, s) in (start..k).enumerate() {
                    let w = (off + 1) as f64 / (len + 1) as f64;
                    series[s] = Some(a + (b - a) * w);
                    repaired.entry(s).or_default().push(headers[targets[c].0].to_string());
                }
            } else {
                for s in start..k {
                    bad_days.insert(s / SLOTS_PER_DAY);
                }
            }
        }
    }

    let kept: Vec<usize> = (0..ndays).filter(|d| !bad_days.contains(d)).collect();
    if kept.is_empty() {
        return Err(empty());
    }
    let mut demand = vec![Vec::with_capacity(kept.len() * SLOTS_PER_DAY); 6];
    for &d in &kept {
        for k in d * SLOTS_PER_DAY..(d + 1) * SLOTS_PER_DAY {
            let mut slot = [0.0; 6];
            for (c, &(_, i)) in targets.iter().enumerate() {
                slot[i] += grid[c][k].expect("complete day");
            }
            for (series, v) in demand.iter_mut().zip(slot) {
                series.push(v);
            }
        }
    }
    let date = |d: usize| first + Duration::days(d as i64);
    let repairs: Vec<Repair> = repaired
        .into_iter()
        .filter(|(s, _)| !bad_days.contains(&(s / SLOTS_PER_DAY)))
        .map(|(s, columns)| Repair {
            timestamp: date(s / SLOTS_PER_DAY).and_hms_opt(0, 0, 0).expect("midnight")
                + Duration::minutes(15 * (s % SLOTS_PER_DAY) as i64),
            columns,
        })
        .collect();
    let h = Household::new(
        household.clone(),
        standard_inventory(),
        demand,
        kept.iter().map(|&d| date(d)).collect(),
    )
    .map_err(|e| LoadError::Unreadable {
        path: path.into(),
        message: e.to_string(),
    })?;
    let report = LoadReport {
        path: path.into(),
        household,
        rows,
        days_loaded: kept.len(),
        days_dropped: bad_days.iter().map(|&d| date(d)).collect(),
        repaired_slots: repairs.len(),
        repairs,
        clamped_values: clamped,
        unmapped_columns: unmapped,
    };
    Ok((h, report))
}

/// Writes the household in the layout read by the default mapping.
pub fn save_household_csv(h: &Household, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e))?;
    let mut header = vec!["timestamp".to_string()];
    header.extend(h.appliances.iter().map(|a| a.name.clone()));
    w.write_record(&header).map_err(|e| Error::format(path, e))?;
    for (d, date) in h.dates.iter().enumerate() {
        let midnight = date.and_hms_opt(0, 0, 0).expect("midnight");
        for s in 0..SLOTS_PER_DAY {
            let t = midnight + Duration::minutes(15 * s as i64);
            let mut rec = vec![t.format("%Y-%m-%dT%H:%M:%S").to_string()];
            rec.extend(h.demand.iter().map(|series| series[d * SLOTS_PER_DAY + s].to_string()));
            w.write_record(&rec).map_err(|e| Error::format(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const CACHE_FORMAT: &str = "irl-dr-household";

#[derive(Debug, Serialize, Deserialize)]
struct CacheSidecar {
    format: String,
    version: u32,
    id: String,
    appliances: Vec<crate::domain::Appliance>,
    dates: Vec<NaiveDate>,
    slots_per_day: usize,
    layout: String,
}

/// Binary household cache: the demand matrix as little-endian `f64`,
/// appliance-major, with a JSON sidecar at `<path>.json`.
pub fn write_cache(h: &Household, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(h.demand.len() * h.days() * SLOTS_PER_DAY * 8);
    for series in &h.demand {
        for v in series {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let side = crate::qnet::sidecar_path(path);
    let sidecar = CacheSidecar {
        format: CACHE_FORMAT.into(),
        version: 1,
        id: h.id.clone(),
        appliances: h.appliances.clone(),
        dates: h.dates.clone(),
        slots_per_day: SLOTS_PER_DAY,
        layout: "per appliance in sidecar order: days x slots; little-endian f64".into(),
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&side, json + "\n").map_err(|e| Error::io(&side, e))
}

pub fn read_cache(path: &Path) -> Result<Household> {
    let side = crate::qnet::sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let s: CacheSidecar = serde_json::from_str(&text).map_err(|e| Error::format(&side, e))?;
    if s.format != CACHE_FORMAT || s.slots_per_day != SLOTS_PER_DAY {
        return Err(Error::format(&side, "not a household cache"));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let len = s.dates.len() * SLOTS_PER_DAY;
    if bytes.len() != s.appliances.len() * len * 8 {
        return Err(Error::format(path, "cache size does not match the sidecar"));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let demand = values.chunks(len.max(1)).map(<[f64]>::to_vec).take(s.appliances.len()).collect();
    Household::new(s.id, s.appliances, demand, s.dates)
}

/// Half-open date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d < self.end
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> {
        let (start, end) = (self.start, self.end);
        start.iter_days().take_while(move |d| *d < end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: Vec<DateRange>,
    pub test: Vec<DateRange>,
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

impl SplitSpec {
    /// Spring and autumn for training, July for testing (31 days).
    pub fn seasonal(year: i32) -> Self {
        Self {
            train: vec![
                DateRange::new(ymd(year, 4, 1), ymd(year, 7, 2)),
                DateRange::new(ymd(year, 8, 2), ymd(year, 11, 1)),
            ],
            test: vec![DateRange::new(ymd(year, 7, 2), ymd(year, 8, 2))],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all: Vec<&DateRange> = self.train.iter().chain(&self.test).collect();
        for (i, a) in all.iter().enumerate() {
            if a.start >= a.end {
                return Err(Error::Contract(format!("empty date range {} .. {}", a.start, a.end)));
            }
            for b in &all[i + 1..] {
                if a.start < b.end && b.start < a.end {
                    return Err(Error::Contract("split date ranges overlap".into()));
                }
            }
        }
        Ok(())
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self::seasonal(2018)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Day indices of the household in each part. Every date of the split
/// must be present.
pub fn split(h: &Household, spec: &SplitSpec) -> Result<Split> {
    let s = split_available(h, spec)?;
    let present: BTreeSet<NaiveDate> = h.dates.iter().copied().collect();
    let missing: Vec<NaiveDate> = spec
        .train
        .iter()
        .chain(&spec.test)
        .flat_map(DateRange::days)
        .filter(|d| !present.contains(d))
        .collect();
    if !missing.is_empty() {
        return Err(LoadError::Coverage { missing }.into());
    }
    Ok(s)
}

/// As [`split`], skipping dates the household lacks.
pub fn split_available(h: &Household, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let pick = |ranges: &[DateRange]| -> Vec<usize> {
        h.dates
            .iter()
            .enumerate()
            .filter(|(_, d)| ranges.iter().any(|r| r.contains(**d)))
            .map(|(i, _)| i)
            .collect()
    };
    Ok(Split {
        train: pick(&spec.train),
        test: pick(&spec.test),
    })
}

/// Schedule-grid code of a time-shiftable decision: 1 a request left
/// waiting, 0 a request started, -1 a start without a pending request
/// (after a deferral).
pub fn schedule_code(d: TsDecision) -> Option<i8> {
    match d {
        TsDecision::Deferred => Some(1),
        TsDecision::Started => Some(0),
        TsDecision::DelayedStart => Some(-1),
        TsDecision::Idle | TsDecision::Running => None,
    }
}

/// Flat per-slot CSV of trajectories.
pub fn write_trajectories_csv(trajectories: &[Trajectory], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e))?;
    let mut header: Vec<String> = [
        "household", "day", "slot", "action", "target", "total", "baseline", "provision", "pc_demand",
        "ns_demand", "price", "ac_served",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for m in 0..4 {
        header.push(format!("delay_{m}"));
    }
    for m in 0..4 {
        header.push(format!("ts_power_{m}"));
    }
    for k in 0..crate::rewards::BASIS_COUNT {
        header.push(format!("phi_{k}"));
    }
    header.push("reward".into());
    w.write_record(&header).map_err(|e| Error::format(path, e))?;
    for t in trajectories {
        for s in &t.steps {
            let mut rec = vec![
                t.household.clone(),
                t.day.to_string(),
                s.slot.to_string(),
                s.action.level().to_string(),
                s.dispatch.target.to_string(),
                s.dispatch.total.to_string(),
                s.state.baseline.to_string(),
                s.provision().to_string(),
                s.state.pc_demand.to_string(),
                s.state.ns_demand.to_string(),
                s.state.price.to_string(),
                s.dispatch.pc.to_string(),
            ];
            rec.extend(s.state.ts_delays.iter().map(|d| d.to_string()));
            rec.extend(s.dispatch.ts_power.iter().map(|d| d.to_string()));
            rec.extend(s.features.iter().map(|d| d.to_string()));
            rec.push(s.reward.to_string());
            w.write_record(&rec).map_err(|e| Error::format(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Full-fidelity trajectory archive (JSON).
pub fn write_trajectories_json(trajectories: &[Trajectory], path: &Path) -> Result<()> {
    let json = serde_json::to_string(trajectories).expect("trajectories serialize");
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_trajectories_json(path: &Path) -> Result<Vec<Trajectory>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seasonal_split_has_31_test_days() {
        let s = SplitSpec::default();
        s.validate().unwrap();
        assert_eq!(s.test.iter().flat_map(DateRange::days).count(), 31);
    }

    #[test]
    fn unknown_role_names_key() {
        let mut m = ColumnMapping::default();
        m.columns.insert("car1".into(), "spaceship".into());
        match m.resolve() {
            Err(LoadError::UnknownRole { key, .. }) => assert_eq!(key, "car1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn timestamps() {
        assert!(parse_timestamp("2018-04-01 00:15:00-05").is_some());
        assert!(parse_timestamp("2018-04-01T00:15:00").is_some());
        assert!(parse_timestamp("yesterday").is_none());
    }

    #[test]
    fn schedule_codes() {
        assert_eq!(schedule_code(TsDecision::Deferred), Some(1));
        assert_eq!(schedule_code(TsDecision::Started), Some(0));
        assert_eq!(schedule_code(TsDecision::DelayedStart), Some(-1));
    }
}
