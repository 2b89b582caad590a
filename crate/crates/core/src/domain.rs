//! Appliance and household data model.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 15-minute slots in one day.
pub const SLOTS_PER_DAY: usize = 96;

/// Hours covered by one slot; energy per slot is `kW * SLOT_HOURS`.
pub const SLOT_HOURS: f64 = 0.25;

/// Width of the delay-counter block of the observation.
pub const MAX_TIME_SHIFTABLE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplianceClass {
    TimeShiftable,
    PowerCurtailable,
    NonShiftable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Appliance {
    pub id: usize,
    pub name: String,
    pub class: ApplianceClass,
}

impl Appliance {
    pub fn new(id: usize, name: impl Into<String>, class: ApplianceClass) -> Self {
        Self {
            id,
            name: name.into(),
            class,
        }
    }
}

/// Names of the canonical inventory, in observation order for the
/// time-shiftable block.
pub const TIME_SHIFTABLE_NAMES: [&str; MAX_TIME_SHIFTABLE] =
    ["ev", "washing_machine", "dishwasher", "dryer"];
pub const CURTAILABLE_NAME: &str = "ac";
pub const NON_SHIFTABLE_NAME: &str = "base";

/// The six-appliance inventory every loader and generator produces.
/// Appliances a household does not own keep a zero series.
pub fn standard_inventory() -> Vec<Appliance> {
    let mut out: Vec<Appliance> = TIME_SHIFTABLE_NAMES
        .iter()
        .enumerate()
        .map(|(i, n)| Appliance::new(i, *n, ApplianceClass::TimeShiftable))
        .collect();
    out.push(Appliance::new(4, CURTAILABLE_NAME, ApplianceClass::PowerCurtailable));
    out.push(Appliance::new(5, NON_SHIFTABLE_NAME, ApplianceClass::NonShiftable));
    out
}

/// A position in the household series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlotIndex {
    pub day: usize,
    pub slot: usize,
}

impl SlotIndex {
    pub fn new(day: usize, slot: usize) -> Result<Self> {
        if slot >= SLOTS_PER_DAY {
            return Err(Error::Contract(format!("slot {slot} is not in 0..96")));
        }
        Ok(Self { day, slot })
    }

    pub fn hour(&self) -> usize {
        self.slot / 4
    }

    /// Offset into a household series.
    pub fn offset(&self) -> usize {
        self.day * SLOTS_PER_DAY + self.slot
    }
}

/// An appliance inventory with its no-DR (counterfactual) demand in kW at
/// 15-minute resolution. `demand[i]` belongs to `appliances[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Household {
    pub id: String,
    pub appliances: Vec<Appliance>,
    pub demand: Vec<Vec<f64>>,
    /// Calendar date of each day in the series.
    pub dates: Vec<NaiveDate>,
}

impl Household {
    pub fn new(
        id: impl Into<String>,
        appliances: Vec<Appliance>,
        demand: Vec<Vec<f64>>,
        dates: Vec<NaiveDate>,
    ) -> Result<Self> {
        let h = Self {
            id: id.into(),
            appliances,
            demand,
            dates,
        };
        h.validate()?;
        Ok(h)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidHousehold(m));
        if self.demand.len() != self.appliances.len() {
            return bad(format!(
                "{} demand series for {} appliances",
                self.demand.len(),
                self.appliances.len()
            ));
        }
        let mut ids: Vec<usize> = self.appliances.iter().map(|a| a.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate appliance id".into());
        }
        let len = self.demand.first().map_or(0, Vec::len);
        if len % SLOTS_PER_DAY != 0 {
            return bad(format!("series length {len} is not a whole number of days"));
        }
        if len / SLOTS_PER_DAY != self.dates.len() {
            return bad(format!(
                "{} days of demand but {} dates",
                len / SLOTS_PER_DAY,
                self.dates.len()
            ));
        }
        for (a, series) in self.appliances.iter().zip(&self.demand) {
            if series.len() != len {
                return bad(format!("series of '{}' has length {}", a.name, series.len()));
            }
            if let Some(v) = series.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                return bad(format!("series of '{}' holds invalid value {v}", a.name));
            }
        }
        let count = |c| self.appliances.iter().filter(|a| a.class == c).count();
        if count(ApplianceClass::PowerCurtailable) > 1 {
            return bad("more than one power-curtailable appliance".into());
        }
        if count(ApplianceClass::TimeShiftable) > MAX_TIME_SHIFTABLE {
            return bad("more than four time-shiftable appliances".into());
        }
        Ok(())
    }

    pub fn days(&self) -> usize {
        self.dates.len()
    }

    pub fn appliance_index(&self, name: &str) -> Option<usize> {
        self.appliances.iter().position(|a| a.name == name)
    }

    fn check(&self, t: SlotIndex) -> Result<()> {
        if t.day >= self.days() || t.slot >= SLOTS_PER_DAY {
            return Err(Error::SlotOutOfRange {
                day: t.day,
                slot: t.slot,
                days: self.days(),
            });
        }
        Ok(())
    }

    /// Demand of appliance `i` at `t`.
    pub fn demand_at(&self, i: usize, t: SlotIndex) -> Result<f64> {
        self.check(t)?;
        Ok(self.demand[i][t.offset()])
    }

    /// Series indices of each class, in inventory order.
    pub fn class_indices(&self, class: ApplianceClass) -> Vec<usize> {
        self.appliances
            .iter()
            .enumerate()
            .filter(|(_, a)| a.class == class)
            .map(|(i, _)| i)
            .collect()
    }

    /// Appends the appliances of `other`, renumbering their ids. Both
    /// households must cover the same dates.
    pub fn merged(&self, other: &Household) -> Result<Household> {
        if self.dates != other.dates {
            return Err(Error::InvalidHousehold("merged households differ in dates".into()));
        }
        let offset = self.appliances.iter().map(|a| a.id + 1).max().unwrap_or(0);
        let mut appliances = self.appliances.clone();
        appliances.extend(other.appliances.iter().map(|a| Appliance {
            id: a.id + offset,
            ..a.clone()
        }));
        let mut demand = self.demand.clone();
        demand.extend(other.demand.iter().cloned());
        Household::new(
            format!("{}+{}", self.id, other.id),
            appliances,
            demand,
            self.dates.clone(),
        )
    }
}

/// Total counterfactual demand `D` at `t`.
pub fn total_demand(h: &Household, t: SlotIndex) -> Result<f64> {
    h.check(t)?;
    let k = t.offset();
    Ok(h.demand.iter().map(|s| s[k]).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition<'a> {
    pub time_shiftable: Vec<&'a Appliance>,
    pub power_curtailable: Vec<&'a Appliance>,
    pub non_shiftable: Vec<&'a Appliance>,
}

pub fn classify_partition(h: &Household) -> Partition<'_> {
    let mut p = Partition {
        time_shiftable: Vec::new(),
        power_curtailable: Vec::new(),
        non_shiftable: Vec::new(),
    };
    for a in &h.appliances {
        match a.class {
            ApplianceClass::TimeShiftable => p.time_shiftable.push(a),
            ApplianceClass::PowerCurtailable => p.power_curtailable.push(a),
            ApplianceClass::NonShiftable => p.non_shiftable.push(a),
        }
    }
    p
}

/// A start request of a time-shiftable appliance: raised at the first slot
/// of a contiguous positive-demand run, carrying that run as its profile.
#[derive(Debug, Clone, PartialEq)]
pub struct TsRequest {
    pub slot: usize,
    pub profile: Vec<f64>,
}

/// Requests of series `i` within `day`. Runs crossing midnight are split.
pub fn ts_requests(h: &Household, i: usize, day: usize) -> Result<Vec<TsRequest>> {
    h.check(SlotIndex { day, slot: 0 })?;
    let day_series = &h.demand[i][day * SLOTS_PER_DAY..(day + 1) * SLOTS_PER_DAY];
    Ok(runs(day_series))
}

pub(crate) fn runs(series: &[f64]) -> Vec<TsRequest> {
    let mut out = Vec::new();
    let mut current: Option<TsRequest> = None;
    for (slot, &v) in series.iter().enumerate() {
        if v > 0.0 {
            current
                .get_or_insert_with(|| TsRequest {
                    slot,
                    profile: Vec::new(),
                })
                .profile
                .push(v);
        } else if let Some(r) = current.take() {
            out.push(r);
        }
    }
    out.extend(current);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let d0 = NaiveDate::from_ymd_opt(2018, 4, 1).unwrap();
        (0..n).map(|i| d0 + chrono::Days::new(i as u64)).collect()
    }

    fn household(values: &[(&str, ApplianceClass, f64)]) -> Household {
        let appliances = values
            .iter()
            .enumerate()
            .map(|(i, (n, c, _))| Appliance::new(i, *n, *c))
            .collect();
        let demand = values.iter().map(|(_, _, v)| vec![*v; 96]).collect();
        Household::new("h", appliances, demand, dates(1)).unwrap()
    }

    #[test]
    fn total_demand_sums_appliances() {
        use ApplianceClass::*;
        let h = household(&[("ev", TimeShiftable, 2.0), ("ac", PowerCurtailable, 1.0), ("base", NonShiftable, 0.5)]);
        assert_eq!(total_demand(&h, SlotIndex::new(0, 10).unwrap()).unwrap(), 3.5);
        let z = household(&[("ac", PowerCurtailable, 0.0), ("base", NonShiftable, 0.0)]);
        assert_eq!(total_demand(&z, SlotIndex::new(0, 0).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_slot_is_an_error() {
        let h = household(&[("base", ApplianceClass::NonShiftable, 1.0)]);
        let err = total_demand(&h, SlotIndex { day: 1, slot: 0 }).unwrap_err();
        assert!(matches!(err, Error::SlotOutOfRange { day: 1, .. }));
        assert!(SlotIndex::new(0, 96).is_err());
    }

    #[test]
    fn partition_maps_classes() {
        use ApplianceClass::*;
        let h = household(&[("ev", TimeShiftable, 1.0), ("ac", PowerCurtailable, 1.0), ("base", NonShiftable, 1.0)]);
        let p = classify_partition(&h);
        assert_eq!(p.time_shiftable[0].name, "ev");
        assert_eq!(p.power_curtailable[0].name, "ac");
        assert_eq!(p.non_shiftable[0].name, "base");

        let h = household(&[("ac", PowerCurtailable, 1.0), ("base", NonShiftable, 1.0)]);
        let p = classify_partition(&h);
        assert!(p.time_shiftable.is_empty());
        assert_eq!(p.power_curtailable.len(), 1);
    }

    #[test]
    fn validation_rejects_bad_inputs() {
        let inv = vec![Appliance::new(0, "base", ApplianceClass::NonShiftable)];
        assert!(Household::new("h", inv.clone(), vec![vec![1.0; 95]], dates(1)).is_err());
        assert!(Household::new("h", inv.clone(), vec![vec![-1.0; 96]], dates(1)).is_err());
        assert!(Household::new("h", inv.clone(), vec![vec![1.0; 96]], dates(2)).is_err());
        let two_ac = vec![
            Appliance::new(0, "ac", ApplianceClass::PowerCurtailable),
            Appliance::new(1, "ac2", ApplianceClass::PowerCurtailable),
        ];
        assert!(Household::new("h", two_ac, vec![vec![0.0; 96]; 2], dates(1)).is_err());
    }

    #[test]
    fn runs_are_split_on_zero() {
        let r = runs(&[0.0, 1.0, 2.0, 0.0, 3.0]);
        assert_eq!(r.len(), 2);
        assert_eq!(r[0], TsRequest { slot: 1, profile: vec![1.0, 2.0] });
        assert_eq!(r[1], TsRequest { slot: 4, profile: vec![3.0] });
        assert!(runs(&[0.0; 4]).is_empty());
    }

    #[test]
    fn hour_of_slot() {
        assert_eq!(SlotIndex::new(3, 73).unwrap().hour(), 18);
        assert_eq!(SlotIndex::new(3, 73).unwrap().offset(), 3 * 96 + 73);
    }
}
