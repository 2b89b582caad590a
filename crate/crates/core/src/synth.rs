//! Synthetic households with the standard inventory, for runs without
//! the metered data set.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{standard_inventory, Household, SLOTS_PER_DAY};
use crate::error::{Error, Result};

/// Appliance mix of a generated household.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Archetype {
    /// EV, washer, dishwasher, dryer and AC.
    Full,
    NoEv,
    NoAc,
    /// Washer, dryer and AC.
    Laundry,
    /// AC as the only controllable appliance.
    AcOnly,
}

impl Archetype {
    pub const ALL: [Archetype; 5] = [
        Archetype::Full,
        Archetype::NoEv,
        Archetype::NoAc,
        Archetype::Laundry,
        Archetype::AcOnly,
    ];

    /// Ownership of ev, washer, dishwasher, dryer, ac.
    pub fn owns(self) -> [bool; 5] {
        match self {
            Archetype::Full => [true; 5],
            Archetype::NoEv => [false, true, true, true, true],
            Archetype::NoAc => [true, true, true, true, false],
            Archetype::Laundry => [false, true, false, true, true],
            Archetype::AcOnly => [false, false, false, false, true],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Archetype::Full => "full",
            Archetype::NoEv => "no-ev",
            Archetype::NoAc => "no-ac",
            Archetype::Laundry => "laundry",
            Archetype::AcOnly => "ac-only",
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Archetype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Archetype::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Contract(format!("unknown archetype '{s}'")))
    }
}

pub fn first_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2018, 4, 1).expect("valid date")
}

/// April through October.
pub const SYNTH_DAYS: usize = 214;

struct Program {
    /// Probability of a run on a given day.
    chance: f64,
    /// Earliest and latest start slot.
    window: (usize, usize),
    /// Run length range in slots.
    length: (usize, usize),
    power: f64,
}

const PROGRAMS: [Program; 4] = [
    // ev: evening charging
    Program {
        chance: 0.6,
        window: (68, 84),
        length: (6, 10),
        power: 3.3,
    },
    // washing machine
    Program {
        chance: 0.45,
        window: (32, 76),
        length: (4, 6),
        power: 0.5,
    },
    // dishwasher: after dinner
    Program {
        chance: 0.5,
        window: (76, 86),
        length: (4, 6),
        power: 1.0,
    },
    // dryer
    Program {
        chance: 0.35,
        window: (40, 80),
        length: (3, 5),
        power: 2.0,
    },
];

fn bump(hour: f64, centre: f64, width: f64) -> f64 {
    (-((hour - centre) / width).powi(2)).exp()
}

fn program_run(rng: &mut ChaCha8Rng, p: &Program, series: &mut [f64]) {
    if rng.gen::<f64>() >= p.chance {
        return;
    }
    let start = rng.gen_range(p.window.0..=p.window.1);
    let len = rng.gen_range(p.length.0..=p.length.1).min(SLOTS_PER_DAY - 1 - start);
    for (k, v) in series[start..start + len].iter_mut().enumerate() {
        // heating phase at the start of wet-appliance cycles
        let shape = if k == 0 { 1.0 } else { 0.8 + 0.2 * ((k % 3) as f64 / 2.0) };
        *v = p.power * shape;
    }
}

/// `SYNTH_DAYS` days of demand starting at [`first_date`]. Every owned
/// time-shiftable appliance runs at most once a day as one contiguous
/// block that ends before midnight.
pub fn synth_household(seed: u64, archetype: Archetype) -> Household {
    synth_household_days(seed, archetype, SYNTH_DAYS)
}

pub fn synth_household_days(seed: u64, archetype: Archetype, days: usize) -> Household {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(archetype as u64);
    let owns = archetype.owns();
    let n = days * SLOTS_PER_DAY;
    let mut demand = vec![vec![0.0; n]; 6];
    let mut dates = Vec::with_capacity(days);
    for d in 0..days {
        let date = first_date() + chrono::Days::new(d as u64);
        dates.push(date);
        let range = d * SLOTS_PER_DAY..(d + 1) * SLOTS_PER_DAY;
        // seasonal temperature peaking in mid July
        let doy = date.ordinal() as f64;
        let mean_temp = 21.0 + 9.0 * (2.0 * PI * (doy - 105.0) / 365.0).sin() + rng.gen_range(-2.5..2.5);
        let weekend = date.weekday().number_from_monday() >= 6;
        for (k, slot) in range.clone().enumerate() {
            let hour = (k as f64 + 0.5) / 4.0;
            let mut base = 0.35
                + 0.5 * bump(hour, 7.5, 1.2)
                + 0.9 * bump(hour, 19.0, 2.0)
                + if weekend { 0.3 * bump(hour, 13.0, 3.0) } else { 0.0 };
            base *= 1.0 + rng.gen_range(-0.1..0.1);
            demand[5][slot] = base;
            if owns[4] {
                let temp = mean_temp + 6.0 * (2.0 * PI * (hour - 9.0) / 24.0).sin();
                let ac = (0.4 * (temp - 24.0)).clamp(0.0, 3.5);
                demand[4][slot] = if ac > 0.0 { ac * (1.0 + rng.gen_range(-0.05..0.05)) } else { 0.0 };
            }
        }
        for (m, p) in PROGRAMS.iter().enumerate() {
            if owns[m] {
                program_run(&mut rng, p, &mut demand[m][range.clone()]);
            }
        }
    }
    Household::new(
        format!("synth-{archetype}-{seed}"),
        standard_inventory(),
        demand,
        dates,
    )
    .expect("generated household is valid")
}
