//! Small domain enums shared across modules.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Trial arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    /// Text report behind a link.
    C,
    /// Image-based usage report.
    T1,
    /// Image report plus personalized suggestions, scenarios and analogies.
    T2,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::C, Arm::T1, Arm::T2];

    pub fn index(self) -> usize {
        match self {
            Arm::C => 0,
            Arm::T1 => 1,
            Arm::T2 => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Arm> {
        Arm::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Arm::C => "C",
            Arm::T1 => "T1",
            Arm::T2 => "T2",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "C" | "c" => Ok(Arm::C),
            "T1" | "t1" => Ok(Arm::T1),
            "T2" | "t2" => Ok(Arm::T2),
            other => Err(format!("unknown arm `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resource {
    /// kWh per room-day.
    Electricity,
    /// Litres per person-day.
    HotWater,
}

impl Resource {
    pub const ALL: [Resource; 2] = [Resource::Electricity, Resource::HotWater];

    pub fn as_str(self) -> &'static str {
        match self {
            Resource::Electricity => "electricity",
            Resource::HotWater => "hot_water",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Resource::Electricity => "kWh/room-day",
            Resource::HotWater => "L/person-day",
        }
    }

    /// Unit of a monthly saving quantity.
    pub fn saving_unit(self) -> &'static str {
        match self {
            Resource::Electricity => "kWh",
            Resource::HotWater => "L",
        }
    }
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Resource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "electricity" => Ok(Resource::Electricity),
            "hot_water" => Ok(Resource::HotWater),
            other => Err(format!("unknown resource `{other}`")),
        }
    }
}

/// Number of weekly nudge rounds.
pub const ROUNDS: u32 = 5;
/// Length of the pre-intervention baseline, in days.
pub const BASELINE_DAYS: u32 = 28;
/// Length of the intervention period, in days.
pub const INTERVENTION_DAYS: u32 = 35;
pub const DAYS_PER_ROUND: u32 = 7;

/// Intervention round (1..=5) for a study day, `None` for baseline days.
pub fn round_of_day(day: u32) -> Option<u32> {
    if day < BASELINE_DAYS || day >= BASELINE_DAYS + INTERVENTION_DAYS {
        None
    } else {
        Some((day - BASELINE_DAYS) / DAYS_PER_ROUND + 1)
    }
}

/// Study week 1..=9 (4 baseline weeks then 5 intervention weeks).
pub fn week_of_day(day: u32) -> u32 {
    day / DAYS_PER_ROUND + 1
}

/// First study day of intervention round `round`.
pub fn round_start_day(round: u32) -> u32 {
    BASELINE_DAYS + (round - 1) * DAYS_PER_ROUND
}
