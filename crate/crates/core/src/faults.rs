//! Fault taxonomy, rate arithmetic and reliability-driven scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum FaultClass {
    NoFault,
    PvLineToLine,
    PvOpenCircuit,
    MpptIgbtOpen,
    RegIgbtOpen,
    RegIgbtShort,
    BatteryGround,
}

impl FaultClass {
    pub const ALL: [FaultClass; 7] = [
        FaultClass::NoFault,
        FaultClass::PvLineToLine,
        FaultClass::PvOpenCircuit,
        FaultClass::MpptIgbtOpen,
        FaultClass::RegIgbtOpen,
        FaultClass::RegIgbtShort,
        FaultClass::BatteryGround,
    ];

    pub fn token(self) -> &'static str {
        match self {
            FaultClass::NoFault => "none",
            FaultClass::PvLineToLine => "pv_line_line",
            FaultClass::PvOpenCircuit => "pv_open",
            FaultClass::MpptIgbtOpen => "mppt_igbt_open",
            FaultClass::RegIgbtOpen => "reg_igbt_open",
            FaultClass::RegIgbtShort => "reg_igbt_short",
            FaultClass::BatteryGround => "battery_ground",
        }
    }
}

impl fmt::Display for FaultClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for FaultClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FaultClass::ALL
            .iter()
            .copied()
            .find(|c| c.token() == s)
            .ok_or_else(|| Error::Domain(format!("unknown fault class token `{s}`")))
    }
}

impl From<FaultClass> for String {
    fn from(c: FaultClass) -> String {
        c.token().to_string()
    }
}

impl TryFrom<String> for FaultClass {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Diagnosis task. Fixes the class set and its canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "system_5class")]
    System5class,
    #[serde(rename = "pv_3class")]
    Pv3class,
}

impl Task {
    pub fn classes(self) -> &'static [FaultClass] {
        match self {
            Task::System5class => &[
                FaultClass::NoFault,
                FaultClass::BatteryGround,
                FaultClass::MpptIgbtOpen,
                FaultClass::RegIgbtOpen,
                FaultClass::RegIgbtShort,
            ],
            Task::Pv3class => &[
                FaultClass::NoFault,
                FaultClass::PvLineToLine,
                FaultClass::PvOpenCircuit,
            ],
        }
    }

    pub fn index_of(self, c: FaultClass) -> Option<usize> {
        self.classes().iter().position(|&x| x == c)
    }

    pub fn token(self) -> &'static str {
        match self {
            Task::System5class => "system_5class",
            Task::Pv3class => "pv_3class",
        }
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "system_5class" | "system" => Ok(Task::System5class),
            "pv_3class" | "pv" => Ok(Task::Pv3class),
            _ => Err(Error::Config(format!("unknown task `{s}`"))),
        }
    }
}

/// Failures per hour from a test campaign: `(1/t_int)·(n_f/n_t)`.
pub fn fault_rate(t_int: f64, n_f: u64, n_t: u64) -> Result<f64> {
    if n_t == 0 {
        return Err(Error::Domain("n_t must be at least 1".into()));
    }
    if !(t_int > 0.0) || !t_int.is_finite() {
        return Err(Error::Domain(format!("t_int must be positive, got {t_int}")));
    }
    if n_f > n_t {
        return Err(Error::Domain(format!("n_f ({n_f}) exceeds n_t ({n_t})")));
    }
    Ok((n_f as f64 / n_t as f64) / t_int)
}

/// Rate band in h⁻¹ at the 40 °C reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateBand {
    pub min: f64,
    pub max: f64,
}

impl RateBand {
    pub fn new(min: f64, max: f64) -> Self {
        RateBand { min, max }
    }

    pub fn single(v: f64) -> Self {
        RateBand { min: v, max: v }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }
}

pub const RATE_TEMPERATURE_REF_C: f64 = 40.0;

pub fn default_rates() -> BTreeMap<String, RateBand> {
    let rows = [
        ("transistor", RateBand::new(1e-9, 70e-9)),
        ("thyristor", RateBand::new(36e-9, 360e-9)),
        ("digital_ic", RateBand::single(30e-9)),
        ("logic", RateBand::single(30e-9)),
        ("analog_switch", RateBand::single(2000e-9)),
        ("amplifier", RateBand::new(300e-9, 900e-9)),
        ("diode", RateBand::new(1e-9, 6e-9)),
        ("battery", RateBand::new(200e-9, 300e-9)),
        ("solar_array", RateBand::new(100e-9, 200e-9)),
    ];
    rows.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// System mode entered when a component fails.
pub fn component_fault(component: &str) -> FaultClass {
    match component {
        "transistor" => FaultClass::MpptIgbtOpen,
        "thyristor" => FaultClass::RegIgbtShort,
        "diode" => FaultClass::PvLineToLine,
        "battery" => FaultClass::BatteryGround,
        "solar_array" => FaultClass::PvOpenCircuit,
        // gate drive and sensing electronics: regulator stops switching
        _ => FaultClass::RegIgbtOpen,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub onset_s: f64,
    pub component: String,
    pub fault: FaultClass,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultSchedule {
    pub events: Vec<FaultEvent>,
}

/// First-failure time per component, exponential at the band midpoint.
///
/// One uniform draw `u ∈ (0, 1]` is consumed per component in map order
/// whether or not the component can fail, so the time for a component is
/// exactly `-ln(u)/λ` for its draw.
pub fn sample_schedule(
    rates: &BTreeMap<String, RateBand>,
    horizon_h: f64,
    seed: u64,
) -> Result<FaultSchedule> {
    if !(horizon_h > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon_h}")));
    }
    let mut rng = rng::stream(seed, "faults");
    let mut events = Vec::new();
    for (name, band) in rates {
        let u = 1.0 - rng.random::<f64>();
        let lambda = band.midpoint();
        if lambda <= 0.0 {
            continue;
        }
        let t_h = -u.ln() / lambda;
        if t_h <= horizon_h {
            events.push(FaultEvent {
                onset_s: t_h * 3600.0,
                component: name.clone(),
                fault: component_fault(name),
            });
        }
    }
    events.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s));
    events.dedup_by(|b, a| b.onset_s == a.onset_s);
    Ok(FaultSchedule { events })
}
