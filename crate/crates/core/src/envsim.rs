//! EPS plant: PV array → MPPT converter → regulator → battery → load.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faults::FaultClass;
use crate::rng;

pub const IRR_RANGE: (f64, f64) = (200.0, 1200.0);
pub const TEMP_RANGE: (f64, f64) = (-20.0, 80.0);
pub const PV_I_RANGE: (f64, f64) = (0.0, 30.0);
pub const PV_V_RANGE: (f64, f64) = (0.0, 60.0);
pub const BUS_V_RANGE: (f64, f64) = (0.0, 100.0);
pub const LOAD_I_RANGE: (f64, f64) = (0.0, 50.0);
pub const CELL_V_RANGE: (f64, f64) = (3.0, 4.2);
pub const BATTERY_I_MAX: f64 = 20.0;
pub const REGULATED_BUS_MAX: f64 = 48.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvSample {
    pub irradiance: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PvOutput {
    pub voltage: f64,
    pub current: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConverterOutput {
    pub bus_voltage: f64,
    pub current: f64,
    pub saturated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    pub soc: f64,
    pub cell_voltage: f64,
    /// signed, + = discharge
    pub current: f64,
    pub saturated: bool,
}

impl BatteryState {
    pub fn at_soc(soc: f64) -> Self {
        let soc = soc.clamp(0.0, 1.0);
        BatteryState {
            soc,
            cell_voltage: cell_voltage(soc),
            current: 0.0,
            saturated: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemSample {
    pub time_s: f64,
    pub env: EnvSample,
    pub pv: PvOutput,
    pub bus_voltage: f64,
    pub load_current: f64,
    pub battery: BatteryState,
    pub fault: FaultClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantParams {
    pub i_ref_a: f64,
    pub v_ref_v: f64,
    pub alpha_i: f64,
    pub alpha_v: f64,
    pub eta: f64,
    pub k_reg: f64,
    pub capacity_ah: f64,
    pub soc0: f64,
    /// load demand as a multiple of the healthy converter output
    pub load_balance: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            i_ref_a: 24.0,
            v_ref_v: 40.0,
            alpha_i: 0.0005,
            alpha_v: -0.004,
            eta: 0.95,
            k_reg: 1.0,
            capacity_ah: 20.0,
            soc0: 0.8,
            load_balance: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultParams {
    pub pv_strings: u32,
    pub l2l_fraction: f64,
    pub l2l_current_noise: f64,
    pub mppt_open_gain: f64,
    pub reg_open_gain: f64,
    pub leak_a: f64,
}

impl Default for FaultParams {
    fn default() -> Self {
        FaultParams {
            pv_strings: 4,
            l2l_fraction: 0.15,
            l2l_current_noise: 0.02,
            mppt_open_gain: 0.985,
            reg_open_gain: 0.1,
            leak_a: 5.0,
        }
    }
}

impl FaultParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |k: &str, v: f64| Error::Config(format!("fault parameter `{k}` out of range: {v}"));
        if self.pv_strings < 2 {
            return Err(bad("pv_strings", self.pv_strings as f64));
        }
        if !(0.0..1.0).contains(&self.l2l_fraction) {
            return Err(bad("l2l_fraction", self.l2l_fraction));
        }
        if !(self.l2l_current_noise >= 0.0) {
            return Err(bad("l2l_current_noise", self.l2l_current_noise));
        }
        if !(0.0..=1.0).contains(&self.mppt_open_gain) {
            return Err(bad("mppt_open_gain", self.mppt_open_gain));
        }
        if !(0.0..=1.0).contains(&self.reg_open_gain) {
            return Err(bad("reg_open_gain", self.reg_open_gain));
        }
        if !(self.leak_a >= 0.0 && self.leak_a <= BATTERY_I_MAX) {
            return Err(bad("leak_a", self.leak_a));
        }
        Ok(())
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |k: &str, v: f64| Error::Config(format!("plant parameter `{k}` out of range: {v}"));
        if !(self.i_ref_a > 0.0) {
            return Err(bad("i_ref_a", self.i_ref_a));
        }
        if !(self.v_ref_v > 0.0) {
            return Err(bad("v_ref_v", self.v_ref_v));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(bad("eta", self.eta));
        }
        if !(self.k_reg > 0.0) {
            return Err(bad("k_reg", self.k_reg));
        }
        if !(self.capacity_ah > 0.0) {
            return Err(bad("capacity_ah", self.capacity_ah));
        }
        if !(0.0..=1.0).contains(&self.soc0) {
            return Err(bad("soc0", self.soc0));
        }
        if !(self.load_balance >= 0.0) {
            return Err(bad("load_balance", self.load_balance));
        }
        if !self.alpha_i.is_finite() || !self.alpha_v.is_finite() {
            return Err(bad("alpha", f64::NAN));
        }
        Ok(())
    }
}

/// Band-limited walk shape. `ar` is the velocity autoregression, `decay` the
/// leak of the integrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvParams {
    pub ar: f64,
    pub decay: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams { ar: 0.5, decay: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub sample_count: usize,
    pub seed: u64,
    pub timestep_s: f64,
    pub fault: FaultClass,
    pub fault_params: FaultParams,
    pub plant: PlantParams,
    pub env: EnvParams,
    pub noise_sigma_frac: f64,
    /// SOC channel noise, fraction of full charge
    pub soc_noise_frac: f64,
}

impl ScenarioConfig {
    pub fn new(fault: FaultClass, sample_count: usize, seed: u64) -> Self {
        ScenarioConfig {
            sample_count,
            seed,
            timestep_s: 30.0,
            fault,
            fault_params: FaultParams::default(),
            plant: PlantParams::default(),
            env: EnvParams::default(),
            noise_sigma_frac: 0.005,
            soc_noise_frac: 0.01,
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.noise_sigma_frac = 0.0;
        self.soc_noise_frac = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_count == 0 {
            return Err(Error::Config("sample_count must be at least 1".into()));
        }
        if !(self.timestep_s > 0.0) {
            return Err(Error::Config(format!("timestep_s must be positive, got {}", self.timestep_s)));
        }
        if !(self.noise_sigma_frac >= 0.0) || !(self.soc_noise_frac >= 0.0) {
            return Err(Error::Config("noise fractions must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.env.ar) || !(0.0..1.0).contains(&self.env.decay) {
            return Err(Error::Config("env ar and decay must lie in [0, 1)".into()));
        }
        self.fault_params.validate()?;
        self.plant.validate()
    }
}

fn walk(n: usize, p: &EnvParams, rng: &mut rng::Rng) -> Vec<f64> {
    let (mut v, mut x) = (0.0f64, 0.0f64);
    (0..n)
        .map(|_| {
            v = p.ar * v + rng.sample::<f64, _>(StandardNormal);
            x = p.decay * x + 0.05 * v;
            x
        })
        .collect()
}

// stretch onto the inner 90% of [lo, hi]
fn rescale(w: &mut [f64], lo: f64, hi: f64) {
    let span = hi - lo;
    let (a, b) = (lo + 0.05 * span, hi - 0.05 * span);
    let min = w.iter().copied().fold(f64::INFINITY, f64::min);
    let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for x in w.iter_mut() {
        *x = if max > min {
            a + (*x - min) / (max - min) * (b - a)
        } else {
            0.5 * (lo + hi)
        };
    }
}

pub fn generate_env_profile(count: usize, seed: u64) -> Result<Vec<EnvSample>> {
    generate_env_profile_with(count, seed, &EnvParams::default())
}

pub fn generate_env_profile_with(count: usize, seed: u64, p: &EnvParams) -> Result<Vec<EnvSample>> {
    if count == 0 {
        return Err(Error::Domain("empty environment profile requested".into()));
    }
    let mut rng = rng::stream(seed, "envsim/profile");
    let mut irr = walk(count, p, &mut rng);
    let mut temp = walk(count, p, &mut rng);
    rescale(&mut irr, IRR_RANGE.0, IRR_RANGE.1);
    rescale(&mut temp, TEMP_RANGE.0, TEMP_RANGE.1);
    Ok(irr
        .into_iter()
        .zip(temp)
        .map(|(irradiance, temperature)| EnvSample {
            irradiance,
            temperature,
        })
        .collect())
}

pub fn pv_response(env: EnvSample, fault: FaultClass, plant: &PlantParams, fp: &FaultParams) -> PvOutput {
    let dt = env.temperature - 25.0;
    let mut current = plant.i_ref_a * (env.irradiance / 1000.0) * (1.0 + plant.alpha_i * dt);
    let mut voltage = plant.v_ref_v * (1.0 + plant.alpha_v * dt);
    match fault {
        FaultClass::PvOpenCircuit => {
            let np = fp.pv_strings as f64;
            current *= (np - 1.0) / np;
        }
        FaultClass::PvLineToLine => voltage *= 1.0 - fp.l2l_fraction,
        _ => {}
    }
    PvOutput {
        voltage: voltage.clamp(PV_V_RANGE.0, PV_V_RANGE.1),
        current: current.clamp(PV_I_RANGE.0, PV_I_RANGE.1),
    }
}

pub fn converter_chain(pv: PvOutput, fault: FaultClass, plant: &PlantParams, fp: &FaultParams) -> ConverterOutput {
    let p_in = pv.voltage * pv.current;
    if pv.voltage <= 0.0 || p_in <= 0.0 {
        return ConverterOutput {
            bus_voltage: 0.0,
            current: 0.0,
            saturated: false,
        };
    }
    let p_out = plant.eta * p_in;
    let (bus, saturated) = if fault == FaultClass::RegIgbtShort {
        // regulator bypassed, bus follows the array
        let b = pv.voltage.clamp(BUS_V_RANGE.0, BUS_V_RANGE.1);
        (b, b != pv.voltage)
    } else {
        let raw = REGULATED_BUS_MAX * plant.k_reg;
        let b = raw.clamp(0.0, REGULATED_BUS_MAX);
        (b, b != raw)
    };
    let gain = match fault {
        FaultClass::MpptIgbtOpen => fp.mppt_open_gain,
        FaultClass::RegIgbtOpen => fp.reg_open_gain,
        _ => 1.0,
    };
    ConverterOutput {
        bus_voltage: bus,
        current: if bus > 0.0 { gain * p_out / bus } else { 0.0 },
        saturated,
    }
}

/// Open-circuit cell voltage shape, monotone with g(0)=0 and g(1)=1.
pub fn soc_shape(soc: f64) -> f64 {
    let s = soc.clamp(0.0, 1.0);
    0.5 * (s + 1.0 - (1.0 - s).powi(3))
}

pub fn cell_voltage(soc: f64) -> f64 {
    CELL_V_RANGE.0 + (CELL_V_RANGE.1 - CELL_V_RANGE.0) * soc_shape(soc)
}

/// Coulomb counting. `net_current` is + for discharge; the ground fault adds
/// its leakage on top.
pub fn battery_step(
    state: BatteryState,
    net_current: f64,
    dt: f64,
    fault: FaultClass,
    capacity_ah: f64,
    fp: &FaultParams,
) -> Result<BatteryState> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let mut i = net_current;
    if fault == FaultClass::BatteryGround {
        i += fp.leak_a;
    }
    let i_c = i.clamp(-BATTERY_I_MAX, BATTERY_I_MAX);
    let raw = state.soc - i_c * dt / (capacity_ah * 3600.0);
    let soc = raw.clamp(0.0, 1.0);
    Ok(BatteryState {
        soc,
        cell_voltage: cell_voltage(soc),
        current: i_c,
        saturated: raw != soc || i_c != i,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub samples: Vec<SystemSample>,
    /// observed-channel clamp events
    pub clamp_events: usize,
    pub battery_saturations: usize,
}

fn noisy(x: f64, sigma: f64, range: (f64, f64), rng: &mut rng::Rng, clamps: &mut usize) -> f64 {
    let v = if sigma > 0.0 {
        x + sigma * rng.sample::<f64, _>(StandardNormal)
    } else {
        x
    };
    let c = v.clamp(range.0, range.1);
    if c != v {
        *clamps += 1;
    }
    c
}

pub fn simulate(cfg: &ScenarioConfig) -> Result<SimRun> {
    cfg.validate()?;
    let env = generate_env_profile_with(cfg.sample_count, cfg.seed, &cfg.env)?;
    simulate_on(cfg, &env)
}

/// Simulate on a given environment profile. `cfg.sample_count` is ignored.
pub fn simulate_on(cfg: &ScenarioConfig, env: &[EnvSample]) -> Result<SimRun> {
    cfg.validate()?;
    let fault = cfg.fault;
    let (plant, fp) = (&cfg.plant, &cfg.fault_params);
    let mut noise = rng::stream(cfg.seed, &format!("envsim/noise/{}", fault.token()));
    let mut ripple = rng::stream(cfg.seed, &format!("envsim/l2l/{}", fault.token()));
    let s = cfg.noise_sigma_frac;
    let mut battery = BatteryState::at_soc(plant.soc0);
    let mut out = Vec::with_capacity(env.len());
    let (mut clamps, mut sat) = (0usize, 0usize);

    for (k, &e) in env.iter().enumerate() {
        let mut pv = pv_response(e, fault, plant, fp);
        if fault == FaultClass::PvLineToLine && fp.l2l_current_noise > 0.0 {
            let f = 1.0 + fp.l2l_current_noise * ripple.sample::<f64, _>(StandardNormal);
            pv.current = (pv.current * f).clamp(PV_I_RANGE.0, PV_I_RANGE.1);
        }
        let conv = converter_chain(pv, fault, plant, fp);
        let healthy = converter_chain(pv_response(e, FaultClass::NoFault, plant, fp), FaultClass::NoFault, plant, fp);
        let demand = plant.load_balance * healthy.current;
        battery = battery_step(battery, demand - conv.current, cfg.timestep_s, fault, plant.capacity_ah, fp)?;
        if battery.saturated {
            sat += 1;
        }
        // leakage returns through the load-side shunt
        let load = conv.current
            + if fault == FaultClass::BatteryGround {
                fp.leak_a
            } else {
                0.0
            };

        let irradiance = noisy(e.irradiance, s * IRR_RANGE.1, IRR_RANGE, &mut noise, &mut clamps);
        let temperature = noisy(e.temperature, s * 100.0, TEMP_RANGE, &mut noise, &mut clamps);
        let pv_v = noisy(pv.voltage, s * PV_V_RANGE.1, PV_V_RANGE, &mut noise, &mut clamps);
        let pv_i = noisy(pv.current, s * PV_I_RANGE.1, PV_I_RANGE, &mut noise, &mut clamps);
        let bus_v = noisy(conv.bus_voltage, s * BUS_V_RANGE.1, BUS_V_RANGE, &mut noise, &mut clamps);
        let load_i = noisy(load, s * LOAD_I_RANGE.1, LOAD_I_RANGE, &mut noise, &mut clamps);
        let soc = noisy(battery.soc, cfg.soc_noise_frac, (0.0, 1.0), &mut noise, &mut clamps);
        let cell_v = noisy(battery.cell_voltage, s * CELL_V_RANGE.1, CELL_V_RANGE, &mut noise, &mut clamps);

        out.push(SystemSample {
            time_s: k as f64 * cfg.timestep_s,
            env: EnvSample {
                irradiance,
                temperature,
            },
            pv: PvOutput {
                voltage: pv_v,
                current: pv_i,
            },
            bus_voltage: bus_v,
            load_current: load_i,
            battery: BatteryState {
                soc,
                cell_voltage: cell_v,
                current: battery.current,
                saturated: battery.saturated,
            },
            fault,
        });
    }
    Ok(SimRun {
        samples: out,
        clamp_events: clamps,
        battery_saturations: sat,
    })
}
