//! CSTR model: continuous right-hand side, fixed-step RK4 integration with a
//! zero-order hold on the coolant temperature, and box constraints.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const CONC_MIN: f64 = 0.0;
pub const CONC_MAX: f64 = 1.0;
pub const TEMP_MIN: f64 = 345.0;
pub const TEMP_MAX: f64 = 355.0;
pub const COOLANT_MIN: f64 = 285.0;
pub const COOLANT_MAX: f64 = 315.0;

/// Reactor condition: reactant concentration (mol/L) and temperature (K).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub conc: f64,
    pub temp: f64,
}

impl State {
    pub const fn new(conc: f64, temp: f64) -> Self {
        Self { conc, temp }
    }

    pub fn is_finite(&self) -> bool {
        self.conc.is_finite() && self.temp.is_finite()
    }
}

/// Coolant temperature (K).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub coolant: f64,
}

impl Action {
    pub const fn new(coolant: f64) -> Self {
        Self { coolant }
    }

    pub fn is_admissible(&self) -> bool {
        (COOLANT_MIN..=COOLANT_MAX).contains(&self.coolant)
    }
}

/// CSTR model parameters. Defaults are the benchmark values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CstrParams {
    /// Flow rate (L/min).
    pub q: f64,
    /// Volume (L).
    pub volume: f64,
    /// Arrhenius pre-exponential factor (1/min).
    pub k0: f64,
    /// Activation energy over gas constant (K).
    pub e_over_r: f64,
    /// Negative reaction enthalpy (J/mol).
    pub neg_dh: f64,
    /// Density (g/L).
    pub rho: f64,
    /// Heat capacity (J/(g K)).
    pub cp: f64,
    /// Jacket heat transfer coefficient (J/(min K)).
    pub ua: f64,
    /// Feed concentration (mol/L).
    pub conc_feed: f64,
    /// Feed temperature (K).
    pub temp_feed: f64,
}

impl Default for CstrParams {
    fn default() -> Self {
        Self {
            q: 100.0,
            volume: 100.0,
            k0: 7.2e10,
            e_over_r: 8750.0,
            neg_dh: 5.0e4,
            rho: 1000.0,
            cp: 0.239,
            ua: 5.0e4,
            conc_feed: 1.0,
            temp_feed: 350.0,
        }
    }
}

impl CstrParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("q", self.q),
            ("volume", self.volume),
            ("k0", self.k0),
            ("e_over_r", self.e_over_r),
            ("neg_dh", self.neg_dh),
            ("rho", self.rho),
            ("cp", self.cp),
            ("ua", self.ua),
            ("conc_feed", self.conc_feed),
            ("temp_feed", self.temp_feed),
        ];
        for (name, v) in fields {
            // k0 = 0 is allowed so the reaction can be switched off.
            let ok = if name == "k0" { v >= 0.0 } else { v > 0.0 };
            if !(ok && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "CSTR parameter `{name}` must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Sampling period and number of internal RK4 steps per period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    /// Sampling period (min).
    pub dt: f64,
    pub substeps: u32,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            substeps: 10,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "integrator dt must be positive, got {}",
                self.dt
            )));
        }
        if self.substeps == 0 {
            return Err(Error::InvalidConfig("integrator substeps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Time derivatives `(dc_A/dt, dT/dt)` of the CSTR.
pub fn rhs(x: State, u: Action, p: &CstrParams) -> (f64, f64) {
    let dilution = p.q / p.volume;
    let rate = p.k0 * (-p.e_over_r / x.temp).exp() * x.conc;
    let dconc = dilution * (p.conc_feed - x.conc) - rate;
    let dtemp = dilution * (p.temp_feed - x.temp)
        + p.neg_dh / (p.rho * p.cp) * rate
        + p.ua / (p.volume * p.rho * p.cp) * (u.coolant - x.temp);
    (dconc, dtemp)
}

/// One sampling period of the discrete-time map: `substeps` classical RK4
/// steps with the input held constant.
///
/// Returns [`Error::NonFinite`] if the integration blows up; the state is not
/// clamped.
pub fn step(x: State, u: Action, p: &CstrParams, cfg: &IntegratorConfig) -> Result<State> {
    let h = cfg.dt / f64::from(cfg.substeps);
    let mut s = x;
    for _ in 0..cfg.substeps {
        s = rk4(s, u, p, h);
    }
    if s.is_finite() {
        Ok(s)
    } else {
        Err(Error::NonFinite {
            conc: s.conc,
            temp: s.temp,
        })
    }
}

fn rk4(x: State, u: Action, p: &CstrParams, h: f64) -> State {
    let shift = |k: (f64, f64), c: f64| State::new(x.conc + c * k.0, x.temp + c * k.1);
    let k1 = rhs(x, u, p);
    let k2 = rhs(shift(k1, 0.5 * h), u, p);
    let k3 = rhs(shift(k2, 0.5 * h), u, p);
    let k4 = rhs(shift(k3, h), u, p);
    State::new(
        x.conc + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        x.temp + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

/// Closed box constraints on concentration and temperature.
pub fn in_physical_bounds(x: State) -> bool {
    (CONC_MIN..=CONC_MAX).contains(&x.conc) && (TEMP_MIN..=TEMP_MAX).contains(&x.temp)
}

/// A discrete-time plant `x' = f(x, u)`.
///
/// The CSTR is the production implementation; set computation, the
/// environment and the supervisor are generic so tests can substitute
/// contrived maps.
pub trait Model: Send + Sync {
    fn next_state(&self, x: State, u: Action) -> Result<State>;
}

/// The CSTR with a fixed integrator configuration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Cstr {
    pub params: CstrParams,
    pub integrator: IntegratorConfig,
}

impl Cstr {
    pub fn new(params: CstrParams, integrator: IntegratorConfig) -> Result<Self> {
        params.validate()?;
        integrator.validate()?;
        Ok(Self { params, integrator })
    }
}

impl Model for Cstr {
    fn next_state(&self, x: State, u: Action) -> Result<State> {
        step(x, u, &self.params, &self.integrator)
    }
}

impl<M: Model + ?Sized> Model for &M {
    fn next_state(&self, x: State, u: Action) -> Result<State> {
        (**self).next_state(x, u)
    }
}

impl<M: Model + ?Sized> Model for std::sync::Arc<M> {
    fn next_state(&self, x: State, u: Action) -> Result<State> {
        (**self).next_state(x, u)
    }
}
