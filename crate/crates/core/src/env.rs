//! Episodic environment around the discrete-time CSTR.
//!
//! In training mode an action that would leave the safe set is penalised and
//! the state is reset to its previous value; the episode continues. In
//! testing mode nothing is reset and the episode ends at the first exit.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cis::CisGrid;
use crate::dynamics::{
    in_physical_bounds, Action, Model, State, CONC_MAX, CONC_MIN, TEMP_MAX, TEMP_MIN,
};
use crate::{Error, Result, SimRng};

/// Upper bound on rejection-sampling attempts per initial state.
pub const MAX_INIT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub r_safe: f64,
    pub r_unsafe: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            r_safe: 10_000.0,
            r_unsafe: -1_000.0,
        }
    }
}

impl RewardSpec {
    pub fn validate(&self) -> Result<()> {
        if self.r_safe > self.r_unsafe && self.r_safe.is_finite() && self.r_unsafe.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "reward for staying safe ({}) must exceed the penalty ({})",
                self.r_safe, self.r_unsafe
            )))
        }
    }
}

/// Which set defines "safe": the invariant set, or the physical box for the
/// baseline that ignores it.
#[derive(Debug, Clone)]
pub enum EnvMode {
    WithCis(Arc<CisGrid>),
    NoCis,
}

impl EnvMode {
    pub fn is_safe(&self, x: State) -> bool {
        match self {
            EnvMode::WithCis(grid) => grid.contains(x),
            EnvMode::NoCis => in_physical_bounds(x),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            EnvMode::WithCis(_) => "with_cis",
            EnvMode::NoCis => "no_cis",
        }
    }
}

/// What a controller prescribes at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub action: Action,
    /// Gaussian sample before the tanh squashing.
    pub pre_squash: f64,
    pub log_prob: f64,
    pub value: f64,
}

impl Decision {
    /// A decision without any policy statistics attached.
    pub fn fixed(action: Action) -> Self {
        Self {
            action,
            pre_squash: 0.0,
            log_prob: 0.0,
            value: 0.0,
        }
    }
}

pub trait Controller {
    fn decide(&self, x: State, rng: &mut SimRng, stochastic: bool) -> Decision;

    /// Critic estimate used to bootstrap a truncated episode.
    fn value(&self, _x: State) -> f64 {
        0.0
    }
}

impl<F: Fn(State) -> Action> Controller for F {
    fn decide(&self, x: State, _: &mut SimRng, _: bool) -> Decision {
        Decision::fixed(self(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub x: State,
    pub u: Action,
    pub pre_squash: f64,
    pub reward: f64,
    pub x_next: State,
    pub reset_applied: bool,
    pub log_prob: f64,
    pub value_est: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub score: f64,
    pub steps: usize,
    pub failed: bool,
    pub transitions: Vec<Transition>,
    /// Critic value of the state the episode was truncated at.
    pub bootstrap_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next: State,
    pub reward: f64,
    pub reset_applied: bool,
}

#[derive(Debug, Clone)]
pub struct Env<M> {
    pub model: M,
    pub mode: EnvMode,
    pub reward: RewardSpec,
    pub horizon: usize,
}

impl<M: Model> Env<M> {
    pub fn new(model: M, mode: EnvMode, reward: RewardSpec, horizon: usize) -> Result<Self> {
        reward.validate()?;
        if horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be >= 1".into()));
        }
        if let EnvMode::WithCis(grid) = &mode {
            if grid.is_empty() {
                return Err(Error::InvalidConfig("invariant set grid is empty".into()));
            }
        }
        Ok(Self {
            model,
            mode,
            reward,
            horizon,
        })
    }

    pub fn is_safe(&self, x: State) -> bool {
        self.mode.is_safe(x)
    }

    /// Uniform rejection sampling over the physical box until the state is
    /// safe for this mode.
    pub fn sample_initial(&self, rng: &mut SimRng) -> Result<State> {
        for _ in 0..MAX_INIT_ATTEMPTS {
            let x = State::new(
                rng.random_range(CONC_MIN..=CONC_MAX),
                rng.random_range(TEMP_MIN..=TEMP_MAX),
            );
            if self.is_safe(x) {
                return Ok(x);
            }
        }
        Err(Error::EmptySafeSet(MAX_INIT_ATTEMPTS))
    }

    /// Training-mode step: penalise and reset when the successor is unsafe.
    pub fn step(&self, x: State, u: Action) -> StepOutcome {
        match self.model.next_state(x, u) {
            Ok(next) if self.is_safe(next) => StepOutcome {
                next,
                reward: self.reward.r_safe,
                reset_applied: false,
            },
            _ => StepOutcome {
                next: x,
                reward: self.reward.r_unsafe,
                reset_applied: true,
            },
        }
    }

    pub fn run_episode<C: Controller + ?Sized>(
        &self,
        ctrl: &C,
        rng: &mut SimRng,
        training: bool,
    ) -> Result<EpisodeResult> {
        let x0 = self.sample_initial(rng)?;
        Ok(self.run_from(x0, ctrl, rng, training))
    }

    /// Runs one episode from `x0`. Training uses stochastic actions with the
    /// reset technique; testing uses deterministic actions and stops at the
    /// first unsafe state.
    pub fn run_from<C: Controller + ?Sized>(
        &self,
        x0: State,
        ctrl: &C,
        rng: &mut SimRng,
        training: bool,
    ) -> EpisodeResult {
        let mut x = x0;
        let mut transitions = Vec::with_capacity(self.horizon);
        let mut score = 0.0;
        let mut failed = false;
        for _ in 0..self.horizon {
            let d = ctrl.decide(x, rng, training);
            let (next, reward, reset_applied, safe) = if training {
                let o = self.step(x, d.action);
                (o.next, o.reward, o.reset_applied, !o.reset_applied)
            } else {
                match self.model.next_state(x, d.action) {
                    Ok(next) if self.is_safe(next) => (next, self.reward.r_safe, false, true),
                    Ok(next) => (next, self.reward.r_unsafe, false, false),
                    Err(_) => (x, self.reward.r_unsafe, false, false),
                }
            };
            transitions.push(Transition {
                x,
                u: d.action,
                pre_squash: d.pre_squash,
                reward,
                x_next: next,
                reset_applied,
                log_prob: d.log_prob,
                value_est: d.value,
            });
            score += reward;
            x = next;
            if !safe {
                failed = true;
                if !training {
                    break;
                }
            }
        }
        let bootstrap_value = if training { ctrl.value(x) } else { 0.0 };
        EpisodeResult {
            score,
            steps: transitions.len(),
            failed,
            transitions,
            bootstrap_value,
        }
    }
}

/// Writes `episode,step,c_A,T,T_c,reward,reset_applied` rows.
pub fn write_transitions_csv<W: Write>(
    mut w: W,
    episodes: &[EpisodeResult],
    header: bool,
) -> std::io::Result<()> {
    if header {
        writeln!(w, "episode,step,c_A,T,T_c,reward,reset_applied")?;
    }
    for (e, ep) in episodes.iter().enumerate() {
        for (k, t) in ep.transitions.iter().enumerate() {
            writeln!(
                w,
                "{e},{k},{},{},{},{},{}",
                t.x.conc, t.x.temp, t.u.coolant, t.reward, t.reset_applied as u8
            )?;
        }
    }
    Ok(())
}
