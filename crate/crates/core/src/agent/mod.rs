//! PPO actor-critic for the two-dimensional reactor state.
//!
//! The actor outputs the mean of a Gaussian over a pre-squash variable `z`;
//! the coolant temperature is `300 + 15 tanh(z)`, so every action is
//! admissible whatever the parameters. The standard deviation is a single
//! learned scalar independent of the state.

mod mlp;
mod persist;
mod ppo;

pub use mlp::{param_count, Mlp, Trace};
pub use ppo::{
    gae, minibatch_loss, Adam, Gradient, Learner, LossTerms, PpoConfig, Sample,
    TrajectoryBatch, UpdateStats,
};

use std::f64::consts::{LN_2, PI};

use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::{Action, State, CONC_MAX, CONC_MIN, COOLANT_MAX, COOLANT_MIN, TEMP_MAX, TEMP_MIN};
use crate::env::{Controller, Decision};
use crate::SimRng;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

const ACTION_MID: f64 = 0.5 * (COOLANT_MIN + COOLANT_MAX);
const ACTION_HALF_RANGE: f64 = 0.5 * (COOLANT_MAX - COOLANT_MIN);

/// Affine map of the physical box onto `[-1, 1]^2`.
pub fn normalize_obs(x: State) -> [f64; 2] {
    let scale = |v: f64, lo: f64, hi: f64| 2.0 * (v - lo) / (hi - lo) - 1.0;
    [
        scale(x.conc, CONC_MIN, CONC_MAX),
        scale(x.temp, TEMP_MIN, TEMP_MAX),
    ]
}

/// Maps a pre-squash value onto the admissible coolant range.
pub fn squash(z: f64) -> Action {
    Action::new(ACTION_MID + ACTION_HALF_RANGE * z.tanh())
}

fn softplus(y: f64) -> f64 {
    if y > 0.0 {
        y + (-y).exp().ln_1p()
    } else {
        y.exp().ln_1p()
    }
}

/// `ln(d squash / dz)`, evaluated without cancellation for large `|z|`.
fn log_squash_jacobian(z: f64) -> f64 {
    ACTION_HALF_RANGE.ln() + 2.0 * (LN_2 - z - softplus(-2.0 * z))
}

/// Log-density of `z` under `N(mean, exp(log_std)^2)`.
pub fn gaussian_log_prob(z: f64, mean: f64, log_std: f64) -> f64 {
    let s = (z - mean) / log_std.exp();
    -0.5 * s * s - log_std - 0.5 * (2.0 * PI).ln()
}

/// Log-density of the squashed action whose pre-squash value is `z`.
pub fn action_log_prob(z: f64, mean: f64, log_std: f64) -> f64 {
    gaussian_log_prob(z, mean, log_std) - log_squash_jacobian(z)
}

/// Differential entropy of the pre-squash Gaussian.
pub fn gaussian_entropy(log_std: f64) -> f64 {
    0.5 * (2.0 * PI * std::f64::consts::E).ln() + log_std
}

/// Actor and critic weights plus the shared log standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub actor: Mlp,
    pub critic: Mlp,
    log_std: f64,
}

impl PolicyParams {
    /// Fresh parameters with the default `2 -> 64 -> 64 -> 1` shape.
    pub fn new(rng: &mut SimRng) -> Self {
        Self::with_hidden(&DEFAULT_HIDDEN, rng)
    }

    pub fn with_hidden(hidden: &[usize], rng: &mut SimRng) -> Self {
        let sizes: Vec<usize> = std::iter::once(2)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        Self {
            actor: Mlp::init(&sizes, 0.01, rng),
            critic: Mlp::init(&sizes, 1.0, rng),
            // 0.5 pre-squash is about 7.5 K of coolant spread at mid-range
            log_std: 0.5f64.ln(),
        }
    }

    pub fn from_parts(actor: Mlp, critic: Mlp, log_std: f64) -> Self {
        Self {
            actor,
            critic,
            log_std: log_std.clamp(LOG_STD_MIN, LOG_STD_MAX),
        }
    }

    pub fn log_std(&self) -> f64 {
        self.log_std
    }

    pub fn set_log_std(&mut self, v: f64) {
        self.log_std = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
    }

    pub fn is_finite(&self) -> bool {
        self.log_std.is_finite()
            && self.actor.params().iter().all(|p| p.is_finite())
            && self.critic.params().iter().all(|p| p.is_finite())
    }

    /// Raw (pre-squash) actor mean.
    pub fn mean(&self, x: State) -> f64 {
        self.actor.forward(&normalize_obs(x))[0]
    }

    pub fn critic_value(&self, x: State) -> f64 {
        self.critic.forward(&normalize_obs(x))[0]
    }

    /// Prescribes a coolant temperature. Stochastic mode samples the
    /// Gaussian; deterministic mode uses its mean.
    pub fn act(&self, x: State, rng: &mut SimRng, stochastic: bool) -> Decision {
        let obs = normalize_obs(x);
        let mean = self.actor.forward(&obs)[0];
        let z = if stochastic {
            let eps: f64 = StandardNormal.sample(rng);
            mean + self.log_std.exp() * eps
        } else {
            mean
        };
        Decision {
            action: squash(z),
            pre_squash: z,
            log_prob: action_log_prob(z, mean, self.log_std),
            value: self.critic.forward(&obs)[0],
        }
    }

    /// Log-probability the current policy assigns to pre-squash value `z` at `x`.
    pub fn log_prob(&self, x: State, z: f64) -> f64 {
        action_log_prob(z, self.mean(x), self.log_std)
    }
}

impl Controller for PolicyParams {
    fn decide(&self, x: State, rng: &mut SimRng, stochastic: bool) -> Decision {
        self.act(x, rng, stochastic)
    }

    fn value(&self, x: State) -> f64 {
        self.critic_value(x)
    }
}
