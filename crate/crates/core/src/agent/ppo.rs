//! Generalized advantage estimation and the clipped-surrogate PPO update.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{action_log_prob, gaussian_entropy, normalize_obs, PolicyParams, Trace};
use crate::env::{EpisodeResult, Transition};
use crate::{Error, Result, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub update_epochs: usize,
    pub minibatch_size: usize,
    pub batch_episodes: usize,
    pub episodes: usize,
    pub horizon: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub grad_clip_norm: f64,
    /// Multiplies rewards before they reach the critic, keeping value
    /// targets of order one instead of order 10^6.
    pub reward_scale: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            update_epochs: 10,
            minibatch_size: 256,
            batch_episodes: 10,
            episodes: 10_000,
            horizon: 200,
            entropy_coef: 0.0,
            value_coef: 0.5,
            grad_clip_norm: 0.5,
            reward_scale: 1e-5,
        }
    }
}

impl PpoConfig {
    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be non-negative");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_eps > 0.0) {
            return bad("clip_eps must be positive");
        }
        if self.update_epochs == 0 || self.minibatch_size == 0 || self.batch_episodes == 0 {
            return bad("update_epochs, minibatch_size and batch_episodes must be >= 1");
        }
        if self.horizon == 0 {
            return bad("horizon must be >= 1");
        }
        if !(self.reward_scale > 0.0) || !(self.grad_clip_norm > 0.0) {
            return bad("reward_scale and grad_clip_norm must be positive");
        }
        Ok(())
    }
}

/// Advantages and returns for one trajectory.
///
/// `bootstrap` is the value of the state after the last reward; episodes end
/// by time limit only, so it is never assumed to be zero.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.len() != values.len() {
        return Err(Error::LengthMismatch(format!(
            "{} rewards vs {} values",
            rewards.len(),
            values.len()
        )));
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next_v = if t + 1 < n { values[t + 1] } else { bootstrap };
        let delta = rewards[t] + gamma * next_v - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

/// One training sample in the form the loss consumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub obs: [f64; 2],
    pub pre_squash: f64,
    pub log_prob_old: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryBatch {
    pub samples: Vec<Sample>,
}

impl TrajectoryBatch {
    /// Runs GAE per episode and normalizes advantages over the whole batch.
    pub fn from_episodes(episodes: &[EpisodeResult], cfg: &PpoConfig) -> Result<Self> {
        let mut samples = Vec::new();
        for ep in episodes.iter().filter(|e| !e.transitions.is_empty()) {
            let rewards: Vec<f64> =
                ep.transitions.iter().map(|t| t.reward * cfg.reward_scale).collect();
            let values: Vec<f64> = ep.transitions.iter().map(|t| t.value_est).collect();
            let (adv, ret) = gae(&rewards, &values, ep.bootstrap_value, cfg.gamma, cfg.gae_lambda)?;
            samples.extend(ep.transitions.iter().zip(adv).zip(ret).map(|((t, a), r)| Sample {
                obs: normalize_obs(t.x),
                pre_squash: t.pre_squash,
                log_prob_old: t.log_prob,
                advantage: a,
                ret: r,
            }));
        }
        let mut batch = Self { samples };
        batch.normalize_advantages();
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Zero mean, unit variance. Batches of one are left untouched.
    pub fn normalize_advantages(&mut self) {
        let n = self.samples.len();
        if n < 2 {
            return;
        }
        let mean = self.samples.iter().map(|s| s.advantage).sum::<f64>() / n as f64;
        let var = self
            .samples
            .iter()
            .map(|s| (s.advantage - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        let std = var.sqrt();
        for s in &mut self.samples {
            s.advantage -= mean;
            if std > 1e-12 {
                s.advantage /= std;
            }
        }
    }
}

/// Gradient with the same layout as [`PolicyParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub actor: Vec<f64>,
    pub critic: Vec<f64>,
    pub log_std: f64,
}

impl Gradient {
    pub fn zeros_like(p: &PolicyParams) -> Self {
        Self {
            actor: vec![0.0; p.actor.params().len()],
            critic: vec![0.0; p.critic.params().len()],
            log_std: 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        let sq: f64 = self.actor.iter().chain(&self.critic).map(|g| g * g).sum();
        (sq + self.log_std * self.log_std).sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        self.actor.iter_mut().chain(self.critic.iter_mut()).for_each(|g| *g *= c);
        self.log_std *= c;
    }

    pub fn is_finite(&self) -> bool {
        self.log_std.is_finite() && self.actor.iter().chain(&self.critic).all(|g| g.is_finite())
    }

    /// Flattened in the persisted tensor order: actor, critic, log_std.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.actor.clone();
        v.extend_from_slice(&self.critic);
        v.push(self.log_std);
        v
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    /// Negated mean clipped surrogate.
    pub policy_loss: f64,
    /// Mean squared error of the critic.
    pub value_loss: f64,
    pub entropy: f64,
    /// `policy_loss + value_coef * value_loss - entropy_coef * entropy`.
    pub total: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Loss of a minibatch and its exact gradient with respect to every
/// parameter.
pub fn minibatch_loss(
    params: &PolicyParams,
    samples: &[Sample],
    cfg: &PpoConfig,
) -> (LossTerms, Gradient) {
    let mut grad = Gradient::zeros_like(params);
    let mut terms = LossTerms::default();
    if samples.is_empty() {
        return (terms, grad);
    }
    let inv_n = 1.0 / samples.len() as f64;
    let log_std = params.log_std();
    let var = (2.0 * log_std).exp();
    let mut trace = Trace::default();
    let (lo, hi) = (1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    let mut clipped = 0usize;

    for s in samples {
        let mean = params.actor.forward_trace(&s.obs, &mut trace)[0];
        let log_prob = action_log_prob(s.pre_squash, mean, log_std);
        let ratio = (log_prob - s.log_prob_old).exp();
        let unclipped = ratio * s.advantage;
        let clipped_obj = ratio.clamp(lo, hi) * s.advantage;
        // min(unclipped, clipped): only the unclipped branch depends on the parameters
        let d_obj_d_logp = if unclipped <= clipped_obj {
            unclipped
        } else {
            clipped += 1;
            0.0
        };
        terms.policy_loss -= unclipped.min(clipped_obj) * inv_n;
        terms.approx_kl += (s.log_prob_old - log_prob) * inv_n;

        let diff = s.pre_squash - mean;
        let d_logp_d_mean = diff / var;
        let d_logp_d_log_std = diff * diff / var - 1.0;
        let d_loss_d_mean = -d_obj_d_logp * d_logp_d_mean * inv_n;
        params.actor.backward(&trace, &[d_loss_d_mean], &mut grad.actor);
        grad.log_std -= d_obj_d_logp * d_logp_d_log_std * inv_n;

        let value = params.critic.forward_trace(&s.obs, &mut trace)[0];
        let err = value - s.ret;
        terms.value_loss += err * err * inv_n;
        params
            .critic
            .backward(&trace, &[2.0 * cfg.value_coef * err * inv_n], &mut grad.critic);
    }
    terms.entropy = gaussian_entropy(log_std);
    grad.log_std -= cfg.entropy_coef;
    terms.total =
        terms.policy_loss + cfg.value_coef * terms.value_loss - cfg.entropy_coef * terms.entropy;
    terms.clip_fraction = clipped as f64 * inv_n;
    (terms, grad)
}

/// Adaptive-moment optimizer over the flattened parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut PolicyParams, grad: &Gradient, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let mut update = |k: usize, p: &mut f64, g: f64| {
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g;
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g;
            *p -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + eps);
        };
        let n_actor = grad.actor.len();
        let n_critic = grad.critic.len();
        for (k, (p, g)) in params.actor.params_mut().iter_mut().zip(&grad.actor).enumerate() {
            update(k, p, *g);
        }
        for (k, (p, g)) in params.critic.params_mut().iter_mut().zip(&grad.critic).enumerate() {
            update(n_actor + k, p, *g);
        }
        let mut ls = params.log_std();
        update(n_actor + n_critic, &mut ls, grad.log_std);
        params.set_log_std(ls);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub minibatches: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    /// Mean gradient norm before clipping.
    pub grad_norm: f64,
}

/// Owns a policy and its optimizer state; the only thing that mutates
/// parameters during training.
#[derive(Debug, Clone)]
pub struct Learner {
    pub params: PolicyParams,
    pub cfg: PpoConfig,
    adam: Adam,
}

impl Learner {
    pub fn new(params: PolicyParams, cfg: PpoConfig) -> Result<Self> {
        cfg.validate()?;
        let n = params.actor.params().len() + params.critic.params().len() + 1;
        Ok(Self {
            params,
            cfg,
            adam: Adam::new(n),
        })
    }

    pub fn optimizer(&self) -> &Adam {
        &self.adam
    }

    /// `update_epochs` passes of shuffled minibatch steps on the clipped
    /// surrogate. On a non-finite loss or gradient the parameters and the
    /// optimizer are restored and an error is returned.
    pub fn ppo_update(&mut self, batch: &TrajectoryBatch, rng: &mut SimRng) -> Result<UpdateStats> {
        if batch.is_empty() {
            return Err(Error::LengthMismatch("empty trajectory batch".into()));
        }
        let snapshot = (self.params.clone(), self.adam.clone());
        let mut order: Vec<usize> = (0..batch.len()).collect();
        let mut stats = UpdateStats::default();
        let mut mb = Vec::with_capacity(self.cfg.minibatch_size);
        for epoch in 0..self.cfg.update_epochs {
            order.shuffle(rng);
            for (k, chunk) in order.chunks(self.cfg.minibatch_size).enumerate() {
                mb.clear();
                mb.extend(chunk.iter().map(|&i| batch.samples[i]));
                if let Err(e) = self.step(&mb, &mut stats) {
                    (self.params, self.adam) = snapshot;
                    return Err(Error::NonFiniteLoss(format!("epoch {epoch}, minibatch {k}: {e}")));
                }
            }
        }
        Ok(stats.averaged())
    }

    /// One-sample update used by the online supervisor. The advantage is the
    /// one-step TD error `r + gamma V(x') - V(x)`.
    pub fn single_transition_update(&mut self, t: &Transition) -> Result<UpdateStats> {
        let v_next = self.params.critic_value(t.x_next);
        let delta = t.reward * self.cfg.reward_scale + self.cfg.gamma * v_next - t.value_est;
        let sample = Sample {
            obs: normalize_obs(t.x),
            pre_squash: t.pre_squash,
            log_prob_old: t.log_prob,
            advantage: delta,
            ret: delta + t.value_est,
        };
        let snapshot = (self.params.clone(), self.adam.clone());
        let mut stats = UpdateStats::default();
        if let Err(e) = self.step(&[sample], &mut stats) {
            (self.params, self.adam) = snapshot;
            return Err(Error::NonFiniteLoss(format!("single transition: {e}")));
        }
        Ok(stats.averaged())
    }

    fn step(&mut self, samples: &[Sample], stats: &mut UpdateStats) -> std::result::Result<(), String> {
        let (terms, mut grad) = minibatch_loss(&self.params, samples, &self.cfg);
        if !terms.total.is_finite() || !grad.is_finite() {
            return Err(format!("loss terms {terms:?}"));
        }
        let norm = grad.norm();
        if norm > self.cfg.grad_clip_norm {
            grad.scale(self.cfg.grad_clip_norm / norm);
        }
        self.adam.step(&mut self.params, &grad, self.cfg.lr);
        if !self.params.is_finite() {
            return Err("parameters became non-finite".into());
        }
        stats.minibatches += 1;
        stats.policy_loss += terms.policy_loss;
        stats.value_loss += terms.value_loss;
        stats.entropy += terms.entropy;
        stats.clip_fraction += terms.clip_fraction;
        stats.approx_kl += terms.approx_kl;
        stats.grad_norm += norm;
        Ok(())
    }
}

impl UpdateStats {
    fn averaged(mut self) -> Self {
        let n = self.minibatches.max(1) as f64;
        self.policy_loss /= n;
        self.value_loss /= n;
        self.entropy /= n;
        self.clip_fraction /= n;
        self.approx_kl /= n;
        self.grad_norm /= n;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::State;
    use crate::seeded_rng;

    #[test]
    fn gae_lambda_zero_is_td_error() {
        let r = [1.0, -2.0, 3.0];
        let v = [0.5, 0.1, -0.4];
        let (a, ret) = gae(&r, &v, 0.7, 0.9, 0.0).unwrap();
        let expect = [1.0 + 0.9 * 0.1 - 0.5, -2.0 + 0.9 * -0.4 - 0.1, 3.0 + 0.9 * 0.7 + 0.4];
        for k in 0..3 {
            assert!((a[k] - expect[k]).abs() < 1e-12);
            assert!((ret[k] - (a[k] + v[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_lambda_one_is_monte_carlo() {
        let r = [1.0, 2.0, 3.0, 4.0];
        let (a, _) = gae(&r, &[0.0; 4], 0.0, 1.0, 1.0).unwrap();
        assert_eq!(a, vec![10.0, 9.0, 7.0, 4.0]);
    }

    #[test]
    fn gae_single_step() {
        let (a, _) = gae(&[10_000.0], &[0.0], 0.0, 0.99, 0.95).unwrap();
        assert_eq!(a, vec![10_000.0]);
        assert!(gae(&[1.0, 2.0], &[0.0], 0.0, 0.99, 0.95).is_err());
    }

    #[test]
    fn discounted_all_safe_return() {
        let r = vec![10_000.0; 200];
        let (a, _) = gae(&r, &[0.0; 200], 0.0, 0.99, 1.0).unwrap();
        let closed = 10_000.0 * (1.0 - 0.99f64.powi(200)) / 0.01;
        assert!((a[0] - closed).abs() < 1e-6);
        assert!((a[0] - 866_020.0).abs() < 1.0, "{}", a[0]);
    }

    #[test]
    fn clip_arithmetic() {
        // ratio 1.5 with a positive advantage lands on the clipped branch
        let mut p = PolicyParams::new(&mut seeded_rng(0));
        p.actor.params_mut().fill(0.0);
        let lp = super::super::action_log_prob(0.1, 0.0, p.log_std());
        let s = Sample {
            obs: [0.0, 0.0],
            pre_squash: 0.1,
            log_prob_old: lp - 1.5f64.ln(),
            advantage: 2.0,
            ret: 0.0,
        };
        let cfg = PpoConfig::default();
        let (terms, grad) = minibatch_loss(&p, &[s], &cfg);
        assert!((terms.policy_loss + 1.2 * 2.0).abs() < 1e-12);
        assert_eq!(terms.clip_fraction, 1.0);
        assert!(grad.actor.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn ratio_identity_gives_mean_advantage() {
        let p = PolicyParams::new(&mut seeded_rng(1));
        let mut rng = seeded_rng(2);
        let samples: Vec<Sample> = (0..20)
            .map(|k| {
                let x = State::new(0.05 * k as f64, 346.0 + 0.4 * k as f64);
                let d = p.act(x, &mut rng, true);
                Sample {
                    obs: normalize_obs(x),
                    pre_squash: d.pre_squash,
                    log_prob_old: d.log_prob,
                    advantage: k as f64 - 7.0,
                    ret: 0.0,
                }
            })
            .collect();
        let (terms, _) = minibatch_loss(&p, &samples, &PpoConfig::default());
        let mean_adv = samples.iter().map(|s| s.advantage).sum::<f64>() / 20.0;
        assert!((-terms.policy_loss - mean_adv).abs() < 1e-12);
        assert!(terms.approx_kl.abs() < 1e-15);
    }

    #[test]
    fn zero_advantage_gives_zero_actor_gradient() {
        let p = PolicyParams::new(&mut seeded_rng(3));
        let d = p.act(State::new(0.4, 351.0), &mut seeded_rng(4), true);
        let s = Sample {
            obs: normalize_obs(State::new(0.4, 351.0)),
            pre_squash: d.pre_squash,
            log_prob_old: d.log_prob,
            advantage: 0.0,
            ret: 3.0,
        };
        let (_, g) = minibatch_loss(&p, &[s], &PpoConfig::default());
        assert!(g.actor.iter().all(|v| *v == 0.0));
        assert_eq!(g.log_std, 0.0);
        assert!(g.critic.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn advantage_normalization_moments() {
        let mut b = TrajectoryBatch {
            samples: (0..37)
                .map(|k| Sample {
                    obs: [0.0, 0.0],
                    pre_squash: 0.0,
                    log_prob_old: 0.0,
                    advantage: (k as f64 * 1.7).sin() * 1e4 + 3e5,
                    ret: 0.0,
                })
                .collect(),
        };
        b.normalize_advantages();
        let n = b.len() as f64;
        let mean = b.samples.iter().map(|s| s.advantage).sum::<f64>() / n;
        let var = b.samples.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-10);
        assert!((var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn unsafe_transition_lowers_log_prob() {
        let params = PolicyParams::new(&mut seeded_rng(5));
        let cfg = PpoConfig { lr: 1e-4, ..Default::default() };
        let mut learner = Learner::new(params, cfg).unwrap();
        // a positive critic value makes the one-step TD error negative
        learner.params.critic.output_bias_mut()[0] = 5.0;
        let x = State::new(0.6, 354.0);
        let d = learner.params.act(x, &mut seeded_rng(6), true);
        let t = Transition {
            x,
            u: d.action,
            pre_squash: d.pre_squash,
            reward: -1_000.0,
            x_next: x,
            reset_applied: true,
            log_prob: d.log_prob,
            value_est: d.value,
        };
        assert!(d.value > 0.0);
        let before = learner.params.log_prob(x, d.pre_squash);
        learner.single_transition_update(&t).unwrap();
        assert!(learner.params.log_prob(x, d.pre_squash) < before);
    }

    #[test]
    fn non_finite_update_is_rolled_back() {
        let params = PolicyParams::new(&mut seeded_rng(7));
        let mut learner = Learner::new(params.clone(), PpoConfig::default()).unwrap();
        let batch = TrajectoryBatch {
            samples: vec![Sample {
                obs: [0.0, 0.0],
                pre_squash: 0.0,
                log_prob_old: 0.0,
                advantage: 1.0,
                ret: f64::NAN,
            }],
        };
        let err = learner.ppo_update(&batch, &mut seeded_rng(0)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss(_)));
        assert_eq!(learner.params, params);
        assert!(learner.ppo_update(&TrajectoryBatch::default(), &mut seeded_rng(0)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PpoConfig::default().validate().is_ok());
        assert!(PpoConfig { gamma: 0.0, ..Default::default() }.validate().is_err());
        assert!(PpoConfig { gae_lambda: 1.5, ..Default::default() }.validate().is_err());
        assert!(PpoConfig { clip_eps: 0.0, ..Default::default() }.validate().is_err());
    }
}
