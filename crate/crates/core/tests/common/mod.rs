//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the crate's dynamics or gradient code; the
//! formulas are re-derived so that a bug in the library cannot cancel out.

#![allow(dead_code)]

use cisrl::agent::{minibatch_loss, PolicyParams, PpoConfig, Sample};
use cisrl::cis::{BackupTable, CisGrid};
use cisrl::dynamics::{Action, Cstr, CstrParams, IntegratorConfig, Model, State};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Direct evaluation of the reactor balances with literal default constants.
pub fn rhs_direct(c: f64, t: f64, tc: f64) -> (f64, f64) {
    let (q, v) = (100.0, 100.0);
    let k = 7.2e10 * (-8750.0 / t).exp();
    let dc = q / v * (1.0 - c) - k * c;
    let dt = q / v * (350.0 - t)
        + 5e4 / (1000.0 * 0.239) * k * c
        + 5e4 / (100.0 * 1000.0 * 0.239) * (tc - t);
    (dc, dt)
}

fn rk4_once(c: f64, t: f64, tc: f64, h: f64) -> (f64, f64) {
    let (a1, b1) = rhs_direct(c, t, tc);
    let (a2, b2) = rhs_direct(c + 0.5 * h * a1, t + 0.5 * h * b1, tc);
    let (a3, b3) = rhs_direct(c + 0.5 * h * a2, t + 0.5 * h * b2, tc);
    let (a4, b4) = rhs_direct(c + h * a3, t + h * b3, tc);
    (
        c + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
        t + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4),
    )
}

/// Near-exact solution over `dt` using 20,000 tiny RK4 steps.
pub fn reference_step(x: State, tc: f64, dt: f64) -> State {
    let n = 20_000;
    let h = dt / n as f64;
    let (mut c, mut t) = (x.conc, x.temp);
    for _ in 0..n {
        (c, t) = rk4_once(c, t, tc, h);
    }
    State::new(c, t)
}

/// A 10-step open-loop coolant schedule from a point near the nominal
/// operating state.
pub fn order_check_schedule() -> (State, Vec<f64>) {
    (
        State::new(0.45, 352.0),
        vec![300.0, 305.0, 295.0, 310.0, 290.0, 300.0, 315.0, 285.0, 300.0, 302.0],
    )
}

/// Max-norm error of the library integrator against the reference along
/// the schedule, with concentration weighted to the temperature scale.
pub fn trajectory_error(dt: f64, substeps: u32) -> f64 {
    let (x0, schedule) = order_check_schedule();
    let cfg = IntegratorConfig { dt, substeps };
    let p = CstrParams::default();
    let mut x = x0;
    let mut r = x0;
    let mut err: f64 = 0.0;
    for &tc in &schedule {
        x = cisrl::dynamics::step(x, Action::new(tc), &p, &cfg).unwrap();
        r = reference_step(r, tc, dt);
        err = err.max((x.conc - r.conc).abs() * 100.0).max((x.temp - r.temp).abs());
    }
    err
}

/// Error ratio when the integration step is halved: the ratio of the error
/// at one internal step per period to the error at two.
pub fn rk4_order_ratio() -> f64 {
    let coarse = trajectory_error(0.1, 1);
    let fine = trajectory_error(0.1, 2);
    coarse / fine
}

/// Random actor-critic and minibatch for a gradient check. Parameters are
/// perturbed away from initialisation so every layer carries signal, and
/// old log-probabilities are jittered so some samples sit in the clipped
/// region.
pub fn gradient_draw(seed: u64) -> (PolicyParams, Vec<Sample>, PpoConfig) {
    let mut rng = cisrl::seeded_rng(seed);
    let mut p = PolicyParams::with_hidden(&[16, 16], &mut rng);
    let noise = Normal::new(0.0, 0.3).unwrap();
    for v in p.actor.params_mut().iter_mut().chain(p.critic.params_mut()) {
        *v += noise.sample(&mut rng);
    }
    p.set_log_std(rng.random_range(-1.0..0.5));
    let samples = (0..24)
        .map(|_| {
            let obs = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let z = rng.random_range(-2.0..2.0);
            let mean = p.actor.forward(&obs)[0];
            let lp = cisrl::agent::action_log_prob(z, mean, p.log_std());
            Sample {
                obs,
                pre_squash: z,
                log_prob_old: lp + rng.random_range(-0.4..0.4),
                advantage: rng.random_range(-2.0..2.0),
                ret: rng.random_range(-1.0..1.0),
            }
        })
        .collect();
    let cfg = PpoConfig {
        entropy_coef: 0.01,
        ..PpoConfig::default()
    };
    (p, samples, cfg)
}

/// Finite-difference outcome for one draw.
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped_at_kink: usize,
}

fn total_loss(p: &PolicyParams, s: &[Sample], cfg: &PpoConfig) -> f64 {
    minibatch_loss(p, s, cfg).0.total
}

fn ratios(p: &PolicyParams, s: &[Sample]) -> Vec<f64> {
    s.iter()
        .map(|x| {
            let mean = p.actor.forward(&x.obs)[0];
            let lp = cisrl::agent::action_log_prob(x.pre_squash, mean, p.log_std());
            (lp - x.log_prob_old).exp()
        })
        .collect()
}

/// Which samples take the parameter-independent (clipped) branch.
fn clip_pattern(p: &PolicyParams, s: &[Sample], cfg: &PpoConfig) -> Vec<bool> {
    ratios(p, s)
        .iter()
        .zip(s)
        .map(|(&r, x)| r * x.advantage > r.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * x.advantage)
        .collect()
}

/// Compares every analytic gradient component with a central difference
/// at step `h`. Components below `floor` in magnitude on both sides are
/// skipped since relative error is meaningless there.
pub fn gradient_check(seed: u64, h: f64, floor: f64) -> GradCheck {
    let (p, samples, cfg) = gradient_draw(seed);
    let (_, g) = minibatch_loss(&p, &samples, &cfg);
    let eps = cfg.clip_eps;
    assert!(
        ratios(&p, &samples)
            .iter()
            .all(|r| (r - (1.0 - eps)).abs() > 1e-6 && (r - (1.0 + eps)).abs() > 1e-6),
        "draw {seed} sits on a clip boundary"
    );
    let mut out = GradCheck {
        max_rel_err: 0.0,
        checked: 0,
        skipped_at_kink: 0,
    };
    let mut compare = |analytic: f64, plus: &PolicyParams, minus: &PolicyParams| {
        // a difference straddling a clip boundary is not a derivative
        if clip_pattern(plus, &samples, &cfg) != clip_pattern(minus, &samples, &cfg) {
            out.skipped_at_kink += 1;
            return;
        }
        let fd = (total_loss(plus, &samples, &cfg) - total_loss(minus, &samples, &cfg)) / (2.0 * h);
        let scale = analytic.abs().max(fd.abs());
        if scale < floor {
            return;
        }
        out.checked += 1;
        out.max_rel_err = out.max_rel_err.max((analytic - fd).abs() / scale);
    };
    for k in 0..p.actor.params().len() {
        let (mut a, mut b) = (p.clone(), p.clone());
        a.actor.params_mut()[k] += h;
        b.actor.params_mut()[k] -= h;
        compare(g.actor[k], &a, &b);
    }
    for k in 0..p.critic.params().len() {
        let (mut a, mut b) = (p.clone(), p.clone());
        a.critic.params_mut()[k] += h;
        b.critic.params_mut()[k] -= h;
        compare(g.critic[k], &a, &b);
    }
    let (mut a, mut b) = (p.clone(), p.clone());
    a.set_log_std(p.log_std() + h);
    b.set_log_std(p.log_std() - h);
    compare(g.log_std, &a, &b);
    out
}

/// Rolls out the backup table alone from `x0`. Returns the number of steps
/// completed inside the set.
pub fn backup_rollout(grid: &CisGrid, backup: &BackupTable, x0: State, steps: usize) -> usize {
    let model = Cstr::default();
    let mut x = x0;
    for k in 0..steps {
        let Ok(u) = backup.backup_action(x) else {
            return k;
        };
        match model.next_state(x, u) {
            Ok(n) if grid.contains(n) => x = n,
            _ => return k,
        }
    }
    steps
}
