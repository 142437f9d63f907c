//! Randomised checks of the invariants each module promises.

use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use cisrl::agent::{gae, Learner, PolicyParams, PpoConfig, TrajectoryBatch};
use cisrl::cis::{
    build_backup, compute_kernel, ActionSampling, BackupTable, CellCheck, CisGrid, GridSpec,
    SuccessorTable,
};
use cisrl::dynamics::{
    in_physical_bounds, rhs, step, Action, Cstr, CstrParams, IntegratorConfig, Model, State,
};
use cisrl::env::{Env, EnvMode, RewardSpec};
use cisrl::harness::running_average;
use cisrl::supervisor::{ActionSource, Supervisor, SupervisorConfig};

/// A coarse reactor set, cheap enough to rebuild in every test binary.
fn coarse() -> &'static (Arc<CisGrid>, Arc<BackupTable>) {
    static F: OnceLock<(Arc<CisGrid>, Arc<BackupTable>)> = OnceLock::new();
    F.get_or_init(|| {
        let acts = ActionSampling::default();
        let grid = compute_kernel(&GridSpec::physical(40, 40), &acts, &Cstr::default(), 200)
            .unwrap()
            .into_converged()
            .unwrap();
        let backup = build_backup(&grid, &acts, &Cstr::default()).unwrap();
        (Arc::new(grid), Arc::new(backup))
    })
}

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn in_box() -> impl Strategy<Value = State> {
    (0.0..=1.0f64, 345.0..=355.0f64).prop_map(|(c, t)| State::new(c, t))
}

fn coolant() -> impl Strategy<Value = f64> {
    285.0..=315.0f64
}

proptest! {
    #![proptest_config(cases(64))]

    #[test]
    fn rhs_and_step_are_deterministic(x in in_box(), u in coolant()) {
        let p = CstrParams::default();
        let a = rhs(x, Action::new(u), &p);
        let b = rhs(x, Action::new(u), &p);
        prop_assert_eq!(a.0.to_bits(), b.0.to_bits());
        prop_assert_eq!(a.1.to_bits(), b.1.to_bits());
        let cfg = IntegratorConfig::default();
        let s1 = step(x, Action::new(u), &p, &cfg).unwrap();
        let s2 = step(x, Action::new(u), &p, &cfg).unwrap();
        prop_assert_eq!(s1, s2);
    }

    #[test]
    fn step_composes_over_half_periods(x in in_box(), u in coolant(), k in 1u32..6) {
        let p = CstrParams::default();
        let full = IntegratorConfig { dt: 0.1, substeps: 2 * k };
        let half = IntegratorConfig { dt: 0.05, substeps: k };
        let a = step(x, Action::new(u), &p, &full).unwrap();
        let b = step(step(x, Action::new(u), &p, &half).unwrap(), Action::new(u), &p, &half)
            .unwrap();
        prop_assert!((a.conc - b.conc).abs() < 1e-12 && (a.temp - b.temp).abs() < 1e-9);
    }

    #[test]
    fn step_is_lipschitz_in_state(x in in_box(), u in coolant(), dc in -1.0..1.0f64, dt in -1.0..1.0f64) {
        let p = CstrParams::default();
        let cfg = IntegratorConfig::default();
        let d = 1e-7;
        let y = State::new(x.conc + d * dc, x.temp + d * dt);
        let a = step(x, Action::new(u), &p, &cfg).unwrap();
        // from the hot, concentrated corner the reactor runs away thermally
        // and the fixed-step integrator is not accurate there; every such
        // successor is far outside the box and counts as an exit anyway
        prop_assume!(in_physical_bounds(a));
        let b = step(y, Action::new(u), &p, &cfg).unwrap();
        // the one-period sensitivity is bounded by a modest constant
        let gap = ((a.conc - b.conc).abs() * 100.0).max((a.temp - b.temp).abs());
        prop_assert!(gap <= 50.0 * d * 100.0, "gap {gap}");
    }

    #[test]
    fn policy_actions_stay_in_bounds(seed in any::<u64>(), x in in_box(), bias in -1e3..1e3f64, log_std in -10.0..10.0f64) {
        let mut rng = cisrl::seeded_rng(seed);
        let mut p = PolicyParams::with_hidden(&[8], &mut rng);
        p.actor.output_bias_mut()[0] = bias;
        p.set_log_std(log_std);
        for stochastic in [false, true] {
            let d = p.act(x, &mut rng, stochastic);
            prop_assert!((285.0..=315.0).contains(&d.action.coolant), "{:?}", d);
        }
        prop_assert!((-5.0..=2.0).contains(&p.log_std()));
    }

    #[test]
    fn weights_round_trip(seed in any::<u64>(), h1 in 1usize..12, h2 in 1usize..12) {
        let p = PolicyParams::with_hidden(&[h1, h2], &mut cisrl::seeded_rng(seed));
        let q = PolicyParams::from_bytes(&p.to_bytes()).unwrap();
        prop_assert_eq!(q.to_bytes(), p.to_bytes());
    }

    #[test]
    fn grid_text_round_trip(bits in proptest::collection::vec(any::<bool>(), 6 * 9)) {
        let g = CisGrid::from_parts(GridSpec::physical(6, 9), bits).unwrap();
        prop_assert_eq!(CisGrid::from_text(&g.to_text()).unwrap(), g);
    }

    #[test]
    fn contains_matches_cell_lookup(x in in_box()) {
        let (grid, _) = coarse();
        let (i, j) = grid.spec().cell_of(x).unwrap();
        prop_assert_eq!(grid.contains(x), grid.is_member(i, j));
        prop_assert!(!grid.contains(State::new(x.conc, 355.0 + 1e-9 + x.temp - 345.0)));
    }

    #[test]
    fn running_average_is_window_mean(scores in proptest::collection::vec(-1e6..1e6f64, 1..300), w in 1usize..120) {
        let avg = running_average(&scores, w);
        for (i, a) in avg.iter().enumerate() {
            let lo = (i + 1).saturating_sub(w);
            let want = scores[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64;
            prop_assert!((a - want).abs() <= 1e-6 * want.abs().max(1.0));
        }
    }

    #[test]
    fn gae_recurrence(
        data in proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 1..40),
        boot in -5.0..5.0f64,
        gamma in 0.0..1.0f64,
        lam in 0.0..1.0f64,
    ) {
        let (r, v): (Vec<f64>, Vec<f64>) = data.into_iter().unzip();
        let (adv, ret) = gae(&r, &v, boot, gamma, lam).unwrap();
        let n = r.len();
        for t in 0..n {
            let v_next = if t + 1 < n { v[t + 1] } else { boot };
            let a_next = if t + 1 < n { adv[t + 1] } else { 0.0 };
            let want = r[t] + gamma * v_next - v[t] + gamma * lam * a_next;
            prop_assert!((adv[t] - want).abs() < 1e-9);
            prop_assert!((ret[t] - adv[t] - v[t]).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(cases(16))]

    #[test]
    fn training_episode_invariants(seed in any::<u64>(), horizon in 1usize..120) {
        let (grid, _) = coarse();
        let reward = RewardSpec::default();
        let env = Env::new(Cstr::default(), EnvMode::WithCis(grid.clone()), reward, horizon)
            .unwrap();
        let mut rng = cisrl::seeded_rng(seed);
        let mut p = PolicyParams::new(&mut rng);
        // a wide policy leaves the set often, exercising the reset path
        p.set_log_std(1.5);
        let ep = env.run_episode(&p, &mut rng, true).unwrap();
        prop_assert_eq!(ep.steps, horizon);
        let mut safe = 0;
        let mut resets = 0;
        for (k, t) in ep.transitions.iter().enumerate() {
            prop_assert!(t.reward == reward.r_safe || t.reward == reward.r_unsafe);
            prop_assert!(grid.contains(t.x), "current state left the set");
            if t.reset_applied {
                resets += 1;
                prop_assert_eq!(t.reward, reward.r_unsafe);
                prop_assert_eq!(t.x_next.conc.to_bits(), t.x.conc.to_bits());
                prop_assert_eq!(t.x_next.temp.to_bits(), t.x.temp.to_bits());
            } else {
                safe += 1;
                prop_assert_eq!(t.reward, reward.r_safe);
            }
            if k + 1 < ep.transitions.len() {
                prop_assert_eq!(ep.transitions[k + 1].x, t.x_next);
            }
        }
        prop_assert_eq!(ep.score, safe as f64 * reward.r_safe + resets as f64 * reward.r_unsafe);
        prop_assert_eq!(ep.failed, resets > 0);
    }

    #[test]
    fn testing_failure_flag_matches_log(seed in any::<u64>()) {
        let (grid, _) = coarse();
        let env = Env::new(Cstr::default(), EnvMode::WithCis(grid.clone()), RewardSpec::default(), 200)
            .unwrap();
        let mut rng = cisrl::seeded_rng(seed);
        let p = PolicyParams::new(&mut rng);
        let ep = env.run_episode(&p, &mut rng, false).unwrap();
        let any_out = ep.transitions.iter().any(|t| !grid.contains(t.x_next));
        prop_assert_eq!(ep.failed, any_out);
        if ep.failed {
            // testing stops at the first exit
            prop_assert!(!grid.contains(ep.transitions.last().unwrap().x_next));
            prop_assert_eq!(
                ep.transitions.iter().filter(|t| !grid.contains(t.x_next)).count(),
                1
            );
        } else {
            prop_assert_eq!(ep.steps, 200);
        }
    }

    #[test]
    fn ratio_is_one_on_fresh_batch(seed in any::<u64>()) {
        let (grid, _) = coarse();
        let env = Env::new(Cstr::default(), EnvMode::WithCis(grid.clone()), RewardSpec::default(), 30)
            .unwrap();
        let mut rng = cisrl::seeded_rng(seed);
        let p = PolicyParams::new(&mut rng);
        let eps: Vec<_> = (0..3).map(|_| env.run_episode(&p, &mut rng, true).unwrap()).collect();
        let batch = TrajectoryBatch::from_episodes(&eps, &PpoConfig::default()).unwrap();
        let n = batch.len() as f64;
        let mean = batch.samples.iter().map(|s| s.advantage).sum::<f64>() / n;
        let var = batch.samples.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-10);
        prop_assert!((var - 1.0).abs() < 1e-6 || var == 0.0);
        for s in &batch.samples {
            let mean = p.actor.forward(&s.obs)[0];
            let lp = cisrl::agent::action_log_prob(s.pre_squash, mean, p.log_std());
            prop_assert!(((lp - s.log_prob_old).exp() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn supervisor_keeps_every_state_in_the_set(seed in any::<u64>(), max_itr in 0usize..4) {
        let (grid, backup) = coarse();
        let sup = Supervisor::new(
            Cstr::default(),
            grid.clone(),
            backup.clone(),
            ActionSampling::default(),
            RewardSpec::default(),
            60,
            SupervisorConfig { max_itr },
        )
        .unwrap();
        let mut rng = cisrl::seeded_rng(seed);
        let mut p = PolicyParams::new(&mut rng);
        p.set_log_std(1.0);
        // push the mean to the hot end so the supervisor has to intervene
        p.actor.output_bias_mut()[0] = 2.0;
        let mut learner = Learner::new(p, PpoConfig::default()).unwrap();
        let mut x = sup.env().sample_initial(&mut rng).unwrap();
        for _ in 0..60 {
            let (u, info) = sup.supervised_step(&mut learner, x, &mut rng).unwrap();
            prop_assert!(info.updates_performed <= max_itr);
            if info.source == ActionSource::Backup {
                prop_assert_eq!(u, backup.backup_action(x).unwrap());
            }
            let next = Cstr::default().next_state(x, u).unwrap();
            prop_assert!(grid.contains(next), "left the set from {:?} via {:?}", x, info);
            x = next;
        }
    }
}

#[test]
fn kernel_sweeps_are_monotone() {
    // random affine contractions and expansions around the nominal point
    let mut runner = proptest::test_runner::TestRunner::new(cases(12));
    runner
        .run(&(0.6..1.6f64, 0.6..1.6f64, -0.2..0.2f64), |(a, b, shift)| {
            struct Affine(f64, f64, f64);
            impl Model for Affine {
                fn next_state(&self, x: State, u: Action) -> cisrl::Result<State> {
                    Ok(State::new(
                        0.5 + self.0 * (x.conc - 0.5) + self.2,
                        350.0 + self.1 * (x.temp - 350.0) + 0.1 * (u.coolant - 300.0),
                    ))
                }
            }
            let spec = GridSpec::physical(12, 12);
            let table = SuccessorTable::build(
                &spec,
                &ActionSampling::uniform(5).unwrap(),
                &Affine(a, b, shift),
                CellCheck::WholeCell,
            )
            .unwrap();
            let mut member = vec![true; spec.cell_count()];
            for _ in 0..50 {
                let (next, removed) = table.sweep(&member);
                prop_assert!(member.iter().zip(&next).all(|(m, n)| *m || !*n));
                prop_assert_eq!(
                    removed,
                    member.iter().zip(&next).filter(|(m, n)| **m && !**n).count()
                );
                member = next;
                if removed == 0 {
                    break;
                }
            }
            Ok(())
        })
        .unwrap();
}
