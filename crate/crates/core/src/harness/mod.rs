//! Experiment orchestration: offline training with and without the
//! invariant set, failure-rate evaluation on shared initial states, online
//! supervised runs, and the multi-seed comparison suite.

mod config;
mod report;

pub use config::{ExperimentConfig, Mode, OUT_DIR_ENV};
pub use report::{
    load_states, read_curve_csv, save_states, write_curve_csv, write_curves_svg, write_eval_csv,
};

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::agent::{Learner, PolicyParams, TrajectoryBatch};
use crate::cis::{build_backup_with, compute_kernel_with, BackupTable, CisGrid, KernelReport};
use crate::dynamics::{Model, State};
use crate::env::{Env, EnvMode, RewardSpec};
use crate::supervisor::{OnlineReport, Supervisor};
use crate::{seeded_rng, Error, Result};

/// Trailing mean over at most `window` scores ending at each index.
pub fn running_average(scores: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(scores.len());
    let mut sum = 0.0;
    for (i, s) in scores.iter().enumerate() {
        sum += s;
        if i >= window {
            sum -= scores[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub mode: Mode,
    pub scores: Vec<f64>,
    pub running_avg: Vec<f64>,
    pub updates: usize,
    pub failure_rate: Option<f64>,
    pub wall_clock_secs: f64,
}

/// Computes the invariant-set grid described by the configuration.
pub fn compute_cis(cfg: &ExperimentConfig) -> Result<KernelReport> {
    let model = cfg.cstr()?;
    compute_kernel_with(
        &cfg.grid_spec(),
        &cfg.action_sampling()?,
        &model,
        cfg.kernel_max_sweeps,
        cfg.cell_check,
    )
}

pub fn compute_backup(cfg: &ExperimentConfig, grid: &CisGrid) -> Result<BackupTable> {
    build_backup_with(grid, &cfg.action_sampling()?, &cfg.cstr()?, cfg.cell_check)
}

fn env_mode(mode: Mode, grid: Option<&Arc<CisGrid>>) -> Result<EnvMode> {
    match mode {
        Mode::WithCis => grid
            .cloned()
            .map(EnvMode::WithCis)
            .ok_or_else(|| Error::InvalidConfig("with_cis training needs a CIS grid".into())),
        Mode::NoCis => Ok(EnvMode::NoCis),
    }
}

/// Offline PPO training: batches of `batch_episodes` training-mode episodes,
/// one PPO update per batch (a trailing partial batch also gets one).
pub fn train_offline(
    cfg: &ExperimentConfig,
    grid: Option<&Arc<CisGrid>>,
    seed: u64,
) -> Result<(PolicyParams, RunSummary)> {
    cfg.validate()?;
    let started = Instant::now();
    let env = Env::new(cfg.cstr()?, env_mode(cfg.mode, grid)?, cfg.reward(), cfg.horizon)?;
    let mut rng = seeded_rng(seed);
    let mut learner = Learner::new(PolicyParams::new(&mut rng), cfg.ppo())?;
    let mut scores = Vec::with_capacity(cfg.episodes);
    let mut updates = 0;
    let mut batch = Vec::with_capacity(cfg.batch_episodes);
    for ep in 0..cfg.episodes {
        let result = env.run_episode(&learner.params, &mut rng, true)?;
        scores.push(result.score);
        batch.push(result);
        if batch.len() == cfg.batch_episodes || ep + 1 == cfg.episodes {
            let traj = TrajectoryBatch::from_episodes(&batch, &learner.cfg)?;
            let stats = learner.ppo_update(&traj, &mut rng)?;
            updates += 1;
            log::debug!(
                "seed {seed} {} ep {}: mean score {:.0}, {stats:?}",
                cfg.mode.label(),
                ep + 1,
                batch.iter().map(|e| e.score).sum::<f64>() / batch.len() as f64
            );
            batch.clear();
        }
    }
    let running_avg = running_average(&scores, 100);
    let summary = RunSummary {
        seed,
        mode: cfg.mode,
        scores,
        running_avg,
        updates,
        failure_rate: None,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok((learner.params, summary))
}

/// Rejection-samples `n` initial states inside the grid.
pub fn sample_initial_states(grid: &Arc<CisGrid>, n: usize, seed: u64) -> Result<Vec<State>> {
    // the model is irrelevant for sampling
    let env = Env::new(
        crate::dynamics::Cstr::default(),
        EnvMode::WithCis(grid.clone()),
        RewardSpec::default(),
        1,
    )?;
    let mut rng = seeded_rng(seed);
    (0..n).map(|_| env.sample_initial(&mut rng)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub failed: Vec<bool>,
    pub failure_rate: f64,
}

/// Testing-mode episodes (deterministic actions, no reset, no supervisor)
/// from each supplied initial state. An episode fails when it leaves the
/// grid set.
pub fn evaluate<M: Model>(
    params: &PolicyParams,
    grid: &Arc<CisGrid>,
    model: M,
    initial_states: &[State],
    horizon: usize,
) -> Result<EvalReport> {
    let env = Env::new(model, EnvMode::WithCis(grid.clone()), RewardSpec::default(), horizon)?;
    // deterministic evaluation never draws from the stream
    let mut rng = seeded_rng(0);
    let failed: Vec<bool> = initial_states
        .iter()
        .map(|&x0| env.run_from(x0, params, &mut rng, false).failed)
        .collect();
    let failure_rate = if failed.is_empty() {
        0.0
    } else {
        failed.iter().filter(|f| **f).count() as f64 / failed.len() as f64
    };
    Ok(EvalReport {
        failed,
        failure_rate,
    })
}

/// Supervised online deployment of `params` with retraining.
pub fn run_online(
    cfg: &ExperimentConfig,
    params: PolicyParams,
    grid: Arc<CisGrid>,
    backup: Arc<BackupTable>,
    seed: u64,
) -> Result<(PolicyParams, OnlineReport)> {
    let sup = Supervisor::new(
        cfg.cstr()?,
        grid,
        backup,
        cfg.action_sampling()?,
        cfg.reward(),
        cfg.horizon,
        cfg.supervisor(),
    )?;
    let mut learner = Learner::new(params, cfg.ppo())?;
    let mut rng = seeded_rng(seed);
    let report = sup.run_online(&mut learner, cfg.online_episodes, &mut rng)?;
    Ok((learner.params, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRow {
    pub mode: Mode,
    pub budget: usize,
    pub seed: u64,
    pub failure_rate: f64,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
    pub runs: Vec<RunSummary>,
    pub test_states: Vec<State>,
}

impl SuiteReport {
    pub fn mean_failure_rate(&self, mode: Mode, budget: usize) -> Option<f64> {
        let rates: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.mode == mode && r.budget == budget)
            .map(|r| r.failure_rate)
            .collect();
        (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
    }

    pub fn run(&self, mode: Mode, budget: usize, seed: u64) -> Option<&RunSummary> {
        self.runs
            .iter()
            .find(|r| r.mode == mode && r.scores.len() == budget && r.seed == seed)
    }
}

/// Trains both modes for every budget and seed, then evaluates every policy
/// on one shared set of in-set initial states. With `out`, writes
/// `test_states.csv`, `failures.csv`, `table.csv`, per-run curves, per-run
/// evaluation logs and weights.
pub fn run_experiment_suite(
    cfg: &ExperimentConfig,
    grid: &Arc<CisGrid>,
    out: Option<&Path>,
) -> Result<SuiteReport> {
    cfg.validate()?;
    let test_states = sample_initial_states(grid, cfg.test_episodes, cfg.test_seed)?;
    let model = cfg.cstr()?;
    let mut jobs = Vec::new();
    for &budget in &cfg.budgets() {
        for mode in [Mode::WithCis, Mode::NoCis] {
            for &seed in &cfg.seeds {
                jobs.push((mode, budget, seed));
            }
        }
    }
    if let Some(dir) = out {
        for sub in ["curves", "eval", "weights"] {
            std::fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
        }
        save_states(dir.join("test_states.csv"), &test_states)?;
    }
    let results = jobs
        .par_iter()
        .map(|&(mode, budget, seed)| {
            let run_cfg = ExperimentConfig {
                mode,
                episodes: budget,
                ..cfg.clone()
            };
            let (params, mut summary) = train_offline(&run_cfg, Some(grid), seed)?;
            let eval = evaluate(&params, grid, model, &test_states, cfg.horizon)?;
            summary.failure_rate = Some(eval.failure_rate);
            log::info!(
                "{} budget {budget} seed {seed}: failure rate {:.4} ({:.1}s)",
                mode.label(),
                eval.failure_rate,
                summary.wall_clock_secs
            );
            if let Some(dir) = out {
                let tag = format!("{}_{budget}_{seed}", mode.label());
                write_curve_csv(dir.join("curves").join(format!("{tag}.csv")), &summary.scores)?;
                write_eval_csv(dir.join("eval").join(format!("{tag}.csv")), &eval.failed)?;
                params.save(dir.join("weights").join(format!("{tag}.bin")))?;
            }
            Ok((
                SuiteRow {
                    mode,
                    budget,
                    seed,
                    failure_rate: eval.failure_rate,
                },
                summary,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (rows, runs): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let report = SuiteReport {
        rows,
        runs,
        test_states,
    };
    if let Some(dir) = out {
        report::write_suite_tables(dir, cfg, &report)?;
    }
    Ok(report)
}
