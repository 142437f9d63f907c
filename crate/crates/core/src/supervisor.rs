//! Safety supervisor for online deployment.
//!
//! Every action the policy prescribes is first simulated on the model. If the
//! predicted state leaves the invariant set, the policy is updated on that
//! rejected experience and asked again, at most `max_itr` times; after that
//! the backup table supplies the action.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::Learner;
use crate::cis::{ActionSampling, BackupTable, CisGrid};
use crate::dynamics::{Action, Model, State};
use crate::env::{Env, EnvMode, RewardSpec, Transition};
use crate::{Error, Result, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupervisorConfig {
    pub max_itr: usize,
}

impl Default for SupervisorConfig {
    fn default() -> Self {
        Self { max_itr: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSource {
    PolicyFirstTry,
    /// Accepted after this many online updates.
    PolicyAfterRetrain(usize),
    Backup,
    /// The stored backup action is verified on finitely many points of its
    /// cell; if it still fails from the actual state the sampled actions are
    /// searched.
    BackupSearch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SupervisorStepInfo {
    pub source: ActionSource,
    pub updates_performed: usize,
    pub predicted_safe: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeTelemetry {
    pub score: f64,
    pub steps: usize,
    pub backup_uses: usize,
    pub search_uses: usize,
    pub retrain_updates: usize,
    pub failed: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OnlineReport {
    pub episodes: Vec<EpisodeTelemetry>,
}

impl OnlineReport {
    pub fn failures(&self) -> usize {
        self.episodes.iter().filter(|e| e.failed).count()
    }

    pub fn backup_uses(&self) -> usize {
        self.episodes.iter().map(|e| e.backup_uses + e.search_uses).sum()
    }

    pub fn retrain_updates(&self) -> usize {
        self.episodes.iter().map(|e| e.retrain_updates).sum()
    }

    /// Rows `episode,score,backup_uses,retrain_updates,failed`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "episode,score,backup_uses,retrain_updates,failed")?;
        for (k, e) in self.episodes.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                k + 1,
                e.score,
                e.backup_uses + e.search_uses,
                e.retrain_updates,
                e.failed as u8
            )?;
        }
        Ok(())
    }
}

pub struct Supervisor<M> {
    env: Env<M>,
    grid: Arc<CisGrid>,
    backup: Arc<BackupTable>,
    actions: ActionSampling,
    pub cfg: SupervisorConfig,
}

impl<M: Model> Supervisor<M> {
    pub fn new(
        model: M,
        grid: Arc<CisGrid>,
        backup: Arc<BackupTable>,
        actions: ActionSampling,
        reward: RewardSpec,
        horizon: usize,
        cfg: SupervisorConfig,
    ) -> Result<Self> {
        if !backup.matches(&grid) {
            return Err(Error::InvalidConfig(
                "backup table does not cover exactly the member cells of the grid".into(),
            ));
        }
        let env = Env::new(model, EnvMode::WithCis(grid.clone()), reward, horizon)?;
        Ok(Self {
            env,
            grid,
            backup,
            actions,
            cfg,
        })
    }

    pub fn env(&self) -> &Env<M> {
        &self.env
    }

    fn predicted_safe(&self, x: State, u: Action) -> bool {
        self.env
            .model
            .next_state(x, u)
            .is_ok_and(|next| self.grid.contains(next))
    }

    /// Returns an action whose predicted successor is in the set, possibly
    /// after updating the learner's policy.
    ///
    /// The first proposal is the policy mean; retries sample the policy so
    /// that the rejected experience carries a direction for the mean.
    pub fn supervised_step(
        &self,
        learner: &mut Learner,
        x: State,
        rng: &mut SimRng,
    ) -> Result<(Action, SupervisorStepInfo)> {
        if !self.grid.contains(x) {
            return Err(Error::OutsideSet {
                conc: x.conc,
                temp: x.temp,
            });
        }
        let mut updates = 0;
        loop {
            let d = learner.params.act(x, rng, updates > 0);
            if self.predicted_safe(x, d.action) {
                let source = if updates == 0 {
                    ActionSource::PolicyFirstTry
                } else {
                    ActionSource::PolicyAfterRetrain(updates)
                };
                let info = SupervisorStepInfo {
                    source,
                    updates_performed: updates,
                    predicted_safe: true,
                };
                return Ok((d.action, info));
            }
            if updates >= self.cfg.max_itr {
                break;
            }
            // the rejected proposal is never applied; as in offline training
            // the state is held at x and the penalty is received
            let rejected = Transition {
                x,
                u: d.action,
                pre_squash: d.pre_squash,
                reward: self.env.reward.r_unsafe,
                x_next: x,
                reset_applied: true,
                log_prob: d.log_prob,
                value_est: d.value,
            };
            learner.single_transition_update(&rejected)?;
            updates += 1;
        }

        let stored = self.backup.backup_action(x)?;
        if self.predicted_safe(x, stored) {
            let info = SupervisorStepInfo {
                source: ActionSource::Backup,
                updates_performed: updates,
                predicted_safe: true,
            };
            return Ok((stored, info));
        }
        let found = self
            .actions
            .values()
            .iter()
            .map(|&tc| Action::new(tc))
            .find(|&u| self.predicted_safe(x, u));
        let info = SupervisorStepInfo {
            source: ActionSource::BackupSearch,
            updates_performed: updates,
            predicted_safe: found.is_some(),
        };
        if found.is_none() {
            log::warn!("no sampled action keeps ({}, {}) in the set", x.conc, x.temp);
        }
        Ok((found.unwrap_or(stored), info))
    }

    /// Runs supervised episodes from in-set initial states, retraining the
    /// learner whenever the policy's proposal is rejected.
    pub fn run_online(
        &self,
        learner: &mut Learner,
        episodes: usize,
        rng: &mut SimRng,
    ) -> Result<OnlineReport> {
        let mut report = OnlineReport::default();
        for _ in 0..episodes {
            let mut x = self.env.sample_initial(rng)?;
            let mut t = EpisodeTelemetry {
                score: 0.0,
                steps: 0,
                backup_uses: 0,
                search_uses: 0,
                retrain_updates: 0,
                failed: false,
            };
            for _ in 0..self.env.horizon {
                let (u, info) = self.supervised_step(learner, x, rng)?;
                t.retrain_updates += info.updates_performed;
                match info.source {
                    ActionSource::Backup => t.backup_uses += 1,
                    ActionSource::BackupSearch => t.search_uses += 1,
                    _ => {}
                }
                t.steps += 1;
                match self.env.model.next_state(x, u) {
                    Ok(next) if self.grid.contains(next) => {
                        t.score += self.env.reward.r_safe;
                        x = next;
                    }
                    _ => {
                        t.score += self.env.reward.r_unsafe;
                        t.failed = true;
                        break;
                    }
                }
            }
            report.episodes.push(t);
        }
        Ok(report)
    }
}
