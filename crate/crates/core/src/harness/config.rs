use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::PpoConfig;
use crate::cis::{ActionSampling, CellCheck, GridSpec};
use crate::dynamics::{Cstr, CstrParams, IntegratorConfig, State};
use crate::env::RewardSpec;
use crate::supervisor::SupervisorConfig;
use crate::{Error, Result};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CISRL_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    WithCis,
    NoCis,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::WithCis => "with_cis",
            Mode::NoCis => "no_cis",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "with_cis" => Ok(Mode::WithCis),
            "no_cis" => Ok(Mode::NoCis),
            _ => Err(Error::InvalidConfig(format!(
                "unknown mode `{s}` (expected with_cis or no_cis)"
            ))),
        }
    }
}

/// Flat experiment configuration, one JSON key per field. Missing keys take
/// the desk-scale defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub episodes: usize,
    pub horizon: usize,
    pub batch_episodes: usize,
    pub seeds: Vec<u64>,
    /// Training budgets compared by the suite; empty means `[episodes]`.
    pub budgets: Vec<usize>,

    pub lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub update_epochs: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub grad_clip_norm: f64,
    pub reward_scale: f64,

    pub r_safe: f64,
    pub r_unsafe: f64,

    pub dt: f64,
    pub substeps: u32,
    pub q: f64,
    pub volume: f64,
    pub k0: f64,
    pub e_over_r: f64,
    pub neg_dh: f64,
    pub rho: f64,
    pub cp: f64,
    pub ua: f64,
    pub conc_feed: f64,
    pub temp_feed: f64,

    pub grid_conc_lo: f64,
    pub grid_conc_hi: f64,
    pub grid_temp_lo: f64,
    pub grid_temp_hi: f64,
    pub grid_n_conc: usize,
    pub grid_n_temp: usize,
    pub n_actions: usize,
    /// Cell points that must stay in the set: `whole_cell` or `center`.
    pub cell_check: CellCheck,
    pub kernel_max_sweeps: usize,

    pub max_itr: usize,
    pub test_episodes: usize,
    pub online_episodes: usize,
    /// Seed of the shared evaluation initial-state set.
    pub test_seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let ppo = PpoConfig::default();
        let reward = RewardSpec::default();
        let integ = IntegratorConfig::default();
        let p = CstrParams::default();
        let grid = GridSpec::default();
        Self {
            mode: Mode::WithCis,
            episodes: 2_000,
            horizon: ppo.horizon,
            batch_episodes: ppo.batch_episodes,
            seeds: vec![1, 2, 3],
            budgets: Vec::new(),
            lr: ppo.lr,
            gamma: ppo.gamma,
            gae_lambda: ppo.gae_lambda,
            clip_eps: ppo.clip_eps,
            update_epochs: ppo.update_epochs,
            minibatch_size: ppo.minibatch_size,
            entropy_coef: ppo.entropy_coef,
            value_coef: ppo.value_coef,
            grad_clip_norm: ppo.grad_clip_norm,
            reward_scale: ppo.reward_scale,
            r_safe: reward.r_safe,
            r_unsafe: reward.r_unsafe,
            dt: integ.dt,
            substeps: integ.substeps,
            q: p.q,
            volume: p.volume,
            k0: p.k0,
            e_over_r: p.e_over_r,
            neg_dh: p.neg_dh,
            rho: p.rho,
            cp: p.cp,
            ua: p.ua,
            conc_feed: p.conc_feed,
            temp_feed: p.temp_feed,
            grid_conc_lo: grid.lo.conc,
            grid_conc_hi: grid.hi.conc,
            grid_temp_lo: grid.lo.temp,
            grid_temp_hi: grid.hi.temp,
            grid_n_conc: grid.n_conc,
            grid_n_temp: grid.n_temp,
            n_actions: 31,
            cell_check: CellCheck::default(),
            kernel_max_sweeps: 1_000,
            max_itr: SupervisorConfig::default().max_itr,
            test_episodes: 1_000,
            online_episodes: 1_000,
            test_seed: 20_240_001,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must not be empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("seeds must be distinct".into()));
        }
        if self.episodes == 0 || self.budgets.contains(&0) {
            return Err(Error::InvalidConfig("training budgets must be >= 1".into()));
        }
        if self.kernel_max_sweeps == 0 {
            return Err(Error::InvalidConfig("kernel_max_sweeps must be >= 1".into()));
        }
        self.ppo().validate()?;
        self.reward().validate()?;
        self.cstr()?;
        self.grid_spec().validate()?;
        self.action_sampling()?;
        Ok(())
    }

    pub fn ppo(&self) -> PpoConfig {
        PpoConfig {
            lr: self.lr,
            gamma: self.gamma,
            gae_lambda: self.gae_lambda,
            clip_eps: self.clip_eps,
            update_epochs: self.update_epochs,
            minibatch_size: self.minibatch_size,
            batch_episodes: self.batch_episodes,
            episodes: self.episodes,
            horizon: self.horizon,
            entropy_coef: self.entropy_coef,
            value_coef: self.value_coef,
            grad_clip_norm: self.grad_clip_norm,
            reward_scale: self.reward_scale,
        }
    }

    pub fn reward(&self) -> RewardSpec {
        RewardSpec {
            r_safe: self.r_safe,
            r_unsafe: self.r_unsafe,
        }
    }

    pub fn cstr(&self) -> Result<Cstr> {
        Cstr::new(
            CstrParams {
                q: self.q,
                volume: self.volume,
                k0: self.k0,
                e_over_r: self.e_over_r,
                neg_dh: self.neg_dh,
                rho: self.rho,
                cp: self.cp,
                ua: self.ua,
                conc_feed: self.conc_feed,
                temp_feed: self.temp_feed,
            },
            IntegratorConfig {
                dt: self.dt,
                substeps: self.substeps,
            },
        )
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            lo: State::new(self.grid_conc_lo, self.grid_temp_lo),
            hi: State::new(self.grid_conc_hi, self.grid_temp_hi),
            n_conc: self.grid_n_conc,
            n_temp: self.grid_n_temp,
        }
    }

    pub fn action_sampling(&self) -> Result<ActionSampling> {
        ActionSampling::uniform(self.n_actions)
    }

    pub fn supervisor(&self) -> SupervisorConfig {
        SupervisorConfig {
            max_itr: self.max_itr,
        }
    }

    pub fn budgets(&self) -> Vec<usize> {
        if self.budgets.is_empty() {
            vec![self.episodes]
        } else {
            self.budgets.clone()
        }
    }

    /// `out_dir` from the config, else `$CISRL_OUT`, else `./out`.
    pub fn resolved_out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}
