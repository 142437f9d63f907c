//! Python bindings for `cisrl`.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use cisrl::agent::PolicyParams;
use cisrl::dynamics::{self, Action, CstrParams, IntegratorConfig, Model};
use cisrl::harness::{self, ExperimentConfig, Mode};

fn to_py(e: cisrl::Error) -> PyErr {
    match e {
        cisrl::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_mode(mode: &str) -> PyResult<Mode> {
    mode.parse().map_err(to_py)
}

#[pyclass(name = "State", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyState {
    #[pyo3(get)]
    conc: f64,
    #[pyo3(get)]
    temp: f64,
}

#[pymethods]
impl PyState {
    #[new]
    fn new(conc: f64, temp: f64) -> Self {
        Self { conc, temp }
    }

    fn __repr__(&self) -> String {
        format!("State(conc={}, temp={})", self.conc, self.temp)
    }
}

impl From<PyState> for dynamics::State {
    fn from(s: PyState) -> Self {
        dynamics::State::new(s.conc, s.temp)
    }
}

/// Time derivatives `(dcA/dt, dT/dt)` at the default parameters.
#[pyfunction]
fn rhs(conc: f64, temp: f64, coolant: f64) -> (f64, f64) {
    dynamics::rhs(
        dynamics::State::new(conc, temp),
        Action::new(coolant),
        &CstrParams::default(),
    )
}

/// One sampling period of the default discrete-time model.
#[pyfunction]
fn step(conc: f64, temp: f64, coolant: f64) -> PyResult<PyState> {
    let x = dynamics::step(
        dynamics::State::new(conc, temp),
        Action::new(coolant),
        &CstrParams::default(),
        &IntegratorConfig::default(),
    )
    .map_err(to_py)?;
    Ok(PyState::new(x.conc, x.temp))
}

#[pyclass(name = "CisGrid", frozen)]
struct PyCisGrid(Arc<cisrl::cis::CisGrid>);

#[pymethods]
impl PyCisGrid {
    /// Computes the grid invariant set over the physical box.
    #[staticmethod]
    #[pyo3(signature = (n_conc = 200, n_temp = 200, n_actions = 31))]
    fn compute(py: Python<'_>, n_conc: usize, n_temp: usize, n_actions: usize) -> PyResult<Self> {
        let cfg = ExperimentConfig {
            grid_n_conc: n_conc,
            grid_n_temp: n_temp,
            n_actions,
            ..Default::default()
        };
        let grid = py
            .detach(|| harness::compute_cis(&cfg).and_then(|r| r.into_converged()))
            .map_err(to_py)?;
        Ok(Self(Arc::new(grid)))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        cisrl::cis::CisGrid::load(path)
            .map(|g| Self(Arc::new(g)))
            .map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(path).map_err(to_py)
    }

    fn contains(&self, conc: f64, temp: f64) -> bool {
        self.0.contains(dynamics::State::new(conc, temp))
    }

    fn member_count(&self) -> usize {
        self.0.member_count()
    }

    fn shape(&self) -> (usize, usize) {
        (self.0.spec().n_conc, self.0.spec().n_temp)
    }

    fn is_member(&self, i: usize, j: usize) -> bool {
        let s = self.0.spec();
        i < s.n_conc && j < s.n_temp && self.0.is_member(i, j)
    }

    /// Rejection-samples in-set states with a fixed seed.
    fn sample_states(&self, n: usize, seed: u64) -> PyResult<Vec<PyState>> {
        let xs = harness::sample_initial_states(&self.0, n, seed).map_err(to_py)?;
        Ok(xs.into_iter().map(|x| PyState::new(x.conc, x.temp)).collect())
    }
}

#[pyclass(name = "BackupTable", frozen)]
struct PyBackupTable(Arc<cisrl::cis::BackupTable>);

#[pymethods]
impl PyBackupTable {
    #[staticmethod]
    fn build(py: Python<'_>, grid: &PyCisGrid) -> PyResult<Self> {
        let g = grid.0.clone();
        let table = py
            .detach(|| harness::compute_backup(&ExperimentConfig::default(), &g))
            .map_err(to_py)?;
        Ok(Self(Arc::new(table)))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        cisrl::cis::BackupTable::load(path)
            .map(|t| Self(Arc::new(t)))
            .map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(path).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Stored coolant temperature for the cell containing the state.
    fn action(&self, conc: f64, temp: f64) -> PyResult<f64> {
        self.0
            .backup_action(dynamics::State::new(conc, temp))
            .map(|a| a.coolant)
            .map_err(to_py)
    }
}

#[pyclass(name = "Policy")]
struct PyPolicy(PolicyParams);

#[pymethods]
impl PyPolicy {
    /// Freshly initialised actor-critic with the given seed.
    #[new]
    #[pyo3(signature = (seed = 0))]
    fn new(seed: u64) -> Self {
        Self(PolicyParams::new(&mut cisrl::seeded_rng(seed)))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        PolicyParams::load(path).map(Self).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(path).map_err(to_py)
    }

    /// Deterministic coolant temperature for a state.
    fn act(&self, conc: f64, temp: f64) -> f64 {
        let mut rng = cisrl::seeded_rng(0);
        self.0
            .act(dynamics::State::new(conc, temp), &mut rng, false)
            .action
            .coolant
    }

    /// Critic estimate for a state (in scaled reward units).
    fn value(&self, conc: f64, temp: f64) -> f64 {
        self.0.critic_value(dynamics::State::new(conc, temp))
    }

    #[getter]
    fn log_std(&self) -> f64 {
        self.0.log_std()
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.0.to_bytes()
    }
}

/// Trains a policy offline. Returns `(policy, episode_scores)`.
#[pyfunction]
#[pyo3(signature = (mode, episodes, seed, grid = None, horizon = 200))]
fn train_offline(
    py: Python<'_>,
    mode: &str,
    episodes: usize,
    seed: u64,
    grid: Option<&PyCisGrid>,
    horizon: usize,
) -> PyResult<(PyPolicy, Vec<f64>)> {
    let cfg = ExperimentConfig {
        mode: parse_mode(mode)?,
        episodes,
        horizon,
        ..Default::default()
    };
    let grid = grid.map(|g| g.0.clone());
    let (params, summary) = py
        .detach(|| harness::train_offline(&cfg, grid.as_ref(), seed))
        .map_err(to_py)?;
    Ok((PyPolicy(params), summary.scores))
}

/// Unsupervised failure rate from the given initial states.
#[pyfunction]
#[pyo3(signature = (policy, grid, states, horizon = 200))]
fn evaluate(
    policy: &PyPolicy,
    grid: &PyCisGrid,
    states: Vec<PyState>,
    horizon: usize,
) -> PyResult<f64> {
    let xs: Vec<dynamics::State> = states.into_iter().map(Into::into).collect();
    let model = ExperimentConfig::default().cstr().map_err(to_py)?;
    harness::evaluate(&policy.0, &grid.0, model, &xs, horizon)
        .map(|r| r.failure_rate)
        .map_err(to_py)
}

/// Supervised online control with retraining. Returns
/// `(retrained_policy, failures, backup_uses, retrain_updates)`.
#[pyfunction]
#[pyo3(signature = (policy, grid, backup, episodes, seed, max_itr = 10, horizon = 200))]
#[allow(clippy::too_many_arguments)]
fn run_online(
    py: Python<'_>,
    policy: &PyPolicy,
    grid: &PyCisGrid,
    backup: &PyBackupTable,
    episodes: usize,
    seed: u64,
    max_itr: usize,
    horizon: usize,
) -> PyResult<(PyPolicy, usize, usize, usize)> {
    let cfg = ExperimentConfig {
        online_episodes: episodes,
        max_itr,
        horizon,
        ..Default::default()
    };
    let (params, g, b) = (policy.0.clone(), grid.0.clone(), backup.0.clone());
    let (params, report) = py
        .detach(|| harness::run_online(&cfg, params, g, b, seed))
        .map_err(to_py)?;
    Ok((
        PyPolicy(params),
        report.failures(),
        report.backup_uses(),
        report.retrain_updates(),
    ))
}

/// Whether the default model keeps `(conc, temp)` inside the grid set
/// under a constant coolant temperature for one step.
#[pyfunction]
fn successor_in_set(grid: &PyCisGrid, conc: f64, temp: f64, coolant: f64) -> PyResult<bool> {
    let model = ExperimentConfig::default().cstr().map_err(to_py)?;
    let next = model
        .next_state(dynamics::State::new(conc, temp), Action::new(coolant))
        .map_err(to_py)?;
    Ok(grid.0.contains(next))
}

#[pymodule]
fn cisrl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyState>()?;
    m.add_class::<PyCisGrid>()?;
    m.add_class::<PyBackupTable>()?;
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(rhs, m)?)?;
    m.add_function(wrap_pyfunction!(step, m)?)?;
    m.add_function(wrap_pyfunction!(train_offline, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run_online, m)?)?;
    m.add_function(wrap_pyfunction!(successor_in_set, m)?)?;
    Ok(())
}
