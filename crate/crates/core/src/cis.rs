//! Grid approximation of the control invariant set and its backup table.
//!
//! The state box is split into `n_conc x n_temp` rectangular cells and
//! membership is computed as a viability kernel: starting from every cell
//! inside the physical box, cells with no sampled coolant temperature that
//! keeps them in the set are removed until nothing changes.
//!
//! What "keeps them in the set" means is a [`CellCheck`]. With
//! [`CellCheck::Center`] only the cell center is simulated. Trajectories of
//! the cell-constant backup policy then start from off-center points the
//! check never saw, and on the reactor they leave the set within a few
//! dozen steps. [`CellCheck::WholeCell`] (the default) instead simulates a
//! 3 x 3 lattice over the cell (corners, edge midpoints, center) and
//! accepts an action only if every lattice point lands in a member cell, so
//! one stored action serves the whole cell.
//!
//! Cells are half-open `[lo, hi)` along each axis except the last cell, which
//! also owns the upper edge, so every point of the closed box maps to exactly
//! one cell.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    in_physical_bounds, Action, Model, State, CONC_MAX, CONC_MIN, COOLANT_MAX, COOLANT_MIN,
    TEMP_MAX, TEMP_MIN,
};
use crate::{Error, Result};

const GRID_MAGIC: &str = "CISGRID";
const BACKUP_MAGIC: &str = "CISBAK";
const FORMAT_VERSION: &str = "v1";

/// Sentinel successor index for "left the grid or diverged".
const OUTSIDE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: State,
    pub hi: State,
    pub n_conc: usize,
    pub n_temp: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::physical(200, 200)
    }
}

impl GridSpec {
    /// Grid over the physical constraint box.
    pub fn physical(n_conc: usize, n_temp: usize) -> Self {
        Self {
            lo: State::new(CONC_MIN, TEMP_MIN),
            hi: State::new(CONC_MAX, TEMP_MAX),
            n_conc,
            n_temp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.lo.is_finite() && self.hi.is_finite();
        if !finite || self.lo.conc >= self.hi.conc || self.lo.temp >= self.hi.temp {
            return Err(Error::InvalidConfig(format!(
                "grid box must satisfy lo < hi componentwise, got {:?} .. {:?}",
                self.lo, self.hi
            )));
        }
        if self.n_conc < 2 || self.n_temp < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid needs at least 2 cells per axis, got {} x {}",
                self.n_conc, self.n_temp
            )));
        }
        if self.cell_count() >= OUTSIDE as usize {
            return Err(Error::InvalidConfig("grid has too many cells".into()));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.n_conc * self.n_temp
    }

    /// Row-major index of cell `(i, j)`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_temp + j
    }

    pub fn cell(&self, index: usize) -> (usize, usize) {
        (index / self.n_temp, index % self.n_temp)
    }

    fn axis_cell(x: f64, lo: f64, hi: f64, n: usize) -> Option<usize> {
        if !(lo..=hi).contains(&x) {
            return None;
        }
        let k = ((x - lo) / (hi - lo) * n as f64).floor() as usize;
        Some(k.min(n - 1))
    }

    /// Cell containing `x`, or `None` outside the closed box.
    pub fn cell_of(&self, x: State) -> Option<(usize, usize)> {
        let i = Self::axis_cell(x.conc, self.lo.conc, self.hi.conc, self.n_conc)?;
        let j = Self::axis_cell(x.temp, self.lo.temp, self.hi.temp, self.n_temp)?;
        Some((i, j))
    }

    pub fn index_of(&self, x: State) -> Option<usize> {
        self.cell_of(x).map(|(i, j)| self.index(i, j))
    }

    pub fn center(&self, i: usize, j: usize) -> State {
        let wc = (self.hi.conc - self.lo.conc) / self.n_conc as f64;
        let wt = (self.hi.temp - self.lo.temp) / self.n_temp as f64;
        State::new(
            self.lo.conc + (i as f64 + 0.5) * wc,
            self.lo.temp + (j as f64 + 0.5) * wt,
        )
    }
}

/// Uniformly spaced coolant temperatures over the admissible range.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSampling {
    values: Vec<f64>,
}

impl Default for ActionSampling {
    fn default() -> Self {
        Self::uniform(31).expect("31 >= 2")
    }
}

impl ActionSampling {
    pub fn uniform(n_actions: usize) -> Result<Self> {
        if n_actions < 2 {
            return Err(Error::InvalidConfig(format!(
                "action sampling needs at least 2 values, got {n_actions}"
            )));
        }
        let span = COOLANT_MAX - COOLANT_MIN;
        let last = (n_actions - 1) as f64;
        let values = (0..n_actions)
            .map(|k| {
                if k == n_actions - 1 {
                    COOLANT_MAX
                } else {
                    COOLANT_MIN + span * k as f64 / last
                }
            })
            .collect();
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Which points of a cell must stay in the set for an action to count as
/// safe for that cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellCheck {
    /// The cell center only.
    Center,
    /// A 3 x 3 lattice over the closed cell, center included.
    #[default]
    WholeCell,
}

/// Edge samples sit this fraction of a cell width inside the cell. The upper
/// edge belongs to the neighbouring cell under the half-open rule, and a
/// point computed exactly on the lower edge can round into the neighbour.
const EDGE_INSET: f64 = 1e-6;

impl CellCheck {
    /// Sample positions along each axis, as fractions of the cell width.
    fn fractions(self) -> &'static [f64] {
        match self {
            CellCheck::Center => &[0.5],
            CellCheck::WholeCell => &[EDGE_INSET, 0.5, 1.0 - EDGE_INSET],
        }
    }

    /// The points of cell `(i, j)` that must stay in the set.
    pub fn samples(self, spec: &GridSpec, i: usize, j: usize) -> impl Iterator<Item = State> + '_ {
        let wc = (spec.hi.conc - spec.lo.conc) / spec.n_conc as f64;
        let wt = (spec.hi.temp - spec.lo.temp) / spec.n_temp as f64;
        let (lo_c, lo_t) = (spec.lo.conc, spec.lo.temp);
        let f = self.fractions();
        f.iter().flat_map(move |&fc| {
            f.iter().map(move |&ft| {
                // same expression as `GridSpec::center` at one half
                State::new(lo_c + (i as f64 + fc) * wc, lo_t + (j as f64 + ft) * wt)
            })
        })
    }
}

impl std::str::FromStr for CellCheck {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "center" => Ok(CellCheck::Center),
            "whole_cell" => Ok(CellCheck::WholeCell),
            _ => Err(Error::InvalidConfig(format!(
                "unknown cell check `{s}` (expected center or whole_cell)"
            ))),
        }
    }
}

/// Successor cells of every cell under every sampled action.
///
/// Sample points never move, so the expensive integration is done once and
/// every kernel sweep is a table lookup. Each `(cell, action)` entry is
/// either an escape (some sample left the grid or diverged) or the sorted,
/// deduplicated list of cells its samples land in.
#[derive(Debug, Clone)]
pub struct SuccessorTable {
    spec: GridSpec,
    n_actions: usize,
    check: CellCheck,
    offsets: Vec<u32>,
    targets: Vec<u32>,
}

impl SuccessorTable {
    pub fn build<M: Model>(
        spec: &GridSpec,
        actions: &ActionSampling,
        model: &M,
        check: CellCheck,
    ) -> Result<Self> {
        spec.validate()?;
        let n_actions = actions.len();
        let per_cell: Vec<Vec<Option<Vec<u32>>>> = (0..spec.cell_count())
            .into_par_iter()
            .map(|c| {
                let (i, j) = spec.cell(c);
                let mut entries: Vec<Option<Vec<u32>>> = vec![Some(Vec::new()); n_actions];
                for x in check.samples(spec, i, j) {
                    for (entry, &tc) in entries.iter_mut().zip(actions.values()) {
                        let Some(cells) = entry else { continue };
                        // divergence counts as leaving the set
                        match model.next_state(x, Action::new(tc)).map(|n| spec.index_of(n)) {
                            Ok(Some(k)) => cells.push(k as u32),
                            _ => *entry = None,
                        }
                    }
                }
                for cells in entries.iter_mut().flatten() {
                    cells.sort_unstable();
                    cells.dedup();
                }
                entries
            })
            .collect();

        let mut offsets = Vec::with_capacity(spec.cell_count() * n_actions + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for entry in per_cell.into_iter().flatten() {
            match entry {
                // an escape is encoded as an entry holding only the sentinel
                None => targets.push(OUTSIDE),
                Some(cells) => targets.extend(cells),
            }
            offsets.push(targets.len() as u32);
        }
        Ok(Self {
            spec: *spec,
            n_actions,
            check,
            offsets,
            targets,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn check(&self) -> CellCheck {
        self.check
    }

    /// Cells reached from `cell` under action number `action`, or `None`
    /// when some sample escapes.
    pub fn successors(&self, cell: usize, action: usize) -> Option<&[u32]> {
        let e = cell * self.n_actions + action;
        let t = &self.targets[self.offsets[e] as usize..self.offsets[e + 1] as usize];
        (t.first() != Some(&OUTSIDE)).then_some(t)
    }

    /// First action (in ascending order) whose samples all land in members.
    pub fn first_safe_action(&self, cell: usize, member: &[bool]) -> Option<usize> {
        (0..self.n_actions).find(|&a| {
            self.successors(cell, a)
                .is_some_and(|t| t.iter().all(|&k| member[k as usize]))
        })
    }

    /// One kernel sweep over a snapshot. Returns the new membership and the
    /// number of removed cells.
    pub fn sweep(&self, member: &[bool]) -> (Vec<bool>, usize) {
        let next: Vec<bool> = (0..member.len())
            .into_par_iter()
            .map(|c| member[c] && self.first_safe_action(c, member).is_some())
            .collect();
        let removed = member.iter().zip(&next).filter(|(a, b)| **a && !**b).count();
        (next, removed)
    }
}

/// Result of [`compute_kernel`].
#[derive(Debug, Clone)]
pub struct KernelReport {
    pub grid: CisGrid,
    /// Sweeps executed, including the final one that removed nothing.
    pub sweeps: usize,
    /// `true` when a sweep removed no cell before `max_sweeps` ran out.
    pub converged: bool,
    pub removed_per_sweep: Vec<usize>,
}

impl KernelReport {
    pub fn into_converged(self) -> Result<CisGrid> {
        if self.converged {
            Ok(self.grid)
        } else {
            Err(Error::InvalidConfig(format!(
                "kernel did not reach a fixed point within {} sweeps",
                self.sweeps
            )))
        }
    }
}

/// Iterative viability-kernel computation on the grid with whole-cell
/// checks.
pub fn compute_kernel<M: Model>(
    spec: &GridSpec,
    actions: &ActionSampling,
    model: &M,
    max_sweeps: usize,
) -> Result<KernelReport> {
    compute_kernel_with(spec, actions, model, max_sweeps, CellCheck::default())
}

pub fn compute_kernel_with<M: Model>(
    spec: &GridSpec,
    actions: &ActionSampling,
    model: &M,
    max_sweeps: usize,
    check: CellCheck,
) -> Result<KernelReport> {
    if max_sweeps == 0 {
        return Err(Error::InvalidConfig("max_sweeps must be >= 1".into()));
    }
    let table = SuccessorTable::build(spec, actions, model, check)?;
    Ok(kernel_from_table(&table, max_sweeps))
}

pub fn kernel_from_table(table: &SuccessorTable, max_sweeps: usize) -> KernelReport {
    let spec = *table.spec();
    let mut member: Vec<bool> = (0..spec.cell_count())
        .map(|c| {
            let (i, j) = spec.cell(c);
            in_physical_bounds(spec.center(i, j))
        })
        .collect();
    let mut removed_per_sweep = Vec::new();
    let mut converged = false;
    while removed_per_sweep.len() < max_sweeps {
        let (next, removed) = table.sweep(&member);
        removed_per_sweep.push(removed);
        member = next;
        if removed == 0 {
            converged = true;
            break;
        }
    }
    log::debug!(
        "kernel: {} sweeps, {} member cells, converged={converged}",
        removed_per_sweep.len(),
        member.iter().filter(|m| **m).count()
    );
    KernelReport {
        grid: CisGrid { spec, member },
        sweeps: removed_per_sweep.len(),
        converged,
        removed_per_sweep,
    }
}

/// Boolean membership grid approximating the control invariant set.
#[derive(Debug, Clone, PartialEq)]
pub struct CisGrid {
    spec: GridSpec,
    member: Vec<bool>,
}

impl CisGrid {
    pub fn from_parts(spec: GridSpec, member: Vec<bool>) -> Result<Self> {
        spec.validate()?;
        if member.len() != spec.cell_count() {
            return Err(Error::LengthMismatch(format!(
                "membership has {} cells, grid declares {}",
                member.len(),
                spec.cell_count()
            )));
        }
        Ok(Self { spec, member })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn membership(&self) -> &[bool] {
        &self.member
    }

    pub fn is_member(&self, i: usize, j: usize) -> bool {
        self.member[self.spec.index(i, j)]
    }

    pub fn member_count(&self) -> usize {
        self.member.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.member_count() == 0
    }

    pub fn contains(&self, x: State) -> bool {
        self.spec.index_of(x).is_some_and(|k| self.member[k])
    }

    pub fn member_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.member
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(k, _)| self.spec.cell(k))
    }

    /// Concentration range spanned by member cell centers.
    pub fn conc_extent(&self) -> Option<(f64, f64)> {
        let mut it = self.member_cells().map(|(i, j)| self.spec.center(i, j).conc);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), c| (lo.min(c), hi.max(c))))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{GRID_MAGIC} {FORMAT_VERSION}").unwrap();
        write_dims(&mut out, &self.spec);
        let mut payload = Vec::with_capacity(self.member.len());
        for i in 0..self.spec.n_conc {
            let row = &self.member[i * self.spec.n_temp..(i + 1) * self.spec.n_temp];
            let start = payload.len();
            payload.extend(row.iter().map(|m| if *m { b'1' } else { b'0' }));
            out.push_str(std::str::from_utf8(&payload[start..]).unwrap());
            out.push('\n');
        }
        writeln!(out, "crc32 {:08x}", crc32fast::hash(&payload)).unwrap();
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        check_magic(lines.next(), GRID_MAGIC)?;
        let spec = parse_dims(lines.next())?;
        let mut payload = Vec::with_capacity(spec.cell_count());
        for i in 0..spec.n_conc {
            let row = lines.next().ok_or_else(|| {
                Error::Malformed(format!("expected {} membership rows, found {i}", spec.n_conc))
            })?;
            if row.len() != spec.n_temp {
                return Err(Error::Malformed(format!(
                    "row {i} has {} cells, header declares {}",
                    row.len(),
                    spec.n_temp
                )));
            }
            if let Some(bad) = row.bytes().find(|b| *b != b'0' && *b != b'1') {
                return Err(Error::Malformed(format!(
                    "row {i} contains invalid byte {:?}",
                    bad as char
                )));
            }
            payload.extend_from_slice(row.as_bytes());
        }
        let stored = parse_crc(lines.next())?;
        check_crc(stored, &payload)?;
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(Error::Malformed("trailing data after checksum".into()));
        }
        let member = payload.iter().map(|b| *b == b'1').collect();
        Self::from_parts(spec, member)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Verified safe coolant temperature for every member cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BackupTable {
    spec: GridSpec,
    action: Vec<Option<f64>>,
}

/// Stores, for each member cell, the first sampled action (ascending) that
/// keeps every sample of the cell in the set, using whole-cell checks.
pub fn build_backup<M: Model>(
    grid: &CisGrid,
    actions: &ActionSampling,
    model: &M,
) -> Result<BackupTable> {
    build_backup_with(grid, actions, model, CellCheck::default())
}

pub fn build_backup_with<M: Model>(
    grid: &CisGrid,
    actions: &ActionSampling,
    model: &M,
    check: CellCheck,
) -> Result<BackupTable> {
    let spec = *grid.spec();
    let action = (0..spec.cell_count())
        .into_par_iter()
        .map(|c| {
            if !grid.member[c] {
                return Ok(None);
            }
            let (i, j) = spec.cell(c);
            let lands_inside = |tc: f64| {
                check.samples(&spec, i, j).all(|x| {
                    model
                        .next_state(x, Action::new(tc))
                        .is_ok_and(|next| grid.contains(next))
                })
            };
            actions
                .values()
                .iter()
                .copied()
                .find(|&tc| lands_inside(tc))
                .map(Some)
                .ok_or(Error::MissingSafeAction { i, j })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BackupTable { spec, action })
}

impl BackupTable {
    pub fn from_parts(spec: GridSpec, action: Vec<Option<f64>>) -> Result<Self> {
        spec.validate()?;
        if action.len() != spec.cell_count() {
            return Err(Error::LengthMismatch(format!(
                "table has {} cells, grid declares {}",
                action.len(),
                spec.cell_count()
            )));
        }
        Ok(Self { spec, action })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.action.iter().filter(|a| a.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_action(&self, i: usize, j: usize) -> Option<Action> {
        self.action[self.spec.index(i, j)].map(Action::new)
    }

    /// True when the table covers exactly the member cells of `grid`.
    pub fn matches(&self, grid: &CisGrid) -> bool {
        self.spec == *grid.spec()
            && self
                .action
                .iter()
                .zip(grid.membership())
                .all(|(a, m)| a.is_some() == *m)
    }

    /// The stored action of the cell containing `x`.
    pub fn backup_action(&self, x: State) -> Result<Action> {
        self.spec
            .index_of(x)
            .and_then(|k| self.action[k])
            .map(Action::new)
            .ok_or(Error::OutsideSet {
                conc: x.conc,
                temp: x.temp,
            })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{BACKUP_MAGIC} {FORMAT_VERSION}").unwrap();
        write_dims(&mut out, &self.spec);
        let mut body = String::new();
        for (k, a) in self.action.iter().enumerate() {
            if let Some(tc) = a {
                let (i, j) = self.spec.cell(k);
                writeln!(body, "{i} {j} {tc}").unwrap();
            }
        }
        out.push_str(&body);
        writeln!(out, "crc32 {:08x}", crc32fast::hash(body.as_bytes())).unwrap();
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        check_magic(lines.next(), BACKUP_MAGIC)?;
        let spec = parse_dims(lines.next())?;
        let mut action = vec![None; spec.cell_count()];
        let mut body = String::new();
        let stored = loop {
            let line = lines
                .next()
                .ok_or_else(|| Error::Malformed("missing checksum line".into()))?;
            if line.starts_with("crc32") {
                break parse_crc(Some(line))?;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [i, j, tc] = fields[..] else {
                return Err(Error::Malformed(format!("bad backup entry `{line}`")));
            };
            let bad = || Error::Malformed(format!("bad backup entry `{line}`"));
            let i: usize = i.parse().map_err(|_| bad())?;
            let j: usize = j.parse().map_err(|_| bad())?;
            let tc: f64 = tc.parse().map_err(|_| bad())?;
            if i >= spec.n_conc || j >= spec.n_temp || !tc.is_finite() {
                return Err(bad());
            }
            let slot = &mut action[spec.index(i, j)];
            if slot.replace(tc).is_some() {
                return Err(Error::Malformed(format!("duplicate backup entry for ({i}, {j})")));
            }
            body.push_str(line);
            body.push('\n');
        };
        check_crc(stored, body.as_bytes())?;
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(Error::Malformed("trailing data after checksum".into()));
        }
        Self::from_parts(spec, action)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn write_dims(out: &mut String, spec: &GridSpec) {
    writeln!(
        out,
        "{} {} {} {} {} {}",
        spec.lo.conc, spec.lo.temp, spec.hi.conc, spec.hi.temp, spec.n_conc, spec.n_temp
    )
    .unwrap();
}

fn check_magic(line: Option<&str>, magic: &str) -> Result<()> {
    let line = line.ok_or_else(|| Error::Malformed("empty file".into()))?;
    match line.split_once(' ') {
        Some((m, v)) if m == magic && v == FORMAT_VERSION => Ok(()),
        Some((m, v)) if m == magic => Err(Error::VersionMismatch {
            expected: FORMAT_VERSION.into(),
            found: v.into(),
        }),
        _ => Err(Error::Malformed(format!("expected `{magic} {FORMAT_VERSION}` header"))),
    }
}

fn parse_dims(line: Option<&str>) -> Result<GridSpec> {
    let line = line.ok_or_else(|| Error::Malformed("missing dimension line".into()))?;
    let bad = || Error::Malformed(format!("bad dimension line `{line}`"));
    let fields: Vec<&str> = line.split_whitespace().collect();
    let [lc, lt, hc, ht, nc, nt] = fields[..] else {
        return Err(bad());
    };
    let f = |s: &str| s.parse::<f64>().map_err(|_| bad());
    let n = |s: &str| s.parse::<usize>().map_err(|_| bad());
    let spec = GridSpec {
        lo: State::new(f(lc)?, f(lt)?),
        hi: State::new(f(hc)?, f(ht)?),
        n_conc: n(nc)?,
        n_temp: n(nt)?,
    };
    spec.validate()
        .map_err(|e| Error::Malformed(format!("invalid grid dimensions: {e}")))?;
    Ok(spec)
}

fn parse_crc(line: Option<&str>) -> Result<u32> {
    let line = line.ok_or_else(|| Error::Malformed("missing checksum line".into()))?;
    line.strip_prefix("crc32 ")
        .and_then(|h| u32::from_str_radix(h.trim(), 16).ok())
        .ok_or_else(|| Error::Malformed(format!("bad checksum line `{line}`")))
}

fn check_crc(stored: u32, payload: &[u8]) -> Result<()> {
    let computed = crc32fast::hash(payload);
    if stored == computed {
        Ok(())
    } else {
        Err(Error::Checksum { stored, computed })
    }
}
