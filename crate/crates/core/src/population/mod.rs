//! Individual-based simulation of the cell population.
//!
//! Each cell carries a trait integrated by [`crate::dynamics`]. Division and
//! death events are drawn from the cell's own exponential clock. The
//! cumulative hazard over a step is exact when the trait flow is
//! deterministic and linear with affine rates, and trapezoidal otherwise, with
//! per-cell sub-steps keeping the hazard of each sub-step at most
//! [`MAX_STEP_HAZARD`]. A cell may therefore divide several times in one step.

mod label;

use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

pub use label::Label;

use crate::dynamics::{step_sizes, PathStatus, TraitStepper};
use crate::error::{invalid, Result};
use crate::model::{CellPolicy, ModelSpec, Rates};

/// Largest expected number of events per cell per sub-step under the trapezoidal hazard.
pub const MAX_STEP_HAZARD: f64 = 0.1;

pub const DEFAULT_MAX_CELLS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellStatus {
    Alive,
    Dead,
    Exploded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub label: Label,
    pub trait_value: f64,
    pub status: CellStatus,
    pub birth_time: f64,
    /// Set when a death event fires in death-marking mode; the cell then keeps
    /// evolving as if the death rate were zero.
    pub marked: bool,
}

impl Cell {
    pub fn ancestor(trait_value: f64) -> Self {
        Cell {
            label: Label::root(),
            trait_value,
            status: CellStatus::Alive,
            birth_time: 0.0,
            marked: false,
        }
    }
}

/// Observation and control settings for a population run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    /// Observation times in [0, horizon].
    pub grid: Vec<f64>,
    /// Thresholds K for #{u : X_t^u > K}.
    #[serde(default)]
    pub thresholds: Vec<f64>,
    /// Caps M for Σ_u min(X_t^u, M).
    #[serde(default)]
    pub caps: Vec<f64>,
    #[serde(default = "default_max_cells")]
    pub max_cells: usize,
    /// Stop once this many unmarked cells are alive.
    #[serde(default)]
    pub survival_threshold: Option<usize>,
    #[serde(default)]
    pub death_marking: bool,
}

fn default_max_cells() -> usize {
    DEFAULT_MAX_CELLS
}

impl PopulationConfig {
    pub fn at_times(grid: Vec<f64>) -> Self {
        PopulationConfig {
            grid,
            thresholds: Vec::new(),
            caps: Vec::new(),
            max_cells: DEFAULT_MAX_CELLS,
            survival_threshold: None,
            death_marking: false,
        }
    }

    pub fn with_thresholds(mut self, thresholds: Vec<f64>) -> Self {
        self.thresholds = thresholds;
        self
    }

    pub fn with_caps(mut self, caps: Vec<f64>) -> Self {
        self.caps = caps;
        self
    }

    pub fn with_max_cells(mut self, max_cells: usize) -> Self {
        self.max_cells = max_cells;
        self
    }

    pub fn with_survival_threshold(mut self, n: usize) -> Self {
        self.survival_threshold = Some(n);
        self
    }

    pub fn with_death_marking(mut self) -> Self {
        self.death_marking = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationSnapshotStats {
    pub t: f64,
    /// N_t: unmarked cells alive, exploded ones included.
    pub alive: usize,
    /// 𝔠_t: unmarked cells alive with a finite trait.
    pub counted: usize,
    pub exploded: usize,
    /// Per threshold K, #{counted cells with X > K}.
    pub above: Vec<usize>,
    /// #{counted cells with X > 0}.
    pub positive: usize,
    /// Per cap M, Σ over counted cells of min(X, M).
    pub capped_sums: Vec<f64>,
    pub quantile_50: f64,
    pub quantile_90: f64,
    /// Cells alive when death events only mark cells (the population with q = 0).
    pub unmarked_and_marked: usize,
}

impl PopulationSnapshotStats {
    pub fn fraction_above(&self, k: usize) -> f64 {
        ratio(self.above[k], self.counted)
    }

    pub fn fraction_positive(&self) -> f64 {
        ratio(self.positive, self.counted)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        f64::NAN
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Hazard {
    /// λ(s) = a·x₀e^{gs} + b along the exact linear flow.
    Exact { a: f64, b: f64, a_marked: f64, b_marked: f64, g: f64 },
    Trapezoid,
}

impl Hazard {
    fn for_model(stepper: &TraitStepper<'_>, policy: &CellPolicy) -> Hazard {
        let law = stepper.law();
        let g = match (law.is_deterministic(), law.drift.as_linear()) {
            (true, Some(g)) => g,
            _ => return Hazard::Trapezoid,
        };
        let (a, b, bm) = match &policy.rates {
            Rates::Constant { r, q } => (0.0, r + q, *r),
            Rates::LinearDivision { alpha, beta, q } => (*alpha, beta + q, *beta),
            Rates::General { division, death } => {
                match (division.as_linear(), division.as_constant(), death.as_constant()) {
                    (Some(a), _, Some(q)) => (a, q, 0.0),
                    (_, Some(r), Some(q)) => (0.0, r + q, r),
                    _ => return Hazard::Trapezoid,
                }
            }
        };
        Hazard::Exact {
            a,
            b,
            a_marked: a,
            b_marked: bm,
            g,
        }
    }
}

fn exact_cumulative(a: f64, b: f64, g: f64, x0: f64, s: f64) -> f64 {
    let grow = if g == 0.0 { s } else { (g * s).exp_m1() / g };
    a * x0 * grow + b * s
}

/// Smallest s in [0, h] with H(s) = e, for an increasing H with H(h) > e.
fn invert_increasing<F: Fn(f64) -> f64>(h_fn: F, e: f64, h: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, h);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h_fn(mid) < e {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// State of one population run.
#[derive(Debug, Clone)]
pub struct PopulationState<'a> {
    pub time: f64,
    pub cells: Vec<Cell>,
    pub dead: Vec<Cell>,
    /// Set when the population cap was exceeded; the run stops there.
    pub truncated: bool,
    stepper: TraitStepper<'a>,
    policy: &'a CellPolicy,
    hazard: Hazard,
    death_marking: bool,
    max_cells: usize,
}

impl<'a> PopulationState<'a> {
    pub fn new(spec: &'a ModelSpec, death_marking: bool, max_cells: usize) -> Result<Self> {
        spec.validate()?;
        let stepper = TraitStepper::new(&spec.parasite, spec.explosion_cap)?;
        let hazard = Hazard::for_model(&stepper, &spec.policy);
        Ok(PopulationState {
            time: 0.0,
            cells: vec![Cell::ancestor(spec.initial_trait)],
            dead: Vec::new(),
            truncated: false,
            stepper,
            policy: &spec.policy,
            hazard,
            death_marking,
            max_cells,
        })
    }

    fn rates(&self, x: f64, marked: bool) -> (f64, f64) {
        let r = self.policy.division_rate(x).max(0.0);
        let q = if marked { 0.0 } else { self.policy.death_rate(x).max(0.0) };
        (r, q)
    }

    /// N_t
    pub fn alive(&self) -> usize {
        self.cells.iter().filter(|c| !c.marked).count()
    }

    /// 𝔠_t
    pub fn counted(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| !c.marked && c.status == CellStatus::Alive)
            .count()
    }

    /// Advances every cell by `dt`.
    pub fn step<R: Rng + ?Sized>(&mut self, dt: f64, rng: &mut R) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(crate::error::Error::InvalidTimeStep(dt));
        }
        if self.truncated {
            return Ok(());
        }
        let t0 = self.time;
        let mut next = Vec::with_capacity(self.cells.len() + self.cells.len() / 4 + 1);
        let mut stack: Vec<(Cell, f64)> = Vec::new();
        for cell in std::mem::take(&mut self.cells) {
            stack.push((cell, dt));
            while let Some((cell, rem)) = stack.pop() {
                if next.len() + stack.len() > self.max_cells {
                    self.truncated = true;
                }
                if self.truncated {
                    next.push(cell);
                    continue;
                }
                self.advance_cell(cell, rem, t0 + dt, &mut next, &mut stack, rng)?;
            }
        }
        self.cells = next;
        self.time = t0 + dt;
        if self.cells.len() > self.max_cells {
            self.truncated = true;
        }
        Ok(())
    }

    fn advance_cell<R: Rng + ?Sized>(
        &mut self,
        mut cell: Cell,
        rem: f64,
        t_end: f64,
        next: &mut Vec<Cell>,
        stack: &mut Vec<(Cell, f64)>,
        rng: &mut R,
    ) -> Result<()> {
        if cell.status != CellStatus::Alive || rem <= 0.0 {
            next.push(cell);
            return Ok(());
        }
        let x0 = cell.trait_value;
        let (r0, q0) = self.rates(x0, cell.marked);
        let l0 = r0 + q0;
        let e: f64 = Exp1.sample(rng);

        let (h, x1, exploded, tau) = match self.hazard {
            Hazard::Exact {
                a,
                b,
                a_marked,
                b_marked,
                g,
            } => {
                let (a, b) = if cell.marked { (a_marked, b_marked) } else { (a, b) };
                let total = exact_cumulative(a, b, g, x0, rem);
                let tau = if e < total {
                    Some(invert_increasing(|s| exact_cumulative(a, b, g, x0, s), e, rem))
                } else {
                    None
                };
                let end = tau.unwrap_or(rem);
                let s = self.stepper.step(x0, end, rng)?;
                (end, s.value, s.status == PathStatus::Exploded, tau)
            }
            Hazard::Trapezoid => {
                if !l0.is_finite() {
                    (0.0, x0, false, Some(0.0))
                } else {
                    let h = if l0 > 0.0 { rem.min(MAX_STEP_HAZARD / l0) } else { rem };
                    let s = self.stepper.step(x0, h, rng)?;
                    if s.status == PathStatus::Exploded {
                        (h, s.value, true, None)
                    } else {
                        let (r1, q1) = self.rates(s.value, cell.marked);
                        let l1 = (r1 + q1).min(f64::MAX);
                        let total = 0.5 * h * (l0 + l1);
                        if e < total {
                            let k = (l1 - l0) / (2.0 * h);
                            let tau = if k.abs() < 1e-300 {
                                e / l0
                            } else {
                                2.0 * e / (l0 + (l0 * l0 + 4.0 * k * e).max(0.0).sqrt())
                            };
                            let tau = tau.clamp(0.0, h);
                            let (x_tau, ex) = if tau > 0.0 {
                                let st = self.stepper.step(x0, tau, rng)?;
                                (st.value, st.status == PathStatus::Exploded)
                            } else {
                                (x0, false)
                            };
                            (tau, x_tau, ex, Some(tau))
                        } else {
                            (h, s.value, false, None)
                        }
                    }
                }
            }
        };

        if exploded {
            cell.status = CellStatus::Exploded;
            cell.trait_value = f64::INFINITY;
            next.push(cell);
            return Ok(());
        }
        cell.trait_value = x1;
        let remaining = rem - h;
        let Some(_) = tau else {
            if remaining > 1e-12 * rem {
                stack.push((cell, remaining));
            } else {
                next.push(cell);
            }
            return Ok(());
        };
        let (r, q) = self.rates(x1, cell.marked);
        let event_time = t_end - remaining;
        let divide = if q == 0.0 || r.is_infinite() {
            true
        } else {
            rng.random::<f64>() * (r + q) < r
        };
        if divide {
            let theta = self.policy.kernel.sample(rng);
            let first = theta * x1;
            let second = x1 - first;
            for (bit, value) in [(0u8, first), (1u8, second)] {
                let child = Cell {
                    label: cell.label.child(bit),
                    trait_value: value,
                    status: CellStatus::Alive,
                    birth_time: event_time,
                    marked: cell.marked,
                };
                stack.push((child, remaining));
            }
        } else if self.death_marking {
            cell.marked = true;
            stack.push((cell, remaining));
        } else {
            cell.status = CellStatus::Dead;
            self.dead.push(cell);
        }
        Ok(())
    }

    pub fn snapshot(&self, thresholds: &[f64], caps: &[f64]) -> PopulationSnapshotStats {
        let mut traits: Vec<f64> = Vec::new();
        let mut alive = 0;
        let mut exploded = 0;
        for c in &self.cells {
            if c.marked {
                continue;
            }
            alive += 1;
            match c.status {
                CellStatus::Alive => traits.push(c.trait_value),
                CellStatus::Exploded => exploded += 1,
                CellStatus::Dead => {}
            }
        }
        let above = thresholds
            .iter()
            .map(|k| traits.iter().filter(|x| **x > *k).count())
            .collect();
        let capped_sums = caps
            .iter()
            .map(|m| traits.iter().map(|x| x.min(*m)).sum())
            .collect();
        let positive = traits.iter().filter(|x| **x > 0.0).count();
        let (quantile_50, quantile_90) = quantiles(&mut traits);
        PopulationSnapshotStats {
            t: self.time,
            alive,
            counted: traits.len(),
            exploded,
            above,
            positive,
            capped_sums,
            quantile_50,
            quantile_90,
            unmarked_and_marked: self.cells.len(),
        }
    }
}

/// Nearest-rank median and 90th percentile; NaN for an empty set.
fn quantiles(values: &mut [f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    values.sort_unstable_by(f64::total_cmp);
    let pick = |p: f64| {
        let rank = (p * values.len() as f64).ceil() as usize;
        values[rank.clamp(1, values.len()) - 1]
    };
    (pick(0.5), pick(0.9))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationRun {
    pub snapshots: Vec<PopulationSnapshotStats>,
    /// Population cap exceeded; later snapshots are missing.
    pub truncated: bool,
    /// No unmarked cell alive at the end of the run.
    pub extinct: bool,
    /// Run stopped because the survival threshold was reached.
    pub reached_threshold: bool,
    pub final_time: f64,
}

/// Runs one population to the model horizon, observing at `config.grid`.
pub fn run_population<R: Rng + ?Sized>(spec: &ModelSpec, config: &PopulationConfig, rng: &mut R) -> Result<PopulationRun> {
    let mut grid = config.grid.clone();
    grid.sort_by(f64::total_cmp);
    if grid.iter().any(|t| !(*t >= 0.0 && *t <= spec.horizon)) {
        return Err(invalid("grid", "observation times must lie in [0, horizon]"));
    }
    let mut state = PopulationState::new(spec, config.death_marking, config.max_cells)?;
    let mut snapshots = Vec::with_capacity(grid.len());
    let mut reached_threshold = false;
    let mut t = 0.0;
    let mut targets = grid.clone();
    if targets.last().is_none_or(|last| *last < spec.horizon) {
        targets.push(spec.horizon);
    }
    let mut gi = 0;
    'outer: for target in targets {
        for h in step_sizes(target - t, spec.time_step)? {
            if let Some(n) = config.survival_threshold {
                if state.alive() >= n {
                    reached_threshold = true;
                    break 'outer;
                }
            }
            if state.cells.is_empty() || state.truncated {
                break;
            }
            state.step(h, rng)?;
        }
        if state.truncated {
            break;
        }
        t = target;
        state.time = target;
        while gi < grid.len() && grid[gi] <= target {
            snapshots.push(state.snapshot(&config.thresholds, &config.caps));
            gi += 1;
        }
    }
    Ok(PopulationRun {
        extinct: state.alive() == 0,
        truncated: state.truncated,
        reached_threshold,
        final_time: state.time,
        snapshots,
    })
}

pub const SNAPSHOT_CSV_HEADER: &str = "run_id,t,N,C,frac_gt_K,frac_positive,qtile_50,qtile_90";

/// Snapshot rows; `frac_gt_K` uses the first configured threshold.
pub fn write_snapshots_csv<W: Write>(mut out: W, runs: &[(usize, &[PopulationSnapshotStats])]) -> io::Result<()> {
    writeln!(out, "{SNAPSHOT_CSV_HEADER}")?;
    for (id, snaps) in runs {
        for s in snaps.iter() {
            let frac_k = if s.above.is_empty() { f64::NAN } else { s.fraction_above(0) };
            writeln!(
                out,
                "{id},{},{},{},{},{},{},{}",
                s.t,
                s.alive,
                s.counted,
                frac_k,
                s.fraction_positive(),
                s.quantile_50,
                s.quantile_90
            )?;
        }
    }
    Ok(())
}
