//! Sectional discretization of the truncated equation and its time integration.

pub mod grid;
pub mod integrator;
pub mod operators;

use serde::{Deserialize, Serialize};

use crate::daughter::DaughterSpec;
use crate::density::InitialDensity;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

pub use grid::{project_initial, Grid, ProjectionReport, StateVector};
pub use integrator::{step, uniform_checkpoints, SolverConfig, StepEvent, StepOutcome, StepReport, Workspace};
pub use operators::{assemble_operators, assemble_operators_with, rhs, Layout, OperatorSet};

/// Clipped mass above this fraction of `M₁(0)` invalidates a run.
pub const CLIPPED_MASS_LIMIT: f64 = 1e-9;

/// Relative clip tolerance used when the config leaves it unset.
pub const DEFAULT_CLIP_FRACTION: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    /// The step size fell below `dt_min` at time `t`.
    Stiffness { t: f64, dt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunStats {
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    pub rhs_evals: u64,
    pub clip_events: u64,
    pub clipped_mass: f64,
    pub clip_tol: f64,
    pub min_dt: f64,
    pub max_dt: f64,
    /// Clipped mass exceeded `CLIPPED_MASS_LIMIT · M₁(0)`.
    pub invalid: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: Grid,
    /// The initial state followed by one state per reached checkpoint.
    pub checkpoints: Vec<StateVector>,
    pub events: Vec<StepEvent>,
    pub stats: RunStats,
    pub projection: ProjectionReport,
    pub termination: Termination,
}

impl Trajectory {
    pub fn completed(&self) -> bool {
        self.termination == Termination::Completed
    }

    pub fn times(&self) -> Vec<f64> {
        self.checkpoints.iter().map(|s| s.t).collect()
    }

    pub fn initial(&self) -> &StateVector {
        &self.checkpoints[0]
    }

    pub fn last(&self) -> &StateVector {
        self.checkpoints.last().expect("trajectory holds the initial state")
    }
}

/// Projects `f_in`, assembles the operators and integrates to `t_end`.
pub fn solve(
    f_in: &InitialDensity,
    kernel: &KernelSpec,
    daughter: &DaughterSpec,
    grid: &Grid,
    config: &SolverConfig,
) -> Result<Trajectory> {
    let traj = solve_partial(f_in, kernel, daughter, grid, config)?;
    match traj.termination {
        Termination::Completed => Ok(traj),
        Termination::Stiffness { t, dt } => Err(Error::Stiffness {
            t,
            dt,
            dt_min: config.dt_min,
        }),
    }
}

/// Like [`solve`] but returns the states reached before a stiffness halt.
pub fn solve_partial(
    f_in: &InitialDensity,
    kernel: &KernelSpec,
    daughter: &DaughterSpec,
    grid: &Grid,
    config: &SolverConfig,
) -> Result<Trajectory> {
    let (initial, projection) = project_initial(f_in, grid)?;
    let ops = assemble_operators(kernel, daughter, grid)?;
    let mut traj = integrate(initial, grid, &ops, config)?;
    traj.projection = projection;
    Ok(traj)
}

/// Integrates from an arbitrary state on the operators' grid.
pub fn integrate(
    initial: StateVector,
    grid: &Grid,
    ops: &OperatorSet,
    config: &SolverConfig,
) -> Result<Trajectory> {
    config.validate()?;
    if initial.counts.len() != ops.cells() || grid.cells() != ops.cells() {
        return Err(Error::Inconsistent(format!(
            "state has {} cells, grid {}, operators {}",
            initial.counts.len(),
            grid.cells(),
            ops.cells()
        )));
    }
    let m0: f64 = initial.counts.iter().sum();
    let m1: f64 = initial.counts.iter().zip(ops.pivots()).map(|(u, x)| u * x).sum();
    let clip_tol = config.clip_tol.unwrap_or(DEFAULT_CLIP_FRACTION * m0);

    let mut targets: Vec<f64> = config
        .checkpoint_times
        .iter()
        .copied()
        .filter(|&t| t > initial.t && t <= config.t_end)
        .collect();
    if config.t_end > initial.t {
        targets.push(config.t_end);
    }
    targets.sort_by(f64::total_cmp);
    targets.dedup();

    let mut stats = RunStats {
        clip_tol,
        min_dt: f64::INFINITY,
        max_dt: 0.0,
        ..RunStats::default()
    };
    let mut ws = Workspace::new(ops.cells());
    let mut events = Vec::new();
    let mut checkpoints = vec![initial.clone()];
    let mut state = initial;
    let mut dt = config.dt_init;
    let mut termination = Termination::Completed;

    'outer: for &target in &targets {
        while state.t < target {
            match step(&state, ops, config, dt, target, clip_tol, &mut ws) {
                Ok(report) => {
                    for e in &report.events {
                        if e.outcome != StepOutcome::Accepted {
                            stats.rejected_steps += 1;
                        }
                    }
                    stats.accepted_steps += 1;
                    if report.clipped_mass > 0.0 {
                        stats.clip_events += 1;
                        stats.clipped_mass += report.clipped_mass;
                    }
                    stats.min_dt = stats.min_dt.min(report.dt_used);
                    stats.max_dt = stats.max_dt.max(report.dt_used);
                    events.extend(report.events);
                    dt = report.dt_next;
                    state = report.state;
                }
                Err(Error::Stiffness { t, dt, .. }) => {
                    termination = Termination::Stiffness { t, dt };
                    break 'outer;
                }
                Err(e) => return Err(e),
            }
        }
        checkpoints.push(state.clone());
    }

    stats.rhs_evals = ws.rhs_evals;
    if stats.accepted_steps == 0 {
        stats.min_dt = 0.0;
    }
    stats.invalid = stats.clipped_mass > CLIPPED_MASS_LIMIT * m1;
    Ok(Trajectory {
        grid: grid.clone(),
        checkpoints,
        events,
        stats,
        projection: ProjectionReport {
            dropped_number_below: 0.0,
            dropped_mass_below: 0.0,
        },
        termination,
    })
}
