//! Adaptive Bogacki–Shampine 3(2) stepping with positivity control.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_positive, Error, Result};

use super::grid::StateVector;
use super::operators::OperatorSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_end: f64,
    pub checkpoint_times: Vec<f64>,
    /// `None` selects `1e-14 · M₀(0)` at solve time.
    pub clip_tol: Option<f64>,
}

impl SolverConfig {
    /// Defaults with checkpoints every `0.01 · t_end`.
    pub fn new(t_end: f64) -> Self {
        SolverConfig {
            dt_init: 1e-3,
            dt_min: 1e-10,
            dt_max: 0.05,
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            t_end,
            checkpoint_times: uniform_checkpoints(t_end, 100),
            clip_tol: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dt_init", self.dt_init),
            ("dt_min", self.dt_min),
            ("dt_max", self.dt_max),
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
        ] {
            require_positive(name, v)?;
        }
        if !(self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return Err(invalid(
                "dt_init",
                format!(
                    "need dt_min <= dt_init <= dt_max, got {} / {} / {}",
                    self.dt_min, self.dt_init, self.dt_max
                ),
            ));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(invalid("t_end", format!("must be finite and >= 0, got {}", self.t_end)));
        }
        if let Some(c) = self.clip_tol {
            if !(c.is_finite() && c >= 0.0) {
                return Err(invalid("clip_tol", format!("must be >= 0, got {c}")));
            }
        }
        if self.checkpoint_times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(invalid("checkpoint_times", "entries must be finite and >= 0"));
        }
        Ok(())
    }
}

/// `count` equally spaced times in `(0, t_end]`.
pub fn uniform_checkpoints(t_end: f64, count: usize) -> Vec<f64> {
    if t_end <= 0.0 || count == 0 {
        return Vec::new();
    }
    (1..=count)
        .map(|k| if k == count { t_end } else { t_end * k as f64 / count as f64 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOutcome {
    Accepted,
    RejectedError,
    RejectedNegative,
}

/// One attempted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub t: f64,
    pub dt: f64,
    pub error_norm: f64,
    pub outcome: StepOutcome,
    pub clipped_mass: f64,
}

/// Work buffers for the Runge–Kutta stages.
#[derive(Debug, Clone)]
pub struct Workspace {
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
    scratch: Vec<f64>,
    pub rhs_evals: u64,
}

impl Workspace {
    pub fn new(cells: usize) -> Self {
        Workspace {
            k: std::array::from_fn(|_| vec![0.0; cells]),
            stage: vec![0.0; cells],
            scratch: vec![0.0; cells],
            rhs_evals: 0,
        }
    }
}

/// Result of [`step`]: the accepted state plus everything that was tried.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub state: StateVector,
    pub dt_used: f64,
    pub dt_next: f64,
    pub events: Vec<StepEvent>,
    pub clipped_mass: f64,
}

// Bogacki–Shampine coefficients
const B: [f64; 3] = [2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0];
const E: [f64; 4] = [-5.0 / 72.0, 1.0 / 12.0, 1.0 / 9.0, -1.0 / 8.0];

/// Takes one accepted step of at most `dt` (and at most `t_limit - t`),
/// halving on rejection. `clip_tol` bounds the negatives that are clipped.
pub fn step(
    state: &StateVector,
    ops: &OperatorSet,
    config: &SolverConfig,
    dt: f64,
    t_limit: f64,
    clip_tol: f64,
    ws: &mut Workspace,
) -> Result<StepReport> {
    let c = ops.cells();
    let u = &state.counts;
    let mut events = Vec::new();
    let remaining = t_limit - state.t;
    let mut h = dt.min(config.dt_max);

    ops.rhs_into(u, &mut ws.k[0], &mut ws.scratch);
    ws.rhs_evals += 1;

    loop {
        let hits_limit = h >= remaining;
        if hits_limit {
            h = remaining;
        }

        for i in 0..c {
            ws.stage[i] = u[i] + 0.5 * h * ws.k[0][i];
        }
        let (k0, rest) = ws.k.split_at_mut(1);
        ops.rhs_into(&ws.stage, &mut rest[0], &mut ws.scratch);
        for i in 0..c {
            ws.stage[i] = u[i] + 0.75 * h * rest[0][i];
        }
        ops.rhs_into(&ws.stage, &mut rest[1], &mut ws.scratch);
        let mut next = vec![0.0; c];
        for i in 0..c {
            next[i] = u[i] + h * (B[0] * k0[0][i] + B[1] * rest[0][i] + B[2] * rest[1][i]);
        }
        ops.rhs_into(&next, &mut rest[2], &mut ws.scratch);
        ws.rhs_evals += 3;

        let mut err: f64 = 0.0;
        let mut most_negative: f64 = 0.0;
        for i in 0..c {
            let e = h * (E[0] * k0[0][i] + E[1] * rest[0][i] + E[2] * rest[1][i] + E[3] * rest[2][i]);
            let scale = config.abs_tol + config.rel_tol * u[i].abs().max(next[i].abs());
            err = err.max(e.abs() / scale);
            most_negative = most_negative.min(next[i]);
        }
        if !err.is_finite() {
            err = f64::INFINITY;
        }

        let outcome = if err > 1.0 {
            StepOutcome::RejectedError
        } else if most_negative < -clip_tol || next.iter().any(|v| !v.is_finite()) {
            StepOutcome::RejectedNegative
        } else {
            StepOutcome::Accepted
        };

        if outcome == StepOutcome::Accepted {
            let mut clipped_mass = 0.0;
            for (v, x) in next.iter_mut().zip(ops.pivots()) {
                if *v < 0.0 {
                    clipped_mass -= *v * x;
                    *v = 0.0;
                }
            }
            events.push(StepEvent {
                t: state.t,
                dt: h,
                error_norm: err,
                outcome,
                clipped_mass,
            });
            let t = if hits_limit { t_limit } else { state.t + h };
            let growth = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-1.0 / 3.0)).clamp(0.2, 5.0)
            };
            // a step shortened to hit a checkpoint should not shrink the next one
            let base = if hits_limit { dt.max(h) } else { h };
            return Ok(StepReport {
                state: StateVector { t, counts: next },
                dt_used: h,
                dt_next: (base * growth).min(config.dt_max),
                events,
                clipped_mass,
            });
        }

        events.push(StepEvent {
            t: state.t,
            dt: h,
            error_norm: err,
            outcome,
            clipped_mass: 0.0,
        });
        h *= 0.5;
        if h < config.dt_min {
            return Err(Error::Stiffness {
                t: state.t,
                dt: h,
                dt_min: config.dt_min,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::daughter::DaughterSpec;
    use crate::kernel::{KernelFamily, KernelSpec};
    use crate::sectional::grid::Grid;
    use crate::sectional::operators::assemble_operators;

    #[test]
    fn zero_state_grows_dt() {
        let grid = Grid::build(1e-3, 10.0, 20).unwrap();
        let k = KernelSpec::new(KernelFamily::PowerLaw, 1.0, 1.0, Some(10.0)).unwrap();
        let ops = assemble_operators(&k, &DaughterSpec::uniform_binary(), &grid).unwrap();
        let cfg = SolverConfig::new(10.0);
        let mut ws = Workspace::new(20);
        let mut s = StateVector::zeros(20);
        let mut dt = cfg.dt_init;
        for _ in 0..10 {
            let r = step(&s, &ops, &cfg, dt, 10.0, 0.0, &mut ws).unwrap();
            assert!(r.state.counts.iter().all(|&u| u == 0.0));
            dt = r.dt_next;
            s = r.state;
        }
        assert_eq!(dt, cfg.dt_max);
    }

    #[test]
    fn config_ordering_is_checked() {
        let mut cfg = SolverConfig::new(1.0);
        cfg.dt_init = 1.0;
        assert!(cfg.validate().is_err());
        assert_eq!(uniform_checkpoints(1.0, 100).len(), 100);
        assert_eq!(*uniform_checkpoints(1.0, 100).last().unwrap(), 1.0);
    }
}
