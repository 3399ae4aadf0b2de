use nlbreak_core::diagnostics::{moment, support_confinement};
use nlbreak_core::sectional::{
    assemble_operators, integrate, solve_partial, step, uniform_checkpoints, Termination, Workspace,
};
use nlbreak_core::*;

fn reference_kernel(ell: f64) -> KernelSpec {
    KernelSpec::new(KernelFamily::PowerLaw, 1.0, ell, Some(10.0)).unwrap()
}

fn reference_run(cells: usize) -> Trajectory {
    let grid = Grid::build(1e-3, 10.0, cells).unwrap();
    solve(
        &InitialDensity::exponential(),
        &reference_kernel(1.0),
        &DaughterSpec::uniform_binary(),
        &grid,
        &SolverConfig::new(1.0),
    )
    .unwrap()
}

#[test]
fn zero_horizon_returns_initial_state() {
    let grid = Grid::build(1e-3, 10.0, 30).unwrap();
    let tr = solve(
        &InitialDensity::exponential(),
        &reference_kernel(1.0),
        &DaughterSpec::uniform_binary(),
        &grid,
        &SolverConfig::new(0.0),
    )
    .unwrap();
    assert_eq!(tr.checkpoints.len(), 1);
    assert_eq!(tr.checkpoints[0].t, 0.0);
}

#[test]
fn reference_run_conserves_mass_and_follows_number_law() {
    let tr = reference_run(120);
    let g = &tr.grid;
    let m1 = moment(tr.initial(), g, 1.0);
    let m0 = moment(tr.initial(), g, 0.0);
    assert!(tr.completed() && !tr.stats.invalid);
    for s in &tr.checkpoints {
        assert!((moment(s, g, 1.0) / m1 - 1.0).abs() <= 1e-10);
        assert!(s.counts.iter().all(|&u| u >= -tr.stats.clip_tol));
        if s.t >= 0.1 {
            let predicted = m0 + m1 * m1 * s.t;
            let growth = m1 * m1 * s.t;
            assert!((moment(s, g, 0.0) - predicted).abs() <= 0.01 * growth, "t = {}", s.t);
        }
    }
}

#[test]
fn grid_refinement_self_converges() {
    let at_one = |cells| moment(reference_run(cells).last(), &Grid::build(1e-3, 10.0, cells).unwrap(), 0.0);
    let (m60, m120, m240) = (at_one(60), at_one(120), at_one(240));
    let order = ((m60 - m240).abs() / (m120 - m240).abs()).log2();
    assert!(order >= 1.0, "observed order {order}");
}

#[test]
fn second_moment_never_grows_and_support_is_confined() {
    let grid = Grid::build(1e-3, 10.0, 60).unwrap();
    let f = InitialDensity::Indicator { lo: 1.0, hi: 2.0, height: 1.0 };
    for b in [
        DaughterSpec::uniform_binary(),
        DaughterSpec::power_law(-0.5).unwrap(),
        DaughterSpec::new(DaughterFamily::KllUnitEnds).unwrap(),
    ] {
        let tr = solve(&f, &reference_kernel(0.7), &b, &grid, &SolverConfig::new(1.0)).unwrap();
        for w in tr.checkpoints.windows(2) {
            assert!(moment(&w[1], &grid, 2.0) <= moment(&w[0], &grid, 2.0) + 1e-12);
        }
        assert!(support_confinement(&tr).passed);
    }
}

#[test]
fn fragment_counts_respect_the_bound() {
    let grid = Grid::build(1e-3, 10.0, 80).unwrap();
    for b in [
        DaughterSpec::uniform_binary(),
        DaughterSpec::power_law(-0.7).unwrap(),
        DaughterSpec::new(DaughterFamily::KllShrinkingEnds).unwrap(),
    ] {
        let ops = assemble_operators(&reference_kernel(1.0), &b, &grid).unwrap();
        for j in 0..grid.cells() {
            let count = ops.column_count(j, 0);
            assert!(count >= 0.0 && count <= b.beta0 * (1.0 + 1e-6), "{j}: {count}");
            assert!((ops.column_mass(j, 0) / grid.pivots[j] - 1.0).abs() < 1e-14);
        }
    }
}

#[test]
fn each_step_keeps_mass() {
    let grid = Grid::build(1e-3, 10.0, 60).unwrap();
    let ops = assemble_operators(&reference_kernel(1.0), &DaughterSpec::uniform_binary(), &grid).unwrap();
    let (mut state, _) = sectional::project_initial(&InitialDensity::exponential(), &grid).unwrap();
    let cfg = SolverConfig::new(1.0);
    let mut ws = Workspace::new(grid.cells());
    let mut dt = cfg.dt_init;
    for _ in 0..50 {
        let before = moment(&state, &grid, 1.0);
        let r = step(&state, &ops, &cfg, dt, 1.0, 0.0, &mut ws).unwrap();
        assert!((moment(&r.state, &grid, 1.0) / before - 1.0).abs() <= 1e-13);
        dt = r.dt_next;
        state = r.state;
    }
}

#[test]
fn dense_small_particle_state_trips_the_stiffness_guard() {
    let grid = Grid::build(1e-3, 10.0, 60).unwrap();
    let f = InitialDensity::Indicator { lo: 1e-3, hi: 1e-2, height: 1e9 };
    let mut cfg = SolverConfig::new(1.0);
    cfg.dt_min = 1e-7;
    cfg.dt_init = 1e-4;
    let tr = solve_partial(&f, &reference_kernel(0.25), &DaughterSpec::uniform_binary(), &grid, &cfg).unwrap();
    assert!(matches!(tr.termination, Termination::Stiffness { .. }), "{:?}", tr.termination);
    for s in &tr.checkpoints {
        assert!(s.counts.iter().all(|u| u.is_finite() && *u >= -tr.stats.clip_tol));
    }
    let err = solve(&f, &reference_kernel(0.25), &DaughterSpec::uniform_binary(), &grid, &cfg).unwrap_err();
    assert!(matches!(err, Error::Stiffness { .. }));
}

#[test]
fn rerun_is_bitwise_identical() {
    let a = reference_run(60);
    let b = reference_run(60);
    assert_eq!(a.checkpoints, b.checkpoints);
}

#[test]
fn integrate_rejects_mismatched_state() {
    let grid = Grid::build(1e-3, 10.0, 20).unwrap();
    let ops = assemble_operators(&reference_kernel(1.0), &DaughterSpec::uniform_binary(), &grid).unwrap();
    let mut cfg = SolverConfig::new(1.0);
    cfg.checkpoint_times = uniform_checkpoints(1.0, 4);
    assert!(integrate(StateVector::zeros(5), &grid, &ops, &cfg).is_err());
    let tr = integrate(StateVector::zeros(20), &grid, &ops, &cfg).unwrap();
    assert_eq!(tr.checkpoints.len(), 5);
}
