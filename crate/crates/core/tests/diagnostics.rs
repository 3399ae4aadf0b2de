use nlbreak_core::diagnostics::*;
use nlbreak_core::sectional::{assemble_operators, SolverConfig as Cfg};
use nlbreak_core::*;

struct Run {
    traj: Trajectory,
    ops: OperatorSet,
    kernel: KernelSpec,
    daughter: DaughterSpec,
    weight: WeightSpec,
}

fn run(cells: usize, ell: f64, f: InitialDensity, cfg: Cfg) -> Run {
    let kernel = KernelSpec::new(KernelFamily::PowerLaw, 1.0, ell, Some(10.0)).unwrap();
    let daughter = DaughterSpec::uniform_binary();
    let grid = Grid::build(1e-3, 10.0, cells).unwrap();
    let traj = solve(&f, &kernel, &daughter, &grid, &cfg).unwrap();
    Run {
        ops: assemble_operators(&kernel, &daughter, &grid).unwrap(),
        weight: WeightSpec::admissible(WeightFamily::Power { alpha: 2.0 }, &daughter, 10.0).unwrap(),
        traj,
        kernel,
        daughter,
    }
}

fn reference(cells: usize) -> Run {
    run(cells, 1.0, InitialDensity::exponential(), Cfg::new(1.0))
}

#[test]
fn weak_form_residuals() {
    let coarse = reference(60);
    let fine = reference(120);
    let r = |run: &Run, psi: TestFunction| weak_form_residual(&run.traj, &run.ops, &run.daughter, &psi);
    assert!(r(&coarse, TestFunction::Identity) <= 1e-10);
    assert!(r(&coarse, TestFunction::Constant { value: 1.0 }) <= 0.01);
    let ind = TestFunction::Indicator { lo: 0.0, hi: 1.0 };
    let (rc, rf) = (r(&coarse, ind), r(&fine, ind));
    assert!(rc <= 0.02, "{rc}");
    assert!(rf <= 0.5 * rc, "{rc} -> {rf}");
}

#[test]
fn bounds_hold_on_the_reference_run() {
    let run = reference(120);
    let report = weighted_moment_bounds(&run.traj, &run.ops, &run.weight);
    assert!(report.passed(), "{report:?}");
    let tails = tail_checks(&run.traj, &run.kernel, &run.weight, 2.0).unwrap();
    assert!(tails.passed(), "{tails:?}");
    let env = envelope_check(&run.traj, &run.kernel, &run.daughter, &run.weight, 0.8);
    assert_eq!(env.name, "gronwall_envelope");
    assert!(env.passed);
    assert!(convexity_decay(&run.traj, 1e-12).passed);
    assert!(mass_conservation(&run.traj, 1e-10).passed);
}

#[test]
fn riccati_envelope_for_sublinear_kernel() {
    let mut cfg = Cfg::new(0.05);
    cfg.checkpoint_times = sectional::uniform_checkpoints(0.05, 50);
    let run = run(120, 0.25, InitialDensity::exponential(), cfg);
    let env = envelope_check(&run.traj, &run.kernel, &run.daughter, &run.weight, 0.8);
    assert_eq!(env.name, "riccati_envelope");
    assert!(env.passed, "{env:?}");
}

#[test]
fn tail_above_monodisperse_start_stays_empty() {
    let f = InitialDensity::Indicator { lo: 1.0, hi: 1.2, height: 1.0 };
    let run = run(60, 1.0, f, Cfg::new(1.0));
    let tails = tail_checks(&run.traj, &run.kernel, &run.weight, 2.0).unwrap();
    assert!(tails.passed());
    assert_eq!(tails.checks[0].observed, 0.0);
    assert!(tail_checks(&run.traj, &run.kernel, &run.weight, 0.5).is_err());
}

#[test]
fn ui_modulus_fit_and_time_regularity() {
    let run = reference(60);
    let fit = fit_ui_constant(&run.traj, 1.0, 1.5, &[1e-3, 1e-2, 1e-1]);
    assert!(fit.constant.is_finite() && fit.constant >= 0.0);
    let full = uniform_integrability_modulus(run.traj.last(), &run.traj.grid, 1.0, 5.0);
    let below: f64 = run
        .traj
        .last()
        .counts
        .iter()
        .zip(run.traj.grid.edges.windows(2))
        .filter(|(_, e)| e[1] <= 1.0)
        .map(|(u, _)| u)
        .sum();
    assert!(full >= below);
    assert!(lipschitz_quotient(&run.traj).is_finite());
}

#[test]
fn report_round_trips_through_json_fields() {
    let run = reference(40);
    let mut report = DiagnosticsReport::default();
    report.push(mass_conservation(&run.traj, 1e-10));
    report.extend(weighted_moment_bounds(&run.traj, &run.ops, &run.weight));
    assert!(report.get("weighted_dissipation_bound").is_some());
    assert!(report.passed());
}
