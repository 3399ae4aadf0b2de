//! End-to-end acceptance criteria. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use nlbreak_cli::commands::{compare_with_solve, mc_config};
use nlbreak_cli::{cmd_mc, cmd_solve, cmd_sweep, parse_config, Mode, RunConfig};
use nlbreak_core::diagnostics::{
    convexity_decay, envelope_check, envelope_constant, m0_law, mass_conservation, moment, riccati_blowup_time,
    tail_checks, weighted_moment, weighted_moment_bounds,
};
use nlbreak_core::particle::ensemble_stats;
use nlbreak_core::sectional::{assemble_operators, solve_partial, uniform_checkpoints};
use nlbreak_core::weight::{closed_form_theta, dissipation_ratio, estimate_theta_search, log_grid};
use nlbreak_core::*;

const MASS_TOL: f64 = 1e-10;
const M0_LAW_REL_TOL: f64 = 0.01;
const MIN_ORDER: f64 = 1.0;
const THETA_TOL: f64 = 1e-6;
const THETA_SPREAD_TOL: f64 = 1e-10;
const LMC_TOL: f64 = 1e-8;
const CONVEXITY_TOL: f64 = 1e-12;
const ENVELOPE_HORIZON: f64 = 0.8;

struct Outcome {
    passed: bool,
    detail: String,
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn reference() -> RunConfig {
    parse_config("", Mode::Solve).expect("empty config is the reference scenario")
}

fn with_ell(ell: f64) -> RunConfig {
    parse_config(&format!("[kernel]\nell = {ell}\n"), Mode::Solve).unwrap()
}

fn run(cfg: &RunConfig) -> Trajectory {
    let grid = Grid::build(cfg.grid.x_min, cfg.grid.n, cfg.grid.cells).unwrap();
    let traj = solve_partial(&cfg.initial, &cfg.kernel, &cfg.daughter, &grid, &cfg.solver).unwrap();
    assert!(traj.completed(), "run halted: {:?}", traj.termination);
    traj
}

fn weight_for(cfg: &RunConfig) -> WeightSpec {
    WeightSpec::admissible(cfg.weight, &cfg.daughter, cfg.grid.n).unwrap()
}

fn mass_conservation_criterion() -> Outcome {
    let cfg = reference();
    let start = Instant::now();
    let traj = run(&cfg);
    let secs = start.elapsed().as_secs_f64();
    let c = mass_conservation(&traj, MASS_TOL);
    outcome(
        c.passed && secs <= 60.0 && traj.checkpoints.len() == 101,
        format!("max relative drift {:e} over {} checkpoints, {secs:.3} s", c.observed, traj.checkpoints.len()),
    )
}

fn m0_law_criterion() -> Outcome {
    let cfg = reference();
    let traj = run(&cfg);
    let law = m0_law(&traj, &cfg.kernel, &cfg.daughter, 0.1, M0_LAW_REL_TOL).unwrap();
    let final_m0 = |cells: usize| {
        let mut c = cfg.clone();
        c.grid.cells = cells;
        let t = run(&c);
        moment(t.last(), &t.grid, 0.0)
    };
    let (m60, m120, m240) = (final_m0(60), final_m0(120), final_m0(240));
    let (e60, e120) = ((m60 - m240).abs(), (m120 - m240).abs());
    let order = (e60 / e120).log2();
    outcome(
        law.passed && e120 < e60 && order >= MIN_ORDER,
        format!(
            "worst relative law error {:e}; M0(1) at 60/120/240 cells = {m60:.9}/{m120:.9}/{m240:.9}, observed order {order:.2}",
            law.observed
        ),
    )
}

fn oracle_equivalence_criterion() -> Outcome {
    let cfg = reference();
    let traj = run(&cfg);
    let pde: Vec<(f64, f64)> = traj.checkpoints.iter().map(|s| (s.t, moment(s, &traj.grid, 0.0))).collect();
    let mc = mc_config(&cfg);
    let start = Instant::now();
    let stats = ensemble_stats(&cfg.initial, &cfg.kernel, &cfg.daughter, &mc).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let Some(cmp) = compare_with_solve(&stats, &pde, mc.t_end, "reference") else {
        return outcome(false, "no comparable checkpoints".into());
    };
    let worst_z = cmp.rows.iter().map(|r| r.z).fold(0.0_f64, f64::max);
    let m1_exact = stats.m1_stderr.iter().all(|s| *s == Some(0.0));
    outcome(
        cmp.passed
            && cmp.unmatched_times.is_empty()
            && cmp.rows.len() == mc.checkpoint_times.len()
            && m1_exact
            && stats.aborted_replicas == 0
            && mc.particle_count == 10_000
            && mc.replicas == 25
            && secs <= 300.0,
        format!(
            "N={} R={} worst |z| {worst_z:.3} over {} checkpoints, M1 stderr exactly 0: {m1_exact}, {secs:.2} s",
            mc.particle_count,
            mc.replicas,
            cmp.rows.len()
        ),
    )
}

fn dissipativity_criterion() -> Outcome {
    let (mut worst_gap, mut worst_spread) = (0.0_f64, 0.0_f64);
    for alpha in [1.5, 2.0, 3.0] {
        for nu in [0.0, -0.25, -0.5] {
            let b = DaughterSpec::power_law(nu).unwrap();
            let family = WeightFamily::Power { alpha };
            let est = estimate_theta_search(&family, &b, 10.0).unwrap();
            let exact = closed_form_theta(alpha, &b).unwrap();
            worst_gap = worst_gap.max((est.theta_hat - exact).abs());
            let ratios: Vec<f64> = log_grid(1e-3, 1e3, 25)
                .into_iter()
                .map(|y| dissipation_ratio(&family, &b, y, 1.0).unwrap())
                .collect();
            let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
            worst_spread = worst_spread.max(hi - lo);
        }
    }
    outcome(
        worst_gap <= THETA_TOL && worst_spread <= THETA_SPREAD_TOL,
        format!("worst |theta_hat - theta| {worst_gap:e}, worst spread in y {worst_spread:e}"),
    )
}

fn weighted_bounds_criterion() -> Outcome {
    let cfg = reference();
    let traj = run(&cfg);
    let grid = Grid::build(cfg.grid.x_min, cfg.grid.n, cfg.grid.cells).unwrap();
    let ops = assemble_operators(&cfg.kernel, &cfg.daughter, &grid).unwrap();
    let weight = weight_for(&cfg);
    let report = weighted_moment_bounds(&traj, &ops, &weight);
    let c0 = weighted_moment(traj.initial(), &grid, &weight);
    let detail = report
        .checks
        .iter()
        .map(|c| format!("{} {:.6} <= {:.6}", c.name, c.observed, c.bound))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(
        report.passed() && report.checks.len() == 2,
        format!("C0 = {c0:.6}, theta = {:.6}; {detail}", weight.theta),
    )
}

fn envelope_criterion() -> Outcome {
    let case2 = reference();
    let t2 = run(&case2);
    let gronwall = envelope_check(&t2, &case2.kernel, &case2.daughter, &weight_for(&case2), 1.0);

    let mut case1 = with_ell(0.25);
    let weight = weight_for(&case1);
    let grid = Grid::build(case1.grid.x_min, case1.grid.n, case1.grid.cells).unwrap();
    let init = project_state(&case1, &grid);
    let blowup = riccati_blowup_time(
        moment(&init, &grid, 0.0),
        weighted_moment(&init, &grid, &weight),
        weight.theta,
        weight.family.eval(1.0),
        envelope_constant(&case1.kernel, &case1.daughter),
    );
    let horizon = ENVELOPE_HORIZON * blowup;
    case1.solver.t_end = horizon;
    case1.solver.checkpoint_times = uniform_checkpoints(horizon, 200);
    let t1 = run(&case1);
    let riccati = envelope_check(&t1, &case1.kernel, &case1.daughter, &weight, ENVELOPE_HORIZON);
    outcome(
        gronwall.name == "gronwall_envelope"
            && gronwall.passed
            && riccati.name == "riccati_envelope"
            && riccati.passed
            && t1.checkpoints.len() == 201,
        format!(
            "ell=1 Gronwall worst M0 {:.6} vs {:.6}; ell=0.25 Riccati blow-up {blowup:.6}, checked to t={horizon:.6} on {} checkpoints, tightest M0 {:.6} vs {:.6}",
            gronwall.observed,
            gronwall.bound,
            t1.checkpoints.len(),
            riccati.observed,
            riccati.bound
        ),
    )
}

fn project_state(cfg: &RunConfig, grid: &Grid) -> StateVector {
    nlbreak_core::sectional::project_initial(&cfg.initial, grid).unwrap().0
}

fn tail_criterion() -> Outcome {
    let cfg = reference();
    let traj = run(&cfg);
    let report = tail_checks(&traj, &cfg.kernel, &weight_for(&cfg), 2.0).unwrap();
    let detail = report
        .checks
        .iter()
        .map(|c| format!("{} {:.6} <= {:.6}", c.name, c.observed, c.bound))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(report.passed() && report.checks.len() == 2, detail)
}

fn daughter_criterion() -> Outcome {
    let ys = log_grid(1e-3, 10.0, 20);
    let families = [
        DaughterFamily::PowerLaw { nu: -0.5 },
        DaughterFamily::UniformBinary,
        DaughterFamily::KllUnitEnds,
        DaughterFamily::KllShrinkingEnds,
    ];
    let mut passed = true;
    let mut worst_lmc = 0.0_f64;
    for family in families {
        let b = DaughterSpec::new(family).unwrap().with_size_bound(10.0).unwrap();
        let lmc = b.check_lmc(&ys, &ys, LMC_TOL).unwrap();
        worst_lmc = worst_lmc.max(lmc.worst_rel_error);
        passed &= lmc.passed && lmc.worst_rel_error <= LMC_TOL;
        passed &= b.check_nop(&ys, &ys).passed;
        passed &= b.check_p_condition(1.5, &ys, &ys).unwrap().passed();
    }
    outcome(
        passed,
        format!("4 families on a 20x20 grid, worst mass-conservation error {worst_lmc:e}"),
    )
}

fn convexity_criterion() -> Outcome {
    let mut configs: Vec<(String, RunConfig)> = vec![("reference".into(), reference())];
    configs.push(("ell=0.25".into(), with_ell(0.25)));
    configs.push(("ell=0.5".into(), with_ell(0.5)));
    for cells in [60, 240] {
        let mut c = reference();
        c.grid.cells = cells;
        configs.push((format!("{cells} cells"), c));
    }
    for daughter in [
        "family = \"power_law\"\nnu = -0.5",
        "family = \"kll_unit_ends\"",
        "family = \"kll_shrinking_ends\"",
    ] {
        let text = format!("[daughter]\n{daughter}\n");
        configs.push((daughter.replace('\n', " "), parse_config(&text, Mode::Solve).unwrap()));
    }
    let mut worst = f64::NEG_INFINITY;
    let mut failing = Vec::new();
    for (label, cfg) in &configs {
        let c = convexity_decay(&run(cfg), CONVEXITY_TOL);
        worst = worst.max(c.observed);
        if !c.passed {
            failing.push(label.clone());
        }
    }
    outcome(
        failing.is_empty(),
        format!(
            "{} runs, largest M2 rise between checkpoints {worst:e}{}",
            configs.len(),
            if failing.is_empty() {
                String::new()
            } else {
                format!(", failing: {}", failing.join(", "))
            }
        ),
    )
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn reproducibility_criterion() -> Outcome {
    let mut cfg = reference();
    cfg.seed = 11;
    cfg.mc.particles = 2_000;
    cfg.mc.replicas = 4;
    let mut sweep = cfg.clone();
    sweep.ell_values = vec![0.25, 1.0];
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        cmd_solve(&cfg, d.path()).unwrap();
        cmd_mc(&cfg, d.path()).unwrap();
        cmd_sweep(&sweep, d.path()).unwrap();
    }
    let files = ["trajectory.csv", "moments.csv", "mc_stats.csv", "sweep_summary.csv"];
    let mismatched: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| read(dirs[0].path(), f) != read(dirs[1].path(), f))
        .collect();
    let manifests_equal = read(dirs[0].path(), "manifest.json") == read(dirs[1].path(), "manifest.json");
    outcome(
        mismatched.is_empty() && manifests_equal,
        format!(
            "{} CSV files compared across two runs, mismatched: {:?}, manifests identical: {manifests_equal}",
            files.len(),
            mismatched
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "discrete mass conservation", mass_conservation_criterion),
        (2, "zeroth-moment law and refinement", m0_law_criterion),
        (3, "particle oracle agreement", oracle_equivalence_criterion),
        (4, "dissipativity constant", dissipativity_criterion),
        (5, "weighted moment bounds", weighted_bounds_criterion),
        (6, "regime envelopes", envelope_criterion),
        (7, "tail inequalities", tail_criterion),
        (8, "daughter validators", daughter_criterion),
        (9, "second moment decay", convexity_criterion),
        (10, "reproducibility", reproducibility_criterion),
    ];
    let mut failed = 0;
    for (id, label, check) in criteria {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.passed {
            failed += 1;
        }
        println!(
            "{} criterion {id} ({label}): {}",
            if result.passed { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
