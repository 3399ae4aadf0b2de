use nlbreak_core::weight::{closed_form_theta, dissipation_ratio, estimate_theta_search, log_grid};
use nlbreak_core::{DaughterFamily, DaughterSpec, KernelFamily, KernelSpec, WeightFamily};
use proptest::prelude::*;

fn families() -> Vec<KernelFamily> {
    vec![
        KernelFamily::PowerLaw,
        KernelFamily::PowerLawShifted { beta: 0.5 },
        KernelFamily::PowerLawExp { gamma: 0.3 },
        KernelFamily::PowerLawLog { gamma: 0.7 },
        KernelFamily::StretchedExp { gamma: 0.2, nu: 0.5 },
        KernelFamily::RationalDamped { mu: 0.1 },
        KernelFamily::SaturatingExp,
        KernelFamily::PiecewiseSplit { p: 1.5 },
    ]
}

proptest! {
    #[test]
    fn kernels_are_symmetric(idx in 0usize..8, x in 1e-4f64..50.0, y in 1e-4f64..50.0) {
        let k = KernelSpec::new(families()[idx], 1.3, 0.8, None).unwrap();
        prop_assert_eq!(k.eval_kernel(x, y).unwrap(), k.eval_kernel(y, x).unwrap());
    }

    #[test]
    fn product_kernels_factorize(idx in 0usize..7, x in 1e-4f64..50.0, y in 1e-4f64..50.0) {
        let k = KernelSpec::new(families()[idx], 1.3, 0.8, None).unwrap();
        let direct = k.eval_kernel(x, y).unwrap();
        let product = k.a0 * k.eval_omega(x).unwrap() * k.eval_omega(y).unwrap();
        prop_assert!((direct - product).abs() <= 1e-14 * direct.abs());
    }

    #[test]
    fn truncation_zeroes_large_sizes(idx in 0usize..8, x in 1e-4f64..5.0, y in 5.0f64..50.0) {
        let k = KernelSpec::new(families()[idx], 1.0, 0.8, Some(5.0)).unwrap();
        prop_assert_eq!(k.eval_kernel(x, y).unwrap(), 0.0);
        prop_assert_eq!(k.eval_kernel(y, x).unwrap(), 0.0);
    }

    #[test]
    fn growth_constant_dominates_small_sizes(idx in 0usize..8, x in 1e-8f64..1.0) {
        let k = KernelSpec::new(families()[idx], 1.0, 0.6, None).unwrap();
        prop_assert!(k.eval_omega(x).unwrap() <= k.a1 * x.powf(k.ell) * (1.0 + 1e-12));
    }

    #[test]
    fn dissipation_ratio_is_size_independent_for_power_laws(
        alpha in 1.1f64..4.0, nu in -0.9f64..0.0, y in 1e-3f64..100.0
    ) {
        let b = DaughterSpec::power_law(nu).unwrap();
        let r = dissipation_ratio(&WeightFamily::Power { alpha }, &b, y, 1.0).unwrap();
        let exact = (alpha - 1.0) / (nu + alpha + 1.0);
        prop_assert!((r - exact).abs() < 1e-10, "{} vs {}", r, exact);
    }
}

#[test]
fn split_kernel_vanishes_on_mixed_pairs() {
    let k = KernelSpec::new(KernelFamily::PiecewiseSplit { p: 2.0 }, 1.0, 0.5, None).unwrap();
    assert_eq!(k.eval_kernel(0.5, 2.0).unwrap(), 0.0);
    assert_eq!(k.eval_kernel(2.0, 3.0).unwrap(), 4.0 * 9.0);
    assert_eq!(k.eval_kernel(0.25, 0.25).unwrap(), 0.25);
}

#[test]
fn theta_closed_form_grid() {
    for alpha in [1.5, 2.0, 3.0] {
        for nu in [0.0, -0.25, -0.5] {
            let b = DaughterSpec::power_law(nu).unwrap();
            let family = WeightFamily::Power { alpha };
            let est = estimate_theta_search(&family, &b, 10.0).unwrap();
            let exact = closed_form_theta(alpha, &b).unwrap();
            assert!((est.theta_hat - exact).abs() < 1e-6, "alpha {alpha} nu {nu}");
            let ratios: Vec<f64> = log_grid(1e-3, 1e3, 25)
                .into_iter()
                .map(|y| dissipation_ratio(&family, &b, y, 1.0).unwrap())
                .collect();
            let spread = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(spread < 1e-10, "alpha {alpha} nu {nu}: spread {spread:e}");
        }
    }
}

#[test]
fn daughter_validators_pass_on_sample_grid() {
    let ys = log_grid(1e-3, 10.0, 20);
    let zs = log_grid(1e-3, 10.0, 20);
    let all = [
        DaughterFamily::PowerLaw { nu: -0.5 },
        DaughterFamily::UniformBinary,
        DaughterFamily::KllUnitEnds,
        DaughterFamily::KllShrinkingEnds,
    ];
    for family in all {
        let b = DaughterSpec::new(family).unwrap().with_size_bound(10.0).unwrap();
        let lmc = b.check_lmc(&ys, &zs, 1e-8).unwrap();
        assert!(lmc.passed, "{family:?}: {lmc:?}");
        let nop = b.check_nop(&ys, &zs);
        assert!(nop.passed, "{family:?}: {nop:?}");
        let pc = b.check_p_condition(1.5, &ys, &zs).unwrap();
        assert!(pc.passed(), "{family:?}: {pc:?}");
    }
}

#[test]
fn power_law_fragment_count_matches_beta0() {
    for nu in [0.0, -0.3, -0.8] {
        let b = DaughterSpec::power_law(nu).unwrap();
        for y in [1e-3, 1.0, 7.0] {
            assert!((b.fragment_count(y, 1.0) / b.beta0 - 1.0).abs() < 1e-13);
        }
    }
}
