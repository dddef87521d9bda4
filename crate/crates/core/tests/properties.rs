use std::f64::consts::PI;

use backflow_core::criterion::{condition_value, decide, quadratic_form};
use backflow_core::dynamics::{
    certify_flux, current_at_origin, current_at_x, flux, gaussian_current_closed_form, probability_left, total_flux, C_BM,
};
use backflow_core::fluxspec::{eveson_quadratic_check, flux_matrix};
use backflow_core::linalg::eigenvalues;
use backflow_core::regcur::{limit_procedure, reg_matrix_spectrum, reg_spectrum, ARule, Regulator};
use backflow_core::states::PolyGaussianTerm;
use backflow_core::{build_grid, moments, normalize, Complex64, GridScheme, MomentTriple, MomentumProfile, MomentumState, UnitsContext};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

fn cfg(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0x6ac_f10e),
        failure_persistence: None,
        max_shrink_iters: 64,
        ..Config::default()
    }
}

fn units() -> UnitsContext {
    UnitsContext::default()
}

fn term() -> impl Strategy<Value = PolyGaussianTerm> {
    (-1.0..1.0f64, -1.0..1.0f64, 0u32..=2, 0.5..2.0f64, 0.0..2.0f64).prop_map(|(re, im, power, gamma, center)| {
        PolyGaussianTerm {
            coeff: Complex64::new(re, im),
            power,
            gamma,
            center,
        }
    })
}

fn profile() -> impl Strategy<Value = MomentumProfile> {
    prop::collection::vec(term(), 1..=3).prop_map(|terms| MomentumProfile::PolyGaussian { terms })
}

fn family_state() -> impl Strategy<Value = MomentumState> {
    (profile(), -2.0..3.0f64, -1.0..1.0f64)
        .prop_filter_map("zero norm", |(p, re, im)| MomentumState::family(p, Complex64::new(re, im), units()).ok())
}

fn complex(r: f64) -> impl Strategy<Value = Complex64> {
    (-r..r, -r..r).prop_map(|(re, im)| Complex64::new(re, im))
}

fn triple() -> impl Strategy<Value = MomentTriple> {
    (complex(1.0), complex(1.0), complex(1.0)).prop_map(|(a, b, c)| MomentTriple::new(a, b, c))
}

/// Triples with each moment zeroed with probability 1/5, to reach the special cases.
fn sparse_triple() -> impl Strategy<Value = MomentTriple> {
    let slot = || prop_oneof![1 => Just(Complex64::new(0.0, 0.0)), 4 => complex(1.0)];
    (slot(), slot(), slot()).prop_map(|(a, b, c)| MomentTriple::new(a, b, c))
}

/// `Γ((k+1)/2)` by upward recursion from `Γ(1/2)` or `Γ(1)`.
fn gamma_half(k: u32) -> f64 {
    let target = (k as f64 + 1.0) / 2.0;
    let (mut x, mut g) = if k.is_multiple_of(2) { (0.5, PI.sqrt()) } else { (1.0, 1.0) };
    while x < target {
        g *= x;
        x += 1.0;
    }
    g
}

// states

proptest! {
    #![proptest_config(cfg(50))]

    #[test]
    fn quadrature_oracle(terms in prop::collection::vec((0.1..1.0f64, 0u32..=4, 0.3..3.0f64), 1..=4)) {
        let gmin = terms.iter().map(|t| t.2).fold(f64::INFINITY, f64::min);
        let grid = build_grid(256, 1.0 / gmin, GridScheme::MappedGauss).unwrap();
        let exact: f64 = terms.iter().map(|&(c, k, g)| c * gamma_half(k) / (2.0 * g.powi(k as i32 + 1))).sum();
        let got = grid.integrate(|p| terms.iter().map(|&(c, k, g)| c * p.powi(k as i32) * (-g * g * p * p).exp()).sum());
        prop_assert!((got / exact - 1.0).abs() < 1e-8, "{got} vs {exact}");
    }

    #[test]
    fn normalization_is_idempotent(s in family_state()) {
        let once = normalize(&s).unwrap();
        let twice = normalize(&once).unwrap();
        prop_assert!((twice.norm_constant / once.norm_constant - 1.0).abs() < 1e-12);
    }

    #[test]
    fn real_nonnegative_profiles_have_nonnegative_moments(
        terms in prop::collection::vec((0.0..1.0f64, 0u32..=2, 0.5..2.0f64, 0.0..2.0f64), 1..=3)
    ) {
        let profile = MomentumProfile::PolyGaussian {
            terms: terms
                .iter()
                .map(|&(c, power, gamma, center)| PolyGaussianTerm { coeff: c.into(), power, gamma, center })
                .collect(),
        };
        let m = moments(&profile, &units()).unwrap().triple;
        for f in m.as_array() {
            prop_assert!(f.im == 0.0 && f.re >= 0.0, "{f}");
        }
    }

    #[test]
    fn moments_scale_covariantly(p in profile(), big in any::<bool>()) {
        let lambda: f64 = if big { 2.0 } else { 0.5 };
        let MomentumProfile::PolyGaussian { terms } = &p else { unreachable!() };
        let scaled = MomentumProfile::PolyGaussian {
            terms: terms
                .iter()
                .map(|t| PolyGaussianTerm {
                    coeff: t.coeff * lambda.powi(t.power as i32),
                    power: t.power,
                    gamma: t.gamma * lambda,
                    center: t.center / lambda,
                })
                .collect(),
        };
        let m = moments(&p, &units()).unwrap().triple;
        let ms = moments(&scaled, &units()).unwrap().triple;
        for (n, (f, fs)) in m.as_array().iter().zip(ms.as_array()).enumerate() {
            let expected = f * lambda.powi(-(n as i32 + 1));
            prop_assert!((fs - expected).norm() <= 1e-8 * m.max_norm() * lambda.powi(-(n as i32 + 1)));
        }
    }
}

// criterion

proptest! {
    #![proptest_config(cfg(1000))]

    #[test]
    fn factored_and_quadratic_forms_agree(m in triple(), a in complex(5.0)) {
        let q = quadratic_form(&m);
        let scale = q.a.abs() * a.norm_sqr() + 2.0 * q.b.norm() * a.norm() + q.c.abs();
        prop_assert!((condition_value(a, &m) - q.eval(a)).abs() <= 1e-10 * scale);
    }

    #[test]
    fn discriminant_identity(m in triple()) {
        let q = quadratic_form(&m);
        let direct = q.b.norm_sqr() - q.a * q.c;
        let scale = q.b.norm_sqr() + (q.a * q.c).abs();
        prop_assert!((direct - q.discriminant).abs() <= 1e-10 * scale);
    }

    #[test]
    fn every_nontrivial_triple_has_a_witness(m in sparse_triple()) {
        let zero = |z: Complex64| z.norm() == 0.0;
        prop_assume!(!(zero(m.f0) && zero(m.f1)) && !(zero(m.f1) && zero(m.f2)));
        let q = quadratic_form(&m);
        prop_assume!(!(q.a > 0.0 && q.discriminant <= 1e-13 * m.max_norm().powi(4)));
        let v = decide(&m);
        prop_assert!(v.is_backflow);
        let w = v.witness_a.unwrap();
        prop_assert!(condition_value(w, &m) < 0.0);
        prop_assert!((condition_value(w, &m) - v.condition_value).abs() <= 1e-12 * m.max_norm().powi(2) * (1.0 + w.norm_sqr()));
    }
}

proptest! {
    #![proptest_config(cfg(100))]

    #[test]
    fn condition_sign_matches_current(s in family_state()) {
        let c = condition_value(s.a, &s.moments().unwrap().triple);
        let j = current_at_origin(&s, 0.0).unwrap().j;
        if j.abs() > 1e-12 {
            prop_assert_eq!(c < 0.0, j < 0.0, "c = {}, J = {}", c, j);
        }
    }
}

// dynamics

proptest! {
    #![proptest_config(cfg(200))]

    #[test]
    fn gaussian_closed_form_matches_quadrature(a in -2.0..3.0f64, t in -10.0..10.0f64) {
        let s = MomentumState::family(MomentumProfile::GaussianF { gamma0: 1.0 }, a.into(), units()).unwrap();
        let q = current_at_origin(&s, t).unwrap().j;
        let c = gaussian_current_closed_form(a, 1.0, t, &units());
        prop_assert!((q - c).abs() < 1e-8, "{} vs {}", q, c);
    }
}

proptest! {
    #![proptest_config(cfg(10))]

    #[test]
    fn flux_probability_duality(s in family_state(), t1 in -2.0..0.5f64, len in 0.1..2.0f64) {
        let t2 = t1 + len;
        let f = flux(&s, t1, t2).unwrap().flux;
        let dp = probability_left(&s, t1).unwrap() - probability_left(&s, t2).unwrap();
        prop_assert!((dp - f).abs() < 1e-4, "{} vs {}", dp, f);
    }

    #[test]
    fn total_flux_is_one(s in family_state()) {
        let total = total_flux(&s).unwrap();
        prop_assert!((total - 1.0).abs() < 1e-3, "{}", total);
    }

    #[test]
    fn translation_shifts_current(s in family_state(), x0 in -3.0..3.0f64) {
        let moved = s.translated(x0);
        for (x, t) in [(0.0, 0.0), (0.5, 0.3), (-1.0, 1.0), (2.0, -0.7), (x0, 2.0)] {
            let a = current_at_x(&moved, x, t).unwrap();
            let b = current_at_x(&s, x - x0, t).unwrap();
            prop_assert!((a - b).abs() < 1e-6, "x = {}, t = {}: {} vs {}", x, t, a, b);
        }
    }
}

proptest! {
    #![proptest_config(cfg(20))]

    #[test]
    fn flux_respects_bracken_melloy(s in family_state(), t1 in -3.0..3.0f64, len in 0.05..3.0f64) {
        let w = certify_flux(&s).unwrap();
        prop_assert!(w.flux >= -C_BM - 1e-3, "{}", w.flux);
        let f = flux(&s, t1, t1 + len).unwrap().flux;
        prop_assert!(f >= -C_BM - 1e-3, "{}", f);
    }
}

// fluxspec

proptest! {
    #![proptest_config(cfg(20))]

    #[test]
    fn rayleigh_quotient_is_above_lowest_eigenvalue(
        states in prop::collection::vec(family_state(), 5),
        t1 in -2.0..2.0f64,
        len in 0.2..3.0f64,
    ) {
        let grid = build_grid(128, 1.0, GridScheme::MappedGauss).unwrap();
        let op = flux_matrix(&grid, t1, t1 + len, &units()).unwrap();
        let lmin = eigenvalues(&op.matrix).unwrap()[0];
        for s in &states {
            let x = op.embed(s);
            let nx: f64 = x.iter().map(|z| z.norm_sqr()).sum();
            prop_assert!(op.matrix.expectation(&x) / nx >= lmin - 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(cfg(300))]

    #[test]
    fn smeared_current_respects_eveson_bound(s in family_state(), sigma in 0.1..3.0f64) {
        let (lhs, bound) = eveson_quadratic_check(&s, sigma).unwrap();
        prop_assert!(lhs >= bound - 1e-8, "{} < {}", lhs, bound);
    }
}

// regcur

proptest! {
    #![proptest_config(cfg(20))]

    #[test]
    fn regularized_current_has_rank_two(p in profile(), sigma in 0.1..10.0f64, which in 0usize..3) {
        let n = [128, 256, 512][which];
        let reg = Regulator::new(sigma, p, units()).unwrap();
        let grid = build_grid(n, 1.0, GridScheme::MappedGauss).unwrap();
        let ms = reg_matrix_spectrum(&reg, &grid).unwrap();
        prop_assert_eq!(ms.nonzero.len(), 2);
        let spec = reg_spectrum(&reg).unwrap();
        prop_assert!((ms.nonzero[0] / spec.lambda_minus - 1.0).abs() < 1e-8);
        prop_assert!((ms.nonzero[1] / spec.lambda_plus - 1.0).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(cfg(10))]

    #[test]
    fn tracked_limit_reaches_current_and_moments(p in profile()) {
        let trace = limit_procedure(&p, 12, ARule::Tracked, &units()).unwrap();
        prop_assume!(!trace.degenerate);
        let last = trace.last();
        let psi = MomentumState::family(p.clone(), last.a, units()).unwrap();
        let j0 = current_at_origin(&psi, 0.0).unwrap().j;
        prop_assert!((last.expectation / j0 - 1.0).abs() < 1e-3, "{} vs {}", last.expectation, j0);
        prop_assert_eq!(condition_value(last.a, &moments(&p, &units()).unwrap().triple) < 0.0, j0 < 0.0);

        // Brackets of the unit-norm fiducial against the regulators tend to its moments.
        let f = Regulator::new(1.0, p, units()).unwrap().profile;
        let m = moments(&f, &units()).unwrap().triple;
        for (b, fm) in trace.final_brackets.as_array().iter().zip(m.as_array()) {
            prop_assert!((b - fm).norm() < 1e-3 * m.max_norm(), "{} vs {}", b, fm);
        }
    }
}
