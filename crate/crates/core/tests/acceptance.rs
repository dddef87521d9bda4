//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::f64::consts::PI;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use backflow_core::criterion::{condition_value, decide, quadratic_form};
use backflow_core::dynamics::{
    bisect_root, current_at_origin, flux, gaussian_current_closed_form, probability_left, refine_minimum, scan_flux, total_flux,
    C_BM,
};
use backflow_core::fluxspec::{bracken_melloy_bound, eveson_quadratic_check, richardson};
use backflow_core::library_states::{bracken_melloy, eveson, random_family_state, CatalogEntry};
use backflow_core::regcur::{limit_procedure, reg_matrix_spectrum, reg_spectrum, ARule, Regulator};
use backflow_core::states::PolyGaussianTerm;
use backflow_core::{
    build_grid, moments, Complex64, GridScheme, MomentTriple, MomentumProfile, MomentumState, UnitsContext,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = fn() -> Outcome;

fn units() -> UnitsContext {
    UnitsContext::default()
}

fn gaussian(a: f64) -> MomentumState {
    MomentumState::family(MomentumProfile::GaussianF { gamma0: 1.0 }, a.into(), units()).unwrap()
}

fn rng(stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(0xacce_97a9);
    r.set_stream(stream);
    r
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gaussian_flux_reproduction() -> Outcome {
    let start = Instant::now();
    let profile = MomentumProfile::GaussianF { gamma0: 1.0 };
    let values: Vec<Complex64> = (0..64).map(|i| Complex64::new(0.57 + 0.31 * i as f64 / 63.0, 0.0)).collect();
    let scan = scan_flux(&profile, &units(), &values).map_err(|e| e.to_string())?;
    let best = scan.iter().min_by(|a, b| a.flux.total_cmp(&b.flux)).unwrap();
    let step = 0.31 / 63.0;
    let refined = refine_minimum(&profile, &units(), best.a.re - step, best.a.re + step, 1e-3).map_err(|e| e.to_string())?;
    let certified = flux(&gaussian(refined.a.re), refined.window.unwrap().0, refined.window.unwrap().1).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(
        (refined.a.re - 0.684).abs() <= 0.005
            && (certified.flux + 0.01573).abs() <= 5e-4
            && (certified.fraction_of_cbm - 0.41).abs() <= 0.02
            && elapsed < Duration::from_secs(30),
        format!(
            "argmin aγ₀ = {:.4}, flux = {:.6}, fraction = {:.4}, {:.1} s",
            refined.a.re,
            certified.flux,
            certified.fraction_of_cbm,
            elapsed.as_secs_f64()
        ),
    )
}

fn window_endpoints() -> Outcome {
    let j0 = |a: f64| current_at_origin(&gaussian(a), 0.0).map(|s| s.j);
    let lo = bisect_root(j0, 0.4, 0.7, 1e-6).map_err(|e| e.to_string())?;
    let hi = bisect_root(j0, 0.7, 1.1, 1e-6).map_err(|e| e.to_string())?;
    let (lo_exact, hi_exact) = (1.0 / PI.sqrt(), PI.sqrt() / 2.0);
    check(
        (lo - lo_exact).abs() <= 1e-4 && (hi - hi_exact).abs() <= 1e-4,
        format!("roots {lo:.6}, {hi:.6}; expected {lo_exact:.6}, {hi_exact:.6}"),
    )
}

fn bracken_melloy_constant() -> Outcome {
    let start = Instant::now();
    let mut estimates = Vec::new();
    for n in [256, 512, 1024, 2048] {
        estimates.push(bracken_melloy_bound(n, 1.0, (0.0, 1.0), &units()).map_err(|e| e.to_string())?.estimate);
    }
    let extrapolated = richardson(&estimates).map_err(|e| e.to_string())?;
    let other = bracken_melloy_bound(1024, 1.0, (0.0, 10.0), &units()).map_err(|e| e.to_string())?.estimate;
    let elapsed = start.elapsed();
    let rel = (extrapolated / C_BM - 1.0).abs();
    check(
        (0.030..=0.0395).contains(&estimates[2])
            && rel < 0.05
            && (other - estimates[2]).abs() < 1e-3
            && elapsed < Duration::from_secs(600),
        format!(
            "n = 1024: {:.6}, Richardson {extrapolated:.6} ({:.2}% from c_bm), window (0,10): {other:.6}, {:.1} s",
            estimates[2],
            100.0 * rel,
            elapsed.as_secs_f64()
        ),
    )
}

fn random_triple(r: &mut ChaCha8Rng) -> MomentTriple {
    let mut c = || Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
    MomentTriple::new(c(), c(), c())
}

fn discriminant_identity() -> Outcome {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let m = random_triple(&mut r);
        let q = quadratic_form(&m);
        let direct = q.b.norm_sqr() - q.a * q.c;
        worst = worst.max((direct - q.discriminant).abs() / (q.b.norm_sqr() + (q.a * q.c).abs()));
    }
    check(worst < 1e-10, format!("worst relative error {worst:.2e} over 1000 triples"))
}

fn existence_theorem() -> Outcome {
    let mut r = rng(5);
    let (mut tested, mut agree) = (0, 0);
    let mut first_failure = None;
    while tested < 1000 {
        let state = random_family_state(&mut r).map_err(|e| e.to_string())?;
        let m = moments(&state.profile, &units()).map_err(|e| e.to_string())?.triple;
        let q = quadratic_form(&m);
        if q.discriminant <= 1e-13 * m.max_norm().powi(4) && q.a >= 0.0 {
            continue;
        }
        tested += 1;
        let v = decide(&m);
        let ok = match v.witness_a {
            Some(w) if v.is_backflow && condition_value(w, &m) < 0.0 => {
                let psi = MomentumState::family(state.profile.clone(), w, units()).map_err(|e| e.to_string())?;
                current_at_origin(&psi, 0.0).map_err(|e| e.to_string())?.j < 0.0
            }
            _ => false,
        };
        if ok {
            agree += 1;
        } else if first_failure.is_none() {
            first_failure = Some(format!("{m:?}"));
        }
    }
    check(
        agree == tested,
        format!(
            "{agree}/{tested} profiles with a witness confirmed by J(0) < 0{}",
            first_failure.map(|f| format!("; first failure {f}")).unwrap_or_default()
        ),
    )
}

fn closed_form_vs_quadrature() -> Outcome {
    let mut r = rng(6);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let a = r.gen_range(-2.0..3.0);
        let t = r.gen_range(-10.0..10.0);
        let q = current_at_origin(&gaussian(a), t).map_err(|e| e.to_string())?.j;
        worst = worst.max((q - gaussian_current_closed_form(a, 1.0, t, &units())).abs());
    }
    check(worst < 1e-8, format!("worst absolute difference {worst:.2e} over 200 (aγ₀, t)"))
}

fn flux_probability_duality() -> Outcome {
    let mut r = rng(7);
    let (mut worst_duality, mut worst_total): (f64, f64) = (0.0, 0.0);
    for _ in 0..10 {
        let s = random_family_state(&mut r).map_err(|e| e.to_string())?;
        let t1 = r.gen_range(-2.0..0.5);
        let t2 = t1 + r.gen_range(0.1..2.0);
        let f = flux(&s, t1, t2).map_err(|e| e.to_string())?.flux;
        let dp = probability_left(&s, t1).map_err(|e| e.to_string())? - probability_left(&s, t2).map_err(|e| e.to_string())?;
        worst_duality = worst_duality.max((dp - f).abs());
        worst_total = worst_total.max((total_flux(&s).map_err(|e| e.to_string())? - 1.0).abs());
    }
    check(
        worst_duality < 1e-4 && worst_total < 1e-3,
        format!("worst |ΔP − F| = {worst_duality:.2e}, worst |F_total − 1| = {worst_total:.2e}"),
    )
}

fn random_regulator(r: &mut ChaCha8Rng) -> Regulator {
    let terms = (0..r.gen_range(1..=3))
        .map(|_| PolyGaussianTerm {
            coeff: Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)),
            power: r.gen_range(0..=2),
            gamma: r.gen_range(0.5..2.0),
            center: r.gen_range(0.0..2.0),
        })
        .collect();
    Regulator::new(r.gen_range(0.1..10.0), MomentumProfile::PolyGaussian { terms }, units()).unwrap()
}

fn regularized_spectrum() -> Outcome {
    let mut r = rng(8);
    let grid = build_grid(256, 1.0, GridScheme::MappedGauss).map_err(|e| e.to_string())?;
    let (mut rank_ok, mut worst): (usize, f64) = (0, 0.0);
    for _ in 0..20 {
        let reg = random_regulator(&mut r);
        let ms = reg_matrix_spectrum(&reg, &grid).map_err(|e| e.to_string())?;
        let spec = reg_spectrum(&reg).map_err(|e| e.to_string())?;
        if ms.nonzero.len() == 2 {
            rank_ok += 1;
            worst = worst
                .max((ms.nonzero[0] / spec.lambda_minus - 1.0).abs())
                .max((ms.nonzero[1] / spec.lambda_plus - 1.0).abs());
        }
    }
    check(
        rank_ok == 20 && worst < 1e-8,
        format!("{rank_ok}/20 regulators with exactly two nonzero eigenvalues, worst relative λ± error {worst:.2e}"),
    )
}

fn limit_procedure_check() -> Outcome {
    let f = MomentumProfile::GaussianF { gamma0: 1.0 };
    let tracked = limit_procedure(&f, 12, ARule::Tracked, &units()).map_err(|e| e.to_string())?;
    let last = tracked.last();
    let psi = MomentumState::family(f.clone(), last.a, units()).map_err(|e| e.to_string())?;
    let j0 = current_at_origin(&psi, 0.0).map_err(|e| e.to_string())?.j;
    let rel = (last.expectation / j0 - 1.0).abs();
    let fixed = limit_procedure(&f, 12, ARule::Fixed, &units()).map_err(|e| e.to_string())?;
    let fixed_last = fixed.last().expectation;
    check(
        rel < 1e-3 && fixed_last >= 0.0,
        format!(
            "tracked {:.6} vs J(0) {j0:.6} (relative {rel:.2e}); fixed ends at {fixed_last:.6}",
            last.expectation
        ),
    )
}

fn eveson_bound() -> Outcome {
    let mut r = rng(10);
    let mut violations = 0;
    let mut tightest = f64::INFINITY;
    for _ in 0..300 {
        let s = random_family_state(&mut r).map_err(|e| e.to_string())?;
        let sigma = r.gen_range(0.1..3.0);
        let (lhs, bound) = eveson_quadratic_check(&s, sigma).map_err(|e| e.to_string())?;
        tightest = tightest.min((lhs - bound) / bound.abs());
        if lhs < bound - 1e-8 {
            violations += 1;
        }
    }
    check(
        violations == 0,
        format!("{violations} violations over 300 (state, σ); smallest margin {tightest:.3e} of the bound"),
    )
}

fn certifies(entry: &CatalogEntry) -> Result<bool, String> {
    let split = entry.family_form().ok_or("no family form")?;
    let m = moments(&split.profile, &units()).map_err(|e| e.to_string())?.triple;
    let j0 = current_at_origin(&entry.state, 0.0).map_err(|e| e.to_string())?.j;
    Ok(decide(&m).is_backflow && condition_value(split.a, &m) < 0.0 && j0 < 0.0)
}

fn catalog_assertions() -> Outcome {
    let n2 = MomentumProfile::BrackenMelloy { k: 1.0 }.norm_squared().map_err(|e| e.to_string())?;
    let bm = certifies(&bracken_melloy(1.0).map_err(|e| e.to_string())?)?;
    let ev = certifies(&eveson(1.0).map_err(|e| e.to_string())?)?;
    check(
        (n2 - 1.0).abs() < 1e-10 && bm && ev,
        format!("printed-prefactor norm {n2:.12}; Bracken–Melloy backflow: {bm}; Eveson backflow: {ev}"),
    )
}

fn maximizing_state_probability() -> Outcome {
    let b = bracken_melloy_bound(1024, 1.0, (-0.5, 0.5), &units()).map_err(|e| e.to_string())?;
    let p: Vec<f64> = (0..=20)
        .map(|i| probability_left(&b.state, -0.5 + i as f64 / 20.0))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let increasing = p.windows(2).all(|w| w[1] > w[0]);
    check(
        increasing,
        format!("P rises from {:.6} to {:.6} across the window, monotone: {increasing}", p[0], p[20]),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 12] = [
        ("1  Gaussian flux reproduction", gaussian_flux_reproduction),
        ("2  backflow window endpoints", window_endpoints),
        ("3  Bracken–Melloy constant", bracken_melloy_constant),
        ("4  discriminant identity", discriminant_identity),
        ("5  existence theorem", existence_theorem),
        ("6  closed form vs quadrature", closed_form_vs_quadrature),
        ("7  flux–probability duality", flux_probability_duality),
        ("8  regularized spectrum", regularized_spectrum),
        ("9  limit procedure", limit_procedure_check),
        ("10 Eveson bound", eveson_bound),
        ("11 catalog assertions", catalog_assertions),
        ("F1 P(t) increasing in the maximizing window", maximizing_state_probability),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
