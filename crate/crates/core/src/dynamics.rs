//! Free time evolution: current at the origin and at `x`, negative windows,
//! flux over a time window, and the probability of finding the particle in
//! `x < 0`.
//!
//! All observables reduce to the amplitudes
//! `Uₖ(x, t) = ∫₀^∞ pᵏ φ(p) e^{ipx/ħ − ip²t/2mħ} dp`, with
//! `J(x, t) = 2 Re(U₀ U₁*)/(4πmħ)` and `ψ(x, t) = U₀/√(2πħ)`.
//! For analytic profiles and strongly oscillating integrands the `p` contour
//! is rotated onto a ray `e^{∓iπ/4}s`; compact supports become a difference of
//! two rays. Sampled profiles use their grid quadrature directly.

use std::cell::RefCell;
use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, BackflowError, Result};
use crate::quadrature::{adaptive, adaptive_real, adaptive_semi_infinite, Estimate, Tolerance};
use crate::states::{MomentumProfile, MomentumState, UnitsContext};

/// The Bracken–Melloy constant.
pub const C_BM: f64 = 0.038452;

/// Largest acceptable quadrature error on a current value.
pub const CURRENT_ERROR_LIMIT: f64 = 1e-6;

/// Above this many radians of phase on the real axis the ray contour is used.
const REAL_AXIS_PHASE_LIMIT: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentSample {
    pub t: f64,
    #[serde(rename = "J")]
    pub j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxReport {
    pub t1: f64,
    pub t2: f64,
    pub flux: f64,
    pub error: f64,
    pub window_found: bool,
    pub fraction_of_cbm: f64,
}

impl FluxReport {
    fn new(t1: f64, t2: f64, flux: f64, error: f64, window_found: bool) -> Self {
        Self {
            t1,
            t2,
            flux,
            error,
            window_found,
            fraction_of_cbm: if flux < 0.0 { -flux / C_BM } else { 0.0 },
        }
    }
}

fn tau_of(units: &UnitsContext, t: f64) -> f64 {
    t / (2.0 * units.mass * units.hbar)
}

/// Ray angle sign for `∫ e^{ikp − iτp²}`: `Some(±1)` for the ray `e^{±iπ/4}s`
/// when that ray gives a well-conditioned integral.
fn contour_direction(k: f64, tau: f64) -> Option<f64> {
    let dir = if tau != 0.0 {
        -tau.signum()
    } else if k != 0.0 {
        k.signum()
    } else {
        return None;
    };
    // e^{ikz} decays along the ray when k·dir ≥ 0; otherwise its growth peaks
    // at e^{k²/(8|τ|)} and must stay modest.
    if k * dir >= 0.0 || (tau != 0.0 && k * k / (8.0 * tau.abs()) < 4.0) {
        Some(dir)
    } else {
        None
    }
}

/// Whether the integrand on the ray `e^{±iπ/4}s` stays within a factor ~e⁴ of
/// its size on the real axis. Shifted Gaussians grow along the ray, and the
/// cancellation then costs more digits than the rotation saves.
fn ray_is_tame(state: &MomentumState, dir: f64, kx: f64, tau: f64, cutoff: f64) -> bool {
    let w = Complex64::from_polar(1.0, dir * FRAC_PI_4);
    let mut reach = cutoff;
    if tau != 0.0 {
        reach = reach.max((40.0 / tau.abs()).sqrt());
    }
    let samples = 256;
    let mut ray_max = f64::NEG_INFINITY;
    let mut axis_max = f64::NEG_INFINITY;
    for i in 0..=samples {
        let u = i as f64 / samples as f64;
        let z = w * (3.0 * reach * u);
        if let Some(l) = state.log_continuation(z) {
            let re = (l + Complex64::i() * (kx * z - tau * z * z)).re;
            if !re.is_nan() {
                ray_max = ray_max.max(re);
            }
        }
        let phi = state.eval(cutoff * u).norm();
        if phi > 0.0 {
            axis_max = axis_max.max(phi.ln());
        }
    }
    ray_max <= axis_max + 4.0
}

/// `∫₀^∞ pᵏ φ(p) e^{ipx/ħ − ip²t/2mħ} dp` with its error estimate.
pub fn fourier_moment(state: &MomentumState, k: i32, x: f64, t: f64) -> Estimate {
    let units = state.units;
    let tau = tau_of(&units, t);
    let kx = x / units.hbar;
    let profile = &state.profile;
    let scale = profile.momentum_scale();
    let tol = Tolerance {
        abs: 1e-14 * scale.powf(k as f64 + 0.5),
        rel: 1e-12,
        max_intervals: 20_000,
    };
    let phase = |p: Complex64| (Complex64::i() * (kx * p - tau * p * p)).exp();

    if profile.is_sampled() {
        return state.integrate(|p, phi| phi * p.powi(k) * phase(p.into()), tol);
    }

    let cutoff = profile.support_end().unwrap_or_else(|| profile.effective_cutoff());
    let k_eff = (x - state.offset) / units.hbar;
    let real_phase = k_eff.abs() * cutoff + tau.abs() * cutoff * cutoff;
    let direction = if real_phase > REAL_AXIS_PHASE_LIMIT {
        contour_direction(k_eff, tau)
    } else {
        None
    };

    let direction = direction.filter(|&dir| ray_is_tame(state, dir, kx, tau, cutoff));

    let Some(dir) = direction else {
        // Real axis; split so each piece carries a bounded phase.
        let est = state.integrate(|p, phi| phi * p.powi(k) * phase(p.into()), tol);
        if est.converged || real_phase < REAL_AXIS_PHASE_LIMIT {
            return est;
        }
        let pieces = (real_phase / 3.0).ceil().min(4000.0) as usize;
        let pts: Vec<f64> = (0..=pieces).map(|i| cutoff * i as f64 / pieces as f64).collect();
        let n = state.norm_constant;
        return adaptive(
            |p| state.shape(p, profile.eval(p)) * n * p.powi(k) * phase(p.into()),
            &pts,
            tol,
        );
    };

    let w = Complex64::from_polar(1.0, dir * FRAC_PI_4);
    let mut ell = scale;
    if tau != 0.0 {
        ell = ell.min(1.0 / tau.abs().sqrt());
    }
    if k_eff * dir > 0.0 {
        ell = ell.min(std::f64::consts::SQRT_2 / k_eff.abs());
    }
    let ray = |b: f64| {
        adaptive_semi_infinite(
            |s| {
                let z = b + w * s;
                let log_phi = state.log_continuation(z).expect("analytic profile");
                (log_phi + Complex64::i() * (kx * z - tau * z * z)).exp() * z.powi(k) * w
            },
            0.0,
            ell,
            tol,
        )
    };
    let start = ray(0.0);
    match profile.support_end() {
        None => start,
        Some(end) => {
            let tail = ray(end);
            Estimate {
                value: start.value - tail.value,
                error: start.error + tail.error,
                evaluations: start.evaluations + tail.evaluations,
                converged: start.converged && tail.converged,
            }
        }
    }
}

/// `J(x, t) = (1/2m)(2πħ)^{−1} ∫∫ φ_t*(k) φ_t(p) (p+k) e^{i(p−k)x/ħ} dp dk`.
pub fn current_at_x(state: &MomentumState, x: f64, t: f64) -> Result<f64> {
    let u = fourier_moment(state, 0, x, t);
    let v = fourier_moment(state, 1, x, t);
    let pre = 1.0 / (4.0 * PI * state.units.mass * state.units.hbar);
    let j = 2.0 * (u.value * v.value.conj()).re * pre;
    let err = 2.0 * (u.value.norm() * v.error + v.value.norm() * u.error) * pre;
    if !(err <= CURRENT_ERROR_LIMIT) || !j.is_finite() {
        return Err(BackflowError::Accuracy {
            context: format!("current quadrature at x = {x}"),
            estimate: err,
            limit: CURRENT_ERROR_LIMIT,
            time: Some(t),
        });
    }
    Ok(j)
}

/// `J(t) = (u v* + u* v)/(4πmħ)` at the origin.
pub fn current_at_origin(state: &MomentumState, t: f64) -> Result<CurrentSample> {
    Ok(CurrentSample {
        t,
        j: current_at_x(state, 0.0, t)?,
    })
}

/// `J(0, t)` on a list of times, in order.
pub fn current_series(state: &MomentumState, times: &[f64]) -> Result<Vec<CurrentSample>> {
    times.par_iter().map(|&t| current_at_origin(state, t)).collect()
}

/// `N²` of the family state `N (a − p) e^{−γ₀²p²}`.
pub fn gaussian_family_norm_sq(a: f64, gamma0: f64) -> f64 {
    let c = (2.0 / PI).sqrt();
    2.0 * c * gamma0 / (a * a + 1.0 / (4.0 * gamma0 * gamma0) - c * a / gamma0)
}

/// Closed-form current at the origin of `N (a − p) e^{−γ₀²p²}`:
/// `N²/(32πmħ|γ|⁶) γ*(aγ*√π − 1)(2aγ − √π) + c.c.` with `γ = (γ₀² + it/2mħ)^{1/2}`.
pub fn gaussian_current_closed_form(a: f64, gamma0: f64, t: f64, units: &UnitsContext) -> f64 {
    let sp = PI.sqrt();
    let g = Complex64::new(gamma0 * gamma0, tau_of(units, t)).sqrt();
    let gc = g.conj();
    let term = gc * (a * gc * sp - 1.0) * (2.0 * a * g - sp);
    let n2 = gaussian_family_norm_sq(a, gamma0);
    n2 / (32.0 * PI * units.mass * units.hbar * g.norm().powi(6)) * 2.0 * term.re
}

/// Bisection for a sign change of `f` on `[lo, hi]` down to width `tol`.
pub fn bisect_root<F>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut flo = f(lo)?;
    let fhi = f(hi)?;
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return invalid("bisection interval does not bracket a sign change");
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Sampling plan for [`negative_window_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSearch {
    /// Half-width of the sampled interval in units of the state's timescale.
    pub horizon: f64,
    pub samples: usize,
}

impl Default for WindowSearch {
    fn default() -> Self {
        Self {
            horizon: 20.0,
            samples: 2000,
        }
    }
}

/// Roots of `J(t)` bracketing the negative lobe that holds the most negative
/// sampled current; `None` when `J ≥ 0` everywhere on the horizon.
pub fn negative_window(state: &MomentumState) -> Result<Option<(f64, f64)>> {
    negative_window_with(state, WindowSearch::default())
}

pub fn negative_window_with(state: &MomentumState, search: WindowSearch) -> Result<Option<(f64, f64)>> {
    if search.samples < 3 || !(search.horizon > 0.0) {
        return invalid("window search needs at least 3 samples and a positive horizon");
    }
    let ts = state.timescale()?;
    let h = search.horizon * ts;
    let n = search.samples;
    let times: Vec<f64> = (0..n).map(|i| -h + 2.0 * h * i as f64 / (n - 1) as f64).collect();
    let js: Vec<f64> = current_series(state, &times)?.iter().map(|s| s.j).collect();
    let (imin, jmin) = js
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &j)| if j < acc.1 { (i, j) } else { acc });
    if !(jmin < 0.0) {
        return Ok(None);
    }
    let j = |t: f64| current_at_origin(state, t).map(|s| s.j);
    let tol = 1e-9 * ts;

    let left = match (0..imin).rev().find(|&i| js[i] >= 0.0) {
        Some(i) => Some((times[i], times[i + 1])),
        None => outward_bracket(&j, times[0], -1.0, h)?,
    };
    let right = match (imin + 1..n).find(|&i| js[i] >= 0.0) {
        Some(i) => Some((times[i - 1], times[i])),
        None => outward_bracket(&j, times[n - 1], 1.0, h)?,
    };
    match (left, right) {
        (Some((a, b)), Some((c, d))) => Ok(Some((bisect_root(j, a, b, tol)?, bisect_root(j, c, d, tol)?))),
        _ => Ok(None),
    }
}

/// Look past the sampled horizon for the end of a lobe that is still negative there.
fn outward_bracket<F>(j: &F, start: f64, sign: f64, h: f64) -> Result<Option<(f64, f64)>>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut inner = start;
    let mut step = h;
    for _ in 0..20 {
        let outer = inner + sign * step;
        if j(outer)? >= 0.0 {
            return Ok(Some(if sign < 0.0 { (outer, inner) } else { (inner, outer) }));
        }
        inner = outer;
        step *= 2.0;
    }
    Ok(None)
}

fn flux_points(t1: f64, t2: f64, ts: f64) -> Vec<f64> {
    let pieces = ((t2 - t1) / ts).ceil().clamp(1.0, 400.0) as usize;
    (0..=pieces).map(|i| t1 + (t2 - t1) * i as f64 / pieces as f64).collect()
}

fn integrate_current<G>(g: G, points: &[f64], context: &str) -> Result<(f64, f64)>
where
    G: Fn(f64) -> Result<f64>,
{
    let failure: RefCell<Option<BackflowError>> = RefCell::new(None);
    let (value, error, converged) = adaptive_real(
        |t| match g(t) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        points,
        Tolerance {
            abs: 1e-10,
            rel: 1e-10,
            max_intervals: 5000,
        },
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    if !(error <= CURRENT_ERROR_LIMIT) || !(converged || error <= CURRENT_ERROR_LIMIT) || !value.is_finite() {
        return Err(BackflowError::Accuracy {
            context: context.to_string(),
            estimate: error,
            limit: CURRENT_ERROR_LIMIT,
            time: None,
        });
    }
    Ok((value, error))
}

/// `F(t₁, t₂) = ∫_{t₁}^{t₂} J(t) dt`.
pub fn flux(state: &MomentumState, t1: f64, t2: f64) -> Result<FluxReport> {
    if !(t1.is_finite() && t2.is_finite()) || t1 > t2 {
        return invalid(format!("flux window must satisfy t1 <= t2, got ({t1}, {t2})"));
    }
    if t1 == t2 {
        return Ok(FluxReport::new(t1, t2, 0.0, 0.0, false));
    }
    let ts = state.timescale()?;
    let (value, error) = integrate_current(
        |t| current_at_origin(state, t).map(|s| s.j),
        &flux_points(t1, t2, ts),
        "flux time quadrature",
    )?;
    Ok(FluxReport::new(t1, t2, value, error, false))
}

/// Negative window plus the flux through it.
pub fn certify_flux(state: &MomentumState) -> Result<FluxReport> {
    match negative_window(state)? {
        Some((t1, t2)) => {
            let mut r = flux(state, t1, t2)?;
            r.window_found = true;
            Ok(r)
        }
        None => Ok(FluxReport::new(0.0, 0.0, 0.0, 0.0, false)),
    }
}

/// Flux over all time: `F(−T, T)` with `T` = 50 timescales plus both tails,
/// each mapped to `(0, 1]` through `t = ±T/s²`.
///
/// The tails of compactly supported or sampled profiles oscillate without
/// bound in `s`, so only smooth analytic profiles are supported.
pub fn total_flux(state: &MomentumState) -> Result<f64> {
    if state.profile.support_end().is_some() {
        return Err(BackflowError::Unsupported(
            "total flux needs an analytic profile without compact support".into(),
        ));
    }
    let ts = state.timescale()?;
    let big_t = 50.0 * ts;
    let core = flux(state, -big_t, big_t)?.flux;
    let mut tails = 0.0;
    for sign in [-1.0, 1.0] {
        let (v, _) = integrate_current(
            |s| {
                let t = sign * big_t / (s * s);
                Ok(current_at_origin(state, t)?.j * 2.0 * big_t / (s * s * s))
            },
            &[0.0, 0.25, 0.5, 1.0],
            "flux tail quadrature",
        )?;
        tails += v;
    }
    Ok(core + tails)
}

/// Probability `P(t)` of finding the particle in `x < 0`, from
/// `P(t) = 1/2 − (i/2π) PV∬ φ_t*(p) φ_t(k) / (k − p) dp dk`.
///
/// For analytic profiles the inner principal value is
/// `∫₀^{2p} (φ_t(k) − φ_t(p))/(k − p) dk + ∫_{2p}^∞ φ_t(k)/(k − p) dk`,
/// and both integrals are done adaptively. Sampled profiles use the grid
/// nodes instead, see [`probability_left_sampled`].
pub fn probability_left(state: &MomentumState, t: f64) -> Result<f64> {
    if let MomentumProfile::GridSampled { grid, values } = &state.profile {
        return Ok(probability_left_sampled(state, &grid.nodes, &grid.weights, values, t));
    }
    let tau = tau_of(&state.units, t);
    let phi_t = |p: f64| state.eval(p) * Complex64::from_polar(1.0, -tau * p * p);
    let end = state.profile.support_end();
    let cutoff = end.unwrap_or_else(|| state.profile.effective_cutoff());
    let mut pts = state.profile.integration_points();
    pts.retain(|&p| p <= cutoff);
    // Split so that each piece carries a phase of at most a few radians.
    let pieces = (tau.abs() * cutoff * cutoff / 4.0).ceil().min(2000.0) as usize;
    pts.extend((1..pieces).map(|i| cutoff * (i as f64 / pieces as f64).sqrt()));
    pts.push(cutoff);
    pts.sort_by(f64::total_cmp);
    pts.dedup();

    let scale = state.profile.momentum_scale();
    let inner_tol = Tolerance::new(1e-13, 1e-11);
    let worst = RefCell::new(0.0f64);
    let hilbert = |p: f64| -> Complex64 {
        let at_p = phi_t(p);
        let mut near: Vec<f64> = pts.iter().copied().filter(|&k| k < 2.0 * p && k != p).collect();
        near.extend([p, 2.0 * p]);
        near.sort_by(f64::total_cmp);
        let a = adaptive(|k| (phi_t(k) - at_p) / (k - p), &near, inner_tol);
        let mut value = a.value;
        let mut error = a.error;
        if 2.0 * p < cutoff {
            let mut far: Vec<f64> = pts.iter().copied().filter(|&k| k > 2.0 * p).collect();
            far.insert(0, 2.0 * p);
            let b = adaptive(|k| phi_t(k) / (k - p), &far, inner_tol);
            value += b.value;
            error += b.error;
        }
        let mut w = worst.borrow_mut();
        *w = w.max(error * at_p.norm());
        value
    };
    let outer = adaptive(
        |p| phi_t(p).conj() * hilbert(p),
        &pts,
        Tolerance {
            abs: 1e-11,
            rel: 1e-11,
            max_intervals: 20_000,
        },
    );
    let inner_error = *worst.borrow() * cutoff;
    let error = (outer.error + inner_error) / (2.0 * PI);
    if !(error <= 1e-8) || !outer.value.im.is_finite() {
        return Err(BackflowError::Accuracy {
            context: format!("probability quadrature (momentum scale {scale})"),
            estimate: error,
            limit: 1e-8,
            time: Some(t),
        });
    }
    Ok(0.5 + outer.value.im / (2.0 * PI))
}

/// `P(t) = 1/2 − (i/2π) PV∬ φ_t*(p) φ_t(k) / (k − p) dp dk` on the grid nodes,
/// with the diagonal replaced by `wᵢ² φ_t*(pᵢ) φ_t'(pᵢ)`. The diagonal term makes
/// `dP/dt` equal to minus the node-quadrature current.
fn probability_left_sampled(state: &MomentumState, nodes: &[f64], weights: &[f64], values: &[Complex64], t: f64) -> f64 {
    let mh = state.units.mass * state.units.hbar;
    let phi: Vec<Complex64> = nodes
        .iter()
        .zip(values)
        .map(|(&p, &v)| state.shape(p, v) * state.norm_constant)
        .collect();
    let n = nodes.len();
    let slope = |i: usize| -> Complex64 {
        if n < 2 {
            return Complex64::new(0.0, 0.0);
        }
        let (l, r) = (i.saturating_sub(1), (i + 1).min(n - 1));
        (phi[r] - phi[l]) / (nodes[r] - nodes[l])
    };
    let evolved: Vec<Complex64> = nodes
        .iter()
        .zip(&phi)
        .map(|(&p, f)| f * Complex64::from_polar(1.0, -p * p * t / (2.0 * mh)))
        .collect();
    let sum: Complex64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let pi = nodes[i];
            let mut row = Complex64::new(0.0, 0.0);
            for j in 0..n {
                if j != i {
                    row += evolved[j] * (weights[j] / (nodes[j] - pi));
                }
            }
            // φ_t'(p) = (φ'(p) − i p t/mħ φ(p)) e^{−ip²t/2mħ}
            let d = (slope(i) - Complex64::new(0.0, pi * t / mh) * phi[i]) * Complex64::from_polar(1.0, -pi * pi * t / (2.0 * mh));
            evolved[i].conj() * weights[i] * (row + d * weights[i])
        })
        .sum();
    0.5 + sum.im / (2.0 * PI)
}

/// One point of a flux scan over the family constant `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub a: Complex64,
    pub window: Option<(f64, f64)>,
    pub flux: f64,
}

/// Flux through the negative window of `N (a − p) f(p)` for each `a`.
pub fn scan_flux(profile: &MomentumProfile, units: &UnitsContext, values: &[Complex64]) -> Result<Vec<ScanPoint>> {
    if values.is_empty() {
        return invalid("scan needs at least one value of a");
    }
    values
        .par_iter()
        .map(|&a| {
            let state = MomentumState::family(profile.clone(), a, *units)?;
            let report = certify_flux(&state)?;
            Ok(ScanPoint {
                a,
                window: report.window_found.then_some((report.t1, report.t2)),
                flux: report.flux,
            })
        })
        .collect()
}

/// Golden-section search for the real `a` in `[lo, hi]` minimizing the window flux.
pub fn refine_minimum(profile: &MomentumProfile, units: &UnitsContext, lo: f64, hi: f64, tol: f64) -> Result<ScanPoint> {
    if !(lo < hi) || !(tol > 0.0) {
        return invalid("golden-section search needs lo < hi and tol > 0");
    }
    let eval = |a: f64| -> Result<ScanPoint> { Ok(scan_flux(profile, units, &[Complex64::new(a, 0.0)])?[0]) };
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    while b - a > tol {
        if fc.flux < fd.flux {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d)?;
        }
    }
    Ok(if fc.flux < fd.flux { fc } else { fd })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criterion::{condition_value, current_from_condition};

    fn gaussian(a: f64) -> MomentumState {
        MomentumState::family(MomentumProfile::GaussianF { gamma0: 1.0 }, a.into(), UnitsContext::default()).unwrap()
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let s = gaussian(0.684);
        for t in [-10.0, -3.0, -0.5, 0.0, 0.1, 1.0, 2.5, 7.0, 10.0] {
            let q = current_at_origin(&s, t).unwrap().j;
            let c = gaussian_current_closed_form(0.684, 1.0, t, &s.units);
            assert!((q - c).abs() < 1e-10, "t={t}: {q} vs {c}");
        }
    }

    #[test]
    fn closed_form_in_dimensional_units() {
        let units = UnitsContext::new(0.7, 2.3).unwrap();
        let s = MomentumState::family(MomentumProfile::GaussianF { gamma0: 0.8 }, 0.9.into(), units).unwrap();
        for t in [-4.0, 0.0, 0.3, 6.0, 40.0] {
            let q = current_at_origin(&s, t).unwrap().j;
            let c = gaussian_current_closed_form(0.9, 0.8, t, &units);
            assert!((q - c).abs() < 1e-10, "t={t}: {q} vs {c}");
        }
    }

    #[test]
    fn window_edges_and_sign() {
        let sp = PI.sqrt();
        let u = UnitsContext::default();
        assert!(gaussian_current_closed_form(sp / 2.0, 1.0, 0.0, &u).abs() < 1e-12);
        assert!(current_at_origin(&gaussian(1.0 / sp), 0.0).unwrap().j.abs() < 1e-8);
        assert!(current_at_origin(&gaussian(0.684), 0.0).unwrap().j < 0.0);
    }

    #[test]
    fn origin_current_matches_condition_value() {
        let s = gaussian(0.684);
        let m = s.moments().unwrap().triple;
        let from_moments = current_from_condition(condition_value(s.a, &m), s.norm_constant, s.units.mass);
        let direct = current_at_origin(&s, 0.0).unwrap().j;
        assert!((from_moments - direct).abs() < 1e-10);
    }

    #[test]
    fn current_at_x_reduces_to_origin() {
        let s = gaussian(0.684);
        for t in [0.0, 1.3] {
            let a = current_at_x(&s, 0.0, t).unwrap();
            let b = current_at_origin(&s, t).unwrap().j;
            assert_eq!(a, b);
        }
    }

    #[test]
    fn gaussian_window_and_flux() {
        let s = gaussian(0.684);
        let (t1, t2) = negative_window(&s).unwrap().unwrap();
        assert!(t1 < 0.0 && t2 > 0.0);
        for t in [t1, t2] {
            assert!(current_at_origin(&s, t).unwrap().j.abs() < 1e-8);
        }
        let r = flux(&s, t1, t2).unwrap();
        assert!((r.flux + 0.01573).abs() < 5e-4, "flux {}", r.flux);
        assert!((r.fraction_of_cbm - 0.41).abs() < 0.02);
    }

    #[test]
    fn no_window_outside_backflow_range() {
        assert_eq!(negative_window(&gaussian(2.0)).unwrap(), None);
    }

    #[test]
    fn empty_and_reversed_flux_windows() {
        let s = gaussian(0.684);
        assert_eq!(flux(&s, 1.0, 1.0).unwrap().flux, 0.0);
        assert!(matches!(flux(&s, 1.0, 0.0), Err(BackflowError::InvalidArgument(_))));
    }

    #[test]
    fn total_flux_is_one() {
        let f = total_flux(&gaussian(0.684)).unwrap();
        assert!((f - 1.0).abs() < 1e-3, "total {f}");
    }

    #[test]
    fn probability_flux_duality() {
        let s = gaussian(0.684);
        let (t1, t2) = (-0.4, 0.9);
        let dp = probability_left(&s, t1).unwrap() - probability_left(&s, t2).unwrap();
        let f = flux(&s, t1, t2).unwrap().flux;
        assert!((dp - f).abs() < 1e-5, "{dp} vs {f}");
    }

    #[test]
    fn bisection_finds_root() {
        let r = bisect_root(|x| Ok(x * x - 2.0), 0.0, 2.0, 1e-12).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-11);
        assert!(bisect_root(|x| Ok(x * x + 1.0), 0.0, 2.0, 1e-12).is_err());
    }

    #[test]
    fn galilean_translation() {
        let s = gaussian(0.684);
        let moved = s.translated(1.5);
        for (x, t) in [(0.0, 0.0), (1.0, 0.5), (2.5, -1.0), (-0.7, 2.0), (3.0, 4.0)] {
            let a = current_at_x(&moved, x, t).unwrap();
            let b = current_at_x(&s, x - 1.5, t).unwrap();
            assert!((a - b).abs() < 1e-6, "x={x} t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn sampled_probability_matches_flux() {
        let b = crate::fluxspec::bracken_melloy_bound(128, 1.0, (-0.5, 0.5), &UnitsContext::default()).unwrap();
        let p1 = probability_left(&b.state, -0.5).unwrap();
        let p2 = probability_left(&b.state, 0.5).unwrap();
        let f = flux(&b.state, -0.5, 0.5).unwrap().flux;
        assert!((p1 - p2 - f).abs() < 1e-6, "{} vs {f}", p1 - p2);
        assert!((probability_left(&b.state, 0.0).unwrap() - 0.5).abs() < 1e-12);
    }
}
