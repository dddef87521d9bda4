//! Momentum-space states on the half-line `p ∈ (0, ∞)`.
//!
//! A [`MomentumState`] is either a bare profile `φ(p) = N f(p)` or a member of
//! the backflow family `φ(p) = N (a − p) f(p)`. Profiles are analytic
//! closed forms or grid samples; every integral over a state goes through
//! [`MomentumProfile::integrate`], which picks adaptive Gauss–Kronrod for
//! closed forms and the grid's own quadrature for sampled profiles.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, BackflowError, Result};
use crate::quadrature::{adaptive, Estimate, HalfLineGrid, Tolerance};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Physical constants carried by a state. Defaults to `ħ = m = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitsContext {
    pub hbar: f64,
    pub mass: f64,
}

impl Default for UnitsContext {
    fn default() -> Self {
        Self { hbar: 1.0, mass: 1.0 }
    }
}

impl UnitsContext {
    pub fn new(hbar: f64, mass: f64) -> Result<Self> {
        let u = Self { hbar, mass };
        u.validate()?;
        Ok(u)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hbar > 0.0 && self.hbar.is_finite()) || !(self.mass > 0.0 && self.mass.is_finite()) {
            return invalid(format!("hbar and mass must be positive, got {self:?}"));
        }
        Ok(())
    }

    /// `(2πħ)^{-1/2}`, the position-eigenstate overlap `⟨x=0|p⟩`.
    pub fn origin_overlap(&self) -> f64 {
        1.0 / (2.0 * PI * self.hbar).sqrt()
    }
}

/// One term `c · pᵏ · exp(−γ²(p − p_c)²)` of a [`MomentumProfile::PolyGaussian`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyGaussianTerm {
    pub coeff: Complex64,
    pub power: u32,
    pub gamma: f64,
    #[serde(default)]
    pub center: f64,
}

/// One term `c · pᵏ · exp(−r p)` of a [`MomentumProfile::PolyExponential`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyExponentialTerm {
    pub coeff: Complex64,
    pub power: u32,
    pub rate: f64,
}

/// The momentum profile `f(p)` of a state. No `θ(p)` is stored: every profile
/// lives on `p ≥ 0` by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum MomentumProfile {
    /// `exp(−γ₀² p²)`
    GaussianF { gamma0: f64 },
    /// `18/√(35K) · p · (e^{−p/K} − e^{−p/2K}/6)`
    BrackenMelloy { k: f64 },
    /// `(√3 p − p₀)` on `[0, p₀]`, zero beyond.
    EvesonTruncated { p0: f64 },
    /// Values on a half-line grid; linear interpolation between nodes, zero
    /// beyond the last node. Integrals use the grid's own weights.
    GridSampled { grid: HalfLineGrid, values: Vec<Complex64> },
    PolyGaussian { terms: Vec<PolyGaussianTerm> },
    PolyExponential { terms: Vec<PolyExponentialTerm> },
    /// `Σ cₖ pᵏ` on `[0, cutoff]`, zero beyond.
    TruncatedPolynomial { cutoff: f64, coeffs: Vec<f64> },
}

fn bm_prefactor(k: f64) -> f64 {
    18.0 / (35.0 * k).sqrt()
}

/// `ln Σ exp(lᵢ)` with the largest real part factored out.
fn log_sum_exp(logs: impl Iterator<Item = Complex64>) -> Complex64 {
    let logs: Vec<Complex64> = logs.collect();
    let m = logs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Complex64::new(f64::NEG_INFINITY, 0.0);
    }
    let sum: Complex64 = logs.iter().map(|l| (l - m).exp()).sum();
    sum.ln() + m
}

fn poly_eval(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(ZERO, |acc, &c| acc * z + c)
}

impl MomentumProfile {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64, what: &str| -> Result<()> {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                invalid(format!("{what} must be positive and finite, got {x}"))
            }
        };
        match self {
            Self::GaussianF { gamma0 } => positive(*gamma0, "gamma0"),
            Self::BrackenMelloy { k } => positive(*k, "K"),
            Self::EvesonTruncated { p0 } => positive(*p0, "p0"),
            Self::GridSampled { grid, values } => {
                grid.validate()?;
                if values.len() != grid.len() {
                    return invalid("grid-sampled profile needs one value per node");
                }
                if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                    return invalid("grid-sampled values must be finite");
                }
                Ok(())
            }
            Self::PolyGaussian { terms } => {
                if terms.is_empty() {
                    return invalid("poly-gaussian profile needs at least one term");
                }
                for t in terms {
                    positive(t.gamma, "gamma")?;
                    if !t.center.is_finite() {
                        return invalid("gaussian center must be finite");
                    }
                }
                Ok(())
            }
            Self::PolyExponential { terms } => {
                if terms.is_empty() {
                    return invalid("poly-exponential profile needs at least one term");
                }
                terms.iter().try_for_each(|t| positive(t.rate, "rate"))
            }
            Self::TruncatedPolynomial { cutoff, coeffs } => {
                positive(*cutoff, "cutoff")?;
                if coeffs.is_empty() {
                    return invalid("truncated polynomial needs coefficients");
                }
                Ok(())
            }
        }
    }

    /// `f(p)`; zero for `p < 0` and outside a finite support.
    pub fn eval(&self, p: f64) -> Complex64 {
        if p < 0.0 {
            return ZERO;
        }
        match self {
            Self::GridSampled { grid, values } => interpolate(grid, values, p),
            _ => {
                if let Some(end) = self.support_end() {
                    if p > end {
                        return ZERO;
                    }
                }
                self.continuation(Complex64::new(p, 0.0)).unwrap_or(ZERO)
            }
        }
    }

    /// Analytic continuation of the (single) analytic piece of the profile, or
    /// `None` for sampled profiles.
    pub fn continuation(&self, z: Complex64) -> Option<Complex64> {
        Some(match self {
            Self::GaussianF { gamma0 } => (-(gamma0 * gamma0) * z * z).exp(),
            Self::BrackenMelloy { k } => {
                bm_prefactor(*k) * z * ((-z / *k).exp() - (-z / (2.0 * k)).exp() / 6.0)
            }
            Self::EvesonTruncated { p0 } => 3f64.sqrt() * z - *p0,
            Self::GridSampled { .. } => return None,
            Self::PolyGaussian { terms } => terms
                .iter()
                .map(|t| {
                    let d = z - t.center;
                    t.coeff * z.powu(t.power) * (-(t.gamma * t.gamma) * d * d).exp()
                })
                .sum(),
            Self::PolyExponential { terms } => terms
                .iter()
                .map(|t| t.coeff * z.powu(t.power) * (-t.rate * z).exp())
                .sum(),
            Self::TruncatedPolynomial { coeffs, .. } => poly_eval(coeffs, z),
        })
    }

    /// `ln f(z)` on some branch, evaluated without forming `f(z)`, so that
    /// `exp(ln f(z) + w)` stays finite where `f(z)` alone would overflow.
    pub fn log_continuation(&self, z: Complex64) -> Option<Complex64> {
        Some(match self {
            Self::GaussianF { gamma0 } => -(gamma0 * gamma0) * z * z,
            Self::PolyGaussian { terms } => log_sum_exp(terms.iter().map(|t| {
                let d = z - t.center;
                t.coeff.ln() + z.ln() * t.power as f64 - t.gamma * t.gamma * d * d
            })),
            Self::PolyExponential { terms } => {
                log_sum_exp(terms.iter().map(|t| t.coeff.ln() + z.ln() * t.power as f64 - t.rate * z))
            }
            Self::GridSampled { .. } => return None,
            _ => self.continuation(z)?.ln(),
        })
    }

    pub fn is_sampled(&self) -> bool {
        matches!(self, Self::GridSampled { .. })
    }

    /// Right end of a compact support, where the profile may jump to zero.
    pub fn support_end(&self) -> Option<f64> {
        match self {
            Self::EvesonTruncated { p0 } => Some(*p0),
            Self::TruncatedPolynomial { cutoff, .. } => Some(*cutoff),
            Self::GridSampled { grid, .. } => Some(grid.p_max()),
            _ => None,
        }
    }

    /// A characteristic momentum of the profile.
    pub fn momentum_scale(&self) -> f64 {
        match self {
            Self::GaussianF { gamma0 } => 1.0 / gamma0,
            Self::BrackenMelloy { k } => 2.0 * k,
            Self::EvesonTruncated { p0 } => *p0,
            Self::TruncatedPolynomial { cutoff, .. } => *cutoff,
            Self::GridSampled { grid, values } => {
                let (num, den) = grid
                    .nodes
                    .iter()
                    .zip(&grid.weights)
                    .zip(values)
                    .fold((0.0, 0.0), |(n, d), ((&p, &w), v)| (n + w * p * p * v.norm_sqr(), d + w * v.norm_sqr()));
                if den > 0.0 {
                    (num / den).sqrt()
                } else {
                    grid.map_scale
                }
            }
            Self::PolyGaussian { terms } => terms
                .iter()
                .map(|t| t.center.abs() + (1.0 + t.power as f64).sqrt() / t.gamma)
                .fold(0.0, f64::max),
            Self::PolyExponential { terms } => terms
                .iter()
                .map(|t| (1.0 + t.power as f64) / t.rate)
                .fold(0.0, f64::max),
        }
    }

    /// Momentum beyond which the profile is negligible (below ~1e-20 relative).
    pub fn effective_cutoff(&self) -> f64 {
        match self {
            Self::GaussianF { gamma0 } => 7.5 / gamma0,
            Self::BrackenMelloy { k } => 120.0 * k,
            Self::EvesonTruncated { p0 } => *p0,
            Self::TruncatedPolynomial { cutoff, .. } => *cutoff,
            Self::GridSampled { grid, .. } => grid.p_max(),
            Self::PolyGaussian { terms } => terms
                .iter()
                .map(|t| t.center.max(0.0) + (7.5 + (t.power as f64).sqrt()) / t.gamma)
                .fold(0.0, f64::max),
            Self::PolyExponential { terms } => terms
                .iter()
                .map(|t| (60.0 + 2.0 * t.power as f64) / t.rate)
                .fold(0.0, f64::max),
        }
    }

    /// Interior split points that help the adaptive integrator find the bulk.
    pub(crate) fn integration_points(&self) -> Vec<f64> {
        let cutoff = self.effective_cutoff();
        if let Some(end) = self.support_end() {
            return vec![0.0, 0.5 * end, end];
        }
        let scale = self.momentum_scale().min(cutoff);
        let mut pts = vec![0.0];
        let mut x = 0.25 * scale;
        while x < cutoff {
            pts.push(x);
            x *= 2.0;
        }
        pts.push(cutoff);
        pts
    }

    /// `∫₀^∞ h(p, f(p)) dp`. Sampled profiles use the grid's weights and
    /// report zero quadrature error.
    pub fn integrate<H>(&self, h: H, tol: Tolerance) -> Estimate
    where
        H: Fn(f64, Complex64) -> Complex64,
    {
        match self {
            Self::GridSampled { grid, values } => {
                let value = grid
                    .nodes
                    .iter()
                    .zip(&grid.weights)
                    .zip(values)
                    .map(|((&p, &w), &v)| h(p, v) * w)
                    .sum();
                Estimate::exact(value)
            }
            _ => {
                let pts = self.integration_points();
                adaptive(|p| h(p, self.eval(p)), &pts, tol)
            }
        }
    }

    /// `∫₀^∞ |f|² dp`.
    pub fn norm_squared(&self) -> Result<f64> {
        let est = self.integrate(|_, f| Complex64::new(f.norm_sqr(), 0.0), Tolerance::new(1e-300, 1e-13));
        check_estimate(&est, "profile norm")?;
        Ok(est.value.re)
    }

    /// Warn when a sampled profile has not decayed by its last node.
    pub fn tail_warning(&self) -> Option<String> {
        if let Self::GridSampled { values, grid } = self {
            let peak = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let last = values.last().map(|v| v.norm()).unwrap_or(0.0);
            if peak > 0.0 && last > 1e-6 * peak {
                return Some(format!(
                    "profile has not decayed at p_max = {:.6e} (|f(p_max)|/max|f| = {:.3e}); moments may not exist",
                    grid.p_max(),
                    last / peak
                ));
            }
        }
        None
    }

    /// Sample a profile on a grid.
    pub fn sample(&self, grid: &HalfLineGrid) -> MomentumProfile {
        MomentumProfile::GridSampled {
            grid: grid.clone(),
            values: grid.nodes.iter().map(|&p| self.eval(p)).collect(),
        }
    }
}

fn interpolate(grid: &HalfLineGrid, values: &[Complex64], p: f64) -> Complex64 {
    let nodes = &grid.nodes;
    let n = nodes.len();
    if p > nodes[n - 1] {
        return ZERO;
    }
    let i = match nodes.binary_search_by(|x| x.total_cmp(&p)) {
        Ok(i) => return values[i],
        Err(0) => 0,
        Err(i) => i - 1,
    };
    let (x0, x1) = (nodes[i], nodes[i + 1]);
    let s = (p - x0) / (x1 - x0);
    values[i] * (1.0 - s) + values[i + 1] * s
}

pub(crate) fn check_estimate(est: &Estimate, context: &str) -> Result<()> {
    if est.converged && est.value.re.is_finite() && est.value.im.is_finite() {
        Ok(())
    } else {
        Err(BackflowError::Accuracy {
            context: context.to_string(),
            estimate: est.error,
            limit: 0.0,
            time: None,
        })
    }
}

/// The three moments `f_n = (2πħ)^{-1/2} ∫₀^∞ pⁿ f(p) dp`, n = 0, 1, 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentTriple {
    pub f0: Complex64,
    pub f1: Complex64,
    pub f2: Complex64,
}

impl MomentTriple {
    pub fn new(f0: Complex64, f1: Complex64, f2: Complex64) -> Self {
        Self { f0, f1, f2 }
    }

    pub fn real(f0: f64, f1: f64, f2: f64) -> Self {
        Self::new(f0.into(), f1.into(), f2.into())
    }

    pub fn as_array(&self) -> [Complex64; 3] {
        [self.f0, self.f1, self.f2]
    }

    pub fn max_norm(&self) -> f64 {
        self.f0.norm().max(self.f1.norm()).max(self.f2.norm())
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.f0 * s, self.f1 * s, self.f2 * s)
    }
}

/// Moments together with any integrability warning raised while computing them.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub triple: MomentTriple,
    pub warning: Option<String>,
}

fn moment_tolerance() -> Tolerance {
    Tolerance::new(1e-300, 1e-13)
}

/// Moments of a profile.
pub fn moments(profile: &MomentumProfile, units: &UnitsContext) -> Result<Moments> {
    profile.validate()?;
    units.validate()?;
    let pre = units.origin_overlap();
    let mut out = [ZERO; 3];
    for (n, slot) in out.iter_mut().enumerate() {
        let est = profile.integrate(|p, f| f * p.powi(n as i32), moment_tolerance());
        check_estimate(&est, "moment quadrature")?;
        *slot = est.value * pre;
    }
    Ok(Moments {
        triple: MomentTriple::new(out[0], out[1], out[2]),
        warning: profile.tail_warning(),
    })
}

/// A positive-momentum wavefunction `φ(p) = N (a − p)^{[family]} f(p) e^{−i p x₀/ħ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub a: Complex64,
    pub profile: MomentumProfile,
    pub norm_constant: f64,
    pub units: UnitsContext,
    pub family_factor: bool,
    /// Position translation `x₀`; zero for every built-in state.
    pub offset: f64,
}

impl MomentumState {
    /// Normalized backflow-family state `N (a − p) f(p)`.
    pub fn family(profile: MomentumProfile, a: Complex64, units: UnitsContext) -> Result<Self> {
        normalize(&Self {
            a,
            profile,
            norm_constant: 1.0,
            units,
            family_factor: true,
            offset: 0.0,
        })
    }

    /// Normalized bare-profile state `N f(p)`.
    pub fn bare(profile: MomentumProfile, units: UnitsContext) -> Result<Self> {
        normalize(&Self {
            a: ZERO,
            profile,
            norm_constant: 1.0,
            units,
            family_factor: false,
            offset: 0.0,
        })
    }

    /// Same state with `a` replaced (renormalized).
    pub fn with_a(&self, a: Complex64) -> Result<Self> {
        normalize(&Self { a, ..self.clone() })
    }

    /// Translate the state in position by `x0`: `φ(p) → φ(p) e^{−i p x₀/ħ}`.
    pub fn translated(&self, x0: f64) -> Self {
        Self {
            offset: self.offset + x0,
            ..self.clone()
        }
    }

    /// The effective family profile `f(p) e^{−i p x₀/ħ}` at complex argument.
    fn phase(&self, z: Complex64) -> Complex64 {
        if self.offset == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            (-Complex64::i() * z * (self.offset / self.units.hbar)).exp()
        }
    }

    /// `φ(p) / N`.
    pub fn shape(&self, p: f64, f: Complex64) -> Complex64 {
        let z = Complex64::new(p, 0.0);
        let base = if self.family_factor { (self.a - p) * f } else { f };
        base * self.phase(z)
    }

    pub fn eval(&self, p: f64) -> Complex64 {
        if p < 0.0 {
            return ZERO;
        }
        self.shape(p, self.profile.eval(p)) * self.norm_constant
    }

    /// Analytic continuation `φ(z)` of the state's analytic piece.
    pub fn continuation(&self, z: Complex64) -> Option<Complex64> {
        let f = self.profile.continuation(z)?;
        let base = if self.family_factor { (self.a - z) * f } else { f };
        Some(base * self.phase(z) * self.norm_constant)
    }

    /// `ln φ(z)` on some branch; see [`MomentumProfile::log_continuation`].
    pub fn log_continuation(&self, z: Complex64) -> Option<Complex64> {
        let mut l = self.profile.log_continuation(z)? + self.norm_constant.ln();
        if self.family_factor {
            l += (self.a - z).ln();
        }
        if self.offset != 0.0 {
            l -= Complex64::i() * z * (self.offset / self.units.hbar);
        }
        Some(l)
    }

    /// `∫₀^∞ h(p, φ(p)) dp`.
    pub fn integrate<H>(&self, h: H, tol: Tolerance) -> Estimate
    where
        H: Fn(f64, Complex64) -> Complex64,
    {
        let n = self.norm_constant;
        self.profile.integrate(|p, f| h(p, self.shape(p, f) * n), tol)
    }

    /// `∫ pᵏ |φ|² dp`.
    pub fn momentum_moment(&self, k: i32) -> Result<f64> {
        let est = self.integrate(|p, phi| Complex64::new(p.powi(k) * phi.norm_sqr(), 0.0), moment_tolerance());
        check_estimate(&est, "momentum expectation")?;
        Ok(est.value.re)
    }

    pub fn norm_squared(&self) -> Result<f64> {
        self.momentum_moment(0)
    }

    /// Moments of the state's family profile `f e^{−ipx₀/ħ}` (no `N`).
    pub fn moments(&self) -> Result<Moments> {
        let pre = self.units.origin_overlap();
        let mut out = [ZERO; 3];
        for (n, slot) in out.iter_mut().enumerate() {
            let est = self.profile.integrate(
                |p, f| f * self.phase(Complex64::new(p, 0.0)) * p.powi(n as i32),
                moment_tolerance(),
            );
            check_estimate(&est, "moment quadrature")?;
            *slot = est.value * pre;
        }
        Ok(Moments {
            triple: MomentTriple::new(out[0], out[1], out[2]),
            warning: self.profile.tail_warning(),
        })
    }

    /// Moments of `g = φ / (a_split − p)`, so that `φ = (a_split − p) g` is a
    /// family representation of this state with unit prefactor. `a_split`
    /// must stay away from the positive real axis.
    pub fn split_moments(&self, a_split: Complex64) -> Result<MomentTriple> {
        if a_split.im.abs() < 1e-12 * a_split.norm().max(1.0) && a_split.re > 0.0 {
            return invalid("split constant must not lie on the positive real axis");
        }
        let pre = self.units.origin_overlap();
        let mut out = [ZERO; 3];
        for (n, slot) in out.iter_mut().enumerate() {
            let est = self.integrate(|p, phi| phi * p.powi(n as i32) / (a_split - p), moment_tolerance());
            check_estimate(&est, "split moment quadrature")?;
            *slot = est.value * pre;
        }
        Ok(MomentTriple::new(out[0], out[1], out[2]))
    }

    /// Natural time scale: `2mħγ₀²` for the Gaussian family, `2mħ/⟨p²⟩` otherwise.
    pub fn timescale(&self) -> Result<f64> {
        let two_m_hbar = 2.0 * self.units.mass * self.units.hbar;
        if let MomentumProfile::GaussianF { gamma0 } = self.profile {
            return Ok(two_m_hbar * gamma0 * gamma0);
        }
        Ok(two_m_hbar / self.momentum_moment(2)?)
    }

    pub fn to_document(&self) -> StateDocument {
        StateDocument {
            profile: self.profile.clone(),
            a: self.a,
            family_factor: self.family_factor,
            units: self.units,
            offset: self.offset,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("state document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: StateDocument = serde_json::from_str(text).map_err(|e| BackflowError::Parse(e.to_string()))?;
        doc.into_state()
    }
}

/// Normalize a state to unit `L²` norm on the half-line.
pub fn normalize(state: &MomentumState) -> Result<MomentumState> {
    state.profile.validate()?;
    state.units.validate()?;
    if !state.a.re.is_finite() || !state.a.im.is_finite() {
        return invalid("family constant a must be finite");
    }
    let raw = MomentumState {
        norm_constant: 1.0,
        ..state.clone()
    };
    let norm2 = raw.norm_squared()?;
    if !(norm2 > 0.0) || !norm2.is_finite() {
        return Err(BackflowError::DegenerateState(format!(
            "profile has zero or non-finite norm ({norm2})"
        )));
    }
    Ok(MomentumState {
        norm_constant: norm2.sqrt().recip(),
        ..raw
    })
}

/// Serialized state: `{profile:{kind,params}, a:[re,im], family_factor, units:{hbar,mass}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDocument {
    pub profile: MomentumProfile,
    #[serde(default)]
    pub a: Complex64,
    #[serde(default)]
    pub family_factor: bool,
    #[serde(default)]
    pub units: UnitsContext,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub offset: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl StateDocument {
    pub fn into_state(self) -> Result<MomentumState> {
        normalize(&MomentumState {
            a: self.a,
            profile: self.profile,
            norm_constant: 1.0,
            units: self.units,
            family_factor: self.family_factor,
            offset: self.offset,
        })
    }
}
