//! Regularized current operator on positive momenta.
//!
//! Replacing `δ(x̂)` by `|f_σ⟩⟨f_σ|/σ` gives
//! `Ĵ_reg = (1/2mσ)(p̂|f⟩⟨f| + |f⟩⟨f|p̂)`, which has rank two with eigenvalues
//! `λ± = (±⟨p̂²⟩^{1/2} + ⟨p̂⟩)/(2mσ)` and eigenstates `(⟨p̂²⟩^{1/2} ± p̂)|f⟩`.
//!
//! For a family state `ψ = N(a − p)f` and a regulator `g`,
//! `⟨ψ|Ĵ_reg(g)|ψ⟩ = (N²/mσ) Re[(a*⟨f|p̂|g⟩ − ⟨f|p̂²|g⟩)(a⟨g|f⟩ − ⟨g|p̂|f⟩)]`.
//! With the Gaussian regulator the brackets `σ^{−1/2}⟨g|p̂ⁿ|f⟩` tend to the
//! moments `f_n` as `σ → 0`, so the expectation itself tends to
//! `N² c(a)/(2m)`, the current at the origin at `t = 0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::criterion::{condition_value, decide, quadratic_form, ZERO_THRESHOLD};
use crate::error::{invalid, BackflowError, Result};
use crate::fluxspec::HermitianOperator;
use crate::linalg::eigenvalues;
use crate::quadrature::{adaptive, HalfLineGrid, Tolerance};
use crate::states::{check_estimate, MomentTriple, MomentumProfile, MomentumState, PolyGaussianTerm, UnitsContext};

/// `α²` of the Gaussian regulator; with it the profile has unit norm on `p > 0`.
pub const GAUSSIAN_ALPHA_SQ: f64 = 32.0 * PI;

#[derive(Debug, Clone, PartialEq)]
pub struct Regulator {
    pub sigma: f64,
    pub profile: MomentumProfile,
    pub alpha_effective: f64,
    pub units: UnitsContext,
}

fn tol() -> Tolerance {
    Tolerance::new(1e-300, 1e-13)
}

/// `∫₀^∞ conj(a(p)) pⁿ b(p) dp` over the union of both profiles' split points.
pub fn bracket(a: &MomentumProfile, n: i32, b: &MomentumProfile) -> Result<Complex64> {
    if a.is_sampled() || b.is_sampled() {
        let (grid_profile, other, conj_grid) = if a.is_sampled() { (a, b, true) } else { (b, a, false) };
        let est = grid_profile.integrate(
            |p, v| {
                let w = other.eval(p);
                let (x, y) = if conj_grid { (v, w) } else { (w, v) };
                x.conj() * y * p.powi(n)
            },
            tol(),
        );
        return Ok(est.value);
    }
    let end = match (a.support_end(), b.support_end()) {
        (Some(x), Some(y)) => x.min(y),
        (Some(x), None) | (None, Some(x)) => x,
        (None, None) => a.effective_cutoff().max(b.effective_cutoff()),
    };
    let mut pts = vec![0.0, end];
    for s in [a.momentum_scale(), b.momentum_scale()] {
        let mut x = 0.25 * s;
        while x < end {
            pts.push(x);
            x *= 2.0;
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    // Orthogonal pairs give exact zeros; scale the absolute tolerance by ∫|a b pⁿ|.
    let mag = adaptive(|p| Complex64::from((a.eval(p) * b.eval(p)).norm() * p.powi(n)), &pts, Tolerance::new(1e-300, 1e-6));
    let tol = Tolerance::new(1e-14 * mag.value.re.max(f64::MIN_POSITIVE), 1e-13);
    let est = adaptive(|p| a.eval(p).conj() * b.eval(p) * p.powi(n), &pts, tol);
    check_estimate(&est, "regulator bracket")?;
    Ok(est.value)
}

impl Regulator {
    /// Wrap a profile as a regulator, rescaling it to unit norm.
    pub fn new(sigma: f64, profile: MomentumProfile, units: UnitsContext) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return invalid("sigma must be positive");
        }
        units.validate()?;
        profile.validate()?;
        let n2 = profile.norm_squared()?;
        if !(n2 > 0.0) {
            return Err(BackflowError::DegenerateState("regulator profile has zero norm".into()));
        }
        let scale = n2.sqrt().recip();
        let profile = scale_profile(profile, scale)?;
        Ok(Self {
            sigma,
            profile,
            alpha_effective: GAUSSIAN_ALPHA_SQ.sqrt(),
            units,
        })
    }

    /// `⟨p̂ⁿ⟩_f`.
    pub fn moment(&self, n: i32) -> Result<f64> {
        Ok(bracket(&self.profile, n, &self.profile)?.re)
    }
}

fn scale_profile(profile: MomentumProfile, s: f64) -> Result<MomentumProfile> {
    Ok(match profile {
        MomentumProfile::GridSampled { grid, values } => MomentumProfile::GridSampled {
            grid,
            values: values.into_iter().map(|v| v * s).collect(),
        },
        MomentumProfile::PolyGaussian { terms } => MomentumProfile::PolyGaussian {
            terms: terms.into_iter().map(|t| PolyGaussianTerm { coeff: t.coeff * s, ..t }).collect(),
        },
        MomentumProfile::PolyExponential { terms } => MomentumProfile::PolyExponential {
            terms: terms
                .into_iter()
                .map(|t| crate::states::PolyExponentialTerm { coeff: t.coeff * s, ..t })
                .collect(),
        },
        MomentumProfile::TruncatedPolynomial { cutoff, coeffs } => MomentumProfile::TruncatedPolynomial {
            cutoff,
            coeffs: coeffs.into_iter().map(|c| c * s).collect(),
        },
        MomentumProfile::GaussianF { gamma0 } => MomentumProfile::PolyGaussian {
            terms: vec![PolyGaussianTerm {
                coeff: s.into(),
                power: 0,
                gamma: gamma0,
                center: 0.0,
            }],
        },
        other => {
            return Err(BackflowError::Unsupported(format!(
                "cannot rescale a {} profile; use a poly-gaussian or sampled form",
                serde_json::to_value(&other)
                    .ok()
                    .and_then(|v| v.get("kind").and_then(|k| k.as_str()).map(str::to_owned))
                    .unwrap_or_default()
            )))
        }
    })
}

/// `f_σ(p) = √(σ/2πħ) exp(−σ²p²/α²ħ²)` on `p > 0` with `α² = 32π`.
pub fn gaussian_regulator(sigma: f64, units: &UnitsContext) -> Result<Regulator> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return invalid("sigma must be positive");
    }
    units.validate()?;
    let alpha = GAUSSIAN_ALPHA_SQ.sqrt();
    let profile = MomentumProfile::PolyGaussian {
        terms: vec![PolyGaussianTerm {
            coeff: (sigma / (2.0 * PI * units.hbar)).sqrt().into(),
            power: 0,
            gamma: sigma / (alpha * units.hbar),
            center: 0.0,
        }],
    };
    // The half-line norm is α/(4√(2π)); renormalize numerically and report the
    // α that the closed form would need for exact unit norm.
    let n2 = profile.norm_squared()?;
    let alpha_effective = alpha / n2.sqrt();
    Ok(Regulator {
        sigma,
        profile: scale_profile(profile, n2.sqrt().recip())?,
        alpha_effective,
        units: *units,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegSpectrum {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub mean_p: f64,
    pub rms_p: f64,
    pub phi_plus: MomentumState,
    pub phi_minus: MomentumState,
}

pub fn reg_spectrum(reg: &Regulator) -> Result<RegSpectrum> {
    let mean_p = reg.moment(1)?;
    let rms_p = reg.moment(2)?.sqrt();
    let two_m_sigma = 2.0 * reg.units.mass * reg.sigma;
    // (s + p) f = −(−s − p) f and (s − p) f are family states with a = ∓s.
    let phi_plus = MomentumState::family(reg.profile.clone(), (-rms_p).into(), reg.units)?;
    let phi_minus = MomentumState::family(reg.profile.clone(), rms_p.into(), reg.units)?;
    Ok(RegSpectrum {
        lambda_plus: (rms_p + mean_p) / two_m_sigma,
        lambda_minus: (mean_p - rms_p) / two_m_sigma,
        mean_p,
        rms_p,
        phi_plus,
        phi_minus,
    })
}

/// `⟨p|Ĵ_reg|k⟩ = f(p) f*(k) (p + k)/(2mσ)` on a grid.
pub fn reg_matrix(reg: &Regulator, grid: &HalfLineGrid) -> Result<HermitianOperator> {
    grid.validate()?;
    let pre = 1.0 / (2.0 * reg.units.mass * reg.sigma);
    let f: Vec<Complex64> = grid.nodes.iter().map(|&p| reg.profile.eval(p)).collect();
    let nodes = &grid.nodes;
    Ok(HermitianOperator::from_indexed(grid, |i, j| {
        f[i] * f[j].conj() * ((nodes[i] + nodes[j]) * pre)
    }))
}

/// Eigenvalues of the discretized `Ĵ_reg` split into the two nonzero ones and
/// the count below `1e−10·‖M‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegMatrixSpectrum {
    pub nonzero: Vec<f64>,
    pub zero_space_dim: usize,
    pub norm: f64,
}

pub fn reg_matrix_spectrum(reg: &Regulator, grid: &HalfLineGrid) -> Result<RegMatrixSpectrum> {
    let op = reg_matrix(reg, grid)?;
    let norm = op.matrix.frobenius_norm();
    let eig = eigenvalues(&op.matrix)?;
    let nonzero: Vec<f64> = eig.iter().cloned().filter(|l| l.abs() > 1e-10 * norm).collect();
    Ok(RegMatrixSpectrum {
        zero_space_dim: eig.len() - nonzero.len(),
        nonzero,
        norm,
    })
}

/// `⟨ψ|Ĵ_reg(g)|ψ⟩ = (1/mσ) Re(⟨ψ|p̂|g⟩⟨g|ψ⟩)` for a unit-norm regulator `g`.
pub fn jreg_expectation(psi: &MomentumState, g: &MomentumProfile, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return invalid("sigma must be positive");
    }
    let psi_p = psi_as_profile(psi)?;
    let pg = bracket(&psi_p, 1, g)?;
    let gp = bracket(g, 0, &psi_p)?;
    Ok((pg * gp).re / (psi.units.mass * sigma))
}

/// The negativity factor `Re[(a*⟨f|p̂|g⟩ − ⟨f|p̂²|g⟩)(a⟨g|f⟩ − ⟨g|p̂|f⟩)]`.
pub fn jreg_condition(a: Complex64, f: &MomentumProfile, g: &MomentumProfile) -> Result<f64> {
    let b = mixed_brackets(f, g)?;
    Ok(0.5 * condition_value(a, &b))
}

/// `(⟨g|f⟩, ⟨g|p̂|f⟩, ⟨g|p̂²|f⟩)` as a moment triple.
pub fn mixed_brackets(f: &MomentumProfile, g: &MomentumProfile) -> Result<MomentTriple> {
    Ok(MomentTriple::new(bracket(g, 0, f)?, bracket(g, 1, f)?, bracket(g, 2, f)?))
}

fn psi_as_profile(psi: &MomentumState) -> Result<MomentumProfile> {
    // Multiply out N (a − p) f e^{−ipx₀/ħ} for the closed forms used as fiducials.
    if psi.offset != 0.0 {
        return Err(BackflowError::Unsupported("translated states in regulator brackets".into()));
    }
    let n = psi.norm_constant;
    let a = psi.a;
    let fam = psi.family_factor;
    let lift = |terms: Vec<PolyGaussianTerm>| -> MomentumProfile {
        let mut out = Vec::new();
        for t in terms {
            if fam {
                out.push(PolyGaussianTerm { coeff: t.coeff * a * n, ..t });
                out.push(PolyGaussianTerm {
                    coeff: -t.coeff * n,
                    power: t.power + 1,
                    ..t
                });
            } else {
                out.push(PolyGaussianTerm { coeff: t.coeff * n, ..t });
            }
        }
        MomentumProfile::PolyGaussian { terms: out }
    };
    match &psi.profile {
        MomentumProfile::GaussianF { gamma0 } => Ok(lift(vec![PolyGaussianTerm {
            coeff: 1.0.into(),
            power: 0,
            gamma: *gamma0,
            center: 0.0,
        }])),
        MomentumProfile::PolyGaussian { terms } => Ok(lift(terms.clone())),
        MomentumProfile::GridSampled { grid, values } => Ok(MomentumProfile::GridSampled {
            grid: grid.clone(),
            values: grid
                .nodes
                .iter()
                .zip(values)
                .map(|(&p, &v)| psi.shape(p, v) * n)
                .collect(),
        }),
        _ => Err(BackflowError::Unsupported(
            "regulator brackets support Gaussian-type and sampled fiducials".into(),
        )),
    }
}

/// How `a` evolves along the limit procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ARule {
    /// Keep the initial eigen-value `a = ⟨p̂²⟩_f^{1/2}`.
    Fixed,
    /// `a = conj(B)/A` from the mixed brackets whenever `A > 0`.
    Tracked,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub step: usize,
    pub sigma: f64,
    pub a: Complex64,
    /// `⟨ψ_a|Ĵ_reg(g_s)|ψ_a⟩`.
    pub expectation: f64,
    /// `(N²/m) Re[(a* b̄₁ − b̄₂)(a b₀ − b₁)]` with `b_n = σ^{−1/2}⟨g_s|p̂ⁿ|f⟩`.
    pub rescaled_expectation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitTrace {
    pub rows: Vec<LimitRow>,
    /// `σ^{−1/2}⟨g|p̂ⁿ|f⟩` at the final step.
    pub final_brackets: MomentTriple,
    /// True when no family constant makes the limiting current negative, so the
    /// tracked update has nothing to follow.
    pub degenerate: bool,
}

impl LimitTrace {
    pub fn last(&self) -> &LimitRow {
        self.rows.last().expect("trace has at least one row")
    }
}

/// Interpolate from `g₀ = f` to `g_s/σ_s^{1/2} → |x = 0⟩` through Gaussian
/// regulators with `σ_s = σ₀ 2^{−s}`, where `σ₀ = αħ/(momentum scale of f)`.
pub fn limit_procedure(f: &MomentumProfile, steps: usize, rule: ARule, units: &UnitsContext) -> Result<LimitTrace> {
    if steps == 0 {
        return invalid("limit procedure needs at least one step");
    }
    units.validate()?;
    let fiducial = Regulator::new(1.0, f.clone(), *units)?.profile;
    let alpha = GAUSSIAN_ALPHA_SQ.sqrt();
    let sigma0 = match f {
        MomentumProfile::GaussianF { gamma0 } => alpha * units.hbar * gamma0,
        other => alpha * units.hbar / other.momentum_scale(),
    };
    let f_rms = bracket(&fiducial, 2, &fiducial)?.re.sqrt();
    let mut a = Complex64::new(f_rms, 0.0);
    let mut rows = Vec::with_capacity(steps);
    let mut last_b = MomentTriple::real(0.0, 0.0, 0.0);
    for s in 0..steps {
        let sigma = sigma0 * 0.5f64.powi(s as i32);
        let g = if s == 0 {
            fiducial.clone()
        } else {
            gaussian_regulator(sigma, units)?.profile
        };
        let b = mixed_brackets(&fiducial, &g)?.scaled(sigma.sqrt().recip());
        if s > 0 && rule == ARule::Tracked {
            let q = quadratic_form(&b);
            if q.a > ZERO_THRESHOLD * b.max_norm().powi(2) {
                a = q.b.conj() / q.a;
            }
        }
        let psi = MomentumState::family(fiducial.clone(), a, *units)?;
        let expectation = jreg_expectation(&psi, &g, sigma)?;
        let n2 = psi.norm_constant * psi.norm_constant;
        let rescaled_expectation = n2 / units.mass * 0.5 * condition_value(a, &b);
        rows.push(LimitRow {
            step: s,
            sigma,
            a,
            expectation,
            rescaled_expectation,
        });
        last_b = b;
    }
    let degenerate = !decide(&last_b).is_backflow;
    Ok(LimitTrace {
        rows,
        final_brackets: last_b,
        degenerate,
    })
}
