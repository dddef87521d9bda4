//! Nyström discretization of the flux operator restricted to positive momenta.
//!
//! In momentum space
//!
//! ```text
//! ⟨p|F̂(t₁,t₂)|k⟩ = (p+k)/(4πmħ) ∫_{t₁}^{t₂} e^{iωt} dt,   ω = (p² − k²)/(2mħ)
//!               = (p+k)/(4πmħ) e^{iωt₁} Δ E(ωΔ),       E(θ) = (e^{iθ} − 1)/(iθ)
//! ```
//!
//! with `Δ = t₂ − t₁`. On a grid with weights `wᵢ` the matrix
//! `Mᵢⱼ = √wᵢ √wⱼ K(pᵢ, pⱼ)` has the operator's spectrum in the limit, and a
//! state maps to the vector `xᵢ = √wᵢ φ(pᵢ)`.
//!
//! Shifting the window is a diagonal unitary and rescaling it is a change of
//! momentum scale, so the lowest eigenvalue is solved once in the variable
//! `q = p/P`, `P = √(4mħ/Δ)`, where the kernel is `sin(q² − q'²)/(π(q − q'))`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{eigh, lowest_eigenpair, HermitianMatrix, SpectrumResult};
use crate::quadrature::{build_grid, composite_gauss, GridScheme, HalfLineGrid};
use crate::states::{MomentumProfile, MomentumState, UnitsContext};

/// Dense Hermitian matrix on a half-line grid, symmetrized by `√wᵢ √wⱼ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    pub matrix: HermitianMatrix,
    pub grid: HalfLineGrid,
    pub sqrt_weights: Vec<f64>,
}

impl HermitianOperator {
    pub fn new<F>(grid: &HalfLineGrid, kernel: F) -> Self
    where
        F: Fn(f64, f64) -> Complex64 + Sync,
    {
        let nodes = &grid.nodes;
        Self::from_indexed(grid, |i, j| kernel(nodes[i], nodes[j]))
    }

    /// Like [`new`](Self::new) with the kernel given on node indices.
    pub fn from_indexed<F>(grid: &HalfLineGrid, kernel: F) -> Self
    where
        F: Fn(usize, usize) -> Complex64 + Sync,
    {
        let sw: Vec<f64> = grid.weights.iter().map(|w| w.sqrt()).collect();
        let matrix = HermitianMatrix::from_lower(grid.len(), |i, j| kernel(i, j) * (sw[i] * sw[j]));
        Self {
            matrix,
            grid: grid.clone(),
            sqrt_weights: sw,
        }
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    /// `xᵢ = √wᵢ φ(pᵢ)`.
    pub fn embed(&self, state: &MomentumState) -> Vec<Complex64> {
        self.grid
            .nodes
            .iter()
            .zip(&self.sqrt_weights)
            .map(|(&p, &sw)| state.eval(p) * sw)
            .collect()
    }

    /// Inverse of [`embed`](Self::embed): grid values `φ(pᵢ) = xᵢ/√wᵢ`.
    pub fn grid_values(&self, x: &[Complex64]) -> Vec<Complex64> {
        x.iter().zip(&self.sqrt_weights).map(|(xi, sw)| xi / sw).collect()
    }

    /// `⟨φ|Ô|φ⟩` on the grid.
    pub fn expectation(&self, state: &MomentumState) -> f64 {
        self.matrix.expectation(&self.embed(state))
    }
}

/// `(e^{iθ} − 1)/(iθ)`, with a Taylor branch near zero.
pub fn phase_average(theta: f64) -> Complex64 {
    if theta.abs() < 1e-6 {
        Complex64::new(1.0 - theta * theta / 6.0, theta / 2.0)
    } else {
        (Complex64::new(0.0, theta).exp() - 1.0) / Complex64::new(0.0, theta)
    }
}

/// Flux-operator kernel `⟨p|F̂(t₁,t₂)|k⟩`.
pub fn flux_kernel(p: f64, k: f64, t1: f64, t2: f64, units: &UnitsContext) -> Complex64 {
    let mh = units.mass * units.hbar;
    let delta = t2 - t1;
    let omega = (p * p - k * k) / (2.0 * mh);
    let pre = (p + k) / (4.0 * PI * mh);
    Complex64::from_polar(pre * delta, omega * t1) * phase_average(omega * delta)
}

pub fn flux_matrix(grid: &HalfLineGrid, t1: f64, t2: f64, units: &UnitsContext) -> Result<HermitianOperator> {
    if !(t1.is_finite() && t2.is_finite()) || t1 > t2 {
        return invalid(format!("flux window must satisfy t1 <= t2, got ({t1}, {t2})"));
    }
    grid.validate()?;
    units.validate()?;
    Ok(HermitianOperator::new(grid, |p, k| flux_kernel(p, k, t1, t2, units)))
}

pub fn eigendecompose(op: &HermitianOperator) -> Result<SpectrumResult> {
    eigh(&op.matrix)
}

/// Dimensionless centered-window kernel `sin(q² − q'²)/(π(q − q'))`.
pub fn scaled_kernel(q: f64, r: f64) -> f64 {
    let d = q - r;
    let s = q + r;
    let x = d * s;
    if x.abs() < 1e-6 {
        // sin(ds)/d ≈ s(1 − (ds)²/6)
        s * (1.0 - x * x / 6.0) / PI
    } else {
        x.sin() / (PI * d)
    }
}

/// Largest accepted `pmax_scale` (kernel phase step of 32 rad per cell at `q_max`).
pub const MAX_PMAX_SCALE: f64 = 4.0;

/// Result of one Nyström estimate of the Bracken–Melloy constant.
#[derive(Debug, Clone, PartialEq)]
pub struct BmBound {
    pub n: usize,
    pub pmax_scale: f64,
    /// Dimensionless momentum cutoff `pmax_scale · √n`.
    pub q_max: f64,
    /// `−λ_min`.
    pub estimate: f64,
    pub residual: f64,
    /// The minimizing eigenvector as a grid-sampled state for the requested window.
    pub state: MomentumState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BmSummary {
    pub n: usize,
    pub q_max: f64,
    pub estimate: f64,
    pub residual: f64,
}

impl BmBound {
    pub fn summary(&self) -> BmSummary {
        BmSummary {
            n: self.n,
            q_max: self.q_max,
            estimate: self.estimate,
            residual: self.residual,
        }
    }
}

/// `−λ_min` of the discretized flux operator on a midpoint grid over
/// `q ∈ (0, pmax_scale·√n]`, with the minimizing state mapped back to the
/// window `(t₁, t₂)` in the given units.
pub fn bracken_melloy_bound(n: usize, pmax_scale: f64, window: (f64, f64), units: &UnitsContext) -> Result<BmBound> {
    if n < 64 {
        return invalid(format!("n must be at least 64, got {n}"));
    }
    if !(pmax_scale > 0.0 && pmax_scale.is_finite()) {
        return invalid("pmax_scale must be positive");
    }
    // Near q_max the kernel phase advances by 2·pmax_scale² per cell.
    if pmax_scale > MAX_PMAX_SCALE {
        return invalid(format!(
            "pmax_scale {pmax_scale} exceeds {MAX_PMAX_SCALE}; the kernel is not resolved on the grid"
        ));
    }
    let (t1, t2) = window;
    if !(t1.is_finite() && t2.is_finite() && t2 > t1) {
        return invalid(format!("window must satisfy t1 < t2, got ({t1}, {t2})"));
    }
    units.validate()?;
    let q_max = pmax_scale * (n as f64).sqrt();
    let qgrid = build_grid(n, q_max, GridScheme::TruncatedUniform)?;
    let op = HermitianOperator::new(&qgrid, |q, r| scaled_kernel(q, r).into());
    let pair = lowest_eigenpair(&op.matrix)?;

    let mh = units.mass * units.hbar;
    let big_p = (4.0 * mh / (t2 - t1)).sqrt();
    let tc = 0.5 * (t1 + t2);
    let values_q = op.grid_values(&pair.vector);
    let nodes: Vec<f64> = qgrid.nodes.iter().map(|q| q * big_p).collect();
    let weights: Vec<f64> = qgrid.weights.iter().map(|w| w * big_p).collect();
    let values: Vec<Complex64> = values_q
        .iter()
        .zip(&nodes)
        .map(|(v, &p)| v / big_p.sqrt() * Complex64::from_polar(1.0, p * p * tc / (2.0 * mh)))
        .collect();
    let grid = HalfLineGrid::from_parts(nodes, weights, q_max * big_p, GridScheme::TruncatedUniform)?;
    let state = MomentumState::bare(MomentumProfile::GridSampled { grid, values }, *units)?;
    Ok(BmBound {
        n,
        pmax_scale,
        q_max,
        estimate: -pair.value,
        residual: pair.residual,
        state,
    })
}

/// Richardson tableau over a sequence at doubling `n`, assuming error terms in
/// powers `n^{−1/2}, n^{−1}, n^{−3/2}, …`. Returns the last diagonal entry.
pub fn richardson(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return invalid("Richardson extrapolation needs at least one value");
    }
    let mut row = values.to_vec();
    for j in 1..values.len() {
        let factor = 2f64.powf(0.5 * j as f64) - 1.0;
        row = row.windows(2).map(|w| w[1] + (w[1] - w[0]) / factor).collect();
    }
    Ok(row[0])
}

/// Shift of the estimate when `q_max` is doubled at fixed `n`.
pub fn pmax_doubling_shift(n: usize, pmax_scale: f64) -> Result<f64> {
    let units = UnitsContext::default();
    let a = bracken_melloy_bound(n, pmax_scale, (0.0, 1.0), &units)?.estimate;
    let b = bracken_melloy_bound(n, 2.0 * pmax_scale, (0.0, 1.0), &units)?.estimate;
    Ok((b - a).abs())
}

/// Gaussian-smeared current `∫ J(x,0) |g(x)|² dx` for `|g|²` a unit-mass
/// Gaussian of standard deviation `σ`, and the lower bound `−ħ/(32πmσ²)`.
///
/// In momentum space the smearing becomes the factor `e^{−σ²(p−k)²/2ħ²}`:
/// `lhs = (1/4πmħ) ∫∫ φ*(k) φ(p) (p + k) e^{−σ²(p−k)²/2ħ²} dp dk`.
pub fn eveson_quadratic_check(state: &MomentumState, sigma: f64) -> Result<(f64, f64)> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return invalid("sigma must be positive");
    }
    let units = state.units;
    let hbar = units.hbar;
    let (nodes, weights) = match &state.profile {
        MomentumProfile::GridSampled { grid, .. } => (grid.nodes.clone(), grid.weights.clone()),
        profile => {
            let end = profile.support_end().unwrap_or_else(|| profile.effective_cutoff());
            let width = (0.125 * profile.momentum_scale()).min(0.5 * hbar / sigma);
            let panels = ((end / width).ceil() as usize).max(8);
            composite_gauss(0.0, end, panels, 16)
        }
    };
    let phi: Vec<Complex64> = nodes.iter().zip(&weights).map(|(&p, &w)| state.eval(p) * w).collect();
    let c = sigma * sigma / (2.0 * hbar * hbar);
    // Kernel below e^{−40} is dropped.
    let reach = (40.0 / c).sqrt();
    let mut total = 0.0;
    for i in 0..nodes.len() {
        let p = nodes[i];
        let lo = nodes.partition_point(|&k| k < p - reach);
        let hi = nodes.partition_point(|&k| k <= p + reach);
        let mut row = Complex64::new(0.0, 0.0);
        for j in lo..hi {
            let d = p - nodes[j];
            row += phi[j].conj() * ((p + nodes[j]) * (-c * d * d).exp());
        }
        total += (phi[i] * row).re;
    }
    let lhs = total / (4.0 * PI * units.mass * hbar);
    let bound = -hbar / (32.0 * PI * units.mass * sigma * sigma);
    Ok((lhs, bound))
}
