//! Built-in named states.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fluxspec::bracken_melloy_bound;
use crate::states::{MomentumProfile, MomentumState, PolyExponentialTerm, PolyGaussianTerm, UnitsContext};

/// `aγ₀` of the most negative flux in the Gaussian family.
pub const GAUSSIAN_OPTIMAL_A: f64 = 0.684;

/// Matrix size used for `penz_numeric` in [`catalog`].
pub const PENZ_DEFAULT_N: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expected {
    pub has_backflow: bool,
    pub notes: String,
}

/// A representation `φ = N (a − p) f(p)` of a state that is not stored in family form.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilySplit {
    pub a: Complex64,
    pub profile: MomentumProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub name: String,
    pub state: MomentumState,
    pub expected: Expected,
    pub split: Option<FamilySplit>,
}

impl CatalogEntry {
    /// The `(a, f)` family form: the stored split, or the state itself when it
    /// already carries the `(a − p)` factor.
    pub fn family_form(&self) -> Option<FamilySplit> {
        if let Some(s) = &self.split {
            return Some(s.clone());
        }
        self.state.family_factor.then(|| FamilySplit {
            a: self.state.a,
            profile: self.state.profile.clone(),
        })
    }

    /// The family form as a normalized state.
    pub fn family_state(&self) -> Option<Result<MomentumState>> {
        self.family_form()
            .map(|s| MomentumState::family(s.profile, s.a, self.state.units))
    }
}

fn expected(has_backflow: bool, notes: &str) -> Expected {
    Expected {
        has_backflow,
        notes: notes.to_owned(),
    }
}

pub fn gaussian_0684() -> Result<CatalogEntry> {
    let state = MomentumState::family(
        MomentumProfile::GaussianF { gamma0: 1.0 },
        GAUSSIAN_OPTIMAL_A.into(),
        UnitsContext::default(),
    )?;
    Ok(CatalogEntry {
        name: "gaussian_0684".into(),
        state,
        expected: expected(true, "flux about -0.01573 over its negative window, 41% of c_bm"),
        split: None,
    })
}

/// `18/√(35K) p (e^{−p/K} − e^{−p/2K}/6)`, split as `a = 0`,
/// `f = −18/√(35K) (e^{−p/K} − e^{−p/2K}/6)`.
pub fn bracken_melloy(k: f64) -> Result<CatalogEntry> {
    if !(k > 0.0 && k.is_finite()) {
        return invalid("K must be positive");
    }
    let c = 18.0 / (35.0 * k).sqrt();
    let split = FamilySplit {
        a: Complex64::new(0.0, 0.0),
        profile: MomentumProfile::PolyExponential {
            terms: vec![
                PolyExponentialTerm {
                    coeff: (-c).into(),
                    power: 0,
                    rate: 1.0 / k,
                },
                PolyExponentialTerm {
                    coeff: (c / 6.0).into(),
                    power: 0,
                    rate: 0.5 / k,
                },
            ],
        },
    };
    Ok(CatalogEntry {
        name: "bracken_melloy".into(),
        state: MomentumState::bare(MomentumProfile::BrackenMelloy { k }, UnitsContext::default())?,
        expected: expected(true, "J(0) < 0; printed prefactor is unit norm"),
        split: Some(split),
    })
}

/// `N (√3 p − p₀)` on `[0, p₀]`, split as `a = p₀/√3`, `f = −√3` on `[0, p₀]`.
pub fn eveson(p0: f64) -> Result<CatalogEntry> {
    if !(p0 > 0.0 && p0.is_finite()) {
        return invalid("p0 must be positive");
    }
    let split = FamilySplit {
        a: (p0 / 3f64.sqrt()).into(),
        profile: MomentumProfile::TruncatedPolynomial {
            cutoff: p0,
            coeffs: vec![-3f64.sqrt()],
        },
    };
    Ok(CatalogEntry {
        name: "eveson".into(),
        state: MomentumState::bare(MomentumProfile::EvesonTruncated { p0 }, UnitsContext::default())?,
        expected: expected(true, "J(0) < 0; N computed numerically"),
        split: Some(split),
    })
}

/// Maximizing eigenvector of the discretized flux operator for the window
/// `(−1/2, 1/2)`, split as `a = 0`, `f = −φ/p` on the grid.
pub fn penz_numeric(n: usize) -> Result<CatalogEntry> {
    let bound = bracken_melloy_bound(n, 1.0, (-0.5, 0.5), &UnitsContext::default())?;
    let state = bound.state;
    let profile = match &state.profile {
        MomentumProfile::GridSampled { grid, values } => MomentumProfile::GridSampled {
            grid: grid.clone(),
            values: values
                .iter()
                .zip(&grid.nodes)
                .map(|(v, &p)| -v * state.norm_constant / p)
                .collect(),
        },
        _ => unreachable!("flux eigenvector is grid sampled"),
    };
    Ok(CatalogEntry {
        name: "penz_numeric".into(),
        expected: expected(
            true,
            &format!("flux-maximizing state at n = {n}, window (-1/2, 1/2), estimate {:.6}", bound.estimate),
        ),
        state,
        split: Some(FamilySplit {
            a: Complex64::new(0.0, 0.0),
            profile,
        }),
    })
}

pub fn catalog() -> Result<Vec<CatalogEntry>> {
    Ok(vec![
        gaussian_0684()?,
        bracken_melloy(1.0)?,
        eveson(1.0)?,
        penz_numeric(PENZ_DEFAULT_N)?,
    ])
}

/// Look up a catalog entry by name. `penz_numeric:<n>` selects the matrix size.
pub fn lookup(name: &str) -> Result<CatalogEntry> {
    match name {
        "gaussian_0684" => gaussian_0684(),
        "bracken_melloy" => bracken_melloy(1.0),
        "eveson" => eveson(1.0),
        "penz_numeric" => penz_numeric(PENZ_DEFAULT_N),
        other => {
            if let Some(n) = other.strip_prefix("penz_numeric:") {
                let n: usize = n
                    .parse()
                    .map_err(|_| crate::BackflowError::InvalidArgument(format!("bad matrix size in {other:?}")))?;
                return penz_numeric(n);
            }
            invalid(format!(
                "unknown catalog state {other:?}; known: gaussian_0684, bracken_melloy, eveson, penz_numeric[:n]"
            ))
        }
    }
}

/// Random smooth family state `N (a − p) f(p)`: `f` is a sum of one to three
/// complex-weighted terms `pᵏ exp(−γ²(p − p_c)²)` with `k ≤ 2`, `γ ∈ [0.5, 2]`,
/// `p_c ∈ [0, 2]`, and `a` is drawn from `[−2, 3] × [−1, 1]`.
pub fn random_family_state<R: Rng + ?Sized>(rng: &mut R) -> Result<MomentumState> {
    let count = rng.gen_range(1..=3);
    let terms = (0..count)
        .map(|_| PolyGaussianTerm {
            coeff: Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            power: rng.gen_range(0..=2),
            gamma: rng.gen_range(0.5..2.0),
            center: rng.gen_range(0.0..2.0),
        })
        .collect();
    let a = Complex64::new(rng.gen_range(-2.0..3.0), rng.gen_range(-1.0..1.0));
    MomentumState::family(MomentumProfile::PolyGaussian { terms }, a, UnitsContext::default())
}
