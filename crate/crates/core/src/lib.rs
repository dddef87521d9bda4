//! Numerics for quantum backflow of free particles on a line.

// NaN must fail validity checks, so they are written as `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod criterion;
pub mod dynamics;
pub mod error;
pub mod fluxspec;
pub mod library_states;
pub mod linalg;
pub mod quadrature;
pub mod regcur;
pub mod states;

pub use criterion::{condition_value, decide, optimal_a, quadratic_form, BackflowVerdict, QuadraticForm};
pub use dynamics::{CurrentSample, FluxReport, C_BM};
pub use error::{BackflowError, Result};
pub use fluxspec::{bracken_melloy_bound, BmBound, BmSummary, HermitianOperator};
pub use library_states::{catalog, lookup, random_family_state, CatalogEntry};
pub use linalg::{HermitianMatrix, SpectrumResult};
pub use num_complex::Complex64;
pub use quadrature::{build_grid, GridScheme, HalfLineGrid, Tolerance};
pub use regcur::{limit_procedure, ARule, LimitRow, LimitTrace, Regulator};
pub use states::{moments, normalize, MomentTriple, MomentumProfile, MomentumState, UnitsContext};
