//! Fixtures shared by the benchmarks.

use backflow_core::{Complex64, MomentumProfile, MomentumState, UnitsContext};

/// `N (0.684 − p) e^{−p²}`, the Gaussian family state near its flux optimum.
pub fn gaussian_state() -> MomentumState {
    MomentumState::family(
        MomentumProfile::GaussianF { gamma0: 1.0 },
        Complex64::new(0.684, 0.0),
        UnitsContext::default(),
    )
    .expect("valid fixture")
}
