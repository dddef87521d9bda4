//! Sign of the current at the origin for family states `N (a − p) f(p)`.
//!
//! With moments `f_n` the current at `t = 0` is `J(0) = N² c(a) / (2m)` where
//!
//! ```text
//! c(a) = 2 Re[(a f0 − f1)(a* f1* − f2*)] = A|a|² − 2 Re(B a) + C
//! A = 2 Re(f0 f1*),  B = f0 f2* + |f1|²,  C = 2 Re(f1 f2*)
//! ```
//!
//! and `|B|² − AC = |f1² − f0 f2|²`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{BackflowError, Result};
use crate::states::MomentTriple;

/// Relative threshold below which a moment is treated as zero.
pub const ZERO_THRESHOLD: f64 = 1e-13;

/// Coefficients of `c(a) = A|a|² − 2 Re(B a) + C` and the discriminant `D = |B|² − AC`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForm {
    pub a: f64,
    pub b: Complex64,
    pub c: f64,
    pub discriminant: f64,
}

impl QuadraticForm {
    pub fn eval(&self, a: Complex64) -> f64 {
        self.a * a.norm_sqr() - 2.0 * (self.b * a).re + self.c
    }
}

pub fn quadratic_form(m: &MomentTriple) -> QuadraticForm {
    let MomentTriple { f0, f1, f2 } = *m;
    let a = 2.0 * (f0 * f1.conj()).re;
    let b = f0 * f2.conj() + f1.norm_sqr();
    let c = 2.0 * (f1 * f2.conj()).re;
    // The factored form avoids cancellation in |B|² − AC.
    let discriminant = (f1 * f1 - f0 * f2).norm_sqr();
    QuadraticForm { a, b, c, discriminant }
}

/// `2 Re[(a f0 − f1)(a* f1* − f2*)]`; negative exactly when the family state
/// with this `a` has negative current at `t = 0`.
pub fn condition_value(a: Complex64, m: &MomentTriple) -> f64 {
    2.0 * ((a * m.f0 - m.f1) * (a.conj() * m.f1.conj() - m.f2.conj())).re
}

/// `J(0)` of a family state from its moments: `N² c(a) / (2m)`.
pub fn current_from_condition(condition: f64, norm_constant: f64, mass: f64) -> f64 {
    norm_constant * norm_constant * condition / (2.0 * mass)
}

/// Outcome of the case analysis on a moment triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackflowVerdict {
    pub is_backflow: bool,
    /// `c(a)` at the reported witness (the optimum when `A > 0`).
    pub condition_value: f64,
    /// The `a` at which `condition_value` was evaluated, if any.
    pub witness_a: Option<Complex64>,
    /// `conj(B)/A`, present iff `A > 0`.
    pub optimal_a: Option<Complex64>,
    /// Direction along which `c(a) → −∞`, present iff `A < 0`.
    pub unbounded_direction: Option<Complex64>,
    /// Real `a` interval with negative current when all moments are real.
    /// For `A < 0` this is the upper of the two components.
    pub real_window: Option<(f64, f64)>,
    pub form: QuadraticForm,
}

impl BackflowVerdict {
    fn none(form: QuadraticForm) -> Self {
        Self {
            is_backflow: false,
            condition_value: 0.0,
            witness_a: None,
            optimal_a: None,
            unbounded_direction: None,
            real_window: None,
            form,
        }
    }
}

fn unit_along(b: Complex64) -> Complex64 {
    let n = b.norm();
    if n > 0.0 {
        b.conj() / n
    } else {
        Complex64::new(1.0, 0.0)
    }
}

/// Case analysis: decide whether some `a` yields backflow and report a witness.
pub fn decide(m: &MomentTriple) -> BackflowVerdict {
    let form = quadratic_form(m);
    let scale = m.max_norm();
    if !(scale > 0.0) || !m.is_finite() {
        return BackflowVerdict::none(form);
    }
    let tiny = ZERO_THRESHOLD * scale;
    let zero0 = m.f0.norm() < tiny;
    let zero1 = m.f1.norm() < tiny;
    let zero2 = m.f2.norm() < tiny;
    let real = m.as_array().iter().all(|z| z.im.abs() < tiny);
    let scale2 = scale * scale;

    // Vanishing current for every a.
    if (zero0 && zero1) || (zero1 && zero2) {
        return BackflowVerdict::none(form);
    }

    if zero1 {
        // c(a) = −2 Re(f0 f2* a)
        let b = m.f0 * m.f2.conj();
        if b.norm() < ZERO_THRESHOLD * scale2 {
            return BackflowVerdict::none(form);
        }
        let w = unit_along(b);
        let real_window = real.then(|| {
            if (m.f0 * m.f2).re > 0.0 {
                (0.0, f64::INFINITY)
            } else {
                (f64::NEG_INFINITY, 0.0)
            }
        });
        return BackflowVerdict {
            is_backflow: true,
            condition_value: condition_value(w, m),
            witness_a: Some(w),
            optimal_a: None,
            unbounded_direction: None,
            real_window,
            form,
        };
    }

    if zero0 {
        // c(a) = −2|f1|² Re a + C: negative iff Re a > Re(f1 f2*)/|f1|².
        let threshold = (m.f1 * m.f2.conj()).re / m.f1.norm_sqr();
        let step = if zero2 { 1.0 } else { (m.f2 / m.f1).norm() };
        let w = Complex64::new(threshold + step, 0.0);
        return BackflowVerdict {
            is_backflow: true,
            condition_value: condition_value(w, m),
            witness_a: Some(w),
            optimal_a: None,
            unbounded_direction: None,
            real_window: real.then_some((threshold, f64::INFINITY)),
            form,
        };
    }

    let roots = real.then(|| {
        let r1 = m.f1.re / m.f0.re;
        let r2 = if zero2 { 0.0 } else { m.f2.re / m.f1.re };
        (r1.min(r2), r1.max(r2))
    });
    let disc_zero = (m.f1 * m.f1 - m.f0 * m.f2).norm() < ZERO_THRESHOLD * scale2;

    if form.a > ZERO_THRESHOLD * scale2 {
        let opt = form.b.conj() / form.a;
        if disc_zero {
            return BackflowVerdict {
                optimal_a: Some(opt),
                witness_a: Some(opt),
                ..BackflowVerdict::none(form)
            };
        }
        return BackflowVerdict {
            is_backflow: true,
            condition_value: -form.discriminant / form.a,
            witness_a: Some(opt),
            optimal_a: Some(opt),
            unbounded_direction: None,
            real_window: roots,
            form,
        };
    }

    // A ≤ 0 (up to noise): c(a) is unbounded below along conj(B)/|B| when
    // A < 0, and linear in a when A = 0. Search outward from the disc radius.
    let mut radius = 10.0 * ((m.f1 / m.f0).norm() + (m.f2 / m.f1).norm() + 1.0);
    let dir = unit_along(form.b);
    let negative_a = form.a < -ZERO_THRESHOLD * scale2;
    if !negative_a && form.b.norm() < ZERO_THRESHOLD * scale2 {
        // c(a) ≈ C for all a.
        return BackflowVerdict {
            is_backflow: form.c < 0.0,
            condition_value: form.c,
            witness_a: (form.c < 0.0).then_some(Complex64::new(0.0, 0.0)),
            ..BackflowVerdict::none(form)
        };
    }
    let mut value = condition_value(dir * radius, m);
    for _ in 0..200 {
        if value < 0.0 {
            break;
        }
        radius *= 2.0;
        value = condition_value(dir * radius, m);
    }
    let real_window = roots.map(|(_, hi)| (hi, f64::INFINITY));
    BackflowVerdict {
        is_backflow: value < 0.0,
        condition_value: value,
        witness_a: Some(dir * radius),
        optimal_a: None,
        unbounded_direction: negative_a.then_some(dir),
        real_window: if negative_a { real_window } else { None },
        form,
    }
}

/// `conj(B)/A`, the `a` giving the most negative current when `A > 0`.
pub fn optimal_a(m: &MomentTriple) -> Result<Complex64> {
    let form = quadratic_form(m);
    if !(form.a > ZERO_THRESHOLD * m.max_norm().powi(2)) {
        return Err(BackflowError::NotApplicable(format!(
            "optimal a requires A > 0 (A = {:e}); use decide() for a witness",
            form.a
        )));
    }
    Ok(form.b.conj() / form.a)
}
