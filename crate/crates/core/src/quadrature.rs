//! Quadrature primitives: Gauss–Legendre rules, globally adaptive
//! Gauss–Kronrod integration of complex integrands, and half-line grids.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`,
/// nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss–Legendre rule with `panels` equal panels of `order` points on `[a, b]`.
pub fn composite_gauss(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for k in 0..panels {
        let lo = a + k as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(lo + 0.5 * h * (xi + 1.0));
            weights.push(0.5 * h * wi);
        }
    }
    (nodes, weights)
}

// 21-point Kronrod extension of the 10-point Gauss rule (QUADPACK qk21).
#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_600_525_842,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

/// Absolute/relative accuracy target for adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-14,
            rel: 1e-12,
            max_intervals: 20_000,
        }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Self {
            abs,
            rel,
            ..Self::default()
        }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value)
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: Complex64,
    pub error: f64,
    pub evaluations: usize,
    pub converged: bool,
}

impl Estimate {
    pub fn exact(value: Complex64) -> Self {
        Self {
            value,
            error: 0.0,
            evaluations: 0,
            converged: true,
        }
    }
}

fn kronrod21<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[10];
    let mut gauss = Complex64::new(0.0, 0.0);
    for j in 0..10 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += s * WGK[j];
        if j % 2 == 1 {
            gauss += s * WG[j / 2];
        }
    }
    let kron = kron * h;
    let gauss = gauss * h;
    (kron, (kron - gauss).norm())
}

struct Segment {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive 21-point Gauss–Kronrod integration of `f` over the
/// intervals delimited by `points` (ascending, at least two entries).
pub fn adaptive<F: Fn(f64) -> Complex64>(f: F, points: &[f64], tol: Tolerance) -> Estimate {
    let mut heap = BinaryHeap::new();
    let mut frozen_value = Complex64::new(0.0, 0.0);
    let mut frozen_error = 0.0;
    let mut evaluations = 0;
    for w in points.windows(2) {
        if w[1] > w[0] {
            let (value, error) = kronrod21(&f, w[0], w[1]);
            evaluations += 21;
            heap.push(Segment {
                a: w[0],
                b: w[1],
                value,
                error,
            });
        }
    }
    let mut intervals = heap.len();
    let mut total: Complex64 = heap.iter().map(|s| s.value).sum();
    let mut err: f64 = heap.iter().map(|s| s.error).sum();
    let mut since_resum = 0usize;
    loop {
        if since_resum >= 64 {
            // Periodic re-summation keeps the running totals free of drift.
            total = frozen_value + heap.iter().map(|s| s.value).sum::<Complex64>();
            err = frozen_error + heap.iter().map(|s| s.error).sum::<f64>();
            since_resum = 0;
        }
        if err <= tol.target(total.norm()) || heap.is_empty() {
            return Estimate {
                value: total,
                error: err,
                evaluations,
                converged: true,
            };
        }
        if intervals >= tol.max_intervals {
            return Estimate {
                value: total,
                error: err,
                evaluations,
                converged: false,
            };
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b || (worst.b - worst.a) < 1e-14 * worst.a.abs().max(1e-300) {
            // Cannot subdivide further in floating point.
            frozen_value += worst.value;
            frozen_error += worst.error;
            continue;
        }
        total -= worst.value;
        err -= worst.error;
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = kronrod21(&f, a, b);
            evaluations += 21;
            total += value;
            err += error;
            heap.push(Segment { a, b, value, error });
        }
        intervals += 1;
        since_resum += 1;
    }
}

/// Adaptive integration over `[start, ∞)` through the algebraic map
/// `p = start + scale·u/(1-u)`.
pub fn adaptive_semi_infinite<F: Fn(f64) -> Complex64>(
    f: F,
    start: f64,
    scale: f64,
    tol: Tolerance,
) -> Estimate {
    let mapped = |u: f64| {
        let one_minus = 1.0 - u;
        let p = start + scale * u / one_minus;
        let jac = scale / (one_minus * one_minus);
        let v = f(p);
        if v.re == 0.0 && v.im == 0.0 {
            v
        } else {
            v * jac
        }
    };
    adaptive(mapped, &[0.0, 0.5, 1.0], tol)
}

/// Real-valued convenience wrapper around [`adaptive`].
pub fn adaptive_real<F: Fn(f64) -> f64>(f: F, points: &[f64], tol: Tolerance) -> (f64, f64, bool) {
    let est = adaptive(|x| Complex64::new(f(x), 0.0), points, tol);
    (est.value.re, est.error, est.converged)
}

/// Discretization scheme for [`build_grid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridScheme {
    /// Gauss–Legendre on `u ∈ (0,1)` pulled back through `p = L·u/(1-u)`.
    MappedGauss,
    /// Midpoint rule on `(0, L]`; the integrand is treated as zero beyond `L`.
    TruncatedUniform,
}

/// Quadrature nodes and weights approximating `∫₀^∞ g(p) dp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfLineGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub map_scale: f64,
    pub scheme: GridScheme,
}

impl HalfLineGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Largest node; the grid carries no information beyond it.
    pub fn p_max(&self) -> f64 {
        self.nodes.last().copied().unwrap_or(0.0)
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&p, &w)| w * g(p)).sum()
    }

    pub fn integrate_complex<F: Fn(f64) -> Complex64>(&self, g: F) -> Complex64 {
        self.nodes.iter().zip(&self.weights).map(|(&p, &w)| g(p) * w).sum()
    }

    /// Rebuild a grid from serialized parts, checking the structural invariants.
    pub fn from_parts(nodes: Vec<f64>, weights: Vec<f64>, map_scale: f64, scheme: GridScheme) -> Result<Self> {
        let grid = Self {
            nodes,
            weights,
            map_scale,
            scheme,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.len() < 2 || self.nodes.len() != self.weights.len() {
            return invalid("grid needs at least two nodes and one weight per node");
        }
        if self.nodes[0] <= 0.0 || self.nodes.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("grid nodes must be positive and strictly increasing");
        }
        if self.weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return invalid("grid weights must be positive and finite");
        }
        Ok(())
    }
}

/// Build an `n`-node half-line grid with map scale (or cutoff) `scale`.
pub fn build_grid(n: usize, scale: f64, scheme: GridScheme) -> Result<HalfLineGrid> {
    if n < 2 {
        return invalid(format!("grid size must be at least 2, got {n}"));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return invalid(format!("grid scale must be positive, got {scale}"));
    }
    let (nodes, weights) = match scheme {
        GridScheme::MappedGauss => {
            let (x, w) = gauss_legendre(n);
            x.iter()
                .zip(&w)
                .map(|(&x, &w)| {
                    let u = 0.5 * (x + 1.0);
                    let one_minus = 1.0 - u;
                    (scale * u / one_minus, 0.5 * w * scale / (one_minus * one_minus))
                })
                .unzip()
        }
        GridScheme::TruncatedUniform => {
            let h = scale / n as f64;
            ((0..n).map(|i| (i as f64 + 0.5) * h).collect(), vec![h; n])
        }
    };
    HalfLineGrid::from_parts(nodes, weights, scale, scheme)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 16, 33] {
            let (x, w) = gauss_legendre(n);
            for k in 0..(2 * n) {
                let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                assert!((approx - exact).abs() < 1e-13, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn large_gauss_legendre_weights_sum_to_two() {
        let (x, w) = gauss_legendre(4096);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-12);
        assert!(x.windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn adaptive_handles_oscillation() {
        // ∫₀^{10} cos(50x) dx = sin(500)/50
        let est = adaptive(|x| Complex64::new((50.0 * x).cos(), 0.0), &[0.0, 10.0], Tolerance::default());
        assert!(est.converged);
        assert!((est.value.re - (500.0f64).sin() / 50.0).abs() < 1e-12);
    }

    #[test]
    fn semi_infinite_gaussian() {
        let est = adaptive_semi_infinite(|x| Complex64::new((-x * x).exp(), 0.0), 0.0, 1.0, Tolerance::default());
        assert!((est.value.re - PI.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn adaptive_reports_nonconvergence() {
        let tol = Tolerance {
            abs: 1e-15,
            rel: 1e-15,
            max_intervals: 3,
        };
        let est = adaptive(|x| Complex64::new((1.0 / (x + 1e-3)).sin(), 0.0), &[0.0, 1.0], tol);
        assert!(!est.converged);
    }

    #[test]
    fn grid_examples() {
        let g = build_grid(64, 1.0, GridScheme::MappedGauss).unwrap();
        let gauss = g.integrate(|p| (-2.0 * p * p).exp());
        assert!((gauss - (PI / 2.0).sqrt() / 2.0).abs() < 1e-10);
        let first = g.integrate(|p| p * (-2.0 * p * p).exp());
        assert!((first - 0.25).abs() < 1e-10);
        assert_eq!(g.integrate(|_| 0.0), 0.0);
    }

    #[test]
    fn grid_argument_errors() {
        assert!(build_grid(1, 1.0, GridScheme::MappedGauss).is_err());
        assert!(build_grid(8, 0.0, GridScheme::MappedGauss).is_err());
        assert!(build_grid(8, -1.0, GridScheme::TruncatedUniform).is_err());
    }

    #[test]
    fn truncated_uniform_is_midpoint() {
        let g = build_grid(4, 2.0, GridScheme::TruncatedUniform).unwrap();
        assert_eq!(g.nodes, vec![0.25, 0.75, 1.25, 1.75]);
        assert!((g.integrate(|p| p) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn mapped_gauss_error_decreases_with_n() {
        let f = |p: f64| (-0.5 * p * p).exp() * p.powi(3);
        let exact_cubic = 2.0; // ∫ p³ e^{-p²/2} = 2
        let errs: Vec<f64> = [4, 8, 16, 32]
            .iter()
            .map(|&n| (build_grid(n, 1.0, GridScheme::MappedGauss).unwrap().integrate(f) - exact_cubic).abs())
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0] || w[1] < 1e-14), "{errs:?}");
    }
}
