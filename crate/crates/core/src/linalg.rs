//! Dense Hermitian eigensolvers.
//!
//! The default path reduces the matrix to a real symmetric tridiagonal with
//! complex Householder reflectors, then runs implicit QL. The lowest eigenpair
//! alone is obtained by QL on eigenvalues only plus inverse iteration. A cyclic
//! complex Jacobi solver is kept as an independent reference.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, BackflowError, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Dense Hermitian matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl HermitianMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![ZERO; n * n],
        }
    }

    /// Build from the lower triangle `f(i, j)`, `j ≤ i`; the upper triangle is
    /// the conjugate mirror and the diagonal is taken real.
    pub fn from_lower<F>(n: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> Complex64 + Sync,
    {
        let mut data = vec![ZERO; n * n];
        data.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
            for (j, slot) in row.iter_mut().enumerate().take(i + 1) {
                *slot = f(i, j);
            }
        });
        for i in 0..n {
            data[i * n + i].im = 0.0;
            for j in 0..i {
                data[j * n + i] = data[i * n + j].conj();
            }
        }
        Self { n, data }
    }

    /// Wrap a full row-major matrix; fails if it is not Hermitian to `tol`.
    pub fn from_rows(n: usize, data: Vec<Complex64>, tol: f64) -> Result<Self> {
        if data.len() != n * n {
            return invalid(format!("expected {} entries, got {}", n * n, data.len()));
        }
        let m = Self { n, data };
        let defect = m.hermiticity_defect();
        if defect > tol * m.frobenius_norm().max(f64::MIN_POSITIVE) {
            return invalid(format!("matrix is not Hermitian (defect {defect:e})"));
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..=i {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i).re).sum()
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.data
            .par_chunks(self.n.max(1))
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `x* M x` (real for Hermitian `M`).
    pub fn expectation(&self, x: &[Complex64]) -> f64 {
        self.matvec(x).iter().zip(x).map(|(mx, xi)| xi.conj() * mx).sum::<Complex64>().re
    }

    /// `‖Mx − λx‖` for a unit vector `x`.
    pub fn residual(&self, lambda: f64, x: &[Complex64]) -> f64 {
        self.matvec(x)
            .iter()
            .zip(x)
            .map(|(mx, xi)| (mx - xi * lambda).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Eigenvalues in ascending order with unit eigenvectors (columns) and residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<Complex64>>,
    pub residuals: Vec<f64>,
}

/// Rotate `v` so its first component above `1e-8·max|vᵢ|` is real positive.
pub fn fix_phase(v: &mut [Complex64]) {
    let peak = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if let Some(first) = v.iter().find(|z| z.norm() > 1e-8 * peak) {
        let ph = first.conj() / first.norm();
        v.iter_mut().for_each(|z| *z *= ph);
    }
}

fn normalize(v: &mut [Complex64]) {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|z| *z /= n);
    }
}

/// Householder reduction `A = Q T Q*` with `T` real symmetric tridiagonal.
struct Tridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
    /// Reflectors `H_k = I − τ_k v_k v_k*` acting on indices `k+1..n`.
    reflectors: Vec<(Vec<Complex64>, f64)>,
    /// Diagonal unitary that made the off-diagonal real.
    phases: Vec<Complex64>,
}

impl Tridiagonal {
    fn new(m: &HermitianMatrix) -> Self {
        let n = m.n;
        let mut a = m.data.clone();
        let mut off_c = vec![ZERO; n.saturating_sub(1)];
        let mut reflectors = Vec::with_capacity(n.saturating_sub(1));
        for k in 0..n.saturating_sub(1) {
            let len = n - k - 1;
            let mut v: Vec<Complex64> = (0..len).map(|i| a[(k + 1 + i) * n + k]).collect();
            let x0 = v[0];
            // Work with the column scaled to unit max entry so squares cannot underflow.
            let smax = v.iter().fold(0.0_f64, |m, z| m.max(z.re.abs()).max(z.im.abs()));
            let tail = if smax > 0.0 {
                v[1..].iter().map(|z| (z / smax).norm_sqr()).sum::<f64>()
            } else {
                0.0
            };
            if tail == 0.0 {
                off_c[k] = x0;
                reflectors.push((Vec::new(), 0.0));
                continue;
            }
            for z in v.iter_mut() {
                *z /= smax;
            }
            let xnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let ph = if x0.norm() > 0.0 { x0 / x0.norm() } else { Complex64::new(1.0, 0.0) };
            let alpha = -ph * xnorm;
            v[0] -= alpha;
            let alpha = alpha * smax;
            let vnorm2 = v.iter().map(|z| z.norm_sqr()).sum::<f64>();
            let tau = 2.0 / vnorm2;
            // p = τ A v on the trailing block
            let base = k + 1;
            let p: Vec<Complex64> = (0..len)
                .into_par_iter()
                .map(|i| {
                    let row = &a[(base + i) * n + base..(base + i) * n + n];
                    row.iter().zip(&v).map(|(x, y)| x * y).sum::<Complex64>() * tau
                })
                .collect();
            let kappa = 0.5 * tau * v.iter().zip(&p).map(|(x, y)| x.conj() * y).sum::<Complex64>();
            let w: Vec<Complex64> = p.iter().zip(&v).map(|(pi, vi)| pi - kappa * vi).collect();
            let vc: Vec<Complex64> = v.iter().map(|z| z.conj()).collect();
            let wc: Vec<Complex64> = w.iter().map(|z| z.conj()).collect();
            a[base * n..].par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                let (vi, wi) = (v[i], w[i]);
                for ((x, vcj), wcj) in row[base..].iter_mut().zip(&vc).zip(&wc) {
                    *x -= vi * wcj + wi * vcj;
                }
            });
            off_c[k] = alpha;
            reflectors.push((v, tau));
        }
        let diag: Vec<f64> = (0..n).map(|i| a[i * n + i].re).collect();
        let mut phases = vec![Complex64::new(1.0, 0.0); n];
        let mut off = vec![0.0; n.saturating_sub(1)];
        for k in 0..n.saturating_sub(1) {
            let e = off_c[k];
            off[k] = e.norm();
            phases[k + 1] = if off[k] > 0.0 { phases[k] * e / off[k] } else { phases[k] };
        }
        Self {
            diag,
            off,
            reflectors,
            phases,
        }
    }

    /// Map an eigenvector of the real tridiagonal back to the original basis.
    fn back_transform(&self, y: &[f64]) -> Vec<Complex64> {
        let mut z: Vec<Complex64> = y.iter().zip(&self.phases).map(|(&yi, ph)| ph * yi).collect();
        for (k, (v, tau)) in self.reflectors.iter().enumerate().rev() {
            if v.is_empty() {
                continue;
            }
            let seg = &mut z[k + 1..];
            let dot: Complex64 = v.iter().zip(seg.iter()).map(|(vi, zi)| vi.conj() * zi).sum();
            let s = dot * *tau;
            seg.iter_mut().zip(v).for_each(|(zi, vi)| *zi -= s * vi);
        }
        z
    }
}

const QL_MAX_ITER: usize = 60;

/// Implicit QL on a real symmetric tridiagonal (`d` diagonal, `e` sub-diagonal
/// padded to length n). Eigenvector columns in `z` are rotated along when given.
fn tql(d: &mut [f64], e: &mut [f64], mut z: Option<&mut [Vec<f64>]>) -> Result<()> {
    let n = d.len();
    // Deflating below ε‖T‖ is backward stable and stops clusters of
    // near-zero eigenvalues from stalling the relative test.
    let tnorm = d.iter().chain(e.iter()).fold(0.0_f64, |m, x| m.max(x.abs()));
    let floor = f64::EPSILON * tnorm;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd || e[m].abs() <= floor {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > QL_MAX_ITER {
                return Err(BackflowError::Solver {
                    iterations: iter,
                    residual: e[l].abs(),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(cols) = z.as_deref_mut() {
                    let (lo, hi) = cols.split_at_mut(i + 1);
                    let (ci, cj) = (&mut lo[i], &mut hi[0]);
                    for (zi, zj) in ci.iter_mut().zip(cj.iter_mut()) {
                        let f = *zj;
                        *zj = s * *zi + c * f;
                        *zi = c * *zi - s * f;
                    }
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

fn padded_off(t: &Tridiagonal) -> Vec<f64> {
    let mut e = t.off.clone();
    e.push(0.0);
    e
}

fn check_residuals(m: &HermitianMatrix, residuals: &[f64]) -> Result<()> {
    let scale = m.frobenius_norm().max(f64::MIN_POSITIVE);
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    if worst > 1e-8 * scale {
        return Err(BackflowError::Solver {
            iterations: 0,
            residual: worst,
        });
    }
    Ok(())
}

/// Full eigendecomposition by tridiagonal reduction and implicit QL.
pub fn eigh(m: &HermitianMatrix) -> Result<SpectrumResult> {
    let n = m.n;
    if n == 0 {
        return Ok(SpectrumResult {
            eigenvalues: vec![],
            eigenvectors: vec![],
            residuals: vec![],
        });
    }
    let t = Tridiagonal::new(m);
    let mut d = t.diag.clone();
    let mut e = padded_off(&t);
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut c = vec![0.0; n];
            c[i] = 1.0;
            c
        })
        .collect();
    tql(&mut d, &mut e, Some(&mut cols))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let eigenvectors: Vec<Vec<Complex64>> = order
        .par_iter()
        .map(|&i| {
            let mut v = t.back_transform(&cols[i]);
            normalize(&mut v);
            fix_phase(&mut v);
            v
        })
        .collect();
    let eigenvalues: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let residuals: Vec<f64> = eigenvalues
        .iter()
        .zip(&eigenvectors)
        .map(|(&l, v)| m.residual(l, v))
        .collect();
    check_residuals(m, &residuals)?;
    Ok(SpectrumResult {
        eigenvalues,
        eigenvectors,
        residuals,
    })
}

/// All eigenvalues, ascending, without eigenvectors.
pub fn eigenvalues(m: &HermitianMatrix) -> Result<Vec<f64>> {
    let t = Tridiagonal::new(m);
    let mut d = t.diag.clone();
    let mut e = padded_off(&t);
    tql(&mut d, &mut e, None)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Lowest eigenpair with its residual, via inverse iteration on the tridiagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<Complex64>,
    pub residual: f64,
}

pub fn lowest_eigenpair(m: &HermitianMatrix) -> Result<Eigenpair> {
    let n = m.n;
    if n == 0 {
        return invalid("empty matrix has no eigenpair");
    }
    let t = Tridiagonal::new(m);
    let mut d = t.diag.clone();
    let mut e = padded_off(&t);
    tql(&mut d, &mut e, None)?;
    let lambda = d.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = t.diag.iter().map(|x| x.abs()).chain(t.off.iter().map(|x| x.abs())).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    // T − σI is positive definite for σ just below the smallest eigenvalue,
    // so the LDLᵀ solve needs no pivoting.
    let sigma = lambda - 1e-10 * scale;
    let mut y = vec![1.0 / (n as f64).sqrt(); n];
    for _ in 0..4 {
        y = solve_shifted(&t.diag, &t.off, sigma, &y);
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(BackflowError::Solver {
                iterations: 0,
                residual: f64::NAN,
            });
        }
        y.iter_mut().for_each(|v| *v /= norm);
    }
    let mut vector = t.back_transform(&y);
    normalize(&mut vector);
    fix_phase(&mut vector);
    let value = m.expectation(&vector);
    let residual = m.residual(value, &vector);
    check_residuals(m, &[residual])?;
    Ok(Eigenpair { value, vector, residual })
}

fn solve_shifted(diag: &[f64], off: &[f64], sigma: f64, b: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut dd = vec![0.0; n];
    let mut l = vec![0.0; n.saturating_sub(1)];
    dd[0] = diag[0] - sigma;
    for i in 1..n {
        l[i - 1] = off[i - 1] / dd[i - 1];
        dd[i] = diag[i] - sigma - l[i - 1] * off[i - 1];
        if dd[i] == 0.0 {
            dd[i] = f64::EPSILON * off[i - 1].abs().max(f64::MIN_POSITIVE);
        }
    }
    let mut y = b.to_vec();
    for i in 1..n {
        y[i] -= l[i - 1] * y[i - 1];
    }
    for i in 0..n {
        y[i] /= dd[i];
    }
    for i in (0..n - 1).rev() {
        y[i] -= l[i] * y[i + 1];
    }
    y
}

/// Cyclic complex Jacobi, converged when `off(M) < 1e−12·‖M‖`.
pub fn eigh_jacobi(m: &HermitianMatrix) -> Result<SpectrumResult> {
    let n = m.n;
    let mut a = m.data.clone();
    let mut v = vec![ZERO; n * n];
    for i in 0..n {
        v[i * n + i] = Complex64::new(1.0, 0.0);
    }
    let norm = m.frobenius_norm().max(f64::MIN_POSITIVE);
    let off_norm = |a: &[Complex64]| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j].norm_sqr();
                }
            }
        }
        s.sqrt()
    };
    let max_sweeps = 100;
    let mut sweeps = 0;
    while off_norm(&a) >= 1e-12 * norm {
        sweeps += 1;
        if sweeps > max_sweeps {
            return Err(BackflowError::Solver {
                iterations: sweeps,
                residual: off_norm(&a),
            });
        }
        for p in 0..n {
            for q in p + 1..n {
                let b = a[p * n + q];
                let bn = b.norm();
                if bn == 0.0 {
                    continue;
                }
                let ph = b / bn; // e^{iφ}
                let app = a[p * n + p].re;
                let aqq = a[q * n + q].re;
                let theta = (aqq - app) / (2.0 * bn);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let phc = ph.conj();
                // columns: A ← A U
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = akp * c - akq * phc * s;
                    a[k * n + q] = akp * s + akq * phc * c;
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = vkp * c - vkq * phc * s;
                    v[k * n + q] = vkp * s + vkq * phc * c;
                }
                // rows: A ← U* A
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = apk * c - aqk * ph * s;
                    a[q * n + k] = apk * s + aqk * ph * c;
                }
                a[p * n + q] = ZERO;
                a[q * n + p] = ZERO;
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].re.total_cmp(&a[j * n + j].re));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[i * n + i].re).collect();
    let eigenvectors: Vec<Vec<Complex64>> = order
        .iter()
        .map(|&j| {
            let mut col: Vec<Complex64> = (0..n).map(|k| v[k * n + j]).collect();
            normalize(&mut col);
            fix_phase(&mut col);
            col
        })
        .collect();
    let residuals: Vec<f64> = eigenvalues
        .iter()
        .zip(&eigenvectors)
        .map(|(&l, x)| m.residual(l, x))
        .collect();
    check_residuals(m, &residuals)?;
    Ok(SpectrumResult {
        eigenvalues,
        eigenvectors,
        residuals,
    })
}
