//! Tridiagonal kernels: Thomas solves (pre-factored and one-shot) and the
//! lowest eigenpairs of real symmetric tridiagonal matrices.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Thomas factorization of a complex tridiagonal matrix, reusable across
/// right-hand sides. `sub[i]` couples row `i+1` to column `i`, `sup[i]`
/// couples row `i` to column `i+1`.
#[derive(Clone, Debug)]
pub struct TridiagLu {
    sub: Vec<C64>,
    inv_pivot: Vec<C64>,
    upper: Vec<C64>,
}

impl TridiagLu {
    pub fn new(sub: &[C64], diag: &[C64], sup: &[C64]) -> Option<Self> {
        let n = diag.len();
        assert!(n >= 1 && sub.len() + 1 == n && sup.len() + 1 == n);
        let mut inv_pivot = vec![C64::new(0.0, 0.0); n];
        let mut upper = vec![C64::new(0.0, 0.0); n.saturating_sub(1)];
        let mut pivot = diag[0];
        for i in 0..n {
            if i > 0 {
                pivot = diag[i] - sub[i - 1] * upper[i - 1];
            }
            if pivot.norm_sqr() == 0.0 || !pivot.is_finite() {
                return None;
            }
            let inv = pivot.inv();
            inv_pivot[i] = inv;
            if i + 1 < n {
                upper[i] = sup[i] * inv;
            }
        }
        Some(Self {
            sub: sub.to_vec(),
            inv_pivot,
            upper,
        })
    }

    /// Matrix with constant off-diagonals.
    pub fn with_constant_offdiag(off: C64, diag: &[C64]) -> Option<Self> {
        let n = diag.len();
        let off_v = vec![off; n.saturating_sub(1)];
        Self::new(&off_v, diag, &off_v)
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    pub fn solve_in_place(&self, rhs: &mut [C64]) {
        let n = self.len();
        debug_assert_eq!(rhs.len(), n);
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.sub[i - 1] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] = rhs[i] - self.upper[i] * rhs[i + 1];
        }
    }
}

/// One-shot Thomas solve with constant off-diagonal `off` and a varying
/// diagonal. `scratch` must have the same length as `rhs`.
pub fn solve_constant_offdiag(off: C64, diag: &[C64], rhs: &mut [C64], scratch: &mut [C64]) -> bool {
    let n = diag.len();
    debug_assert!(rhs.len() == n && scratch.len() == n);
    let mut pivot = diag[0];
    if pivot.norm_sqr() == 0.0 {
        return false;
    }
    let mut inv = pivot.inv();
    rhs[0] *= inv;
    for i in 1..n {
        scratch[i - 1] = off * inv;
        pivot = diag[i] - off * scratch[i - 1];
        if pivot.norm_sqr() == 0.0 {
            return false;
        }
        inv = pivot.inv();
        rhs[i] = (rhs[i] - off * rhs[i - 1]) * inv;
    }
    for i in (0..n - 1).rev() {
        rhs[i] = rhs[i] - scratch[i] * rhs[i + 1];
    }
    true
}

/// Solve `A x = rhs` for a real tridiagonal `A` (unit diagonal plus
/// `sub`/`sup` couplings) and complex right-hand side. `scratch.len() >= n - 1`.
pub fn solve_real_unit_diag(sub: &[f64], sup: &[f64], rhs: &mut [C64], scratch: &mut [f64]) {
    let n = rhs.len();
    if n == 0 {
        return;
    }
    let mut inv = 1.0;
    for i in 1..n {
        scratch[i - 1] = sup[i - 1] * inv;
        let pivot = 1.0 - sub[i - 1] * scratch[i - 1];
        let prev = rhs[i - 1];
        inv = 1.0 / pivot;
        rhs[i] = (rhs[i] - prev * sub[i - 1]) * inv;
    }
    for i in (0..n - 1).rev() {
        let next = rhs[i + 1];
        rhs[i] -= next * scratch[i];
    }
}

/// `out = T x` for a tridiagonal `T` with constant off-diagonal.
pub fn matvec_constant_offdiag(off: C64, diag: &[C64], x: &[C64], out: &mut [C64]) {
    let n = x.len();
    if n == 1 {
        out[0] = diag[0] * x[0];
        return;
    }
    out[0] = diag[0] * x[0] + off * x[1];
    for i in 1..n - 1 {
        out[i] = diag[i] * x[i] + off * (x[i - 1] + x[i + 1]);
    }
    out[n - 1] = diag[n - 1] * x[n - 1] + off * x[n - 2];
}

/// Real symmetric tridiagonal matrix with diagonal `diag` and off-diagonal `off`.
#[derive(Clone, Debug)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(diag.len(), off.len() + 1);
        Self { diag, off }
    }

    pub fn with_constant_offdiag(diag: Vec<f64>, off: f64) -> Self {
        let n = diag.len();
        Self::new(diag, vec![off; n - 1])
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Number of eigenvalues strictly below `lambda` (Sturm sequence).
    pub fn count_below(&self, lambda: f64) -> usize {
        let mut count = 0;
        let mut q = self.diag[0] - lambda;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.len() {
            let denom = if q == 0.0 { f64::EPSILON * (self.off[i - 1].abs() + 1.0) } else { q };
            q = self.diag[i] - lambda - self.off[i - 1] * self.off[i - 1] / denom;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// `k`-th smallest eigenvalue (0-based) by bisection.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        assert!(k < self.len());
        let (mut lo, mut hi) = self.gershgorin();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut s = self.diag[i] * v[i];
            if i > 0 {
                s += self.off[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * v[i + 1];
            }
            out[i] = s;
        }
    }

    fn solve_shifted(&self, shift: f64, rhs: &mut [f64], scratch: &mut [f64]) {
        let n = self.len();
        let guard = f64::EPSILON * (1.0 + shift.abs());
        let mut pivot = self.diag[0] - shift;
        if pivot.abs() < guard {
            pivot = guard;
        }
        rhs[0] /= pivot;
        for i in 1..n {
            scratch[i - 1] = self.off[i - 1] / pivot;
            pivot = self.diag[i] - shift - self.off[i - 1] * scratch[i - 1];
            if pivot.abs() < guard {
                pivot = guard;
            }
            rhs[i] = (rhs[i] - self.off[i - 1] * rhs[i - 1]) / pivot;
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= scratch[i] * rhs[i + 1];
        }
    }

    /// `k`-th eigenpair: Sturm bisection for the eigenvalue, then shifted
    /// inverse iteration with Rayleigh-quotient refinement. The returned
    /// vector has unit Euclidean norm and a positive largest component.
    pub fn eigenpair(&self, k: usize, tol: f64, max_iter: usize) -> Result<(f64, Vec<f64>)> {
        let n = self.len();
        let mut lambda = self.eigenvalue(k);
        let (lo, hi) = self.gershgorin();
        let scale = (hi - lo).abs().max(1.0);
        // tiny offset keeps the shifted system non-singular while still
        // amplifying the target direction by ~1/offset
        let offset = 1e3 * f64::EPSILON * scale;
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * ((i * 7919) % 101) as f64).collect();
        let mut scratch = vec![0.0; n];
        let mut hv = vec![0.0; n];
        let mut prev = f64::INFINITY;
        for it in 0..max_iter {
            self.solve_shifted(lambda - offset, &mut v, &mut scratch);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !norm.is_finite() || norm == 0.0 {
                return Err(Error::EigenSolver(format!(
                    "inverse iteration broke down for eigenpair {k}"
                )));
            }
            v.iter_mut().for_each(|x| *x /= norm);
            self.apply(&v, &mut hv);
            let rq: f64 = v.iter().zip(&hv).map(|(a, b)| a * b).sum();
            let resid = v
                .iter()
                .zip(&hv)
                .map(|(a, b)| (b - rq * a).powi(2))
                .sum::<f64>()
                .sqrt();
            if (rq - prev).abs() <= tol && resid <= 1e3 * tol.max(f64::EPSILON * scale) && it >= 1 {
                lambda = rq;
                let imax = v
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                    .map(|(i, _)| i)
                    .unwrap();
                if v[imax] < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
                return Ok((lambda, v));
            }
            prev = rq;
        }
        Err(Error::EigenSolver(format!(
            "eigenpair {k} not converged to {tol:e} after {max_iter} iterations"
        )))
    }
}
