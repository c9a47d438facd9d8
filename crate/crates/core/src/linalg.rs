//! Small dense and banded direct kernels used by the solvers and the
//! stability probes. Everything here is deterministic: fixed loop orders,
//! no data-dependent parallelism.

use crate::error::SolveError;

/// Cholesky factorization of a symmetric positive definite band matrix.
///
/// Only the lower band is stored: `band[j * (bw + 1) + d]` holds `L[j + d, j]`
/// for `d = 0..=bw`.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandCholesky {
    /// Factor a matrix given through an accessor `a(i, j)` valid for
    /// `|i - j| <= bw`. Fails on a non-positive pivot.
    pub fn factor(
        n: usize,
        bw: usize,
        a: impl Fn(usize, usize) -> f64,
    ) -> Result<Self, SolveError> {
        let w = bw + 1;
        let mut band = vec![0.0; n * w];
        for j in 0..n {
            for d in 0..w.min(n - j) {
                band[j * w + d] = a(j + d, j);
            }
        }
        for j in 0..n {
            // subtract contributions of previous columns within the band
            let lo = j.saturating_sub(bw);
            for k in lo..j {
                let ljk = band[k * w + (j - k)];
                if ljk == 0.0 {
                    continue;
                }
                let dmax = (bw - (j - k)).min(n - 1 - j);
                for d in 0..=dmax {
                    band[j * w + d] -= band[k * w + (j - k + d)] * ljk;
                }
            }
            let pivot = band[j * w];
            if pivot <= 0.0 || !pivot.is_finite() {
                return Err(SolveError::SingularMatrix(pivot));
            }
            let inv = 1.0 / pivot.sqrt();
            for d in 0..w.min(n - j) {
                band[j * w + d] *= inv;
            }
        }
        Ok(Self { n, bw, band })
    }

    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        x.copy_from_slice(b);
        // forward: L y = b
        for j in 0..n {
            let xj = x[j] / self.band[j * w];
            x[j] = xj;
            for d in 1..w.min(n - j) {
                x[j + d] -= self.band[j * w + d] * xj;
            }
        }
        // backward: L^T x = y
        for j in (0..n).rev() {
            let mut s = x[j];
            for d in 1..w.min(n - j) {
                s -= self.band[j * w + d] * x[j + d];
            }
            x[j] = s / self.band[j * w];
        }
        let _ = bw;
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        self.solve_into(b, &mut x);
        x
    }

    pub fn storage_len(&self) -> usize {
        self.band.len()
    }
}

/// LU factorization with partial pivoting of a band matrix with `kl`
/// subdiagonals and `ku` superdiagonals.
///
/// Storage follows the usual expanded-band layout: `kl` extra superdiagonals
/// absorb fill from row interchanges. Entry `A[i, j]` lives at
/// `ab[j * ldab + (kl + ku + i - j)]`.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ab: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn factor(
        n: usize,
        kl: usize,
        ku: usize,
        a: impl Fn(usize, usize) -> f64,
    ) -> Result<Self, SolveError> {
        let ldab = 2 * kl + ku + 1;
        let off = kl + ku;
        let mut ab = vec![0.0; n * ldab];
        for j in 0..n {
            let i0 = j.saturating_sub(ku);
            let i1 = (j + kl).min(n - 1);
            for i in i0..=i1 {
                ab[j * ldab + (off + i - j)] = a(i, j);
            }
        }
        let kuw = ku + kl; // working upper bandwidth after pivoting
        let mut pivots = vec![0usize; n];
        let mut mult = vec![0.0; kl.max(1)];
        for j in 0..n {
            // pivot search in column j, rows j..=j+kl (contiguous)
            let imax = (j + kl).min(n - 1);
            let mut p = j;
            let mut pmax = ab[j * ldab + off].abs();
            for i in (j + 1)..=imax {
                let v = ab[j * ldab + (off + i - j)].abs();
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            pivots[j] = p;
            if pmax == 0.0 || !pmax.is_finite() {
                return Err(SolveError::SingularMatrix(pmax));
            }
            let cmax = (j + kuw).min(n - 1);
            if p != j {
                for c in j..=cmax {
                    ab.swap(c * ldab + (off + j - c), c * ldab + (off + p - c));
                }
            }
            // multipliers, stored back into column j
            let pivot = ab[j * ldab + off];
            let inv = 1.0 / pivot;
            let nm = imax - j;
            for (k, m) in mult.iter_mut().enumerate().take(nm) {
                let v = ab[j * ldab + off + 1 + k] * inv;
                *m = v;
                ab[j * ldab + off + 1 + k] = v;
            }
            if nm == 0 {
                continue;
            }
            // rank-1 update, column by column so the inner loop is contiguous
            for c in (j + 1)..=cmax {
                let head = c * ldab + off + j - c;
                let pivrow_c = ab[head];
                if pivrow_c == 0.0 {
                    continue;
                }
                for k in 0..nm {
                    ab[head + 1 + k] -= mult[k] * pivrow_c;
                }
            }
        }
        Ok(Self { n, kl, ku, ab, pivots })
    }

    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let ldab = 2 * kl + ku + 1;
        let off = kl + ku;
        let kuw = ku + kl;
        x.copy_from_slice(b);
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                x.swap(j, p);
            }
            let xj = x[j];
            if xj != 0.0 {
                let i1 = (j + kl).min(n - 1);
                for i in (j + 1)..=i1 {
                    x[i] -= self.ab[j * ldab + (off + i - j)] * xj;
                }
            }
        }
        // back substitution by columns keeps the band accesses contiguous
        for c in (0..n).rev() {
            let xc = x[c] / self.ab[c * ldab + off];
            x[c] = xc;
            if xc != 0.0 {
                let i0 = c.saturating_sub(kuw);
                let head = c * ldab + off + i0 - c;
                for (k, i) in (i0..c).enumerate() {
                    x[i] -= self.ab[head + k] * xc;
                }
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        self.solve_into(b, &mut x);
        x
    }

    pub fn storage_len(&self) -> usize {
        self.ab.len()
    }
}

/// Band LU without pivoting, compact storage `(kl + ku + 1) x n`. Suitable
/// for the strongly mass-dominated layer blocks; callers fall back to the
/// pivoted variant when a pivot degenerates.
#[derive(Debug, Clone)]
pub struct BandLuNoPivot {
    n: usize,
    kl: usize,
    ku: usize,
    ab: Vec<f64>,
}

impl BandLuNoPivot {
    pub fn factor(
        n: usize,
        kl: usize,
        ku: usize,
        a: impl Fn(usize, usize) -> f64,
    ) -> Result<Self, SolveError> {
        let ldab = kl + ku + 1;
        let off = ku;
        let mut ab = vec![0.0; n * ldab];
        let mut scale: f64 = 0.0;
        for j in 0..n {
            let i0 = j.saturating_sub(ku);
            let i1 = (j + kl).min(n - 1);
            for i in i0..=i1 {
                let v = a(i, j);
                ab[j * ldab + (off + i - j)] = v;
                scale = scale.max(v.abs());
            }
        }
        let mut mult = vec![0.0; kl.max(1)];
        for j in 0..n {
            let pivot = ab[j * ldab + off];
            if pivot.abs() <= 1e-12 * scale || !pivot.is_finite() {
                return Err(SolveError::SingularMatrix(pivot));
            }
            let imax = (j + kl).min(n - 1);
            let nm = imax - j;
            if nm == 0 {
                continue;
            }
            let inv = 1.0 / pivot;
            for (k, m) in mult.iter_mut().enumerate().take(nm) {
                let v = ab[j * ldab + off + 1 + k] * inv;
                *m = v;
                ab[j * ldab + off + 1 + k] = v;
            }
            let cmax = (j + ku).min(n - 1);
            for c in (j + 1)..=cmax {
                let head = c * ldab + off + j - c;
                let pivrow_c = ab[head];
                if pivrow_c == 0.0 {
                    continue;
                }
                for k in 0..nm {
                    ab[head + 1 + k] -= mult[k] * pivrow_c;
                }
            }
        }
        Ok(Self { n, kl, ku, ab })
    }

    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let ldab = kl + ku + 1;
        let off = ku;
        x.copy_from_slice(b);
        for j in 0..n {
            let xj = x[j];
            if xj != 0.0 {
                let i1 = (j + kl).min(n - 1);
                for i in (j + 1)..=i1 {
                    x[i] -= self.ab[j * ldab + (off + i - j)] * xj;
                }
            }
        }
        for c in (0..n).rev() {
            let xc = x[c] / self.ab[c * ldab + off];
            x[c] = xc;
            if xc != 0.0 {
                let i0 = c.saturating_sub(ku);
                let head = c * ldab + off + i0 - c;
                for (k, i) in (i0..c).enumerate() {
                    x[i] -= self.ab[head + k] * xc;
                }
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        self.solve_into(b, &mut x);
        x
    }

    pub fn storage_len(&self) -> usize {
        self.ab.len()
    }
}

/// Dense Cholesky, row-major lower factor. Used for the small Gram matrices
/// of the stability probes.
pub fn dense_cholesky(n: usize, a: &[f64]) -> Result<Vec<f64>, SolveError> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(SolveError::SingularMatrix(s));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Solves `L x = b` for dense lower-triangular `L` (row-major).
pub fn dense_forward_solve(n: usize, l: &[f64], b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi rotation method.
/// Returns the eigenvalues sorted ascending. `a` is row-major and is consumed.
pub fn symmetric_eigenvalues(n: usize, mut a: Vec<f64>) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let mut norm: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            norm = norm.max(a[i * n + j].abs());
        }
    }
    if norm == 0.0 {
        return vec![0.0; n];
    }
    let tol = 1e-15 * norm;
    for _sweep in 0..100 {
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[p * n + q].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eig
}

/// Smallest singular value of a dense `n x n` matrix (row-major), computed
/// as the square root of the smallest eigenvalue of `S^T S`.
pub fn smallest_singular_value(n: usize, s: &[f64]) -> f64 {
    let mut sts = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += s[k * n + i] * s[k * n + j];
            }
            sts[i * n + j] = acc;
        }
    }
    let eig = symmetric_eigenvalues(n, sts);
    eig[0].max(0.0).sqrt()
}
