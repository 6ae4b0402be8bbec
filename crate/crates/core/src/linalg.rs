//! Small dense-band linear algebra: tridiagonal and cyclic-tridiagonal
//! solves with partial pivoting, and a symmetric-tridiagonal smallest
//! eigenpair via deflated inverse iteration.

use crate::fmath;
use alloc::{vec, vec::Vec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinalgError {
    Singular,
}

/// Tridiagonal system with partial pivoting (the dgtsv elimination: pivoting
/// between adjacent rows produces one extra superdiagonal).
/// `lower[i]` couples row i+1 to column i, `upper[i]` row i to column i+1.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>, LinalgError> {
    let n = diag.len();
    debug_assert_eq!(lower.len(), n - 1);
    debug_assert_eq!(upper.len(), n - 1);
    debug_assert_eq!(rhs.len(), n);
    let mut d = diag.to_vec();
    let mut du = upper.to_vec();
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    let mut dl = lower.to_vec();
    let mut b = rhs.to_vec();

    let scale = d.iter().chain(du.iter()).chain(dl.iter()).fold(0.0f64, |a, &v| a.max(fmath::abs(v)));
    if scale == 0.0 {
        return Err(LinalgError::Singular);
    }
    let tiny = 1e-300 * scale.max(1.0);

    for i in 0..n - 1 {
        if fmath::abs(d[i]) >= fmath::abs(dl[i]) {
            // no interchange
            if fmath::abs(d[i]) < tiny {
                return Err(LinalgError::Singular);
            }
            let fact = dl[i] / d[i];
            d[i + 1] -= fact * du[i];
            b[i + 1] -= fact * b[i];
            if i + 2 < n {
                du2[i] = 0.0;
            }
            dl[i] = 0.0;
        } else {
            // interchange rows i and i+1
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let tmp = d[i + 1];
            d[i + 1] = du[i] - fact * tmp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du2[i];
            }
            du[i] = tmp;
            let tb = b[i];
            b[i] = b[i + 1];
            b[i + 1] = tb - fact * b[i];
            dl[i] = 0.0;
        }
    }
    if fmath::abs(d[n - 1]) < tiny {
        return Err(LinalgError::Singular);
    }

    // back substitution
    let mut x = vec![0.0; n];
    x[n - 1] = b[n - 1] / d[n - 1];
    if n >= 2 {
        x[n - 2] = (b[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (b[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i];
    }
    Ok(x)
}

/// Cyclic tridiagonal solve (wrap entries `corner_last_first` at (n-1, 0) and
/// `corner_first_last` at (0, n-1)) via the bordered two-solve reduction.
pub fn solve_cyclic_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    corner_first_last: f64,
    corner_last_first: f64,
    rhs: &[f64],
) -> Result<Vec<f64>, LinalgError> {
    let n = diag.len();
    if n < 3 {
        return Err(LinalgError::Singular);
    }
    // Unknown x0 treated as a parameter: solve the (n-1)-dim tridiagonal
    // system for x[1..] with rhs and with the x0-coupling column, then close
    // with row 0.
    let sub = &lower[1..]; // couples rows 2.. to 1..
    let d = &diag[1..];
    let sup = &upper[1..];
    let b1 = rhs[1..].to_vec();
    let mut b2 = vec![0.0; n - 1];
    b2[0] = -lower[0]; // row 1 couples to x0 via lower[0]
    b2[n - 2] = -corner_last_first; // row n-1 couples to x0 via the corner

    let y = solve_tridiagonal(sub, d, sup, &b1)?;
    let z = solve_tridiagonal(sub, d, sup, &b2)?;

    // Row 0: diag[0] x0 + upper[0] x1 + corner_first_last x_{n-1} = rhs[0]
    let denom = diag[0] + upper[0] * z[0] + corner_first_last * z[n - 2];
    let numer = rhs[0] - upper[0] * y[0] - corner_first_last * y[n - 2];
    if fmath::abs(denom) < 1e-300 {
        return Err(LinalgError::Singular);
    }
    let x0 = numer / denom;
    let mut x = vec![0.0; n];
    x[0] = x0;
    for i in 1..n {
        x[i] = y[i - 1] + x0 * z[i - 1];
    }
    Ok(x)
}

/// Symmetric (possibly cyclic) tridiagonal operator stored by bands.
#[derive(Debug, Clone)]
pub struct SymTriMatrix {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
    /// Corner coupling for periodic problems ((0, n-1) entry); 0 if open.
    pub corner: f64,
}

impl SymTriMatrix {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            y[i] = s;
        }
        if self.corner != 0.0 {
            y[0] += self.corner * x[n - 1];
            y[n - 1] += self.corner * x[0];
        }
        y
    }

    fn solve_shifted(&self, shift: f64, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let d: Vec<f64> = self.diag.iter().map(|&v| v - shift).collect();
        if self.corner == 0.0 {
            solve_tridiagonal(&self.off, &d, &self.off, rhs)
        } else {
            solve_cyclic_tridiagonal(&self.off, &d, &self.off, self.corner, self.corner, rhs)
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(&x, &y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    fmath::sqrt(dot(a, a))
}

/// Smallest eigenvalue/vector of a symmetric PSD tridiagonal matrix on the
/// complement of a known null vector, by deflated inverse iteration with a
/// Rayleigh-quotient finish. Returns (eigenvalue, eigenvector).
pub fn smallest_deflated_eigenpair(
    m: &SymTriMatrix,
    null_vec: &[f64],
    seed: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<(f64, Vec<f64>), LinalgError> {
    let nv_norm = norm(null_vec);
    if nv_norm == 0.0 {
        return Err(LinalgError::Singular);
    }
    let e: Vec<f64> = null_vec.iter().map(|&v| v / nv_norm).collect();
    let project = |x: &mut Vec<f64>| {
        let c = dot(x, &e);
        for (xi, ei) in x.iter_mut().zip(e.iter()) {
            *xi -= c * ei;
        }
    };

    let mut x = seed.to_vec();
    project(&mut x);
    let nx = norm(&x);
    if nx == 0.0 {
        return Err(LinalgError::Singular);
    }
    for v in x.iter_mut() {
        *v /= nx;
    }

    // Small positive regularization keeps the shifted solves nonsingular in
    // the deflated direction.
    let scale = m.diag.iter().fold(0.0f64, |a, &v| a.max(fmath::abs(v)));
    let eps_shift = -1e-10 * scale.max(1.0);

    let mut lambda = dot(&m.matvec(&x), &x);
    let mut prev = f64::INFINITY;
    for it in 0..max_iter {
        // Fixed near-zero shift to start, Rayleigh shift once locked on.
        let shift = if it < 16 { eps_shift } else { lambda * (1.0 - 1e-8) };
        let mut y = match m.solve_shifted(shift, &x) {
            Ok(y) => y,
            Err(_) => {
                // Shift hit an eigenvalue: nudge and retry once.
                m.solve_shifted(shift - 1e-8 * scale.max(1.0), &x)?
            }
        };
        project(&mut y);
        let ny = norm(&y);
        if ny == 0.0 {
            return Err(LinalgError::Singular);
        }
        for v in y.iter_mut() {
            *v /= ny;
        }
        x = y;
        lambda = dot(&m.matvec(&x), &x);
        if fmath::abs(lambda - prev) <= tol * fmath::abs(lambda).max(1e-30) {
            return Ok((lambda, x));
        }
        prev = lambda;
    }
    Ok((lambda, x))
}
