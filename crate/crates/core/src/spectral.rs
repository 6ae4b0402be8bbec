//! Eigenvalue quantities: the lowest positive eigenvalue of the linearized
//! operator, and an upper estimate of the rigidity threshold by minimizing
//! the associated Rayleigh quotient over positive axisymmetric candidates.

use crate::fmath;
use crate::geometry::{Field, Geometry};
use crate::linalg::{smallest_deflated_eigenpair, LinalgError, SymTriMatrix};
use crate::operators::{self, OpError};
use crate::params::{derive_constants, ParamSet};
use alloc::{vec, vec::Vec};
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum SpectralError {
    /// Deflation of the constant mode failed or a shifted solve broke down.
    SingularOperator,
    Op(OpError),
}

impl fmt::Display for SpectralError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpectralError::SingularOperator => write!(f, "SingularOperator"),
            SpectralError::Op(e) => write!(f, "{e}"),
        }
    }
}

impl From<OpError> for SpectralError {
    fn from(e: OpError) -> Self {
        SpectralError::Op(e)
    }
}

impl From<LinalgError> for SpectralError {
    fn from(_: LinalgError) -> Self {
        SpectralError::SingularOperator
    }
}

/// Assemble -L at u as a symmetric (possibly cyclic) tridiagonal matrix in
/// the sqrt(cell-volume) scaled basis. Returns the matrix and the scaling.
pub fn minus_linearized_matrix(
    geom: &Geometry,
    params: &ParamSet,
    u: &Field,
    eps: f64,
) -> Result<(SymTriMatrix, Vec<f64>), SpectralError> {
    let coef = operators::linearized_coefficient(geom, params, u, eps)?;
    let nodes = geom.num_nodes();
    let h = geom.h;
    let sqrt_vol: Vec<f64> = (0..nodes).map(|i| fmath::sqrt(geom.cell_volume(i))).collect();

    let mut diag = vec![0.0; nodes];
    let mut off = vec![0.0; nodes - 1];
    let mut corner = 0.0;
    let hk = geom.num_half_nodes();
    for k in 0..hk {
        let cond = geom.half_density(k) * coef[k] / h;
        let (i, j) = if geom.is_periodic() && k + 1 == hk { (k, 0) } else { (k, k + 1) };
        diag[i] += cond / geom.cell_volume(i);
        diag[j] += cond / geom.cell_volume(j);
        let t = -cond / (sqrt_vol[i] * sqrt_vol[j]);
        if j == i + 1 {
            off[i] = t;
        } else {
            corner = t;
        }
    }
    Ok((SymTriMatrix { diag, off, corner }, sqrt_vol))
}

/// Lowest positive eigenvalue of -L restricted to the mean-zero subspace,
/// with the eigenfield normalized to unit L^2 norm against the measure.
pub fn lambda1(
    geom: &Geometry,
    params: &ParamSet,
    u: &Field,
    eps: f64,
) -> Result<(f64, Field), SpectralError> {
    let (m, sqrt_vol) = minus_linearized_matrix(geom, params, u, eps)?;
    // Constants span the null space; in the scaled basis that is sqrt(vol).
    let null = sqrt_vol.clone();
    // Low-mode seed with no symmetry (a symmetric seed can be exactly
    // orthogonal to the ground mode when a degenerate coefficient nearly
    // decouples the domain).
    let seed: Vec<f64> = geom
        .grid
        .iter()
        .zip(sqrt_vol.iter())
        .map(|(&t, &s)| {
            (fmath::cos(t) + 0.61 * fmath::sin(t) + 0.23 * fmath::sin(2.0 * t)
                + 0.11 * fmath::cos(3.0 * t))
                * s
        })
        .collect();
    let (lam, x) = smallest_deflated_eigenpair(&m, &null, &seed, 400, 1e-13)?;
    let mut psi: Vec<f64> = x.iter().zip(sqrt_vol.iter()).map(|(&xi, &s)| xi / s).collect();
    // Normalize against the measure and fix an orientation.
    let field = Field::new(psi.clone());
    let nrm = fmath::sqrt(geom.integrate(&field.map(|v| v * v)));
    let sign = if psi[0] >= 0.0 { 1.0 } else { -1.0 };
    for v in psi.iter_mut() {
        *v *= sign / nrm;
    }
    Ok((lam, Field::new(psi)))
}

/// Both sides of the Poincare-type inequality
/// int (L psi)^2 dV >= lambda1 int |grad psi|_A^2 |grad u|^(p-2) dV,
/// with the right-hand energy in the half-node Dirichlet form (the form in
/// which the discrete operator is exactly self-adjoint).
pub fn poincare_sides(
    geom: &Geometry,
    params: &ParamSet,
    u: &Field,
    psi: &Field,
    eps: f64,
    lambda1: f64,
) -> Result<(f64, f64), SpectralError> {
    let lpsi = operators::linearized_apply(geom, params, u, psi, eps)?;
    let lhs = geom.integrate(&lpsi.map(|v| v * v));
    let coef = operators::linearized_coefficient(geom, params, u, eps)?;
    let energy: Vec<f64> = (0..geom.num_half_nodes())
        .map(|k| {
            let g = geom.half_gradient(psi, k);
            coef[k] * g * g
        })
        .collect();
    let rhs = lambda1 * geom.integrate_half(&energy);
    Ok((lhs, rhs))
}

/// Report of the Rayleigh-quotient minimization.
#[derive(Debug, Clone)]
pub struct LambdaStarReport {
    /// Smallest quotient found; an upper bound for the threshold within the
    /// axisymmetric candidate class.
    pub best_value: f64,
    pub best_field: Field,
    pub candidates_evaluated: usize,
    /// Description of the constraint normalization.
    pub normalization: &'static str,
    /// Quotient at amplitudes {0.5x, 1x, 2x} of the best field; equal for
    /// p = 2 (degree-2 homogeneity), documenting non-homogeneity otherwise.
    pub scale_sensitivity: [f64; 3],
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct LambdaStarOpts {
    pub descent_steps: usize,
    pub eps: f64,
    /// Positivity floor for candidate fields.
    pub floor: f64,
}

impl Default for LambdaStarOpts {
    fn default() -> Self {
        LambdaStarOpts { descent_steps: 40, eps: 0.0, floor: 1e-6 }
    }
}

/// The Rayleigh quotient of the rigidity threshold:
/// [(1-theta) int (Delta_p u)^2 + theta n/(n-1) int (|Q_a u|_A^2 + ric)] /
/// int u^(2p-4) |grad u|^p. None for (near-)constant candidates.
pub fn rayleigh_quotient(
    geom: &Geometry,
    params: &ParamSet,
    u: &Field,
    eps: f64,
) -> Result<Option<f64>, SpectralError> {
    let acc = QuotientAccumulator::new(geom, params, u, eps)?;
    Ok(acc.value())
}

/// Incrementally updatable quotient state: every nodal integrand depends only
/// on (u_{i-1}, u_i, u_{i+1}), so a single-node bump touches three nodal
/// contributions and the finite-difference gradient costs O(N) per sweep.
struct QuotientAccumulator<'a> {
    geom: &'a Geometry,
    params: &'a ParamSet,
    theta: f64,
    c_q: f64,
    eps: f64,
    u: Vec<f64>,
    num_c: Vec<f64>,
    den_c: Vec<f64>,
    num: f64,
    den: f64,
}

impl<'a> QuotientAccumulator<'a> {
    fn new(
        geom: &'a Geometry,
        params: &'a ParamSet,
        u: &Field,
        eps: f64,
    ) -> Result<Self, SpectralError> {
        let dc = derive_constants(params).map_err(OpError::from)?;
        let c_q = operators::q_a_coupling(params, dc.beta, dc.theta);
        let mut acc = QuotientAccumulator {
            geom,
            params,
            theta: dc.theta,
            c_q,
            eps,
            u: u.values.clone(),
            num_c: vec![0.0; geom.num_nodes()],
            den_c: vec![0.0; geom.num_nodes()],
            num: 0.0,
            den: 0.0,
        };
        for i in 0..geom.num_nodes() {
            let (nc, dc_) = acc.contrib(i);
            acc.num_c[i] = nc;
            acc.den_c[i] = dc_;
            acc.num += nc;
            acc.den += dc_;
        }
        Ok(acc)
    }

    fn neighbor(&self, i: isize) -> f64 {
        let nodes = self.geom.num_nodes() as isize;
        if self.geom.is_periodic() {
            self.u[(i.rem_euclid(nodes)) as usize]
        } else {
            // even reflection at the poles
            let j = if i < 0 {
                -i
            } else if i >= nodes {
                2 * (nodes - 1) - i
            } else {
                i
            };
            self.u[j as usize]
        }
    }

    /// Quadrature-weighted numerator/denominator integrand at node i.
    fn contrib(&self, i: usize) -> (f64, f64) {
        let geom = self.geom;
        let params = self.params;
        let p = params.p;
        let n = params.nf();
        let h = geom.h;
        let ui = self.u[i];
        let left = self.neighbor(i as isize - 1);
        let right = self.neighbor(i as isize + 1);
        let du = (right - left) / (2.0 * h);
        let d2u = (right - 2.0 * ui + left) / (h * h);
        let mut at_pole = false;
        let tang = if geom.is_periodic() {
            0.0
        } else {
            let nn = geom.resolution;
            if i == 0 || i == nn {
                at_pole = true;
                d2u
            } else {
                let t = geom.grid[i];
                fmath::cos(t) / fmath::sin(t) * du
            }
        };
        let a = if at_pole && p < 2.0 {
            // cell-effective gradient at the poles (u' vanishes exactly there)
            self.eps.max(fmath::abs(d2u) * h * 0.25)
        } else {
            fmath::grad_pow(du, 1.0, self.eps)
        };
        let x = fmath::pow(a, p - 2.0);
        let d = x * ((p - 1.0) * d2u + (n - 1.0) * tang);
        let gp = fmath::pow(a, p) / ui;
        let bu = (x * d2u - d / (n * (p - 1.0)), x * tang - d / n);
        let gu = ((n - 1.0) / n * gp, -(p - 1.0) / n * gp);
        let qu = (bu.0 - self.c_q * gu.0, bu.1 - self.c_q * gu.1);
        let qnorm = (p - 1.0) * (p - 1.0) * qu.0 * qu.0 + (n - 1.0) * qu.1 * qu.1;
        let ric = geom.ricci_constant * fmath::pow(a, 2.0 * p - 2.0);
        let w = geom.quad_weight(i);
        let num = w * ((1.0 - self.theta) * d * d + self.theta * n / (n - 1.0) * (qnorm + ric));
        let den = w * fmath::pow(ui, 2.0 * p - 4.0) * fmath::pow(a, p);
        (num, den)
    }

    fn value(&self) -> Option<f64> {
        if self.den <= 1e-28 * (1.0 + self.num.abs()) {
            None
        } else {
            Some(self.num / self.den)
        }
    }

    /// Quotient after bumping node i by delta, computed from local updates.
    fn bumped_value(&mut self, i: usize, delta: f64) -> Option<f64> {
        let nodes = self.geom.num_nodes();
        let old = self.u[i];
        self.u[i] = old + delta;
        let mut num = self.num;
        let mut den = self.den;
        for j in (i as isize - 1)..=(i as isize + 1) {
            let jj = if self.geom.is_periodic() {
                (j.rem_euclid(nodes as isize)) as usize
            } else if j < 0 || j >= nodes as isize {
                continue;
            } else {
                j as usize
            };
            let (nc, dc) = self.contrib(jj);
            num += nc - self.num_c[jj];
            den += dc - self.den_c[jj];
        }
        self.u[i] = old;
        if den <= 1e-28 * (1.0 + num.abs()) {
            None
        } else {
            Some(num / den)
        }
    }
}

/// Mass int u^(beta q) dV used as the candidate normalization.
pub fn flow_mass(geom: &Geometry, params: &ParamSet, u: &Field) -> Result<f64, SpectralError> {
    let dc = derive_constants(params).map_err(OpError::from)?;
    Ok(geom.integrate(&u.map(|v| fmath::pow(v, dc.beta * params.q))))
}

fn normalize_mass(geom: &Geometry, params: &ParamSet, u: &mut Field) -> Result<(), SpectralError> {
    let dc = derive_constants(params).map_err(OpError::from)?;
    let mass = geom.integrate(&u.map(|v| fmath::pow(v, dc.beta * params.q)));
    let c = fmath::pow(mass, -1.0 / (dc.beta * params.q));
    for v in u.values.iter_mut() {
        *v *= c;
    }
    Ok(())
}

/// Minimize the Rayleigh quotient by projected finite-difference gradient
/// descent under the normalization int u^(beta q) dV = 1, seeded from the
/// low-mode perturbation library plus any caller-provided candidates.
/// The reported minimum is an upper bound within the axisymmetric class.
pub fn lambda_star_estimate(
    geom: &Geometry,
    params: &ParamSet,
    opts: &LambdaStarOpts,
    extra_seeds: &[Field],
) -> Result<LambdaStarReport, SpectralError> {
    let mut seeds: Vec<Field> = crate::fields::perturbation_library()
        .iter()
        .map(|s| s.sample(geom))
        .collect();
    seeds.extend(extra_seeds.iter().cloned());

    let dc = derive_constants(params).map_err(OpError::from)?;
    let mut best: Option<(f64, Field)> = None;
    let mut evaluated = 0usize;
    let mut converged = true;

    for seed in seeds {
        let mut u = seed;
        if u.min() <= 0.0 {
            u = u.map(|v| v.max(opts.floor));
        }
        normalize_mass(geom, params, &mut u)?;
        let Some(mut q) = rayleigh_quotient(geom, params, &u, opts.eps)? else {
            continue; // constants are not admissible candidates
        };
        evaluated += 1;

        let mut step = 0.05;
        let mut stalled = 0usize;
        for _ in 0..opts.descent_steps {
            let grad = fd_gradient(geom, params, &u, opts.eps)?;
            // Project out the mass-constraint normal direction.
            let normal: Vec<f64> = (0..geom.num_nodes())
                .map(|i| {
                    geom.quad_weight(i)
                        * dc.beta
                        * params.q
                        * fmath::pow(u.values[i], dc.beta * params.q - 1.0)
                })
                .collect();
            let gn: f64 = grad.iter().zip(normal.iter()).map(|(&g, &m)| g * m).sum();
            let nn: f64 = normal.iter().map(|&m| m * m).sum();
            let proj: Vec<f64> = grad
                .iter()
                .zip(normal.iter())
                .map(|(&g, &m)| g - gn / nn * m)
                .collect();
            let gmax = proj.iter().fold(0.0f64, |a, &v| a.max(fmath::abs(v)));
            if gmax == 0.0 {
                break;
            }

            // Backtracking step on the normalized manifold.
            let mut improved = false;
            let mut s = step;
            for _ in 0..30 {
                let mut trial = Field::new(
                    u.values
                        .iter()
                        .zip(proj.iter())
                        .map(|(&v, &g)| (v - s * g / gmax).max(opts.floor))
                        .collect(),
                );
                normalize_mass(geom, params, &mut trial)?;
                if let Some(qt) = rayleigh_quotient(geom, params, &trial, opts.eps)? {
                    evaluated += 1;
                    if qt < q {
                        u = trial;
                        q = qt;
                        improved = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            if improved {
                step = (s * 1.5).min(0.1);
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= 2 {
                    break;
                }
            }
        }
        if !u.values.iter().all(|v| v.is_finite()) {
            converged = false;
            continue;
        }
        match &best {
            Some((bq, _)) if *bq <= q => {}
            _ => best = Some((q, u)),
        }
    }

    let (best_value, best_field) = best.ok_or(SpectralError::SingularOperator)?;
    let mut scale_sensitivity = [0.0; 3];
    for (slot, factor) in [0.5, 1.0, 2.0].iter().enumerate() {
        let scaled = best_field.map(|v| v * factor);
        scale_sensitivity[slot] =
            rayleigh_quotient(geom, params, &scaled, opts.eps)?.unwrap_or(f64::NAN);
    }
    Ok(LambdaStarReport {
        best_value,
        best_field,
        candidates_evaluated: evaluated,
        normalization: "int u^(beta q) dV = 1",
        scale_sensitivity,
        converged,
    })
}

/// Central finite-difference gradient of the quotient with incremental
/// re-evaluation (only the three touched nodal contributions are recomputed).
fn fd_gradient(
    geom: &Geometry,
    params: &ParamSet,
    u: &Field,
    eps: f64,
) -> Result<Vec<f64>, SpectralError> {
    let mut acc = QuotientAccumulator::new(geom, params, u, eps)?;
    let n = geom.num_nodes();
    let mut grad = vec![0.0; n];
    for i in 0..n {
        let delta = 1e-6 * (1.0 + fmath::abs(u.values[i]));
        let qp = acc.bumped_value(i, delta);
        let qm = acc.bumped_value(i, -delta);
        grad[i] = match (qp, qm) {
            (Some(a), Some(b)) => (a - b) / (2.0 * delta),
            _ => 0.0,
        };
    }
    Ok(grad)
}
