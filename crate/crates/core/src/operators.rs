//! Differential-geometric kernel: the p-Laplacian in conservative form, its
//! linearization, and the closed-form tensor algebra of the axisymmetric
//! reduction.
//!
//! The 2-tensor A = Id + (p-2) grad u (x) grad u / |grad u|^2 has exactly two
//! eigenvalues: p-1 along grad u and 1 on the orthogonal complement. For an
//! axisymmetric function the Hessian is diagonal in the same frame, with the
//! radial entry u'' and n-1 tangential entries cot(theta) u' (0 on the
//! torus). Every A-norm quantity below is assembled from those two scalars:
//!
//!   |hess u|_A^2        = (p-1)^2 u''^2 + (n-1) (cot u')^2
//!   tr_A(hess u)        = (p-1) u'' + (n-1) cot u'
//!   Delta_p u           = |u'|^(p-2) tr_A(hess u)              (pointwise)
//!   Bu  (A-trace-free)  : radial |u'|^(p-2) u'' - Delta_p u/(n(p-1)),
//!                         tangential |u'|^(p-2) cot u' - Delta_p u/n
//!   Gu                  : radial (n-1)/n |u'|^p/u,
//!                         tangential -(p-1)/n |u'|^p/u
//!   [S,T]_A             = (p-1)^2 S_rad T_rad + (n-1) S_tan T_tan
//!
//! (the inverse tensor a = A^{-1} scales the radial direction by 1/(p-1),
//! which is where the mixed coefficients of Bu and Gu come from). Gradients
//! are regularized as |grad u|^2 -> |grad u|^2 + eps^2 throughout.

use crate::fmath;
use crate::geometry::{Field, Geometry};
use crate::params::{derive_constants, ParamError, ParamSet};
use alloc::{vec, vec::Vec};
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum OpError {
    /// p < 2 with eps = 0 and vanishing gradients makes the coefficient singular.
    DegenerateGradient,
    /// The operation divides by u and requires min u > 0.
    NonPositiveField { min: f64 },
    Param(ParamError),
}

impl fmt::Display for OpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpError::DegenerateGradient => {
                write!(f, "DegenerateGradient: p < 2 with eps = 0 at a critical point")
            }
            OpError::NonPositiveField { min } => {
                write!(f, "NonPositiveField: min value {min} must be > 0")
            }
            OpError::Param(e) => write!(f, "{e}"),
        }
    }
}

impl From<ParamError> for OpError {
    fn from(e: ParamError) -> Self {
        OpError::Param(e)
    }
}

/// Default gradient regularization: 1e-8 times the gradient scale of u.
pub fn default_eps(geom: &Geometry, u: &Field) -> f64 {
    1e-8 * geom.derivative(u).max_abs()
}

/// Conservative divergence of a half-node flux: node i receives
/// (flux_right - flux_left) / cell_volume, with zero flux past the sphere
/// poles and periodic wrap on the torus. Integrates to zero exactly.
pub fn divergence_of_flux(geom: &Geometry, flux: &[f64]) -> Field {
    debug_assert_eq!(flux.len(), geom.num_half_nodes());
    let nodes = geom.num_nodes();
    let mut out = vec![0.0; nodes];
    if geom.is_periodic() {
        let nn = geom.resolution;
        for i in 0..nn {
            let left = flux[(i + nn - 1) % nn];
            out[i] = (flux[i] - left) / geom.cell_volume(i);
        }
    } else {
        let nn = geom.resolution;
        out[0] = flux[0] / geom.cell_volume(0);
        for i in 1..nn {
            out[i] = (flux[i] - flux[i - 1]) / geom.cell_volume(i);
        }
        out[nn] = -flux[nn - 1] / geom.cell_volume(nn);
    }
    Field::new(out)
}

/// Weighted flux rho * coef * u' at every half node.
fn weighted_flux(geom: &Geometry, coef_half: &[f64], u: &Field) -> Vec<f64> {
    (0..geom.num_half_nodes())
        .map(|k| geom.half_density(k) * coef_half[k] * geom.half_gradient(u, k))
        .collect()
}

/// div(coef grad u) with a prescribed half-node coefficient.
pub fn divergence_form(geom: &Geometry, coef_half: &[f64], u: &Field) -> Field {
    divergence_of_flux(geom, &weighted_flux(geom, coef_half, u))
}

/// Delta_p u = div(|grad u|^(p-2) grad u) in conservative (flux-difference)
/// form, so that its integral vanishes to roundoff on the closed manifold.
pub fn p_laplacian(geom: &Geometry, params: &ParamSet, u: &Field, eps: f64) -> Field {
    let p = params.p;
    let flux: Vec<f64> = (0..geom.num_half_nodes())
        .map(|k| {
            let g = geom.half_gradient(u, k);
            geom.half_density(k) * fmath::degenerate_flux(g, p, eps)
        })
        .collect();
    divergence_of_flux(geom, &flux)
}

/// The linearized operator of Delta_p at u applied to psi:
/// div(|grad u|^(p-2) A grad psi). In the axisymmetric reduction every
/// gradient is radial, so A acts as the scalar p-1 and
/// L psi = div((p-1)|grad u|^(p-2) psi'). Self-adjoint by construction of
/// the flux-difference stencil.
pub fn linearized_apply(
    geom: &Geometry,
    params: &ParamSet,
    u: &Field,
    psi: &Field,
    eps: f64,
) -> Result<Field, OpError> {
    let coef = linearized_coefficient(geom, params, u, eps)?;
    Ok(divergence_form(geom, &coef, psi))
}

/// Half-node coefficient (p-1)|grad u|^(p-2) of the linearized operator.
pub fn linearized_coefficient(
    geom: &Geometry,
    params: &ParamSet,
    u: &Field,
    eps: f64,
) -> Result<Vec<f64>, OpError> {
    let p = params.p;
    let mut coef = Vec::with_capacity(geom.num_half_nodes());
    for k in 0..geom.num_half_nodes() {
        let g = geom.half_gradient(u, k);
        if p < 2.0 && eps == 0.0 && g == 0.0 {
            return Err(OpError::DegenerateGradient);
        }
        coef.push((p - 1.0) * fmath::grad_pow(g, p - 2.0, eps));
    }
    Ok(coef)
}

/// Nodal frame data shared by the closed-form diagnostics.
struct Frame {
    /// signed u'
    du: Vec<f64>,
    /// regularized |grad u|
    agrad: Vec<f64>,
    /// u''
    radial: Vec<f64>,
    /// cot(theta) u' (0 on the torus), one copy per tangential direction
    tangential: Vec<f64>,
}

fn frame(geom: &Geometry, u: &Field, eps: f64, p: f64) -> Frame {
    let du = geom.derivative(u);
    let (radial, tangential) = geom.hessian_components(u);
    let mut agrad: Vec<f64> = du.values.iter().map(|&g| fmath::grad_pow(g, 1.0, eps)).collect();
    if p < 2.0 {
        pole_safe_agrad(geom, &mut agrad, &radial.values, eps);
    }
    Frame {
        du: du.values,
        agrad,
        radial: radial.values,
        tangential: tangential.values,
    }
}

/// At the sphere poles u' vanishes exactly, so the regularized |grad u|
/// degenerates to eps and negative powers |grad u|^(2p-4) (p < 2) blow up as
/// eps^(2p-4) even though the surrounding cell integral is finite. Replace
/// the pole value by the cell-effective gradient |u''| h/4 (the gradient of
/// an axisymmetric function grows linearly off the pole), which keeps the
/// pole-cell contribution bounded and eps-independent. Only needed where
/// negative powers of the gradient appear, i.e. p < 2.
pub(crate) fn pole_safe_agrad(geom: &Geometry, agrad: &mut [f64], radial: &[f64], eps: f64) {
    if geom.is_periodic() {
        return;
    }
    let nn = geom.resolution;
    for i in [0usize, nn] {
        agrad[i] = eps.max(fmath::abs(radial[i]) * geom.h * 0.25);
    }
}

/// Pointwise closed-form diagnostics of the A-weighted tensor algebra.
#[derive(Debug, Clone)]
pub struct TensorDiagnostics {
    /// Delta_p u in the pointwise closed form |u'|^(p-2)((p-1)u'' + (n-1)cot u').
    pub p_lap: Field,
    /// |hess u|_A^2.
    pub hess_a_norm_sq: Field,
    /// J = |grad u|^(2p-4)|hess u|_A^2 - (Delta_p u)^2/n  (>= 0 pointwise).
    pub j: Field,
    /// |Bu|_A^2.
    pub b_norm_sq: Field,
    /// |Gu|_A^2 = (n-1)(p-1)^2/n |grad u|^(2p)/u^2.
    pub g_norm_sq: Field,
    /// [Bu, Gu]_A.
    pub bg_bracket: Field,
    /// |Q_a u|_A^2 at the canonical theta.
    pub q_a_norm_sq: Field,
    /// |grad u|^(2p-4) Ric(grad u, grad u) = K |grad u|^(2p-2).
    pub ric_term: Field,
}

/// Frame components (radial, tangential) of Bu at a node.
#[inline]
fn bu_components(p: f64, n: f64, x: f64, r: f64, t: f64, d: f64) -> (f64, f64) {
    (x * r - d / (n * (p - 1.0)), x * t - d / n)
}

/// Frame components of Gu at a node (gp = |grad u|^p / u).
#[inline]
fn gu_components(p: f64, n: f64, gp: f64) -> (f64, f64) {
    ((n - 1.0) / n * gp, -(p - 1.0) / n * gp)
}

/// A-weighted pairing of two diagonal tensors given in frame components.
#[inline]
fn a_pair(p: f64, n: f64, s: (f64, f64), t: (f64, f64)) -> f64 {
    (p - 1.0) * (p - 1.0) * s.0 * t.0 + (n - 1.0) * s.1 * t.1
}

pub fn tensor_diagnostics(
    geom: &Geometry,
    params: &ParamSet,
    u: &Field,
    eps: f64,
) -> Result<TensorDiagnostics, OpError> {
    if !u.is_positive() {
        return Err(OpError::NonPositiveField { min: u.min() });
    }
    let dc = derive_constants(params)?;
    let p = params.p;
    let n = params.nf();
    let k_ric = geom.ricci_constant;
    let fr = frame(geom, u, eps, params.p);
    let nn = geom.num_nodes();

    // Q_a coupling at the canonical theta: p(n-1) beta (q-1) / (2 theta (p-1) m).
    let c_q = q_a_coupling(params, dc.beta, dc.theta);

    let mut p_lap = vec![0.0; nn];
    let mut hess = vec![0.0; nn];
    let mut j = vec![0.0; nn];
    let mut bnorm = vec![0.0; nn];
    let mut gnorm = vec![0.0; nn];
    let mut bg = vec![0.0; nn];
    let mut qnorm = vec![0.0; nn];
    let mut ric = vec![0.0; nn];

    for i in 0..nn {
        let (r, t) = (fr.radial[i], fr.tangential[i]);
        let a = fr.agrad[i];
        let x = fmath::pow(a, p - 2.0);
        let d = x * ((p - 1.0) * r + (n - 1.0) * t);
        let h2 = (p - 1.0) * (p - 1.0) * r * r + (n - 1.0) * t * t;
        let gp = fmath::pow(a, p) / u.values[i];

        let bu = bu_components(p, n, x, r, t, d);
        let gu = gu_components(p, n, gp);
        let qu = (bu.0 - c_q * gu.0, bu.1 - c_q * gu.1);

        p_lap[i] = d;
        hess[i] = h2;
        j[i] = x * x * h2 - d * d / n;
        bnorm[i] = a_pair(p, n, bu, bu);
        gnorm[i] = a_pair(p, n, gu, gu);
        bg[i] = a_pair(p, n, bu, gu);
        qnorm[i] = a_pair(p, n, qu, qu);
        ric[i] = k_ric * fmath::pow(a, 2.0 * p - 2.0);
    }

    Ok(TensorDiagnostics {
        p_lap: Field::new(p_lap),
        hess_a_norm_sq: Field::new(hess),
        j: Field::new(j),
        b_norm_sq: Field::new(bnorm),
        g_norm_sq: Field::new(gnorm),
        bg_bracket: Field::new(bg),
        q_a_norm_sq: Field::new(qnorm),
        ric_term: Field::new(ric),
    })
}

/// Coupling constant of Q_a^theta u = Bu - c Gu.
pub fn q_a_coupling(params: &ParamSet, beta: f64, theta: f64) -> f64 {
    let n = params.nf();
    let p = params.p;
    // kappa + (beta-1)(p-1) = beta (q-1)
    let kb = p - 1.0 + beta * (params.q - p) + (beta - 1.0) * (p - 1.0);
    p * (n - 1.0) * kb / (2.0 * theta * (p - 1.0) * params.m())
}

/// |Q_a^theta u|_A^2 for a caller-chosen theta (the canonical beta is used in
/// the coupling).
pub fn q_a_theta_norm_sq(
    geom: &Geometry,
    params: &ParamSet,
    u: &Field,
    theta: f64,
    eps: f64,
) -> Result<Field, OpError> {
    if !u.is_positive() {
        return Err(OpError::NonPositiveField { min: u.min() });
    }
    let dc = derive_constants(params)?;
    let c_q = q_a_coupling(params, dc.beta, theta);
    let p = params.p;
    let n = params.nf();
    let fr = frame(geom, u, eps, params.p);
    let nn = geom.num_nodes();
    let mut out = vec![0.0; nn];
    for i in 0..nn {
        let (r, t) = (fr.radial[i], fr.tangential[i]);
        let a = fr.agrad[i];
        let x = fmath::pow(a, p - 2.0);
        let d = x * ((p - 1.0) * r + (n - 1.0) * t);
        let gp = fmath::pow(a, p) / u.values[i];
        let bu = bu_components(p, n, x, r, t, d);
        let gu = gu_components(p, n, gp);
        let qu = (bu.0 - c_q * gu.0, bu.1 - c_q * gu.1);
        out[i] = a_pair(p, n, qu, qu);
    }
    Ok(Field::new(out))
}

/// Residual of the p-Bochner formula
///   (1/p) L(|grad u|^p)
///     - |grad u|^(2p-4)(|hess u|_A^2 + Ric(grad u, grad u))
///     - |grad u|^(p-2) <grad Delta_p u, grad u>
/// evaluated with nested stencils. Second-order in h where |grad u| is
/// bounded away from zero; the derivative of Delta_p u switches to one-sided
/// second-order stencils next to the sphere poles.
pub fn bochner_residual(geom: &Geometry, params: &ParamSet, u: &Field, eps: f64) -> Field {
    let p = params.p;
    let n = params.nf();
    let k_ric = geom.ricci_constant;
    let fr = frame(geom, u, eps, params.p);
    let nn = geom.num_nodes();

    // z = |grad u|^p at the nodes, then L z with the linearized coefficient.
    let z = Field::new(fr.agrad.iter().map(|&a| fmath::pow(a, p)).collect());
    let coef: Vec<f64> = (0..geom.num_half_nodes())
        .map(|k| {
            let g = geom.half_gradient(u, k);
            (p - 1.0) * fmath::grad_pow(g, p - 2.0, eps)
        })
        .collect();
    let lz = divergence_form(geom, &coef, &z);

    let plap = p_laplacian(geom, params, u, eps);
    let dplap = derivative_widened(geom, &plap);

    let mut out = vec![0.0; nn];
    for i in 0..nn {
        let a = fr.agrad[i];
        let hess = (p - 1.0) * (p - 1.0) * fr.radial[i] * fr.radial[i]
            + (n - 1.0) * fr.tangential[i] * fr.tangential[i];
        let ric = k_ric * a * a;
        let transport = fmath::pow(a, p - 2.0) * dplap.values[i] * fr.du[i];
        out[i] = lz.values[i] / p - fmath::pow(a, 2.0 * p - 4.0) * (hess + ric) - transport;
    }
    Field::new(out)
}

/// Nodal derivative that avoids reaching across the sphere poles: one-sided
/// second-order stencils at the first interior nodes, zero at the poles
/// (where the transport term carries a u' = 0 factor anyway).
fn derivative_widened(geom: &Geometry, f: &Field) -> Field {
    if geom.is_periodic() {
        return geom.derivative(f);
    }
    let nn = geom.resolution;
    let h = geom.h;
    let v = &f.values;
    let mut out = vec![0.0; nn + 1];
    for i in 2..nn.saturating_sub(1) {
        out[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
    }
    if nn >= 3 {
        out[1] = (-3.0 * v[1] + 4.0 * v[2] - v[3]) / (2.0 * h);
        out[nn - 1] = (3.0 * v[nn - 1] - 4.0 * v[nn - 2] + v[nn - 3]) / (2.0 * h);
    }
    out[0] = 0.0;
    out[nn] = 0.0;
    Field::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, GeometryKind};

    fn sphere(n: u32, nn: usize) -> Geometry {
        build_geometry(GeometryKind::SphereAxisymmetric, n, nn).unwrap()
    }

    fn torus(nn: usize) -> Geometry {
        build_geometry(GeometryKind::TorusOneD, 2, nn).unwrap()
    }

    fn cos_field(g: &Geometry) -> Field {
        Field::new(g.grid.iter().map(|&t| fmath::cos(t)).collect())
    }

    #[test]
    fn p_laplacian_of_constant_vanishes() {
        let g = sphere(3, 64);
        let ps = ParamSet::new(3, 2.5, 3.0, 0.0).unwrap();
        let u = Field::constant(&g, 4.2);
        assert_eq!(p_laplacian(&g, &ps, &u, 0.0).max_abs(), 0.0);
    }

    #[test]
    fn laplacian_eigenfunction_on_sphere() {
        // p = 2, u = cos(theta): Delta u = -n cos(theta).
        for n in [3u32, 4] {
            let g = sphere(n, 400);
            let ps = ParamSet::new(n, 2.0, 3.0, 0.0).unwrap();
            let u = cos_field(&g);
            let lap = p_laplacian(&g, &ps, &u, 0.0);
            let h2 = g.h * g.h;
            for i in 0..g.num_nodes() {
                let expect = -(n as f64) * fmath::cos(g.grid[i]);
                assert!(
                    (lap.values[i] - expect).abs() < 12.0 * h2,
                    "n={n} node {i}: {} vs {expect}",
                    lap.values[i]
                );
            }
        }
    }

    #[test]
    fn p3_laplacian_on_torus_matches_closed_form() {
        // u = sin x, p = 3: Delta_3 u = (|cos|cos)' = -2|cos x| sin x.
        let g = torus(512);
        let ps = ParamSet::relaxed(2, 3.0, 4.0, 0.0).unwrap();
        let u = Field::new(g.grid.iter().map(|&x| fmath::sin(x)).collect());
        let eps = default_eps(&g, &u);
        let lap = p_laplacian(&g, &ps, &u, eps);
        let h2 = g.h * g.h;
        for i in 0..g.num_nodes() {
            let x = g.grid[i];
            if fmath::abs(fmath::cos(x)) < 0.2 {
                continue; // away from the gradient kink
            }
            let expect = -2.0 * fmath::abs(fmath::cos(x)) * fmath::sin(x);
            assert!(
                (lap.values[i] - expect).abs() < 40.0 * h2,
                "node {i}: {} vs {expect}",
                lap.values[i]
            );
        }
    }

    #[test]
    fn conservative_integral_vanishes() {
        let g = sphere(3, 200);
        let ps = ParamSet::new(3, 2.6, 3.0, 0.0).unwrap();
        let u = Field::new(g.grid.iter().map(|&t| fmath::exp(fmath::cos(t))).collect());
        let eps = default_eps(&g, &u);
        let lap = p_laplacian(&g, &ps, &u, eps);
        assert!(g.integrate(&lap).abs() < 1e-12 * lap.max_abs());

        let gt = torus(128);
        let pst = ParamSet::relaxed(2, 3.2, 4.0, 0.0).unwrap();
        let ut = Field::new(gt.grid.iter().map(|&x| 2.0 + fmath::sin(x)).collect());
        let lapt = p_laplacian(&gt, &pst, &ut, default_eps(&gt, &ut));
        assert!(gt.integrate(&lapt).abs() < 1e-12 * lapt.max_abs());
    }

    #[test]
    fn linearized_is_selfadjoint_and_plain_laplacian_at_p2() {
        let g = sphere(3, 128);
        let ps = ParamSet::new(3, 2.0, 4.0, 0.0).unwrap();
        let u = Field::new(g.grid.iter().map(|&t| fmath::exp(0.5 * fmath::cos(t))).collect());
        let psi = Field::new(g.grid.iter().map(|&t| fmath::cos(2.0 * t)).collect());
        let phi = Field::new(g.grid.iter().map(|&t| 1.0 / (2.0 + fmath::cos(t))).collect());
        let lpsi = linearized_apply(&g, &ps, &u, &psi, 0.0).unwrap();
        let lphi = linearized_apply(&g, &ps, &u, &phi, 0.0).unwrap();
        let a = g.integrate(&lpsi.zip(&phi, |x, y| x * y));
        let b = g.integrate(&lphi.zip(&psi, |x, y| x * y));
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0), "{a} vs {b}");
        // p = 2: L psi = Delta psi independent of u.
        let plain = p_laplacian(&g, &ps, &psi, 0.0);
        for i in 0..g.num_nodes() {
            assert!((lpsi.values[i] - plain.values[i]).abs() < 1e-12 * plain.max_abs());
        }
    }

    #[test]
    fn linearized_of_u_is_scaled_p_laplacian() {
        // A(grad u) = (p-1) grad u identically, so L u = (p-1) Delta_p u
        // holds exactly for the matching half-node discretization.
        let g = torus(128);
        let ps = ParamSet::relaxed(2, 2.7, 4.0, 0.0).unwrap();
        let u = Field::new(g.grid.iter().map(|&x| 2.0 + fmath::sin(x)).collect());
        let eps = default_eps(&g, &u);
        let lu = linearized_apply(&g, &ps, &u, &u, eps).unwrap();
        let plap = p_laplacian(&g, &ps, &u, eps);
        for i in 0..g.num_nodes() {
            assert!(
                (lu.values[i] - (ps.p - 1.0) * plap.values[i]).abs() < 1e-12 * lu.max_abs(),
                "node {i}"
            );
        }
    }

    #[test]
    fn degenerate_gradient_is_flagged() {
        let g = torus(64);
        let ps = ParamSet::new(3, 1.5, 2.0, 0.0).unwrap();
        let u = Field::constant(&g, 1.0); // critical everywhere
        let psi = Field::new(g.grid.iter().map(|&x| fmath::sin(x)).collect());
        assert!(matches!(
            linearized_apply(&g, &ps, &u, &psi, 0.0),
            Err(OpError::DegenerateGradient)
        ));
        assert!(linearized_apply(&g, &ps, &u, &psi, 1e-8).is_ok());
    }

    #[test]
    fn diagnostics_of_constant_vanish() {
        let g = sphere(3, 64);
        let ps = ParamSet::new(3, 2.5, 3.0, 0.0).unwrap();
        let u = Field::constant(&g, 2.0);
        let d = tensor_diagnostics(&g, &ps, &u, 0.0).unwrap();
        for f in [
            &d.p_lap,
            &d.hess_a_norm_sq,
            &d.j,
            &d.b_norm_sq,
            &d.g_norm_sq,
            &d.bg_bracket,
            &d.q_a_norm_sq,
            &d.ric_term,
        ] {
            assert_eq!(f.max_abs(), 0.0);
        }
    }

    #[test]
    fn b_norm_two_routes_agree() {
        // |Bu|_A^2 from the frame expansion vs the identity
        // |grad u|^(2p-4)|hess|_A^2 - (Delta_p u)^2 / n.
        let g = sphere(3, 200);
        let ps = ParamSet::new(3, 2.4, 3.0, 0.0).unwrap();
        let u = Field::new(g.grid.iter().map(|&t| fmath::exp(fmath::cos(t))).collect());
        let eps = default_eps(&g, &u);
        let d = tensor_diagnostics(&g, &ps, &u, eps).unwrap();
        for i in 0..g.num_nodes() {
            let via_identity = d.j.values[i];
            let scale = d.b_norm_sq.max_abs().max(1e-30);
            assert!(
                (d.b_norm_sq.values[i] - via_identity).abs() < 1e-10 * scale,
                "node {i}: {} vs {}",
                d.b_norm_sq.values[i],
                via_identity
            );
        }
    }

    #[test]
    fn g_norm_matches_closed_form() {
        let g = torus(128);
        let ps = ParamSet::relaxed(2, 2.5, 4.0, 0.0).unwrap();
        let u = Field::new(g.grid.iter().map(|&x| 2.0 + fmath::sin(x)).collect());
        let eps = default_eps(&g, &u);
        let d = tensor_diagnostics(&g, &ps, &u, eps).unwrap();
        let n = ps.nf();
        let p = ps.p;
        let du = g.derivative(&u);
        for i in 0..g.num_nodes() {
            let a = fmath::grad_pow(du.values[i], 1.0, eps);
            let expect = (n - 1.0) * (p - 1.0) * (p - 1.0) / n
                * fmath::pow(a, 2.0 * p)
                / (u.values[i] * u.values[i]);
            assert!(
                (d.g_norm_sq.values[i] - expect).abs() < 1e-12 * expect.max(1e-30),
                "node {i}"
            );
        }
    }

    #[test]
    fn j_is_nonnegative_pointwise() {
        let g = sphere(3, 128);
        let ps = ParamSet::new(3, 2.2, 3.5, 0.0).unwrap();
        for spec in crate::fields::identity_corpus(GeometryKind::SphereAxisymmetric) {
            let u = spec.sample(&g);
            let eps = default_eps(&g, &u);
            let d = tensor_diagnostics(&g, &ps, &u, eps).unwrap();
            let floor = -1e-10 * d.j.max_abs().max(1e-30);
            assert!(d.j.min() >= floor, "{spec:?}: min J = {}", d.j.min());
        }
    }

    #[test]
    fn diagnostics_reject_nonpositive_fields() {
        let g = torus(64);
        let ps = ParamSet::relaxed(2, 2.0, 4.0, 0.0).unwrap();
        let u = Field::new(g.grid.iter().map(|&x| fmath::sin(x)).collect());
        assert!(matches!(
            tensor_diagnostics(&g, &ps, &u, 0.0),
            Err(OpError::NonPositiveField { .. })
        ));
    }

    #[test]
    fn bochner_residual_of_constant_vanishes() {
        let g = torus(64);
        let ps = ParamSet::relaxed(2, 2.0, 4.0, 0.0).unwrap();
        let u = Field::constant(&g, 3.0);
        assert_eq!(bochner_residual(&g, &ps, &u, 0.0).max_abs(), 0.0);
    }

    #[test]
    fn bochner_residual_second_order_on_torus() {
        // p = 2, u = sin x: the classical Bochner identity; interior max
        // residual should fall at order >= 1.8 across grid doublings.
        let ps = ParamSet::relaxed(2, 2.0, 4.0, 0.0).unwrap();
        let mut maxima = Vec::new();
        for nn in [128usize, 256, 512] {
            let g = torus(nn);
            let u = Field::new(g.grid.iter().map(|&x| fmath::sin(x)).collect());
            let res = bochner_residual(&g, &ps, &u, 0.0);
            maxima.push(res.max_abs());
        }
        let s1 = fmath::log2(maxima[0] / maxima[1]);
        let s2 = fmath::log2(maxima[1] / maxima[2]);
        assert!(s1 >= 1.8 && s2 >= 1.8, "slopes {s1}, {s2}; maxima {maxima:?}");
    }

    #[test]
    fn bochner_ric_term_on_sphere() {
        // p = 2: Ric(grad u, grad u) = (n-1)|grad u|^2 on the unit sphere,
        // and for u = cos theta the residual is O(h^2). The diagnostics check
        // uses the shifted positive field with the same gradient.
        let g = sphere(3, 400);
        let ps = ParamSet::new(3, 2.0, 4.0, 0.0).unwrap();
        let shifted = Field::new(g.grid.iter().map(|&t| 2.0 + fmath::cos(t)).collect());
        let d = tensor_diagnostics(&g, &ps, &shifted, 0.0).unwrap();
        let du = g.derivative(&shifted);
        // interior nodes; the poles carry the cell-effective gradient
        for i in 1..g.num_nodes() - 1 {
            let expect = 2.0 * du.values[i] * du.values[i];
            assert!((d.ric_term.values[i] - expect).abs() < 1e-12 + 1e-10 * expect);
        }
        let res = bochner_residual(&g, &ps, &cos_field(&g), 0.0);
        assert!(res.max_abs() < 60.0 * g.h * g.h, "max residual {}", res.max_abs());
    }
}
