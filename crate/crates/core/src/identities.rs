//! Verification harness: unconditional integral identities, on-shell
//! identities for solutions of the stationary equation, and the
//! interpolation inequality.
//!
//! Every identity is evaluated through two independent code paths: one side
//! goes through the conservative-stencil operators, the other through the
//! pointwise closed forms of the tensor algebra. The harness evaluates both
//! with the moment-corrected quadrature and fourth-order nodal stencils, so
//! the reported gap is dominated by the second-order consistency error of
//! the conservative operator itself. Pass tolerances are grid-calibrated per
//! identity.

use crate::fmath;
use crate::geometry::{Field, Geometry, GeometryKind};
use crate::operators::{self, OpError};
use crate::params::{cdc_certificate, derive_constants, ParamError, ParamSet};
use crate::fields::FieldSpec;
use alloc::string::String;
use alloc::{vec, vec::Vec};
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum IdentityError {
    NonPositiveField { min: f64 },
    /// The substituted equation residual exceeds 10x its expected scale.
    NotOnShell { residual: f64, expected: f64 },
    /// q = s degenerates the interpolation coefficient.
    ExponentPole,
    Param(ParamError),
    Op(OpError),
}

impl fmt::Display for IdentityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IdentityError::NonPositiveField { min } => {
                write!(f, "NonPositiveField: min = {min}")
            }
            IdentityError::NotOnShell { residual, expected } => {
                write!(f, "NotOnShell: residual {residual} exceeds 10x expected {expected}")
            }
            IdentityError::ExponentPole => write!(f, "ExponentPole: q = s"),
            IdentityError::Param(e) => write!(f, "{e}"),
            IdentityError::Op(e) => write!(f, "{e}"),
        }
    }
}

impl From<ParamError> for IdentityError {
    fn from(e: ParamError) -> Self {
        IdentityError::Param(e)
    }
}

impl From<OpError> for IdentityError {
    fn from(e: OpError) -> Self {
        IdentityError::Op(e)
    }
}

/// Relative-gap floor so that 0 = 0 identities report cleanly.
pub const REL_GAP_FLOOR: f64 = 1e-14;

/// Grid-calibrated tolerance constants: pass requires rel_gap < C / N^2
/// (1.6/N^2 is 1e-5 at N = 400). Lemma 3.2 pairs a flux-difference route
/// against nodal central-difference factors whose h^2 biases do not cancel;
/// the measured scheme constant is 3/8 h^2-relative on the torus (C ~ 15)
/// and up to ~30 for steep sphere fields, so its fixture constant is wider.
pub const GRID_TOL: &[(&str, f64)] = &[
    ("lemma_3_1", 1.6),
    ("lemma_3_2", 40.0),
    ("lemma_3_5", 12.0),
    ("bochner_integrated", 2.5),
];

/// Condition factors for on-shell identities: the admissible relative gap is
/// C_grid/N^2 + cond * residual_norm / scale.
pub const ONSHELL_COND: &[(&str, f64)] = &[
    ("substituted_equation", 10.0),
    ("aim_1", 100.0),
    ("aim_2", 100.0),
    ("aim_3", 100.0),
    ("master_2_1", 400.0),
];

fn grid_tol(name: &str, resolution: usize) -> f64 {
    let c = GRID_TOL.iter().find(|(n, _)| *n == name).map(|(_, c)| *c).unwrap_or(1.6);
    c / (resolution as f64 * resolution as f64)
}

fn onshell_cond(name: &str) -> f64 {
    ONSHELL_COND.iter().find(|(n, _)| *n == name).map(|(_, c)| *c).unwrap_or(100.0)
}

fn grid_tol_onshell(name: &str, resolution: usize) -> f64 {
    // on-shell relations mix nested stencils and steep powers of u
    let c = match name {
        "master_2_1" => 40.0,
        _ => 16.0,
    };
    c / (resolution as f64 * resolution as f64)
}

#[derive(Debug, Clone)]
pub struct IdentityReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_gap: f64,
    pub rel_gap: f64,
    /// log2 gap ratio across grid doublings, when a refinement study ran.
    pub refinement_slope: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl IdentityReport {
    fn two_sided(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let abs_gap = fmath::abs(lhs - rhs);
        let rel_gap = abs_gap / fmath::abs(lhs).max(fmath::abs(rhs)).max(REL_GAP_FLOOR);
        IdentityReport {
            name: String::from(name),
            lhs,
            rhs,
            abs_gap,
            rel_gap,
            refinement_slope: None,
            tolerance,
            pass: rel_gap < tolerance,
        }
    }
}

/// Nodal frame with the pole-safe regularized gradient; feeds the pointwise
/// route of every identity side. The stencils match the conservative-operator
/// order so that the leading truncation errors of the two routes stay
/// commensurate and the reported gap reflects the identity, not one route's
/// noise.
struct PrecisionFrame {
    agrad: Vec<f64>,
    radial: Vec<f64>,
    tangential: Vec<f64>,
}

fn precision_frame(geom: &Geometry, u: &Field, eps: f64, p: f64) -> PrecisionFrame {
    let du = geom.derivative(u);
    let (radial, tangential) = geom.hessian_components(u);
    let mut agrad: Vec<f64> =
        du.values.iter().map(|&g| fmath::grad_pow(g, 1.0, eps)).collect();
    if p < 2.0 && !geom.is_periodic() {
        let res = geom.resolution;
        for i in [0usize, res] {
            agrad[i] = eps.max(fmath::abs(radial.values[i]) * geom.h * 0.25);
        }
    }
    PrecisionFrame {
        agrad,
        radial: radial.values,
        tangential: tangential.values,
    }
}

/// Per-node closed forms derived from the precision frame.
struct Pointwise<'a> {
    p: f64,
    n: f64,
    u: &'a [f64],
    fr: &'a PrecisionFrame,
    ric_k: f64,
}

impl<'a> Pointwise<'a> {
    /// Delta_p u in closed form.
    fn d(&self, i: usize) -> f64 {
        let x = fmath::pow(self.fr.agrad[i], self.p - 2.0);
        x * ((self.p - 1.0) * self.fr.radial[i] + (self.n - 1.0) * self.fr.tangential[i])
    }

    fn bu(&self, i: usize) -> (f64, f64) {
        let x = fmath::pow(self.fr.agrad[i], self.p - 2.0);
        let d = self.d(i);
        (
            x * self.fr.radial[i] - d / (self.n * (self.p - 1.0)),
            x * self.fr.tangential[i] - d / self.n,
        )
    }

    fn gu(&self, i: usize) -> (f64, f64) {
        let gp = fmath::pow(self.fr.agrad[i], self.p) / self.u[i];
        ((self.n - 1.0) / self.n * gp, -(self.p - 1.0) / self.n * gp)
    }

    fn pair(&self, s: (f64, f64), t: (f64, f64)) -> f64 {
        (self.p - 1.0) * (self.p - 1.0) * s.0 * t.0 + (self.n - 1.0) * s.1 * t.1
    }

    fn ric(&self, i: usize) -> f64 {
        self.ric_k * fmath::pow(self.fr.agrad[i], 2.0 * self.p - 2.0)
    }

    fn hess_a(&self, i: usize) -> f64 {
        (self.p - 1.0) * (self.p - 1.0) * self.fr.radial[i] * self.fr.radial[i]
            + (self.n - 1.0) * self.fr.tangential[i] * self.fr.tangential[i]
    }
}

fn integrate_nodal(geom: &Geometry, f: impl Fn(usize) -> f64) -> f64 {
    let v: Vec<f64> = (0..geom.num_nodes()).map(f).collect();
    geom.integrate(&Field::new(v))
}

/// Lemmas 3.1, 3.2, 3.5 and the integrated Bochner identity for an arbitrary
/// positive field.
pub fn verify_unconditional(
    geom: &Geometry,
    params: &ParamSet,
    u: &Field,
    eps: f64,
) -> Result<Vec<IdentityReport>, IdentityError> {
    if !u.is_positive() {
        return Err(IdentityError::NonPositiveField { min: u.min() });
    }
    let dc = derive_constants(params)?;
    let n = params.nf();
    let m = params.m();
    let p = params.p;
    let res = geom.resolution;

    let lap = operators::p_laplacian(geom, params, u, eps);
    let fr = precision_frame(geom, u, eps, p);
    let pw = Pointwise { p, n, u: &u.values, fr: &fr, ric_k: geom.ricci_constant };

    let int_lap_sq = integrate_nodal(geom, |i| lap.values[i] * lap.values[i]);
    let int_lap_gp = integrate_nodal(geom, |i| {
        lap.values[i] * fmath::pow(fr.agrad[i], p) / u.values[i]
    });
    let int_g2p = integrate_nodal(geom, |i| {
        fmath::pow(fr.agrad[i], 2.0 * p) / (u.values[i] * u.values[i])
    });

    let mut out = Vec::with_capacity(4);

    // Lemma 3.1: int (Delta_p u)^2 = n/(n-1) int (|Bu|_A^2 + ric).
    let rhs_31 = n / (n - 1.0)
        * integrate_nodal(geom, |i| {
            let b = pw.bu(i);
            pw.pair(b, b) + pw.ric(i)
        });
    out.push(IdentityReport::two_sided("lemma_3_1", int_lap_sq, rhs_31, grid_tol("lemma_3_1", res)));

    // Lemma 3.2: int Delta_p u |grad u|^p / u
    //   = n(p-1)/m int |grad u|^(2p)/u^2 - np/((p-1)m) int [Bu,Gu]_A.
    let int_bg = integrate_nodal(geom, |i| pw.pair(pw.bu(i), pw.gu(i)));
    let rhs_32 = n * (p - 1.0) / m * int_g2p - n * p / ((p - 1.0) * m) * int_bg;
    out.push(IdentityReport::two_sided("lemma_3_2", int_lap_gp, rhs_32, grid_tol("lemma_3_2", res)));

    // Lemma 3.5 at the canonical theta: G[u] against its curvature
    // decomposition (mu vanishes at the canonical pair by construction, but
    // it is evaluated anyway).
    let theta = dc.theta;
    let kb = dc.kappa + (dc.beta - 1.0) * (p - 1.0);
    let kk = dc.kappa * (dc.beta - 1.0) * (p - 1.0);
    let g_lhs = theta * int_lap_sq + kb * int_lap_gp + kk * int_g2p;
    let c_q = operators::q_a_coupling(params, dc.beta, theta);
    let int_q_ric = integrate_nodal(geom, |i| {
        let b = pw.bu(i);
        let g = pw.gu(i);
        let qu = (b.0 - c_q * g.0, b.1 - c_q * g.1);
        pw.pair(qu, qu) + pw.ric(i)
    });
    let mu = crate::params::mu_coefficient(params, dc.beta, theta).mu;
    let g_rhs = theta * n / (n - 1.0) * int_q_ric - mu * int_g2p;
    out.push(IdentityReport::two_sided("lemma_3_5", g_lhs, g_rhs, grid_tol("lemma_3_5", res)));

    // Integrated p-Bochner: int (Delta_p u)^2
    //   = int |grad u|^(2p-4)|hess u|_A^2 + int ric.
    let rhs_bochner = integrate_nodal(geom, |i| {
        fmath::pow(fr.agrad[i], 2.0 * p - 4.0) * pw.hess_a(i) + pw.ric(i)
    });
    out.push(IdentityReport::two_sided(
        "bochner_integrated",
        int_lap_sq,
        rhs_bochner,
        grid_tol("bochner_integrated", res),
    ));

    Ok(out)
}

/// Refinement study: run the unconditional suite on the analytic field at
/// each resolution and attach log2 gap slopes to the finest-grid reports.
pub fn refinement_study(
    kind: GeometryKind,
    n_dim: u32,
    params: &ParamSet,
    spec: &FieldSpec,
    resolutions: &[usize],
) -> Result<Vec<IdentityReport>, IdentityError> {
    assert!(resolutions.len() >= 2);
    let mut per_level: Vec<Vec<IdentityReport>> = Vec::new();
    for &nn in resolutions {
        let geom = crate::geometry::build_geometry(kind, n_dim, nn)
            .map_err(|_| IdentityError::NonPositiveField { min: 0.0 })?;
        let u = spec.sample(&geom);
        let eps = operators::default_eps(&geom, &u);
        per_level.push(verify_unconditional(&geom, params, &u, eps)?);
    }
    let levels = per_level.len();
    let mut finest = per_level[levels - 1].clone();
    for (idx, rep) in finest.iter_mut().enumerate() {
        let mut slopes = Vec::new();
        for w in 0..levels - 1 {
            let g0 = per_level[w][idx].rel_gap.max(1e-16);
            let g1 = per_level[w + 1][idx].rel_gap.max(1e-16);
            slopes.push(fmath::log2(g0 / g1));
        }
        let mean = slopes.iter().sum::<f64>() / slopes.len() as f64;
        rep.refinement_slope = Some(mean);
    }
    Ok(finest)
}

/// Relative change of every identity side when eps is halved.
pub fn regularization_sensitivity(
    geom: &Geometry,
    params: &ParamSet,
    u: &Field,
    eps: f64,
) -> Result<Vec<(String, f64, f64)>, IdentityError> {
    let full = verify_unconditional(geom, params, u, eps)?;
    let half = verify_unconditional(geom, params, u, 0.5 * eps)?;
    Ok(full
        .iter()
        .zip(half.iter())
        .map(|(a, b)| {
            let lc = fmath::abs(a.lhs - b.lhs) / fmath::abs(a.lhs).max(REL_GAP_FLOOR);
            let rc = fmath::abs(a.rhs - b.rhs) / fmath::abs(a.rhs).max(REL_GAP_FLOOR);
            (a.name.clone(), lc, rc)
        })
        .collect())
}

/// On-shell suite: substitute u = v^(-1/beta) for a solution v of the
/// stationary equation and check the substituted equation, the three
/// multiply-and-integrate relations, and the master identity with the
/// certificate constants at the supplied gamma. Tolerances are scaled by the
/// recorded solver residual.
pub fn verify_onshell(
    geom: &Geometry,
    params: &ParamSet,
    v_solution: &Field,
    gamma: f64,
    residual_norm: f64,
) -> Result<Vec<IdentityReport>, IdentityError> {
    if !v_solution.is_positive() {
        return Err(IdentityError::NonPositiveField { min: v_solution.min() });
    }
    let dc = derive_constants(params)?;
    let cert = cdc_certificate(params, gamma)?;
    let (n, p, q) = (params.nf(), params.p, params.q);
    let beta = dc.beta;
    let lam = params.lambda;
    let res = geom.resolution;
    let h2 = 1.0 / (res as f64 * res as f64);

    let u = v_solution.map(|x| fmath::pow(x, -1.0 / beta));
    let eps = operators::default_eps(geom, &u);
    let lap = operators::p_laplacian(geom, params, &u, eps);
    let fr = precision_frame(geom, &u, eps, p);
    let pw = Pointwise { p, n, u: &u.values, fr: &fr, ric_k: geom.ricci_constant };

    let denom = 2.0 - p + beta * (q - p);
    let e_sub = p - 1.0 + beta * (p - q);

    // (0) substituted equation residual:
    // -Delta_p u + (p-1)(beta+1)|grad u|^p/u + lam/denom (u^e_sub - u) = 0.
    let mut resid = vec![0.0; geom.num_nodes()];
    let mut scale_terms = vec![0.0; geom.num_nodes()];
    for i in 0..geom.num_nodes() {
        let gp = fmath::pow(fr.agrad[i], p) / u.values[i];
        let t1 = -lap.values[i];
        let t2 = (p - 1.0) * (beta + 1.0) * gp;
        let t3 = lam / denom * (fmath::pow(u.values[i], e_sub) - u.values[i]);
        resid[i] = t1 + t2 + t3;
        scale_terms[i] = fmath::abs(t1) + fmath::abs(t2) + fmath::abs(t3);
    }
    let resid_norm = fmath::sqrt(geom.integrate(&Field::new(resid).map(|x| x * x)));
    let term_scale =
        fmath::sqrt(geom.integrate(&Field::new(scale_terms).map(|x| x * x))).max(REL_GAP_FLOOR);
    // chain factor |du/dv| transported through the substitution
    let chain = v_solution
        .values
        .iter()
        .fold(0.0f64, |a, &v| a.max(fmath::pow(v, -1.0 / beta - 1.0) / fmath::abs(beta)));
    let expected = onshell_cond("substituted_equation")
        * (chain.max(1.0) * residual_norm + 5.0 * h2 * term_scale);
    if resid_norm > 10.0 * expected.max(1e-13) {
        return Err(IdentityError::NotOnShell { residual: resid_norm, expected });
    }
    let mut out = Vec::with_capacity(5);
    out.push(IdentityReport {
        name: String::from("substituted_equation"),
        lhs: resid_norm,
        rhs: 0.0,
        abs_gap: resid_norm,
        rel_gap: resid_norm / term_scale,
        refinement_slope: None,
        tolerance: expected / term_scale,
        pass: resid_norm <= expected,
    });

    // shared integrals at the weight u^(2 gamma / p)
    let e = 2.0 * gamma / p;
    let upow = fmath::pow;
    let gp = |i: usize| fmath::pow(fr.agrad[i], p);
    let i_lap_gp =
        integrate_nodal(geom, |i| upow(u.values[i], e - 1.0) * lap.values[i] * gp(i));
    let i_lap_sq =
        integrate_nodal(geom, |i| upow(u.values[i], e) * lap.values[i] * lap.values[i]);
    let i_g2p = integrate_nodal(geom, |i| {
        upow(u.values[i], e - 2.0) * fmath::pow(fr.agrad[i], 2.0 * p)
    });
    let i_gp = integrate_nodal(geom, |i| upow(u.values[i], e) * gp(i));
    let i_gp_shift =
        integrate_nodal(geom, |i| upow(u.values[i], p - 2.0 + beta * (p - q) + e) * gp(i));

    let onshell_tol = |name: &str, scale: f64| {
        grid_tol_onshell(name, res)
            + onshell_cond(name) * residual_norm / scale.max(REL_GAP_FLOOR)
    };
    let push = |out: &mut Vec<IdentityReport>, name: &str, lhs: f64, rhs: f64| {
        let mut rep = IdentityReport::two_sided(name, lhs, rhs, 0.0);
        rep.tolerance = onshell_tol(name, fmath::abs(lhs).max(fmath::abs(rhs)));
        rep.pass = rep.rel_gap < rep.tolerance;
        out.push(rep);
    };

    // aim 1: int u^(e-1) Delta_p u |grad u|^p
    //   = (p-1)(beta+1) int u^(e-2)|grad u|^(2p)
    //     + lam/denom (int u^(p-2+beta(p-q)+e)|grad u|^p - int u^e |grad u|^p).
    push(
        &mut out,
        "aim_1",
        i_lap_gp,
        (p - 1.0) * (beta + 1.0) * i_g2p + lam / denom * (i_gp_shift - i_gp),
    );

    // aim 2: int u^e (Delta_p u)^2
    //   = (p-1)(beta+1) int u^(e-1) Delta_p u |grad u|^p
    //     + (1+e) lam/denom int u^e |grad u|^p
    //     - (p-1+beta(p-q)+e) lam/denom int u^(p-2+beta(p-q)+e) |grad u|^p.
    push(
        &mut out,
        "aim_2",
        i_lap_sq,
        (p - 1.0) * (beta + 1.0) * i_lap_gp + (1.0 + e) * lam / denom * i_gp
            - (e_sub + e) * lam / denom * i_gp_shift,
    );

    // aim 3: lam int u^e |grad u|^p
    //   = (beta(1-q) + e) int u^(e-1) Delta_p u |grad u|^p
    //     + int u^e (Delta_p u)^2
    //     - (p-1)(beta+1)(p-1+beta(p-q)+e) int u^(e-2)|grad u|^(2p).
    push(
        &mut out,
        "aim_3",
        lam * i_gp,
        (beta * (1.0 - q) + e) * i_lap_gp + i_lap_sq
            - (p - 1.0) * (beta + 1.0) * (e_sub + e) * i_g2p,
    );

    // master identity:
    // alpha int u^(e-2)|grad u|^(2p) + sigma int (L u^(1+gamma/p))^2
    //   = beta p (q-1)/(2 gamma) int u^e (J + ric)
    //     + (1 - 1/p*) lam int u^e |grad u|^p.
    {
        let psi = u.map(|x| fmath::pow(x, 1.0 + gamma / p));
        let lpsi = operators::linearized_apply(geom, params, &u, &psi, eps)?;
        let i_lpsi_sq = integrate_nodal(geom, |i| lpsi.values[i] * lpsi.values[i]);
        let i_j_ric = integrate_nodal(geom, |i| {
            let x = fmath::pow(fr.agrad[i], p - 2.0);
            let j = x * x * pw.hess_a(i) - pw.d(i) * pw.d(i) / n;
            upow(u.values[i], e) * (j + pw.ric(i))
        });
        let lhs = cert.alpha * i_g2p + cert.sigma * i_lpsi_sq;
        let rhs = beta * p * (q - 1.0) / (2.0 * gamma) * i_j_ric
            + (1.0 - 1.0 / params.p_star()) * lam * i_gp;
        push(&mut out, "master_2_1", lhs, rhs);
    }

    Ok(out)
}

/// The interpolation inequality for an arbitrary positive field:
/// int |grad v|^p dV >= (p beta^(p-2)/s)(lambda/(q-s)) (|v|_q^p - |v|_s^s),
/// at normalized total volume. The report's gap fields carry the violation
/// amount (zero when the inequality holds).
pub fn interpolation_check(
    geom: &Geometry,
    params: &ParamSet,
    v: &Field,
    lambda_used: f64,
) -> Result<IdentityReport, IdentityError> {
    if !v.is_positive() {
        return Err(IdentityError::NonPositiveField { min: v.min() });
    }
    let dc = derive_constants(params)?;
    let (p, q, s) = (params.p, params.q, dc.s);
    if fmath::abs(q - s) < 1e-12 * (1.0 + fmath::abs(q)) {
        return Err(IdentityError::ExponentPole);
    }
    let grad_term: Vec<f64> = (0..geom.num_half_nodes())
        .map(|k| fmath::pow(fmath::abs(geom.half_gradient(v, k)), p))
        .collect();
    let lhs = geom.integrate_half(&grad_term);
    let norm_q_p = fmath::pow(geom.integrate(&v.map(|x| fmath::pow(x, q))), p / q);
    let norm_s_s = geom.integrate(&v.map(|x| fmath::pow(x, s)));
    let rhs = p * fmath::pow(dc.beta, p - 2.0) / s * lambda_used / (q - s)
        * (norm_q_p - norm_s_s);
    let slack = 1e-12 * (1.0 + fmath::abs(lhs));
    let violation = (rhs - lhs).max(0.0);
    Ok(IdentityReport {
        name: String::from("interpolation"),
        lhs,
        rhs,
        abs_gap: violation,
        rel_gap: violation / fmath::abs(lhs).max(fmath::abs(rhs)).max(REL_GAP_FLOOR),
        refinement_slope: None,
        tolerance: slack,
        pass: lhs >= rhs - slack,
    })
}
