//! Stationary solver for the target equation in v-form,
//!
//!   -Delta_p v + c_l (v^{e1} - f(v)) = 0,
//!   c_l = beta^(p-1) lambda / (2 - p + beta(q - p)),
//!   e1  = (p - 2 + beta(p - 1)) / beta,
//!
//! with damped Newton on the discrete residual and an analytic Jacobian.
//! When the Jacobian is singular (lambda = 0 leaves the constant direction
//! free) or Newton stalls, the iteration falls back to pseudo-transient
//! steps (I/dtau + J), which follow the p-harmonic flow toward the
//! mean-preserving constant limit.

use crate::fields::FieldSpec;
use crate::fmath;
use crate::geometry::{Field, Geometry};
use crate::linalg::{solve_cyclic_tridiagonal, solve_tridiagonal};
use crate::operators;
use crate::params::{derive_constants, ParamError, ParamSet};
use alloc::boxed::Box;
use alloc::{vec, vec::Vec};
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonlinearityKind {
    PowerLaw,
    Custom,
}

/// Right-hand nonlinearity f(v) with its derivative.
pub struct Nonlinearity {
    pub kind: NonlinearityKind,
    eval: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    deriv: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl Nonlinearity {
    /// f(v) = v^(q-1), the power-law case (equality in the admissibility
    /// condition).
    pub fn power_law(q: f64) -> Self {
        Nonlinearity {
            kind: NonlinearityKind::PowerLaw,
            eval: Box::new(move |v| fmath::pow(v, q - 1.0)),
            deriv: Box::new(move |v| (q - 1.0) * fmath::pow(v, q - 2.0)),
        }
    }

    pub fn custom(
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Nonlinearity { kind: NonlinearityKind::Custom, eval: Box::new(eval), deriv: Box::new(deriv) }
    }

    pub fn eval(&self, v: f64) -> f64 {
        (self.eval)(v)
    }

    pub fn deriv(&self, v: f64) -> f64 {
        (self.deriv)(v)
    }
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Nonlinearity({:?})", self.kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveError {
    /// Starting field must be strictly positive.
    NonPositiveStart { min: f64 },
    /// Iterates lost positivity irrecoverably.
    NegativeBranch,
    /// Damping underflow or max_iter exhausted.
    Diverged,
    Param(ParamError),
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::NonPositiveStart { min } => {
                write!(f, "NonPositiveStart: min v0 = {min}")
            }
            SolveError::NegativeBranch => write!(f, "NegativeBranch"),
            SolveError::Diverged => write!(f, "Diverged"),
            SolveError::Param(e) => write!(f, "{e}"),
        }
    }
}

impl From<ParamError> for SolveError {
    fn from(e: ParamError) -> Self {
        SolveError::Param(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolutionClass {
    ConstantOne,
    ConstantOther,
    Nonconstant,
    Diverged,
}

impl SolutionClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolutionClass::ConstantOne => "ConstantOne",
            SolutionClass::ConstantOther => "ConstantOther",
            SolutionClass::Nonconstant => "Nonconstant",
            SolutionClass::Diverged => "Diverged",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub field: Field,
    /// Discrete L^2 norm of the equation residual.
    pub residual_norm: f64,
    pub iterations: usize,
    pub classified: SolutionClass,
    /// Residual norms of the last Newton iterations (for contraction checks).
    pub residual_history: Vec<f64>,
    /// Failure detail when classified == Diverged.
    pub failure: Option<SolveError>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOpts {
    pub res_tol: f64,
    pub class_tol: f64,
    pub max_iter: usize,
    /// None selects 1e-8 x gradient scale per iterate.
    pub eps: Option<f64>,
    /// Freeze the |grad v|^(p-2) coefficient in the Jacobian (Picard variant)
    /// instead of the full flux derivative.
    pub frozen_jacobian: bool,
}

impl Default for SolveOpts {
    fn default() -> Self {
        SolveOpts {
            res_tol: 1e-9,
            class_tol: 1e-6,
            max_iter: 200,
            eps: None,
            frozen_jacobian: false,
        }
    }
}

/// Equation coefficients shared by residual and Jacobian.
struct EquationData<'a> {
    params: &'a ParamSet,
    /// c_l = beta^(p-1) lambda / (2 - p + beta (q - p))
    c_l: f64,
    /// exponent of the first nonlinear term
    e1: f64,
    f: &'a Nonlinearity,
}

impl<'a> EquationData<'a> {
    fn new(params: &'a ParamSet, f: &'a Nonlinearity) -> Result<Self, SolveError> {
        let dc = derive_constants(params)?;
        let denom = 2.0 - params.p + dc.beta * (params.q - params.p);
        let c_l = fmath::pow(dc.beta, params.p - 1.0) * params.lambda / denom;
        let e1 = (params.p - 2.0 + dc.beta * (params.p - 1.0)) / dc.beta;
        Ok(EquationData { params, c_l, e1, f })
    }

    fn residual(&self, geom: &Geometry, v: &Field, eps: f64) -> Field {
        let lap = operators::p_laplacian(geom, self.params, v, eps);
        Field::new(
            v.values
                .iter()
                .zip(lap.values.iter())
                .map(|(&vi, &li)| {
                    -li + self.c_l * (fmath::pow(vi, self.e1) - self.f.eval(vi))
                })
                .collect(),
        )
    }

    fn residual_norm(&self, geom: &Geometry, r: &Field) -> f64 {
        fmath::sqrt(geom.integrate(&r.map(|x| x * x)))
    }

    /// Scale against which the residual tolerance is measured.
    fn residual_scale(&self, v: &Field) -> f64 {
        let vmax = v.max_abs().max(1e-30);
        1.0 + fmath::abs(self.c_l)
            * (fmath::abs(fmath::pow(vmax, self.e1)) + fmath::abs(self.f.eval(vmax)))
    }
}

/// Jacobian bands for the current iterate (plus optional diagonal shift).
struct Bands {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    corner_fl: f64,
    corner_lf: f64,
}

fn assemble_jacobian(
    geom: &Geometry,
    eq: &EquationData<'_>,
    v: &Field,
    eps: f64,
    frozen: bool,
    shift: f64,
) -> Bands {
    let p = eq.params.p;
    let nodes = geom.num_nodes();
    let mut lower = vec![0.0; nodes - 1];
    let mut upper = vec![0.0; nodes - 1];
    let mut diag = vec![0.0; nodes];
    let mut corner_fl = 0.0;
    let mut corner_lf = 0.0;

    let hk = geom.num_half_nodes();
    for k in 0..hk {
        let g = geom.half_gradient(v, k);
        let base = fmath::grad_pow(g, p - 2.0, eps);
        // Full flux derivative d/dg [ (g^2+eps^2)^((p-2)/2) g ].
        let coef = if frozen {
            base
        } else {
            base * (1.0 + (p - 2.0) * g * g / (g * g + eps * eps).max(1e-300))
        };
        let cond = geom.half_density(k) * coef / geom.h;
        let (i, j) = if geom.is_periodic() && k + 1 == hk { (k, 0) } else { (k, k + 1) };
        // -Delta_p contribution of interface k to rows i and j.
        diag[i] += cond / geom.cell_volume(i);
        diag[j] += cond / geom.cell_volume(j);
        if j == i + 1 {
            upper[i] -= cond / geom.cell_volume(i);
            lower[i] -= cond / geom.cell_volume(j);
        } else {
            corner_fl = -cond / geom.cell_volume(j); // row 0 (= j), column n-1
            corner_lf = -cond / geom.cell_volume(i); // row n-1, column 0
        }
    }
    for i in 0..nodes {
        let vi = v.values[i];
        diag[i] += eq.c_l * (eq.e1 * fmath::pow(vi, eq.e1 - 1.0) - eq.f.deriv(vi)) + shift;
    }
    Bands { lower, diag, upper, corner_fl, corner_lf }
}

fn solve_bands(geom: &Geometry, b: &Bands, rhs: &[f64]) -> Option<Vec<f64>> {
    if geom.is_periodic() {
        solve_cyclic_tridiagonal(&b.lower, &b.diag, &b.upper, b.corner_fl, b.corner_lf, rhs).ok()
    } else {
        solve_tridiagonal(&b.lower, &b.diag, &b.upper, rhs).ok()
    }
}

fn classify(v: &Field, rn: f64, tol: f64, class_tol: f64) -> SolutionClass {
    if !rn.is_finite() || rn >= tol {
        return SolutionClass::Diverged;
    }
    let osc = v.oscillation();
    if osc > 10.0 * class_tol {
        return SolutionClass::Nonconstant;
    }
    let dev_one = v.values.iter().fold(0.0f64, |a, &x| a.max(fmath::abs(x - 1.0)));
    if dev_one < class_tol {
        SolutionClass::ConstantOne
    } else {
        SolutionClass::ConstantOther
    }
}

/// Damped Newton with positivity damping; pseudo-transient fallback when the
/// Newton system is singular or a step cannot reduce the residual.
pub fn solve_stationary(
    geom: &Geometry,
    params: &ParamSet,
    f: &Nonlinearity,
    v0: &Field,
    opts: &SolveOpts,
) -> Result<SolveResult, SolveError> {
    if v0.min() <= 0.0 {
        return Err(SolveError::NonPositiveStart { min: v0.min() });
    }
    let eq = EquationData::new(params, f)?;
    let mut v = v0.clone();
    let mut eps = opts.eps.unwrap_or_else(|| operators::default_eps(geom, &v));
    if params.p != 2.0 && eps == 0.0 {
        eps = 1e-14; // keep degenerate coefficients finite at critical points
    }
    let mut r = eq.residual(geom, &v, eps);
    let mut rn = eq.residual_norm(geom, &r);
    let tol = opts.res_tol * eq.residual_scale(&v);
    let mut history = vec![rn];

    // Pseudo-transient state: inactive (0 shift) while pure Newton works.
    let mut shift = if eq.c_l == 0.0 { 1.0 } else { 0.0 };
    let rn0 = rn.max(1e-300);
    let mut failure = None;

    let mut it = 0;
    while it < opts.max_iter {
        it += 1;
        if rn < tol {
            break;
        }
        let bands = assemble_jacobian(geom, &eq, &v, eps, opts.frozen_jacobian, shift);
        let neg_r: Vec<f64> = r.values.iter().map(|&x| -x).collect();
        let delta = match solve_bands(geom, &bands, &neg_r) {
            Some(d) => d,
            None => {
                // singular Newton matrix: engage/strengthen the transient shift
                shift = if shift == 0.0 { rn / rn0 } else { shift * 10.0 };
                continue;
            }
        };

        // Step damping: halve until positivity holds and the residual drops.
        let mut s = 1.0;
        let mut accepted = false;
        let mut positivity_blocked = true;
        for _ in 0..40 {
            let trial = Field::new(
                v.values.iter().zip(delta.iter()).map(|(&x, &d)| x + s * d).collect(),
            );
            if trial.min() <= 0.0 {
                s *= 0.5;
                continue;
            }
            positivity_blocked = false;
            let rt = eq.residual(geom, &trial, eps);
            let rtn = eq.residual_norm(geom, &rt);
            // require decrease except while a transient shift is active,
            // where following the flow is enough
            if rtn <= rn * (1.0 - 0.25 * s) || (shift > 0.0 && rtn <= rn * 1.001) {
                v = trial;
                r = rt;
                rn = rtn;
                if opts.eps.is_none() {
                    eps = operators::default_eps(geom, &v).max(1e-14 * f64::from(params.p != 2.0) as f64);
                }
                accepted = true;
                break;
            }
            s *= 0.5;
        }

        if accepted {
            history.push(rn);
            if history.len() > 8 {
                history.remove(0);
            }
            // SER: relax the transient shift as the residual falls.
            if shift > 0.0 {
                shift = (shift * rn / history[history.len() - 2].max(1e-300)).min(shift);
                if rn < 1e-3 * rn0 && eq.c_l != 0.0 {
                    shift = 0.0; // hand back to pure Newton
                }
            }
        } else if positivity_blocked {
            failure = Some(SolveError::NegativeBranch);
            break;
        } else if shift == 0.0 {
            shift = rn / rn0; // stalled Newton: engage transient continuation
        } else if shift < 1e12 {
            shift *= 10.0;
        } else {
            failure = Some(SolveError::Diverged);
            break;
        }
    }

    if rn >= tol && failure.is_none() {
        failure = Some(SolveError::Diverged);
    }
    let classified = if failure.is_some() {
        SolutionClass::Diverged
    } else {
        classify(&v, rn, tol, opts.class_tol)
    };
    Ok(SolveResult {
        field: v,
        residual_norm: rn,
        iterations: it,
        classified,
        residual_history: history,
        failure,
    })
}

/// Report of the admissibility condition for a general nonlinearity:
/// (beta / (2 - p + beta(q - p))) (f'(v) - (q - 1) f(v)/v) <= 0 on v_range.
#[derive(Debug, Clone)]
pub struct FConditionReport {
    pub max_value: f64,
    pub pass: bool,
    /// (v, expression) samples.
    pub samples: Vec<(f64, f64)>,
}

pub fn check_f_condition(
    f: &Nonlinearity,
    params: &ParamSet,
    v_range: (f64, f64),
    samples: usize,
) -> Result<FConditionReport, SolveError> {
    let dc = derive_constants(params)?;
    let factor = dc.beta / (2.0 - params.p + dc.beta * (params.q - params.p));
    let (lo, hi) = v_range;
    let m = samples.max(2);
    let mut out = Vec::with_capacity(m);
    let mut max_value = f64::NEG_INFINITY;
    for i in 0..m {
        let v = lo + (hi - lo) * i as f64 / (m - 1) as f64;
        let expr = factor * (f.deriv(v) - (params.q - 1.0) * f.eval(v) / v);
        max_value = max_value.max(expr);
        out.push((v, expr));
    }
    Ok(FConditionReport { max_value, pass: max_value <= 1e-12, samples: out })
}

/// One scan cell: a (lambda, perturbation) pair to solve.
#[derive(Debug, Clone, Copy)]
pub struct ScanCell {
    pub lambda_index: usize,
    pub perturbation_index: usize,
    pub lambda: f64,
    pub perturbation: FieldSpec,
}

/// Outcome of one cell.
#[derive(Debug, Clone)]
pub struct ScanCellResult {
    pub cell: ScanCell,
    pub class: SolutionClass,
    pub residual_norm: f64,
    pub iterations: usize,
    /// For nonconstant solutions: the a-posteriori carre du champ threshold
    /// (1-theta) lambda1 + theta n R/(n-1) evaluated at u = v^(-1/beta) with
    /// gamma = beta/X0.
    pub cdc_threshold: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ScanReport {
    pub lambda_grid: Vec<f64>,
    pub perturbations: Vec<FieldSpec>,
    pub cells: Vec<ScanCellResult>,
    pub smallest_nonconstant_lambda: Option<f64>,
    /// Threshold estimate from the spectral module, when supplied.
    pub lambda_hat: Option<f64>,
}

/// Enumerate the scan cells for a lambda grid and perturbation list.
pub fn scan_cells(lambda_grid: &[f64], perturbations: &[FieldSpec]) -> Vec<ScanCell> {
    let mut cells = Vec::with_capacity(lambda_grid.len() * perturbations.len());
    for (li, &lambda) in lambda_grid.iter().enumerate() {
        for (pi, &pert) in perturbations.iter().enumerate() {
            cells.push(ScanCell { lambda_index: li, perturbation_index: pi, lambda, perturbation: pert });
        }
    }
    cells
}

/// Solve one cell; solver errors are recorded, never propagated.
pub fn solve_cell(
    geom: &Geometry,
    params_base: &ParamSet,
    cell: &ScanCell,
    opts: &SolveOpts,
) -> ScanCellResult {
    let params = ParamSet { lambda: cell.lambda, ..*params_base };
    let f = Nonlinearity::power_law(params.q);
    let v0 = cell.perturbation.sample(geom);
    match solve_stationary(geom, &params, &f, &v0, opts) {
        Ok(res) => {
            let cdc_threshold = if res.classified == SolutionClass::Nonconstant {
                cdc_threshold_onshell(geom, &params, &res.field).ok()
            } else {
                None
            };
            ScanCellResult {
                cell: *cell,
                class: res.classified,
                residual_norm: res.residual_norm,
                iterations: res.iterations,
                cdc_threshold,
            }
        }
        Err(_) => ScanCellResult {
            cell: *cell,
            class: SolutionClass::Diverged,
            residual_norm: f64::NAN,
            iterations: 0,
            cdc_threshold: None,
        },
    }
}

/// The a-posteriori threshold (1-theta) lambda1 + theta n R/(n-1) at
/// u = v^(-1/beta), with the curvature ratio R of the certificate evaluated
/// at gamma = beta/X0.
pub fn cdc_threshold_onshell(
    geom: &Geometry,
    params: &ParamSet,
    v: &Field,
) -> Result<f64, SolveError> {
    let dc = derive_constants(params)?;
    let u = v.map(|x| fmath::pow(x, -1.0 / dc.beta));
    let eps = operators::default_eps(geom, &u);
    let (l1, _) = crate::spectral::lambda1(geom, params, &u, eps.max(1e-12))
        .map_err(|_| SolveError::Diverged)?;
    let gamma = dc.beta / crate::params::x0(params);
    let du = geom.derivative(&u);
    let n = params.nf();
    let e = 2.0 * gamma / params.p;
    let num = geom.integrate(&Field::new(
        u.values
            .iter()
            .zip(du.values.iter())
            .map(|(&ui, &g)| fmath::pow(ui, e) * fmath::pow(fmath::abs(g), 2.0 * params.p - 2.0))
            .collect(),
    ));
    let den = geom.integrate(&Field::new(
        u.values
            .iter()
            .zip(du.values.iter())
            .map(|(&ui, &g)| fmath::pow(ui, e) * fmath::pow(fmath::abs(g), params.p))
            .collect(),
    ));
    let r = geom.ricci_constant * num / den.max(1e-300);
    Ok((1.0 - dc.theta) * l1 + dc.theta * n * r / (n - 1.0))
}

/// Assemble a report from per-cell results (order-insensitive: results are
/// keyed by (lambda, perturbation) indices).
pub fn assemble_scan_report(
    lambda_grid: Vec<f64>,
    perturbations: Vec<FieldSpec>,
    mut cells: Vec<ScanCellResult>,
    lambda_hat: Option<f64>,
) -> ScanReport {
    cells.sort_by_key(|c| (c.cell.lambda_index, c.cell.perturbation_index));
    let smallest_nonconstant_lambda = cells
        .iter()
        .filter(|c| c.class == SolutionClass::Nonconstant)
        .map(|c| c.cell.lambda)
        .fold(None, |acc: Option<f64>, l| Some(acc.map_or(l, |a| a.min(l))));
    ScanReport { lambda_grid, perturbations, cells, smallest_nonconstant_lambda, lambda_hat }
}

/// Serial rigidity scan over a sorted lambda grid and perturbation library.
pub fn rigidity_scan(
    geom: &Geometry,
    params_base: &ParamSet,
    lambda_grid: &[f64],
    perturbations: &[FieldSpec],
    opts: &SolveOpts,
    lambda_hat: Option<f64>,
) -> ScanReport {
    let cells = scan_cells(lambda_grid, perturbations);
    let results: Vec<ScanCellResult> =
        cells.iter().map(|c| solve_cell(geom, params_base, c, opts)).collect();
    assemble_scan_report(lambda_grid.to_vec(), perturbations.to_vec(), results, lambda_hat)
}
