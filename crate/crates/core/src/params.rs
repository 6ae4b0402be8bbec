//! Exact parameter algebra: every closed-form constant used by the other
//! modules, with domain validation.
//!
//! All formulas are kept in factored form; the denominator of `beta` has a
//! pole in `q`, and nearby values are rejected rather than evaluated.

use crate::fmath;
use alloc::string::String;
use core::fmt;

/// Relative guard for the beta denominator: reject |den| < GUARD * |num|.
const BETA_POLE_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum ParamError {
    /// A parameter lies outside its admissible range.
    Range(String),
    /// q is too close to the pole of beta.
    Pole { q: f64, q_pole: f64 },
    /// gamma in {0, -p} degenerates the certificate.
    DegenerateGamma { gamma: f64 },
}

impl fmt::Display for ParamError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamError::Range(msg) => write!(f, "RangeError: {msg}"),
            ParamError::Pole { q, q_pole } => {
                write!(f, "PoleError: q = {q} too close to beta pole at q = {q_pole}")
            }
            ParamError::DegenerateGamma { gamma } => {
                write!(f, "DegenerateGamma: gamma = {gamma} must avoid 0 and -p")
            }
        }
    }
}

/// The tuple (n, p, q, lambda).
///
/// `new` enforces the full equation/flow domain: n >= 2, 1 < p < n,
/// q in (1, p) u (p, p*), lambda >= 0, and the beta-pole guard.
/// `relaxed` only requires n >= 2, p > 1, q > 1 and the pole guard; it is
/// the entry point for identity checks that are valid outside the equation
/// domain (for instance p >= n on the torus, or q > p* when probing the
/// sigma-admissibility boundary).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSet {
    pub n: u32,
    pub p: f64,
    pub q: f64,
    pub lambda: f64,
}

impl ParamSet {
    pub fn new(n: u32, p: f64, q: f64, lambda: f64) -> Result<Self, ParamError> {
        if n < 2 {
            return Err(ParamError::Range(alloc::format!("n = {n} must be >= 2")));
        }
        let nf = n as f64;
        if !(p > 1.0 && p < nf) {
            return Err(ParamError::Range(alloc::format!(
                "p = {p} must satisfy 1 < p < n = {n}"
            )));
        }
        let p_star = nf * p / (nf - p);
        if !(q > 1.0 && q < p_star) {
            return Err(ParamError::Range(alloc::format!(
                "q = {q} must lie in (1, p*) with p* = {p_star}"
            )));
        }
        if fmath::abs(q - p) < 1e-12 * p {
            return Err(ParamError::Range(alloc::format!(
                "q = {q} must differ from p = {p}"
            )));
        }
        if lambda < 0.0 {
            return Err(ParamError::Range(alloc::format!("lambda = {lambda} must be >= 0")));
        }
        let ps = ParamSet { n, p, q, lambda };
        ps.check_beta_pole()?;
        Ok(ps)
    }

    /// Light validation for identity/operator work outside the equation domain.
    pub fn relaxed(n: u32, p: f64, q: f64, lambda: f64) -> Result<Self, ParamError> {
        if n < 2 {
            return Err(ParamError::Range(alloc::format!("n = {n} must be >= 2")));
        }
        if p <= 1.0 {
            return Err(ParamError::Range(alloc::format!("p = {p} must be > 1")));
        }
        if q <= 1.0 {
            return Err(ParamError::Range(alloc::format!("q = {q} must be > 1")));
        }
        let ps = ParamSet { n, p, q, lambda };
        ps.check_beta_pole()?;
        Ok(ps)
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    /// n(p-1) + p, the combination that runs through every constant.
    pub fn m(&self) -> f64 {
        self.nf() * (self.p - 1.0) + self.p
    }

    /// np - 2n + p.
    pub fn w(&self) -> f64 {
        self.nf() * self.p - 2.0 * self.nf() + self.p
    }

    /// np/(n-p); +inf when p >= n (relaxed sets).
    pub fn p_star(&self) -> f64 {
        let nf = self.nf();
        if self.p < nf {
            nf * self.p / (nf - self.p)
        } else {
            f64::INFINITY
        }
    }

    /// Denominator of beta: (n(p-1)+p)(2p-1-q) + n(q-1).
    pub fn beta_denominator(&self) -> f64 {
        self.m() * (2.0 * self.p - 1.0 - self.q) + self.nf() * (self.q - 1.0)
    }

    /// Location of the beta pole in q, if it is finite.
    pub fn beta_pole_q(&self) -> Option<f64> {
        let d = self.m() - self.nf(); // = np - 2n + p
        if fmath::abs(d) < 1e-300 {
            None
        } else {
            Some((self.m() * (2.0 * self.p - 1.0) - self.nf()) / d)
        }
    }

    fn check_beta_pole(&self) -> Result<(), ParamError> {
        let num = 2.0 * (self.p - 1.0) * self.m();
        let den = self.beta_denominator();
        if fmath::abs(den) < BETA_POLE_GUARD * fmath::abs(num) {
            return Err(ParamError::Pole {
                q: self.q,
                q_pole: self.beta_pole_q().unwrap_or(f64::NAN),
            });
        }
        Ok(())
    }
}

/// Closed-form constants derived from a ParamSet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    pub beta: f64,
    pub theta: f64,
    pub kappa: f64,
    /// s = (p - 2 + beta p) / beta; collapses to 2 at p = 2.
    pub s: f64,
    pub p_star: f64,
    /// The p = 2 reduction constant (n-1)^2(q-1)/(n(n+2)+q-1); None for p != 2.
    pub vartheta_p2: Option<f64>,
}

pub fn derive_constants(params: &ParamSet) -> Result<DerivedConstants, ParamError> {
    params.check_beta_pole()?;
    let (n, p, q) = (params.nf(), params.p, params.q);
    let m = params.m();
    let w = params.w();

    let beta = 2.0 * (p - 1.0) * m / params.beta_denominator();
    let theta = p * p * (n - 1.0) * (n - 1.0) * (q - 1.0)
        / (4.0 * n * (p - 1.0) * m + w * w * (q - 1.0));
    let kappa = p - 1.0 + beta * (q - p);
    let s = (p - 2.0 + beta * p) / beta;
    let vartheta_p2 = if params.p == 2.0 {
        Some((n - 1.0) * (n - 1.0) * (q - 1.0) / (n * (n + 2.0) + q - 1.0))
    } else {
        None
    };
    Ok(DerivedConstants {
        beta,
        theta,
        kappa,
        s,
        p_star: params.p_star(),
        vartheta_p2,
    })
}

/// Carre du champ certificate at a free parameter gamma.
///
/// alpha and sigma follow the closed forms of the integral identity; the
/// certificate is admissible when alpha >= 0, sigma >= 0 and X = beta/gamma <= 0.
/// Beyond the per-gamma data, the struct carries the gamma-independent
/// quantities of the threshold computation: the negative root X0 of the
/// eta-maximized quadratic and the threshold coefficients (1-theta, theta n/(n-1)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdcCertificate {
    pub gamma: f64,
    pub alpha: f64,
    pub sigma: f64,
    /// X = beta / gamma.
    pub x: f64,
    /// eta = (p-1)/gamma + 1/p.
    pub eta: f64,
    /// Maximizer of the rescaled alpha in eta at this X.
    pub eta0: f64,
    /// Rescaled alpha: np/((n(p-1)+p) gamma^2) * alpha.
    pub alpha_tilde: f64,
    /// Negative root of the eta-maximized quadratic.
    pub x0: f64,
    /// (1 - theta, theta * n / (n - 1)).
    pub threshold_coeffs: (f64, f64),
    pub admissible: bool,
}

/// Coefficient of eta*X in the rescaled-alpha quadratic.
fn eta_x_coeff(params: &ParamSet) -> f64 {
    let (p, q) = (params.p, params.q);
    let m = params.m();
    ((q - 1.0) * params.w() + 2.0 * (1.0 - p) * m) / m
}

/// The rescaled alpha as a function of the free pair (eta, X):
/// -eta^2 + C1 eta X + C2 X + C3 X^2.
pub fn alpha_tilde_eta_x(params: &ParamSet, eta: f64, x: f64) -> f64 {
    let (n, p, q) = (params.nf(), params.p, params.q);
    let m = params.m();
    let c1 = eta_x_coeff(params);
    let c2 = (n - 1.0) * (q - 1.0) / (2.0 * m);
    let c3 = (p - 1.0) * (q - p);
    -eta * eta + c1 * eta * x + c2 * x + c3 * x * x
}

/// Maximizer in eta of the rescaled alpha at fixed X.
pub fn eta0_of_x(params: &ParamSet, x: f64) -> f64 {
    0.5 * eta_x_coeff(params) * x
}

/// Negative root X0 of the eta-maximized quadratic, in closed form.
pub fn x0(params: &ParamSet) -> f64 {
    let (n, p, q) = (params.nf(), params.p, params.q);
    let m = params.m();
    let w = params.w();
    -2.0 * (n - 1.0) * m / (4.0 * n * (p - 1.0) * m + (q - 1.0) * w * w)
}

/// The closed interval [lo, 0] of X values with sigma >= 0.
pub fn sigma_admissible_interval(params: &ParamSet) -> (f64, f64) {
    let (n, p, q) = (params.nf(), params.p, params.q);
    (-2.0 * params.m() / (p * p * (n - 1.0) * (q - 1.0)), 0.0)
}

pub fn cdc_certificate(params: &ParamSet, gamma: f64) -> Result<CdcCertificate, ParamError> {
    let p = params.p;
    if gamma == 0.0 || fmath::abs(gamma + p) < 1e-12 * p {
        return Err(ParamError::DegenerateGamma { gamma });
    }
    if params.q <= p {
        return Err(ParamError::Range(alloc::format!(
            "certificate requires q in (p, p*), got q = {}",
            params.q
        )));
    }
    let dc = derive_constants(params)?;
    let (n, q) = (params.nf(), params.q);
    let m = params.m();
    let beta = dc.beta;

    // alpha, factored as in the identity it certifies.
    let pref = 1.0 - 1.0 / params.p_star();
    let alpha = pref
        * ((beta + 1.0) * (p - 1.0) * (beta * (q - p) - (p - 1.0) - 2.0 * gamma / p)
            - gamma * (p * beta * (1.0 - q) + 2.0 * gamma) / (2.0 * p * p))
        + beta * (q - 1.0) * ((2.0 * p - 3.0) * gamma - 2.0 * p * (p - 1.0)) / (2.0 * p * p);

    // sigma >= 0 iff X lies in the admissible interval.
    let sigma = p / (n * (p - 1.0) * (p - 1.0) * (gamma + p) * (gamma + p))
        * (m + p * p * beta * (q - 1.0) * (n - 1.0) / (2.0 * gamma));

    let x = beta / gamma;
    let eta = (p - 1.0) / gamma + 1.0 / p;
    let alpha_tilde = n * p / (m * gamma * gamma) * alpha;
    let admissible = alpha >= 0.0 && sigma >= 0.0 && x <= 0.0;

    Ok(CdcCertificate {
        gamma,
        alpha,
        sigma,
        x,
        eta,
        eta0: eta0_of_x(params, x),
        alpha_tilde,
        x0: x0(params),
        threshold_coeffs: (1.0 - dc.theta, dc.theta * n / (n - 1.0)),
        admissible,
    })
}

/// The quadratic-in-beta coefficients of mu at a given theta, and the value
/// mu = a beta^2 - b beta + (p-1)^2 at a given beta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuCoefficients {
    pub a_coef: f64,
    pub b_coef: f64,
    pub mu: f64,
}

pub fn mu_coefficient(params: &ParamSet, beta_in: f64, theta_in: f64) -> MuCoefficients {
    let (n, p, q) = (params.nf(), params.p, params.q);
    let m = params.m();
    let a_coef =
        p * p * (n - 1.0) * (n - 1.0) * (q - 1.0) * (q - 1.0) / (4.0 * theta_in * m * m)
            - (p - 1.0) * (q - p);
    let b_coef = (p - 1.0) * (m * (2.0 * p - 1.0 - q) + n * (q - 1.0)) / m;
    let mu = a_coef * beta_in * beta_in - b_coef * beta_in + (p - 1.0) * (p - 1.0);
    MuCoefficients { a_coef, b_coef, mu }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p324() -> ParamSet {
        ParamSet::new(3, 2.0, 4.0, 0.0).unwrap()
    }

    #[test]
    fn constants_at_reference_point() {
        let dc = derive_constants(&p324()).unwrap();
        assert_eq!(dc.beta, 2.5);
        assert_eq!(dc.theta, 2.0 / 3.0);
        assert_eq!(dc.kappa, 6.0);
        assert_eq!(dc.s, 2.0);
        assert_eq!(dc.p_star, 6.0);
        // theta coincides with the p = 2 constant (n-1)^2(q-1)/(n(n+2)+q-1) = 2/3
        assert_eq!(dc.vartheta_p2, Some(2.0 / 3.0));
    }

    #[test]
    fn s_collapses_to_two_at_p2() {
        for q in [1.5, 2.5, 3.0, 4.0, 5.0, 5.9] {
            let ps = ParamSet::new(3, 2.0, q, 0.0).unwrap();
            let dc = derive_constants(&ps).unwrap();
            assert!((dc.s - 2.0).abs() < 1e-14, "s = {} at q = {}", dc.s, q);
        }
    }

    #[test]
    fn x0_and_sigma_interval_at_reference_point() {
        let ps = p324();
        assert_eq!(x0(&ps), -5.0 / 18.0);
        let (lo, hi) = sigma_admissible_interval(&ps);
        assert_eq!(lo, -5.0 / 12.0);
        assert_eq!(hi, 0.0);
        assert!(x0(&ps) > lo && x0(&ps) < hi);
    }

    #[test]
    fn alpha_tilde_vanishes_at_root() {
        let ps = p324();
        let x0 = x0(&ps);
        let at = alpha_tilde_eta_x(&ps, eta0_of_x(&ps, x0), x0);
        assert!(at.abs() < 1e-15, "alpha_tilde(eta0, X0) = {at}");
    }

    #[test]
    fn certificate_two_routes_agree() {
        // np/(m gamma^2) alpha must equal the (eta, X) quadratic.
        let ps = p324();
        for gamma in [-9.0, -6.5, -6.0, -3.0, 2.0, 5.0] {
            let c = cdc_certificate(&ps, gamma).unwrap();
            let via_quadratic = alpha_tilde_eta_x(&ps, c.eta, c.x);
            assert!(
                (c.alpha_tilde - via_quadratic).abs() < 1e-12 * (1.0 + via_quadratic.abs()),
                "gamma = {gamma}: {} vs {}",
                c.alpha_tilde,
                via_quadratic
            );
        }
    }

    #[test]
    fn certificate_admissibility_landscape() {
        let ps = p324();
        // At gamma = beta/X0 the certificate maximizes the threshold algebra but
        // alpha itself is negative there (exact value -125/24).
        let c = cdc_certificate(&ps, -9.0).unwrap();
        assert!((c.alpha - (-125.0 / 24.0)).abs() < 1e-12);
        assert!(!c.admissible);
        assert!((c.x - x0(&ps)).abs() < 1e-15);
        // gamma = -6.5 is admissible (alpha = 175/96, sigma > 0, X < 0).
        let c = cdc_certificate(&ps, -6.5).unwrap();
        assert!((c.alpha - 175.0 / 96.0).abs() < 1e-12);
        assert!(c.admissible);
        // gamma = -6 sits exactly on the sigma = 0 boundary (X = -5/12).
        let c = cdc_certificate(&ps, -6.0).unwrap();
        assert!(c.sigma.abs() < 1e-14);
        assert!((c.x - (-5.0 / 12.0)).abs() < 1e-15);
    }

    #[test]
    fn certificate_rejects_degenerate_gamma() {
        let ps = p324();
        assert!(matches!(
            cdc_certificate(&ps, 0.0),
            Err(ParamError::DegenerateGamma { .. })
        ));
        assert!(matches!(
            cdc_certificate(&ps, -2.0),
            Err(ParamError::DegenerateGamma { .. })
        ));
    }

    #[test]
    fn mu_vanishes_at_canonical_pair() {
        let ps = p324();
        let dc = derive_constants(&ps).unwrap();
        let mc = mu_coefficient(&ps, dc.beta, dc.theta);
        assert!(mc.mu.abs() < 1e-12, "mu = {}", mc.mu);
        // beta_in = 0 leaves only the constant term (p-1)^2.
        let mc0 = mu_coefficient(&ps, 0.0, dc.theta);
        assert_eq!(mc0.mu, 1.0);
        // discriminant closes at the canonical theta
        let disc = mc.b_coef * mc.b_coef - 4.0 * mc.a_coef * 1.0;
        assert!(disc.abs() < 1e-10, "disc = {disc}");
    }

    #[test]
    fn range_and_pole_validation() {
        assert!(matches!(
            ParamSet::new(3, 2.0, 6.0, 0.0),
            Err(ParamError::Range(_))
        )); // q = p* boundary
        assert!(matches!(
            ParamSet::new(3, 2.0, 1.0, 0.0),
            Err(ParamError::Range(_))
        ));
        assert!(matches!(
            ParamSet::new(3, 3.5, 4.0, 0.0),
            Err(ParamError::Range(_))
        )); // p >= n
        assert!(matches!(
            ParamSet::new(1, 1.5, 1.2, 0.0),
            Err(ParamError::Range(_))
        ));
        // interior beta pole: (n, p) = (4, 3) has the pole at q = 51/7 inside (p, p*)
        let q_pole = 51.0 / 7.0;
        assert!(matches!(
            ParamSet::new(4, 3.0, q_pole + 1e-12, 0.0),
            Err(ParamError::Pole { .. })
        ));
        assert!(ParamSet::new(4, 3.0, q_pole + 0.5, 0.0).is_ok());
    }

    #[test]
    fn theta_open_interval_iff_q_below_p_star() {
        // relaxed sets allow probing q > p*
        let below = ParamSet::new(3, 2.0, 5.9, 0.0).unwrap();
        let above = ParamSet::relaxed(3, 2.0, 6.5, 0.0).unwrap();
        assert!(derive_constants(&below).unwrap().theta < 1.0);
        assert!(derive_constants(&above).unwrap().theta > 1.0);
        // X0 leaves the sigma interval exactly when q > p*
        let (lo, _) = sigma_admissible_interval(&above);
        assert!(x0(&above) < lo);
        let (lo, _) = sigma_admissible_interval(&below);
        assert!(x0(&below) > lo);
    }
}
