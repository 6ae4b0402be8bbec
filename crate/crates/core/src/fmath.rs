//! Thin wrappers over `libm` so the rest of the crate stays `no_std`-clean.

#[inline(always)]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline(always)]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline(always)]
pub fn pow(x: f64, e: f64) -> f64 {
    libm::pow(x, e)
}

#[inline(always)]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline(always)]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline(always)]
pub fn log2(x: f64) -> f64 {
    libm::log2(x)
}

#[inline(always)]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline(always)]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline(always)]
pub fn atan(x: f64) -> f64 {
    libm::atan(x)
}

/// |g|^(p-2) * g with the gradient regularized as g^2 -> g^2 + eps^2.
#[inline(always)]
pub fn degenerate_flux(g: f64, p: f64, eps: f64) -> f64 {
    pow(g * g + eps * eps, 0.5 * (p - 2.0)) * g
}

/// (g^2 + eps^2)^(e/2), the regularized |g|^e.
#[inline(always)]
pub fn grad_pow(g: f64, e: f64, eps: f64) -> f64 {
    pow(g * g + eps * eps, 0.5 * e)
}
