//! Analytic field library: named smooth positive fields evaluated on any
//! grid, plus the low-mode perturbation family used to seed solvers and
//! quotient minimization.
//!
//! Sphere entries are functions of cos(theta), so all odd derivatives vanish
//! at the poles and the even ghost reflection of the stencils is exact.

use crate::fmath;
use crate::geometry::{Field, Geometry, GeometryKind};
use alloc::{vec, vec::Vec};

/// A named analytic field shape. `profile(c)` receives cos(theta) on the
/// sphere and the raw coordinate x on the torus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldSpec {
    /// 1 everywhere.
    One,
    /// 1 + amp * cos(k theta) (sphere) or 1 + amp * cos(k x) (torus).
    CosMode { amp: f64, k: u32 },
    /// 1 + amp * sin(k x); torus only (not pole-symmetric).
    SinMode { amp: f64, k: u32 },
    /// exp(a cos theta) / exp(a cos x).
    ExpCos { a: f64 },
    /// c0 + sin x (torus) or c0 + cos theta (sphere); c0 > 1 keeps it positive.
    Shifted { c0: f64 },
    /// 1 / (c0 + cos); c0 > 1.
    InverseShifted { c0: f64 },
    /// (c0 + cos)^e.
    PowShifted { c0: f64, e: f64 },
    /// 1 + a1 cos + a3 cos(3 .).
    TwoMode { a1: f64, a3: f64 },
}

impl FieldSpec {
    pub fn sample(&self, geom: &Geometry) -> Field {
        let vals: Vec<f64> = geom.grid.iter().map(|&t| self.eval(geom.kind, t)).collect();
        Field::new(vals)
    }

    fn eval(&self, kind: GeometryKind, t: f64) -> f64 {
        // On the sphere every shape is built from cos(theta) so the field is
        // even about both poles; on the torus the coordinate is used directly.
        let c = fmath::cos(t);
        match *self {
            FieldSpec::One => 1.0,
            FieldSpec::CosMode { amp, k } => 1.0 + amp * fmath::cos(k as f64 * t),
            FieldSpec::SinMode { amp, k } => 1.0 + amp * fmath::sin(k as f64 * t),
            FieldSpec::ExpCos { a } => match kind {
                GeometryKind::SphereAxisymmetric => fmath::exp(a * c),
                GeometryKind::TorusOneD => fmath::exp(a * c),
            },
            FieldSpec::Shifted { c0 } => match kind {
                GeometryKind::SphereAxisymmetric => c0 + c,
                GeometryKind::TorusOneD => c0 + fmath::sin(t),
            },
            FieldSpec::InverseShifted { c0 } => 1.0 / (c0 + c),
            FieldSpec::PowShifted { c0, e } => fmath::pow(c0 + c, e),
            FieldSpec::TwoMode { a1, a3 } => 1.0 + a1 * fmath::cos(t) + a3 * fmath::cos(3.0 * t),
        }
    }
}

/// The standard perturbation library 1 + a cos(k .) with a in {0.1, 0.3} and
/// k in {1, 2, 3}.
pub fn perturbation_library() -> Vec<FieldSpec> {
    let mut lib = Vec::new();
    for &amp in &[0.1, 0.3] {
        for k in 1..=3u32 {
            lib.push(FieldSpec::CosMode { amp, k });
        }
    }
    lib
}

/// Ten smooth positive fields per geometry for identity verification.
/// Sphere entries avoid interior critical points where that matters for
/// p != 2 corpora (monotone profiles in cos theta).
pub fn identity_corpus(kind: GeometryKind) -> Vec<FieldSpec> {
    match kind {
        GeometryKind::SphereAxisymmetric => vec![
            FieldSpec::ExpCos { a: 1.0 },
            FieldSpec::ExpCos { a: -0.7 },
            FieldSpec::ExpCos { a: 0.4 },
            FieldSpec::CosMode { amp: 0.5, k: 1 },
            FieldSpec::CosMode { amp: 0.3, k: 2 },
            FieldSpec::Shifted { c0: 2.0 },
            FieldSpec::InverseShifted { c0: 2.0 },
            FieldSpec::PowShifted { c0: 2.5, e: 0.5 },
            FieldSpec::PowShifted { c0: 2.0, e: -1.5 },
            FieldSpec::TwoMode { a1: 0.3, a3: 0.1 },
        ],
        GeometryKind::TorusOneD => vec![
            FieldSpec::Shifted { c0: 2.0 },
            FieldSpec::ExpCos { a: 0.8 },
            FieldSpec::ExpCos { a: -0.5 },
            FieldSpec::SinMode { amp: 0.5, k: 1 },
            FieldSpec::CosMode { amp: 0.4, k: 1 },
            FieldSpec::CosMode { amp: 0.3, k: 2 },
            FieldSpec::SinMode { amp: 0.25, k: 3 },
            FieldSpec::InverseShifted { c0: 2.0 },
            FieldSpec::PowShifted { c0: 2.5, e: 0.5 },
            FieldSpec::TwoMode { a1: 0.3, a3: 0.1 },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_geometry;

    #[test]
    fn corpus_fields_are_positive() {
        for kind in [GeometryKind::SphereAxisymmetric, GeometryKind::TorusOneD] {
            let g = build_geometry(kind, 3, 128).unwrap();
            for spec in identity_corpus(kind) {
                let f = spec.sample(&g);
                assert!(f.is_positive(), "{spec:?} not positive on {kind:?}");
            }
        }
    }

    #[test]
    fn perturbations_have_unit_mean_amplitude() {
        let g = build_geometry(GeometryKind::SphereAxisymmetric, 3, 128).unwrap();
        for spec in perturbation_library() {
            let f = spec.sample(&g);
            assert!(f.is_positive());
            assert!(f.oscillation() > 0.05);
        }
    }
}
