//! One-dimensional reductions of compact model manifolds.
//!
//! Two geometries are supported:
//!
//! * the round unit sphere S^n restricted to functions of the polar angle,
//!   with measure density proportional to sin^(n-1)(theta) on [0, pi];
//! * the flat torus with functions of one periodic coordinate on [0, 2pi).
//!
//! The total measure is normalized to 1 so that norms of different exponents
//! compare at matched volume. Quadrature is the composite trapezoid rule on
//! the weighted grid; at the sphere poles the node weight is the exact cap
//! volume, which closes the telescoping sum of conservative stencils.

use crate::fmath;
use alloc::{string::String, vec, vec::Vec};
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryKind {
    SphereAxisymmetric,
    TorusOneD,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeomError {
    Range(String),
    ShapeMismatch { expected: usize, got: usize },
}

impl fmt::Display for GeomError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeomError::Range(msg) => write!(f, "RangeError: {msg}"),
            GeomError::ShapeMismatch { expected, got } => {
                write!(f, "ShapeMismatch: field has {got} nodes, geometry has {expected}")
            }
        }
    }
}

/// A scalar function sampled on the geometry grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(values: Vec<f64>) -> Self {
        Field { values }
    }

    pub fn constant(geom: &Geometry, c: f64) -> Self {
        Field { values: vec![c; geom.num_nodes()] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &v| a.max(fmath::abs(v)))
    }

    pub fn oscillation(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn is_positive(&self) -> bool {
        self.min() > 0.0
    }

    /// Pointwise map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise combination of two fields.
    pub fn zip(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.len(), other.len());
        Field {
            values: self
                .values
                .iter()
                .zip(other.values.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

/// Immutable discretized geometry.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub kind: GeometryKind,
    /// Ambient dimension entering the constants (n >= 2).
    pub n: u32,
    /// Number of cells; the sphere has N+1 nodes, the torus N.
    pub resolution: usize,
    /// Node coordinates.
    pub grid: Vec<f64>,
    /// Measure density at the nodes, normalized so the total measure is 1.
    pub weight: Vec<f64>,
    /// Quadrature weights per node (cell volumes times the normalization).
    quad: Vec<f64>,
    /// Unnormalized cell volumes and their total, kept so that the
    /// normalization stays exact for constants.
    cell_vol: Vec<f64>,
    /// First and second moments int (theta - theta_i)^k w over each cell,
    /// for the moment-corrected quadrature.
    cell_m1: Vec<f64>,
    cell_m2: Vec<f64>,
    total_vol: f64,
    /// Constant K with Ric = K g: n-1 on the unit sphere, 0 on the torus.
    pub ricci_constant: f64,
    /// Grid spacing.
    pub h: f64,
}

/// Integral of g(t) sin^(n-1)(t) over [a, b] by composite Simpson with enough
/// panels that the error sits far below the h^2 floor of the stencils.
fn sin_power_moment(n: u32, a: f64, b: f64, g: impl Fn(f64) -> f64) -> f64 {
    let panels = 32usize;
    let h = (b - a) / panels as f64;
    let f = |t: f64| g(t) * fmath::pow(fmath::sin(t), (n - 1) as f64);
    let mut s = f(a) + f(b);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

pub fn build_geometry(kind: GeometryKind, n: u32, resolution: usize) -> Result<Geometry, GeomError> {
    if resolution < 16 {
        return Err(GeomError::Range(alloc::format!(
            "grid resolution {resolution} must be >= 16"
        )));
    }
    if n < 2 {
        return Err(GeomError::Range(alloc::format!("dimension n = {n} must be >= 2")));
    }
    match kind {
        GeometryKind::SphereAxisymmetric => {
            let nn = resolution;
            let h = core::f64::consts::PI / nn as f64;
            let grid: Vec<f64> = (0..=nn).map(|i| i as f64 * h).collect();
            let dens: Vec<f64> = grid
                .iter()
                .map(|&t| fmath::pow(fmath::sin(t), (n - 1) as f64))
                .collect();
            // Cell volumes are exact integrals of the measure density over
            // [t - h/2, t + h/2] (caps at the poles). This keeps the
            // flux-difference divergence consistent through the pole region,
            // where the density varies fast relative to its size, and makes
            // conservative stencils telescope exactly under the quadrature.
            // The first two cell moments feed the corrected quadrature.
            let pi = core::f64::consts::PI;
            let mut cell_vol = vec![0.0; nn + 1];
            let mut cell_m1 = vec![0.0; nn + 1];
            let mut cell_m2 = vec![0.0; nn + 1];
            for i in 0..=nn {
                let ti = grid[i];
                let a = (ti - 0.5 * h).max(0.0);
                let b = (ti + 0.5 * h).min(pi);
                cell_vol[i] = sin_power_moment(n, a, b, |_| 1.0);
                cell_m1[i] = sin_power_moment(n, a, b, |t| t - ti);
                cell_m2[i] = sin_power_moment(n, a, b, |t| (t - ti) * (t - ti));
            }
            let total_vol: f64 = cell_vol.iter().sum();
            let quad: Vec<f64> = cell_vol.iter().map(|&v| v / total_vol).collect();
            let weight: Vec<f64> = dens.iter().map(|&d| d / total_vol).collect();
            Ok(Geometry {
                kind,
                n,
                resolution: nn,
                grid,
                weight,
                quad,
                cell_vol,
                cell_m1,
                cell_m2,
                total_vol,
                ricci_constant: (n - 1) as f64,
                h,
            })
        }
        GeometryKind::TorusOneD => {
            let nn = resolution;
            let h = 2.0 * core::f64::consts::PI / nn as f64;
            let grid: Vec<f64> = (0..nn).map(|i| i as f64 * h).collect();
            let cell_vol = vec![h; nn];
            let total_vol = h * nn as f64;
            let quad = vec![1.0 / nn as f64; nn];
            let weight = vec![1.0 / total_vol; nn];
            Ok(Geometry {
                kind,
                n,
                resolution: nn,
                grid,
                weight,
                quad,
                cell_vol,
                cell_m1: vec![0.0; nn],
                cell_m2: vec![h * h * h / 12.0; nn],
                total_vol,
                ricci_constant: 0.0,
                h,
            })
        }
    }
}

impl Geometry {
    pub fn num_nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.kind, GeometryKind::TorusOneD)
    }

    pub fn check_field(&self, f: &Field) -> Result<(), GeomError> {
        if f.len() != self.num_nodes() {
            Err(GeomError::ShapeMismatch { expected: self.num_nodes(), got: f.len() })
        } else {
            Ok(())
        }
    }

    /// Quadrature weight of node i (sums to 1).
    pub fn quad_weight(&self, i: usize) -> f64 {
        self.quad[i]
    }

    /// Unnormalized volume of the cell owned by node i.
    pub fn cell_volume(&self, i: usize) -> f64 {
        self.cell_vol[i]
    }

    /// Total unnormalized volume (the normalization constant).
    pub fn total_volume(&self) -> f64 {
        self.total_vol
    }

    /// Integral of a nodal field against the normalized measure.
    /// Computed as dot(cell_vol, f)/total_vol so constants integrate exactly.
    pub fn integrate(&self, f: &Field) -> f64 {
        debug_assert_eq!(f.len(), self.num_nodes());
        let mut s = 0.0;
        for (v, x) in self.cell_vol.iter().zip(f.values.iter()) {
            s += v * x;
        }
        s / self.total_vol
    }

    /// Moment-corrected integral: each cell contributes
    /// f V + f' M1 + f'' M2/2 with exact cell moments of the measure density
    /// and stenciled derivatives of the integrand. Fourth-order for smooth
    /// integrands (the plain rule is second-order because M1 does not vanish
    /// where the density varies). On the torus M1 = 0 and the f'' sum
    /// telescopes, so this coincides with the plain rule there.
    pub fn integrate_corrected(&self, f: &Field) -> f64 {
        debug_assert_eq!(f.len(), self.num_nodes());
        let mut s = 0.0;
        for i in 0..self.num_nodes() {
            let (l, r) = self.neighbors(&f.values, i);
            let fp = (r - l) / (2.0 * self.h);
            let fpp = (r - 2.0 * f.values[i] + l) / (self.h * self.h);
            s += f.values[i] * self.cell_vol[i]
                + fp * self.cell_m1[i]
                + 0.5 * fpp * self.cell_m2[i];
        }
        s / self.total_vol
    }

    /// Integral of a function given at the half nodes (cell interfaces),
    /// against the interface measure density. Used for Dirichlet-form
    /// energies so that they vanish exactly on constants.
    pub fn integrate_half(&self, g: &[f64]) -> f64 {
        debug_assert_eq!(g.len(), self.num_half_nodes());
        let mut s = 0.0;
        match self.kind {
            GeometryKind::SphereAxisymmetric => {
                for (k, &v) in g.iter().enumerate() {
                    s += self.half_density(k) * v;
                }
            }
            GeometryKind::TorusOneD => {
                for &v in g {
                    s += v;
                }
            }
        }
        s * self.h / self.total_vol
    }

    pub fn num_half_nodes(&self) -> usize {
        match self.kind {
            GeometryKind::SphereAxisymmetric => self.resolution,
            GeometryKind::TorusOneD => self.resolution,
        }
    }

    /// Unnormalized measure density at half node k (between nodes k and k+1;
    /// on the torus the last interface wraps to node 0).
    pub fn half_density(&self, k: usize) -> f64 {
        match self.kind {
            GeometryKind::SphereAxisymmetric => {
                let t = (k as f64 + 0.5) * self.h;
                fmath::pow(fmath::sin(t), (self.n - 1) as f64)
            }
            GeometryKind::TorusOneD => 1.0,
        }
    }

    /// Forward difference (u_{k+1} - u_k)/h at half node k.
    pub fn half_gradient(&self, u: &Field, k: usize) -> f64 {
        let v = &u.values;
        match self.kind {
            GeometryKind::SphereAxisymmetric => (v[k + 1] - v[k]) / self.h,
            GeometryKind::TorusOneD => {
                let next = if k + 1 == self.resolution { 0 } else { k + 1 };
                (v[next] - v[k]) / self.h
            }
        }
    }

    /// Neighbor values honoring the symmetry of the geometry: even ghost
    /// reflection at the sphere poles, wrap-around on the torus.
    fn neighbors(&self, u: &[f64], i: usize) -> (f64, f64) {
        match self.kind {
            GeometryKind::SphereAxisymmetric => {
                let nn = self.resolution;
                let left = if i == 0 { u[1] } else { u[i - 1] };
                let right = if i == nn { u[nn - 1] } else { u[i + 1] };
                (left, right)
            }
            GeometryKind::TorusOneD => {
                let nn = self.resolution;
                let left = u[(i + nn - 1) % nn];
                let right = u[(i + 1) % nn];
                (left, right)
            }
        }
    }

    /// Centered first derivative at the nodes (zero at the sphere poles by
    /// the even reflection).
    pub fn derivative(&self, u: &Field) -> Field {
        let n = self.num_nodes();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let (l, r) = self.neighbors(&u.values, i);
            out[i] = (r - l) / (2.0 * self.h);
        }
        Field::new(out)
    }

    /// Centered second derivative at the nodes.
    pub fn second_derivative(&self, u: &Field) -> Field {
        let n = self.num_nodes();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let (l, r) = self.neighbors(&u.values, i);
            out[i] = (r - 2.0 * u.values[i] + l) / (self.h * self.h);
        }
        Field::new(out)
    }

    /// Neighbor value at signed offset from i, even-reflected at the poles
    /// and wrapped on the torus.
    pub fn value_at_offset(&self, u: &[f64], i: usize, off: isize) -> f64 {
        let n = self.num_nodes() as isize;
        let j = i as isize + off;
        if self.is_periodic() {
            u[j.rem_euclid(n) as usize]
        } else {
            let j = if j < 0 { -j } else if j >= n { 2 * (n - 1) - j } else { j };
            u[j as usize]
        }
    }

    /// Fourth-order first derivative (five-point stencil).
    pub fn derivative_h4(&self, u: &Field) -> Field {
        let n = self.num_nodes();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let m2 = self.value_at_offset(&u.values, i, -2);
            let m1 = self.value_at_offset(&u.values, i, -1);
            let p1 = self.value_at_offset(&u.values, i, 1);
            let p2 = self.value_at_offset(&u.values, i, 2);
            out[i] = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * self.h);
        }
        Field::new(out)
    }

    /// Fourth-order second derivative (five-point stencil).
    pub fn second_derivative_h4(&self, u: &Field) -> Field {
        let n = self.num_nodes();
        let h2 = self.h * self.h;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let m2 = self.value_at_offset(&u.values, i, -2);
            let m1 = self.value_at_offset(&u.values, i, -1);
            let p1 = self.value_at_offset(&u.values, i, 1);
            let p2 = self.value_at_offset(&u.values, i, 2);
            out[i] = (-m2 + 16.0 * m1 - 30.0 * u.values[i] + 16.0 * p1 - p2) / (12.0 * h2);
        }
        Field::new(out)
    }

    /// |grad u| at the nodes.
    pub fn gradient_magnitude(&self, u: &Field) -> Field {
        self.derivative(u).map(fmath::abs)
    }

    /// Hessian eigencomponents of an axisymmetric function: the radial
    /// component u'' and the tangential component cot(theta) u' (one copy per
    /// each of the n-1 latitude directions), with the analytic limit
    /// cot(theta) u' -> u'' at the poles. On the torus the tangential
    /// component vanishes.
    pub fn hessian_components(&self, u: &Field) -> (Field, Field) {
        let radial = self.second_derivative(u);
        match self.kind {
            GeometryKind::SphereAxisymmetric => {
                let du = self.derivative(u);
                let nn = self.resolution;
                let mut tang = vec![0.0; nn + 1];
                tang[0] = radial.values[0];
                tang[nn] = radial.values[nn];
                for i in 1..nn {
                    let t = self.grid[i];
                    tang[i] = fmath::cos(t) / fmath::sin(t) * du.values[i];
                }
                (radial, Field::new(tang))
            }
            GeometryKind::TorusOneD => {
                let zero = Field::constant(self, 0.0);
                (radial, zero)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_is_exact() {
        for (kind, n, nn) in [
            (GeometryKind::SphereAxisymmetric, 3, 200),
            (GeometryKind::SphereAxisymmetric, 4, 128),
            (GeometryKind::TorusOneD, 2, 128),
        ] {
            let g = build_geometry(kind, n, nn).unwrap();
            let one = Field::constant(&g, 1.0);
            assert!((g.integrate(&one) - 1.0).abs() < 1e-13);
            let c = Field::constant(&g, -3.75);
            assert!((g.integrate(&c) + 3.75).abs() < 1e-13);
        }
    }

    #[test]
    fn torus_has_flat_metric() {
        let g = build_geometry(GeometryKind::TorusOneD, 2, 128).unwrap();
        assert_eq!(g.ricci_constant, 0.0);
        let sphere = build_geometry(GeometryKind::SphereAxisymmetric, 3, 128).unwrap();
        assert_eq!(sphere.ricci_constant, 2.0);
    }

    #[test]
    fn sphere_odd_integrand_vanishes() {
        let g = build_geometry(GeometryKind::SphereAxisymmetric, 3, 200).unwrap();
        let f = Field::new(g.grid.iter().map(|&t| fmath::cos(t)).collect());
        assert!(g.integrate(&f).abs() < 1e-13);
    }

    #[test]
    fn sphere_second_moment() {
        // integral of cos^2(theta) sin^(n-1)(theta) / integral of sin^(n-1):
        // equals 1/(n+1) (= the mean of x_1^2 on S^n). Hand values: 1/3 for
        // n = 2, 1/4 for n = 3. The cell-averaged rule is O(h^2).
        let g3 = build_geometry(GeometryKind::SphereAxisymmetric, 3, 200).unwrap();
        let f3 = Field::new(g3.grid.iter().map(|&t| fmath::cos(t) * fmath::cos(t)).collect());
        assert!((g3.integrate(&f3) - 0.25).abs() < 2e-5);
        let g3f = build_geometry(GeometryKind::SphereAxisymmetric, 3, 800).unwrap();
        let f3f = Field::new(g3f.grid.iter().map(|&t| fmath::cos(t) * fmath::cos(t)).collect());
        assert!((g3f.integrate(&f3f) - 0.25).abs() < 1e-6);
        let g2 = build_geometry(GeometryKind::SphereAxisymmetric, 2, 200).unwrap();
        let f2 = Field::new(g2.grid.iter().map(|&t| fmath::cos(t) * fmath::cos(t)).collect());
        assert!((g2.integrate(&f2) - 1.0 / 3.0).abs() < 2e-5);
    }

    #[test]
    fn torus_trig_integral() {
        let g = build_geometry(GeometryKind::TorusOneD, 2, 128).unwrap();
        let f = Field::new(g.grid.iter().map(|&x| fmath::sin(x) * fmath::sin(x)).collect());
        assert!((g.integrate(&f) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn hessian_of_cos_theta_is_umbilic() {
        let g = build_geometry(GeometryKind::SphereAxisymmetric, 3, 400).unwrap();
        let u = Field::new(g.grid.iter().map(|&t| fmath::cos(t)).collect());
        let (rad, tan) = g.hessian_components(&u);
        let h2 = g.h * g.h;
        for i in 0..g.num_nodes() {
            let expect = -fmath::cos(g.grid[i]);
            assert!(
                (rad.values[i] - expect).abs() < 4.0 * h2,
                "radial at node {i}: {} vs {expect}",
                rad.values[i]
            );
            assert!(
                (tan.values[i] - expect).abs() < 4.0 * h2,
                "tangential at node {i}: {} vs {expect}",
                tan.values[i]
            );
        }
    }

    #[test]
    fn torus_hessian_is_flat() {
        let g = build_geometry(GeometryKind::TorusOneD, 2, 256).unwrap();
        let u = Field::new(g.grid.iter().map(|&x| fmath::sin(x)).collect());
        let (rad, tan) = g.hessian_components(&u);
        assert_eq!(tan.max_abs(), 0.0);
        for i in 0..g.num_nodes() {
            assert!((rad.values[i] + fmath::sin(g.grid[i])).abs() < 1e-3);
        }
    }

    #[test]
    fn constant_has_zero_derivatives() {
        for kind in [GeometryKind::SphereAxisymmetric, GeometryKind::TorusOneD] {
            let g = build_geometry(kind, 3, 64).unwrap();
            let u = Field::constant(&g, 2.5);
            assert_eq!(g.derivative(&u).max_abs(), 0.0);
            let (rad, tan) = g.hessian_components(&u);
            assert_eq!(rad.max_abs(), 0.0);
            assert_eq!(tan.max_abs(), 0.0);
        }
    }

    #[test]
    fn rejects_small_grids() {
        assert!(matches!(
            build_geometry(GeometryKind::TorusOneD, 2, 8),
            Err(GeomError::Range(_))
        ));
        assert!(matches!(
            build_geometry(GeometryKind::SphereAxisymmetric, 1, 64),
            Err(GeomError::Range(_))
        ));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let g = build_geometry(GeometryKind::TorusOneD, 2, 32).unwrap();
        let f = Field::new(vec![1.0; 7]);
        assert!(matches!(g.check_field(&f), Err(GeomError::ShapeMismatch { .. })));
    }
}
