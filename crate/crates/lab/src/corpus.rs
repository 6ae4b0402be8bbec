//! Seeded random field corpora. All randomness flows from a caller-supplied
//! ChaCha generator so that reports are reproducible.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rigidity_core::geometry::{Field, Geometry};

/// Standard normal via Box-Muller.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Smooth positive field: exp of a decaying random harmonic series in the
/// symmetric coordinate (cos-only on the sphere so the poles stay regular).
pub fn random_smooth_positive(geom: &Geometry, rng: &mut ChaCha8Rng, strength: f64) -> Field {
    let modes = 4usize;
    let coeffs: Vec<(f64, f64)> = (1..=modes)
        .map(|k| {
            let s = strength / (k * k) as f64;
            let a = rng.gen_range(-s..s);
            let b = if geom.is_periodic() { rng.gen_range(-s..s) } else { 0.0 };
            (a, b)
        })
        .collect();
    Field::new(
        geom.grid
            .iter()
            .map(|&t| {
                let mut z = 0.0;
                for (k, &(a, b)) in coeffs.iter().enumerate() {
                    let kk = (k + 1) as f64;
                    z += a * (kk * t).cos() + b * (kk * t).sin();
                }
                z.exp()
            })
            .collect(),
    )
}

/// Log-normal node values smoothed by repeated three-point averaging
/// (positivity-preserving; ends reflected on the sphere, wrapped on the
/// torus).
pub fn lognormal_smoothed(
    geom: &Geometry,
    rng: &mut ChaCha8Rng,
    sigma: f64,
    passes: usize,
) -> Field {
    let n = geom.num_nodes();
    let mut v: Vec<f64> = (0..n).map(|_| (sigma * normal(rng)).exp()).collect();
    for _ in 0..passes {
        let mut next = vec![0.0; n];
        for (i, slot) in next.iter_mut().enumerate() {
            let l = geom.value_at_offset(&v, i, -1);
            let r = geom.value_at_offset(&v, i, 1);
            *slot = 0.25 * l + 0.5 * v[i] + 0.25 * r;
        }
        v = next;
    }
    Field::new(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rigidity_core::geometry::{build_geometry, GeometryKind};

    #[test]
    fn corpora_are_positive_and_reproducible() {
        for kind in [GeometryKind::SphereAxisymmetric, GeometryKind::TorusOneD] {
            let g = build_geometry(kind, 3, 128).unwrap();
            let mut r1 = ChaCha8Rng::seed_from_u64(42);
            let mut r2 = ChaCha8Rng::seed_from_u64(42);
            let a = random_smooth_positive(&g, &mut r1, 0.2);
            let b = random_smooth_positive(&g, &mut r2, 0.2);
            assert_eq!(a.values, b.values);
            assert!(a.is_positive());
            let c = lognormal_smoothed(&g, &mut r1, 0.3, 10);
            assert!(c.is_positive());
        }
    }

    #[test]
    fn smoothing_tames_roughness() {
        let g = build_geometry(GeometryKind::TorusOneD, 2, 256).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rough = lognormal_smoothed(&g, &mut rng, 0.3, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let smooth = lognormal_smoothed(&g, &mut rng, 0.3, 20);
        let tv = |f: &Field| -> f64 {
            (0..g.num_half_nodes()).map(|k| g.half_gradient(f, k).abs()).sum()
        };
        assert!(tv(&smooth) < 0.5 * tv(&rough));
    }
}
