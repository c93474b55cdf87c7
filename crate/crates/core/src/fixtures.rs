//! Seeded synthetic Gaussian sets used by tests, the verifier and the demo.

use nalgebra::{Quaternion, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::gaussian::{canonical_quaternion, Gaussian3D};
use crate::set::GaussianSet;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniformly random unit quaternion with `w >= 0`.
pub fn random_rotation<R: Rng>(rng: &mut R) -> Quaternion<f64> {
    // Shoemake's subgroup algorithm.
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
    let u3: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let q = Quaternion::new(b * u3.cos(), a * u2.sin(), a * u2.cos(), b * u3.sin());
    canonical_quaternion(q / q.norm())
}

/// A single random Gaussian inside the unit cube.
pub fn random_gaussian<R: Rng>(rng: &mut R) -> Gaussian3D {
    Gaussian3D {
        center: Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ),
        opacity: rng.gen_range(0.05..1.0),
        scale: Vector3::new(
            log_uniform(rng, 0.02, 0.5),
            log_uniform(rng, 0.02, 0.5),
            log_uniform(rng, 0.02, 0.5),
        ),
        rotation: random_rotation(rng),
        sh_dc: [
            rng.gen_range(-1.5..1.5),
            rng.gen_range(-1.5..1.5),
            rng.gen_range(-1.5..1.5),
        ],
        sh_rest: Vec::new(),
    }
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

pub fn random_set(seed: u64, n: usize) -> GaussianSet {
    let mut rng = rng(seed);
    GaussianSet::new((0..n).map(|_| random_gaussian(&mut rng)).collect())
}

/// An object made of `clusters` blobs of small Gaussians, each blob with
/// its own base color. Centers fall inside the unit ball.
pub fn random_clusters(seed: u64, n: usize, clusters: usize) -> GaussianSet {
    let mut rng = rng(seed);
    let clusters = clusters.max(1);
    let blobs: Vec<(Vector3<f64>, f64, [f64; 3])> = (0..clusters)
        .map(|_| {
            let c = loop {
                let v = Vector3::new(
                    rng.gen_range(-0.6..0.6),
                    rng.gen_range(-0.6..0.6),
                    rng.gen_range(-0.6..0.6),
                );
                if v.norm() <= 0.6 {
                    break v;
                }
            };
            let radius = rng.gen_range(0.12..0.3);
            let color = [
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
            ];
            (c, radius, color)
        })
        .collect();
    let gaussians = (0..n)
        .map(|i| {
            let (c, radius, color) = blobs[i % clusters];
            let offset = loop {
                let v = Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                if v.norm() <= 1.0 {
                    break v * radius;
                }
            };
            Gaussian3D {
                center: c + offset,
                opacity: rng.gen_range(0.3..1.0),
                scale: Vector3::new(
                    log_uniform(&mut rng, 0.008, 0.05),
                    log_uniform(&mut rng, 0.008, 0.05),
                    log_uniform(&mut rng, 0.008, 0.05),
                ),
                rotation: random_rotation(&mut rng),
                sh_dc: [
                    color[0] + rng.gen_range(-0.2..0.2),
                    color[1] + rng.gen_range(-0.2..0.2),
                    color[2] + rng.gen_range(-0.2..0.2),
                ],
                sh_rest: Vec::new(),
            }
        })
        .collect();
    GaussianSet::new(gaussians)
}
