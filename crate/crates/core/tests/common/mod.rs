#![allow(dead_code)]

use lieicp::{Mat3, Point3, PointCloud, RigidTransform};
use nalgebra::{UnitQuaternion, Vector3};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

pub struct Rng(ChaCha20Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha20Rng::seed_from_u64(seed))
    }

    /// Uniform in [0, 1).
    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn index(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n as u64) as usize
    }

    pub fn gauss(&mut self) -> f64 {
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn vec3(&mut self, half: f64) -> Vector3<f64> {
        Vector3::new(self.range(-half, half), self.range(-half, half), self.range(-half, half))
    }

    pub fn point(&mut self, half: f64) -> Point3 {
        self.vec3(half)
    }

    pub fn rotation(&mut self) -> Mat3 {
        let q = nalgebra::Quaternion::new(self.gauss(), self.gauss(), self.gauss(), self.gauss());
        UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
    }

    pub fn rigid(&mut self, half_t: f64) -> RigidTransform {
        let r = self.rotation();
        let t = self.vec3(half_t);
        RigidTransform::new(r, t).unwrap()
    }

    pub fn cloud(&mut self, n: usize, half: f64) -> PointCloud {
        PointCloud::new((0..n).map(|_| self.point(half)).collect(), "random")
    }
}

/// Jittered samples of the saddle-like patch `z = 0.3x² − 0.2y² + 0.1xy`.
pub fn surface_patch(n: usize, seed: u64) -> PointCloud {
    let mut rng = Rng::new(seed);
    let pts = (0..n)
        .map(|_| {
            let x = rng.range(-1.0, 1.0);
            let y = rng.range(-1.0, 1.0);
            Vector3::new(x, y, 0.3 * x * x - 0.2 * y * y + 0.1 * x * y)
        })
        .collect();
    PointCloud::new(pts, "patch")
}

pub fn max_abs_diff(a: &Mat3, b: &Mat3) -> f64 {
    (a - b).iter().fold(0.0f64, |m, x| m.max(x.abs()))
}
