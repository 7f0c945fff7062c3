//! Point-pair shape scores: eigenvalue comparison (CTSF), the weighted
//! distance `d_cm`, and Frobenius scores between log-embedded tensors.

use nalgebra::Vector3;
use rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::geometry::{Mat3, Point3, PointCloud};
use crate::lie::{embed_tensor, LogEmbedding, TensorEmbedding, DEFAULT_EPS_REL};
use crate::spatial::SpatialIndex;
use crate::voting::{voting_field, SymTensor3, VotingConfig, DEFAULT_PHI_MAX};

/// Weights below this are treated as exactly zero.
pub const DEFAULT_ZERO_CUTOFF: f64 = 1e-8;
pub const DEFAULT_DECAY: f64 = 0.5;
/// Pairs sampled when calibrating the default initial weight.
pub const CALIBRATION_PAIRS: usize = 1000;
const CALIBRATION_SEED: u64 = 0x5eed_ca1b;
const CALIBRATION_FACTOR: f64 = 10.0;

/// Per-point shape data shared by every algorithm variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeDescriptor {
    pub point: Point3,
    /// Eigenvalues of `S(p)`, descending.
    pub eigenvalues: [f64; 3],
    pub embedding: LogEmbedding,
    pub factors: TensorEmbedding,
}

impl ShapeDescriptor {
    pub fn new(point: Point3, tensor: &SymTensor3, eps_rel: f64, prescale: bool) -> Result<Self> {
        let factors = embed_tensor(tensor, eps_rel, prescale)?;
        Ok(Self {
            point,
            eigenvalues: tensor.eigenvalues(),
            embedding: factors.at(&point),
            factors,
        })
    }

    /// The same tensor attached to a moved point; only `T12` changes.
    pub fn at(&self, point: &Point3) -> Self {
        Self {
            point: *point,
            embedding: self.factors.at(point),
            ..*self
        }
    }
}

/// Settings for the per-cloud descriptor pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescriptorConfig {
    pub voting: VotingConfig,
    pub eps_rel: f64,
    /// Divide each tensor by `max(trace, 1)` before embedding.
    pub prescale: bool,
}

impl DescriptorConfig {
    pub fn new(k_percent: f64) -> Self {
        Self {
            voting: VotingConfig::new(k_percent),
            eps_rel: DEFAULT_EPS_REL,
            prescale: false,
        }
    }
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        let mut c = Self::new(5.0);
        c.voting.phi_max = DEFAULT_PHI_MAX;
        c
    }
}

pub fn descriptors(cloud: &PointCloud, cfg: &DescriptorConfig) -> Result<Vec<ShapeDescriptor>> {
    let field = voting_field(cloud, &cfg.voting)?;
    cloud
        .points
        .iter()
        .zip(&field.anisotropic)
        .map(|(p, s)| ShapeDescriptor::new(*p, s, cfg.eps_rel, cfg.prescale))
        .collect()
}

/// `w_m = w0 · bᵐ`, snapped to zero below `zero_cutoff`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSchedule {
    pub w0: f64,
    pub b: f64,
    pub m: u32,
    pub zero_cutoff: f64,
}

impl WeightSchedule {
    pub fn new(w0: f64, b: f64) -> Result<Self> {
        if !(w0 >= 0.0 && w0.is_finite()) {
            return Err(Error::InvalidParameter(format!("w0 must be finite and >= 0, got {w0}")));
        }
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::InvalidParameter(format!("b must lie in (0, 1), got {b}")));
        }
        Ok(Self {
            w0,
            b,
            m: 0,
            zero_cutoff: DEFAULT_ZERO_CUTOFF,
        })
    }

    /// A schedule pinned at a fixed weight (no decay observable before the
    /// first step).
    pub fn constant(w: f64) -> Self {
        Self {
            w0: w,
            b: DEFAULT_DECAY,
            m: 0,
            zero_cutoff: DEFAULT_ZERO_CUTOFF,
        }
    }

    pub fn weight(&self) -> f64 {
        let w = self.w0 * self.b.powi(self.m as i32);
        if w < self.zero_cutoff {
            0.0
        } else {
            w
        }
    }

    pub fn step(&mut self) {
        self.m += 1;
    }
}

/// `Σᵢ (λᵢ(p) − λᵢ(q))²`.
pub fn ctsf(dp: &ShapeDescriptor, dq: &ShapeDescriptor) -> f64 {
    dp.eigenvalues
        .iter()
        .zip(&dq.eigenvalues)
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// `‖p − q‖ + w_m · ctsf`.
pub fn d_cm(p: &Point3, q: &Point3, dp: &ShapeDescriptor, dq: &ShapeDescriptor, w: &WeightSchedule) -> f64 {
    let dist = (p - q).norm();
    let wm = w.weight();
    if wm == 0.0 {
        dist
    } else {
        dist + wm * ctsf(dp, dq)
    }
}

/// `(D11, D12) = (T11(p) − T11(q), T12(p) − T12(q))`.
pub fn lie_difference(dp: &ShapeDescriptor, dq: &ShapeDescriptor) -> (Mat3, Vector3<f64>) {
    (
        dp.embedding.t11 - dq.embedding.t11,
        dp.embedding.t12 - dq.embedding.t12,
    )
}

fn lie_terms(dp: &ShapeDescriptor, dq: &ShapeDescriptor) -> (f64, f64) {
    let (d11, d12) = lie_difference(dp, dq);
    (d11.norm_squared(), d12.norm_squared())
}

/// `‖D11‖_F² + ‖D12‖²`.
pub fn frob_score(dp: &ShapeDescriptor, dq: &ShapeDescriptor) -> f64 {
    let (a, b) = lie_terms(dp, dq);
    a + b
}

/// `ω ‖D11‖_F² + ‖D12‖²` with `ω = w_m`.
pub fn weighted_frob_score(dp: &ShapeDescriptor, dq: &ShapeDescriptor, w: &WeightSchedule) -> f64 {
    let (a, b) = lie_terms(dp, dq);
    w.weight() * a + b
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Which shape term the calibrated initial weight should balance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationScale {
    /// Distance against eigenvalue CTSF.
    Ctsf,
    /// Squared distance against `‖D11‖_F²`.
    LieSquared,
}

/// Default `w0`: ten times the ratio of the median source-to-target
/// nearest-neighbour distance to the median shape term over a seeded sample
/// of random source/target pairs. Returns 0 when the shape term vanishes.
pub fn calibrate_w0(
    source: &[ShapeDescriptor],
    target: &[ShapeDescriptor],
    scale: CalibrationScale,
) -> Result<f64> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let target_points: Vec<Point3> = target.iter().map(|d| d.point).collect();
    let index = SpatialIndex::build(&target_points)?;
    let nn: Vec<f64> = source
        .iter()
        .map(|d| {
            let dist = index.nearest(&d.point).1;
            match scale {
                CalibrationScale::Ctsf => dist,
                CalibrationScale::LieSquared => dist * dist,
            }
        })
        .collect();

    let mut rng = ChaCha20Rng::seed_from_u64(CALIBRATION_SEED);
    let shape: Vec<f64> = (0..CALIBRATION_PAIRS)
        .map(|_| {
            let i = (rng.next_u64() % source.len() as u64) as usize;
            let j = (rng.next_u64() % target.len() as u64) as usize;
            match scale {
                CalibrationScale::Ctsf => ctsf(&source[i], &target[j]),
                CalibrationScale::LieSquared => lie_difference(&source[i], &target[j]).0.norm_squared(),
            }
        })
        .collect();
    let denom = median(shape);
    if !(denom > 0.0) {
        return Ok(0.0);
    }
    Ok(CALIBRATION_FACTOR * median(nn) / denom)
}
