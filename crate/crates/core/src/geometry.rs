//! Points, clouds, rigid transforms and the residual metrics shared by every
//! registration variant.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Per-entry tolerance for `RᵀR = I` and `det R = 1` on construction.
pub const ROTATION_TOL: f64 = 1e-12;

/// Looser tolerance used when validating rotations that come from outside
/// the library (files, accumulated products).
pub const ROTATION_CHECK_TOL: f64 = 1e-9;

/// An ordered point set with stable indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub label: String,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, label: impl Into<String>) -> Self {
        Self {
            points,
            label: label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Point3::zeros(), |a, p| a + p);
        Some(sum / self.points.len() as f64)
    }

    /// Length of the axis-aligned bounding box diagonal.
    pub fn bounding_box_diagonal(&self) -> f64 {
        let Some(first) = self.points.first() else {
            return 0.0;
        };
        let (lo, hi) = self
            .points
            .iter()
            .fold((*first, *first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
        (hi - lo).norm()
    }

    /// All coordinates are finite.
    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p.iter().all(|c| c.is_finite()))
    }
}

/// `x ↦ R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vector3<f64>,
}

/// Whether `r` is orthonormal with unit determinant within `tol` per entry.
pub fn is_rotation(r: &Mat3, tol: f64) -> bool {
    if !r.iter().all(|x| x.is_finite()) {
        return false;
    }
    let gram = r.transpose() * r - Mat3::identity();
    gram.iter().all(|e| e.abs() <= tol) && (r.determinant() - 1.0).abs() <= tol
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Validating constructor.
    pub fn new(rotation: Mat3, translation: Vector3<f64>) -> Result<Self> {
        Self::with_tolerance(rotation, translation, ROTATION_TOL)
    }

    pub fn with_tolerance(rotation: Mat3, translation: Vector3<f64>, tol: f64) -> Result<Self> {
        if !is_rotation(&rotation, tol) {
            return Err(Error::NotARotation(format!(
                "RᵀR deviates from I or det R != 1 beyond {tol:e}"
            )));
        }
        if !translation.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: t,
        }
    }

    /// Right-handed rotation by `angle` radians about `axis`.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidParameter("rotation axis must be nonzero".into()));
        }
        let k = axis / n;
        let (s, c) = angle.sin_cos();
        let kx = Mat3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
        let rotation = Mat3::identity() + kx * s + kx * kx * (1.0 - c);
        Ok(Self {
            rotation,
            translation: Vector3::zeros(),
        })
    }

    pub fn apply_point(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    /// Applies `self` after `inner`: `R = R1 R2`, `t = R1 t2 + t1`.
    pub fn compose(&self, inner: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * inner.rotation,
            translation: self.rotation * inner.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Gram–Schmidt on the columns of `R`, removing accumulated drift.
    pub fn reorthonormalized(&self) -> RigidTransform {
        RigidTransform {
            rotation: reorthonormalize(&self.rotation),
            translation: self.translation,
        }
    }

    /// Rotation angle of `R` in radians.
    pub fn rotation_angle(&self) -> f64 {
        rotation_angle_of(&self.rotation)
    }
}

pub fn reorthonormalize(r: &Mat3) -> Mat3 {
    let c0 = r.column(0).normalize();
    let c1 = (r.column(1) - c0 * c0.dot(&r.column(1))).normalize();
    let c2 = c0.cross(&c1);
    Mat3::from_columns(&[c0, c1, c2])
}

pub fn apply_transform(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    PointCloud {
        points: transform_points(&cloud.points, t),
        label: cloud.label.clone(),
    }
}

pub fn transform_points(points: &[Point3], t: &RigidTransform) -> Vec<Point3> {
    points.iter().map(|p| t.apply_point(p)).collect()
}

pub fn compose(outer: &RigidTransform, inner: &RigidTransform) -> RigidTransform {
    outer.compose(inner)
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

/// Mean squared residual `(1/n) Σ ‖yᵢ − (R xᵢ + t)‖²` over index-aligned pairs.
pub fn mse(x: &[Point3], y: &[Point3], t: &RigidTransform) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::MalformedCorrespondence(format!(
            "{} source points vs {} target points",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::MalformedCorrespondence("no pairs".into()));
    }
    let sum: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| (yi - t.apply_point(xi)).norm_squared())
        .sum();
    Ok(sum / x.len() as f64)
}

/// Root of [`mse`].
pub fn mrms(x: &[Point3], y: &[Point3], t: &RigidTransform) -> Result<f64> {
    mse(x, y, t).map(f64::sqrt)
}

/// Geodesic angle between two rotations, in radians.
pub fn rotation_geodesic_error(r: &Mat3, r_gt: &Mat3) -> Result<f64> {
    for (name, m) in [("estimate", r), ("ground truth", r_gt)] {
        if !is_rotation(m, ROTATION_CHECK_TOL) {
            return Err(Error::NotARotation(format!("{name} is not a rotation")));
        }
    }
    Ok(rotation_angle_of(&(r.transpose() * r_gt)))
}

/// `atan2(sin θ, cos θ)` from the skew and trace parts; stays accurate near
/// zero where `acos` of the trace loses half the digits.
fn rotation_angle_of(r: &Mat3) -> f64 {
    let skew = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    (0.5 * skew.norm()).atan2(0.5 * (r.trace() - 1.0))
}
