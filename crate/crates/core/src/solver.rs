//! Closed-form absolute orientation: centroids, cross-covariance, the 4×4
//! quaternion matrix `M` and its principal eigenvector.

use nalgebra::{Matrix4, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Mat3, Point3, RigidTransform};
use crate::linalg::jacobi_eigen;

/// Top eigenvalue of `M` counts as repeated below this relative gap.
pub const DEGENERACY_GAP: f64 = 1e-9;

const UNIT_QUATERNION_TOL: f64 = 1e-10;

/// `Σ_xy = (1/n) Σ (yᵢ − μ_y)(xᵢ − μ_x)ᵀ` together with the centroids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossCovariance {
    pub sigma_xy: Mat3,
    pub centroid_x: Vector3<f64>,
    pub centroid_y: Vector3<f64>,
}

/// Unit quaternion, scalar first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuatVec(pub [f64; 4]);

impl QuatVec {
    pub fn new(v: [f64; 4]) -> Result<Self> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !((n - 1.0).abs() <= UNIT_QUATERNION_TOL) {
            return Err(Error::NonUnitQuaternion(n));
        }
        Ok(Self(v))
    }

    pub fn identity() -> Self {
        Self([1.0, 0.0, 0.0, 0.0])
    }
}

fn centroid(points: &[Point3]) -> Vector3<f64> {
    points.iter().fold(Vector3::zeros(), |a, p| a + p) / points.len() as f64
}

pub fn cross_covariance(x: &[Point3], y: &[Point3]) -> Result<CrossCovariance> {
    covariance_impl(x, None, y, 0.0)
}

/// Cross-covariance of `(xᵢ + ω sᵢ, yᵢ)`:
/// `(1/n) Σ yᵢ(xᵢ + ω sᵢ)ᵀ − μ_y(μ_x + ω μ_s)ᵀ`, evaluated in centred form.
///
/// `centroid_x` is the centroid of `X` alone; the shape partners only steer
/// the rotation.
pub fn swc_covariance(x: &[Point3], s: &[Point3], y: &[Point3], omega: f64) -> Result<CrossCovariance> {
    if s.len() != x.len() {
        return Err(Error::MalformedCorrespondence(format!(
            "{} shape partners for {} pairs",
            s.len(),
            x.len()
        )));
    }
    covariance_impl(x, Some(s), y, omega)
}

fn covariance_impl(
    x: &[Point3],
    s: Option<&[Point3]>,
    y: &[Point3],
    omega: f64,
) -> Result<CrossCovariance> {
    if x.len() != y.len() {
        return Err(Error::MalformedCorrespondence(format!(
            "{} source points vs {} target points",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::Underdetermined {
            needed: 3,
            got: x.len(),
        });
    }
    let mu_x = centroid(x);
    let mu_y = centroid(y);
    let mu_s = s.map(centroid);
    let mut sigma = Mat3::zeros();
    for i in 0..x.len() {
        let mut dx = x[i] - mu_x;
        if let (Some(s), Some(mu_s)) = (s, mu_s) {
            dx += (s[i] - mu_s) * omega;
        }
        sigma += (y[i] - mu_y) * dx.transpose();
    }
    Ok(CrossCovariance {
        sigma_xy: sigma / x.len() as f64,
        centroid_x: mu_x,
        centroid_y: mu_y,
    })
}

/// The symmetric 4×4 matrix whose top eigenvector is the optimal quaternion.
#[allow(non_snake_case)]
pub fn build_M(cc: &CrossCovariance) -> Matrix4<f64> {
    let s = &cc.sigma_xy;
    let a = s - s.transpose();
    let tr = s.trace();
    let delta = Vector3::new(a[(1, 2)], a[(2, 0)], a[(0, 1)]);
    let block = s + s.transpose() - Mat3::identity() * tr;
    let mut m = Matrix4::zeros();
    m[(0, 0)] = tr;
    for i in 0..3 {
        m[(0, i + 1)] = delta[i];
        m[(i + 1, 0)] = delta[i];
        for j in 0..3 {
            m[(i + 1, j + 1)] = block[(i, j)];
        }
    }
    m
}

/// Top eigenpair of `M` and the relative gap to the second eigenvalue.
#[derive(Debug, Clone, Copy)]
pub struct PrincipalEigen {
    pub vector: QuatVec,
    pub value: f64,
    pub relative_gap: f64,
}

pub fn principal_eigen_4(m: &Matrix4<f64>) -> PrincipalEigen {
    let arr: [[f64; 4]; 4] = std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]));
    let e = jacobi_eigen(arr);
    let mut v = e.vectors[0];
    let lead = if v[0] != 0.0 {
        v[0]
    } else {
        v.iter().copied().find(|x| *x != 0.0).unwrap_or(1.0)
    };
    if lead < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    let scale = e.values.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let relative_gap = if scale > 0.0 {
        (e.values[0] - e.values[1]) / scale
    } else {
        0.0
    };
    PrincipalEigen {
        vector: QuatVec(v),
        value: e.values[0],
        relative_gap,
    }
}

/// Unit eigenvector of the largest eigenvalue, sign fixed so `v0 ≥ 0`.
pub fn principal_eigenvector_4(m: &Matrix4<f64>) -> QuatVec {
    principal_eigen_4(m).vector
}

pub fn quaternion_to_rotation(q: &QuatVec) -> Result<Mat3> {
    let [v0, v1, v2, v3] = QuatVec::new(q.0)?.0;
    Ok(Mat3::new(
        1.0 - 2.0 * (v2 * v2 + v3 * v3),
        2.0 * (v1 * v2 - v0 * v3),
        2.0 * (v1 * v3 + v0 * v2),
        2.0 * (v1 * v2 + v0 * v3),
        1.0 - 2.0 * (v1 * v1 + v3 * v3),
        2.0 * (v2 * v3 - v0 * v1),
        2.0 * (v1 * v3 - v0 * v2),
        2.0 * (v2 * v3 + v0 * v1),
        1.0 - 2.0 * (v1 * v1 + v2 * v2),
    ))
}

#[derive(Debug, Clone, Copy)]
pub struct HornSolution {
    pub transform: RigidTransform,
    /// The top eigenvalue of `M` is (numerically) repeated, so the rotation
    /// is not unique.
    pub degenerate: bool,
}

/// Rigid transform minimising `Σ ‖yᵢ − (R xᵢ + t)‖²`, or with shape partners
/// `s` the SWC variant weighted by `omega`.
pub fn horn_solve(
    x: &[Point3],
    y: &[Point3],
    s: Option<&[Point3]>,
    omega: f64,
) -> Result<HornSolution> {
    let cc = match s {
        Some(s) => swc_covariance(x, s, y, omega)?,
        None => cross_covariance(x, y)?,
    };
    solve_from_covariance(&cc)
}

pub fn solve_from_covariance(cc: &CrossCovariance) -> Result<HornSolution> {
    let pe = principal_eigen_4(&build_M(cc));
    // Σ_xy is accumulated target-first, which makes M the matrix of the
    // inverse rotation under the scalar-first map.
    let rotation = quaternion_to_rotation(&pe.vector)?.transpose();
    let translation = cc.centroid_y - rotation * cc.centroid_x;
    Ok(HornSolution {
        transform: RigidTransform {
            rotation,
            translation,
        },
        degenerate: pe.relative_gap < DEGENERACY_GAP,
    })
}
