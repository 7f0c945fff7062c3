//! Gaussian models as elements of the affine group `A⁺(4)` and their
//! logarithms in the Lie algebra `A(4)`.
//!
//! A Gaussian `N(μ, Σ)` with `Σ⁻¹ = L Lᵀ` maps to the upper triangular affine
//! matrix `[[L⁻ᵀ, μ], [0, 1]]`. Its matrix logarithm has the block form
//! `[[log L⁻ᵀ, Φ μ], [0, 0]]` with `Φ = (L⁻ᵀ − I)⁻¹ log L⁻ᵀ`, which is
//! computed here by inverse scaling and squaring on the 3×3 block alone.

use nalgebra::{Matrix4, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Mat3;
use crate::linalg::{
    cholesky_lower, cholesky_upper_reverse, upper_triangular_inverse, upper_triangular_sqrt,
};
use crate::voting::SymTensor3;

/// Default relative ridge added to orientation tensors before embedding.
pub const DEFAULT_EPS_REL: f64 = 1e-6;

/// Square roots are taken until `‖U − I‖_F` drops below this.
pub const SCALING_THRESHOLD: f64 = 0.25;

/// Series are summed until the Frobenius norm of the next term is below this.
pub const SERIES_TERM_TOL: f64 = 1e-16;

const MAX_SQRT_STEPS: usize = 128;
const MAX_SERIES_TERMS: usize = 400;

/// `N(μ, Σ)` with `Σ` strictly positive definite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianModel {
    pub mu: Vector3<f64>,
    pub sigma: SymTensor3,
}

impl GaussianModel {
    pub fn new(mu: Vector3<f64>, sigma: SymTensor3) -> Result<Self> {
        if cholesky_lower(&sigma.to_matrix()).is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { mu, sigma })
    }

    pub fn standard() -> Self {
        Self {
            mu: Vector3::zeros(),
            sigma: SymTensor3::identity(),
        }
    }
}

/// `[[Z, μ], [0, 1]]` with `Z` upper triangular with positive diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinePlus {
    pub z: Mat3,
    pub mu: Vector3<f64>,
}

fn is_upper_triangular(m: &Mat3) -> bool {
    m[(1, 0)] == 0.0 && m[(2, 0)] == 0.0 && m[(2, 1)] == 0.0
}

fn zero_lower(mut m: Mat3) -> Mat3 {
    m[(1, 0)] = 0.0;
    m[(2, 0)] = 0.0;
    m[(2, 1)] = 0.0;
    m
}

impl AffinePlus {
    pub fn new(z: Mat3, mu: Vector3<f64>) -> Result<Self> {
        if !is_upper_triangular(&z) {
            return Err(Error::InvalidParameter("Z must be upper triangular".into()));
        }
        if !(0..3).all(|i| z[(i, i)] > 0.0) {
            return Err(Error::InvalidParameter("Z must have a positive diagonal".into()));
        }
        Ok(Self { z, mu })
    }

    pub fn identity() -> Self {
        Self {
            z: Mat3::identity(),
            mu: Vector3::zeros(),
        }
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.z);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.mu);
        m
    }

    /// Group product (matrix multiplication).
    pub fn mul(&self, rhs: &AffinePlus) -> AffinePlus {
        AffinePlus {
            z: zero_lower(self.z * rhs.z),
            mu: self.z * rhs.mu + self.mu,
        }
    }

    /// The Gaussian this element represents: `Σ = Z Zᵀ`.
    pub fn to_gaussian(&self) -> GaussianModel {
        GaussianModel {
            mu: self.mu,
            sigma: SymTensor3::from_matrix(&(self.z * self.z.transpose())),
        }
    }
}

/// Block logarithm `[[T11, T12], [0, 0]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEmbedding {
    pub t11: Mat3,
    pub t12: Vector3<f64>,
}

impl LogEmbedding {
    pub fn zero() -> Self {
        Self {
            t11: Mat3::zeros(),
            t12: Vector3::zeros(),
        }
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.t11);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.t12);
        m
    }

    pub fn add(&self, rhs: &LogEmbedding) -> LogEmbedding {
        LogEmbedding {
            t11: self.t11 + rhs.t11,
            t12: self.t12 + rhs.t12,
        }
    }

    pub fn scale(&self, s: f64) -> LogEmbedding {
        LogEmbedding {
            t11: self.t11 * s,
            t12: self.t12 * s,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t11.iter().chain(self.t12.iter()).all(|x| x.is_finite())
    }

    /// Matrix exponential of the block matrix, by scaling and squaring.
    pub fn exp(&self) -> AffinePlus {
        let e = expm4(&self.to_matrix());
        AffinePlus {
            z: zero_lower(e.fixed_view::<3, 3>(0, 0).into_owned()),
            mu: e.fixed_view::<3, 1>(0, 3).into_owned(),
        }
    }
}

/// 4×4 matrix exponential: Taylor series on `M / 2^s`, squared `s` times.
pub(crate) fn expm4(m: &Matrix4<f64>) -> Matrix4<f64> {
    let norm = m.norm();
    let mut s = 0u32;
    if norm > 0.5 {
        s = (norm / 0.5).log2().ceil() as u32;
    }
    let b = m / 2f64.powi(s as i32);
    let mut sum = Matrix4::identity();
    let mut term = Matrix4::identity();
    for n in 1..MAX_SERIES_TERMS {
        term = term * b / n as f64;
        sum += term;
        if term.norm() < SERIES_TERM_TOL {
            break;
        }
    }
    for _ in 0..s {
        sum = sum * sum;
    }
    sum
}

/// `S + ε I` with `ε = eps_rel · max(trace S, 1)`.
pub fn regularize(s: &SymTensor3, eps_rel: f64) -> SymTensor3 {
    let eps = eps_rel * s.trace().max(1.0);
    s.add_identity(eps)
}

/// `L⁻ᵀ` for the lower Cholesky factor `L` of `Σ⁻¹`; equivalently the upper
/// triangular `U` with positive diagonal and `Σ = U Uᵀ`.
pub fn cholesky_inverse_factor(sigma: &SymTensor3) -> Result<Mat3> {
    cholesky_upper_reverse(&sigma.to_matrix()).ok_or(Error::NotPositiveDefinite)
}

pub fn embed(g: &GaussianModel) -> Result<AffinePlus> {
    Ok(AffinePlus {
        z: cholesky_inverse_factor(&g.sigma)?,
        mu: g.mu,
    })
}

fn check_pdut(u: &Mat3) -> Result<()> {
    if !u.iter().all(|x| x.is_finite()) {
        return Err(Error::LogDomain("non-finite entries".into()));
    }
    if !is_upper_triangular(u) {
        return Err(Error::LogDomain("matrix is not upper triangular".into()));
    }
    if !(0..3).all(|i| u[(i, i)] > 0.0) {
        return Err(Error::LogDomain("diagonal must be strictly positive".into()));
    }
    Ok(())
}

/// Successive square roots `U^(1/2^j)`, `j = 1..=k`, stopping at the first
/// root within [`SCALING_THRESHOLD`] of the identity.
fn square_root_chain(u: &Mat3) -> Result<Vec<Mat3>> {
    let mut chain = Vec::new();
    let mut r = *u;
    while (r - Mat3::identity()).norm() >= SCALING_THRESHOLD {
        if chain.len() == MAX_SQRT_STEPS {
            return Err(Error::LogDomain("square-root scaling did not converge".into()));
        }
        r = upper_triangular_sqrt(&r);
        chain.push(r);
    }
    Ok(chain)
}

/// `log(I + X) = Σ_{n≥1} (−1)^{n−1} Xⁿ / n`.
fn mercator_series(x: &Mat3) -> Mat3 {
    let mut sum = Mat3::zeros();
    let mut power = *x;
    for n in 1..MAX_SERIES_TERMS {
        let term = power / n as f64;
        if n % 2 == 1 {
            sum += term;
        } else {
            sum -= term;
        }
        if term.norm() < SERIES_TERM_TOL {
            break;
        }
        power *= x;
    }
    sum
}

/// `C⁻¹ log(I + C) = Σ_{n≥0} (−1)ⁿ Cⁿ / (n + 1)`.
fn phi_series(c: &Mat3) -> Mat3 {
    let mut sum = Mat3::identity();
    let mut power = Mat3::identity();
    for n in 1..MAX_SERIES_TERMS {
        power *= c;
        let term = power / (n + 1) as f64;
        if n % 2 == 1 {
            sum -= term;
        } else {
            sum += term;
        }
        if term.norm() < SERIES_TERM_TOL {
            break;
        }
    }
    sum
}

/// `log U` and `Φ(U) = (U − I)⁻¹ log U` from one shared square-root chain.
///
/// With `Uⱼ = U^(1/2^j)`, `log U = 2^k log Uₖ` and, since
/// `U − I = (U^½ − I)(U^½ + I)`, `Φ(U) = 2^k Π (Uⱼ + I)⁻¹ Φ(Uₖ)`.
fn log_and_phi(u: &Mat3) -> Result<(Mat3, Mat3)> {
    check_pdut(u)?;
    let chain = square_root_chain(u)?;
    let scale = 2f64.powi(chain.len() as i32);
    let top = chain.last().copied().unwrap_or(*u);
    let x = top - Mat3::identity();
    let log = mercator_series(&x) * scale;
    let mut phi = phi_series(&x);
    for r in chain.iter().rev() {
        phi = upper_triangular_inverse(&(r + Mat3::identity())) * phi;
    }
    Ok((zero_lower(log), zero_lower(phi * scale)))
}

/// Principal logarithm of an upper triangular matrix with positive diagonal.
pub fn log_pdut(u: &Mat3) -> Result<Mat3> {
    log_and_phi(u).map(|(log, _)| log)
}

/// `Φ(C) = C⁻¹ log(I + C)` for `C = U − I`, without inverting `C`; equals the
/// identity at `C = 0`.
pub fn phi_factor(c: &Mat3) -> Result<Mat3> {
    log_and_phi(&(c + Mat3::identity())).map(|(_, phi)| phi)
}

/// `(T11, T12) = (log Z, Φ(Z) μ)`.
pub fn log_embedding(a: &AffinePlus) -> Result<LogEmbedding> {
    let (t11, phi) = log_and_phi(&a.z)?;
    Ok(LogEmbedding {
        t11,
        t12: phi * a.mu,
    })
}

/// Group product on Gaussians:
/// `N(μ₁,Σ₁) ⋆ N(μ₂,Σ₂) = N(L₁⁻ᵀ μ₂ + μ₁, (L₁L₂)⁻ᵀ (L₁L₂)⁻¹)`.
pub fn group_product(g1: &GaussianModel, g2: &GaussianModel) -> Result<GaussianModel> {
    let lower_factor = |g: &GaussianModel| -> Result<Mat3> {
        let inv = g
            .sigma
            .to_matrix()
            .try_inverse()
            .ok_or(Error::NotPositiveDefinite)?;
        cholesky_lower(&SymTensor3::from_matrix(&inv).to_matrix()).ok_or(Error::NotPositiveDefinite)
    };
    let l1 = lower_factor(g1)?;
    let l2 = lower_factor(g2)?;
    let l1_inv_t = l1.try_inverse().ok_or(Error::NotPositiveDefinite)?.transpose();
    let l12 = l1 * l2;
    let l12_inv = l12.try_inverse().ok_or(Error::NotPositiveDefinite)?;
    let sigma = l12_inv.transpose() * l12_inv;
    Ok(GaussianModel {
        mu: l1_inv_t * g2.mu + g1.mu,
        sigma: SymTensor3::from_matrix(&sigma),
    })
}

/// `A₁ ⊗ A₂ = exp(log A₁ + log A₂)`.
pub fn logeuclid_product(a1: &AffinePlus, a2: &AffinePlus) -> Result<AffinePlus> {
    Ok(log_embedding(a1)?.add(&log_embedding(a2)?).exp())
}

/// `λ ⊙ A = exp(λ log A)`.
pub fn logeuclid_scale(lambda: f64, a: &AffinePlus) -> Result<AffinePlus> {
    Ok(log_embedding(a)?.scale(lambda).exp())
}

/// Per-tensor embedding data reusable across point positions: the mean only
/// enters through `T12 = Φ μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorEmbedding {
    pub z: Mat3,
    pub t11: Mat3,
    pub phi: Mat3,
}

impl TensorEmbedding {
    pub fn at(&self, mu: &Vector3<f64>) -> LogEmbedding {
        LogEmbedding {
            t11: self.t11,
            t12: self.phi * mu,
        }
    }
}

/// Embeds an orientation tensor as the covariance of a Gaussian. With
/// `prescale`, the tensor is first divided by `max(trace, 1)`.
pub fn embed_tensor(s: &SymTensor3, eps_rel: f64, prescale: bool) -> Result<TensorEmbedding> {
    let s = if prescale {
        s.scaled(1.0 / s.trace().max(1.0))
    } else {
        *s
    };
    let z = cholesky_inverse_factor(&regularize(&s, eps_rel))?;
    let (t11, phi) = log_and_phi(&z)?;
    Ok(TensorEmbedding { z, t11, phi })
}
