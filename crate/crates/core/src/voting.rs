//! Second-order orientation tensors from two-stage tensor voting.
//!
//! The isotropic stage accumulates distance-weighted outer products of the
//! unit vectors to each neighbour. Its eigenvectors define a local frame in
//! which the anisotropic stage casts arc-tangent votes: each neighbour `s`
//! lies on the circle tangent to the `e1,e2` plane at `p` and passing through
//! `s`, and votes with the unit tangent of that circle at `s`, weighted by the
//! arc length and cut off beyond `phi_max` of elevation.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{Mat3, Point3, PointCloud};
use crate::linalg::jacobi_eigen;
use crate::spatial::{neighborhoods, NeighborList};

/// Default elevation cutoff for anisotropic votes: 45°.
pub const DEFAULT_PHI_MAX: f64 = std::f64::consts::FRAC_PI_4;

/// Symmetric 3×3 tensor stored as its six independent entries
/// `[xx, xy, xz, yy, yz, zz]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymTensor3(pub [f64; 6]);

impl SymTensor3 {
    pub fn zero() -> Self {
        Self([0.0; 6])
    }

    pub fn identity() -> Self {
        Self([1.0, 0.0, 0.0, 1.0, 0.0, 1.0])
    }

    pub fn from_diagonal(d: [f64; 3]) -> Self {
        Self([d[0], 0.0, 0.0, d[1], 0.0, d[2]])
    }

    /// Symmetric part of `m`.
    pub fn from_matrix(m: &Mat3) -> Self {
        let s = |i: usize, j: usize| 0.5 * (m[(i, j)] + m[(j, i)]);
        Self([m[(0, 0)], s(0, 1), s(0, 2), m[(1, 1)], s(1, 2), m[(2, 2)]])
    }

    pub fn to_matrix(&self) -> Mat3 {
        let [xx, xy, xz, yy, yz, zz] = self.0;
        Mat3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz)
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[3] + self.0[5]
    }

    /// `self += w · v vᵀ`.
    pub fn add_outer(&mut self, w: f64, v: &Vector3<f64>) {
        self.0[0] += w * v.x * v.x;
        self.0[1] += w * v.x * v.y;
        self.0[2] += w * v.x * v.z;
        self.0[3] += w * v.y * v.y;
        self.0[4] += w * v.y * v.z;
        self.0[5] += w * v.z * v.z;
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.map(|x| x * s))
    }

    pub fn add_identity(&self, eps: f64) -> Self {
        let mut out = *self;
        out.0[0] += eps;
        out.0[3] += eps;
        out.0[5] += eps;
        out
    }

    /// `R S Rᵀ`.
    pub fn rotated(&self, r: &Mat3) -> Self {
        Self::from_matrix(&(r * self.to_matrix() * r.transpose()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn eigenvalues(&self) -> [f64; 3] {
        eigen_frame(self).lambda
    }
}

/// Eigenvalues (descending) and a right-handed orthonormal eigenbasis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenFrame {
    pub lambda: [f64; 3],
    /// `e[0]`, `e[1]`, `e[2]` pair with `lambda[0..3]`.
    pub e: [Vector3<f64>; 3],
}

impl EigenFrame {
    /// Local normal direction: the eigenvector of the smallest eigenvalue.
    pub fn normal(&self) -> Vector3<f64> {
        self.e[2]
    }
}

/// Jacobi eigendecomposition with a deterministic sign convention: each
/// eigenvector's largest-magnitude component is non-negative, then `e3` is
/// flipped if needed so that the frame is right-handed.
pub fn eigen_frame(t: &SymTensor3) -> EigenFrame {
    let m = t.to_matrix();
    let eig = jacobi_eigen(std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)])));
    let mut e = eig.vectors.map(|v| {
        let mut v = Vector3::from(v);
        let big = v.iamax();
        if v[big] < 0.0 {
            v = -v;
        }
        v
    });
    if e[0].cross(&e[1]).dot(&e[2]) < 0.0 {
        e[2] = -e[2];
    }
    EigenFrame {
        lambda: eig.values,
        e,
    }
}

/// Isotropic tensor `T(p) = Σ exp(−‖v‖²/σ²) v̂ v̂ᵀ` over the given neighbours.
pub fn isotropic_tensor(p: &Point3, neighbors: &[Point3], sigma: f64) -> Result<SymTensor3> {
    if neighbors.is_empty() {
        return Err(Error::InvalidParameter("isotropic vote needs neighbours".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let s2 = sigma * sigma;
    let mut t = SymTensor3::zero();
    for s in neighbors {
        let v = s - p;
        let d2 = v.norm_squared();
        if d2 == 0.0 {
            return Err(Error::DegenerateGeometry(
                "neighbour coincides with the voting point".into(),
            ));
        }
        t.add_outer((-d2 / s2).exp(), &(v / d2.sqrt()));
    }
    Ok(t)
}

/// Circle-arc geometry of a neighbour `s` relative to `p` in `p`'s frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcGeometry {
    /// Elevation of `s − p` above the `e1,e2` plane, in `[0, π/2]`.
    pub phi_s: f64,
    /// Arc length from `p` to `s` along the tangent circle.
    pub d_e: f64,
    /// Unit tangent of the circle at `s`, oriented away from `p`.
    pub xi_s: Vector3<f64>,
}

pub fn arc_geometry(p: &Point3, s: &Point3, frame: &EigenFrame) -> Result<ArcGeometry> {
    let v = s - p;
    let chord = v.norm();
    if chord == 0.0 {
        return Err(Error::DegenerateGeometry("arc endpoint coincides with its origin".into()));
    }
    let z = frame.normal();
    let h = v.dot(&z);
    let in_plane = v - z * h;
    let ell = in_plane.norm();
    let phi_s = h.abs().atan2(ell);
    let d_e = if phi_s > 0.0 {
        phi_s * chord / phi_s.sin()
    } else {
        chord
    };
    let xi_s = if ell == 0.0 {
        // Straight above p: weight is cut off anyway.
        z
    } else {
        let u = in_plane / ell;
        let (s2, c2) = (2.0 * phi_s).sin_cos();
        let lift = if h < 0.0 { -s2 } else { s2 };
        (u * c2 + z * lift).normalize()
    };
    Ok(ArcGeometry { phi_s, d_e, xi_s })
}

/// Vote weight `exp(−d_e/σ²)` inside the elevation cutoff, zero outside.
pub fn anisotropic_weight(arc: &ArcGeometry, sigma: f64, phi_max: f64) -> f64 {
    if arc.phi_s.tan() <= phi_max.tan() {
        (-arc.d_e / (sigma * sigma)).exp()
    } else {
        0.0
    }
}

/// Options for the anisotropic stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VotingConfig {
    pub k_percent: f64,
    pub phi_max: f64,
    /// Sum votes from every point that lists `p` as a neighbour instead of
    /// over `p`'s own neighbourhood.
    pub reverse_votes: bool,
    /// Divide each `S(p)` by its trace.
    pub trace_normalize: bool,
}

impl VotingConfig {
    pub fn new(k_percent: f64) -> Self {
        Self {
            k_percent,
            phi_max: DEFAULT_PHI_MAX,
            reverse_votes: false,
            trace_normalize: false,
        }
    }
}

/// Anisotropic tensor `S(p) = Σ_{s ∈ L_k(p)} g(p,s) ξ̂_s ξ̂_sᵀ`, evaluated in the
/// frame and with the scale of the receiving point `p`.
pub fn anisotropic_tensor(
    p_index: usize,
    cloud: &PointCloud,
    lists: &[NeighborList],
    frames: &[EigenFrame],
    phi_max: f64,
) -> Result<SymTensor3> {
    let voters = &lists[p_index].neighbor_indices;
    anisotropic_from_voters(p_index, voters, cloud, lists, frames, phi_max)
}

fn anisotropic_from_voters(
    p_index: usize,
    voters: &[usize],
    cloud: &PointCloud,
    lists: &[NeighborList],
    frames: &[EigenFrame],
    phi_max: f64,
) -> Result<SymTensor3> {
    let p = &cloud.points[p_index];
    let frame = &frames[p_index];
    let sigma = lists[p_index].sigma;
    let mut out = SymTensor3::zero();
    for &j in voters {
        let arc = arc_geometry(p, &cloud.points[j], frame)?;
        let w = anisotropic_weight(&arc, sigma, phi_max);
        if w > 0.0 {
            out.add_outer(w, &arc.xi_s);
        }
    }
    Ok(out)
}

/// Intermediate products of the voting pipeline, kept for inspection.
#[derive(Debug, Clone)]
pub struct VotingField {
    pub lists: Vec<NeighborList>,
    pub isotropic: Vec<SymTensor3>,
    pub frames: Vec<EigenFrame>,
    pub anisotropic: Vec<SymTensor3>,
}

/// Full two-stage pipeline: neighbourhoods → isotropic tensors → frames →
/// anisotropic tensors.
pub fn voting_field(cloud: &PointCloud, cfg: &VotingConfig) -> Result<VotingField> {
    if cloud.len() < 3 {
        return Err(Error::InvalidParameter(
            "tensor voting needs at least three points".into(),
        ));
    }
    let lists = neighborhoods(cloud, cfg.k_percent)?;
    let isotropic = lists
        .iter()
        .map(|l| {
            let nbrs: Vec<Point3> = l.neighbor_indices.iter().map(|&j| cloud.points[j]).collect();
            isotropic_tensor(&cloud.points[l.center_index], &nbrs, l.sigma)
        })
        .collect::<Result<Vec<_>>>()?;
    let frames: Vec<EigenFrame> = isotropic.iter().map(eigen_frame).collect();

    let reverse: Option<Vec<Vec<usize>>> = cfg.reverse_votes.then(|| {
        let mut rev = vec![Vec::new(); cloud.len()];
        for l in &lists {
            for &j in &l.neighbor_indices {
                rev[j].push(l.center_index);
            }
        }
        rev
    });

    let anisotropic = (0..cloud.len())
        .map(|i| {
            let voters = match &reverse {
                Some(rev) => &rev[i],
                None => &lists[i].neighbor_indices,
            };
            let s = anisotropic_from_voters(i, voters, cloud, &lists, &frames, cfg.phi_max)?;
            let tr = s.trace();
            Ok(if cfg.trace_normalize && tr > 0.0 {
                s.scaled(1.0 / tr)
            } else {
                s
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VotingField {
        lists,
        isotropic,
        frames,
        anisotropic,
    })
}

/// Per-point anisotropic tensors `S(p)`.
pub fn tensor_field(cloud: &PointCloud, k_percent: f64, phi_max: f64) -> Result<Vec<SymTensor3>> {
    let cfg = VotingConfig {
        phi_max,
        ..VotingConfig::new(k_percent)
    };
    Ok(voting_field(cloud, &cfg)?.anisotropic)
}
