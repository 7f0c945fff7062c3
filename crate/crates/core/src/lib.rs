//! Pairwise rigid registration of 3D point clouds.
//!
//! Classical trimmed ICP, two tensor-shape driven variants (shape-weighted
//! matching and shape-weighted covariance) and their Lie-algebra versions,
//! where local orientation tensors are compared through the matrix logarithm
//! of a Gaussian embedding instead of through their eigenvalues.

pub mod dataset;
pub mod error;
pub mod geometry;
pub mod lie;
pub mod linalg;
pub mod matching;
pub mod pipeline;
pub mod similarity;
pub mod solver;
pub mod spatial;
pub mod voting;

pub use error::{Error, Result};
pub use geometry::{
    apply_transform, compose, invert, mrms, mse, rotation_geodesic_error, Mat3, Point3,
    PointCloud, RigidTransform,
};
pub use lie::{AffinePlus, GaussianModel, LogEmbedding};
pub use matching::{Correspondence, MatchKind, MatchSet};
pub use pipeline::{register, Algorithm, RegistrationConfig, RunReport};
pub use similarity::{ShapeDescriptor, WeightSchedule};
pub use solver::{horn_solve, CrossCovariance, HornSolution, QuatVec};
pub use voting::SymTensor3;
