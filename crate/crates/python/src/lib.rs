//! Python bindings. Points travel as lists of `[x, y, z]`, matrices as
//! row-major nested lists.

use std::path::PathBuf;

use lieicp::dataset::{load_cloud as load_cloud_rs, make_rotated_scenario as make_scenario_rs};
use lieicp::lie::{embed_tensor, log_embedding as log_embedding_rs, AffinePlus, DEFAULT_EPS_REL};
use lieicp::voting::{tensor_field as tensor_field_rs, DEFAULT_PHI_MAX};
use lieicp::{Algorithm, Error, Mat3, Point3, PointCloud, RegistrationConfig};
use nalgebra::Vector3;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

type Row3 = [f64; 3];
type Matrix = [Row3; 3];

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        Error::InvalidParameter(_)
        | Error::MalformedCorrespondence(_)
        | Error::NotARotation(_)
        | Error::EmptyCloud
        | Error::Parse { .. }
        | Error::Manifest(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn points(v: &[Row3]) -> Vec<Point3> {
    v.iter().map(|p| Vector3::from(*p)).collect()
}

fn rows(v: &[Point3]) -> Vec<Row3> {
    v.iter().map(|p| [p.x, p.y, p.z]).collect()
}

fn mat_from(m: &Matrix) -> Mat3 {
    Mat3::from_fn(|i, j| m[i][j])
}

fn mat_to(m: &Mat3) -> Matrix {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

fn cloud(v: &[Row3]) -> PointCloud {
    PointCloud::new(points(v), "py")
}

#[pyclass(name = "RigidTransform", module = "lieicp", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyRigidTransform {
    inner: lieicp::RigidTransform,
}

#[pymethods]
impl PyRigidTransform {
    #[new]
    #[pyo3(signature = (rotation=None, translation=None))]
    fn new(rotation: Option<Matrix>, translation: Option<Row3>) -> PyResult<Self> {
        let r = rotation.map(|m| mat_from(&m)).unwrap_or_else(Mat3::identity);
        let t = translation.map(Vector3::from).unwrap_or_else(Vector3::zeros);
        Ok(Self {
            inner: lieicp::RigidTransform::new(r, t).map_err(to_py_err)?,
        })
    }

    /// Rotation by `angle` radians about `axis`.
    #[staticmethod]
    fn from_axis_angle(axis: Row3, angle: f64) -> PyResult<Self> {
        Ok(Self {
            inner: lieicp::RigidTransform::from_axis_angle(&Vector3::from(axis), angle).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn rotation(&self) -> Matrix {
        mat_to(&self.inner.rotation)
    }

    #[getter]
    fn translation(&self) -> Row3 {
        self.inner.translation.into()
    }

    #[getter]
    fn angle(&self) -> f64 {
        self.inner.rotation_angle()
    }

    fn apply(&self, pts: Vec<Row3>) -> Vec<Row3> {
        rows(&lieicp::geometry::transform_points(&points(&pts), &self.inner))
    }

    /// `self ∘ inner`.
    fn compose(&self, inner: &PyRigidTransform) -> Self {
        Self {
            inner: self.inner.compose(&inner.inner),
        }
    }

    fn inverse(&self) -> Self {
        Self {
            inner: self.inner.inverse(),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "RigidTransform(angle={:.6} rad, translation={:?})",
            self.inner.rotation_angle(),
            self.translation()
        )
    }
}

#[pyclass(name = "RunReport", module = "lieicp", frozen)]
pub struct PyRunReport {
    inner: lieicp::RunReport,
}

#[pymethods]
impl PyRunReport {
    #[getter]
    fn final_transform(&self) -> PyRigidTransform {
        PyRigidTransform {
            inner: self.inner.final_transform,
        }
    }

    #[getter]
    fn final_mrms(&self) -> f64 {
        self.inner.final_mrms
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn iterations_used(&self) -> usize {
        self.inner.iterations_used
    }

    #[getter]
    fn w0(&self) -> f64 {
        self.inner.w0
    }

    /// `(iteration, mrms, w_m, matches)` per iteration.
    #[getter]
    fn per_iteration(&self) -> Vec<(usize, f64, f64, usize)> {
        self.inner
            .per_iteration
            .iter()
            .map(|r| (r.iteration, r.mrms, r.w_m, r.matches))
            .collect()
    }

    fn errors(&self) -> Vec<f64> {
        self.inner.errors()
    }

    fn __repr__(&self) -> String {
        format!(
            "RunReport(final_mrms={:.6e}, iterations={}, converged={})",
            self.inner.final_mrms, self.inner.iterations_used, self.inner.converged
        )
    }
}

/// Registers `source` onto `target` with one of `icp`, `icp-ctsf`, `swc-icp`,
/// `icp-lie-0`, `icp-lie-1`, `swc-lie-0`, `swc-lie-1`.
#[pyfunction]
#[pyo3(signature = (source, target, algorithm="icp", k_percent=5.0, tau=0.0, w0=None, b=0.5, max_iterations=200))]
#[allow(clippy::too_many_arguments)]
fn register(
    py: Python<'_>,
    source: Vec<Row3>,
    target: Vec<Row3>,
    algorithm: &str,
    k_percent: f64,
    tau: f64,
    w0: Option<f64>,
    b: f64,
    max_iterations: usize,
) -> PyResult<PyRunReport> {
    let alg: Algorithm = algorithm.parse().map_err(to_py_err)?;
    let cfg = RegistrationConfig {
        k_percent,
        tau,
        w0,
        b,
        max_iterations,
        ..RegistrationConfig::new(alg)
    };
    let (p, q) = (cloud(&source), cloud(&target));
    let report = py.detach(|| lieicp::register(&p, &q, &cfg)).map_err(to_py_err)?;
    Ok(PyRunReport { inner: report })
}

/// Least-squares rigid transform taking `x` onto `y`.
#[pyfunction]
fn horn_solve(x: Vec<Row3>, y: Vec<Row3>) -> PyResult<PyRigidTransform> {
    let sol = lieicp::horn_solve(&points(&x), &points(&y), None, 0.0).map_err(to_py_err)?;
    Ok(PyRigidTransform { inner: sol.transform })
}

/// Per-point anisotropic orientation tensors as 3×3 matrices.
#[pyfunction]
#[pyo3(signature = (pts, k_percent=5.0, phi_max=DEFAULT_PHI_MAX))]
fn tensor_field(pts: Vec<Row3>, k_percent: f64, phi_max: f64) -> PyResult<Vec<Matrix>> {
    let field = tensor_field_rs(&cloud(&pts), k_percent, phi_max).map_err(to_py_err)?;
    Ok(field.iter().map(|t| mat_to(&t.to_matrix())).collect())
}

/// Block logarithm `(T11, T12)` of `[[Z, mu], [0, 1]]`.
#[pyfunction]
fn log_embedding(z: Matrix, mu: Row3) -> PyResult<(Matrix, Row3)> {
    let a = AffinePlus::new(mat_from(&z), Vector3::from(mu)).map_err(to_py_err)?;
    let e = log_embedding_rs(&a).map_err(to_py_err)?;
    Ok((mat_to(&e.t11), e.t12.into()))
}

/// Log embedding of a symmetric tensor attached to point `mu`.
#[pyfunction]
#[pyo3(signature = (tensor, mu, eps_rel=DEFAULT_EPS_REL))]
fn tensor_embedding(tensor: Matrix, mu: Row3, eps_rel: f64) -> PyResult<(Matrix, Row3)> {
    let s = lieicp::SymTensor3::from_matrix(&mat_from(&tensor));
    let e = embed_tensor(&s, eps_rel, false).map_err(to_py_err)?.at(&Vector3::from(mu));
    Ok((mat_to(&e.t11), e.t12.into()))
}

#[pyfunction]
fn load_cloud(path: PathBuf) -> PyResult<Vec<Row3>> {
    Ok(rows(&load_cloud_rs(&path, None).map_err(to_py_err)?.points))
}

/// `(source, target, ground_truth)` with the source rotated by `angle_deg`.
#[pyfunction]
#[pyo3(signature = (pts, angle_deg=45.0, axis=[0.0, 1.0, 0.0]))]
fn make_rotated_scenario(pts: Vec<Row3>, angle_deg: f64, axis: Row3) -> PyResult<(Vec<Row3>, Vec<Row3>, PyRigidTransform)> {
    let scn = make_scenario_rs(&cloud(&pts), angle_deg, &Vector3::from(axis)).map_err(to_py_err)?;
    Ok((
        rows(&scn.source.points),
        rows(&scn.target.points),
        PyRigidTransform { inner: scn.ground_truth },
    ))
}

/// Geodesic angle between two rotations, in radians.
#[pyfunction]
fn rotation_error(a: &PyRigidTransform, b: &PyRigidTransform) -> PyResult<f64> {
    lieicp::rotation_geodesic_error(&a.inner.rotation, &b.inner.rotation).map_err(to_py_err)
}

#[pymodule]
#[pyo3(name = "lieicp")]
fn lieicp_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRigidTransform>()?;
    m.add_class::<PyRunReport>()?;
    m.add_function(wrap_pyfunction!(register, m)?)?;
    m.add_function(wrap_pyfunction!(horn_solve, m)?)?;
    m.add_function(wrap_pyfunction!(tensor_field, m)?)?;
    m.add_function(wrap_pyfunction!(log_embedding, m)?)?;
    m.add_function(wrap_pyfunction!(tensor_embedding, m)?)?;
    m.add_function(wrap_pyfunction!(load_cloud, m)?)?;
    m.add_function(wrap_pyfunction!(make_rotated_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(rotation_error, m)?)?;
    m.add("ALGORITHMS", Algorithm::ALL.iter().map(|a| a.tag()).collect::<Vec<_>>())?;
    Ok(())
}
