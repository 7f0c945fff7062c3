//! Small dense kernels shared by the tensor and solver modules: a cyclic
//! Jacobi eigensolver for symmetric matrices and a few triangular helpers.

use nalgebra::{Matrix3, Vector3};

/// Maximum number of Jacobi sweeps.
pub const JACOBI_MAX_SWEEPS: usize = 50;

/// Sweeping stops once the off-diagonal Frobenius mass falls below this
/// fraction of the matrix Frobenius norm.
pub const JACOBI_OFF_TOL: f64 = 1e-14;

/// Eigen-decomposition of a symmetric `N x N` matrix.
///
/// Eigenvalues are returned in descending order; `vectors[k]` is the unit
/// eigenvector of `values[k]`. Equal eigenvalues keep their original
/// diagonal order, so the result is deterministic.
#[derive(Debug, Clone, Copy)]
pub struct SymmetricEigen<const N: usize> {
    pub values: [f64; N],
    pub vectors: [[f64; N]; N],
    pub sweeps: usize,
}

fn off_diagonal_mass<const N: usize>(a: &[[f64; N]; N]) -> f64 {
    let mut sum = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if i != j {
                sum += v * v;
            }
        }
    }
    sum.sqrt()
}

/// Cyclic Jacobi rotations on a symmetric matrix. Only the upper triangle
/// of `a` is read.
pub fn jacobi_eigen<const N: usize>(a: [[f64; N]; N]) -> SymmetricEigen<N> {
    let mut m = a;
    for i in 0..N {
        for j in 0..i {
            m[i][j] = m[j][i];
        }
    }
    let mut v = [[0.0; N]; N];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }

    let norm = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let tol = JACOBI_OFF_TOL * norm;
    let mut sweeps = 0;
    while sweeps < JACOBI_MAX_SWEEPS {
        let off = off_diagonal_mass(&m);
        if off <= tol || off == 0.0 {
            break;
        }
        sweeps += 1;
        for p in 0..N {
            for q in (p + 1)..N {
                let apq = m[p][q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p][p];
                let aqq = m[q][q];
                // Rutishauser's stable formulation.
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                m[p][p] = app - t * apq;
                m[q][q] = aqq + t * apq;
                m[p][q] = 0.0;
                m[q][p] = 0.0;
                for r in 0..N {
                    if r != p && r != q {
                        let arp = m[r][p];
                        let arq = m[r][q];
                        m[r][p] = arp - s * (arq + tau * arp);
                        m[p][r] = m[r][p];
                        m[r][q] = arq + s * (arp - tau * arq);
                        m[q][r] = m[r][q];
                    }
                }
                for row in v.iter_mut() {
                    let vrp = row[p];
                    let vrq = row[q];
                    row[p] = vrp - s * (vrq + tau * vrp);
                    row[q] = vrq + s * (vrp - tau * vrq);
                }
            }
        }
    }

    let mut order: [usize; N] = std::array::from_fn(|i| i);
    // Stable sort keeps ties in diagonal order.
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let values = std::array::from_fn(|k| m[order[k]][order[k]]);
    let vectors = std::array::from_fn(|k| std::array::from_fn(|r| v[r][order[k]]));
    SymmetricEigen {
        values,
        vectors,
        sweeps,
    }
}

pub fn mat3_to_array(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

/// Square root of an upper triangular matrix with positive diagonal. The
/// result is the unique upper triangular root with positive diagonal.
pub fn upper_triangular_sqrt(u: &Matrix3<f64>) -> Matrix3<f64> {
    let mut r = Matrix3::zeros();
    for i in 0..3 {
        r[(i, i)] = u[(i, i)].sqrt();
    }
    for d in 1..3 {
        for i in 0..(3 - d) {
            let j = i + d;
            let mut s = u[(i, j)];
            for k in (i + 1)..j {
                s -= r[(i, k)] * r[(k, j)];
            }
            r[(i, j)] = s / (r[(i, i)] + r[(j, j)]);
        }
    }
    r
}

/// Inverse of an upper triangular matrix with nonzero diagonal by back
/// substitution.
pub fn upper_triangular_inverse(u: &Matrix3<f64>) -> Matrix3<f64> {
    let mut inv = Matrix3::zeros();
    for col in 0..3 {
        let mut x = Vector3::zeros();
        x[col] = 1.0;
        for i in (0..3).rev() {
            let mut s = x[i];
            for k in (i + 1)..3 {
                s -= u[(i, k)] * x[k];
            }
            x[i] = s / u[(i, i)];
        }
        inv.set_column(col, &x);
    }
    inv
}

/// Lower Cholesky factor `L` with `a = L Lᵀ`, or `None` when `a` is not
/// positive definite.
pub fn cholesky_lower(a: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let mut l = Matrix3::zeros();
    for j in 0..3 {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return None;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..3 {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

/// Upper triangular `U` with positive diagonal such that `a = U Uᵀ`
/// (Cholesky run from the bottom-right corner).
pub fn cholesky_upper_reverse(a: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let mut u = Matrix3::zeros();
    for j in (0..3).rev() {
        let mut d = a[(j, j)];
        for k in (j + 1)..3 {
            d -= u[(j, k)] * u[(j, k)];
        }
        if !(d > 0.0) {
            return None;
        }
        let ujj = d.sqrt();
        u[(j, j)] = ujj;
        for i in 0..j {
            let mut s = a[(i, j)];
            for k in (j + 1)..3 {
                s -= u[(i, k)] * u[(j, k)];
            }
            u[(i, j)] = s / ujj;
        }
    }
    Some(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix4, SymmetricEigen as NaEigen};

    #[test]
    fn jacobi_diagonal_is_sorted() {
        let e = jacobi_eigen([[1.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 2.0]]);
        assert_eq!(e.values, [5.0, 2.0, 1.0]);
        assert_eq!(e.vectors[0], [0.0, 1.0, 0.0]);
        assert_eq!(e.sweeps, 0);
    }

    #[test]
    fn jacobi_matches_nalgebra_on_4x4() {
        let a = Matrix4::new(
            4.0, 1.0, -2.0, 0.5, 1.0, 3.0, 0.0, 1.5, -2.0, 0.0, -1.0, 2.0, 0.5, 1.5, 2.0, 0.0,
        );
        let arr: [[f64; 4]; 4] = std::array::from_fn(|i| std::array::from_fn(|j| a[(i, j)]));
        let e = jacobi_eigen(arr);
        let mut reference: Vec<f64> = NaEigen::new(a).eigenvalues.iter().copied().collect();
        reference.sort_by(|x, y| y.total_cmp(x));
        for k in 0..4 {
            assert!((e.values[k] - reference[k]).abs() < 1e-12);
            let v = nalgebra::Vector4::from(e.vectors[k]);
            let r = a * v - v * e.values[k];
            assert!(r.norm() < 1e-12);
        }
    }

    #[test]
    fn triangular_sqrt_squares_back() {
        let u = Matrix3::new(4.0, 1.0, -3.0, 0.0, 0.25, 2.0, 0.0, 0.0, 9.0);
        let r = upper_triangular_sqrt(&u);
        assert!((r * r - u).norm() < 1e-13);
        assert!(r[(1, 0)] == 0.0 && r[(2, 0)] == 0.0 && r[(2, 1)] == 0.0);
    }

    #[test]
    fn triangular_inverse() {
        let u = Matrix3::new(2.0, 1.0, -3.0, 0.0, 0.5, 2.0, 0.0, 0.0, 3.0);
        let inv = upper_triangular_inverse(&u);
        assert!((inv * u - Matrix3::identity()).norm() < 1e-14);
    }

    #[test]
    fn cholesky_factors() {
        let a = Matrix3::new(4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0);
        let l = cholesky_lower(&a).unwrap();
        assert!((l * l.transpose() - a).norm() < 1e-14);
        let u = cholesky_upper_reverse(&a).unwrap();
        assert!((u * u.transpose() - a).norm() < 1e-14);
        assert!(u[(1, 0)] == 0.0 && u[(2, 0)] == 0.0 && u[(2, 1)] == 0.0);
        assert!(cholesky_lower(&Matrix3::new(1.0, 2.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 1.0)).is_none());
    }
}
