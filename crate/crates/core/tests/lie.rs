mod common;

use common::Rng;
use lieicp::lie::{
    embed, embed_tensor, group_product, log_embedding, logeuclid_product, logeuclid_scale, AffinePlus, GaussianModel,
    LogEmbedding, DEFAULT_EPS_REL,
};
use lieicp::{Mat3, SymTensor3};
use nalgebra::{Matrix4, Rotation3, Vector3};
use proptest::prelude::*;

/// Denman–Beavers square root of a 4×4 matrix.
fn db_sqrt(a: &Matrix4<f64>) -> Matrix4<f64> {
    let mut y = *a;
    let mut z = Matrix4::identity();
    for _ in 0..100 {
        let yi = y.try_inverse().unwrap();
        let zi = z.try_inverse().unwrap();
        let ny = (y + zi) * 0.5;
        let nz = (z + yi) * 0.5;
        let done = (ny - y).norm() < 1e-15 * ny.norm();
        y = ny;
        z = nz;
        if done {
            break;
        }
    }
    y
}

/// Inverse scaling and squaring with the Gregory series
/// `log A = 2 Σ_{odd n} (1/n) ((A − I)(A + I)⁻¹)ⁿ`.
fn log4_oracle(a: &Matrix4<f64>) -> Matrix4<f64> {
    let id = Matrix4::identity();
    let mut r = *a;
    let mut k = 0;
    while (r - id).norm() > 0.05 {
        r = db_sqrt(&r);
        k += 1;
    }
    let x = (r - id) * (r + id).try_inverse().unwrap();
    let x2 = x * x;
    let mut term = x;
    let mut sum = Matrix4::zeros();
    let mut n = 1.0;
    while term.norm() / n > 1e-18 {
        sum += term / n;
        term *= x2;
        n += 2.0;
    }
    sum * 2.0 * 2f64.powi(k)
}

fn random_affine(rng: &mut Rng) -> AffinePlus {
    let mut z = Mat3::zeros();
    for i in 0..3 {
        z[(i, i)] = rng.range(0.1, 10.0);
        for j in i + 1..3 {
            z[(i, j)] = rng.range(-2.0, 2.0);
        }
    }
    AffinePlus::new(z, rng.vec3(5.0)).unwrap()
}

fn random_gaussian(rng: &mut Rng) -> GaussianModel {
    let b = Mat3::from_fn(|_, _| rng.range(-1.0, 1.0));
    let sigma = b * b.transpose() + Mat3::identity() * 0.2;
    GaussianModel::new(rng.vec3(2.0), SymTensor3::from_matrix(&sigma)).unwrap()
}

fn assert_gaussians_close(a: &GaussianModel, b: &GaussianModel, tol: f64) {
    assert!((a.mu - b.mu).norm() < tol, "mu {} vs {}", a.mu, b.mu);
    let d = (a.sigma.to_matrix() - b.sigma.to_matrix()).norm();
    assert!(d < tol * (1.0 + a.sigma.to_matrix().norm()), "sigma differs by {d}");
}

fn affine_dist(a: &AffinePlus, b: &AffinePlus) -> f64 {
    (a.to_matrix() - b.to_matrix()).norm()
}

#[test]
fn block_log_matches_series_oracle() {
    let mut rng = Rng::new(21);
    let start = std::time::Instant::now();
    for _ in 0..1000 {
        let a = random_affine(&mut rng);
        let emb = log_embedding(&a).unwrap();
        let oracle = log4_oracle(&a.to_matrix());
        let err = (emb.to_matrix() - oracle).norm();
        assert!(err < 1e-9, "block log differs from oracle by {err}");
        let back = emb.to_matrix().exp();
        let rt = (back - a.to_matrix()).norm();
        assert!(rt < 1e-9 * (1.0 + a.to_matrix().norm()), "exp(log A) off by {rt}");
        assert!(affine_dist(&emb.exp(), &a) < 1e-9 * (1.0 + a.to_matrix().norm()));
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn group_laws_hold() {
    let mut rng = Rng::new(22);
    let start = std::time::Instant::now();
    for _ in 0..200 {
        let (g1, g2, g3) = (random_gaussian(&mut rng), random_gaussian(&mut rng), random_gaussian(&mut rng));
        let left = group_product(&group_product(&g1, &g2).unwrap(), &g3).unwrap();
        let right = group_product(&g1, &group_product(&g2, &g3).unwrap()).unwrap();
        assert_gaussians_close(&left, &right, 1e-10);

        let e12 = embed(&group_product(&g1, &g2).unwrap()).unwrap();
        let prod = embed(&g1).unwrap().mul(&embed(&g2).unwrap());
        assert!(affine_dist(&e12, &prod) < 1e-10 * (1.0 + prod.to_matrix().norm()));

        let id = GaussianModel::standard();
        assert_gaussians_close(&group_product(&g1, &id).unwrap(), &g1, 1e-10);
        assert_gaussians_close(&group_product(&id, &g1).unwrap(), &g1, 1e-10);

        let (a1, a2, a3) = (embed(&g1).unwrap(), embed(&g2).unwrap(), embed(&g3).unwrap());
        let ab = logeuclid_product(&a1, &a2).unwrap();
        let ba = logeuclid_product(&a2, &a1).unwrap();
        assert!(affine_dist(&ab, &ba) < 1e-10 * (1.0 + ab.to_matrix().norm()));
        let l = logeuclid_product(&ab, &a3).unwrap();
        let r = logeuclid_product(&a1, &logeuclid_product(&a2, &a3).unwrap()).unwrap();
        assert!(affine_dist(&l, &r) < 1e-10 * (1.0 + l.to_matrix().norm()));
        let ai = logeuclid_product(&a1, &AffinePlus::identity()).unwrap();
        assert!(affine_dist(&ai, &a1) < 1e-10 * (1.0 + a1.to_matrix().norm()));
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

/// A rotated tensor has a different Cholesky factor, so the log embedding is
/// not rotation covariant.
#[test]
fn log_embedding_is_not_rotation_invariant() {
    let s = SymTensor3::from_diagonal([4.0, 1.0, 1.0]);
    let r: Mat3 = Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_4).into_inner();
    let a = embed_tensor(&s, DEFAULT_EPS_REL, false).unwrap();
    let b = embed_tensor(&s.rotated(&r), DEFAULT_EPS_REL, false).unwrap();
    let d11 = (a.t11 - b.t11).norm();

    let oracle = |t: &SymTensor3| {
        let reg = t.add_identity(DEFAULT_EPS_REL * t.trace());
        let g = GaussianModel::new(Vector3::zeros(), reg).unwrap();
        log4_oracle(&embed(&g).unwrap().to_matrix()).fixed_view::<3, 3>(0, 0).into_owned()
    };
    let expected = (oracle(&s) - oracle(&s.rotated(&r))).norm();
    assert!((d11 - expected).abs() < 1e-9, "{d11} vs oracle {expected}");
    assert!(d11 > 1e-3);
    assert!((d11 - 0.931625311442767).abs() < 1e-9);
    // Eigenvalues agree, so only the embedding sees the rotation.
    let (ea, eb) = (s.eigenvalues(), s.rotated(&r).eigenvalues());
    assert!((0..3).all(|i| (ea[i] - eb[i]).abs() < 1e-12));
}

fn arb_affine() -> impl Strategy<Value = AffinePlus> {
    (
        prop::array::uniform3(0.2f64..5.0),
        prop::array::uniform3(-1.5f64..1.5),
        prop::array::uniform3(-3.0f64..3.0),
    )
        .prop_map(|(d, u, mu)| {
            let z = Mat3::new(d[0], u[0], u[1], 0.0, d[1], u[2], 0.0, 0.0, d[2]);
            AffinePlus::new(z, Vector3::from(mu)).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn exp_inverts_log(a in arb_affine()) {
        let back = log_embedding(&a).unwrap().exp();
        prop_assert!(affine_dist(&back, &a) < 1e-10 * (1.0 + a.to_matrix().norm()));
    }

    #[test]
    fn log_inverts_exp(t in prop::array::uniform3(-1.0f64..1.0), u in prop::array::uniform3(-1.0f64..1.0),
                       v in prop::array::uniform3(-2.0f64..2.0)) {
        let t11 = Mat3::new(t[0], u[0], u[1], 0.0, t[1], u[2], 0.0, 0.0, t[2]);
        let e = LogEmbedding { t11, t12: Vector3::from(v) };
        let back = log_embedding(&e.exp()).unwrap();
        prop_assert!((back.to_matrix() - e.to_matrix()).norm() < 1e-10);
    }

    #[test]
    fn scaling_composes(a in arb_affine(), l1 in -2.0f64..2.0, l2 in -2.0f64..2.0) {
        let nested = logeuclid_scale(l1, &logeuclid_scale(l2, &a).unwrap()).unwrap();
        let direct = logeuclid_scale(l1 * l2, &a).unwrap();
        prop_assert!(affine_dist(&nested, &direct) < 1e-9 * (1.0 + direct.to_matrix().norm()));
    }

    #[test]
    fn commuting_elements_multiply_through_logs(d in prop::array::uniform3(0.2f64..5.0), e in prop::array::uniform3(0.2f64..5.0)) {
        // Diagonal scalings commute, so ⊗ equals the group product.
        let a = AffinePlus::new(Mat3::from_diagonal(&Vector3::from(d)), Vector3::zeros()).unwrap();
        let b = AffinePlus::new(Mat3::from_diagonal(&Vector3::from(e)), Vector3::zeros()).unwrap();
        let le = logeuclid_product(&a, &b).unwrap();
        prop_assert!(affine_dist(&le, &a.mul(&b)) < 1e-10 * (1.0 + le.to_matrix().norm()));
    }
}
