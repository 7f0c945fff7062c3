mod common;

use common::{surface_patch, Rng};
use lieicp::similarity::{ctsf, descriptors, DescriptorConfig};
use lieicp::spatial::{neighbor_count, neighborhoods, SpatialIndex};
use lieicp::voting::{tensor_field, voting_field, VotingConfig, DEFAULT_PHI_MAX};
use lieicp::{apply_transform, Point3, PointCloud};

fn brute_knn(points: &[Point3], q: &Point3, k: usize, exclude: Option<usize>) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, p)| ((p - q).norm_squared(), i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

#[test]
fn index_matches_exhaustive_scan() {
    let mut rng = Rng::new(31);
    for trial in 0..20 {
        let mut cloud = rng.cloud(200 + trial * 10, 1.0);
        // Snap to a coarse grid on alternate trials to force distance ties.
        if trial % 2 == 0 {
            for p in &mut cloud.points {
                *p = p.map(|c| (c * 4.0).round() / 4.0);
            }
        }
        let index = SpatialIndex::build(&cloud.points).unwrap();
        for _ in 0..50 {
            let q = rng.point(1.2);
            let expect = brute_knn(&cloud.points, &q, 1, None)[0];
            assert_eq!(index.nearest(&q).0, expect);
            let k = 1 + rng.index(20);
            let got: Vec<usize> = index.k_nearest(&q, k, None).into_iter().map(|(i, _)| i).collect();
            assert_eq!(got, brute_knn(&cloud.points, &q, k, None));
        }
        let i = rng.index(cloud.len());
        let got: Vec<usize> = index.k_nearest(&cloud.points[i], 7, Some(i)).into_iter().map(|(j, _)| j).collect();
        assert_eq!(got, brute_knn(&cloud.points, &cloud.points[i], 7, Some(i)));
    }
}

#[test]
fn isotropic_tensors_match_naive_sum() {
    let cloud = surface_patch(80, 32);
    let field = voting_field(&cloud, &VotingConfig::new(10.0)).unwrap();
    let k = neighbor_count(cloud.len(), 10.0).unwrap();
    for (i, t) in field.isotropic.iter().enumerate() {
        let p = cloud.points[i];
        let nbrs = brute_knn(&cloud.points, &p, k, Some(i));
        let far = (cloud.points[*nbrs.last().unwrap()] - p).norm();
        let s2 = far * far / 100f64.ln();
        let mut m = nalgebra::Matrix3::zeros();
        for j in nbrs {
            let v = cloud.points[j] - p;
            let w = (-v.norm_squared() / s2).exp();
            let u = v.normalize();
            m += u * u.transpose() * w;
        }
        assert!(common::max_abs_diff(&t.to_matrix(), &m) < 1e-12);
    }
}

#[test]
fn neighbourhood_sizes_follow_percentage() {
    let cloud = surface_patch(101, 33);
    for (pct, expect) in [(5.0, 5), (10.0, 10), (25.0, 25), (50.0, 50), (100.0, 100)] {
        let lists = neighborhoods(&cloud, pct).unwrap();
        assert!(lists.iter().all(|l| l.neighbor_indices.len() == expect));
    }
}

#[test]
fn tensor_field_is_rotation_covariant() {
    let cloud = surface_patch(300, 34);
    let field = tensor_field(&cloud, 5.0, DEFAULT_PHI_MAX).unwrap();
    let cfg = DescriptorConfig::new(5.0);
    let base = descriptors(&cloud, &cfg).unwrap();
    let mut rng = Rng::new(35);
    let start = std::time::Instant::now();
    for _ in 0..20 {
        let g = rng.rigid(3.0);
        let moved: PointCloud = apply_transform(&cloud, &g);
        let field_m = tensor_field(&moved, 5.0, DEFAULT_PHI_MAX).unwrap();
        for (t, tm) in field.iter().zip(&field_m) {
            let expect = g.rotation * t.to_matrix() * g.rotation.transpose();
            assert!(common::max_abs_diff(&tm.to_matrix(), &expect) < 1e-8);
        }
        let moved_desc = descriptors(&moved, &cfg).unwrap();
        for (a, b) in base.iter().zip(&moved_desc) {
            assert!(ctsf(a, b) < 1e-6);
        }
    }
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn reverse_votes_and_trace_normalisation() {
    let cloud = surface_patch(120, 36);
    let base = VotingConfig::new(10.0);
    let plain = voting_field(&cloud, &base).unwrap();
    let normed = voting_field(&cloud, &VotingConfig { trace_normalize: true, ..base }).unwrap();
    for (a, b) in plain.anisotropic.iter().zip(&normed.anisotropic) {
        if a.trace() > 0.0 {
            assert!((b.trace() - 1.0).abs() < 1e-12);
            assert!(common::max_abs_diff(&a.scaled(1.0 / a.trace()).to_matrix(), &b.to_matrix()) < 1e-15);
        }
    }
    let rev = voting_field(&cloud, &VotingConfig { reverse_votes: true, ..base }).unwrap();
    assert_eq!(rev.isotropic, plain.isotropic);
    assert!(rev.anisotropic.iter().all(|t| t.is_finite()));
}
