mod common;

use common::Rng;
use lieicp::dataset::{
    add_noise, default_hole_center, load_cloud, load_scenario, make_rotated_scenario, punch_hole, save_cloud,
    save_scenario, subsample_step, CloudFormat, NoiseSpec, ScenarioTag,
};
use lieicp::{mrms, Error, Point3, PointCloud};
use nalgebra::Vector3;
use proptest::prelude::*;
use std::fs;

const FIXTURE: &str = "ply
format ascii 1.0
comment made by hand
obj_info scanner 3
element vertex 3
property float x
property float nx
property float y
property float z
property uchar red
element face 1
property list uchar int vertex_indices
end_header
0.5 0 1.5 -2 255

1 0 2 3e-1 0
-1.25 1 0 0 7
3 0 1 2
";

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn parses_hand_written_ply() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "fixture.ply", FIXTURE);
    let c = load_cloud(&p, None).unwrap();
    assert_eq!(c.label, "fixture");
    assert_eq!(
        c.points,
        vec![Point3::new(0.5, 1.5, -2.0), Point3::new(1.0, 2.0, 0.3), Point3::new(-1.25, 0.0, 0.0)]
    );
}

#[test]
fn malformed_ply_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("nomagic.ply", "plx\nformat ascii 1.0\nend_header\n", 1),
        (
            "binary.ply",
            "ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n",
            2,
        ),
        (
            "badnum.ply",
            "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 q 2\n",
            9,
        ),
        (
            "short.ply",
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2\n",
            8,
        ),
    ];
    for (name, text, expect_line) in cases {
        let p = write(&dir, name, text);
        match load_cloud(&p, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, expect_line, "{name}"),
            other => panic!("{name}: expected parse error, got {other:?}"),
        }
    }
}

#[test]
fn xyz_format_and_detection() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "pts.xyz", "# header\n1 2 3\n\n4 5 6 extra\n");
    assert_eq!(CloudFormat::from_path(&p), CloudFormat::Xyz);
    let c = load_cloud(&p, None).unwrap();
    assert_eq!(c.points, vec![Point3::new(1.0, 2.0, 3.0), Point3::new(4.0, 5.0, 6.0)]);
    let bad = write(&dir, "bad.xyz", "1 2 3\n1 nan 3\n");
    assert!(matches!(load_cloud(&bad, None), Err(Error::Parse { line: 2, .. })));
}

#[test]
fn scenario_round_trips_through_manifest() {
    let mut rng = Rng::new(61);
    let cloud = rng.cloud(120, 0.1);
    let scn = make_rotated_scenario(&cloud, 45.0, &Vector3::y()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = save_scenario(&scn, dir.path(), "orig").unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert!(!text.contains("-0.0"));
    let back = load_scenario(&path).unwrap();
    assert_eq!(back.source.points, scn.source.points);
    assert_eq!(back.target.points, scn.target.points);
    assert_eq!(back.correspondence, scn.correspondence);
    assert_eq!(back.tag, ScenarioTag::Original);
    assert!(common::max_abs_diff(&back.ground_truth.rotation, &scn.ground_truth.rotation) == 0.0);
}

#[test]
fn noiseless_scenarios_satisfy_ground_truth() {
    let mut rng = Rng::new(62);
    let cloud = rng.cloud(300, 0.1);
    for (angle, axis) in [(45.0, Vector3::y()), (-30.0, Vector3::new(1.0, 1.0, 0.0)), (0.0, Vector3::z())] {
        let scn = make_rotated_scenario(&cloud, angle, &axis).unwrap();
        assert!(mrms(&scn.source.points, &scn.target.points, &scn.ground_truth).unwrap() < 1e-12);
        assert!((scn.ground_truth.rotation_angle().to_degrees() - f64::abs(angle)).abs() < 1e-9);
    }
}

#[test]
fn hole_removes_ball_and_reindexes() {
    let mut rng = Rng::new(63);
    let cloud = rng.cloud(400, 1.0);
    let scn = make_rotated_scenario(&cloud, 45.0, &Vector3::y()).unwrap();
    let center = default_hole_center(&scn.target).unwrap();
    let hole = punch_hole(&scn, &center, 0.4).unwrap();
    let expected: Vec<Point3> = scn.target.points.iter().copied().filter(|p| (p - center).norm() > 0.4).collect();
    assert_eq!(hole.target.points, expected);
    assert_eq!(hole.tag, ScenarioTag::Hole);
    let pairs = hole.correspondence.as_ref().unwrap();
    assert_eq!(pairs.len(), expected.len());
    for &(i, j) in pairs {
        let moved = hole.ground_truth.apply_point(&hole.source.points[i]);
        assert!((moved - hole.target.points[j]).norm() < 1e-12);
    }
    assert!(punch_hole(&scn, &center, 100.0).is_err());
}

#[test]
fn noise_is_seeded_and_scaled() {
    let mut rng = Rng::new(64);
    let cloud = rng.cloud(10_000, 1.0);
    let scn = make_rotated_scenario(&cloud, 10.0, &Vector3::x()).unwrap();
    let spec = NoiseSpec::from_percent(&scn.target, 1.0, 9);
    assert!((spec.nu - scn.target.bounding_box_diagonal() / 100.0).abs() < 1e-15);
    let a = add_noise(&scn, &spec).unwrap();
    let b = add_noise(&scn, &spec).unwrap();
    assert_eq!(a, b);
    let c = add_noise(&scn, &NoiseSpec { seed: 10, ..spec }).unwrap();
    assert_ne!(a.target.points, c.target.points);
    // Displacements are ν ϑ u with ϑ standard normal: mean square ν².
    let ms: f64 = a
        .target
        .points
        .iter()
        .zip(&scn.target.points)
        .map(|(p, q)| (p - q).norm_squared())
        .sum::<f64>()
        / cloud.len() as f64;
    assert!((ms / (spec.nu * spec.nu) - 1.0).abs() < 0.1, "ratio {}", ms / (spec.nu * spec.nu));
    // Mean displacement magnitude is ν E|ϑ| = ν √(2/π).
    let mean: f64 = a
        .target
        .points
        .iter()
        .zip(&scn.target.points)
        .map(|(p, q)| (p - q).norm())
        .sum::<f64>()
        / cloud.len() as f64;
    let expect = spec.nu * (2.0 / std::f64::consts::PI).sqrt();
    assert!((mean / expect - 1.0).abs() < 0.03, "mean ratio {}", mean / expect);
    // Source and target draw from different streams.
    let ds = a.source.points[0] - scn.source.points[0];
    let dt = a.target.points[0] - scn.target.points[0];
    assert!((ds - dt).norm() > 0.0);
    let zero = add_noise(&scn, &NoiseSpec { nu: 0.0, seed: 1 }).unwrap();
    assert_eq!(zero.target.points, scn.target.points);
}

#[test]
fn subsample_keeps_every_step() {
    let pts: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
    let c = subsample_step(&PointCloud::new(pts, "line"), 3).unwrap();
    assert_eq!(c.points.iter().map(|p| p.x).collect::<Vec<_>>(), vec![0.0, 3.0, 6.0, 9.0]);
    assert!(subsample_step(&c, 0).is_err());
}

#[test]
fn bundled_bunny_loads() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/bunny.ply");
    let bunny = load_cloud(&path, None).unwrap();
    assert_eq!(bunny.len(), 28088);
    assert_eq!(subsample_step(&bunny, 45).unwrap().len(), 625);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ply_and_xyz_round_trip_exactly(pts in prop::collection::vec(prop::array::uniform3(-1e6f64..1e6), 1..50)) {
        let cloud = PointCloud::new(pts.iter().map(|p| Vector3::from(*p)).collect(), "rt");
        let dir = tempfile::tempdir().unwrap();
        for name in ["rt.ply", "rt.xyz"] {
            let path = dir.path().join(name);
            save_cloud(&cloud, &path).unwrap();
            let back = load_cloud(&path, None).unwrap();
            prop_assert_eq!(&back.points, &cloud.points);
        }
    }
}
