//! Point-cloud files, scenario manifests, and synthesis of the rotated,
//! hole-punched and noisy benchmark scenarios.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_transform, Mat3, Point3, PointCloud, RigidTransform, ROTATION_CHECK_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    PlyAscii,
    Xyz,
}

impl CloudFormat {
    /// Guess from the file extension (`.ply`, otherwise XYZ).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("ply") => CloudFormat::PlyAscii,
            _ => CloudFormat::Xyz,
        }
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn load_cloud(path: &Path, format: Option<CloudFormat>) -> Result<PointCloud> {
    let text = fs::read_to_string(path)?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let points = match format.unwrap_or_else(|| CloudFormat::from_path(path)) {
        CloudFormat::PlyAscii => parse_ply(path, &text)?,
        CloudFormat::Xyz => parse_xyz(path, &text)?,
    };
    Ok(PointCloud::new(points, label))
}

fn parse_xyz(path: &Path, text: &str) -> Result<Vec<Point3>> {
    let mut points = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        points.push(parse_xyz_fields(path, n + 1, line.split_whitespace())?);
    }
    Ok(points)
}

fn parse_xyz_fields<'a>(path: &Path, line: usize, mut fields: impl Iterator<Item = &'a str>) -> Result<Point3> {
    let mut c = [0.0; 3];
    for (k, slot) in c.iter_mut().enumerate() {
        let f = fields
            .next()
            .ok_or_else(|| parse_err(path, line, format!("expected 3 coordinates, found {k}")))?;
        let v: f64 = f
            .parse()
            .map_err(|_| parse_err(path, line, format!("invalid number '{f}'")))?;
        if !v.is_finite() {
            return Err(parse_err(path, line, "non-finite coordinate"));
        }
        *slot = v;
    }
    Ok(Point3::new(c[0], c[1], c[2]))
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<String>,
    /// A list property makes rows variable-length.
    has_list: bool,
}

fn parse_ply(path: &Path, text: &str) -> Result<Vec<Point3>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_err(path, 1, "missing 'ply' magic line")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut format_seen = false;
    loop {
        let Some((n, raw)) = lines.next() else {
            return Err(parse_err(path, text.lines().count(), "header is not terminated by end_header"));
        };
        let line_no = n + 1;
        let mut tok = raw.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(parse_err(path, line_no, "only ascii PLY is supported"));
                }
                format_seen = true;
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = tok.next().ok_or_else(|| parse_err(path, line_no, "element without name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse_err(path, line_no, "element without valid count"))?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                    has_list: false,
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, line_no, "property before any element"))?;
                let parts: Vec<&str> = tok.collect();
                if parts.first() == Some(&"list") {
                    el.has_list = true;
                }
                let name = parts.last().ok_or_else(|| parse_err(path, line_no, "property without name"))?;
                el.properties.push(name.to_string());
            }
            Some("end_header") => break,
            Some(other) => return Err(parse_err(path, line_no, format!("unknown header keyword '{other}'"))),
        }
    }
    if !format_seen {
        return Err(parse_err(path, 1, "missing format line"));
    }

    let mut points = Vec::new();
    for el in &elements {
        let is_vertex = el.name == "vertex";
        let axes: Option<[usize; 3]> = if is_vertex {
            let find = |n: &str| el.properties.iter().position(|p| p == n);
            match (find("x"), find("y"), find("z")) {
                (Some(x), Some(y), Some(z)) => Some([x, y, z]),
                _ => return Err(parse_err(path, 1, "vertex element lacks x, y, z properties")),
            }
        } else {
            None
        };
        if is_vertex && el.has_list {
            return Err(parse_err(path, 1, "list properties on vertices are not supported"));
        }
        let mut read = 0;
        while read < el.count {
            let Some((n, raw)) = lines.next() else {
                return Err(parse_err(
                    path,
                    text.lines().count(),
                    format!("expected {} {} rows, found {read}", el.count, el.name),
                ));
            };
            if raw.trim().is_empty() {
                continue;
            }
            read += 1;
            let Some(axes) = axes else { continue };
            let fields: Vec<&str> = raw.split_whitespace().collect();
            if fields.len() < el.properties.len() {
                return Err(parse_err(
                    path,
                    n + 1,
                    format!("expected {} values, found {}", el.properties.len(), fields.len()),
                ));
            }
            points.push(parse_xyz_fields(path, n + 1, axes.iter().map(|&a| fields[a]))?);
        }
    }
    Ok(points)
}

/// Writes an ascii PLY with shortest round-trip decimal coordinates.
pub fn save_ply(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    if !cloud.label.is_empty() {
        let _ = writeln!(s, "comment {}", cloud.label);
    }
    let _ = writeln!(s, "element vertex {}", cloud.len());
    s.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
    for p in &cloud.points {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn save_xyz(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut s = String::new();
    for p in &cloud.points {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn save_cloud(cloud: &PointCloud, path: &Path) -> Result<()> {
    match CloudFormat::from_path(path) {
        CloudFormat::PlyAscii => save_ply(cloud, path),
        CloudFormat::Xyz => save_xyz(cloud, path),
    }
}

/// Keeps indices `0, step, 2·step, …`.
pub fn subsample_step(cloud: &PointCloud, step: usize) -> Result<PointCloud> {
    if step == 0 {
        return Err(Error::InvalidParameter("step must be at least 1".into()));
    }
    Ok(PointCloud::new(
        cloud.points.iter().step_by(step).copied().collect(),
        cloud.label.clone(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioTag {
    Original,
    Hole,
    Noise,
}

impl ScenarioTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioTag::Original => "original",
            ScenarioTag::Hole => "hole",
            ScenarioTag::Noise => "noise",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub source: PointCloud,
    pub target: PointCloud,
    /// Maps the source onto the target.
    pub ground_truth: RigidTransform,
    /// Ground-truth `(source, target)` index pairs.
    pub correspondence: Option<Vec<(usize, usize)>>,
    pub tag: ScenarioTag,
}

/// Source is the cloud rotated by `angle_deg` about `axis` (right-hand rule);
/// the target is the cloud itself.
pub fn make_rotated_scenario(cloud: &PointCloud, angle_deg: f64, axis: &Vector3<f64>) -> Result<Scenario> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let rot = RigidTransform::from_axis_angle(axis, angle_deg.to_radians())?;
    let mut source = apply_transform(cloud, &rot);
    source.label = format!("{}-source", cloud.label);
    let mut target = cloud.clone();
    target.label = format!("{}-target", cloud.label);
    Ok(Scenario {
        source,
        target,
        ground_truth: rot.inverse(),
        correspondence: Some((0..cloud.len()).map(|i| (i, i)).collect()),
        tag: ScenarioTag::Original,
    })
}

/// The target point nearest the target centroid (ties by index).
pub fn default_hole_center(target: &PointCloud) -> Result<Point3> {
    let c = target.centroid().ok_or(Error::EmptyCloud)?;
    let mut best = (f64::INFINITY, 0);
    for (i, p) in target.points.iter().enumerate() {
        let d = (p - c).norm_squared();
        if d < best.0 {
            best = (d, i);
        }
    }
    Ok(target.points[best.1])
}

/// Removes every target point within `radius` of `center`.
pub fn punch_hole(scn: &Scenario, center: &Point3, radius: f64) -> Result<Scenario> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!("hole radius must be positive, got {radius}")));
    }
    let mut new_index = vec![None; scn.target.len()];
    let mut kept = Vec::new();
    for (j, p) in scn.target.points.iter().enumerate() {
        if (p - center).norm() > radius {
            new_index[j] = Some(kept.len());
            kept.push(*p);
        }
    }
    if kept.is_empty() {
        return Err(Error::InvalidParameter("hole removes every target point".into()));
    }
    let correspondence = scn.correspondence.as_ref().map(|pairs| {
        pairs
            .iter()
            .filter_map(|&(i, j)| new_index.get(j).copied().flatten().map(|nj| (i, nj)))
            .collect()
    });
    Ok(Scenario {
        source: scn.source.clone(),
        target: PointCloud::new(kept, scn.target.label.clone()),
        ground_truth: scn.ground_truth,
        correspondence,
        tag: ScenarioTag::Hole,
    })
}

/// Displacement scale `ν` and generator seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub nu: f64,
    pub seed: u64,
}

impl NoiseSpec {
    /// `ν` as a percentage of the bounding-box diagonal of `reference`.
    pub fn from_percent(reference: &PointCloud, percent: f64, seed: u64) -> Self {
        Self {
            nu: percent * reference.bounding_box_diagonal() / 100.0,
            seed,
        }
    }
}

fn uniform_open(rng: &mut ChaCha20Rng) -> f64 {
    // 53 random bits mapped to (0, 1].
    ((rng.next_u64() >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal sample by Box–Muller (cosine branch).
fn gaussian(rng: &mut ChaCha20Rng) -> f64 {
    let u1 = uniform_open(rng);
    let u2 = uniform_open(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn unit_vector(rng: &mut ChaCha20Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(gaussian(rng), gaussian(rng), gaussian(rng));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

fn perturb(cloud: &PointCloud, nu: f64, seed: u64, stream: u64) -> PointCloud {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let points = cloud
        .points
        .iter()
        .map(|p| {
            let theta = gaussian(&mut rng);
            let u = unit_vector(&mut rng);
            p + u * (nu * theta)
        })
        .collect();
    PointCloud::new(points, cloud.label.clone())
}

/// Adds `ν ϑ u` to every point of both clouds (`ϑ ~ N(0,1)`, `u` uniform on
/// the sphere), with independent streams for source and target.
pub fn add_noise(scn: &Scenario, spec: &NoiseSpec) -> Result<Scenario> {
    if !(spec.nu >= 0.0 && spec.nu.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise scale must be >= 0, got {}", spec.nu)));
    }
    Ok(Scenario {
        source: perturb(&scn.source, spec.nu, spec.seed, 0),
        target: perturb(&scn.target, spec.nu, spec.seed, 1),
        ground_truth: scn.ground_truth,
        correspondence: scn.correspondence.clone(),
        tag: ScenarioTag::Noise,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
}

impl GroundTruthRecord {
    pub fn from_transform(t: &RigidTransform) -> Self {
        let m = &t.rotation;
        // Adding 0.0 turns -0.0 into 0.0 so manifests do not print "-0.0".
        Self {
            r: std::array::from_fn(|k| m[(k / 3, k % 3)] + 0.0),
            t: std::array::from_fn(|k| t.translation[k] + 0.0),
        }
    }

    pub fn to_transform(&self) -> Result<RigidTransform> {
        let r = Mat3::from_row_slice(&self.r);
        RigidTransform::with_tolerance(r, Vector3::from(self.t), ROTATION_CHECK_TOL)
            .map_err(|e| Error::Manifest(format!("ground truth: {e}")))
    }
}

/// On-disk description of a scenario; cloud paths are relative to the
/// manifest's directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub source_file: String,
    pub target_file: String,
    pub ground_truth: GroundTruthRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correspondence: Option<Vec<[usize; 2]>>,
    pub tag: ScenarioTag,
}

fn resolve(base: &Path, file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Writes `<stem>_source.ply`, `<stem>_target.ply` and `<stem>.json` into `dir`.
pub fn save_scenario(scn: &Scenario, dir: &Path, stem: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let source_file = format!("{stem}_source.ply");
    let target_file = format!("{stem}_target.ply");
    save_ply(&scn.source, &dir.join(&source_file))?;
    save_ply(&scn.target, &dir.join(&target_file))?;
    let manifest = Manifest {
        source_file,
        target_file,
        ground_truth: GroundTruthRecord::from_transform(&scn.ground_truth),
        correspondence: scn
            .correspondence
            .as_ref()
            .map(|c| c.iter().map(|&(i, j)| [i, j]).collect()),
        tag: scn.tag,
    };
    let path = dir.join(format!("{stem}.json"));
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(path)
}

pub fn load_scenario(manifest_path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(manifest_path)?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let source = load_cloud(&resolve(base, &manifest.source_file), None)?;
    let target = load_cloud(&resolve(base, &manifest.target_file), None)?;
    let correspondence = match manifest.correspondence {
        Some(pairs) => {
            for &[i, j] in &pairs {
                if i >= source.len() || j >= target.len() {
                    return Err(Error::Manifest(format!("correspondence ({i}, {j}) out of range")));
                }
            }
            Some(pairs.into_iter().map(|[i, j]| (i, j)).collect())
        }
        None => None,
    };
    Ok(Scenario {
        source,
        target,
        ground_truth: manifest.ground_truth.to_transform()?,
        correspondence,
        tag: manifest.tag,
    })
}
