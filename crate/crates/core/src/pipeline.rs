//! Iterative registration drivers: trimmed ICP, shape-weighted matching
//! (ICP-CTSF), shape-weighted covariance (SWC-ICP) and their Lie variants.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{mse, transform_points, Point3, PointCloud, RigidTransform};
use crate::lie::DEFAULT_EPS_REL;
use crate::matching::{
    closest_point_points, ctsf_trimmed, lie_matching, lie_shape_matching, shape_matching, trim,
    LieStrategy, MatchDirection, MatchSet,
};
use crate::similarity::{
    calibrate_w0, descriptors, CalibrationScale, DescriptorConfig, ShapeDescriptor, WeightSchedule,
    DEFAULT_DECAY, DEFAULT_ZERO_CUTOFF,
};
use crate::spatial::SpatialIndex;
use crate::voting::{VotingConfig, DEFAULT_PHI_MAX};

pub const DEFAULT_MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Algorithm {
    Icp,
    IcpCtsf,
    SwcIcp,
    IcpLie0,
    IcpLie1,
    SwcLie0,
    SwcLie1,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Icp,
        Algorithm::IcpCtsf,
        Algorithm::SwcIcp,
        Algorithm::IcpLie0,
        Algorithm::IcpLie1,
        Algorithm::SwcLie0,
        Algorithm::SwcLie1,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Algorithm::Icp => "icp",
            Algorithm::IcpCtsf => "icp-ctsf",
            Algorithm::SwcIcp => "swc-icp",
            Algorithm::IcpLie0 => "icp-lie-0",
            Algorithm::IcpLie1 => "icp-lie-1",
            Algorithm::SwcLie0 => "swc-lie-0",
            Algorithm::SwcLie1 => "swc-lie-1",
        }
    }

    pub fn lie_strategy(&self) -> Option<LieStrategy> {
        match self {
            Algorithm::IcpLie0 | Algorithm::SwcLie0 => Some(LieStrategy::Plain),
            Algorithm::IcpLie1 | Algorithm::SwcLie1 => Some(LieStrategy::Weighted),
            _ => None,
        }
    }

    pub fn is_swc(&self) -> bool {
        matches!(self, Algorithm::SwcIcp | Algorithm::SwcLie0 | Algorithm::SwcLie1)
    }

    pub fn uses_shape(&self) -> bool {
        *self != Algorithm::Icp
    }

    /// Whether the weight schedule influences the iteration. ICP-LIE-0 has
    /// no weighted term, so it stops at the first non-decrease like ICP.
    pub fn has_schedule(&self) -> bool {
        !matches!(self, Algorithm::Icp | Algorithm::IcpLie0)
    }

    fn calibration(&self) -> CalibrationScale {
        if self.lie_strategy().is_some() {
            CalibrationScale::LieSquared
        } else {
            CalibrationScale::Ctsf
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.tag() == norm)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegistrationConfig {
    pub algorithm: Algorithm,
    pub tau: f64,
    pub k_percent: f64,
    /// `None` selects the calibrated default.
    pub w0: Option<f64>,
    pub b: f64,
    pub zero_cutoff: f64,
    pub max_iterations: usize,
    pub phi_max: f64,
    pub eps_rel: f64,
    pub tensor_prescale: bool,
    pub reverse_votes: bool,
    pub trace_normalize: bool,
    /// Recompute the source tensor field on the moved cloud every iteration.
    pub refresh_field: bool,
    /// SWC-LIE scores its shape relation with the Lie score instead of CTSF.
    pub lie_shape_relation: bool,
    #[serde(skip)]
    pub direction: MatchDirection,
}

impl RegistrationConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            tau: 0.0,
            k_percent: 5.0,
            w0: None,
            b: DEFAULT_DECAY,
            zero_cutoff: DEFAULT_ZERO_CUTOFF,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            phi_max: DEFAULT_PHI_MAX,
            eps_rel: DEFAULT_EPS_REL,
            tensor_prescale: false,
            reverse_votes: false,
            trace_normalize: false,
            refresh_field: false,
            lie_shape_relation: true,
            direction: MatchDirection::Literal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::InvalidParameter(format!("tau must lie in [0, 1), got {}", self.tau)));
        }
        if !(self.k_percent > 0.0 && self.k_percent <= 100.0) {
            return Err(Error::InvalidParameter(format!(
                "k_percent must lie in (0, 100], got {}",
                self.k_percent
            )));
        }
        if !(self.b > 0.0 && self.b < 1.0) {
            return Err(Error::InvalidParameter(format!("b must lie in (0, 1), got {}", self.b)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        if let Some(w0) = self.w0 {
            if !(w0 >= 0.0 && w0.is_finite()) {
                return Err(Error::InvalidParameter(format!("w0 must be finite and >= 0, got {w0}")));
            }
        }
        if !(self.phi_max > 0.0 && self.phi_max < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidParameter("phi_max must lie in (0, π/2)".into()));
        }
        if !(self.eps_rel > 0.0) {
            return Err(Error::InvalidParameter("eps_rel must be positive".into()));
        }
        Ok(())
    }

    pub fn descriptor_config(&self) -> DescriptorConfig {
        DescriptorConfig {
            voting: VotingConfig {
                k_percent: self.k_percent,
                phi_max: self.phi_max,
                reverse_votes: self.reverse_votes,
                trace_normalize: self.trace_normalize,
            },
            eps_rel: self.eps_rel,
            prescale: self.tensor_prescale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mrms: f64,
    pub w_m: f64,
    pub matches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub per_iteration: Vec<IterationRecord>,
    /// Transform with the smallest accepted error.
    pub final_transform: RigidTransform,
    /// Root of the smallest accepted error over the matched pairs.
    pub final_mrms: f64,
    /// Stopped by the error rule rather than the iteration cap.
    pub converged: bool,
    pub iterations_used: usize,
    /// Iterations whose solver step had a repeated top eigenvalue.
    pub degenerate_steps: usize,
    /// Initial weight actually used (0 for algorithms without a schedule).
    pub w0: f64,
}

impl RunReport {
    pub fn errors(&self) -> Vec<f64> {
        self.per_iteration.iter().map(|r| r.mrms * r.mrms).collect()
    }
}

struct ShapeState {
    source: Vec<ShapeDescriptor>,
    target: Vec<ShapeDescriptor>,
    /// Target index → source index of its shape partner (SWC only).
    partner: Option<Vec<usize>>,
}

fn prepare_shape(source: &PointCloud, target: &PointCloud, cfg: &RegistrationConfig) -> Result<ShapeState> {
    let dcfg = cfg.descriptor_config();
    let src = descriptors(source, &dcfg)?;
    let tgt = descriptors(target, &dcfg)?;
    Ok(ShapeState {
        source: src,
        target: tgt,
        partner: None,
    })
}

fn resolve_w0(cfg: &RegistrationConfig, shape: Option<&ShapeState>) -> Result<f64> {
    if !cfg.algorithm.has_schedule() {
        return Ok(0.0);
    }
    match (cfg.w0, shape) {
        (Some(w0), _) => Ok(w0),
        (None, Some(s)) => calibrate_w0(&s.source, &s.target, cfg.algorithm.calibration()),
        (None, None) => Ok(0.0),
    }
}

fn shape_relation(shape: &ShapeState, cfg: &RegistrationConfig, w: &WeightSchedule) -> MatchSet {
    match cfg.algorithm.lie_strategy() {
        Some(strategy) if cfg.lie_shape_relation => lie_shape_matching(&shape.source, &shape.target, strategy, w),
        _ => shape_matching(&shape.source, &shape.target),
    }
}

/// Runs the configured algorithm, moving `source` onto `target`.
pub fn register(source: &PointCloud, target: &PointCloud, cfg: &RegistrationConfig) -> Result<RunReport> {
    cfg.validate()?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if !source.is_finite() || !target.is_finite() {
        return Err(Error::InvalidParameter("clouds contain non-finite coordinates".into()));
    }
    let alg = cfg.algorithm;
    let mut shape = if alg.uses_shape() {
        Some(prepare_shape(source, target, cfg)?)
    } else {
        None
    };
    let w0 = resolve_w0(cfg, shape.as_ref())?;
    let mut schedule = WeightSchedule {
        w0,
        b: cfg.b,
        m: 0,
        zero_cutoff: cfg.zero_cutoff,
    };
    if let Some(s) = shape.as_mut() {
        if alg.is_swc() {
            let rel = shape_relation(s, cfg, &schedule);
            let mut partner = vec![usize::MAX; target.len()];
            for c in &rel.pairs {
                partner[c.target_index] = c.source_index;
            }
            s.partner = Some(partner);
        }
    }

    let mut accumulated = RigidTransform::identity();
    let mut prev_eps = f64::INFINITY;
    let mut records = Vec::new();
    let mut converged = false;
    let mut degenerate_steps = 0;

    for iteration in 1..=cfg.max_iterations {
        let moved = transform_points(&source.points, &accumulated);
        let w_m = if alg.has_schedule() {
            schedule.weight()
        } else {
            0.0
        };

        if cfg.refresh_field {
            if let Some(s) = shape.as_mut() {
                let moved_cloud = PointCloud::new(moved.clone(), source.label.clone());
                s.source = descriptors(&moved_cloud, &cfg.descriptor_config())?;
            }
        }

        let (x, y, partners): (Vec<Point3>, Vec<Point3>, Option<Vec<Point3>>) = match alg {
            Algorithm::Icp | Algorithm::SwcIcp | Algorithm::SwcLie0 | Algorithm::SwcLie1 => {
                let source_index = SpatialIndex::build(&moved)?;
                let c1 = trim(&closest_point_points(&source_index, &target.points), cfg.tau)?;
                let mut x = Vec::with_capacity(c1.len());
                let mut y = Vec::with_capacity(c1.len());
                let mut s_pts = Vec::with_capacity(c1.len());
                let partner = shape.as_ref().and_then(|s| s.partner.as_ref());
                for c in &c1.pairs {
                    let s_idx = partner.map(|p| p[c.target_index]);
                    if s_idx == Some(usize::MAX) {
                        continue;
                    }
                    x.push(moved[c.source_index]);
                    y.push(target.points[c.target_index]);
                    if let Some(si) = s_idx {
                        s_pts.push(moved[si]);
                    }
                }
                let s_opt = partner.map(|_| s_pts);
                (x, y, s_opt)
            }
            Algorithm::IcpCtsf => {
                let s = shape.as_ref().expect("shape state");
                let c3 = ctsf_trimmed(&moved, &target.points, &s.source, &s.target, &schedule, cfg.tau, cfg.direction)?;
                pairs_points(&c3, &moved, &target.points)
            }
            Algorithm::IcpLie0 | Algorithm::IcpLie1 => {
                let s = shape.as_ref().expect("shape state");
                let strategy = alg.lie_strategy().expect("Lie algorithm");
                let current: Vec<ShapeDescriptor> = if cfg.refresh_field {
                    s.source.clone()
                } else {
                    s.source.iter().zip(&moved).map(|(d, p)| d.at(p)).collect()
                };
                let lm = lie_matching(&current, &s.target, strategy, &schedule, cfg.direction);
                let lm = trim(&lm, cfg.tau)?;
                pairs_points(&lm, &moved, &target.points)
            }
        };

        let sol = crate::solver::horn_solve(&x, &y, partners.as_deref(), w_m)?;
        if sol.degenerate {
            degenerate_steps += 1;
        }
        let eps = mse(&x, &y, &sol.transform)?;
        records.push(IterationRecord {
            iteration,
            mrms: eps.sqrt(),
            w_m,
            matches: x.len(),
        });

        if eps >= prev_eps {
            if alg.has_schedule() && w_m > 0.0 {
                schedule.step();
                continue;
            }
            converged = true;
            break;
        }
        accumulated = sol.transform.compose(&accumulated).reorthonormalized();
        prev_eps = eps;
    }

    Ok(RunReport {
        iterations_used: records.len(),
        per_iteration: records,
        final_transform: accumulated,
        final_mrms: prev_eps.sqrt(),
        converged,
        degenerate_steps,
        w0,
    })
}

fn pairs_points(ms: &MatchSet, source: &[Point3], target: &[Point3]) -> (Vec<Point3>, Vec<Point3>, Option<Vec<Point3>>) {
    let x = ms.pairs.iter().map(|c| source[c.source_index]).collect();
    let y = ms.pairs.iter().map(|c| target[c.target_index]).collect();
    (x, y, None)
}

fn run_checked(p: &PointCloud, q: &PointCloud, cfg: &RegistrationConfig, allowed: &[Algorithm]) -> Result<RunReport> {
    if !allowed.contains(&cfg.algorithm) {
        return Err(Error::InvalidParameter(format!(
            "algorithm {} not handled by this driver",
            cfg.algorithm
        )));
    }
    register(p, q, cfg)
}

pub fn run_icp(p: &PointCloud, q: &PointCloud, cfg: &RegistrationConfig) -> Result<RunReport> {
    run_checked(p, q, cfg, &[Algorithm::Icp])
}

pub fn run_icp_ctsf(p: &PointCloud, q: &PointCloud, cfg: &RegistrationConfig) -> Result<RunReport> {
    run_checked(p, q, cfg, &[Algorithm::IcpCtsf])
}

pub fn run_swc_icp(p: &PointCloud, q: &PointCloud, cfg: &RegistrationConfig) -> Result<RunReport> {
    run_checked(p, q, cfg, &[Algorithm::SwcIcp])
}

pub fn run_lie(p: &PointCloud, q: &PointCloud, cfg: &RegistrationConfig) -> Result<RunReport> {
    run_checked(
        p,
        q,
        cfg,
        &[Algorithm::IcpLie0, Algorithm::IcpLie1, Algorithm::SwcLie0, Algorithm::SwcLie1],
    )
}

/// MRMS of `transform` over ground-truth index pairs `(source, target)`.
pub fn correspondence_mrms(
    source: &PointCloud,
    target: &PointCloud,
    pairs: &[(usize, usize)],
    transform: &RigidTransform,
) -> Result<f64> {
    let mut x = Vec::with_capacity(pairs.len());
    let mut y = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        let (Some(a), Some(b)) = (source.points.get(i), target.points.get(j)) else {
            return Err(Error::MalformedCorrespondence(format!("pair ({i}, {j}) out of range")));
        };
        x.push(*a);
        y.push(*b);
    }
    crate::geometry::mrms(&x, &y, transform)
}
