//! Correspondence relations: nearest-point pairs, trimming, shape-weighted
//! pairs, pure shape pairs and their Lie-score analogues.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::similarity::{ctsf, d_cm, frob_score, weighted_frob_score, ShapeDescriptor, WeightSchedule};
use crate::spatial::SpatialIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatchKind {
    /// Every target claims its nearest source.
    C,
    /// `C` after trimming.
    C1,
    /// Shape-weighted distance pairs.
    C2,
    /// `C2` after trimming.
    C3,
    /// Pure shape pairs (every target claims its most similar source).
    CCtsf,
    Lie0,
    Lie1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub source_index: usize,
    pub target_index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet {
    pub pairs: Vec<Correspondence>,
    pub kind: MatchKind,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Which cloud iterates in an argmin relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchDirection {
    /// As each relation is defined: nearest-point and pure shape pairs are
    /// claimed by targets, shape-weighted and Lie pairs by sources.
    #[default]
    Literal,
    /// Every relation is claimed by targets.
    TargetClaimsSource,
}

/// Total order used everywhere: score, then source index, then target index.
pub fn pair_order(a: &Correspondence, b: &Correspondence) -> Ordering {
    a.score
        .total_cmp(&b.score)
        .then(a.source_index.cmp(&b.source_index))
        .then(a.target_index.cmp(&b.target_index))
}

/// For every target point, its nearest source point in `p_index`.
pub fn closest_point(p_index: &SpatialIndex, q: &PointCloud) -> MatchSet {
    closest_point_points(p_index, &q.points)
}

pub fn closest_point_points(p_index: &SpatialIndex, q: &[Point3]) -> MatchSet {
    let pairs = q
        .iter()
        .enumerate()
        .map(|(j, y)| {
            let (i, d) = p_index.nearest(y);
            Correspondence {
                source_index: i,
                target_index: j,
                score: d,
            }
        })
        .collect();
    MatchSet {
        pairs,
        kind: MatchKind::C,
    }
}

/// Number of pairs kept by trimming `c` pairs with fraction `tau`:
/// `⌈c (1 − τ)⌉`.
pub fn trim_count(c: usize, tau: f64) -> usize {
    // Slack absorbs products such as 10 · 0.7 = 7.000000000000001.
    let raw = (c as f64 * (1.0 - tau) - 1e-9).ceil().max(1.0) as usize;
    raw.min(c)
}

/// Sorts by score and keeps the best `⌈c (1 − τ)⌉` pairs.
pub fn trim(ms: &MatchSet, tau: f64) -> Result<MatchSet> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!("tau must lie in [0, 1), got {tau}")));
    }
    if ms.is_empty() {
        return Err(Error::EmptyMatchSet);
    }
    let mut pairs = ms.pairs.clone();
    pairs.sort_by(pair_order);
    pairs.truncate(trim_count(ms.len(), tau));
    let kind = match ms.kind {
        MatchKind::C => MatchKind::C1,
        MatchKind::C2 => MatchKind::C3,
        k => k,
    };
    Ok(MatchSet { pairs, kind })
}

/// Exhaustive argmin relation. With `sources_claim`, every source picks its
/// best target, otherwise every target picks its best source; ties go to
/// the smaller index of the searched cloud.
fn argmin_relation<F>(n_source: usize, n_target: usize, sources_claim: bool, kind: MatchKind, score: F) -> MatchSet
where
    F: Fn(usize, usize) -> f64,
{
    let (outer, inner) = if sources_claim {
        (n_source, n_target)
    } else {
        (n_target, n_source)
    };
    let pairs = (0..outer)
        .filter_map(|a| {
            let mut best: Option<(usize, f64)> = None;
            for b in 0..inner {
                let (i, j) = if sources_claim { (a, b) } else { (b, a) };
                let s = score(i, j);
                if best.map_or(true, |(_, bs)| s < bs) {
                    best = Some((b, s));
                }
            }
            best.map(|(b, s)| {
                let (i, j) = if sources_claim { (a, b) } else { (b, a) };
                Correspondence {
                    source_index: i,
                    target_index: j,
                    score: s,
                }
            })
        })
        .collect();
    MatchSet { pairs, kind }
}

/// Shape-weighted pairs: every source claims the target minimising `d_cm`.
pub fn ctsf_matching(
    p: &[Point3],
    q: &[Point3],
    p_desc: &[ShapeDescriptor],
    q_desc: &[ShapeDescriptor],
    w: &WeightSchedule,
    direction: MatchDirection,
) -> MatchSet {
    let sources_claim = direction == MatchDirection::Literal;
    argmin_relation(p.len(), q.len(), sources_claim, MatchKind::C2, |i, j| {
        d_cm(&p[i], &q[j], &p_desc[i], &q_desc[j], w)
    })
}

pub fn ctsf_trimmed(
    p: &[Point3],
    q: &[Point3],
    p_desc: &[ShapeDescriptor],
    q_desc: &[ShapeDescriptor],
    w: &WeightSchedule,
    tau: f64,
    direction: MatchDirection,
) -> Result<MatchSet> {
    trim(&ctsf_matching(p, q, p_desc, q_desc, w, direction), tau)
}

/// Pure shape pairs: every target claims the source with the smallest CTSF.
pub fn shape_matching(p_desc: &[ShapeDescriptor], q_desc: &[ShapeDescriptor]) -> MatchSet {
    argmin_relation(p_desc.len(), q_desc.len(), false, MatchKind::CCtsf, |i, j| {
        ctsf(&p_desc[i], &q_desc[j])
    })
}

/// Lie strategies: 0 scores with `‖D‖_F²`, 1 with the `w_m`-weighted form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LieStrategy {
    Plain,
    Weighted,
}

impl LieStrategy {
    pub fn from_index(s: u8) -> Result<Self> {
        match s {
            0 => Ok(Self::Plain),
            1 => Ok(Self::Weighted),
            _ => Err(Error::InvalidParameter(format!("Lie strategy must be 0 or 1, got {s}"))),
        }
    }

    pub fn index(&self) -> u8 {
        match self {
            Self::Plain => 0,
            Self::Weighted => 1,
        }
    }

    pub fn score(&self, dp: &ShapeDescriptor, dq: &ShapeDescriptor, w: &WeightSchedule) -> f64 {
        match self {
            Self::Plain => frob_score(dp, dq),
            Self::Weighted => weighted_frob_score(dp, dq, w),
        }
    }

    fn kind(&self) -> MatchKind {
        match self {
            Self::Plain => MatchKind::Lie0,
            Self::Weighted => MatchKind::Lie1,
        }
    }
}

/// Lie-score pairs: every source claims the target with the smallest score.
/// The descriptors carry the current positions through `T12`.
pub fn lie_matching(
    p_desc: &[ShapeDescriptor],
    q_desc: &[ShapeDescriptor],
    strategy: LieStrategy,
    w: &WeightSchedule,
    direction: MatchDirection,
) -> MatchSet {
    let sources_claim = direction == MatchDirection::Literal;
    argmin_relation(p_desc.len(), q_desc.len(), sources_claim, strategy.kind(), |i, j| {
        strategy.score(&p_desc[i], &q_desc[j], w)
    })
}

/// Shape relation scored in the Lie algebra: every target claims the source
/// with the smallest Lie score.
pub fn lie_shape_matching(
    p_desc: &[ShapeDescriptor],
    q_desc: &[ShapeDescriptor],
    strategy: LieStrategy,
    w: &WeightSchedule,
) -> MatchSet {
    let mut ms = argmin_relation(p_desc.len(), q_desc.len(), false, MatchKind::CCtsf, |i, j| {
        strategy.score(&p_desc[i], &q_desc[j], w)
    });
    ms.kind = MatchKind::CCtsf;
    ms
}
