//! Exact nearest-neighbour queries and the k% neighbourhood lists used by
//! tensor voting.
//!
//! Every query breaks distance ties by ascending point index, so results are
//! identical to an exhaustive scan over the same snapshot.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

/// Below this size the index answers queries by exhaustive scan.
const EXHAUSTIVE_BELOW: usize = 32;
const LEAF_SIZE: usize = 12;

/// Influence of the farthest neighbour on the isotropic vote weight.
pub const FARTHEST_INFLUENCE: f64 = 0.01;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// Immutable kd-tree over a snapshot of a point set.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Point3>,
    order: Vec<usize>,
    root: Option<Node>,
}

/// Candidate ordering: squared distance, then point index.
fn closer(a: (f64, usize), b: (f64, usize)) -> bool {
    match a.0.total_cmp(&b.0) {
        Ordering::Less => true,
        Ordering::Equal => a.1 < b.1,
        Ordering::Greater => false,
    }
}

fn build_node(points: &[Point3], order: &mut [usize], offset: usize) -> Node {
    if order.len() <= LEAF_SIZE {
        return Node::Leaf {
            start: offset,
            end: offset + order.len(),
        };
    }
    let mut lo = points[order[0]];
    let mut hi = lo;
    for &i in order.iter() {
        lo = lo.inf(&points[i]);
        hi = hi.sup(&points[i]);
    }
    let extent = hi - lo;
    let axis = extent.imax();
    if extent[axis] == 0.0 {
        return Node::Leaf {
            start: offset,
            end: offset + order.len(),
        };
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis]
            .total_cmp(&points[b][axis])
            .then(a.cmp(&b))
    });
    let value = points[order[mid]][axis];
    let (left, right) = order.split_at_mut(mid);
    Node::Split {
        axis,
        value,
        left: Box::new(build_node(points, left, offset)),
        right: Box::new(build_node(points, right, offset + mid)),
    }
}

impl SpatialIndex {
    pub fn build(points: &[Point3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let points = points.to_vec();
        let mut order: Vec<usize> = (0..points.len()).collect();
        let root = if points.len() < EXHAUSTIVE_BELOW {
            None
        } else {
            Some(build_node(&points, &mut order, 0))
        };
        Ok(Self {
            points,
            order,
            root,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    /// Nearest stored point to `q`: `(index, distance)`.
    pub fn nearest(&self, q: &Point3) -> (usize, f64) {
        let mut best = (f64::INFINITY, usize::MAX);
        match &self.root {
            None => {
                for (i, p) in self.points.iter().enumerate() {
                    let cand = ((p - q).norm_squared(), i);
                    if closer(cand, best) {
                        best = cand;
                    }
                }
            }
            Some(root) => self.nearest_in(root, q, &mut best),
        }
        (best.1, best.0.sqrt())
    }

    fn nearest_in(&self, node: &Node, q: &Point3, best: &mut (f64, usize)) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let cand = ((self.points[i] - q).norm_squared(), i);
                    if closer(cand, *best) {
                        *best = cand;
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_in(near, q, best);
                // Equal plane distance may still hide a lower-index tie.
                if diff * diff <= best.0 {
                    self.nearest_in(far, q, best);
                }
            }
        }
    }

    /// The `k` nearest stored points to `q`, optionally skipping one index,
    /// sorted by (distance, index).
    pub fn k_nearest(&self, q: &Point3, k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        let mut heap: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k > 0 {
            match &self.root {
                None => {
                    for (i, p) in self.points.iter().enumerate() {
                        if Some(i) != exclude {
                            push_bounded(&mut heap, ((p - q).norm_squared(), i), k);
                        }
                    }
                }
                Some(root) => self.k_nearest_in(root, q, k, exclude, &mut heap),
            }
        }
        heap.into_iter().map(|(d2, i)| (i, d2.sqrt())).collect()
    }

    fn k_nearest_in(
        &self,
        node: &Node,
        q: &Point3,
        k: usize,
        exclude: Option<usize>,
        heap: &mut Vec<(f64, usize)>,
    ) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    if Some(i) != exclude {
                        push_bounded(heap, ((self.points[i] - q).norm_squared(), i), k);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.k_nearest_in(near, q, k, exclude, heap);
                let bound = if heap.len() < k {
                    f64::INFINITY
                } else {
                    heap[heap.len() - 1].0
                };
                if diff * diff <= bound {
                    self.k_nearest_in(far, q, k, exclude, heap);
                }
            }
        }
    }
}

/// Insert into a sorted list capped at `k` entries.
fn push_bounded(list: &mut Vec<(f64, usize)>, cand: (f64, usize), k: usize) {
    if list.len() == k && !closer(cand, list[k - 1]) {
        return;
    }
    let pos = list.partition_point(|&e| closer(e, cand));
    list.insert(pos, cand);
    if list.len() > k {
        list.pop();
    }
}

pub fn build_index(cloud: &PointCloud) -> Result<SpatialIndex> {
    SpatialIndex::build(&cloud.points)
}

pub fn nearest(index: &SpatialIndex, q: &Point3) -> (usize, f64) {
    index.nearest(q)
}

/// `L_k(p)` for one point together with its Gaussian scale.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    pub center_index: usize,
    /// Ascending by distance, ties by index; never contains the center.
    pub neighbor_indices: Vec<usize>,
    pub distances: Vec<f64>,
    pub sigma: f64,
}

/// Number of neighbours for a k% neighbourhood over `n` points: the ceiling
/// of `k/100 · (n − 1)`, at least one.
pub fn neighbor_count(n: usize, k_percent: f64) -> Result<usize> {
    if !(k_percent > 0.0 && k_percent <= 100.0) {
        return Err(Error::InvalidParameter(format!(
            "k_percent must lie in (0, 100], got {k_percent}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidParameter(
            "neighbourhoods need at least two points".into(),
        ));
    }
    let candidates = (n - 1) as f64;
    // The small slack keeps exact products such as 5% of 20 from rounding up.
    let raw = (k_percent * candidates / 100.0 - 1e-9).ceil();
    Ok((raw.max(1.0) as usize).min(n - 1))
}

/// Scale at which the farthest neighbour's vote has weight
/// [`FARTHEST_INFLUENCE`]: `σ² = d_f² / ln(1/0.01)`.
pub fn sigma_from_farthest(farthest_distance: f64) -> f64 {
    (farthest_distance * farthest_distance / (1.0 / FARTHEST_INFLUENCE).ln()).sqrt()
}

/// k% nearest-neighbour lists for every point of the cloud.
pub fn neighborhoods(cloud: &PointCloud, k_percent: f64) -> Result<Vec<NeighborList>> {
    let k = neighbor_count(cloud.len(), k_percent)?;
    let index = build_index(cloud)?;
    cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let found = index.k_nearest(p, k, Some(i));
            let farthest = found.last().map(|&(_, d)| d).unwrap_or(0.0);
            if !(farthest > 0.0) {
                return Err(Error::DegenerateGeometry(format!(
                    "all neighbours of point {i} coincide with it"
                )));
            }
            Ok(NeighborList {
                center_index: i,
                neighbor_indices: found.iter().map(|&(j, _)| j).collect(),
                distances: found.iter().map(|&(_, d)| d).collect(),
                sigma: sigma_from_farthest(farthest),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_points(n: usize, seed: u64) -> Vec<Point3> {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        (0..n).map(|_| Point3::new(next(), next(), next())).collect()
    }

    fn brute_nearest(points: &[Point3], q: &Point3) -> (usize, f64) {
        let mut best = (f64::INFINITY, usize::MAX);
        for (i, p) in points.iter().enumerate() {
            let d2 = (p - q).norm_squared();
            if d2 < best.0 || (d2 == best.0 && i < best.1) {
                best = (d2, i);
            }
        }
        (best.1, best.0.sqrt())
    }

    #[test]
    fn single_point_index() {
        let idx = SpatialIndex::build(&[Point3::new(1.0, 2.0, 3.0)]).unwrap();
        assert_eq!(idx.nearest(&Point3::new(-5.0, 0.0, 9.0)).0, 0);
    }

    #[test]
    fn empty_index_is_error() {
        assert!(matches!(SpatialIndex::build(&[]), Err(Error::EmptyCloud)));
    }

    #[test]
    fn lattice_exact_hit() {
        let mut pts = Vec::new();
        for x in 0..3 {
            for y in 0..3 {
                for z in 0..3 {
                    pts.push(Point3::new(x as f64, y as f64, z as f64));
                }
            }
        }
        let idx = SpatialIndex::build(&pts).unwrap();
        let (i, d) = idx.nearest(&Point3::new(1.0, 2.0, 0.0));
        assert_eq!(pts[i], Point3::new(1.0, 2.0, 0.0));
        assert_eq!(d, 0.0);
    }

    #[test]
    fn tie_prefers_lower_index() {
        let pts = [Point3::new(1.0, 0.0, 0.0), Point3::new(-1.0, 0.0, 0.0)];
        let idx = SpatialIndex::build(&pts).unwrap();
        assert_eq!(idx.nearest(&Point3::zeros()).0, 0);
        // Same with the tree path: a large symmetric lattice.
        let lattice: Vec<Point3> = (0..100).map(|i| Point3::new((i % 10) as f64, (i / 10) as f64, 0.0)).collect();
        let idx = SpatialIndex::build(&lattice).unwrap();
        let (i, _) = idx.nearest(&Point3::new(4.5, 4.5, 0.0));
        assert_eq!(i, 44);
    }

    #[test]
    fn tree_matches_exhaustive_scan() {
        let pts = lcg_points(200, 1);
        let queries = lcg_points(50, 2);
        let idx = SpatialIndex::build(&pts).unwrap();
        for q in &queries {
            assert_eq!(idx.nearest(q), brute_nearest(&pts, q));
        }
    }

    #[test]
    fn knn_matches_exhaustive_scan() {
        let pts = lcg_points(300, 3);
        let idx = SpatialIndex::build(&pts).unwrap();
        for (c, q) in pts.iter().enumerate().step_by(7) {
            let got = idx.k_nearest(q, 30, Some(c));
            let mut all: Vec<(f64, usize)> = pts
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != c)
                .map(|(j, p)| ((p - q).norm_squared(), j))
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let want: Vec<(usize, f64)> = all[..30].iter().map(|&(d2, j)| (j, d2.sqrt())).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn two_point_neighbourhood() {
        let cloud = PointCloud::new(vec![Point3::zeros(), Point3::new(0.0, 3.0, 4.0)], "two");
        let lists = neighborhoods(&cloud, 100.0).unwrap();
        assert_eq!(lists[0].neighbor_indices, vec![1]);
        assert_eq!(lists[1].neighbor_indices, vec![0]);
        let want = 5.0 / 100f64.ln().sqrt();
        assert!((lists[0].sigma - want).abs() < 1e-15);
    }

    #[test]
    fn collinear_tie_rule() {
        let cloud = PointCloud::new(
            vec![Point3::zeros(), Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)],
            "line",
        );
        let lists = neighborhoods(&cloud, 50.0).unwrap();
        assert_eq!(lists[1].neighbor_indices, vec![0]);
    }

    #[test]
    fn neighbour_counts() {
        assert_eq!(neighbor_count(21, 5.0).unwrap(), 1);
        assert_eq!(neighbor_count(21, 6.0).unwrap(), 2);
        assert_eq!(neighbor_count(894, 5.0).unwrap(), 45);
        assert_eq!(neighbor_count(10, 100.0).unwrap(), 9);
        assert!(neighbor_count(10, 0.0).is_err());
        assert!(neighbor_count(10, 101.0).is_err());
        assert!(neighbor_count(1, 50.0).is_err());
    }

    #[test]
    fn coincident_neighbourhood_is_degenerate() {
        let cloud = PointCloud::new(vec![Point3::zeros(); 3], "dup");
        assert!(matches!(neighborhoods(&cloud, 50.0), Err(Error::DegenerateGeometry(_))));
    }
}
