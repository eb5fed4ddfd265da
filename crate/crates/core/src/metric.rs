//! Finite metric spaces, snowflake views and r-path connectivity.

use serde::{Deserialize, Serialize};

use crate::dsu::DisjointSet;
use crate::error::{Error, Result};
use crate::par;

/// Read access to a finite distance matrix.
///
/// Implemented by [`FiniteMetricSpace`] itself and by the derived views
/// ([`SnowflakeView`], pullback matrices), so every algorithm in the crate is
/// written once against this trait.
pub trait Metric: Sync {
    fn len(&self) -> usize;

    fn dist(&self, i: usize, j: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest pairwise distance; 0 for spaces with fewer than two points.
    fn diam(&self) -> f64 {
        let n = self.len();
        par::map_range(n, |i| (i + 1..n).map(|j| self.dist(i, j)).fold(0.0, f64::max))
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// Smallest distance between distinct points, `None` below two points.
    fn min_positive_dist(&self) -> Option<f64> {
        let n = self.len();
        par::map_range(n, |i| {
            (i + 1..n)
                .map(|j| self.dist(i, j))
                .filter(|d| *d > 0.0)
                .fold(f64::INFINITY, f64::min)
        })
        .into_iter()
        .reduce(f64::min)
        .filter(|d| d.is_finite())
    }
}

/// A finite point set `0..N` with a full distance matrix.
///
/// `mesh` is the resolution `h` at which the set is treated as connected:
/// "continua" are modelled as h-connected subsets throughout the crate.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMetricSpace {
    label: String,
    mesh: f64,
    n: usize,
    dist: Vec<f64>,
    coords: Option<Vec<Vec<f64>>>,
}

impl FiniteMetricSpace {
    /// Builds a space from a row-major matrix.
    ///
    /// Only structural problems are rejected here (ragged or non-square rows,
    /// negative or non-finite entries, a non-positive mesh). Metric axioms are
    /// checked separately by [`validate_metric`].
    pub fn new(label: impl Into<String>, mesh: f64, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut dist = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::structural(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            dist.extend(row);
        }
        Self::from_flat(label, mesh, n, dist)
    }

    pub fn from_flat(label: impl Into<String>, mesh: f64, n: usize, dist: Vec<f64>) -> Result<Self> {
        if dist.len() != n * n {
            return Err(Error::structural(format!(
                "matrix has {} entries, expected {n}x{n}",
                dist.len()
            )));
        }
        if let Some(pos) = dist.iter().position(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::structural(format!(
                "entry ({}, {}) = {} is negative or not finite",
                pos / n.max(1),
                pos % n.max(1),
                dist[pos]
            )));
        }
        if !(mesh.is_finite() && mesh > 0.0) {
            return Err(Error::structural(format!("mesh must be positive, got {mesh}")));
        }
        Ok(Self {
            label: label.into(),
            mesh,
            n,
            dist,
            coords: None,
        })
    }

    /// Builds a space from a distance function evaluated on all pairs.
    pub fn from_fn<F>(label: impl Into<String>, mesh: f64, n: usize, f: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> f64 + Sync + Send,
    {
        let rows = par::map_range(n, |i| (0..n).map(|j| if i == j { 0.0 } else { f(i, j) }).collect::<Vec<_>>());
        Self::from_flat(label, mesh, n, rows.into_iter().flatten().collect())
    }

    /// Attaches plotting coordinates (one vector per point).
    pub fn with_coords(mut self, coords: Vec<Vec<f64>>) -> Result<Self> {
        if coords.len() != self.n {
            return Err(Error::structural(format!(
                "{} coordinate rows for {} points",
                coords.len(),
                self.n
            )));
        }
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn coords(&self) -> Option<&[Vec<f64>]> {
        self.coords.as_deref()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.dist[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// The snowflake `(X, d^epsilon)`, `0 < epsilon <= 1`.
    pub fn snowflake(&self, epsilon: f64) -> Result<SnowflakeView<'_>> {
        SnowflakeView::new(self, epsilon)
    }

    /// True when the whole space is one h-component at its declared mesh.
    pub fn is_mesh_connected(&self) -> bool {
        self.n <= 1 || components_all(self, self.mesh).len() == 1
    }

    /// Adjacency lists of the graph joining points at distance `<= mesh`,
    /// neighbours in increasing index order.
    pub fn mesh_graph(&self) -> Vec<Vec<usize>> {
        let h = self.mesh;
        par::map_range(self.n, |i| (0..self.n).filter(|&j| j != i && self.dist(i, j) <= h).collect())
    }
}

impl Metric for FiniteMetricSpace {
    fn len(&self) -> usize {
        self.n
    }

    #[inline]
    fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }
}

/// `(X, d^epsilon)` over a borrowed base space, with the powers precomputed.
#[derive(Clone, Debug)]
pub struct SnowflakeView<'a> {
    base: &'a FiniteMetricSpace,
    epsilon: f64,
    dist: Vec<f64>,
}

impl<'a> SnowflakeView<'a> {
    pub fn new(base: &'a FiniteMetricSpace, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::parameter(format!(
                "snowflake exponent must lie in (0, 1], got {epsilon}"
            )));
        }
        let dist = if epsilon == 1.0 {
            base.dist.clone()
        } else {
            base.dist.iter().map(|d| d.powf(epsilon)).collect()
        };
        Ok(Self { base, epsilon, dist })
    }

    pub fn base(&self) -> &'a FiniteMetricSpace {
        self.base
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

impl Metric for SnowflakeView<'_> {
    fn len(&self) -> usize {
        self.base.n
    }

    #[inline]
    fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.base.n + j]
    }
}

/// Outcome of [`validate_metric`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Absolute slack used for the triangle check (`1e-9 * diam`).
    pub tolerance: f64,
    /// Triples `(i, j, k)` with `d(i,k) > d(i,j) + d(j,k) + tolerance`.
    /// At most [`ValidationReport::MAX_LISTED`] are listed.
    pub triangle_violations: Vec<[usize; 3]>,
    pub triangle_violation_count: usize,
    pub asymmetric_pairs: Vec<[usize; 2]>,
    pub nonzero_diagonal: Vec<usize>,
    /// Distinct points at distance 0. Reported, but they only break strict
    /// positivity (a pseudometric still validates).
    pub coincident_pairs: Vec<[usize; 2]>,
}

impl ValidationReport {
    pub const MAX_LISTED: usize = 10_000;

    /// Symmetric, zero diagonal, triangle inequality within tolerance.
    pub fn is_valid(&self) -> bool {
        self.triangle_violation_count == 0 && self.asymmetric_pairs.is_empty() && self.nonzero_diagonal.is_empty()
    }

    /// [`is_valid`](Self::is_valid) and additionally no coincident pairs.
    pub fn is_strict_metric(&self) -> bool {
        self.is_valid() && self.coincident_pairs.is_empty()
    }
}

/// Checks the metric axioms with absolute tolerance `1e-9 * diam`.
pub fn validate_metric<M: Metric + ?Sized>(m: &M) -> ValidationReport {
    let n = m.len();
    let tol = 1e-9 * m.diam();
    let mut report = ValidationReport {
        tolerance: tol,
        ..Default::default()
    };
    for i in 0..n {
        if m.dist(i, i) != 0.0 {
            report.nonzero_diagonal.push(i);
        }
        for j in i + 1..n {
            if (m.dist(i, j) - m.dist(j, i)).abs() > tol {
                report.asymmetric_pairs.push([i, j]);
            }
            if m.dist(i, j) == 0.0 {
                report.coincident_pairs.push([i, j]);
            }
        }
    }
    let per_row = par::map_range(n, |i| {
        let mut found = Vec::new();
        let mut count = 0usize;
        for k in 0..n {
            if k == i {
                continue;
            }
            let dik = m.dist(i, k);
            for j in 0..n {
                if j == i || j == k {
                    continue;
                }
                if dik > m.dist(i, j) + m.dist(j, k) + tol {
                    count += 1;
                    if found.len() < ValidationReport::MAX_LISTED {
                        found.push([i, j, k]);
                    }
                }
            }
        }
        (count, found)
    });
    for (count, found) in per_row {
        report.triangle_violation_count += count;
        let room = ValidationReport::MAX_LISTED - report.triangle_violations.len();
        report.triangle_violations.extend(found.into_iter().take(room));
    }
    report
}

fn check_ids<M: Metric + ?Sized>(m: &M, subset: &[usize]) -> Result<()> {
    if let Some(bad) = subset.iter().find(|&&p| p >= m.len()) {
        return Err(Error::structural(format!(
            "point id {bad} outside a space of {} points",
            m.len()
        )));
    }
    Ok(())
}

/// Partitions `subset` into its r-components: two points share a component
/// iff an r-path inside `subset` joins them.
///
/// Components are returned sorted internally and ordered by smallest member.
pub fn r_components<M: Metric + ?Sized>(m: &M, subset: &[usize], r: f64) -> Result<Vec<Vec<usize>>> {
    if subset.is_empty() {
        return Err(Error::parameter("r_components needs a non-empty subset"));
    }
    if !(r >= 0.0) {
        return Err(Error::parameter(format!("r must be non-negative, got {r}")));
    }
    check_ids(m, subset)?;
    let mut pts = subset.to_vec();
    pts.sort_unstable();
    pts.dedup();
    Ok(group_components(m, &pts, r))
}

fn group_components<M: Metric + ?Sized>(m: &M, pts: &[usize], r: f64) -> Vec<Vec<usize>> {
    let mut dsu = DisjointSet::new(pts.len());
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            if m.dist(pts[a], pts[b]) <= r {
                dsu.union(a, b);
            }
        }
    }
    let mut by_root: Vec<Option<usize>> = vec![None; pts.len()];
    let mut out: Vec<Vec<usize>> = Vec::new();
    for a in 0..pts.len() {
        let root = dsu.find(a);
        match by_root[root] {
            Some(slot) => out[slot].push(pts[a]),
            None => {
                by_root[root] = Some(out.len());
                out.push(vec![pts[a]]);
            }
        }
    }
    out
}

/// r-components of the whole space.
pub fn components_all<M: Metric + ?Sized>(m: &M, r: f64) -> Vec<Vec<usize>> {
    let pts: Vec<usize> = (0..m.len()).collect();
    if pts.is_empty() {
        return Vec::new();
    }
    group_components(m, &pts, r)
}

/// Largest pairwise distance within `subset`; 0 for singletons.
pub fn diameter<M: Metric + ?Sized>(m: &M, subset: &[usize]) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::parameter("diameter of an empty set"));
    }
    check_ids(m, subset)?;
    Ok(diameter_unchecked(m, subset))
}

pub(crate) fn diameter_unchecked<M: Metric + ?Sized>(m: &M, subset: &[usize]) -> f64 {
    let mut best = 0.0f64;
    for (a, &p) in subset.iter().enumerate() {
        for &q in &subset[a + 1..] {
            best = best.max(m.dist(p, q));
        }
    }
    best
}

/// `dist(x, E)` for `E = {y : member(y)}`; `+inf` when `E` is empty.
pub fn dist_to_set<M, F>(m: &M, x: usize, member: F) -> f64
where
    M: Metric + ?Sized,
    F: Fn(usize) -> bool,
{
    (0..m.len())
        .filter(|&y| member(y))
        .map(|y| m.dist(x, y))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> FiniteMetricSpace {
        let n = points.len();
        FiniteMetricSpace::from_fn("line", 1.0, n, |i, j| (points[i] - points[j]).abs()).unwrap()
    }

    #[test]
    fn one_point_space_is_valid() {
        let m = line(&[0.0]);
        let r = validate_metric(&m);
        assert!(r.is_valid());
        assert!(r.triangle_violations.is_empty());
    }

    #[test]
    fn line_metric_is_valid() {
        assert!(validate_metric(&line(&[0.0, 1.0, 2.0])).is_strict_metric());
    }

    #[test]
    fn broken_triangle_is_reported() {
        let m = FiniteMetricSpace::new(
            "bad",
            1.0,
            vec![vec![0.0, 1.0, 5.0], vec![1.0, 0.0, 1.0], vec![5.0, 1.0, 0.0]],
        )
        .unwrap();
        let r = validate_metric(&m);
        assert!(!r.is_valid());
        assert!(r.triangle_violations.contains(&[0, 1, 2]));
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(
            FiniteMetricSpace::new("x", 1.0, vec![vec![0.0, 1.0], vec![1.0]]),
            Err(Error::Structural(_))
        ));
        assert!(matches!(
            FiniteMetricSpace::new("x", 1.0, vec![vec![0.0, -1.0], vec![-1.0, 0.0]]),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn coincident_points_do_not_break_validity() {
        let m = FiniteMetricSpace::new("p", 1.0, vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let r = validate_metric(&m);
        assert!(r.is_valid());
        assert!(!r.is_strict_metric());
    }

    #[test]
    fn snowflake_values() {
        let m = line(&[0.0, 4.0, 9.0]);
        let s = m.snowflake(0.5).unwrap();
        assert_eq!(s.dist(0, 1), 2.0);
        assert_eq!(s.dist(0, 2), 3.0);
        let id = m.snowflake(1.0).unwrap();
        assert_eq!(id.dist(1, 2), 5.0);
        assert!(matches!(m.snowflake(0.0), Err(Error::Parameter(_))));
        assert!(matches!(m.snowflake(1.5), Err(Error::Parameter(_))));
    }

    #[test]
    fn components_on_a_gapped_line() {
        let m = line(&[0.0, 1.0, 2.0, 10.0]);
        let all = [0, 1, 2, 3];
        assert_eq!(r_components(&m, &all, 1.0).unwrap(), vec![vec![0, 1, 2], vec![3]]);
        assert_eq!(r_components(&m, &all, 8.0).unwrap(), vec![vec![0, 1, 2, 3]]);
        assert_eq!(r_components(&m, &[2], 0.0).unwrap(), vec![vec![2]]);
        assert!(matches!(r_components(&m, &[7], 1.0), Err(Error::Structural(_))));
    }

    #[test]
    fn diameters() {
        let m = line(&[0.0, 1.0, 4.0, 10.0]);
        assert_eq!(diameter(&m, &[2]).unwrap(), 0.0);
        assert_eq!(diameter(&m, &[0, 3]).unwrap(), 10.0);
        let s = m.snowflake(0.5).unwrap();
        assert_eq!(diameter(&s, &[0, 1, 2]).unwrap(), 2.0);
        assert!(matches!(diameter(&m, &[]), Err(Error::Parameter(_))));
    }

    #[test]
    fn distance_to_empty_set_is_infinite() {
        let m = line(&[0.0, 1.0]);
        assert_eq!(dist_to_set(&m, 0, |_| false), f64::INFINITY);
        assert_eq!(dist_to_set(&m, 0, |y| y == 1), 1.0);
    }
}
