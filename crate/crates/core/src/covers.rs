//! Colored multiscale covers.
//!
//! At scale `s` a [`ColoredCover`] is a family of point sets, each tagged with
//! a color, such that
//!
//! * every point lies in some member,
//! * members of the same color are at distance `> s/2` from each other,
//! * every closed ball `B(x, s)` lies inside a single member,
//! * every member has diameter `<= achieved_c * s`.
//!
//! Openness of members holds trivially on a finite space and is not checked.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{diameter_unchecked, Metric};
use crate::par;

/// Longest admissible scale window.
pub const MAX_WINDOW: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub points: Vec<usize>,
    pub color: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColoredCover {
    pub scale_index: i32,
    pub scale: f64,
    pub members: Vec<Member>,
    /// Largest member diameter divided by the scale.
    pub achieved_c: f64,
    pub color_count: usize,
}

impl ColoredCover {
    fn from_members<M: Metric + ?Sized>(m: &M, s: f64, members: Vec<Member>) -> Self {
        let diams = par::map_slice(&members, |b| diameter_unchecked(m, &b.points));
        let achieved_c = diams.into_iter().fold(0.0, f64::max) / s;
        let color_count = members.iter().map(|b| b.color + 1).max().unwrap_or(0);
        Self {
            scale_index: 0,
            scale: s,
            members,
            achieved_c,
            color_count,
        }
    }

    /// `membership[b][x]` is true iff point `x` lies in member `b`.
    pub fn membership(&self, n: usize) -> Vec<Vec<bool>> {
        self.members
            .iter()
            .map(|b| {
                let mut row = vec![false; n];
                for &p in &b.points {
                    row[p] = true;
                }
                row
            })
            .collect()
    }

    /// The single-member cover `{X}`.
    pub fn whole_space(n: usize, s: f64) -> Self {
        Self {
            scale_index: 0,
            scale: s,
            members: vec![Member {
                points: (0..n).collect(),
                color: 0,
            }],
            achieved_c: 0.0,
            color_count: 1,
        }
    }
}

fn check_scale(s: f64) -> Result<()> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::parameter(format!("cover scale must be positive, got {s}")));
    }
    Ok(())
}

/// Greedy net / Voronoi / inflate / color construction.
///
/// 1. Maximal `s`-separated net: scan points in index order, keep a point when
///    it is farther than `s` from every point kept so far.
/// 2. Voronoi cells by nearest net point, ties to the earlier net point.
/// 3. Inflate each cell to `{y : d(y, cell) <= s}`.
/// 4. Conflict graph: members at distance `<= s/2`.
/// 5. Greedy coloring in net order, lowest free color.
///
/// The result has `achieved_c <= 4`: cells have radius `<= s` around their net
/// point and inflation adds another `s`.
pub fn build_greedy_colored_cover<M: Metric + ?Sized>(m: &M, s: f64) -> Result<ColoredCover> {
    check_scale(s)?;
    let n = m.len();
    if n == 0 {
        return Err(Error::parameter("cannot cover an empty space"));
    }

    let mut net: Vec<usize> = vec![0];
    for p in 1..n {
        if net.iter().all(|&q| m.dist(p, q) > s) {
            net.push(p);
        }
    }

    let owner: Vec<usize> = par::map_range(n, |p| {
        let mut best = 0;
        for (k, &q) in net.iter().enumerate().skip(1) {
            if m.dist(p, q) < m.dist(p, net[best]) {
                best = k;
            }
        }
        best
    });
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); net.len()];
    for (p, &k) in owner.iter().enumerate() {
        cells[k].push(p);
    }

    let inflated: Vec<Vec<usize>> = par::map_slice(&cells, |cell| {
        (0..n).filter(|&y| cell.iter().any(|&x| m.dist(x, y) <= s)).collect()
    });

    let conflicts = conflict_graph(m, &inflated, s / 2.0);
    let mut colors: Vec<usize> = Vec::with_capacity(inflated.len());
    for (i, nbrs) in conflicts.iter().enumerate() {
        let used: BTreeSet<usize> = nbrs.iter().filter(|&&k| k < i).map(|&k| colors[k]).collect();
        let color = (0..).find(|c| !used.contains(c)).expect("unbounded colors");
        colors.push(color);
    }

    let members = inflated
        .into_iter()
        .zip(colors)
        .map(|(points, color)| Member { points, color })
        .collect();
    Ok(ColoredCover::from_members(m, s, members))
}

/// Adjacency of members at set distance `<= gap`.
fn conflict_graph<M: Metric + ?Sized>(m: &M, members: &[Vec<usize>], gap: f64) -> Vec<BTreeSet<usize>> {
    let n = m.len();
    let mut containing: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (b, pts) in members.iter().enumerate() {
        for &p in pts {
            containing[p].push(b);
        }
    }
    let pairs: Vec<Vec<(usize, usize)>> = par::map_range(n, |a| {
        let mut found = BTreeSet::new();
        for b in a..n {
            if m.dist(a, b) <= gap {
                for &u in &containing[a] {
                    for &v in &containing[b] {
                        if u != v {
                            found.insert((u.min(v), u.max(v)));
                        }
                    }
                }
            }
        }
        found.into_iter().collect()
    });
    let mut adj = vec![BTreeSet::new(); members.len()];
    for (u, v) in pairs.into_iter().flatten() {
        adj[u].insert(v);
        adj[v].insert(u);
    }
    adj
}

/// Window length and spacing of the explicit interval cover, in units of `s`.
const INTERVAL_WINDOW: f64 = 4.875;
const INTERVAL_STEP: f64 = 2.75;

/// Two-color cover of a subset of the line from one-dimensional coordinates.
///
/// Members are the points in closed windows `[a_m, a_m + 4.875 s]` with
/// `a_m = lo - 2s + 2.75 m s`, where `lo` is the first point of each run of
/// points with gaps at most `2s`, colored by the parity of `m` plus the run
/// index. Same-color
/// windows are `0.625 s` apart, and every `[x - s, x + s]` fits in a window,
/// so the cover is valid with `c <= 4.875` and exactly two colors. When the
/// whole set has diameter `<= s` the cover is `{X}`.
pub fn build_interval_cover<M: Metric + ?Sized>(m: &M, coords: &[f64], s: f64) -> Result<ColoredCover> {
    check_scale(s)?;
    let n = m.len();
    if coords.len() != n || n == 0 {
        return Err(Error::structural(format!(
            "interval cover needs one coordinate per point ({} for {n})",
            coords.len()
        )));
    }
    if m.diam() <= s {
        return Ok(ColoredCover::from_members(
            m,
            s,
            vec![Member {
                points: (0..n).collect(),
                color: 0,
            }],
        ));
    }
    // Points more than `2s` apart in the coordinate order never share a
    // member or a ball, so each run is covered on its own with windows
    // anchored at the run's first point. This keeps window indices small and
    // offsets exact even when `s` is far below the coordinate magnitudes.
    // The base color alternates between runs so isolated neighbors differ.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| coords[a].total_cmp(&coords[b]).then(a.cmp(&b)));
    let mut windows: BTreeMap<(usize, u64), Vec<usize>> = BTreeMap::new();
    let mut run = 0;
    let mut run_lo = coords[order[0]];
    for (i, &p) in order.iter().enumerate() {
        if i > 0 && coords[p] - coords[order[i - 1]] > 2.0 * s {
            run += 1;
            run_lo = coords[p];
        }
        let u = coords[p] - run_lo;
        let first = ((u + 2.0 * s - INTERVAL_WINDOW * s) / (INTERVAL_STEP * s)).floor().max(0.0) as u64;
        for k in first.saturating_sub(1)..=first + 3 {
            let a = -2.0 * s + INTERVAL_STEP * s * k as f64;
            if u >= a && u <= a + INTERVAL_WINDOW * s {
                windows.entry((run, k)).or_default().push(p);
            }
        }
    }
    let members = windows
        .into_iter()
        .map(|((run, k), mut points)| {
            points.sort_unstable();
            Member { points, color: ((k + run as u64) % 2) as usize }
        })
        .collect();
    Ok(ColoredCover::from_members(m, s, members))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum CoverViolation {
    EmptyMember { member: usize },
    PointOutOfRange { member: usize, point: usize },
    Uncovered { point: usize },
    /// Two same-color members closer than `s/2`, with the closest pair.
    Separation { first: usize, second: usize, color: usize, witness: [usize; 2], distance: f64 },
    /// No member contains the closed ball `B(point, s)`.
    BallNotContained { point: usize },
    DiameterExceedsBound { member: usize, diameter: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverReport {
    pub scale_index: i32,
    pub scale: f64,
    pub recomputed_c: f64,
    pub violations: Vec<CoverViolation>,
}

impl CoverReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every cover property and lists each violation with a witness.
pub fn verify_cover<M: Metric + ?Sized>(cover: &ColoredCover, m: &M) -> CoverReport {
    let n = m.len();
    let s = cover.scale;
    let mut violations = Vec::new();
    let mut usable = Vec::with_capacity(cover.members.len());
    for (b, member) in cover.members.iter().enumerate() {
        if member.points.is_empty() {
            violations.push(CoverViolation::EmptyMember { member: b });
        }
        match member.points.iter().find(|&&p| p >= n) {
            Some(&point) => violations.push(CoverViolation::PointOutOfRange { member: b, point }),
            None => usable.push(b),
        }
    }
    let membership: Vec<Vec<bool>> = {
        let mut rows = vec![vec![false; n]; cover.members.len()];
        for &b in &usable {
            for &p in &cover.members[b].points {
                rows[b][p] = true;
            }
        }
        rows
    };

    for p in 0..n {
        if !membership.iter().any(|row| row[p]) {
            violations.push(CoverViolation::Uncovered { point: p });
        }
    }

    let pairs: Vec<(usize, usize)> = usable
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| usable[i + 1..].iter().map(move |&b| (a, b)))
        .filter(|&(a, b)| cover.members[a].color == cover.members[b].color)
        .collect();
    let separation = par::map_slice(&pairs, |&(a, b)| {
        let mut closest = (f64::INFINITY, [0, 0]);
        for &p in &cover.members[a].points {
            for &q in &cover.members[b].points {
                let d = m.dist(p, q);
                if d < closest.0 {
                    closest = (d, [p, q]);
                }
            }
        }
        (closest.0 <= s / 2.0).then_some(CoverViolation::Separation {
            first: a,
            second: b,
            color: cover.members[a].color,
            witness: closest.1,
            distance: closest.0,
        })
    });
    violations.extend(separation.into_iter().flatten());

    let balls = par::map_range(n, |x| {
        let ball: Vec<usize> = (0..n).filter(|&y| m.dist(x, y) <= s).collect();
        let contained = membership
            .iter()
            .any(|row| row[x] && ball.iter().all(|&y| row[y]));
        (!contained).then_some(CoverViolation::BallNotContained { point: x })
    });
    violations.extend(balls.into_iter().flatten());

    let diams = par::map_slice(&usable, |&b| diameter_unchecked(m, &cover.members[b].points));
    let mut recomputed = 0.0f64;
    for (&b, &d) in usable.iter().zip(&diams) {
        recomputed = recomputed.max(d / s);
        if d > cover.achieved_c * s * (1.0 + 1e-12) {
            violations.push(CoverViolation::DiameterExceedsBound { member: b, diameter: d });
        }
    }

    CoverReport {
        scale_index: cover.scale_index,
        scale: s,
        recomputed_c: recomputed,
        violations,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CoverStrategy {
    /// [`build_greedy_colored_cover`], any space.
    #[default]
    Greedy,
    /// [`build_interval_cover`], spaces with one-dimensional coordinates.
    Interval,
}

impl CoverStrategy {
    /// Diameter constant the strategy guarantees for every scale.
    pub fn guaranteed_c(self) -> f64 {
        match self {
            CoverStrategy::Greedy => 4.0,
            CoverStrategy::Interval => INTERVAL_WINDOW,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyParams {
    pub r: f64,
    pub epsilon: f64,
    pub tail_tol: f64,
    pub strategy: CoverStrategy,
}

/// One verified cover per scale index in `[j_lo, j_hi]`.
///
/// Scales above `j_hi` would be `{X}` and contribute exactly zero to the
/// folding map; scales below `j_lo` are dropped, with `tail_bound` bounding
/// their total contribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverHierarchy {
    pub params: HierarchyParams,
    pub points: usize,
    /// `[j_lo, j_hi]`, absent for spaces of diameter zero.
    pub window: Option<[i32; 2]>,
    /// Ascending in scale index.
    pub covers: Vec<ColoredCover>,
    pub global_c: f64,
    pub global_k: usize,
    /// Smallest positive distance in the snowflake, the unit of `tail_tol`.
    pub min_snowflaked_dist: f64,
    /// Bound on the omitted scales `j < j_lo`.
    pub tail_bound: f64,
}

impl CoverHierarchy {
    pub fn cover(&self, j: i32) -> Option<&ColoredCover> {
        let [lo, hi] = self.window?;
        (lo..=hi).contains(&j).then(|| &self.covers[(j - lo) as usize])
    }
}

/// `r^(j eps)`, computed as `exp(j eps ln r)`.
pub fn scale_weight(r: f64, epsilon: f64, j: i32) -> f64 {
    (j as f64 * epsilon * r.ln()).exp()
}

/// Bound on `sum_{i <= j} r^(i eps) |phi^i(x) - phi^i(x0)|` with `|phi| <= k`.
pub fn tail_bound(r: f64, epsilon: f64, k: usize, j: i32) -> f64 {
    2.0 * k as f64 * scale_weight(r, epsilon, j) / (1.0 - r.powf(-epsilon))
}

/// Smallest `j` with `r^j >= diam`.
fn top_scale(r: f64, diam: f64) -> i32 {
    let mut j = (diam.ln() / r.ln()).ceil() as i32;
    while r.powi(j - 1) >= diam {
        j -= 1;
    }
    while r.powi(j) < diam {
        j += 1;
    }
    j
}

/// Builds and verifies covers from the top scale downwards until the
/// geometric tail drops below `tail_tol` times the smallest snowflaked
/// distance.
pub fn build_hierarchy(
    m: &crate::FiniteMetricSpace,
    params: HierarchyParams,
) -> Result<CoverHierarchy> {
    let HierarchyParams { r, epsilon, tail_tol, strategy } = params;
    if !(r >= 2.0 && r.is_finite()) {
        return Err(Error::parameter(format!("scale ratio must be a finite r >= 2, got {r}")));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::parameter(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    if !(tail_tol > 0.0 && tail_tol.is_finite()) {
        return Err(Error::parameter(format!("tail tolerance must be positive, got {tail_tol}")));
    }
    let coords: Option<Vec<f64>> = match strategy {
        CoverStrategy::Greedy => None,
        CoverStrategy::Interval => Some(
            m.coords()
                .filter(|c| c.iter().all(|row| row.len() == 1))
                .map(|c| c.iter().map(|row| row[0]).collect())
                .ok_or_else(|| Error::parameter("interval covers need one-dimensional coordinates"))?,
        ),
    };

    let n = m.len();
    let diam = m.diam();
    let empty = CoverHierarchy {
        params,
        points: n,
        window: None,
        covers: Vec::new(),
        global_c: 0.0,
        global_k: 1,
        min_snowflaked_dist: 0.0,
        tail_bound: 0.0,
    };
    if n <= 1 || diam == 0.0 {
        return Ok(empty);
    }
    let floor = m.min_positive_dist().expect("two distinct points").powf(epsilon) * tail_tol;

    let j_hi = top_scale(r, diam);
    let mut covers = Vec::new();
    let mut global_k = 1usize;
    let mut j = j_hi;
    loop {
        if covers.len() == MAX_WINDOW {
            return Err(Error::configuration(format!(
                "scale window exceeds {MAX_WINDOW} scales below j = {j_hi}; \
                 increase r or tail_tol (r = {r}, tail_tol = {tail_tol})"
            )));
        }
        let s = r.powi(j);
        let mut cover = match &coords {
            None => build_greedy_colored_cover(m, s)?,
            Some(xs) => build_interval_cover(m, xs, s)?,
        };
        cover.scale_index = j;
        let report = verify_cover(&cover, m);
        if !report.is_clean() {
            return Err(Error::structural(format!(
                "cover at scale {j} failed verification: {:?}",
                report.violations.first()
            )));
        }
        global_k = global_k.max(cover.color_count);
        covers.push(cover);
        if tail_bound(r, epsilon, global_k, j) < floor {
            break;
        }
        j -= 1;
    }
    covers.reverse();
    let global_c = covers.iter().map(|c| c.achieved_c).fold(0.0, f64::max);
    Ok(CoverHierarchy {
        window: Some([j, j_hi]),
        covers,
        global_c,
        global_k,
        min_snowflaked_dist: floor / tail_tol,
        tail_bound: tail_bound(r, epsilon, global_k, j - 1),
        ..empty
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::{generate, SpaceKind, SpaceRecipe};
    use crate::FiniteMetricSpace;

    fn line5() -> FiniteMetricSpace {
        generate(&SpaceRecipe::interval(5)).unwrap()
    }

    #[test]
    fn five_point_line_trace() {
        let cover = build_greedy_colored_cover(&line5(), 1.0).unwrap();
        let got: Vec<(Vec<usize>, usize)> = cover.members.iter().map(|b| (b.points.clone(), b.color)).collect();
        assert_eq!(
            got,
            vec![(vec![0, 1, 2], 0), (vec![1, 2, 3, 4], 1), (vec![3, 4], 0)]
        );
        assert_eq!(cover.color_count, 2);
        assert_eq!(cover.achieved_c, 3.0);
        assert!(verify_cover(&cover, &line5()).is_clean());
    }

    #[test]
    fn single_point_cover() {
        let m = generate(&SpaceRecipe::interval(1)).unwrap();
        let cover = build_greedy_colored_cover(&m, 0.3).unwrap();
        assert_eq!(cover.members, vec![Member { points: vec![0], color: 0 }]);
        assert_eq!(cover.color_count, 1);
    }

    #[test]
    fn large_scale_is_whole_space() {
        let m = line5();
        let cover = build_greedy_colored_cover(&m, 4.0).unwrap();
        assert_eq!(cover.members, vec![Member { points: (0..5).collect(), color: 0 }]);
        assert_eq!(cover.color_count, 1);
    }

    #[test]
    fn duplicate_member_breaks_separation() {
        let m = line5();
        let mut cover = build_greedy_colored_cover(&m, 1.0).unwrap();
        let dup = cover.members[0].clone();
        cover.members.push(dup);
        let report = verify_cover(&cover, &m);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, CoverViolation::Separation { first: 0, second: 3, distance, .. } if *distance == 0.0)));
    }

    #[test]
    fn missing_point_is_named() {
        let m = line5();
        let cover = ColoredCover::from_members(
            &m,
            10.0,
            vec![Member { points: vec![0, 1, 2, 3], color: 0 }],
        );
        let report = verify_cover(&cover, &m);
        assert!(report.violations.contains(&CoverViolation::Uncovered { point: 4 }));
    }

    #[test]
    fn interval_cover_is_two_colored_and_valid() {
        let m = generate(&SpaceRecipe::unit_interval(64)).unwrap();
        let xs: Vec<f64> = m.coords().unwrap().iter().map(|c| c[0]).collect();
        for s in [0.5, 0.1, 0.03, 1.0 / 63.0, 0.004] {
            let cover = build_interval_cover(&m, &xs, s).unwrap();
            let report = verify_cover(&cover, &m);
            assert!(report.is_clean(), "s = {s}: {:?}", report.violations);
            assert!(cover.color_count <= 2);
            assert!(cover.achieved_c <= CoverStrategy::Interval.guaranteed_c());
        }
        let top = build_interval_cover(&m, &xs, 1.0).unwrap();
        assert_eq!(top.members.len(), 1);
    }

    #[test]
    fn colors_settle_to_one_above_the_diameter() {
        let m = generate(&SpaceRecipe::grid(4)).unwrap();
        let d = m.diam();
        let mut last = usize::MAX;
        for s in [d, 1.5 * d, 3.0 * d] {
            let k = build_greedy_colored_cover(&m, s).unwrap().color_count;
            assert!(k <= last);
            last = k;
        }
        assert_eq!(last, 1);
    }

    #[test]
    fn hierarchy_window_on_unit_line() {
        let m = generate(&SpaceRecipe::unit_interval(256)).unwrap();
        let params = HierarchyParams {
            r: 462.0,
            epsilon: 0.5,
            tail_tol: 1e-3,
            strategy: CoverStrategy::Interval,
        };
        let h = build_hierarchy(&m, params).unwrap();
        // oracle: 2K r^(j/2) / (1 - r^(-1/2)) < 1e-3 * (1/255)^(1/2) first holds at j = -4
        assert_eq!(h.window, Some([-4, 0]));
        assert_eq!(h.global_k, 2);
        assert!(h.tail_bound < 1e-3 * h.min_snowflaked_dist);
        assert_eq!(h.cover(0).unwrap().members.len(), 1);
    }

    #[test]
    fn single_point_hierarchy_is_empty() {
        let m = generate(&SpaceRecipe::interval(1)).unwrap();
        let h = build_hierarchy(
            &m,
            HierarchyParams { r: 10.0, epsilon: 0.5, tail_tol: 1e-3, strategy: CoverStrategy::Greedy },
        )
        .unwrap();
        assert_eq!(h.window, None);
        assert!(h.covers.is_empty());
    }

    #[test]
    fn interval_cover_survives_tiny_scales() {
        let m = generate(&SpaceRecipe::interval(9)).unwrap();
        let coords: Vec<f64> = m.coords().unwrap().iter().map(|c| c[0]).collect();
        for s in [1e-3, 1e-12, 1e-20, 1e-40] {
            let cover = build_interval_cover(&m, &coords, s).unwrap();
            assert!(verify_cover(&cover, &m).is_clean(), "s = {s}");
            assert_eq!(cover.members.len(), 9);
        }
    }

    #[test]
    fn tiny_ratio_overflows_the_window() {
        let m = generate(&SpaceRecipe::new(SpaceKind::Cantor { level: 6 })).unwrap();
        let err = build_hierarchy(
            &m,
            HierarchyParams { r: 2.0, epsilon: 0.1, tail_tol: 1e-9, strategy: CoverStrategy::Greedy },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Configuration(_)));
    }

    #[test]
    fn top_scale_examples() {
        assert_eq!(top_scale(462.0, 1.0), 0);
        assert_eq!(top_scale(10.0, 10.0), 1);
        assert_eq!(top_scale(10.0, 10.5), 2);
        assert_eq!(top_scale(10.0, 0.05), -1);
    }
}
