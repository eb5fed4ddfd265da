//! Scale-ratio selection, bump functions and the folding map.
//!
//! For a cover hierarchy `{B^j}` with scale ratio `r`, the folding map is
//!
//! ```text
//! f(x) = sum_j r^(j eps) (phi^j(x) - phi^j(x0)),
//! phi^j(x) = sum_k (sum_{B in B^j_k} psi_B(x)) e_k,
//! psi_B(x) = min(1, r^-j dist(x, X \ B)),
//! ```
//!
//! with `e_0 = 0` and `e_1..e_{K-1}` the coordinate directions of `R^(K-1)`.
//! The sum runs over the hierarchy window; higher scales are `{X}` and vanish,
//! lower scales are bounded by the hierarchy's tail bound.

use serde::{Deserialize, Serialize};

use crate::covers::{scale_weight, ColoredCover, CoverHierarchy};
use crate::error::{Error, Result};
use crate::metric::{FiniteMetricSpace, Metric};
use crate::par;

/// Values of a map `X -> R^dim`, one row per point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointMap {
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
}

impl PointMap {
    pub fn new(dim: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(Error::structural(format!(
                "row {i} has {} values, expected {dim}",
                row.len()
            )));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::structural("map values must be finite"));
        }
        Ok(Self { dim, rows })
    }

    /// The identity map into the space's own plotting coordinates.
    pub fn from_coords(space: &FiniteMetricSpace) -> Result<Self> {
        let coords = space
            .coords()
            .ok_or_else(|| Error::parameter(format!("space '{}' has no coordinates", space.label())))?;
        let dim = coords.first().map_or(0, Vec::len);
        Self::new(dim, coords.to_vec())
    }

    /// Projection onto one coordinate axis.
    pub fn projection(space: &FiniteMetricSpace, axis: usize) -> Result<Self> {
        let full = Self::from_coords(space)?;
        if axis >= full.dim {
            return Err(Error::parameter(format!("axis {axis} out of range for dimension {}", full.dim)));
        }
        Ok(Self {
            dim: 1,
            rows: full.rows.iter().map(|r| vec![r[axis]]).collect(),
        })
    }

    pub fn constant(n: usize, value: Vec<f64>) -> Self {
        Self {
            dim: value.len(),
            rows: vec![value; n],
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Euclidean distance between the images of `i` and `j`.
    #[inline]
    pub fn image_dist(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .iter()
            .zip(&self.rows[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Diameter of the image of `subset`.
    pub fn image_diameter(&self, subset: &[usize]) -> f64 {
        let mut best = 0.0f64;
        for (a, &p) in subset.iter().enumerate() {
            for &q in &subset[a + 1..] {
                best = best.max(self.image_dist(p, q));
            }
        }
        best
    }
}

/// Image distances as a metric view (a pseudometric when the map is not
/// injective).
impl Metric for PointMap {
    fn len(&self) -> usize {
        self.rows.len()
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        self.image_dist(i, j)
    }
}

fn scale_condition_lhs(r: f64, epsilon: f64, c: f64) -> f64 {
    2.0 / (r.powf(epsilon) - 1.0) + 4.0 * c / (r.powf(1.0 - epsilon) - 1.0)
}

fn scale_condition_rhs(epsilon: f64) -> f64 {
    1.0 - 2f64.powf(-epsilon)
}

/// Margin below which a floating-point pass is treated as a tie.
const TIE_MARGIN: f64 = 1e-12;

/// Whether `2/(r^eps - 1) + 4c/(r^(1-eps) - 1) < 1 - 2^-eps` holds at `r`.
pub fn satisfies_scale_condition(r: f64, epsilon: f64, c: f64) -> bool {
    r > 1.0 && scale_condition_rhs(epsilon) - scale_condition_lhs(r, epsilon, c) > TIE_MARGIN
}

/// Largest `c` for which `r` satisfies the scale condition (may be negative
/// when `r` is too small for any `c`).
pub fn admissible_c(r: f64, epsilon: f64) -> f64 {
    (scale_condition_rhs(epsilon) - 2.0 / (r.powf(epsilon) - 1.0)) * (r.powf(1.0 - epsilon) - 1.0) / 4.0
}

/// Smallest integer `r >= 2` satisfying the scale condition for `(epsilon, c)`.
///
/// The left side decreases strictly in `r`, so the answer is found by
/// doubling and then bisecting. Near-ties (within `1e-12`) count as failures.
pub fn select_scale_ratio(epsilon: f64, c: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::parameter(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(c >= 1.0 && c.is_finite()) {
        return Err(Error::parameter(format!("cover constant c must be >= 1, got {c}")));
    }
    let ok = |r: u64| satisfies_scale_condition(r as f64, epsilon, c);
    if ok(2) {
        return Ok(2.0);
    }
    let mut lo = 2u64;
    let mut hi = 4u64;
    while !ok(hi) {
        lo = hi;
        hi = hi.checked_mul(2).filter(|h| *h <= 1 << 53).ok_or_else(|| {
            Error::parameter(format!("no representable scale ratio for epsilon = {epsilon}, c = {c}"))
        })?;
    }
    // invariant: !ok(lo), ok(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi as f64)
}

/// `psi_B(x) = min(1, r^-j dist(x, X \ B))`, with `dist(x, {}) = +inf`.
pub fn bump<M: Metric + ?Sized>(m: &M, member: &[usize], x: usize, r: f64, j: i32) -> f64 {
    let mut inside = vec![false; m.len()];
    for &p in member {
        inside[p] = true;
    }
    bump_with(m, &inside, x, r.powi(j))
}

fn bump_with<M: Metric + ?Sized>(m: &M, inside: &[bool], x: usize, scale: f64) -> f64 {
    if !inside[x] {
        return 0.0;
    }
    let to_complement = (0..m.len())
        .filter(|&y| !inside[y])
        .map(|y| m.dist(x, y))
        .fold(f64::INFINITY, f64::min);
    (to_complement / scale).min(1.0)
}

/// `phi^j` and color-class membership for every point at one scale.
#[derive(Clone, Debug)]
pub struct ScaleField {
    pub scale_index: i32,
    /// `phi[x]` in `R^dim`; coordinate `k - 1` collects the bumps of color `k`.
    pub phi: Vec<Vec<f64>>,
    /// `in_color[x][k]`: `x` lies in some member of color `k`.
    pub in_color: Vec<Vec<bool>>,
    /// `bump_sum[x][k] = sum_{B of color k} psi_B(x)`, including color 0.
    pub bump_sum: Vec<Vec<f64>>,
}

/// Evaluates `phi^j` for one cover into `R^dim`.
pub fn scale_field<M: Metric + ?Sized>(m: &M, cover: &ColoredCover, dim: usize) -> ScaleField {
    let n = m.len();
    let membership = cover.membership(n);
    let mut containing: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (b, member) in cover.members.iter().enumerate() {
        for &p in &member.points {
            containing[p].push(b);
        }
    }
    let k = cover.color_count;
    let per_point = par::map_range(n, |x| {
        let mut phi = vec![0.0; dim];
        let mut in_color = vec![false; k];
        let mut sums = vec![0.0; k];
        for &b in &containing[x] {
            let color = cover.members[b].color;
            let psi = bump_with(m, &membership[b], x, cover.scale);
            in_color[color] = true;
            sums[color] += psi;
            if color > 0 {
                phi[color - 1] += psi;
            }
        }
        (phi, in_color, sums)
    });
    let mut field = ScaleField {
        scale_index: cover.scale_index,
        phi: Vec::with_capacity(n),
        in_color: Vec::with_capacity(n),
        bump_sum: Vec::with_capacity(n),
    };
    for (phi, in_color, sums) in per_point {
        field.phi.push(phi);
        field.in_color.push(in_color);
        field.bump_sum.push(sums);
    }
    field
}

/// Scale fields for the whole window, ascending in scale index.
pub fn scale_fields(m: &FiniteMetricSpace, hierarchy: &CoverHierarchy) -> Vec<ScaleField> {
    let dim = hierarchy.global_k.saturating_sub(1);
    hierarchy.covers.iter().map(|c| scale_field(m, c, dim)).collect()
}

/// `phi^j(x)`. Scales above the window are `{X}` and give the zero vector.
pub fn phi(m: &FiniteMetricSpace, x: usize, j: i32, hierarchy: &CoverHierarchy) -> Result<Vec<f64>> {
    let dim = hierarchy.global_k.saturating_sub(1);
    if x >= m.len() {
        return Err(Error::structural(format!("point {x} outside the space")));
    }
    let Some([lo, hi]) = hierarchy.window else {
        return Ok(vec![0.0; dim]);
    };
    if j > hi {
        return Ok(vec![0.0; dim]);
    }
    if j < lo {
        return Err(Error::parameter(format!("scale {j} lies below the window [{lo}, {hi}]")));
    }
    let cover = hierarchy.cover(j).expect("in window");
    let membership = cover.membership(m.len());
    let mut out = vec![0.0; dim];
    for (b, member) in cover.members.iter().enumerate() {
        if member.color > 0 && membership[b][x] {
            out[member.color - 1] += bump_with(m, &membership[b], x, cover.scale);
        }
    }
    Ok(out)
}

/// The evaluated folding map and the parameters that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldingMap {
    pub epsilon: f64,
    pub r: f64,
    pub base_point: usize,
    pub target_dim: usize,
    pub window: Option<[i32; 2]>,
    pub global_c: f64,
    pub global_k: usize,
    /// Largest cover constant for which `r` satisfies the scale condition.
    pub admissible_c: f64,
    pub tail_tol: f64,
    pub tail_bound: f64,
    /// `K/(1 - r^-eps) + 2 K r^eps / (1 - r^(eps-1))`.
    pub certified_lip_bound: f64,
    pub values: PointMap,
}

/// Upper bound on the Lipschitz constant of `f: (X, d^eps) -> R^(K-1)`.
///
/// Split the sum at `r^j0 <= d(x,y) < r^(j0+1)`: scales `j <= j0` contribute
/// at most `K r^(j eps)` each, scales `j > j0` at most `2K r^-j d(x,y)`; the
/// two geometric series give the two terms.
pub fn certified_lip_bound(r: f64, epsilon: f64, k: usize) -> f64 {
    let k = k as f64;
    k / (1.0 - r.powf(-epsilon)) + 2.0 * k * r.powf(epsilon) / (1.0 - r.powf(epsilon - 1.0))
}

/// Sums the scale fields of `hierarchy` into the folding map based at
/// `base_point`. Deterministic: per point, scales are added in ascending
/// order and colors/members in index order.
pub fn build_folding_map(
    m: &FiniteMetricSpace,
    hierarchy: &CoverHierarchy,
    base_point: usize,
) -> Result<FoldingMap> {
    let params = hierarchy.params;
    let epsilon = params.epsilon;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::parameter(format!(
            "the folding map needs a proper snowflake, epsilon in (0, 1); got {epsilon}"
        )));
    }
    if hierarchy.points != m.len() {
        return Err(Error::Mismatch(format!(
            "hierarchy covers {} points, space has {}",
            hierarchy.points,
            m.len()
        )));
    }
    if base_point >= m.len() {
        return Err(Error::parameter(format!(
            "base point {base_point} outside a space of {} points",
            m.len()
        )));
    }
    if hierarchy.window.is_some() && !(hierarchy.tail_bound <= params.tail_tol * hierarchy.min_snowflaked_dist) {
        return Err(Error::configuration(format!(
            "omitted scales contribute up to {:.3e}, above the tolerance {:.3e}; widen the window",
            hierarchy.tail_bound,
            params.tail_tol * hierarchy.min_snowflaked_dist
        )));
    }

    let dim = hierarchy.global_k.saturating_sub(1);
    let fields = scale_fields(m, hierarchy);
    let weights: Vec<f64> = fields
        .iter()
        .map(|f| scale_weight(params.r, epsilon, f.scale_index))
        .collect();
    let rows = par::map_range(m.len(), |x| {
        let mut value = vec![0.0; dim];
        for (field, w) in fields.iter().zip(&weights) {
            for (k, v) in value.iter_mut().enumerate() {
                *v += w * (field.phi[x][k] - field.phi[base_point][k]);
            }
        }
        value
    });

    Ok(FoldingMap {
        epsilon,
        r: params.r,
        base_point,
        target_dim: dim,
        window: hierarchy.window,
        global_c: hierarchy.global_c,
        global_k: hierarchy.global_k,
        admissible_c: admissible_c(params.r, epsilon),
        tail_tol: params.tail_tol,
        tail_bound: hierarchy.tail_bound,
        certified_lip_bound: certified_lip_bound(params.r, epsilon, hierarchy.global_k),
        values: PointMap::new(dim, rows)?,
    })
}

/// One failed instance of the color-capture property.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureViolation {
    pub x: usize,
    pub y: usize,
    pub scale_index: i32,
    pub color: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CaptureReport {
    pub tuples: usize,
    /// Tuples meeting all four hypotheses.
    pub eligible: usize,
    pub violations: Vec<CaptureViolation>,
}

/// Exhaustive check of the color-capture property.
///
/// For every `(x, y, j0, k)` with `k >= 1` and `s = |f(x) - f(y)|`, whenever
/// `d(x,y) <= 2 c r^j0`, `r^(j0 eps) > 2^eps s` and the color-`k` bumps at `x`
/// sum to exactly 1, the point `y` must lie in some color-`k` member at
/// scale `j0`.
pub fn color_capture_sweep(
    m: &FiniteMetricSpace,
    hierarchy: &CoverHierarchy,
    map: &FoldingMap,
    c: f64,
) -> CaptureReport {
    let n = m.len();
    let fields = scale_fields(m, hierarchy);
    let r = hierarchy.params.r;
    let eps = hierarchy.params.epsilon;
    let two_eps = 2f64.powf(eps);
    let per_x = par::map_range(n, |x| {
        let mut report = CaptureReport::default();
        for field in &fields {
            let j0 = field.scale_index;
            let reach = 2.0 * c * r.powi(j0);
            let weight = scale_weight(r, eps, j0);
            let colors = field.bump_sum[x].len();
            for k in 1..colors {
                let full = field.bump_sum[x][k] == 1.0;
                for y in 0..n {
                    report.tuples += 1;
                    let s = map.values.image_dist(x, y);
                    if full && m.dist(x, y) <= reach && weight > two_eps * s {
                        report.eligible += 1;
                        if !field.in_color[y][k] {
                            report.violations.push(CaptureViolation { x, y, scale_index: j0, color: k });
                        }
                    }
                }
            }
        }
        report
    });
    per_x.into_iter().fold(CaptureReport::default(), |mut acc, r| {
        acc.tuples += r.tuples;
        acc.eligible += r.eligible;
        acc.violations.extend(r.violations);
        acc
    })
}
