//! The pullback metric of a map on a small graph space, the factorization
//! through it, and empirical distortion profiles.
//!
//! For `f: X -> R^m` on an h-connected space,
//!
//! ```text
//! d_f(x, y) = min { diam f(K) : K h-connected, x, y in K }.
//! ```
//!
//! On at most [`EXACT_LIMIT`] points the minimum is found by enumerating every
//! subset; larger spaces get the interval `[|f(x) - f(y)|, diam f(P)]` with
//! `P` a fewest-hop h-path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::PointMap;
use crate::error::{Error, Result};
use crate::lightness::{bits, connected_subsets, mask_connected, sampled_connected_sets, EXHAUSTIVE_PROFILE_LIMIT};
use crate::metric::{diameter_unchecked, validate_metric, FiniteMetricSpace, Metric};
use crate::par;
use crate::spaces::bfs_tree;

/// Largest space handled by exhaustive subset search.
pub const EXACT_LIMIT: usize = 16;

/// Absolute tolerance for the equalities checked by [`factorization_check`].
pub const FACTOR_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PullbackMode {
    Exact,
    Bounds,
}

/// `d_f` on every pair, with the connected set realising (or bounding) it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PullbackMetric {
    pub mode: PullbackMode,
    /// Exact `d_f` in exact mode, the upper bound in bounds mode.
    pub distances: Vec<Vec<f64>>,
    /// `|f(x) - f(y)|`; present in bounds mode only.
    pub lower: Option<Vec<Vec<f64>>>,
    /// One entry per pair `x < y`, in row-major order.
    pub witnesses: Vec<PairWitness>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairWitness {
    pub x: usize,
    pub y: usize,
    pub set: Vec<usize>,
}

impl Metric for PullbackMetric {
    fn len(&self) -> usize {
        self.distances.len()
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        self.distances[i][j]
    }
}

impl PullbackMetric {
    pub fn witness(&self, x: usize, y: usize) -> Option<&PairWitness> {
        let (x, y) = (x.min(y), x.max(y));
        let n = self.len();
        if x == y || y >= n {
            return None;
        }
        // pairs before row x: sum_{i<x} (n - 1 - i)
        let idx = x * (2 * n - x - 1) / 2 + (y - x - 1);
        self.witnesses.get(idx)
    }

    /// Re-ingests the exact matrix as a space. The mesh is the largest `d_f`
    /// across an h-edge of `base`, so h-connected sets stay connected.
    pub fn to_space(&self, base: &FiniteMetricSpace) -> Result<FiniteMetricSpace> {
        if self.mode != PullbackMode::Exact {
            return Err(Error::parameter("only exact pullback matrices can be re-ingested"));
        }
        let adj = base.mesh_graph();
        let mesh = adj
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.distances[i][j])
            .fold(0.0, f64::max);
        if mesh == 0.0 && self.len() > 1 {
            return Err(Error::structural("the pullback metric collapses the space to a point"));
        }
        let mesh = if mesh > 0.0 { mesh } else { 1.0 };
        FiniteMetricSpace::new(format!("pullback of {}", base.label()), mesh, self.distances.clone())
    }
}

fn check_inputs(m: &FiniteMetricSpace, values: &PointMap) -> Result<()> {
    if values.len() != m.len() {
        return Err(Error::Mismatch(format!(
            "map has {} rows, space has {} points",
            values.len(),
            m.len()
        )));
    }
    if !m.is_mesh_connected() {
        return Err(Error::structural(format!("space is disconnected at mesh {}", m.mesh())));
    }
    Ok(())
}

/// Per-subset tables for exact mode.
struct SubsetTables {
    connected: Vec<bool>,
    image_diam: Vec<f64>,
}

fn subset_tables(m: &FiniteMetricSpace, values: &PointMap) -> SubsetTables {
    let n = m.len();
    let adj_masks: Vec<u32> = m
        .mesh_graph()
        .iter()
        .map(|a| a.iter().fold(0u32, |acc, &v| acc | 1 << v))
        .collect();
    let total = 1usize << n;
    let connected = par::map_range(total, |s| s != 0 && mask_connected(s as u32, &adj_masks));
    let mut image_diam = vec![0.0f64; total];
    for s in 1..total {
        let top = usize::BITS - 1 - s.leading_zeros();
        let rest = s & !(1 << top);
        let mut d = image_diam[rest];
        for u in bits(rest as u32) {
            d = d.max(values.image_dist(u, top as usize));
        }
        image_diam[s] = d;
    }
    SubsetTables { connected, image_diam }
}

/// Computes `d_f`, exactly for `N <= 16` and as bounds otherwise.
///
/// `bounds` forces bounds mode; without it a space above the exact limit is a
/// size-cap error. Exact witnesses are the minimizing sets with the smallest
/// bitmask encoding.
pub fn pullback_metric(m: &FiniteMetricSpace, values: &PointMap, bounds: bool) -> Result<PullbackMetric> {
    check_inputs(m, values)?;
    let n = m.len();
    if !bounds && n > EXACT_LIMIT {
        return Err(Error::SizeCap(format!(
            "exact pullback is limited to {EXACT_LIMIT} points, space has {n}; use bounds mode"
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|x| (x + 1..n).map(move |y| (x, y))).collect();
    let mut distances = vec![vec![0.0; n]; n];

    if bounds {
        let adj = m.mesh_graph();
        // fewest-hop paths from each source, with image diameter along the path
        let per_source = par::map_range(n, |x| {
            let tree = bfs_tree(&adj, x);
            let mut path_diam = vec![0.0f64; n];
            for &v in tree.order.iter().skip(1) {
                let mut d = path_diam[tree.parent[v]];
                let mut u = v;
                while tree.parent[u] != u {
                    u = tree.parent[u];
                    d = d.max(values.image_dist(u, v));
                }
                path_diam[v] = d;
            }
            (tree, path_diam)
        });
        let mut lower = vec![vec![0.0; n]; n];
        let mut witnesses = Vec::with_capacity(pairs.len());
        for &(x, y) in &pairs {
            let (tree, path_diam) = &per_source[x];
            distances[x][y] = path_diam[y];
            distances[y][x] = path_diam[y];
            let gap = values.image_dist(x, y);
            lower[x][y] = gap;
            lower[y][x] = gap;
            let mut set = tree.path_to(y).expect("connected");
            set.sort_unstable();
            witnesses.push(PairWitness { x, y, set });
        }
        return Ok(PullbackMetric {
            mode: PullbackMode::Bounds,
            distances,
            lower: Some(lower),
            witnesses,
        });
    }

    let tables = subset_tables(m, values);
    let best = par::map_slice(&pairs, |&(x, y)| {
        let need = (1usize << x) | (1usize << y);
        let mut best = (f64::INFINITY, 0usize);
        for s in (need..tables.connected.len()).filter(|s| s & need == need) {
            if tables.connected[s] && tables.image_diam[s] < best.0 {
                best = (tables.image_diam[s], s);
            }
        }
        best
    });
    let mut witnesses = Vec::with_capacity(pairs.len());
    for (&(x, y), &(d, set)) in pairs.iter().zip(&best) {
        distances[x][y] = d;
        distances[y][x] = d;
        witnesses.push(PairWitness { x, y, set: bits(set as u32) });
    }
    Ok(PullbackMetric {
        mode: PullbackMode::Exact,
        distances,
        lower: None,
        witnesses,
    })
}

/// Outcome of checking `X -> (X, d_f) -> R^m` on an exact-size space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationReport {
    pub points: usize,
    pub connected_sets: usize,
    /// `d_f` satisfies the metric axioms (coincident points allowed).
    pub metric_valid: bool,
    /// Largest `|diam_f(J) - diam f(J)|` over h-connected `J`.
    pub max_diameter_gap: f64,
    pub diameter_violations: Vec<Vec<usize>>,
    /// Pairs with `|f(x) - f(y)| > d_f(x, y)`.
    pub lipschitz_violations: Vec<[usize; 2]>,
    /// Largest `diam_f(witness) / d_f(x, y)` over pairs with `d_f > 0`.
    pub turning_constant: f64,
    /// `f` is constant on pairs at `d_f` distance zero, so it descends to
    /// `(X, d_f)` and the two factors compose back to `f`.
    pub factors_compose: bool,
}

impl FactorizationReport {
    pub fn passed(&self) -> bool {
        self.metric_valid
            && self.diameter_violations.is_empty()
            && self.lipschitz_violations.is_empty()
            && self.turning_constant <= 1.0 + FACTOR_TOL
            && self.factors_compose
    }
}

const MAX_LISTED: usize = 100;

/// Checks the factorization through the pullback metric by enumeration:
/// `diam_f(J) = diam f(J)` for every h-connected `J`, `f` is 1-Lipschitz on
/// `(X, d_f)`, and `(X, d_f)` has bounded turning with constant 1.
pub fn factorization_check(m: &FiniteMetricSpace, values: &PointMap) -> Result<FactorizationReport> {
    let pb = pullback_metric(m, values, false)?;
    let n = m.len();
    let tables = subset_tables(m, values);

    let mut pull_diam = vec![0.0f64; 1 << n];
    for s in 1..pull_diam.len() {
        let top = usize::BITS - 1 - s.leading_zeros();
        let rest = s & !(1 << top);
        let mut d = pull_diam[rest];
        for u in bits(rest as u32) {
            d = d.max(pb.distances[u][top as usize]);
        }
        pull_diam[s] = d;
    }

    let mut connected_sets = 0;
    let mut max_gap = 0.0f64;
    let mut diameter_violations = Vec::new();
    for s in 1..pull_diam.len() {
        if !tables.connected[s] {
            continue;
        }
        connected_sets += 1;
        let gap = (pull_diam[s] - tables.image_diam[s]).abs();
        max_gap = max_gap.max(gap);
        if gap > FACTOR_TOL && diameter_violations.len() < MAX_LISTED {
            diameter_violations.push(bits(s as u32));
        }
    }

    let mut lipschitz_violations = Vec::new();
    let mut turning = 0.0f64;
    for w in &pb.witnesses {
        let d = pb.distances[w.x][w.y];
        if values.image_dist(w.x, w.y) > d + FACTOR_TOL {
            lipschitz_violations.push([w.x, w.y]);
        }
        if d > 0.0 {
            turning = turning.max(diameter_unchecked(&pb, &w.set) / d);
        }
    }
    if n >= 2 && turning == 0.0 {
        turning = 1.0;
    }
    let factors_compose = pb
        .witnesses
        .iter()
        .all(|w| pb.distances[w.x][w.y] > 0.0 || values.rows[w.x] == values.rows[w.y]);

    Ok(FactorizationReport {
        points: n,
        connected_sets,
        metric_valid: validate_metric(&pb).is_valid(),
        max_diameter_gap: max_gap,
        diameter_violations,
        lipschitz_violations,
        turning_constant: turning,
        factors_compose,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMode {
    /// Triples `(x, a, b)`: `d'(x,a)/d'(x,b)` against `d(x,a)/d(x,b)`.
    #[default]
    Qs,
    /// Intersecting h-connected `E, E'`: `diam' E / diam' E'` against
    /// `diam E / diam E'`.
    Branched,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSettings {
    /// Above this many candidates, sample this many instead.
    pub max_samples: usize,
    pub seed: u64,
}

impl Default for ProfileSettings {
    fn default() -> Self {
        Self { max_samples: 200_000, seed: 0 }
    }
}

/// Running maximum of output ratio against input ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionProfile {
    pub mode: ProfileMode,
    pub exhaustive: bool,
    pub samples: usize,
    pub skipped_degenerate: usize,
    /// `(t, max output ratio over samples with input ratio <= t)`, at most
    /// [`ENVELOPE_POINTS`] entries, non-decreasing in both coordinates.
    pub envelope: Vec<[f64; 2]>,
}

pub const ENVELOPE_POINTS: usize = 256;

/// Ratio pairs `(input, output)` for a profile, plus the degenerate count.
pub fn profile_samples<S, T>(
    source: &S,
    target: &T,
    mode: ProfileMode,
    connected: Option<&FiniteMetricSpace>,
    settings: &ProfileSettings,
) -> Result<(Vec<(f64, f64)>, usize, bool)>
where
    S: Metric + ?Sized,
    T: Metric + ?Sized,
{
    if source.len() != target.len() {
        return Err(Error::Mismatch(format!(
            "source has {} points, target has {}",
            source.len(),
            target.len()
        )));
    }
    match mode {
        ProfileMode::Qs => Ok(qs_samples(source, target, settings)),
        ProfileMode::Branched => {
            let space = connected.ok_or_else(|| Error::parameter("branched profiles need an h-connected space"))?;
            if space.len() != source.len() {
                return Err(Error::Mismatch("connectivity space differs from the source".into()));
            }
            if !space.is_mesh_connected() {
                return Err(Error::structural(format!("space is disconnected at mesh {}", space.mesh())));
            }
            Ok(branched_samples(source, target, space, settings))
        }
    }
}

fn ratio_pair(a_in: f64, b_in: f64, a_out: f64, b_out: f64) -> Option<(f64, f64)> {
    (a_in > 0.0 && b_in > 0.0 && b_out > 0.0).then(|| (a_in / b_in, a_out / b_out))
}

fn qs_samples<S, T>(source: &S, target: &T, settings: &ProfileSettings) -> (Vec<(f64, f64)>, usize, bool)
where
    S: Metric + ?Sized,
    T: Metric + ?Sized,
{
    let n = source.len();
    let triple = |x: usize, a: usize, b: usize| {
        ratio_pair(source.dist(x, a), source.dist(x, b), target.dist(x, a), target.dist(x, b))
    };
    let total = n.saturating_mul(n).saturating_mul(n);
    let exhaustive = total <= settings.max_samples;
    let raw: Vec<Option<(f64, f64)>> = if exhaustive {
        par::map_range(n, |x| {
            let mut row = Vec::new();
            for a in (0..n).filter(|&a| a != x) {
                for b in (0..n).filter(|&b| b != x && b != a) {
                    row.push(triple(x, a, b));
                }
            }
            row
        })
        .into_iter()
        .flatten()
        .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        (0..settings.max_samples)
            .map(|_| {
                let x = rng.gen_range(0..n);
                let a = rng.gen_range(0..n);
                let b = rng.gen_range(0..n);
                if a == x || b == x || a == b {
                    None
                } else {
                    triple(x, a, b)
                }
            })
            .collect()
    };
    split_degenerate(raw, exhaustive)
}

fn split_degenerate(raw: Vec<Option<(f64, f64)>>, exhaustive: bool) -> (Vec<(f64, f64)>, usize, bool) {
    let skipped = raw.iter().filter(|p| p.is_none()).count();
    (raw.into_iter().flatten().collect(), skipped, exhaustive)
}

fn branched_samples<S, T>(
    source: &S,
    target: &T,
    space: &FiniteMetricSpace,
    settings: &ProfileSettings,
) -> (Vec<(f64, f64)>, usize, bool)
where
    S: Metric + ?Sized,
    T: Metric + ?Sized,
{
    let n = space.len();
    if n < 2 {
        return (Vec::new(), 0, true);
    }
    let sets: Vec<Vec<usize>> = if n <= EXHAUSTIVE_PROFILE_LIMIT {
        connected_subsets(&space.mesh_graph()).into_iter().map(bits).collect()
    } else {
        sampled_connected_sets(space, 1000.max(n), settings.seed)
    };
    let diams: Vec<(f64, f64)> = par::map_slice(&sets, |s| (diameter_unchecked(source, s), diameter_unchecked(target, s)));
    let masks: Vec<Vec<bool>> = sets
        .iter()
        .map(|s| {
            let mut row = vec![false; n];
            for &p in s {
                row[p] = true;
            }
            row
        })
        .collect();
    let meets = |i: usize, j: usize| sets[i].iter().any(|&p| masks[j][p]);
    let pair = |i: usize, j: usize| ratio_pair(diams[i].0, diams[j].0, diams[i].1, diams[j].1);

    let k = sets.len();
    let exhaustive = k.saturating_mul(k) <= settings.max_samples;
    let raw: Vec<Option<(f64, f64)>> = if exhaustive {
        par::map_range(k, |i| (0..k).filter(|&j| meets(i, j)).map(|j| pair(i, j)).collect::<Vec<_>>())
            .into_iter()
            .flatten()
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut out = Vec::with_capacity(settings.max_samples);
        let mut attempts = 0usize;
        while out.len() < settings.max_samples && attempts < settings.max_samples.saturating_mul(20) {
            attempts += 1;
            let (i, j) = (rng.gen_range(0..k), rng.gen_range(0..k));
            if meets(i, j) {
                out.push(pair(i, j));
            }
        }
        out
    };
    split_degenerate(raw, exhaustive)
}

/// Sorts samples by input ratio and keeps the running maximum of the output
/// ratio, thinned to at most [`ENVELOPE_POINTS`] entries.
pub fn envelope(samples: &[(f64, f64)]) -> Vec<[f64; 2]> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut running: Vec<[f64; 2]> = Vec::with_capacity(sorted.len());
    let mut top = f64::NEG_INFINITY;
    for (t, v) in sorted {
        top = top.max(v);
        match running.last_mut() {
            Some(last) if last[0] == t => last[1] = top,
            _ => running.push([t, top]),
        }
    }
    if running.len() <= ENVELOPE_POINTS {
        return running;
    }
    let last = running.len() - 1;
    let mut picks: Vec<usize> = (0..ENVELOPE_POINTS)
        .map(|k| (k * last + (ENVELOPE_POINTS - 1) / 2) / (ENVELOPE_POINTS - 1))
        .collect();
    picks.dedup();
    picks.into_iter().map(|i| running[i]).collect()
}

/// Empirical control function of the identity `(X, source) -> (X, target)`.
///
/// Branched mode draws `E, E'` from the h-connected sets of `connected`.
pub fn distortion_profile<S, T>(
    source: &S,
    target: &T,
    mode: ProfileMode,
    connected: Option<&FiniteMetricSpace>,
    settings: &ProfileSettings,
) -> Result<DistortionProfile>
where
    S: Metric + ?Sized,
    T: Metric + ?Sized,
{
    let (samples, skipped, exhaustive) = profile_samples(source, target, mode, connected, settings)?;
    Ok(DistortionProfile {
        mode,
        exhaustive,
        samples: samples.len(),
        skipped_degenerate: skipped,
        envelope: envelope(&samples),
    })
}
