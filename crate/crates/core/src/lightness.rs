//! Empirical Lipschitz and lightness constants of a map on a finite space.
//!
//! A map `f: X -> R^m` is Lipschitz light with constant `C` when it is
//! `C`-Lipschitz and, for every `r > 0` and `W` of diameter `<= r`, the
//! r-components of `f^-1(W)` have diameter `<= C r`. Lightness is probed with
//! the sets `W = B(f(p), r) ∩ f(X)`: every admissible `W` meeting the image sits
//! inside one of them and each has diameter `<= 2r`, so the measured constant
//! brackets the true one within a factor of two.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsu::DisjointSet;
use crate::embedding::PointMap;
use crate::error::{Error, Result};
use crate::metric::{diameter_unchecked, r_components, FiniteMetricSpace, Metric};
use crate::par;
use crate::spaces::bfs_tree;

/// Ratio between the probe-set constant and the constant over all `W`.
pub const SURROGATE_FACTOR: f64 = 2.0;

fn check_sizes<D: Metric + ?Sized>(values: &PointMap, domain: &D) -> Result<()> {
    if values.len() != domain.len() {
        return Err(Error::Mismatch(format!(
            "map has {} rows, domain has {} points",
            values.len(),
            domain.len()
        )));
    }
    Ok(())
}

/// Exact Lipschitz constant over all pairs, with the lexicographically first
/// pair attaining it. Coincident pairs are skipped.
pub fn lipschitz_constant<D: Metric + ?Sized>(values: &PointMap, domain: &D) -> Result<(f64, Option<[usize; 2]>)> {
    check_sizes(values, domain)?;
    let n = domain.len();
    if n < 2 {
        return Err(Error::parameter("the Lipschitz constant needs at least two points"));
    }
    let rows = par::map_range(n, |i| {
        let mut best = (0.0f64, None);
        for j in i + 1..n {
            let d = domain.dist(i, j);
            if d > 0.0 {
                let ratio = values.image_dist(i, j) / d;
                if ratio > best.0 {
                    best = (ratio, Some([i, j]));
                }
            }
        }
        best
    });
    let mut best = (0.0f64, None);
    for row in rows {
        if row.0 > best.0 {
            best = row;
        }
    }
    Ok(best)
}

/// Which radii the lightness sweep probes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeSettings {
    /// Add the midpoint between consecutive distinct distances.
    pub midpoints: bool,
    /// Probe exactly these radii instead of the distance-derived ones.
    pub radii: Option<Vec<f64>>,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self { midpoints: true, radii: None }
    }
}

/// Sorted distinct pairwise distances of `domain`, optionally with midpoints.
pub fn probe_radii<D: Metric + ?Sized>(domain: &D, settings: &ProbeSettings) -> Result<Vec<f64>> {
    if let Some(radii) = &settings.radii {
        if radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::parameter("probe radii must be positive and finite"));
        }
        let mut out = radii.clone();
        out.sort_by(f64::total_cmp);
        out.dedup();
        return Ok(out);
    }
    let n = domain.len();
    let mut dists: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| domain.dist(i, j))
        .filter(|d| *d > 0.0)
        .collect();
    dists.sort_by(f64::total_cmp);
    dists.dedup();
    if !settings.midpoints {
        return Ok(dists);
    }
    let mut out = Vec::with_capacity(2 * dists.len());
    for (k, &d) in dists.iter().enumerate() {
        if k > 0 {
            let mid = 0.5 * (dists[k - 1] + d);
            if mid > dists[k - 1] && mid < d {
                out.push(mid);
            }
        }
        out.push(d);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightWitness {
    pub radius: f64,
    /// Point whose image is the probe centre.
    pub center: usize,
    /// The r-component of the probe preimage attaining the constant.
    pub component: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightEstimate {
    pub constant: f64,
    pub witness: Option<LightWitness>,
    pub probe_radii: Vec<f64>,
}

/// Pairs sorted by distance, ties by index.
fn sorted_edges<D: Metric + ?Sized>(domain: &D, max_r: f64) -> Vec<(f64, usize, usize)> {
    let n = domain.len();
    let mut edges: Vec<(f64, usize, usize)> = par::map_range(n, |i| {
        (i + 1..n)
            .map(|j| (domain.dist(i, j), i, j))
            .filter(|e| e.0 <= max_r)
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    edges
}

/// Best `(ratio, radius)` for one probe centre, sweeping radii upwards.
///
/// Points enter once their image is within the radius of the centre; pairs
/// enter once their distance is within the radius. An incremental union-find
/// keeps component diameters, and the largest one only grows.
fn sweep_center<D: Metric + ?Sized>(
    values: &PointMap,
    domain: &D,
    center: usize,
    radii: &[f64],
    edges: &[(f64, usize, usize)],
) -> (f64, f64) {
    let n = domain.len();
    let mut by_offset: Vec<(f64, usize)> = (0..n).map(|x| (values.image_dist(x, center), x)).collect();
    by_offset.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut present = vec![false; n];
    let mut pending: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut dsu = DisjointSet::new(n);
    let mut members: Vec<Vec<usize>> = (0..n).map(|x| vec![x]).collect();
    let mut diam = vec![0.0f64; n];
    let mut max_diam = 0.0f64;
    let mut present_count = 0;
    let mut components = 0usize;
    let mut next_point = 0;
    let mut next_edge = 0;
    let mut best = (0.0f64, 0.0f64);

    let merge = |a: usize, b: usize, dsu: &mut DisjointSet, members: &mut Vec<Vec<usize>>, diam: &mut Vec<f64>| -> bool {
        let Some((keep, gone)) = dsu.union(a, b) else {
            return false;
        };
        let absorbed = std::mem::take(&mut members[gone]);
        let mut d = diam[keep].max(diam[gone]);
        for &p in &absorbed {
            for &q in &members[keep] {
                d = d.max(domain.dist(p, q));
            }
        }
        members[keep].extend(absorbed);
        diam[keep] = d;
        true
    };

    for &r in radii {
        while next_point < n && by_offset[next_point].0 <= r {
            let x = by_offset[next_point].1;
            next_point += 1;
            present[x] = true;
            present_count += 1;
            components += 1;
            for e in std::mem::take(&mut pending[x]) {
                let (_, a, b) = edges[e];
                let other = if a == x { b } else { a };
                if present[other] {
                    if merge(a, b, &mut dsu, &mut members, &mut diam) {
                        components -= 1;
                        max_diam = max_diam.max(diam[dsu.find(a)]);
                    }
                } else {
                    pending[other].push(e);
                }
            }
        }
        while next_edge < edges.len() && edges[next_edge].0 <= r {
            let (_, a, b) = edges[next_edge];
            match (present[a], present[b]) {
                (true, true) => {
                    if merge(a, b, &mut dsu, &mut members, &mut diam) {
                        components -= 1;
                        max_diam = max_diam.max(diam[dsu.find(a)]);
                    }
                }
                (false, _) => pending[a].push(next_edge),
                (true, false) => pending[b].push(next_edge),
            }
            next_edge += 1;
        }
        let ratio = max_diam / r;
        if ratio > best.0 {
            best = (ratio, r);
        }
        if present_count == n && components == 1 {
            break;
        }
    }
    best
}

/// Probe-set lightness constant of `values` over the domain metric.
///
/// Centres are the distinct image values (represented by their lowest-index
/// preimage point). The reported witness maximises the ratio, then prefers
/// the lowest centre and the smallest radius.
pub fn lightness_constant<D: Metric + ?Sized>(
    values: &PointMap,
    domain: &D,
    settings: &ProbeSettings,
) -> Result<LightEstimate> {
    check_sizes(values, domain)?;
    let radii = probe_radii(domain, settings)?;
    let n = domain.len();
    if n == 0 || radii.is_empty() {
        return Ok(LightEstimate { constant: 0.0, witness: None, probe_radii: radii });
    }

    let mut seen: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
    for x in 0..n {
        let key: Vec<u64> = values.rows[x].iter().map(|v| v.to_bits()).collect();
        seen.entry(key).or_insert(x);
    }
    let mut centers: Vec<usize> = seen.into_values().collect();
    centers.sort_unstable();

    let edges = sorted_edges(domain, *radii.last().expect("non-empty"));
    let per_center = par::map_slice(&centers, |&p| sweep_center(values, domain, p, &radii, &edges));

    let mut best: Option<(f64, usize, f64)> = None;
    for (&p, &(ratio, r)) in centers.iter().zip(&per_center) {
        if ratio > best.map_or(0.0, |b| b.0) {
            best = Some((ratio, p, r));
        }
    }
    let Some((constant, center, radius)) = best else {
        return Ok(LightEstimate { constant: 0.0, witness: None, probe_radii: radii });
    };

    let preimage: Vec<usize> = (0..n).filter(|&x| values.image_dist(x, center) <= radius).collect();
    let component = r_components(domain, &preimage, radius)?
        .into_iter()
        .map(|c| (diameter_unchecked(domain, &c), c))
        .fold((f64::NEG_INFINITY, Vec::new()), |acc, c| if c.0 > acc.0 { c } else { acc })
        .1;
    Ok(LightEstimate {
        constant,
        witness: Some(LightWitness { radius, center, component }),
        probe_radii: radii,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightnessReport {
    pub lip_constant: f64,
    pub lip_witness: Option<[usize; 2]>,
    /// Constant over the probe family.
    pub light_constant: f64,
    pub light_witness: Option<LightWitness>,
    pub probe_radii: Vec<f64>,
    pub surrogate_factor: f64,
    /// The constant over all sets `W` lies in `[light_constant / 2, light_constant]`.
    pub light_true_bounds: [f64; 2],
    pub ceiling: Option<f64>,
    pub pass: bool,
}

/// Both constants, checked against an optional ceiling.
pub fn lipschitz_light_report<D: Metric + ?Sized>(
    values: &PointMap,
    domain: &D,
    settings: &ProbeSettings,
    ceiling: Option<f64>,
) -> Result<LightnessReport> {
    let (lip_constant, lip_witness) = if domain.len() < 2 {
        check_sizes(values, domain)?;
        (0.0, None)
    } else {
        lipschitz_constant(values, domain)?
    };
    let light = lightness_constant(values, domain, settings)?;
    let pass = ceiling.is_none_or(|c| lip_constant <= c && light.constant <= c);
    Ok(LightnessReport {
        lip_constant,
        lip_witness,
        light_constant: light.constant,
        light_witness: light.witness,
        probe_radii: light.probe_radii,
        surrogate_factor: SURROGATE_FACTOR,
        light_true_bounds: [light.constant / SURROGATE_FACTOR, light.constant],
        ceiling,
        pass,
    })
}

/// Range of `diam f(K) / diam(K)^eps` over sampled h-connected sets `K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreservationProfile {
    pub samples: usize,
    pub exhaustive: bool,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub min_witness: Vec<usize>,
    pub max_witness: Vec<usize>,
    /// Every sampled image collapsed to a point.
    pub degenerate: bool,
}

/// Largest space enumerated exhaustively by [`diameter_preservation_profile`].
pub const EXHAUSTIVE_PROFILE_LIMIT: usize = 12;
const MIN_SAMPLES: usize = 500;

/// Connected subsets with at least two points, as bitmasks, for `n <= 12`.
pub(crate) fn connected_subsets(adj: &[Vec<usize>]) -> Vec<u32> {
    let n = adj.len();
    let masks: Vec<u32> = adj
        .iter()
        .map(|a| a.iter().fold(0u32, |m, &v| m | 1 << v))
        .collect();
    (1u32..1 << n)
        .filter(|s| s.count_ones() >= 2 && mask_connected(*s, &masks))
        .collect()
}

pub(crate) fn mask_connected(set: u32, adj_masks: &[u32]) -> bool {
    let start = set & set.wrapping_neg();
    let mut reached = start;
    let mut frontier = start;
    while frontier != 0 {
        let v = frontier.trailing_zeros() as usize;
        frontier &= frontier - 1;
        let fresh = adj_masks[v] & set & !reached;
        reached |= fresh;
        frontier |= fresh;
    }
    reached == set
}

pub(crate) fn bits(set: u32) -> Vec<usize> {
    (0..32).filter(|b| set >> b & 1 == 1).collect()
}

/// h-connected sets for the sampled profile: shortest h-paths between random
/// pairs and BFS blobs of random size around random seeds.
pub(crate) fn sampled_connected_sets(space: &FiniteMetricSpace, count: usize, seed: u64) -> Vec<Vec<usize>> {
    let n = space.len();
    let adj = space.mesh_graph();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = rng.gen_range(0..n);
        let tree = bfs_tree(&adj, x);
        if out.len() % 2 == 0 {
            let y = rng.gen_range(0..n);
            if let Some(path) = tree.path_to(y).filter(|p| p.len() >= 2) {
                out.push(path);
            }
        } else {
            let size = rng.gen_range(2..=n.max(2)).min(tree.order.len());
            if size >= 2 {
                let mut blob = tree.order[..size].to_vec();
                blob.sort_unstable();
                out.push(blob);
            }
        }
    }
    out
}

/// Records the extremes of `diam f(K) / diam(K)^eps` over h-connected `K`.
///
/// Spaces with at most twelve points are enumerated exhaustively; larger ones
/// use at least 500 seeded samples.
pub fn diameter_preservation_profile(
    values: &PointMap,
    space: &FiniteMetricSpace,
    epsilon: f64,
    seed: u64,
) -> Result<PreservationProfile> {
    check_sizes(values, space)?;
    let domain = space.snowflake(epsilon)?;
    if !space.is_mesh_connected() {
        return Err(Error::structural(format!("space is disconnected at mesh {}", space.mesh())));
    }
    let n = space.len();
    let exhaustive = n <= EXHAUSTIVE_PROFILE_LIMIT;
    let sets: Vec<Vec<usize>> = if n < 2 {
        Vec::new()
    } else if exhaustive {
        connected_subsets(&space.mesh_graph()).into_iter().map(bits).collect()
    } else {
        sampled_connected_sets(space, MIN_SAMPLES.max(n), seed)
    };
    let ratios = par::map_slice(&sets, |k| values.image_diameter(k) / diameter_unchecked(&domain, k));
    let mut profile = PreservationProfile {
        samples: sets.len(),
        exhaustive,
        min_ratio: f64::INFINITY,
        max_ratio: 0.0,
        min_witness: Vec::new(),
        max_witness: Vec::new(),
        degenerate: true,
    };
    for (k, &ratio) in sets.iter().zip(&ratios) {
        if ratio < profile.min_ratio {
            profile.min_ratio = ratio;
            profile.min_witness = k.clone();
        }
        if ratio > profile.max_ratio {
            profile.max_ratio = ratio;
            profile.max_witness = k.clone();
        }
    }
    profile.degenerate = profile.max_ratio == 0.0;
    if sets.is_empty() {
        profile.min_ratio = 0.0;
    }
    Ok(profile)
}

/// Lightness ceiling implied by a two-sided diameter bound on h-connected
/// sets.
///
/// If `diam f(K) / diam(K)^eps` lies in `[1/a, a]` for every h-connected `K`
/// and pairs are joined by h-connected sets of diameter `<= b d(x, y)`, then
/// every r-component of a probe preimage has snowflaked diameter at most
/// `2a(1 + a b^eps) r`: chaining joining sets along an r-path gives a
/// connected set whose image stays within `r + a b^eps r` of the probe
/// centre.
pub fn preservation_light_bound(a: f64, b: f64, epsilon: f64) -> f64 {
    2.0 * a * (1.0 + a * b.powf(epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::{generate, SpaceRecipe};

    fn line(points: &[f64]) -> (FiniteMetricSpace, PointMap) {
        let n = points.len();
        let m = FiniteMetricSpace::from_fn("line", 1.0, n, |i, j| (points[i] - points[j]).abs()).unwrap();
        let f = PointMap::new(1, points.iter().map(|p| vec![*p]).collect()).unwrap();
        (m, f)
    }

    #[test]
    fn identity_on_a_line_is_one_lipschitz() {
        let (m, f) = line(&[0.0, 1.0, 2.0]);
        let (c, _) = lipschitz_constant(&f, &m.snowflake(1.0).unwrap()).unwrap();
        assert_eq!(c, 1.0);
    }

    #[test]
    fn identity_on_a_snowflaked_line() {
        let (m, f) = line(&[0.0, 1.0, 4.0]);
        let (c, w) = lipschitz_constant(&f, &m.snowflake(0.5).unwrap()).unwrap();
        assert_eq!(c, 2.0);
        assert_eq!(w, Some([0, 2]));
    }

    #[test]
    fn constant_map_has_zero_lipschitz_constant() {
        let (m, _) = line(&[0.0, 1.0, 4.0]);
        let f = PointMap::constant(3, vec![7.0]);
        assert_eq!(lipschitz_constant(&f, &m).unwrap().0, 0.0);
    }

    #[test]
    fn lipschitz_needs_two_points() {
        let (m, f) = line(&[0.0]);
        assert!(matches!(lipschitz_constant(&f, &m), Err(Error::Parameter(_))));
    }

    #[test]
    fn single_point_is_zero_light() {
        let (m, f) = line(&[0.0]);
        let est = lightness_constant(&f, &m, &ProbeSettings::default()).unwrap();
        assert_eq!(est.constant, 0.0);
        assert!(est.witness.is_none());
    }

    #[test]
    fn identity_is_light_with_constant_at_most_two() {
        for side in [3, 5] {
            let m = generate(&SpaceRecipe::grid(side)).unwrap();
            let f = PointMap::from_coords(&m).unwrap();
            let est = lightness_constant(&f, &m, &ProbeSettings::default()).unwrap();
            assert!(est.constant <= 2.0, "{}", est.constant);
        }
    }

    #[test]
    fn sweep_agrees_with_brute_force() {
        let m = generate(&SpaceRecipe::grid(4)).unwrap();
        let snow = m.snowflake(0.5).unwrap();
        let f = PointMap::projection(&m, 0).unwrap();
        let settings = ProbeSettings::default();
        let est = lightness_constant(&f, &snow, &settings).unwrap();
        let mut brute = 0.0f64;
        for &r in &est.probe_radii {
            for p in 0..m.len() {
                let pre: Vec<usize> = (0..m.len()).filter(|&x| f.image_dist(x, p) <= r).collect();
                for c in r_components(&snow, &pre, r).unwrap() {
                    brute = brute.max(diameter_unchecked(&snow, &c) / r);
                }
            }
        }
        assert_eq!(est.constant, brute);
        let w = est.witness.unwrap();
        assert_eq!(diameter_unchecked(&snow, &w.component) / w.radius, est.constant);
    }

    #[test]
    fn projection_catches_whole_columns() {
        let side = 6;
        let m = generate(&SpaceRecipe::grid(side)).unwrap();
        let snow = m.snowflake(0.5).unwrap();
        let f = PointMap::projection(&m, 0).unwrap();
        let est = lightness_constant(&f, &snow, &ProbeSettings::default()).unwrap();
        assert!(est.constant >= ((side - 1) as f64).sqrt());
    }

    #[test]
    fn report_without_ceiling_passes() {
        let (m, f) = line(&[0.0, 1.0, 2.0, 3.0]);
        let report = lipschitz_light_report(&f, &m, &ProbeSettings::default(), None).unwrap();
        assert!(report.pass);
        assert_eq!(report.surrogate_factor, 2.0);
        assert_eq!(report.light_true_bounds[1], report.light_constant);
        let strict = lipschitz_light_report(&f, &m, &ProbeSettings::default(), Some(0.5)).unwrap();
        assert!(!strict.pass);
    }

    #[test]
    fn probe_radii_include_midpoints() {
        let (m, _) = line(&[0.0, 1.0, 3.0]);
        let radii = probe_radii(&m, &ProbeSettings::default()).unwrap();
        assert_eq!(radii, vec![1.0, 1.5, 2.0, 2.5, 3.0]);
        let plain = probe_radii(&m, &ProbeSettings { midpoints: false, radii: None }).unwrap();
        assert_eq!(plain, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn identity_preserves_diameters() {
        let m = generate(&SpaceRecipe::interval(9)).unwrap();
        let f = PointMap::from_coords(&m).unwrap();
        let p = diameter_preservation_profile(&f, &m, 1.0, 0).unwrap();
        assert!(p.exhaustive);
        assert_eq!((p.min_ratio, p.max_ratio), (1.0, 1.0));
        assert!(!p.degenerate);
    }

    #[test]
    fn constant_map_profile_is_degenerate() {
        let m = generate(&SpaceRecipe::grid(5)).unwrap();
        let f = PointMap::constant(25, vec![0.0, 0.0]);
        let p = diameter_preservation_profile(&f, &m, 0.5, 3).unwrap();
        assert!(!p.exhaustive);
        assert!(p.samples >= 500);
        assert!(p.degenerate);
        assert_eq!(p.max_ratio, 0.0);
    }

    #[test]
    fn connected_subset_count_of_a_path() {
        let m = generate(&SpaceRecipe::interval(5)).unwrap();
        // intervals of length >= 2 in a 5-path
        assert_eq!(connected_subsets(&m.mesh_graph()).len(), 10);
    }
}
