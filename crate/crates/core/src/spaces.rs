//! Benchmark spaces with known behaviour, plus h-path utilities.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{FiniteMetricSpace, Metric};
use crate::par;

/// Upper bound on generated point counts.
pub const MAX_POINTS: usize = 5000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceKind {
    /// `points` equally spaced points on a segment of the given length
    /// (default: unit spacing).
    Interval { points: usize, length: Option<f64> },
    /// `side x side` integer grid with the Euclidean metric.
    Grid2d { side: usize },
    /// Endpoints of the level-`level` middle-thirds intervals in `[0, 1]`.
    Cantor { level: u32 },
    /// A centre with `arms` paths of `depth` unit edges, graph metric.
    StarTree { arms: usize, depth: usize },
    /// Word-metric ball in the integer Heisenberg group, generators `a±, b±`.
    HeisenbergBall { radius: u32 },
    /// Uniform points in the unit square, Euclidean metric.
    RandomCloud { points: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceRecipe {
    #[serde(flatten)]
    pub kind: SpaceKind,
    /// Expected colour count, for documentation only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_colors_hint: Option<usize>,
}

impl SpaceRecipe {
    pub fn new(kind: SpaceKind) -> Self {
        Self {
            kind,
            expected_colors_hint: None,
        }
    }

    pub fn interval(points: usize) -> Self {
        Self::new(SpaceKind::Interval { points, length: None })
    }

    /// `points` samples of the unit interval (mesh `1 / (points - 1)`).
    pub fn unit_interval(points: usize) -> Self {
        Self::new(SpaceKind::Interval {
            points,
            length: Some(1.0),
        })
    }

    pub fn grid(side: usize) -> Self {
        Self::new(SpaceKind::Grid2d { side })
    }

    pub fn label(&self) -> String {
        match &self.kind {
            SpaceKind::Interval { points, length } => match length {
                Some(l) => format!("interval-{points}-len{l}"),
                None => format!("interval-{points}"),
            },
            SpaceKind::Grid2d { side } => format!("grid-{side}x{side}"),
            SpaceKind::Cantor { level } => format!("cantor-{level}"),
            SpaceKind::StarTree { arms, depth } => format!("star-{arms}x{depth}"),
            SpaceKind::HeisenbergBall { radius } => format!("heisenberg-ball-{radius}"),
            SpaceKind::RandomCloud { points, seed } => format!("cloud-{points}-seed{seed}"),
        }
    }
}

fn cap(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::parameter("generated space must have at least one point"));
    }
    if n > MAX_POINTS {
        return Err(Error::parameter(format!(
            "{n} points exceeds the cap of {MAX_POINTS}"
        )));
    }
    Ok(())
}

/// Generates the space described by `recipe`. Deterministic in the recipe.
pub fn generate(recipe: &SpaceRecipe) -> Result<FiniteMetricSpace> {
    let label = recipe.label();
    match &recipe.kind {
        SpaceKind::Interval { points, length } => {
            let n = *points;
            cap(n)?;
            let length = length.unwrap_or((n.max(2) - 1) as f64);
            if !(length > 0.0 && length.is_finite()) {
                return Err(Error::parameter("interval length must be positive"));
            }
            let gaps = (n.max(2) - 1) as f64;
            let step = length / gaps;
            let space = FiniteMetricSpace::from_fn(label, step, n, |i, j| i.abs_diff(j) as f64 * length / gaps)?;
            space.with_coords((0..n).map(|i| vec![i as f64 * length / gaps]).collect())
        }
        SpaceKind::Grid2d { side } => {
            let side = *side;
            cap(side.saturating_mul(side))?;
            let n = side * side;
            let xy = |p: usize| ((p % side) as f64, (p / side) as f64);
            let space = FiniteMetricSpace::from_fn(label, 1.0, n, |i, j| {
                let (a, b) = (xy(i), xy(j));
                (a.0 - b.0).hypot(a.1 - b.1)
            })?;
            space.with_coords((0..n).map(|p| vec![xy(p).0, xy(p).1]).collect())
        }
        SpaceKind::Cantor { level } => {
            if *level > 11 {
                return Err(Error::parameter(format!("cantor level {level} exceeds the cap of 11")));
            }
            let ends = cantor_endpoints(*level);
            let scale = 3f64.powi(*level as i32);
            let n = ends.len();
            let mesh = ends.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(1) as f64 / scale;
            let space = FiniteMetricSpace::from_fn(label, mesh, n, |i, j| ends[i].abs_diff(ends[j]) as f64 / scale)?;
            space.with_coords(ends.iter().map(|&e| vec![e as f64 / scale]).collect())
        }
        SpaceKind::StarTree { arms, depth } => {
            let (arms, depth) = (*arms, *depth);
            if arms == 0 || depth == 0 {
                return Err(Error::parameter("star tree needs at least one arm of depth one"));
            }
            let n = 1 + arms.saturating_mul(depth);
            cap(n)?;
            // point 0 is the centre; arm a, level l (1-based) is 1 + a*depth + (l-1)
            let place = |p: usize| if p == 0 { (usize::MAX, 0) } else { ((p - 1) / depth, (p - 1) % depth + 1) };
            FiniteMetricSpace::from_fn(label, 1.0, n, |i, j| {
                let ((ai, li), (aj, lj)) = (place(i), place(j));
                if ai == aj || li == 0 || lj == 0 {
                    li.abs_diff(lj) as f64
                } else {
                    (li + lj) as f64
                }
            })
        }
        SpaceKind::HeisenbergBall { radius } => heisenberg_ball(*radius, label),
        SpaceKind::RandomCloud { points, seed } => {
            let n = *points;
            cap(n)?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect();
            let d = |i: usize, j: usize| (pts[i][0] - pts[j][0]).hypot(pts[i][1] - pts[j][1]);
            let mesh = longest_mst_edge(n, d).max(f64::MIN_POSITIVE);
            let space = FiniteMetricSpace::from_fn(label, if n == 1 { 1.0 } else { mesh }, n, d)?;
            space.with_coords(pts.iter().map(|p| p.to_vec()).collect())
        }
    }
}

fn cantor_endpoints(level: u32) -> Vec<u64> {
    let mut intervals: Vec<(u64, u64)> = vec![(0, 3u64.pow(level))];
    for _ in 0..level {
        intervals = intervals
            .into_iter()
            .flat_map(|(a, b)| {
                let third = (b - a) / 3;
                [(a, a + third), (b - third, b)]
            })
            .collect();
    }
    let mut ends: Vec<u64> = intervals.into_iter().flat_map(|(a, b)| [a, b]).collect();
    ends.sort_unstable();
    ends.dedup();
    ends
}

// Prim's algorithm on the complete graph.
fn longest_mst_edge<F: Fn(usize, usize) -> f64>(n: usize, d: F) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    best[0] = 0.0;
    let mut longest = 0.0f64;
    for _ in 0..n {
        let u = (0..n)
            .filter(|&v| !in_tree[v])
            .min_by(|&a, &b| best[a].total_cmp(&best[b]))
            .expect("a vertex remains");
        in_tree[u] = true;
        longest = longest.max(best[u]);
        for v in 0..n {
            if !in_tree[v] {
                best[v] = best[v].min(d(u, v));
            }
        }
    }
    longest
}

type Heis = (i64, i64, i64);

fn heis_mul(g: Heis, h: Heis) -> Heis {
    (g.0 + h.0, g.1 + h.1, g.2 + h.2 + g.0 * h.1)
}

fn heis_inv(g: Heis) -> Heis {
    (-g.0, -g.1, -g.2 + g.0 * g.1)
}

const HEIS_GENERATORS: [Heis; 4] = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0)];

/// Word lengths of all group elements within `radius`, in BFS discovery order.
fn heisenberg_bfs(radius: u32) -> (Vec<Heis>, HashMap<Heis, u32>) {
    let identity = (0, 0, 0);
    let mut order = vec![identity];
    let mut len = HashMap::from([(identity, 0u32)]);
    let mut queue = VecDeque::from([identity]);
    while let Some(g) = queue.pop_front() {
        let l = len[&g];
        if l == radius {
            continue;
        }
        for s in HEIS_GENERATORS {
            let h = heis_mul(g, s);
            if let std::collections::hash_map::Entry::Vacant(e) = len.entry(h) {
                e.insert(l + 1);
                order.push(h);
                queue.push_back(h);
            }
        }
    }
    (order, len)
}

fn heisenberg_ball(radius: u32, label: String) -> Result<FiniteMetricSpace> {
    if radius > 6 {
        return Err(Error::parameter(format!("heisenberg radius {radius} exceeds the cap of 6")));
    }
    let (ball, _) = heisenberg_bfs(radius);
    cap(ball.len())?;
    // every g^-1 h between ball elements has length <= 2 * radius
    let (_, lengths) = heisenberg_bfs(2 * radius);
    let space = FiniteMetricSpace::from_fn(label, 1.0, ball.len(), |i, j| {
        lengths[&heis_mul(heis_inv(ball[i]), ball[j])] as f64
    })?;
    space.with_coords(ball.iter().map(|g| vec![g.0 as f64, g.1 as f64, g.2 as f64]).collect())
}

/// Graph metric (shortest-path hop count) of a connected graph, mesh 1.
pub fn graph_space(label: impl Into<String>, n: usize, edges: &[(usize, usize)]) -> Result<FiniteMetricSpace> {
    cap(n)?;
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        if a >= n || b >= n {
            return Err(Error::structural(format!("edge ({a}, {b}) outside {n} vertices")));
        }
        if a != b {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let hops = par::map_range(n, |s| bfs_tree(&adj, s).depth);
    if hops.iter().flatten().any(|d| *d == usize::MAX) {
        return Err(Error::structural("graph is disconnected"));
    }
    FiniteMetricSpace::from_fn(label, 1.0, n, |i, j| hops[i][j] as f64)
}

/// A random connected graph on `n` vertices: a random spanning tree plus
/// `extra` random edges. Deterministic in the RNG state.
pub fn random_connected_graph<R: Rng>(n: usize, extra: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.gen_range(0..v), v));
    }
    if n >= 2 {
        for _ in 0..extra {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a != b {
                edges.push((a.min(b), a.max(b)));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// BFS tree over adjacency lists. Unreached vertices have depth `usize::MAX`.
pub(crate) struct BfsTree {
    pub order: Vec<usize>,
    pub parent: Vec<usize>,
    pub depth: Vec<usize>,
}

pub(crate) fn bfs_tree(adj: &[Vec<usize>], source: usize) -> BfsTree {
    let n = adj.len();
    let mut parent = vec![usize::MAX; n];
    let mut depth = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::from([source]);
    depth[source] = 0;
    parent[source] = source;
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &v in &adj[u] {
            if depth[v] == usize::MAX {
                depth[v] = depth[u] + 1;
                parent[v] = u;
                queue.push_back(v);
            }
        }
    }
    BfsTree { order, parent, depth }
}

impl BfsTree {
    /// Vertices on the tree path from the source to `target`, source first.
    pub fn path_to(&self, target: usize) -> Option<Vec<usize>> {
        if self.depth[target] == usize::MAX {
            return None;
        }
        let mut path = vec![target];
        let mut v = target;
        while self.parent[v] != v {
            v = self.parent[v];
            path.push(v);
        }
        path.reverse();
        Some(path)
    }
}

/// A fewest-hop h-path from `x` to `y` (lowest-index predecessors).
pub fn shortest_mesh_path(m: &FiniteMetricSpace, x: usize, y: usize) -> Result<Vec<usize>> {
    let adj = m.mesh_graph();
    bfs_tree(&adj, x)
        .path_to(y)
        .ok_or_else(|| Error::structural(format!("{y} is not reachable from {x} at mesh {}", m.mesh())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundedTurning {
    /// Max over pairs of `diam(path) / d(x, y)` along shortest h-paths.
    /// An upper bound on the bounded-turning constant at mesh h.
    pub constant: f64,
    pub witness: Option<[usize; 2]>,
    pub is_upper_bound: bool,
}

/// Bounded-turning constant measured along fewest-hop h-paths.
pub fn bounded_turning_constant(m: &FiniteMetricSpace) -> Result<BoundedTurning> {
    let n = m.len();
    let adj = m.mesh_graph();
    let per_source = par::map_range(n, |x| {
        let tree = bfs_tree(&adj, x);
        if tree.order.len() != n {
            return None;
        }
        // path diameter grows along the tree: diam(path to v) from its parent's
        let mut path_diam = vec![0.0f64; n];
        let mut best = (0.0f64, None);
        for &v in tree.order.iter().skip(1) {
            let mut d = path_diam[tree.parent[v]];
            let mut u = tree.parent[v];
            loop {
                d = d.max(m.dist(u, v));
                if tree.parent[u] == u {
                    break;
                }
                u = tree.parent[u];
            }
            path_diam[v] = d;
            if v > x {
                let ratio = d / m.dist(x, v);
                if ratio > best.0 {
                    best = (ratio, Some([x, v]));
                }
            }
        }
        Some(best)
    });
    let mut out = BoundedTurning {
        constant: if n >= 2 { 0.0 } else { 1.0 },
        witness: None,
        is_upper_bound: true,
    };
    for entry in per_source {
        let (ratio, witness) = entry.ok_or_else(|| {
            Error::structural(format!("space is disconnected at mesh {}", m.mesh()))
        })?;
        if ratio > out.constant {
            out.constant = ratio;
            out.witness = witness;
        }
    }
    Ok(out)
}
