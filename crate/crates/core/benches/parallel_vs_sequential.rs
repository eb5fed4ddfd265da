use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use snowfold::covers::{build_hierarchy, CoverStrategy, HierarchyParams};
use snowfold::embedding::{build_folding_map, select_scale_ratio};
use snowfold::lightness::{lightness_constant, ProbeSettings};
use snowfold::pullback::pullback_metric;
use snowfold::spaces::{generate, graph_space, SpaceKind, SpaceRecipe};
use snowfold::{FiniteMetricSpace, FoldingMap, Metric};

const EPS: f64 = 0.5;

fn fold(m: &FiniteMetricSpace) -> FoldingMap {
    let r = select_scale_ratio(EPS, 4.0).unwrap();
    let params = HierarchyParams { r, epsilon: EPS, tail_tol: 1e-3, strategy: CoverStrategy::Greedy };
    let h = build_hierarchy(m, params).unwrap();
    build_folding_map(m, &h, 0).unwrap()
}

/// The rayon default pool, and a one-thread pool standing in for the
/// sequential path. Without the `parallel` feature only the latter runs.
fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let mut out = vec![("sequential", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap())];
    if snowfold::is_parallel() {
        out.push(("parallel", rayon::ThreadPoolBuilder::new().build().unwrap()));
    }
    out
}

fn bench_fold(c: &mut Criterion) {
    let cloud = generate(&SpaceRecipe::new(SpaceKind::RandomCloud { points: 400, seed: 1 })).unwrap();
    let mut group = c.benchmark_group("fold");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new(name, cloud.len()), |b| b.iter(|| pool.install(|| fold(&cloud))));
    }
    group.finish();
}

fn bench_lightness(c: &mut Criterion) {
    let grid = generate(&SpaceRecipe::grid(16)).unwrap();
    let map = fold(&grid);
    let snow = grid.snowflake(EPS).unwrap();
    let settings = ProbeSettings::default();
    let mut group = c.benchmark_group("lightness");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new(name, grid.len()), |b| {
            b.iter(|| pool.install(|| lightness_constant(&map.values, &snow, &settings).unwrap()))
        });
    }
    group.finish();
}

fn bench_pullback(c: &mut Criterion) {
    // a 4x4 grid graph hits the exact pullback limit of 16 points
    let edges: Vec<(usize, usize)> = (0..16)
        .flat_map(|v| {
            let right = (v % 4 < 3).then_some((v, v + 1));
            let down = (v < 12).then_some((v, v + 4));
            right.into_iter().chain(down)
        })
        .collect();
    let m = graph_space("grid-graph-4", 16, &edges).unwrap();
    let map = fold(&m);
    let mut group = c.benchmark_group("pullback");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new(name, m.len()), |b| {
            b.iter(|| pool.install(|| pullback_metric(&m, &map.values, false).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_fold, bench_lightness, bench_pullback);
criterion_main!(benches);
