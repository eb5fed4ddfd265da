use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use snowfold::covers::{build_greedy_colored_cover, build_hierarchy, verify_cover, CoverStrategy, HierarchyParams};
use snowfold::embedding::{build_folding_map, color_capture_sweep, scale_fields, select_scale_ratio};
use snowfold::lightness::{
    diameter_preservation_profile, lightness_constant, preservation_light_bound, LightEstimate, ProbeSettings,
};
use snowfold::metric::{diameter, r_components, validate_metric};
use snowfold::pullback::{distortion_profile, factorization_check, pullback_metric, ProfileMode, ProfileSettings};
use snowfold::spaces::{bounded_turning_constant, generate, graph_space, random_connected_graph, SpaceKind, SpaceRecipe};
use snowfold::{CoverHierarchy, FiniteMetricSpace, FoldingMap, Metric, PointMap};

fn corpus() -> Vec<SpaceRecipe> {
    let mut out = vec![
        SpaceRecipe::interval(12),
        SpaceRecipe::unit_interval(40),
        SpaceRecipe::grid(6),
        SpaceRecipe::new(SpaceKind::Cantor { level: 3 }),
        SpaceRecipe::new(SpaceKind::StarTree { arms: 4, depth: 3 }),
        SpaceRecipe::new(SpaceKind::HeisenbergBall { radius: 2 }),
    ];
    out.extend((0..3).map(|seed| SpaceRecipe::new(SpaceKind::RandomCloud { points: 40, seed })));
    out
}

fn fold(m: &FiniteMetricSpace, eps: f64) -> (CoverHierarchy, FoldingMap) {
    let r = select_scale_ratio(eps, 4.0).unwrap();
    let h = build_hierarchy(m, HierarchyParams { r, epsilon: eps, tail_tol: 1e-3, strategy: CoverStrategy::Greedy })
        .unwrap();
    let f = build_folding_map(m, &h, 0).unwrap();
    (h, f)
}

fn euclidean(points: &[Vec<f64>]) -> FiniteMetricSpace {
    FiniteMetricSpace::from_fn("cloud", 1.0, points.len(), |i, j| {
        points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    })
    .unwrap()
}

fn cloud_strategy(n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0..10.0f64, dim), n)
}

fn restrict(m: &FiniteMetricSpace, keep: &[usize]) -> FiniteMetricSpace {
    FiniteMetricSpace::from_fn("subset", m.mesh(), keep.len(), |a, b| m.dist(keep[a], keep[b])).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn snowflakes_of_metrics_are_metrics(points in cloud_strategy(50, 3), eps in 0.01..=1.0f64) {
        let m = euclidean(&points);
        prop_assert!(validate_metric(&m).is_valid());
        prop_assert!(validate_metric(&m.snowflake(eps).unwrap()).is_valid());
    }

    #[test]
    fn graph_snowflakes_are_metrics(seed in any::<u64>(), eps in 0.01..=1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges = random_connected_graph(50, 30, &mut rng);
        let m = graph_space("g", 50, &edges).unwrap();
        prop_assert!(validate_metric(&m.snowflake(eps).unwrap()).is_valid());
    }

    #[test]
    fn components_only_merge_as_r_grows(points in cloud_strategy(30, 2), r in 0.0..6.0f64, dr in 0.0..6.0f64) {
        let m = euclidean(&points);
        let all: Vec<usize> = (0..30).collect();
        let fine = r_components(&m, &all, r).unwrap();
        let coarse = r_components(&m, &all, r + dr).unwrap();
        for c in &fine {
            prop_assert!(coarse.iter().any(|big| c.iter().all(|p| big.contains(p))));
        }
    }

    #[test]
    fn radius_above_diameter_gives_one_component(points in cloud_strategy(20, 2), pick in prop::collection::vec(0..20usize, 1..20)) {
        let m = euclidean(&points);
        let d = diameter(&m, &pick).unwrap();
        prop_assert_eq!(r_components(&m, &pick, d).unwrap().len(), 1);
    }

    #[test]
    fn greedy_covers_verify_on_random_clouds(points in cloud_strategy(40, 2), s in 0.05..30.0f64) {
        let m = euclidean(&points);
        let cover = build_greedy_colored_cover(&m, s).unwrap();
        prop_assert!(verify_cover(&cover, &m).is_clean());
        prop_assert!(cover.achieved_c <= 4.0);
    }

    #[test]
    fn lightness_shrinks_under_restriction(seed in any::<u64>(), keep_mask in any::<u64>()) {
        let m = generate(&SpaceRecipe::new(SpaceKind::RandomCloud { points: 30, seed })).unwrap();
        let (_, f) = fold(&m, 0.5);
        let snow = m.snowflake(0.5).unwrap();
        let full_radii = snowfold::lightness::probe_radii(&snow, &ProbeSettings::default()).unwrap();
        let settings = ProbeSettings { midpoints: false, radii: Some(full_radii) };
        let full = lightness_constant(&f.values, &snow, &settings).unwrap();

        let keep: Vec<usize> = (0..30).filter(|i| keep_mask >> i & 1 == 1).collect();
        prop_assume!(!keep.is_empty());
        let sub = restrict(&m, &keep);
        let sub_values = PointMap::new(f.values.dim, keep.iter().map(|&i| f.values.rows[i].clone()).collect()).unwrap();
        let part = lightness_constant(&sub_values, &sub.snowflake(0.5).unwrap(), &settings).unwrap();
        prop_assert!(part.constant <= full.constant + 1e-12, "{} > {}", part.constant, full.constant);
    }
}

#[test]
fn generation_is_deterministic_and_connected() {
    for recipe in corpus() {
        let a = generate(&recipe).unwrap();
        let b = generate(&recipe).unwrap();
        let sa = serde_json::to_string(&snowfold::io::SpaceFile::from_space(&a, Some(recipe.clone()))).unwrap();
        let sb = serde_json::to_string(&snowfold::io::SpaceFile::from_space(&b, Some(recipe.clone()))).unwrap();
        assert_eq!(sa, sb, "{}", recipe.label());
        assert!(a.is_mesh_connected(), "{}", recipe.label());
        assert!(validate_metric(&a).is_strict_metric(), "{}", recipe.label());
    }
}

#[test]
fn hierarchy_covers_are_sound_and_absorb_half_scale_paths() {
    for recipe in corpus() {
        let m = generate(&recipe).unwrap();
        let (h, _) = fold(&m, 0.5);
        for cover in &h.covers {
            assert!(verify_cover(cover, &m).is_clean(), "{} at {}", recipe.label(), cover.scale_index);
            assert!(cover.achieved_c <= 4.0);
            for k in 0..cover.color_count {
                let class: Vec<&Vec<usize>> =
                    cover.members.iter().filter(|b| b.color == k).map(|b| &b.points).collect();
                let mut union: Vec<usize> = class.iter().flat_map(|b| b.iter().copied()).collect();
                union.sort_unstable();
                union.dedup();
                for comp in r_components(&m, &union, cover.scale / 2.0).unwrap() {
                    assert!(
                        class.iter().any(|b| comp.iter().all(|p| b.contains(p))),
                        "{}: an s/2-path leaves its member",
                        recipe.label()
                    );
                }
            }
        }
    }
}

#[test]
fn color_count_settles_to_one_above_the_diameter() {
    let m = generate(&SpaceRecipe::grid(5)).unwrap();
    let diam = m.diam();
    let mut last = usize::MAX;
    for k in 0..8 {
        let s = diam * (1.0 + k as f64);
        let cover = build_greedy_colored_cover(&m, s).unwrap();
        assert!(cover.color_count <= last);
        last = cover.color_count;
    }
    assert_eq!(last, 1);
}

#[test]
fn per_scale_fields_are_lipschitz() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for recipe in corpus() {
        let m = generate(&recipe).unwrap();
        let (h, _) = fold(&m, 0.5);
        let k = h.global_k as f64;
        for field in scale_fields(&m, &h) {
            let s = h.params.r.powi(field.scale_index);
            for _ in 0..400 {
                let (x, y) = (rng.gen_range(0..m.len()), rng.gen_range(0..m.len()));
                let gap: f64 = field.phi[x]
                    .iter()
                    .zip(&field.phi[y])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                assert!(gap <= 2.0 * k / s * m.dist(x, y) + 1e-12, "{}", recipe.label());
            }
        }
    }
}

#[test]
fn some_bump_is_full_at_every_point() {
    for recipe in corpus() {
        let m = generate(&recipe).unwrap();
        let (h, _) = fold(&m, 0.5);
        for cover in &h.covers {
            let membership = cover.membership(m.len());
            for x in 0..m.len() {
                let full = cover.members.iter().enumerate().any(|(b, member)| {
                    snowfold::embedding::bump(&m, &member.points, x, h.params.r, cover.scale_index) == 1.0
                        && membership[b][x]
                });
                assert!(full, "{}: no full bump at {x}, scale {}", recipe.label(), cover.scale_index);
            }
        }
    }
}

#[test]
fn phi_coordinates_stay_in_unit_range() {
    for recipe in corpus() {
        let m = generate(&recipe).unwrap();
        let (h, _) = fold(&m, 0.5);
        for field in scale_fields(&m, &h) {
            assert!(field.phi.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn base_point_only_translates_the_map() {
    for recipe in corpus() {
        let m = generate(&recipe).unwrap();
        let (h, a) = fold(&m, 0.5);
        let b = build_folding_map(&m, &h, m.len() - 1).unwrap();
        for x in 0..m.len() {
            for y in 0..m.len() {
                for k in 0..a.target_dim {
                    let da = a.values.rows[x][k] - a.values.rows[y][k];
                    let db = b.values.rows[x][k] - b.values.rows[y][k];
                    assert!((da - db).abs() <= 1e-9);
                }
            }
        }
    }
}

#[test]
fn color_capture_holds_across_the_corpus() {
    for recipe in corpus() {
        let m = generate(&recipe).unwrap();
        let (h, f) = fold(&m, 0.5);
        let report = color_capture_sweep(&m, &h, &f, 4.0);
        assert!(report.violations.is_empty(), "{}: {:?}", recipe.label(), report.violations.first());
    }
}

#[test]
fn lightness_witnesses_are_reproducible() {
    let m = generate(&SpaceRecipe::new(SpaceKind::StarTree { arms: 3, depth: 4 })).unwrap();
    let (_, f) = fold(&m, 0.5);
    let snow = m.snowflake(0.5).unwrap();
    let runs: Vec<LightEstimate> =
        (0..3).map(|_| lightness_constant(&f.values, &snow, &ProbeSettings::default()).unwrap()).collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[1], runs[2]);
}

#[test]
fn lightness_respects_the_preservation_bound_on_small_spaces() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut spaces = vec![
        generate(&SpaceRecipe::interval(10)).unwrap(),
        generate(&SpaceRecipe::grid(3)).unwrap(),
        generate(&SpaceRecipe::new(SpaceKind::StarTree { arms: 3, depth: 3 })).unwrap(),
    ];
    for g in 0..12 {
        let n = rng.gen_range(5..=12);
        let edges = random_connected_graph(n, rng.gen_range(0..n), &mut rng);
        spaces.push(graph_space(format!("g{g}"), n, &edges).unwrap());
    }
    for eps in [0.5, 0.75] {
        for m in &spaces {
            let (_, f) = fold(m, eps);
            let profile = diameter_preservation_profile(&f.values, m, eps, 0).unwrap();
            assert!(profile.exhaustive);
            if profile.min_ratio == 0.0 {
                continue;
            }
            let a = profile.max_ratio.max(1.0 / profile.min_ratio);
            let b = bounded_turning_constant(m).unwrap().constant;
            let light = lightness_constant(&f.values, &m.snowflake(eps).unwrap(), &ProbeSettings::default()).unwrap();
            let bound = preservation_light_bound(a, b, eps);
            assert!(light.constant <= bound + 1e-9, "{}: {} > {bound}", m.label(), light.constant);
        }
    }
}

#[test]
fn pullback_is_minimal_over_random_connected_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let edges = random_connected_graph(11, 6, &mut rng);
    let m = graph_space("g11", 11, &edges).unwrap();
    let (_, f) = fold(&m, 0.5);
    let pb = pullback_metric(&m, &f.values, false).unwrap();
    let adj = m.mesh_graph();
    let mut checked = 0;
    while checked < 1000 {
        // random connected set grown from a random vertex
        let mut set = vec![rng.gen_range(0..11)];
        let target = rng.gen_range(2..=11);
        while set.len() < target {
            let from = set[rng.gen_range(0..set.len())];
            let next = adj[from][rng.gen_range(0..adj[from].len())];
            if !set.contains(&next) {
                set.push(next);
            }
        }
        let image = f.values.image_diameter(&set);
        for &x in &set {
            for &y in &set {
                assert!(pb.distances[x][y] <= image + 1e-12);
                assert!(f.values.image_dist(x, y) <= pb.distances[x][y] + 1e-12);
            }
        }
        checked += 1;
    }
}

#[test]
fn factorization_on_a_seven_vertex_tree() {
    let edges = [(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)];
    let m = graph_space("tree7", 7, &edges).unwrap();
    let (_, f) = fold(&m, 0.5);
    let report = factorization_check(&m, &f.values).unwrap();
    assert!(report.passed(), "{report:?}");
    assert!(report.max_diameter_gap <= 1e-9);
    let pb = pullback_metric(&m, &f.values, false).unwrap();
    assert!(validate_metric(&pb).is_valid());
}

#[test]
fn identity_to_pullback_has_a_finite_envelope() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let edges = random_connected_graph(10, 4, &mut rng);
    let m = graph_space("g10", 10, &edges).unwrap();
    let (_, f) = fold(&m, 0.5);
    let pb = pullback_metric(&m, &f.values, false).unwrap();
    for mode in [ProfileMode::Qs, ProfileMode::Branched] {
        let p = distortion_profile(&m, &pb, mode, Some(&m), &ProfileSettings::default()).unwrap();
        assert!(p.samples > 0);
        assert!(p.envelope.iter().all(|[t, v]| t.is_finite() && v.is_finite()));
        assert!(p.envelope.windows(2).all(|w| w[0][1] <= w[1][1]));
    }
}

#[test]
fn covers_round_trip_through_json() {
    let m = generate(&SpaceRecipe::grid(4)).unwrap();
    let (h, _) = fold(&m, 0.5);
    let text = serde_json::to_string(&h).unwrap();
    let back: CoverHierarchy = serde_json::from_str(&text).unwrap();
    assert_eq!(back, h);
}
