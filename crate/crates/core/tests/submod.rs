use coverage_core::geometry::Vec2;
use coverage_core::submod::{
    brute_force_opt, greedy_partition, greedy_uniform, BlockOrder, ExemplarClustering, HeterogeneousCoverage, Matroid,
    MaxCover, SetFunction,
};
use proptest::prelude::*;

type P = Vec2<f64>;

fn max_cover() -> impl Strategy<Value = MaxCover<f64>> {
    (
        prop::collection::vec(prop::collection::vec(0usize..15, 1..6), 2..10),
        prop::collection::vec(0.1f64..1.0, 15),
    )
        .prop_map(|(sets, w)| MaxCover::new(sets, w).unwrap())
}

fn exemplar() -> impl Strategy<Value = ExemplarClustering<f64>> {
    (
        prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..10),
        prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..30),
    )
        .prop_map(|(c, d)| {
            let pts = |v: Vec<(f64, f64)>| v.into_iter().map(|(x, y)| P::new(x, y)).collect();
            ExemplarClustering::with_diameter(pts(c), pts(d), 2f64.sqrt()).unwrap()
        })
}

fn subset_pair(n: usize, mask_a: u32, mask_b: u32) -> (Vec<usize>, Vec<usize>) {
    let b: Vec<usize> = (0..n).filter(|i| mask_b >> i & 1 == 1).collect();
    let a: Vec<usize> = b.iter().copied().filter(|i| mask_a >> i & 1 == 1).collect();
    (a, b)
}

fn monotone<F: SetFunction<f64>>(f: &F, mask_a: u32, mask_b: u32) -> bool {
    let (a, b) = subset_pair(f.ground_size(), mask_a, mask_b);
    f.eval(&a) <= f.eval(&b) + 1e-9
}

/// Gains reported by greedy never exceed the best remaining gain and never rise.
fn greedy_trace_is_consistent<F: SetFunction<f64>>(f: &F, k: usize) -> bool {
    let r = greedy_uniform(f, k).unwrap();
    let gains_fall = r.trace.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-9);
    let total: f64 = r.trace.iter().map(|t| t.1).sum();
    gains_fall && (total + f.eval(&[]) - r.value).abs() < 1e-9 && (f.eval(&r.selected) - r.value).abs() < 1e-9
}

proptest! {
    #[test]
    fn max_cover_is_monotone(f in max_cover(), a in any::<u32>(), b in any::<u32>()) {
        prop_assert!(monotone(&f, a, b));
    }

    #[test]
    fn exemplar_is_monotone(f in exemplar(), a in any::<u32>(), b in any::<u32>()) {
        prop_assert!(monotone(&f, a, b));
    }

    #[test]
    fn greedy_traces_are_consistent(f in max_cover(), g in exemplar(), k in 1usize..4) {
        prop_assert!(greedy_trace_is_consistent(&f, k.min(f.ground_size())));
        prop_assert!(greedy_trace_is_consistent(&g, k.min(g.ground_size())));
    }

    #[test]
    fn greedy_is_deterministic(f in exemplar(), k in 1usize..4) {
        let k = k.min(f.ground_size());
        prop_assert_eq!(greedy_uniform(&f, k).unwrap(), greedy_uniform(&f, k).unwrap());
        let n = f.ground_size();
        let blocks = vec![(0..n / 2).collect::<Vec<_>>(), (n / 2..n).collect()];
        prop_assert_eq!(
            greedy_partition(&f, &blocks, &BlockOrder::Descending).unwrap(),
            greedy_partition(&f, &blocks, &BlockOrder::Descending).unwrap()
        );
    }
}

const NWF: f64 = 1.0 - 1.0 / std::f64::consts::E;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn greedy_max_cover_of_twelve_sets_meets_bound(
        sets in prop::collection::vec(prop::collection::vec(0usize..20, 1..7), 12),
        w in prop::collection::vec(0.1f64..1.0, 20),
    ) {
        let f = MaxCover::new(sets, w).unwrap();
        let greedy = greedy_uniform(&f, 3).unwrap().value;
        let (_, opt) = brute_force_opt(&f, &Matroid::Uniform { k: 3 }).unwrap();
        prop_assert!(greedy >= NWF * opt - 1e-12, "{} vs {}", greedy, opt);
    }

    #[test]
    fn partition_greedy_on_heterogeneous_coverage_meets_half_bound(
        radii in prop::collection::vec(0.05f64..0.4, 3),
        pois in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 6),
        data in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 10..60),
    ) {
        let pts = |v: Vec<(f64, f64)>| v.into_iter().map(|(x, y)| P::new(x, y)).collect::<Vec<_>>();
        let data = pts(data);
        let w = vec![1.0 / data.len() as f64; data.len()];
        let f = HeterogeneousCoverage::new(&radii, &pts(pois), &data, w).unwrap();
        let blocks = f.blocks();
        let greedy = greedy_partition(&f, &blocks, &BlockOrder::Ascending).unwrap();
        let value = f.eval(&greedy.selected());
        let (_, opt) = brute_force_opt(&f, &Matroid::Partition { blocks }).unwrap();
        prop_assert!(value >= 0.5 * opt - 1e-12, "{} vs {}", value, opt);
    }
}

#[test]
fn data_harvesting_greedy_meets_bound_on_fifty_instances() {
    use rand::{Rng, SeedableRng};
    let mut worst = f64::INFINITY;
    for seed in 0..50 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| (0..n).map(|_| P::new(rng.random(), rng.random())).collect::<Vec<_>>();
        let harvesters = draw(10);
        let data = draw(40);
        let f = ExemplarClustering::with_diameter(harvesters, data, 2f64.sqrt()).unwrap();
        let greedy = greedy_uniform(&f, 3).unwrap().value;
        let (_, opt) = brute_force_opt(&f, &Matroid::Uniform { k: 3 }).unwrap();
        worst = worst.min(greedy / opt);
    }
    assert!(worst >= NWF, "{worst}");
}
