use coverage_core::coverage::{agents_from, build_partition, run_descent, PartitionKind, DESCENT_SLACK};
use coverage_core::density::{DensityField, GaussianComponent, GaussianMixture};
use coverage_core::geometry::{ConvexPolygon, Vec2};
use coverage_core::linalg::Sym2;
use proptest::prelude::*;

type P = Vec2<f64>;

fn sites() -> impl Strategy<Value = Vec<P>> {
    prop::collection::vec((0.05f64..0.95, 0.05f64..0.95), 1..6).prop_filter_map("distinct", |v| {
        let pts: Vec<P> = v.into_iter().map(|(x, y)| P::new(x, y)).collect();
        pts.iter()
            .enumerate()
            .all(|(i, p)| pts[..i].iter().all(|q| q.dist(*p) > 1e-2))
            .then_some(pts)
    })
}

fn density() -> impl Strategy<Value = DensityField<f64>> {
    prop_oneof![
        Just(DensityField::uniform(ConvexPolygon::unit_square())),
        (0.3f64..0.7, 0.3f64..0.7, 0.01f64..0.05).prop_map(|(x, y, s)| {
            let m = GaussianMixture::single(P::new(x, y), Sym2::diag(s, 0.5 * s)).unwrap();
            DensityField::gmm(ConvexPolygon::unit_square(), m).unwrap()
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn descent_is_monotone_and_ends_centroidal(phi in density(), sites in sites(), power in any::<bool>(), rho in 0.0f64..0.2) {
        let kind = if power { PartitionKind::Power } else { PartitionKind::Voronoi };
        let radii: Vec<f64> = (0..sites.len()).map(|i| rho * (i % 3) as f64).collect();
        let agents = agents_from(&sites, power.then_some(&radii[..]));
        let tol = 1e-6;
        let traj = run_descent(&phi, &agents, kind, 3000, tol).unwrap();
        for w in traj.costs().windows(2) {
            prop_assert!(w[1] <= w[0] + DESCENT_SLACK * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
        if traj.converged {
            let part = build_partition(&phi, &traj.final_agents, kind).unwrap();
            for (a, c) in traj.final_agents.iter().zip(&part.centroids) {
                if let Some(c) = c {
                    prop_assert!(a.position.dist(*c) < tol);
                }
            }
        }
    }
}

#[test]
fn single_precision_descent_reaches_center() {
    let phi = DensityField::<f32>::uniform(ConvexPolygon::unit_square());
    let traj = run_descent(&phi, &agents_from(&[Vec2::new(0.2f32, 0.9)], None), PartitionKind::Voronoi, 50, 1e-5).unwrap();
    assert!(traj.converged);
    assert!(traj.final_positions()[0].dist(Vec2::new(0.5, 0.5)) < 1e-4);
}

fn four_modes() -> (DensityField<f64>, [P; 4]) {
    let modes = [P::new(0.25, 0.25), P::new(0.75, 0.25), P::new(0.25, 0.75), P::new(0.75, 0.75)];
    let comps = modes
        .iter()
        .map(|m| GaussianComponent::new(0.25, *m, Sym2::scaled_identity(0.01)).unwrap())
        .collect();
    (DensityField::gmm(ConvexPolygon::unit_square(), GaussianMixture::new(comps).unwrap()).unwrap(), modes)
}

fn nearest_mode(p: P, modes: &[P]) -> (usize, f64) {
    (0..modes.len()).map(|j| (j, p.dist(modes[j]))).fold((0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b })
}

#[test]
fn voronoi_lloyd_spreads_four_agents_over_four_modes() {
    let (phi, modes) = four_modes();
    let start = [P::new(0.45, 0.40), P::new(0.55, 0.45), P::new(0.50, 0.60), P::new(0.40, 0.55)];
    let traj = run_descent(&phi, &agents_from(&start, None), PartitionKind::Voronoi, 200, 1e-7).unwrap();
    let mut owned: Vec<usize> = traj
        .final_positions()
        .iter()
        .map(|p| {
            let (j, d) = nearest_mode(*p, &modes);
            assert!(d < 0.2, "{p:?} is {d} from mode {j}");
            j
        })
        .collect();
    owned.sort();
    owned.dedup();
    assert_eq!(owned.len(), 4);
}

#[test]
fn three_agents_on_four_modes_leave_one_in_between() {
    let (phi, modes) = four_modes();
    let start = [P::new(0.45, 0.40), P::new(0.55, 0.45), P::new(0.50, 0.60)];
    let traj = run_descent(&phi, &agents_from(&start, None), PartitionKind::Voronoi, 1000, 1e-7).unwrap();
    assert!(traj.converged);
    let fin = traj.final_positions();
    let between = fin.iter().any(|p| {
        let mut d: Vec<f64> = modes.iter().map(|m| p.dist(*m)).collect();
        d.sort_by(f64::total_cmp);
        d[0] > 0.2 && (d[1] - d[0]) < 0.05
    });
    assert!(between, "{fin:?}");
}
