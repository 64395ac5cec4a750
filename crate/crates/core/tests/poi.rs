use coverage_core::density::{DensityField, GaussianComponent, GaussianMixture};
use coverage_core::geometry::{ConvexPolygon, Vec2};
use coverage_core::linalg::Sym2;
use coverage_core::poi::{gmm_em, kmeans, svgd, Bandwidth};
use proptest::prelude::*;

type P = Vec2<f64>;

fn two_blobs() -> DensityField<f64> {
    let m = GaussianMixture::new(vec![
        GaussianComponent::new(0.5, P::new(0.3, 0.3), Sym2::scaled_identity(0.01)).unwrap(),
        GaussianComponent::new(0.5, P::new(0.7, 0.6), Sym2::diag(0.02, 0.005)).unwrap(),
    ])
    .unwrap();
    DensityField::gmm(ConvexPolygon::unit_square(), m).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn kmeans_inertia_never_rises(seed in any::<u64>(), k in 1usize..6) {
        let phi = two_blobs();
        let data = phi.sample(300, seed);
        let r = kmeans(&data, k, seed, 200).unwrap();
        for w in r.inertia_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        prop_assert!(r.pois.is_valid_in(phi.workspace()));
    }

    #[test]
    fn em_penalized_likelihood_never_drops(seed in any::<u64>(), k in 1usize..4) {
        let phi = two_blobs();
        let data = phi.sample(300, seed);
        let fit = gmm_em(&data, k, seed, 200, 1e-6).unwrap();
        for w in fit.penalized_log_likelihood.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-8 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
        prop_assert!(fit.pois.is_valid_in(phi.workspace()));
    }

    #[test]
    fn svgd_is_deterministic_and_stays_in_workspace(seed in any::<u64>(), n in 2usize..12) {
        let phi = two_blobs();
        let a = svgd(&phi, n, Bandwidth::Median, 0.005, 200, seed).unwrap();
        let b = svgd(&phi, n, Bandwidth::Median, 0.005, 200, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.pois.is_valid_in(phi.workspace()));
    }
}

fn single(mean: P, cov: Sym2<f64>) -> DensityField<f64> {
    DensityField::gmm(ConvexPolygon::unit_square(), GaussianMixture::single(mean, cov).unwrap()).unwrap()
}

fn sample_moments(points: &[P]) -> (P, Sym2<f64>) {
    let n = points.len() as f64;
    let m = points.iter().fold(P::new(0.0, 0.0), |a, p| a + *p) * (1.0 / n);
    let (mut xx, mut xy, mut yy) = (0.0, 0.0, 0.0);
    for p in points {
        let d = *p - m;
        xx += d.x * d.x;
        xy += d.x * d.y;
        yy += d.y * d.y;
    }
    (m, Sym2::new(xx / n, xy / n, yy / n))
}

fn frobenius(a: &Sym2<f64>) -> f64 {
    (a.xx * a.xx + 2.0 * a.xy * a.xy + a.yy * a.yy).sqrt()
}

#[test]
fn em_recovers_a_single_gaussian() {
    let (mean, cov) = (P::new(0.45, 0.55), Sym2::diag(0.004, 0.002).rotate(0.6));
    let n = 5000;
    let data = single(mean, cov).sample(n, 8);
    let fit = gmm_em(&data, 1, 8, 200, 1e-9).unwrap();
    let c = &fit.mixture.components()[0];
    let tol = |var: f64| 3.0 * var.sqrt() / (n as f64).sqrt();
    assert!((c.mean.x - mean.x).abs() < tol(cov.xx), "{:?}", c.mean);
    assert!((c.mean.y - mean.y).abs() < tol(cov.yy), "{:?}", c.mean);
    let err = c.covariance.add(&cov.scale(-1.0));
    // three standard errors of a sample covariance
    assert!(frobenius(&err) < 3.0 * (2.0 / n as f64).sqrt() * frobenius(&cov), "{:?}", c.covariance);
}

#[test]
fn em_splits_two_equal_components() {
    let data = two_blobs().sample(5000, 21);
    let fit = gmm_em(&data, 2, 21, 300, 1e-6).unwrap();
    let mut comps: Vec<_> = fit.mixture.components().to_vec();
    comps.sort_by(|a, b| a.mean.x.total_cmp(&b.mean.x));
    for (c, m) in comps.iter().zip([P::new(0.3, 0.3), P::new(0.7, 0.6)]) {
        assert!((c.weight - 0.5).abs() <= 0.05, "{}", c.weight);
        assert!(c.mean.dist(m) <= 0.05, "{:?}", c.mean);
    }
}

#[test]
fn svgd_median_particles_match_gaussian_moments() {
    let (mean, cov) = (P::new(0.5, 0.45), Sym2::diag(0.012, 0.006).rotate(0.3));
    let out = svgd(&single(mean, cov), 50, Bandwidth::Median, 0.005, 2000, 4).unwrap();
    let (m, s) = sample_moments(&out.pois.points);
    assert!(m.dist(mean) <= 0.05, "{m:?}");
    let err = frobenius(&s.add(&cov.scale(-1.0))) / frobenius(&cov);
    assert!(err <= 0.25, "{err} {s:?}");
}
