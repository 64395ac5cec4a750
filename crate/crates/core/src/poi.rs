//! Points of interest: k-means, Gaussian-mixture EM and Stein variational super-samples.

use std::fmt;

use log::warn;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::density::{log_sum_exp, DensityError, DensityField, GaussianComponent, GaussianMixture};
use crate::geometry::{ConvexPolygon, Vec2};
use crate::linalg::Sym2;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoiError {
    #[error("need at least {needed} data points, got {got}")]
    NotEnoughData { needed: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("EM log-likelihood fell from {previous} to {current} at iteration {iter}")]
    EmNotMonotone { iter: usize, previous: f64, current: f64 },
    #[error(transparent)]
    Density(#[from] DensityError),
}

/// SVGD kernel bandwidth rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth<T> {
    /// `h = median pairwise squared distance / ln n`
    Median,
    /// `h = r²`, spreading particles at the service radius `r`.
    Footprint(T),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance<T> {
    KMeans { k: usize },
    Gmm {
        components: usize,
        weights: Vec<T>,
        covariances: Vec<Sym2<T>>,
    },
    Svgd { n: usize, bandwidth: Bandwidth<T> },
}

impl<T: Scalar> fmt::Display for Provenance<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::KMeans { k } => write!(f, "kmeans(k={k})"),
            Provenance::Gmm { components, .. } => write!(f, "gmm(n={components})"),
            Provenance::Svgd { n, bandwidth } => match bandwidth {
                Bandwidth::Median => write!(f, "svgd(n={n};h=median)"),
                Bandwidth::Footprint(r) => write!(f, "svgd(n={n};h=footprint:{r})"),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoiSet<T> {
    pub points: Vec<Vec2<T>>,
    pub provenance: Provenance<T>,
}

impl<T: Scalar> PoiSet<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// True when all points lie in `w` and no two are closer than `1e-9`.
    pub fn is_valid_in(&self, w: &ConvexPolygon<T>) -> bool {
        let sep = T::lit(1e-9);
        let tol = T::geo_eps();
        self.points.iter().all(|p| w.contains_with(*p, tol))
            && self
                .points
                .iter()
                .enumerate()
                .all(|(i, p)| self.points[i + 1..].iter().all(|q| p.dist(*q) > sep))
    }

    /// `x,y,provenance` rows with a header.
    pub fn to_csv(&self) -> String {
        let tag = self.provenance.to_string();
        let mut out = String::from("x,y,provenance\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.x, p.y, tag));
        }
        out
    }
}

fn nearest<T: Scalar>(centers: &[Vec2<T>], q: Vec2<T>) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (i, c) in centers.iter().enumerate() {
        let d = c.dist_sq(q);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn kmeanspp<T: Scalar, R: Rng>(data: &[Vec2<T>], k: usize, rng: &mut R) -> Vec<Vec2<T>> {
    let mut centers = vec![data[rng.random_range(0..data.len())]];
    let mut d2: Vec<T> = data.iter().map(|p| p.dist_sq(centers[0])).collect();
    while centers.len() < k {
        let w: Vec<f64> = d2.iter().map(|d| d.to_f64_lossy()).collect();
        let idx = match WeightedIndex::new(&w) {
            Ok(dist) => dist.sample(rng),
            // every point already coincides with a center
            Err(_) => rng.random_range(0..data.len()),
        };
        let c = data[idx];
        centers.push(c);
        for (d, p) in d2.iter_mut().zip(data) {
            *d = d.min(p.dist_sq(c));
        }
    }
    centers
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult<T> {
    pub pois: PoiSet<T>,
    pub labels: Vec<usize>,
    pub inertia: T,
    /// Inertia after each assignment step; non-increasing.
    pub inertia_trace: Vec<T>,
    pub iterations: usize,
}

/// Lloyd's k-means with seeded k-means++ initialization.
pub fn kmeans<T: Scalar>(
    data: &[Vec2<T>],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<KMeansResult<T>, PoiError> {
    if k == 0 {
        return Err(PoiError::InvalidInput("k must be at least 1".into()));
    }
    if data.len() < k {
        return Err(PoiError::NotEnoughData {
            needed: k,
            got: data.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeanspp(data, k, &mut rng);
    let mut labels: Vec<usize> = vec![usize::MAX; data.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iters.max(1) {
        iterations += 1;
        let assigned: Vec<(usize, T)> = data.par_iter().map(|p| nearest(&centers, *p)).collect();
        let changed = assigned.iter().zip(&labels).any(|(a, l)| a.0 != *l);
        labels = assigned.iter().map(|a| a.0).collect();
        trace.push(assigned.iter().map(|a| a.1).sum());
        if !changed {
            break;
        }
        let mut sums = vec![Vec2::zero(); k];
        let mut counts = vec![0usize; k];
        for (p, l) in data.iter().zip(&labels) {
            sums[*l] += *p;
            counts[*l] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c] / T::from_usize_lossy(counts[c]);
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let (far, _) = data
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, p.dist_sq(centers[labels[i]])))
                    .fold((0, T::neg_infinity()), |b, x| if x.1 > b.1 { x } else { b });
                warn!("k-means cluster {c} emptied; reseeding at data point {far}");
                centers[c] = data[far];
                labels[far] = c;
            }
        }
    }
    let inertia = data
        .iter()
        .zip(&labels)
        .map(|(p, l)| p.dist_sq(centers[*l]))
        .sum();
    Ok(KMeansResult {
        pois: PoiSet {
            points: centers,
            provenance: Provenance::KMeans { k },
        },
        labels,
        inertia,
        inertia_trace: trace,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit<T> {
    pub pois: PoiSet<T>,
    pub mixture: GaussianMixture<T>,
    /// Plain data log-likelihood after each EM iteration.
    pub log_likelihood: Vec<T>,
    /// Ridge-penalized log-likelihood `Σ_i log Σ_k π_k N(x_i | μ_k, Σ_k) e^{−reg tr(Σ_k⁻¹)/2}`,
    /// the quantity EM with covariance ridge `reg·I` provably increases.
    pub penalized_log_likelihood: Vec<T>,
    pub iterations: usize,
}

struct EmParams<T> {
    weights: Vec<T>,
    means: Vec<Vec2<T>>,
    covs: Vec<Sym2<T>>,
}

impl<T: Scalar> EmParams<T> {
    fn components(&self) -> Result<Vec<GaussianComponent<T>>, DensityError> {
        (0..self.weights.len())
            .map(|k| GaussianComponent::new(self.weights[k], self.means[k], self.covs[k]))
            .collect()
    }
}

/// Log responsibilities (row-major `n × K`), plain and penalized log-likelihoods.
fn e_step<T: Scalar>(data: &[Vec2<T>], comps: &[GaussianComponent<T>], reg: T) -> (Vec<T>, T, T) {
    let pen: Vec<T> = comps
        .iter()
        .map(|c| T::lit(0.5) * reg * c.precision().trace())
        .collect();
    let rows: Vec<(Vec<T>, T, T)> = data
        .par_iter()
        .map(|x| {
            let logs: Vec<T> = comps.iter().map(|c| c.weight.ln() + c.log_pdf(*x)).collect();
            let lse = log_sum_exp(&logs);
            let pl: Vec<T> = logs.iter().zip(&pen).map(|(l, p)| *l - *p).collect();
            let plse = log_sum_exp(&pl);
            (pl.iter().map(|l| *l - plse).collect(), lse, plse)
        })
        .collect();
    let mut resp = Vec::with_capacity(data.len() * comps.len());
    let (mut ll, mut pll) = (T::zero(), T::zero());
    for (r, a, b) in rows {
        resp.extend(r);
        ll += a;
        pll += b;
    }
    (resp, ll, pll)
}

/// Expectation-maximization for a `K`-component bivariate mixture, initialized from
/// k-means; covariances carry a ridge `reg·I`.
pub fn gmm_em<T: Scalar>(
    data: &[Vec2<T>],
    n_components: usize,
    seed: u64,
    max_iters: usize,
    reg: T,
) -> Result<GmmFit<T>, PoiError> {
    if !(reg > T::zero()) {
        return Err(PoiError::InvalidInput("reg must be positive".into()));
    }
    let km = kmeans(data, n_components, seed, 100)?;
    let k = n_components;
    let n = data.len();
    let ridge = Sym2::scaled_identity(reg);
    let mut params = EmParams {
        weights: vec![T::zero(); k],
        means: km.pois.points.clone(),
        covs: vec![ridge; k],
    };
    let mut counts = vec![0usize; k];
    for l in &km.labels {
        counts[*l] += 1;
    }
    let mut scatter = vec![Sym2::diag(T::zero(), T::zero()); k];
    for (x, l) in data.iter().zip(&km.labels) {
        scatter[*l] = scatter[*l].add(&Sym2::outer(*x - params.means[*l]));
    }
    for c in 0..k {
        params.weights[c] = T::from_usize_lossy(counts[c]) / T::from_usize_lossy(n);
        params.covs[c] = scatter[c]
            .scale(T::one() / T::from_usize_lossy(counts[c].max(1)))
            .add(&ridge);
    }
    let global_cov = {
        let mean = data.iter().fold(Vec2::zero(), |a, b| a + *b) / T::from_usize_lossy(n);
        data.iter()
            .fold(Sym2::diag(T::zero(), T::zero()), |a, x| a.add(&Sym2::outer(*x - mean)))
            .scale(T::one() / T::from_usize_lossy(n))
            .add(&ridge)
    };

    let mut ll_trace = Vec::new();
    let mut pll_trace: Vec<T> = Vec::new();
    let mut comps = params.components()?;
    let mut iterations = 0;
    let mut reseeded = false;
    for iter in 0..max_iters.max(1) {
        iterations = iter + 1;
        let (log_resp, ll, pll) = e_step(data, &comps, reg);
        if let Some(prev) = pll_trace.last() {
            let slack = T::lit(1e-8) * T::one().max(prev.abs());
            if !reseeded && pll < *prev - slack {
                return Err(PoiError::EmNotMonotone {
                    iter,
                    previous: prev.to_f64_lossy(),
                    current: pll.to_f64_lossy(),
                });
            }
        }
        reseeded = false;
        let converged = pll_trace
            .last()
            .is_some_and(|prev| (pll - *prev).abs() <= T::lit(1e-12) * T::one().max(pll.abs()));
        ll_trace.push(ll);
        pll_trace.push(pll);
        if converged {
            break;
        }
        // M-step
        let resp: Vec<T> = log_resp.iter().map(|l| l.exp()).collect();
        for c in 0..k {
            let nk: T = (0..n).map(|i| resp[i * k + c]).sum();
            if nk < T::lit(1e-10) {
                let worst = (0..n)
                    .map(|i| (i, comps.iter().map(|cp| cp.weight * cp.pdf(data[i])).sum::<T>()))
                    .fold((0, T::infinity()), |b, x| if x.1 < b.1 { x } else { b })
                    .0;
                warn!("mixture component {c} degenerate; reseeding at data point {worst}");
                params.means[c] = data[worst];
                params.covs[c] = global_cov;
                params.weights[c] = T::one() / T::from_usize_lossy(n);
                reseeded = true;
                continue;
            }
            let mean = (0..n).fold(Vec2::zero(), |a, i| a + data[i] * resp[i * k + c]) / nk;
            let s = (0..n).fold(Sym2::diag(T::zero(), T::zero()), |a, i| {
                a.add(&Sym2::outer(data[i] - mean).scale(resp[i * k + c]))
            });
            params.weights[c] = nk / T::from_usize_lossy(n);
            params.means[c] = mean;
            params.covs[c] = s.scale(T::one() / nk).add(&ridge);
        }
        let total: T = params.weights.iter().copied().sum();
        params.weights.iter_mut().for_each(|w| *w /= total);
        comps = params.components()?;
    }
    let mixture = GaussianMixture::new(comps)?;
    Ok(GmmFit {
        pois: PoiSet {
            points: params.means.clone(),
            provenance: Provenance::Gmm {
                components: k,
                weights: params.weights.clone(),
                covariances: params.covs.clone(),
            },
        },
        mixture,
        log_likelihood: ll_trace,
        penalized_log_likelihood: pll_trace,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvgdResult<T> {
    pub pois: PoiSet<T>,
    /// Largest particle displacement of each iteration.
    pub displacement: Vec<T>,
}

fn median_bandwidth<T: Scalar>(x: &[Vec2<T>]) -> T {
    let n = x.len();
    if n < 2 {
        return T::one();
    }
    let mut d: Vec<T> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(x[i].dist_sq(x[j]));
        }
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let m = d.len();
    let med = if m % 2 == 1 {
        d[m / 2]
    } else {
        (d[m / 2 - 1] + d[m / 2]) * T::lit(0.5)
    };
    let log_n = T::from_usize_lossy(n).ln();
    (med / log_n).max(T::lit(1e-12))
}

/// Stein variational gradient descent toward `phi` with RBF kernel
/// `k(x, y) = exp(−‖x − y‖² / h)`; particles are projected back onto `W` after each step.
pub fn svgd<T: Scalar>(
    phi: &DensityField<T>,
    n_particles: usize,
    bandwidth: Bandwidth<T>,
    step: T,
    iters: usize,
    seed: u64,
) -> Result<SvgdResult<T>, PoiError> {
    if n_particles == 0 {
        return Err(PoiError::InvalidInput("need at least one particle".into()));
    }
    if !(step > T::zero()) {
        return Err(PoiError::InvalidInput("step must be positive".into()));
    }
    if let Bandwidth::Footprint(r) = bandwidth {
        if !(r > T::zero()) {
            return Err(PoiError::InvalidInput("footprint radius must be positive".into()));
        }
    }
    let w = phi.workspace();
    let mut x = phi.sample(n_particles, seed);
    let inv_n = T::one() / T::from_usize_lossy(n_particles);
    let two = T::lit(2.0);
    let mut displacement = Vec::with_capacity(iters);
    for _ in 0..iters {
        let h = match bandwidth {
            Bandwidth::Median => median_bandwidth(&x),
            Bandwidth::Footprint(r) => r * r,
        };
        let grads: Vec<Vec2<T>> = x
            .par_iter()
            .map(|p| phi.grad_log(*p).unwrap_or_else(|_| Vec2::zero()))
            .collect();
        let next: Vec<Vec2<T>> = x
            .par_iter()
            .map(|xi| {
                let mut drift = Vec2::zero();
                for (xj, gj) in x.iter().zip(&grads) {
                    let d = *xj - *xi;
                    let k = (-d.norm_sq() / h).exp();
                    drift += *gj * k - d * (two * k / h);
                }
                w.project(*xi + drift * (step * inv_n))
            })
            .collect();
        let moved = x
            .iter()
            .zip(&next)
            .map(|(a, b)| a.dist(*b))
            .fold(T::zero(), |m, d| m.max(d));
        displacement.push(moved);
        x = next;
    }
    Ok(SvgdResult {
        pois: PoiSet {
            points: x,
            provenance: Provenance::Svgd {
                n: n_particles,
                bandwidth,
            },
        },
        displacement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    type P = Vec2<f64>;

    fn blob(center: P, sigma: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<P> {
        (0..n)
            .map(|_| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                center + P::new(a, b) * sigma
            })
            .collect()
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = blob(P::new(0.3, 0.6), 0.1, 200, &mut rng);
        let mean = data.iter().fold(P::zero(), |a, b| a + *b) / 200.0;
        let r = kmeans(&data, 1, 7, 50).unwrap();
        assert!(r.pois.points[0].dist(mean) < 1e-12);
    }

    #[test]
    fn two_blobs_are_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut data = blob(P::new(0.0, 0.0), 0.01, 100, &mut rng);
        data.extend(blob(P::new(1.0, 1.0), 0.01, 100, &mut rng));
        let r = kmeans(&data, 2, 3, 100).unwrap();
        for target in [P::new(0.0, 0.0), P::new(1.0, 1.0)] {
            assert!(r.pois.points.iter().any(|c| c.dist(target) < 0.05));
        }
    }

    #[test]
    fn k_equal_to_n_has_zero_inertia() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = blob(P::new(0.5, 0.5), 0.2, 12, &mut rng);
        let r = kmeans(&data, 12, 0, 10).unwrap();
        assert_eq!(r.inertia, 0.0);
        for p in &data {
            assert!(r.pois.points.contains(p));
        }
    }

    #[test]
    fn single_component_em_is_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = blob(P::new(0.2, -0.1), 0.3, 500, &mut rng);
        let reg = 1e-6;
        let fit = gmm_em(&data, 1, 0, 50, reg).unwrap();
        let n = data.len() as f64;
        let mean = data.iter().fold(P::zero(), |a, b| a + *b) / n;
        let mut cov = Sym2::diag(0.0, 0.0);
        for x in &data {
            cov = cov.add(&Sym2::outer(*x - mean));
        }
        let cov = cov.scale(1.0 / n).add(&Sym2::scaled_identity(reg));
        let c = &fit.mixture.components()[0];
        assert!(c.mean.dist(mean) < 1e-8);
        assert!((c.covariance.xx - cov.xx).abs() < 1e-8);
        assert!((c.covariance.xy - cov.xy).abs() < 1e-8);
        assert!((c.covariance.yy - cov.yy).abs() < 1e-8);
    }

    #[test]
    fn svgd_single_particle_climbs_to_mode() {
        let mix = GaussianMixture::single(P::new(0.4, 0.55), Sym2::scaled_identity(0.01)).unwrap();
        let phi = DensityField::gmm(ConvexPolygon::unit_square(), mix).unwrap();
        let r = svgd(&phi, 1, Bandwidth::Median, 0.002, 2000, 9).unwrap();
        assert!(r.pois.points[0].dist(P::new(0.4, 0.55)) < 1e-3);
    }

    #[test]
    fn provenance_in_csv() {
        let set = PoiSet {
            points: vec![P::new(0.5, 0.25)],
            provenance: Provenance::KMeans { k: 1 },
        };
        assert_eq!(set.to_csv(), "x,y,provenance\n0.5,0.25,kmeans(k=1)\n");
    }
}
