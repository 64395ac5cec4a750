//! Deployment costs of sending an agent to a point of interest, and the optimal
//! one-to-one assignment of agents to points.

mod hungarian;

pub use hungarian::{hungarian, hungarian_warm};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::density::{DensityError, DensityField, DiscreteMeasure, GaussianComponent};
use crate::geometry::{ConvexPolygon, GeometryError, Vec2};
use crate::linalg::Sym2;
use crate::transport::{wasserstein_exact, TransportError};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssignError {
    #[error("infeasible assignment shape: {agents} agents but only {pois} points of interest")]
    InfeasibleShape { agents: usize, pois: usize },
    #[error("cost matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("invalid service model: {0}")]
    InvalidModel(String),
    #[error("target density vanishes on {mass} of the reference mass")]
    SupportViolation { mass: f64 },
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Region an agent services around its deployment point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Footprint<T> {
    Disk { radius: T },
    /// Semi-axes at orientation 0 (`x` along the first axis).
    Ellipse { semi_axes: Vec2<T> },
    /// The 3σ ellipse of the service covariance.
    ThreeSigma,
}

/// Heterogeneous agent service description.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceModel<T> {
    /// Degradation `f(r) = r^exponent` used by [`footprint_cost`].
    pub exponent: T,
    pub footprint: Footprint<T>,
    /// Service distribution covariance at orientation 0, if Gaussian.
    pub covariance: Option<Sym2<T>>,
    /// Candidate deployment orientations.
    pub orientations: Vec<T>,
    /// Polygon resolution of curved footprints.
    pub segments: usize,
}

/// `m` angles evenly spaced on `[0, 2π)`.
pub fn even_orientations<T: Scalar>(m: usize) -> Vec<T> {
    (0..m)
        .map(|i| T::lit(std::f64::consts::TAU) * T::from_usize_lossy(i) / T::from_usize_lossy(m))
        .collect()
}

impl<T: Scalar> ServiceModel<T> {
    pub fn disk(radius: T) -> Self {
        Self {
            exponent: T::lit(2.0),
            footprint: Footprint::Disk { radius },
            covariance: None,
            orientations: even_orientations(8),
            segments: 32,
        }
    }

    pub fn gaussian(covariance: Sym2<T>) -> Self {
        Self {
            exponent: T::lit(2.0),
            footprint: Footprint::ThreeSigma,
            covariance: Some(covariance),
            orientations: even_orientations(8),
            segments: 32,
        }
    }

    pub fn with_orientations(mut self, orientations: Vec<T>) -> Self {
        self.orientations = orientations;
        self
    }

    pub fn with_footprint(mut self, footprint: Footprint<T>) -> Self {
        self.footprint = footprint;
        self
    }

    pub fn with_segments(mut self, segments: usize) -> Self {
        self.segments = segments;
        self
    }

    pub fn validate(&self) -> Result<(), AssignError> {
        let bad = |s: &str| Err(AssignError::InvalidModel(s.into()));
        if self.orientations.is_empty() {
            return bad("empty orientation set");
        }
        if self.segments < 3 {
            return bad("footprint needs at least 3 segments");
        }
        if let Some(c) = self.covariance {
            if !c.is_positive_definite() {
                return bad("service covariance is not positive definite");
            }
        }
        match self.footprint {
            Footprint::Disk { radius } if !(radius > T::zero()) => bad("disk radius must be positive"),
            Footprint::Ellipse { semi_axes } if !(semi_axes.x > T::zero() && semi_axes.y > T::zero()) => {
                bad("ellipse semi-axes must be positive")
            }
            Footprint::ThreeSigma if self.covariance.is_none() => bad("3σ footprint needs a covariance"),
            _ => Ok(()),
        }
    }

    /// Service covariance rotated by `theta`: `R Σ̄ Rᵀ`.
    pub fn covariance_at(&self, theta: T) -> Option<Sym2<T>> {
        self.covariance.map(|c| c.rotate(theta))
    }

    /// Footprint polygon centred at `p` with orientation `theta`.
    pub fn footprint_polygon(&self, p: Vec2<T>, theta: T) -> Result<ConvexPolygon<T>, AssignError> {
        let poly = match self.footprint {
            Footprint::Disk { radius } => ConvexPolygon::ellipse(p, (radius, radius), T::zero(), self.segments),
            Footprint::Ellipse { semi_axes } => ConvexPolygon::ellipse(p, (semi_axes.x, semi_axes.y), theta, self.segments),
            Footprint::ThreeSigma => {
                let cov = self
                    .covariance_at(theta)
                    .ok_or_else(|| AssignError::InvalidModel("3σ footprint needs a covariance".into()))?;
                let (l1, l2, v) = cov.eigen();
                let three = T::lit(3.0);
                ConvexPolygon::ellipse(
                    p,
                    (three * l1.sqrt(), three * l2.sqrt()),
                    v.y.atan2(v.x),
                    self.segments,
                )
            }
        };
        Ok(poly?)
    }
}

/// First minimizer of `cost(θ)` over the orientation set.
fn best_orientation<T: Scalar, F>(thetas: &[T], mut cost: F) -> Result<(T, T), AssignError>
where
    F: FnMut(T) -> Result<T, AssignError>,
{
    let mut best = (T::infinity(), thetas[0]);
    for &theta in thetas {
        let c = cost(theta)?;
        if c < best.0 {
            best = (c, theta);
        }
    }
    Ok(best)
}

/// `min_θ ∫_{C(p, θ) ∩ W} ‖q − p‖^a dφ(q)` and its minimizing orientation.
pub fn footprint_cost<T: Scalar>(
    phi: &DensityField<T>,
    model: &ServiceModel<T>,
    poi: Vec2<T>,
) -> Result<(T, T), AssignError> {
    model.validate()?;
    let two = T::lit(2.0);
    let a = model.exponent;
    best_orientation(&model.orientations, |theta| {
        let poly = model.footprint_polygon(poi, theta)?;
        let Some(clipped) = poly.intersect(phi.workspace()) else {
            return Ok(T::zero());
        };
        Ok(phi.integrate(&clipped, 0, |q| {
            let r2 = q.dist_sq(poi);
            if a == two {
                r2
            } else {
                r2.sqrt().powf(a)
            }
        }))
    })
}

/// Closed-form `KL(N(μ₀, Σ₀) ‖ N(μ₁, Σ₁))`.
pub fn gaussian_kl<T: Scalar>(mu0: Vec2<T>, s0: &Sym2<T>, mu1: Vec2<T>, s1: &Sym2<T>) -> Result<T, AssignError> {
    if !s0.is_positive_definite() || !s1.is_positive_definite() {
        return Err(DensityError::NotPositiveDefinite.into());
    }
    let inv1 = s1.inverse().ok_or(DensityError::NotPositiveDefinite)?;
    let d = mu1 - mu0;
    let kl = T::lit(0.5) * (inv1.trace_product(s0) + inv1.quad_form(d) - T::lit(2.0) + (s1.det() / s0.det()).ln());
    Ok(kl.max(T::zero()))
}

/// `KL(ψ ‖ φ) = ∫ ψ log(ψ/φ)` over `region`, both densities renormalized on it.
///
/// `extra` adds midpoint refinements to the quadrature of `psi`.
pub fn kl_divergence<T: Scalar>(
    psi: &DensityField<T>,
    phi: &DensityField<T>,
    region: &ConvexPolygon<T>,
    extra: u32,
) -> Result<T, AssignError> {
    let floor = phi.peak() * T::lit(1e-12);
    let mut nodes: Vec<(T, T, T)> = Vec::new();
    psi.for_each_node(region, extra, &mut |q, w| nodes.push((w, psi.eval(q), phi.eval(q))));
    let zpsi: T = nodes.iter().map(|n| n.0 * n.1).sum();
    let zphi: T = nodes.iter().map(|n| n.0 * n.2).sum();
    if !(zpsi > T::zero()) || !(zphi > T::zero()) {
        return Err(DensityError::ZeroMass.into());
    }
    let mut bad = T::zero();
    let mut kl = T::zero();
    for (w, a, b) in nodes {
        if a <= T::zero() {
            continue;
        }
        if b < floor {
            bad += w * a / zpsi;
            continue;
        }
        let pa = a / zpsi;
        kl += w * pa * (pa / (b / zphi)).ln();
    }
    if bad > T::lit(1e-6) {
        return Err(AssignError::SupportViolation { mass: bad.to_f64_lossy() });
    }
    Ok(kl.max(T::zero()))
}

/// `ω(π_j) · min_θ KL(N(p_j, Σ̄(θ)) ‖ N(p_j, Σ_j))` and its minimizer, for a caller
/// supplied weighting `ω`.
pub fn kld_cost_weighted<T: Scalar>(
    model: &ServiceModel<T>,
    component: &GaussianComponent<T>,
    omega: impl Fn(T) -> T,
) -> Result<(T, T), AssignError> {
    model.validate()?;
    if model.covariance.is_none() {
        return Err(AssignError::InvalidModel("KL cost needs a Gaussian service".into()));
    }
    let w = omega(component.weight);
    let (c, theta) = best_orientation(&model.orientations, |theta| {
        let s = model.covariance_at(theta).expect("checked above");
        gaussian_kl(component.mean, &s, component.mean, &component.covariance)
    })?;
    Ok((w * c, theta))
}

/// [`kld_cost_weighted`] with `ω ≡ 1`.
pub fn kld_cost<T: Scalar>(model: &ServiceModel<T>, component: &GaussianComponent<T>) -> Result<(T, T), AssignError> {
    kld_cost_weighted(model, component, |_| T::one())
}

/// `n` draws from the model's Gaussian service at orientation `theta` around `center`.
pub fn sample_service<T: Scalar>(
    model: &ServiceModel<T>,
    theta: T,
    center: Vec2<T>,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec2<T>>, AssignError> {
    let cov = model
        .covariance_at(theta)
        .ok_or_else(|| AssignError::InvalidModel("sampling needs a Gaussian service".into()))?;
    let chol = cov.cholesky().ok_or(DensityError::NotPositiveDefinite)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            center + chol.mul_vec(Vec2::new(T::lit(a), T::lit(b)))
        })
        .collect())
}

/// Registration cost of a cluster: samples of the service distribution are drawn
/// once at orientation 0, centred on their own mean, then for every `θ` rotated and
/// moved onto the cluster mean; the cost is the smallest exact `W₂²` to the cluster.
pub fn ot_registration_cost<T: Scalar>(
    model: &ServiceModel<T>,
    cluster: &[Vec2<T>],
    n_samples: usize,
    seed: u64,
) -> Result<(T, T), AssignError> {
    model.validate()?;
    if cluster.is_empty() || n_samples == 0 {
        return Err(AssignError::InvalidModel("empty cluster or sample set".into()));
    }
    let samples = sample_service(model, T::zero(), Vec2::zero(), n_samples, seed)?;
    let own_mean = samples.iter().fold(Vec2::zero(), |a, b| a + *b) / T::from_usize_lossy(n_samples);
    let target = DiscreteMeasure::uniform(cluster.to_vec())?;
    let cluster_mean = target.mean();
    best_orientation(&model.orientations, |theta| {
        let moved: Vec<Vec2<T>> = samples
            .iter()
            .map(|s| (*s - own_mean).rotate(theta) + cluster_mean)
            .collect();
        let source = DiscreteMeasure::uniform(moved)?;
        let (_, plan) = wasserstein_exact(&source, &target, T::lit(2.0))?;
        Ok(plan.cost)
    })
}

/// Agent-by-PoI deployment costs with the orientation attaining each entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<T>,
    pub orientation: Vec<T>,
}

impl<T: Scalar> CostMatrix<T> {
    /// Row-major costs with zero orientations.
    pub fn new(rows: usize, cols: usize, values: Vec<T>) -> Self {
        assert_eq!(values.len(), rows * cols);
        Self {
            rows,
            cols,
            values,
            orientation: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged cost matrix");
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Evaluates `entry(i, j) -> (cost, θ*)` for every pair in parallel.
    pub fn build<F>(rows: usize, cols: usize, entry: F) -> Result<Self, AssignError>
    where
        F: Fn(usize, usize) -> Result<(T, T), AssignError> + Sync,
    {
        let cells: Vec<(T, T)> = (0..rows * cols)
            .into_par_iter()
            .map(|idx| entry(idx / cols, idx % cols))
            .collect::<Result<_, _>>()?;
        let (values, orientation) = cells.into_iter().unzip();
        Ok(Self {
            rows,
            cols,
            values,
            orientation,
        })
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.cols + j]
    }

    pub fn theta(&self, i: usize, j: usize) -> T {
        self.orientation[i * self.cols + j]
    }

    /// `i,j,cost,theta` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,cost,theta\n");
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.push_str(&format!("{i},{j},{},{}\n", self.get(i, j), self.theta(i, j)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentResult<T> {
    pub rows: usize,
    pub cols: usize,
    /// `(agent, poi, θ*)`, one per agent in agent order.
    pub pairs: Vec<(usize, usize, T)>,
    pub total: T,
}

impl<T: Scalar> AssignmentResult<T> {
    /// Binary assignment matrix `Z`.
    pub fn z(&self) -> Vec<Vec<u8>> {
        let mut z = vec![vec![0u8; self.cols]; self.rows];
        for (i, j, _) in &self.pairs {
            z[*i][*j] = 1;
        }
        z
    }
}

/// Exact minimum-cost assignment of each agent (row) to a distinct PoI (column).
pub fn solve_assignment<T: Scalar>(c: &CostMatrix<T>) -> Result<AssignmentResult<T>, AssignError> {
    if c.rows > c.cols {
        return Err(AssignError::InfeasibleShape {
            agents: c.rows,
            pois: c.cols,
        });
    }
    if let Some(idx) = c.values.iter().position(|v| !v.is_finite()) {
        return Err(AssignError::NonFinite {
            row: idx / c.cols,
            col: idx % c.cols,
        });
    }
    // zero-cost dummy rows square the problem; they are discarded afterwards
    let mut padded = c.values.clone();
    padded.resize(c.cols * c.cols, T::zero());
    let cols_of = hungarian(&padded, c.cols, c.cols);
    let pairs: Vec<(usize, usize, T)> = (0..c.rows).map(|i| (i, cols_of[i], c.theta(i, cols_of[i]))).collect();
    let total = pairs.iter().map(|(i, j, _)| c.get(*i, *j)).sum();
    Ok(AssignmentResult {
        rows: c.rows,
        cols: c.cols,
        pairs,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    type P = Vec2<f64>;

    #[test]
    fn identity_favoring_matrix() {
        let c = CostMatrix::from_rows(&[vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]]);
        let r = solve_assignment(&c).unwrap();
        assert_eq!(r.total, 0.0);
        assert_eq!(r.z(), vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
    }

    #[test]
    fn rectangular_example() {
        let c = CostMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]]);
        let r = solve_assignment(&c).unwrap();
        // brute force over all injections of two rows into three columns
        let mut best = f64::INFINITY;
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    best = best.min(c.get(0, a) + c.get(1, b));
                }
            }
        }
        // the crossed pairing 1→2, 2→1 (cost 4) beats the diagonal one (cost 5)
        assert_eq!(best, 4.0);
        assert_eq!(r.total, best);
        assert_eq!(r.pairs.iter().map(|p| p.1).collect::<Vec<_>>(), vec![1, 0]);
    }

    #[test]
    fn too_many_agents() {
        let c = CostMatrix::new(3, 2, vec![0.0; 6]);
        assert_eq!(
            solve_assignment(&c),
            Err(AssignError::InfeasibleShape { agents: 3, pois: 2 })
        );
    }

    #[test]
    fn gaussian_kl_unit_shift() {
        let i = Sym2::scaled_identity(1.0);
        let kl = gaussian_kl(P::new(0.0, 0.0), &i, P::new(1.0, 0.0), &i).unwrap();
        assert!((kl - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kld_cost_picks_aligned_orientation() {
        let model = ServiceModel::gaussian(Sym2::diag(4.0, 1.0)).with_orientations(vec![0.0, FRAC_PI_2]);
        let comp = GaussianComponent::new(1.0, P::new(0.0, 0.0), Sym2::diag(4.0, 1.0)).unwrap();
        let (cost, theta) = kld_cost(&model, &comp).unwrap();
        assert_eq!(theta, 0.0);
        assert!(cost.abs() < 1e-12);
        // a quarter turn swaps the variances: ½(1/4 + 4 − 2)
        let quarter = gaussian_kl(P::zero(), &Sym2::diag(4.0, 1.0).rotate(FRAC_PI_2), P::zero(), &Sym2::diag(4.0, 1.0))
            .unwrap();
        assert!((quarter - 1.125).abs() < 1e-12);
    }

    #[test]
    fn disk_cost_is_rotation_invariant_and_closed_form() {
        let w = ConvexPolygon::rectangle(0.0, 0.0, 2.0, 1.0).unwrap();
        let phi = DensityField::uniform(w);
        let r = 0.3;
        let model = ServiceModel::disk(r).with_segments(512);
        let (cost, theta) = footprint_cost(&phi, &model, P::new(0.8, 0.5)).unwrap();
        assert_eq!(theta, 0.0);
        let exact = PI * r.powi(4) / 2.0 / 2.0;
        assert!((cost - exact).abs() / exact < 1e-3, "{cost} vs {exact}");
    }

    #[test]
    fn registration_against_own_samples_is_free() {
        let model = ServiceModel::gaussian(Sym2::diag(0.02, 0.005));
        let pts = sample_service(&model, 0.0, P::zero(), 40, 3).unwrap();
        let (cost, theta) = ot_registration_cost(&model, &pts, 40, 3).unwrap();
        assert!(cost < 1e-20);
        assert_eq!(theta, 0.0);
    }
}
