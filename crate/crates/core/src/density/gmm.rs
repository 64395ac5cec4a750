use super::DensityError;
use crate::geometry::Vec2;
use crate::linalg::{Cholesky2, Sym2};
use crate::Scalar;

/// One weighted bivariate normal `π N(q | μ, Σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent<T> {
    pub weight: T,
    pub mean: Vec2<T>,
    pub covariance: Sym2<T>,
    chol: Cholesky2<T>,
    precision: Sym2<T>,
    log_norm: T,
}

impl<T: Scalar> GaussianComponent<T> {
    pub fn new(weight: T, mean: Vec2<T>, covariance: Sym2<T>) -> Result<Self, DensityError> {
        let chol = covariance
            .cholesky()
            .ok_or(DensityError::NotPositiveDefinite)?;
        let precision = covariance.inverse().ok_or(DensityError::NotPositiveDefinite)?;
        let log_norm = -(T::lit(std::f64::consts::TAU)).ln() - T::lit(0.5) * chol.log_det();
        Ok(Self {
            weight,
            mean,
            covariance,
            chol,
            precision,
            log_norm,
        })
    }

    pub fn cholesky(&self) -> &Cholesky2<T> {
        &self.chol
    }

    pub fn precision(&self) -> &Sym2<T> {
        &self.precision
    }

    /// `log N(q | μ, Σ)` (without the mixture weight).
    pub fn log_pdf(&self, q: Vec2<T>) -> T {
        let z = self.chol.solve_lower(q - self.mean);
        self.log_norm - T::lit(0.5) * z.norm_sq()
    }

    pub fn pdf(&self, q: Vec2<T>) -> T {
        self.log_pdf(q).exp()
    }
}

/// Finite mixture `Σ_j π_j N(q | μ_j, Σ_j)` with `Σ π_j = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture<T> {
    components: Vec<GaussianComponent<T>>,
}

impl<T: Scalar> GaussianMixture<T> {
    pub fn new(components: Vec<GaussianComponent<T>>) -> Result<Self, DensityError> {
        if components.is_empty() {
            return Err(DensityError::InvalidMixture("no components".into()));
        }
        if components.iter().any(|c| !(c.weight >= T::zero())) {
            return Err(DensityError::InvalidMixture("negative weight".into()));
        }
        let total: T = components.iter().map(|c| c.weight).sum();
        if (total - T::one()).abs() > T::lit(1e-9).max(T::epsilon() * T::lit(16.0)) {
            return Err(DensityError::InvalidMixture(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { components })
    }

    /// Builds from parallel parameter lists.
    pub fn from_parts(
        weights: &[T],
        means: &[Vec2<T>],
        covariances: &[Sym2<T>],
    ) -> Result<Self, DensityError> {
        if weights.len() != means.len() || means.len() != covariances.len() {
            return Err(DensityError::InvalidMixture(
                "weights, means and covariances differ in length".into(),
            ));
        }
        let comps = weights
            .iter()
            .zip(means)
            .zip(covariances)
            .map(|((w, m), c)| GaussianComponent::new(*w, *m, *c))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(comps)
    }

    pub fn single(mean: Vec2<T>, covariance: Sym2<T>) -> Result<Self, DensityError> {
        Self::new(vec![GaussianComponent::new(T::one(), mean, covariance)?])
    }

    pub fn components(&self) -> &[GaussianComponent<T>] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn pdf(&self, q: Vec2<T>) -> T {
        self.components.iter().map(|c| c.weight * c.pdf(q)).sum()
    }

    /// `log Σ π_j N_j(q)` via log-sum-exp.
    pub fn log_pdf(&self, q: Vec2<T>) -> T {
        let logs: Vec<T> = self
            .components
            .iter()
            .map(|c| c.weight.ln() + c.log_pdf(q))
            .collect();
        log_sum_exp(&logs)
    }

    /// Analytic `∇ log φ(q) = Σ_j r_j(q) (−Σ_j⁻¹ (q − μ_j))` with responsibilities `r_j`.
    pub fn grad_log(&self, q: Vec2<T>) -> Option<Vec2<T>> {
        let logs: Vec<T> = self
            .components
            .iter()
            .map(|c| c.weight.ln() + c.log_pdf(q))
            .collect();
        let lse = log_sum_exp(&logs);
        if !lse.is_finite() {
            return None;
        }
        let mut g = Vec2::zero();
        for (c, l) in self.components.iter().zip(&logs) {
            let r = (*l - lse).exp();
            g -= c.precision.mul_vec(q - c.mean) * r;
        }
        Some(g)
    }
}

pub(crate) fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let m = xs.iter().fold(T::neg_infinity(), |m, x| m.max(*x));
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (*x - m).exp()).sum::<T>().ln()
}
