use super::DensityError;
use crate::geometry::Vec2;
use crate::Scalar;

/// Finitely supported probability measure `Σ w_i δ_{p_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure<T> {
    points: Vec<Vec2<T>>,
    weights: Vec<T>,
}

impl<T: Scalar> DiscreteMeasure<T> {
    /// Weights must be nonnegative and sum to one within `1e-9`.
    pub fn new(points: Vec<Vec2<T>>, weights: Vec<T>) -> Result<Self, DensityError> {
        Self::check_shape(&points, &weights)?;
        let total: T = weights.iter().copied().sum();
        let tol = T::lit(1e-9).max(T::epsilon() * T::from_usize_lossy(weights.len() + 1));
        if (total - T::one()).abs() > tol {
            return Err(DensityError::InvalidMeasure(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { points, weights })
    }

    /// Rescales nonnegative weights to unit total.
    pub fn from_unnormalized(points: Vec<Vec2<T>>, mut weights: Vec<T>) -> Result<Self, DensityError> {
        Self::check_shape(&points, &weights)?;
        let total: T = weights.iter().copied().sum();
        if !(total > T::zero()) || !total.is_finite() {
            return Err(DensityError::ZeroMass);
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { points, weights })
    }

    /// Equal weights `1/n`.
    pub fn uniform(points: Vec<Vec2<T>>) -> Result<Self, DensityError> {
        let n = points.len();
        if n == 0 {
            return Err(DensityError::InvalidMeasure("empty support".into()));
        }
        let w = T::one() / T::from_usize_lossy(n);
        Ok(Self {
            points,
            weights: vec![w; n],
        })
    }

    fn check_shape(points: &[Vec2<T>], weights: &[T]) -> Result<(), DensityError> {
        if points.len() != weights.len() {
            return Err(DensityError::InvalidMeasure(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.is_empty() {
            return Err(DensityError::InvalidMeasure("empty support".into()));
        }
        if weights.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
            return Err(DensityError::InvalidMeasure("weights must be finite and nonnegative".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(DensityError::InvalidMeasure("non-finite support point".into()));
        }
        Ok(())
    }

    pub fn points(&self) -> &[Vec2<T>] {
        &self.points
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// True when all weights are equal to `1/n` within `tol`.
    pub fn is_uniform(&self, tol: T) -> bool {
        let w = T::one() / T::from_usize_lossy(self.len());
        self.weights.iter().all(|x| (*x - w).abs() <= tol)
    }

    pub fn mean(&self) -> Vec2<T> {
        self.points
            .iter()
            .zip(&self.weights)
            .fold(Vec2::zero(), |acc, (p, w)| acc + *p * *w)
    }

    /// Same weights, coordinates mapped by `f`.
    pub fn map_points(&self, f: impl Fn(Vec2<T>) -> Vec2<T>) -> Self {
        Self {
            points: self.points.iter().map(|p| f(*p)).collect(),
            weights: self.weights.clone(),
        }
    }
}
