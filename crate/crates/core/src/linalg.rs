//! Symmetric 2×2 matrices: the covariance algebra needed by Gaussians.

use crate::geometry::Vec2;
use crate::Scalar;

/// Symmetric matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2<T> {
    pub xx: T,
    pub xy: T,
    pub yy: T,
}

/// Lower-triangular Cholesky factor `[[l11, 0], [l21, l22]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cholesky2<T> {
    pub l11: T,
    pub l21: T,
    pub l22: T,
}

impl<T: Scalar> Sym2<T> {
    pub fn new(xx: T, xy: T, yy: T) -> Self {
        Self { xx, xy, yy }
    }

    pub fn diag(a: T, b: T) -> Self {
        Self::new(a, T::zero(), b)
    }

    pub fn scaled_identity(s: T) -> Self {
        Self::diag(s, s)
    }

    pub fn det(&self) -> T {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn trace(&self) -> T {
        self.xx + self.yy
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if !(d.abs() > T::zero()) || !d.is_finite() {
            return None;
        }
        Some(Self::new(self.yy / d, -self.xy / d, self.xx / d))
    }

    pub fn mul_vec(&self, v: Vec2<T>) -> Vec2<T> {
        Vec2::new(self.xx * v.x + self.xy * v.y, self.xy * v.x + self.yy * v.y)
    }

    /// `vᵀ A v`.
    pub fn quad_form(&self, v: Vec2<T>) -> T {
        v.dot(self.mul_vec(v))
    }

    /// `tr(A B)` for symmetric `A`, `B`.
    pub fn trace_product(&self, o: &Self) -> T {
        self.xx * o.xx + T::lit(2.0) * self.xy * o.xy + self.yy * o.yy
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }

    pub fn scale(&self, s: T) -> Self {
        Self::new(self.xx * s, self.xy * s, self.yy * s)
    }

    /// `R(θ) A R(θ)ᵀ`.
    pub fn rotate(&self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        let xx = c * c * self.xx - T::lit(2.0) * c * s * self.xy + s * s * self.yy;
        let yy = s * s * self.xx + T::lit(2.0) * c * s * self.xy + c * c * self.yy;
        let xy = c * s * (self.xx - self.yy) + (c * c - s * s) * self.xy;
        Self::new(xx, xy, yy)
    }

    /// `v vᵀ`.
    pub fn outer(v: Vec2<T>) -> Self {
        Self::new(v.x * v.x, v.x * v.y, v.y * v.y)
    }

    pub fn cholesky(&self) -> Option<Cholesky2<T>> {
        if !(self.xx > T::zero()) {
            return None;
        }
        let l11 = self.xx.sqrt();
        let l21 = self.xy / l11;
        let rem = self.yy - l21 * l21;
        if !(rem > T::zero()) || !rem.is_finite() {
            return None;
        }
        Some(Cholesky2 {
            l11,
            l21,
            l22: rem.sqrt(),
        })
    }

    pub fn is_positive_definite(&self) -> bool {
        self.cholesky().is_some()
    }

    /// Eigenvalues in descending order and the unit eigenvector of the largest one.
    pub fn eigen(&self) -> (T, T, Vec2<T>) {
        let half_tr = self.trace() * T::lit(0.5);
        let diff = (self.xx - self.yy) * T::lit(0.5);
        let r = (diff * diff + self.xy * self.xy).sqrt();
        let l1 = half_tr + r;
        let l2 = half_tr - r;
        let angle = T::lit(0.5) * (T::lit(2.0) * self.xy).atan2(self.xx - self.yy);
        (l1, l2, Vec2::new(angle.cos(), angle.sin()))
    }

    pub fn is_finite(&self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite()
    }
}

impl<T: Scalar> Cholesky2<T> {
    /// `L v`.
    pub fn mul_vec(&self, v: Vec2<T>) -> Vec2<T> {
        Vec2::new(self.l11 * v.x, self.l21 * v.x + self.l22 * v.y)
    }

    /// `log det A = 2 log(l11 l22)`.
    pub fn log_det(&self) -> T {
        T::lit(2.0) * (self.l11 * self.l22).ln()
    }

    /// Solves `L y = v`.
    pub fn solve_lower(&self, v: Vec2<T>) -> Vec2<T> {
        let y1 = v.x / self.l11;
        Vec2::new(y1, (v.y - self.l21 * y1) / self.l22)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_by_quarter_swaps_diagonal() {
        let a = Sym2::<f64>::diag(4.0, 1.0).rotate(std::f64::consts::FRAC_PI_2);
        assert!((a.xx - 1.0).abs() < 1e-12 && (a.yy - 4.0).abs() < 1e-12 && a.xy.abs() < 1e-12);
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = Sym2::<f64>::new(2.0, 0.6, 1.0);
        let l = a.cholesky().unwrap();
        assert!((l.l11 * l.l11 - a.xx).abs() < 1e-14);
        assert!((l.l11 * l.l21 - a.xy).abs() < 1e-14);
        assert!((l.l21 * l.l21 + l.l22 * l.l22 - a.yy).abs() < 1e-14);
        assert!((l.log_det() - a.det().ln()).abs() < 1e-14);
        assert!(Sym2::new(1.0, 2.0, 1.0).cholesky().is_none());
    }

    #[test]
    fn eigen_of_rotated_diagonal() {
        let a = Sym2::<f64>::diag(9.0, 1.0).rotate(0.4);
        let (l1, l2, v) = a.eigen();
        assert!((l1 - 9.0).abs() < 1e-12 && (l2 - 1.0).abs() < 1e-12);
        assert!((v.y.atan2(v.x) - 0.4).abs() < 1e-12);
    }
}
