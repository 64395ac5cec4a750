use super::{DensityError, PgmImage};
use crate::geometry::{Aabb, Vec2};
use crate::Scalar;

/// Raster density over an axis-aligned box. Pixel `(i, j)` covers
/// `[x0 + i·dx, x0 + (i+1)·dx] × [y0 + j·dy, y0 + (j+1)·dy]`, with `j = 0` at the bottom.
///
/// Evaluation is bilinear through pixel centers and constant beyond the outermost
/// centers, so the field is a polynomial of degree ≤ 2 on each "piece" between
/// consecutive centers.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    nx: usize,
    ny: usize,
    values: Vec<T>,
    bbox: Aabb<T>,
}

impl<T: Scalar> Grid<T> {
    /// `values[j * nx + i]`, bottom row first.
    pub fn new(nx: usize, ny: usize, values: Vec<T>, bbox: Aabb<T>) -> Result<Self, DensityError> {
        if nx < 2 || ny < 2 {
            return Err(DensityError::InvalidGrid(format!("grid must be at least 2×2, got {nx}×{ny}")));
        }
        if values.len() != nx * ny {
            return Err(DensityError::InvalidGrid(format!(
                "expected {} values, got {}",
                nx * ny,
                values.len()
            )));
        }
        if values.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(DensityError::InvalidGrid("values must be finite and nonnegative".into()));
        }
        if !(bbox.width() > T::zero() && bbox.height() > T::zero()) {
            return Err(DensityError::InvalidGrid("bounding box has zero extent".into()));
        }
        Ok(Self { nx, ny, values, bbox })
    }

    /// Pixel intensities become unnormalized density; image row 0 maps to the top of `bbox`.
    pub fn from_pgm(img: &PgmImage, bbox: Aabb<T>) -> Result<Self, DensityError> {
        let mut values = Vec::with_capacity(img.width * img.height);
        for j in 0..img.height {
            let row = img.height - 1 - j;
            for i in 0..img.width {
                values.push(T::from_u16(img.pixel(i, row)).expect("u16 fits"));
            }
        }
        Self::new(img.width, img.height, values, bbox)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn bbox(&self) -> Aabb<T> {
        self.bbox
    }

    pub fn dx(&self) -> T {
        self.bbox.width() / T::from_usize_lossy(self.nx)
    }

    pub fn dy(&self) -> T {
        self.bbox.height() / T::from_usize_lossy(self.ny)
    }

    pub fn value(&self, i: usize, j: usize) -> T {
        self.values[j * self.nx + i]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn max_value(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(*v))
    }

    /// Rectangle of pixel `(i, j)`.
    pub fn pixel_rect(&self, i: usize, j: usize) -> Aabb<T> {
        let (dx, dy) = (self.dx(), self.dy());
        let min = self.bbox.min
            + Vec2::new(dx * T::from_usize_lossy(i), dy * T::from_usize_lossy(j));
        Aabb::new(min, min + Vec2::new(dx, dy))
    }

    /// Pixel containing `q` (clamped to the raster).
    pub fn pixel_of(&self, q: Vec2<T>) -> (usize, usize) {
        let fi = ((q.x - self.bbox.min.x) / self.dx()).floor();
        let fj = ((q.y - self.bbox.min.y) / self.dy()).floor();
        let clampi = |f: T, n: usize| f.max(T::zero()).to_usize().unwrap_or(0).min(n - 1);
        (clampi(fi, self.nx), clampi(fj, self.ny))
    }

    fn axis_coord(&self, x: T, min: T, step: T, n: usize) -> (usize, T) {
        let u = ((x - min) / step - T::lit(0.5))
            .max(T::zero())
            .min(T::from_usize_lossy(n - 1));
        let i = u.floor().to_usize().unwrap_or(0).min(n - 2);
        (i, u - T::from_usize_lossy(i))
    }

    /// Bilinear interpolation through pixel centers, clamped at the border.
    pub fn interpolate(&self, q: Vec2<T>) -> T {
        let (i, t) = self.axis_coord(q.x, self.bbox.min.x, self.dx(), self.nx);
        let (j, s) = self.axis_coord(q.y, self.bbox.min.y, self.dy(), self.ny);
        let one = T::one();
        let v00 = self.value(i, j);
        let v10 = self.value(i + 1, j);
        let v01 = self.value(i, j + 1);
        let v11 = self.value(i + 1, j + 1);
        (one - t) * (one - s) * v00 + t * (one - s) * v10 + (one - t) * s * v01 + t * s * v11
    }

    fn breakpoints(min: T, step: T, n: usize, max: T) -> Vec<T> {
        let mut b = Vec::with_capacity(n + 2);
        b.push(min);
        b.extend((0..n).map(|i| min + step * (T::from_usize_lossy(i) + T::lit(0.5))));
        b.push(max);
        b
    }

    /// Axis-aligned rectangles on which the interpolant is a single polynomial,
    /// restricted to those overlapping `window`.
    pub fn pieces(&self, window: &Aabb<T>) -> Vec<Aabb<T>> {
        let bx = Self::breakpoints(self.bbox.min.x, self.dx(), self.nx, self.bbox.max.x);
        let by = Self::breakpoints(self.bbox.min.y, self.dy(), self.ny, self.bbox.max.y);
        let range = |b: &[T], lo: T, hi: T| {
            let start = b.partition_point(|v| *v <= lo).saturating_sub(1);
            let end = b.partition_point(|v| *v < hi).min(b.len() - 1);
            (start, end)
        };
        let (xs, xe) = range(&bx, window.min.x, window.max.x);
        let (ys, ye) = range(&by, window.min.y, window.max.y);
        let mut out = Vec::new();
        for j in ys..ye {
            for i in xs..xe {
                if bx[i + 1] > bx[i] && by[j + 1] > by[j] {
                    out.push(Aabb::new(Vec2::new(bx[i], by[j]), Vec2::new(bx[i + 1], by[j + 1])));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Aabb<f64> {
        Aabb::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0))
    }

    #[test]
    fn interpolation_hits_pixel_centers_and_clamps() {
        let g = Grid::new(2, 2, vec![1.0, 2.0, 3.0, 4.0], unit()).unwrap();
        assert!((g.interpolate(Vec2::new(0.25, 0.25)) - 1.0).abs() < 1e-15);
        assert!((g.interpolate(Vec2::new(0.75, 0.75)) - 4.0).abs() < 1e-15);
        assert!((g.interpolate(Vec2::new(0.5, 0.5)) - 2.5).abs() < 1e-15);
        // constant beyond outer centers
        assert!((g.interpolate(Vec2::new(0.0, 0.0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pieces_tile_the_box() {
        let g = Grid::new(4, 3, vec![1.0; 12], unit()).unwrap();
        let pieces = g.pieces(&unit());
        assert_eq!(pieces.len(), 5 * 4);
        let total: f64 = pieces.iter().map(|p| p.width() * p.height()).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pgm_rows_are_flipped() {
        let img = PgmImage {
            width: 2,
            height: 2,
            max_value: 255,
            pixels: vec![9, 9, 1, 1],
        };
        let g = Grid::<f64>::from_pgm(&img, unit()).unwrap();
        assert_eq!(g.value(0, 1), 9.0);
        assert_eq!(g.value(0, 0), 1.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Grid::new(1, 2, vec![1.0, 1.0], unit()).is_err());
        assert!(Grid::new(2, 2, vec![1.0, 1.0, -1.0, 1.0], unit()).is_err());
    }
}
