//! The area priority function φ: evaluation, log-gradients, integrals over convex
//! cells, sampling, and discretization to weighted point clouds.
//!
//! Every [`DensityField`] is tied to a workspace polygon `W` and renormalized on
//! construction so that its integral over `W` (under the field's own quadrature) is one.

mod gmm;
mod grid;
mod measure;
mod pgm;
mod quadrature;

pub use gmm::{GaussianComponent, GaussianMixture};
pub(crate) use gmm::log_sum_exp;
pub use grid::Grid;
pub use measure::DiscreteMeasure;
pub use pgm::PgmImage;
pub use quadrature::Quadrature;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{Aabb, ConvexPolygon, GeometryError, HalfPlane, Vec2};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DensityError {
    #[error("density is numerically zero at ({x}, {y}); log-gradient undefined")]
    EvalOutsideSupport { x: f64, y: f64 },
    #[error("covariance is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("density has zero mass over the workspace")]
    ZeroMass,
    #[error("discretization needs at least 2×2 cells, got {nx}×{ny}")]
    InvalidResolution { nx: usize, ny: usize },
    #[error("PGM: {0}")]
    Pgm(String),
    #[error("CSV line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("I/O: {0}")]
    Io(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// What backs a density field.
#[derive(Debug, Clone, PartialEq)]
pub enum Backing<T> {
    Uniform,
    Grid(Grid<T>),
    /// A grid loaded from a PGM raster.
    Image(Grid<T>),
    Gmm(GaussianMixture<T>),
}

/// Mass and φ-weighted centroid of a region. `centroid` is `None` when the mass is
/// below `1e-12`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMoments<T> {
    pub mass: T,
    pub centroid: Option<Vec2<T>>,
}

/// Normalized density over a convex workspace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField<T> {
    backing: Backing<T>,
    workspace: ConvexPolygon<T>,
    scale: T,
    quadrature: Quadrature,
}

const MIN_CENTROID_MASS: f64 = 1e-12;

impl<T: Scalar> DensityField<T> {
    fn build(backing: Backing<T>, workspace: ConvexPolygon<T>, quadrature: Quadrature) -> Result<Self, DensityError> {
        let mut field = Self {
            backing,
            workspace,
            scale: T::one(),
            quadrature,
        };
        let raw_mass = field.mass(&field.workspace.clone());
        if !(raw_mass > T::zero()) || !raw_mass.is_finite() {
            return Err(DensityError::ZeroMass);
        }
        field.scale = T::one() / raw_mass;
        Ok(field)
    }

    pub fn uniform(workspace: ConvexPolygon<T>) -> Self {
        let scale = T::one() / workspace.area();
        Self {
            backing: Backing::Uniform,
            workspace,
            scale,
            quadrature: Quadrature::default(),
        }
    }

    pub fn gmm(workspace: ConvexPolygon<T>, mixture: GaussianMixture<T>) -> Result<Self, DensityError> {
        Self::build(Backing::Gmm(mixture), workspace, Quadrature::default())
    }

    pub fn grid(workspace: ConvexPolygon<T>, grid: Grid<T>) -> Result<Self, DensityError> {
        Self::build(Backing::Grid(grid), workspace, Quadrature::default())
    }

    /// Raster over the workspace's bounding box; row 0 of the image is the top of `W`.
    pub fn image(workspace: ConvexPolygon<T>, image: &PgmImage) -> Result<Self, DensityError> {
        let grid = Grid::from_pgm(image, workspace.bounding_box())?;
        Self::build(Backing::Image(grid), workspace, Quadrature::default())
    }

    pub fn from_pgm_file(workspace: ConvexPolygon<T>, path: &std::path::Path) -> Result<Self, DensityError> {
        Self::image(workspace, &PgmImage::read(path)?)
    }

    /// Same field with a different number of quadrature refinements (renormalized).
    pub fn with_quadrature(self, quadrature: Quadrature) -> Result<Self, DensityError> {
        match self.backing {
            Backing::Uniform => Ok(Self { quadrature, ..self }),
            backing => Self::build(backing, self.workspace, quadrature),
        }
    }

    pub fn backing(&self) -> &Backing<T> {
        &self.backing
    }

    pub fn workspace(&self) -> &ConvexPolygon<T> {
        &self.workspace
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    /// Multiplier applied to the raw backing to make the field integrate to one.
    pub fn normalization(&self) -> T {
        self.scale
    }

    fn raw(&self, q: Vec2<T>) -> T {
        match &self.backing {
            Backing::Uniform => T::one(),
            Backing::Grid(g) | Backing::Image(g) => g.interpolate(q),
            Backing::Gmm(m) => m.pdf(q),
        }
    }

    /// `φ(q)`.
    pub fn eval(&self, q: Vec2<T>) -> T {
        self.raw(q) * self.scale
    }

    /// Upper estimate of `max φ` over the workspace.
    pub fn peak(&self) -> T {
        let raw = match &self.backing {
            Backing::Uniform => T::one(),
            Backing::Grid(g) | Backing::Image(g) => g.max_value(),
            Backing::Gmm(m) => m
                .components()
                .iter()
                .map(|c| m.pdf(c.mean))
                .fold(T::zero(), |a, b| a.max(b)),
        };
        raw * self.scale
    }

    /// Value clamped below at `1e-12 · max φ`, for use as a divergence denominator.
    pub fn eval_floored(&self, q: Vec2<T>) -> T {
        self.eval(q).max(T::lit(1e-12) * self.peak())
    }

    /// `∇φ / φ`: analytic for uniform and mixture backings, central differences with a
    /// one-pixel step for rasters.
    pub fn grad_log(&self, q: Vec2<T>) -> Result<Vec2<T>, DensityError> {
        let v = self.eval(q);
        if !(v.to_f64_lossy() >= 1e-300) {
            return Err(DensityError::EvalOutsideSupport {
                x: q.x.to_f64_lossy(),
                y: q.y.to_f64_lossy(),
            });
        }
        match &self.backing {
            Backing::Uniform => Ok(Vec2::zero()),
            Backing::Gmm(m) => m.grad_log(q).ok_or(DensityError::EvalOutsideSupport {
                x: q.x.to_f64_lossy(),
                y: q.y.to_f64_lossy(),
            }),
            Backing::Grid(g) | Backing::Image(g) => {
                let bb = g.bbox();
                let (hx, hy) = (g.dx(), g.dy());
                let (xp, xm) = ((q.x + hx).min(bb.max.x), (q.x - hx).max(bb.min.x));
                let (yp, ym) = ((q.y + hy).min(bb.max.y), (q.y - hy).max(bb.min.y));
                let ddx = (g.interpolate(Vec2::new(xp, q.y)) - g.interpolate(Vec2::new(xm, q.y))) / (xp - xm);
                let ddy = (g.interpolate(Vec2::new(q.x, yp)) - g.interpolate(Vec2::new(q.x, ym))) / (yp - ym);
                let raw = g.interpolate(q);
                Ok(Vec2::new(ddx / raw, ddy / raw))
            }
        }
    }

    /// Visits `(node, area weight)` pairs of the field's integration rule over `poly`,
    /// with `extra` refinement levels on top of the field's own.
    pub fn for_each_node<F: FnMut(Vec2<T>, T)>(&self, poly: &ConvexPolygon<T>, extra: u32, visit: &mut F) {
        match &self.backing {
            // the integrands used here are polynomials of degree ≤ 2 on flat fields
            Backing::Uniform => Quadrature::new(extra).polygon(poly, visit),
            Backing::Gmm(_) => Quadrature::new(self.quadrature.refinements + extra).polygon(poly, visit),
            Backing::Grid(g) | Backing::Image(g) => {
                let rule = Quadrature::new(extra);
                for piece in g.pieces(&poly.bounding_box()) {
                    if let Some(part) = clip_to_box(poly, &piece) {
                        rule.polygon(&part, visit);
                    }
                }
            }
        }
    }

    /// `∫_poly φ`.
    pub fn mass(&self, poly: &ConvexPolygon<T>) -> T {
        if let Backing::Uniform = self.backing {
            return poly.area() * self.scale;
        }
        let mut m = T::zero();
        self.for_each_node(poly, 0, &mut |q, w| m += w * self.raw(q));
        m * self.scale
    }

    /// Mass `∫_cell φ` and centroid `(1/m) ∫_cell q φ`.
    pub fn cell_mass_centroid(&self, cell: &ConvexPolygon<T>) -> CellMoments<T> {
        let (mass, first) = if let Backing::Uniform = self.backing {
            let (a, c) = cell.moments();
            (a * self.scale, c * (a * self.scale))
        } else {
            let mut m = T::zero();
            let mut f = Vec2::zero();
            self.for_each_node(cell, 0, &mut |q, w| {
                let v = w * self.raw(q);
                m += v;
                f += q * v;
            });
            (m * self.scale, f * self.scale)
        };
        let centroid = (mass.to_f64_lossy() >= MIN_CENTROID_MASS).then(|| first / mass);
        CellMoments { mass, centroid }
    }

    /// `∫_cell ‖q − p‖² φ(q) dq`.
    pub fn second_moment(&self, cell: &ConvexPolygon<T>, p: Vec2<T>) -> T {
        let mut acc = T::zero();
        self.for_each_node(cell, 0, &mut |q, w| acc += w * self.raw(q) * q.dist_sq(p));
        acc * self.scale
    }

    /// `∫_cell g(q) φ(q) dq` with `extra` refinement levels.
    pub fn integrate<G: Fn(Vec2<T>) -> T>(&self, cell: &ConvexPolygon<T>, extra: u32, g: G) -> T {
        let mut acc = T::zero();
        self.for_each_node(cell, extra, &mut |q, w| acc += w * self.raw(q) * g(q));
        acc * self.scale
    }

    /// `n` i.i.d. draws restricted to the workspace, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vec2<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec2<T>> {
        let bb = self.workspace.bounding_box();
        let mut out = Vec::with_capacity(n);
        match &self.backing {
            Backing::Uniform => {
                while out.len() < n {
                    let q = uniform_in_box(&bb, rng);
                    if self.workspace.contains_with(q, T::zero()) {
                        out.push(q);
                    }
                }
            }
            Backing::Gmm(m) => {
                let picker = WeightedIndex::new(m.components().iter().map(|c| c.weight.to_f64_lossy()))
                    .expect("mixture weights are valid");
                while out.len() < n {
                    let c = &m.components()[picker.sample(rng)];
                    let z = Vec2::new(
                        T::lit(rng.sample::<f64, _>(StandardNormal)),
                        T::lit(rng.sample::<f64, _>(StandardNormal)),
                    );
                    let q = c.mean + c.cholesky().mul_vec(z);
                    if self.workspace.contains_with(q, T::zero()) {
                        out.push(q);
                    }
                }
            }
            Backing::Grid(g) | Backing::Image(g) => {
                let picker = WeightedIndex::new(g.values().iter().map(|v| v.to_f64_lossy()))
                    .expect("grid has positive mass");
                while out.len() < n {
                    let k = picker.sample(rng);
                    let rect = g.pixel_rect(k % g.nx(), k / g.nx());
                    let q = uniform_in_box(&rect, rng);
                    if self.workspace.contains_with(q, T::zero()) {
                        out.push(q);
                    }
                }
            }
        }
        out
    }

    /// Cell-center support on an `nx × ny` grid over the workspace bounding box with
    /// weights equal to the cell masses; zero-mass cells are dropped.
    pub fn discretize(&self, nx: usize, ny: usize) -> Result<DiscreteMeasure<T>, DensityError> {
        if nx < 2 || ny < 2 {
            return Err(DensityError::InvalidResolution { nx, ny });
        }
        let bb = self.workspace.bounding_box();
        let dx = bb.width() / T::from_usize_lossy(nx);
        let dy = bb.height() / T::from_usize_lossy(ny);
        let cells: Vec<(Vec2<T>, T)> = (0..nx * ny)
            .into_par_iter()
            .filter_map(|k| {
                let (i, j) = (k % nx, k / nx);
                let min = bb.min + Vec2::new(dx * T::from_usize_lossy(i), dy * T::from_usize_lossy(j));
                let rect = Aabb::new(min, min + Vec2::new(dx, dy));
                let part = clip_to_box(&self.workspace, &rect)?;
                let m = self.mass(&part);
                (m > T::zero()).then(|| (min + Vec2::new(dx, dy) * T::lit(0.5), m))
            })
            .collect();
        let (points, weights) = cells.into_iter().unzip();
        DiscreteMeasure::from_unnormalized(points, weights)
    }
}

fn uniform_in_box<T: Scalar, R: Rng + ?Sized>(bb: &Aabb<T>, rng: &mut R) -> Vec2<T> {
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    Vec2::new(
        bb.min.x + bb.width() * T::lit(u),
        bb.min.y + bb.height() * T::lit(v),
    )
}

/// `poly ∩ box`, skipping the clip entirely when the box lies inside the polygon.
pub(crate) fn clip_to_box<T: Scalar>(poly: &ConvexPolygon<T>, bb: &Aabb<T>) -> Option<ConvexPolygon<T>> {
    let corners = [
        bb.min,
        Vec2::new(bb.max.x, bb.min.y),
        bb.max,
        Vec2::new(bb.min.x, bb.max.y),
    ];
    if corners.iter().all(|c| poly.contains_with(*c, T::zero())) {
        return ConvexPolygon::new(corners.to_vec()).ok();
    }
    let one = T::one();
    let planes = [
        HalfPlane::new(Vec2::new(one, T::zero()), bb.max.x)?,
        HalfPlane::new(Vec2::new(-one, T::zero()), -bb.min.x)?,
        HalfPlane::new(Vec2::new(T::zero(), one), bb.max.y)?,
        HalfPlane::new(Vec2::new(T::zero(), -one), -bb.min.y)?,
    ];
    poly.clip_all(&planes)
}

/// Parses `x,y` lines (blank lines and `#` comments skipped; an optional non-numeric
/// header line is allowed).
pub fn parse_point_csv<T: Scalar>(text: &str) -> Result<Vec<Vec2<T>>, DensityError> {
    let mut pts = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let parsed = (|| {
            let x: f64 = fields.next()?.parse().ok()?;
            let y: f64 = fields.next()?.parse().ok()?;
            Some(Vec2::new(T::lit(x), T::lit(y)))
        })();
        match parsed {
            Some(p) if p.is_finite() => pts.push(p),
            _ if idx == 0 && pts.is_empty() => continue,
            _ => {
                return Err(DensityError::Csv {
                    line: idx + 1,
                    message: format!("expected `x,y`, got `{line}`"),
                })
            }
        }
    }
    Ok(pts)
}
