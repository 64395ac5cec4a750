//! Large-swarm distribution matching: agents repeatedly move a fraction `τ` along
//! optimal-transport rays toward a quantized target density.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::assign::hungarian_warm;
use crate::density::{DensityError, DensityField, DiscreteMeasure};
use crate::geometry::{shared_boundary_length, voronoi_cells, Aabb, ConvexPolygon, GeometryError, HalfPlane, Vec2};
use crate::transport::{cost_matrix, debiased_sinkhorn_value, entropic_self_cost, TransportError};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SwarmError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState<T> {
    pub positions: Vec<Vec2<T>>,
    pub iteration: usize,
    /// Latest transport-distance estimate to the target, when measured.
    pub w2: Option<T>,
    /// Column potentials of the last full-batch matching, reused as a warm start.
    duals: Option<Vec<T>>,
}

impl<T: Scalar> SwarmState<T> {
    pub fn new(positions: Vec<Vec2<T>>) -> Self {
        Self {
            positions,
            iteration: 0,
            w2: None,
            duals: None,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<T> {
    pub state: SwarmState<T>,
    /// Mean squared length of the matched transport rays before the move.
    pub objective: T,
    /// Mean displacement over all agents.
    pub mean_displacement: T,
}

/// `n` uniform points in `W` (rejection from the bounding box).
pub fn uniform_positions<T: Scalar, R: Rng + ?Sized>(w: &ConvexPolygon<T>, n: usize, rng: &mut R) -> Vec<Vec2<T>> {
    let bb = w.bounding_box();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        let q = Vec2::new(bb.min.x + bb.width() * T::lit(u), bb.min.y + bb.height() * T::lit(v));
        if w.contains(q) {
            out.push(q);
        }
    }
    out
}

/// Cell `(x, y)` at position `d` along the Hilbert curve of a `side × side` grid
/// (`side` a power of two).
fn hilbert_cell(side: usize, mut d: usize) -> (usize, usize) {
    let (mut x, mut y) = (0usize, 0usize);
    let mut s = 1usize;
    while s < side {
        let rx = 1 & (d / 2);
        let ry = 1 & (d ^ rx);
        if ry == 0 {
            if rx == 1 {
                x = s - 1 - x;
                y = s - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        x += s * rx;
        y += s * ry;
        d /= 4;
        s *= 2;
    }
    (x, y)
}

/// `n` equal-weight target points. `phi` is discretized on a fine power-of-two grid,
/// the cells are ordered along a Hilbert curve, and each point is the mass centroid of
/// one consecutive `1/n` slice of that ordering.
pub fn quantize_target<T: Scalar>(phi: &DensityField<T>, n: usize) -> Result<DiscreteMeasure<T>, SwarmError> {
    if n == 0 {
        return Err(SwarmError::InvalidInput("need at least one agent".into()));
    }
    let w = phi.workspace();
    let bb = w.bounding_box();
    let side = ((4.0 * (n as f64).sqrt()).ceil() as usize).clamp(16, 512).next_power_of_two();
    let grid = phi.discretize(side, side)?;
    let (dx, dy) = (bb.width() / T::from_usize_lossy(side), bb.height() / T::from_usize_lossy(side));
    let mut mass = vec![T::zero(); side * side];
    for (p, m) in grid.points().iter().zip(grid.weights()) {
        let i = ((p.x - bb.min.x) / dx).to_f64_lossy().floor() as usize;
        let j = ((p.y - bb.min.y) / dy).to_f64_lossy().floor() as usize;
        mass[j.min(side - 1) * side + i.min(side - 1)] += *m;
    }
    let slice = T::one() / T::from_usize_lossy(n);
    let mut sums = vec![Vec2::new(T::zero(), T::zero()); n];
    let mut taken = vec![T::zero(); n];
    let mut k = 0usize;
    for d in 0..side * side {
        let (i, j) = hilbert_cell(side, d);
        let mut left = mass[j * side + i];
        if left <= T::zero() {
            continue;
        }
        let c = Vec2::new(
            bb.min.x + dx * (T::from_usize_lossy(i) + T::lit(0.5)),
            bb.min.y + dy * (T::from_usize_lossy(j) + T::lit(0.5)),
        );
        loop {
            let room = slice - taken[k];
            if k + 1 == n || left < room {
                sums[k] += c * left;
                taken[k] += left;
                break;
            }
            sums[k] += c * room;
            taken[k] += room;
            left -= room;
            k += 1;
        }
    }
    let points = sums
        .iter()
        .zip(&taken)
        .map(|(s, m)| if *m > T::zero() { w.project(*s / *m) } else { w.centroid() })
        .collect();
    Ok(DiscreteMeasure::uniform(points)?)
}

/// One displacement step: a batch of agents is optimally matched to a sample of the
/// target and each matched agent moves to `(1 − τ) p + τ T(p)`.
///
/// A uniform target with exactly `batch` atoms is used as is; a larger uniform target is
/// subsampled without replacement, any other target sampled by weight.
pub fn transport_step<T: Scalar>(
    workspace: &ConvexPolygon<T>,
    state: &SwarmState<T>,
    target: &DiscreteMeasure<T>,
    tau: T,
    batch: usize,
    seed: u64,
) -> Result<StepOutcome<T>, SwarmError> {
    let n = state.len();
    if !(tau > T::zero() && tau <= T::one()) {
        return Err(SwarmError::InvalidInput("tau must lie in (0, 1]".into()));
    }
    if batch == 0 || batch > n {
        return Err(SwarmError::InvalidInput(format!("batch {batch} must lie in 1..={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agents: Vec<usize> = if batch == n {
        (0..n).collect()
    } else {
        let mut idx = index::sample(&mut rng, n, batch).into_vec();
        idx.sort_unstable();
        idx
    };
    let uniform = target.is_uniform(T::lit(1e-12).max(T::epsilon() * T::lit(8.0)));
    let whole_target = uniform && target.len() == batch;
    let atoms: Vec<usize> = if whole_target {
        (0..batch).collect()
    } else if uniform && target.len() > batch {
        index::sample(&mut rng, target.len(), batch).into_vec()
    } else {
        let w: Vec<f64> = target.weights().iter().map(|x| x.to_f64_lossy()).collect();
        let dist = WeightedIndex::new(&w).map_err(|e| SwarmError::InvalidInput(e.to_string()))?;
        (0..batch).map(|_| dist.sample(&mut rng)).collect()
    };
    let src: Vec<Vec2<T>> = agents.iter().map(|&i| state.positions[i]).collect();
    let dst: Vec<Vec2<T>> = atoms.iter().map(|&j| target.points()[j]).collect();
    let cost = cost_matrix(&src, &dst, T::lit(2.0));
    let full = whole_target && batch == n;
    let warm = if full { state.duals.as_deref() } else { None };
    let (matching, duals) = hungarian_warm(&cost, batch, batch, warm);

    let mut positions = state.positions.clone();
    let mut objective = T::zero();
    let mut moved = T::zero();
    for (r, &i) in agents.iter().enumerate() {
        let y = dst[matching[r]];
        let p = state.positions[i];
        objective += p.dist_sq(y);
        let next = workspace.project(p * (T::one() - tau) + y * tau);
        moved += p.dist(next);
        positions[i] = next;
    }
    let bf = T::from_usize_lossy(batch);
    Ok(StepOutcome {
        state: SwarmState {
            positions,
            iteration: state.iteration + 1,
            w2: None,
            // after moving along optimal rays, (1 − τ)·v remain optimal duals
            duals: full.then(|| duals.into_iter().map(|v| v * (T::one() - tau)).collect()),
        },
        objective: objective / bf,
        mean_displacement: moved / T::from_usize_lossy(n),
    })
}

/// Agent counts on an `nx × ny` grid over `bb`, bottom row first.
pub fn occupancy_histogram<T: Scalar>(positions: &[Vec2<T>], bb: &Aabb<T>, nx: usize, ny: usize) -> Vec<usize> {
    let mut counts = vec![0usize; nx * ny];
    for p in positions {
        let fx = ((p.x - bb.min.x) / bb.width()).to_f64_lossy();
        let fy = ((p.y - bb.min.y) / bb.height()).to_f64_lossy();
        let i = ((fx * nx as f64).floor().max(0.0) as usize).min(nx - 1);
        let j = ((fy * ny as f64).floor().max(0.0) as usize).min(ny - 1);
        counts[j * nx + i] += 1;
    }
    counts
}

/// Binned transport-distance estimate between a swarm and a target density.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmMetric<T> {
    bins: usize,
    bbox: Aabb<T>,
    target: DiscreteMeasure<T>,
    target_self: T,
    epsilon: T,
    max_iters: usize,
}

impl<T: Scalar> SwarmMetric<T> {
    /// Target discretized on `bins × bins` cells; `ε` is a quarter of the squared cell size.
    pub fn new(phi: &DensityField<T>, bins: usize) -> Result<Self, SwarmError> {
        let bbox = phi.workspace().bounding_box();
        let h = (bbox.width().max(bbox.height())) / T::from_usize_lossy(bins);
        let target = phi.discretize(bins, bins)?;
        let epsilon = T::lit(0.25) * h * h;
        let max_iters = 20_000;
        let target_self = entropic_self_cost(&target, T::lit(2.0), epsilon, max_iters)?;
        Ok(Self {
            bins,
            bbox,
            target,
            target_self,
            epsilon,
            max_iters,
        })
    }

    /// Entropic `W₂` between the binned swarm occupancy and the binned target.
    pub fn estimate(&self, positions: &[Vec2<T>]) -> Result<T, SwarmError> {
        let counts = occupancy_histogram(positions, &self.bbox, self.bins, self.bins);
        let dx = self.bbox.width() / T::from_usize_lossy(self.bins);
        let dy = self.bbox.height() / T::from_usize_lossy(self.bins);
        let (mut pts, mut w) = (Vec::new(), Vec::new());
        for (k, c) in counts.iter().enumerate() {
            if *c > 0 {
                let (i, j) = (k % self.bins, k / self.bins);
                pts.push(Vec2::new(
                    self.bbox.min.x + dx * (T::from_usize_lossy(i) + T::lit(0.5)),
                    self.bbox.min.y + dy * (T::from_usize_lossy(j) + T::lit(0.5)),
                ));
                w.push(T::from_usize_lossy(*c));
            }
        }
        let swarm = DiscreteMeasure::from_unnormalized(pts, w)?;
        Ok(debiased_sinkhorn_value(&swarm, &self.target, self.target_self, T::lit(2.0), self.epsilon, self.max_iters)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconfigOptions<T> {
    pub iters: usize,
    pub tau: T,
    /// Agents moved per step; `None` moves all of them.
    pub batch: Option<usize>,
    pub seed: u64,
    /// Keep a snapshot every this many steps (the first and last are always kept).
    pub frame_every: usize,
    /// Bins per side of the transport-distance estimate; `None` picks the largest
    /// power of two with at least four agents per bin (between 4 and 32).
    pub metric_bins: Option<usize>,
}

impl<T: Scalar> Default for ReconfigOptions<T> {
    fn default() -> Self {
        Self {
            iters: 50,
            tau: T::lit(0.3),
            batch: None,
            seed: 0,
            frame_every: 10,
            metric_bins: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconfigRecord<T> {
    pub iter: usize,
    pub w2: T,
    /// Matched-ray objective of the step that produced this record (none initially).
    pub objective: Option<T>,
    pub mean_displacement: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconfiguration<T> {
    pub records: Vec<ReconfigRecord<T>>,
    pub frames: Vec<(usize, Vec<Vec2<T>>)>,
    pub target: DiscreteMeasure<T>,
    pub final_state: SwarmState<T>,
    pub converged: bool,
}

/// Largest power of two `b` with `b² ≤ n / 4`, clamped to `4..=32`.
pub fn default_metric_bins(n: usize) -> usize {
    let mut b = 4;
    while b < 32 && (2 * b) * (2 * b) * 4 <= n {
        b *= 2;
    }
    b
}

fn step_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn run_reconfiguration<T: Scalar>(
    phi_target: &DensityField<T>,
    n: usize,
    opts: &ReconfigOptions<T>,
) -> Result<Reconfiguration<T>, SwarmError> {
    run_reconfiguration_observed(phi_target, n, opts, |_, _| {})
}

/// Uniform random start, then displacement steps toward the quantized target until
/// `iters` or mean displacement below `1e-4 · diam(W)`; `observe` sees every record.
pub fn run_reconfiguration_observed<T: Scalar, F>(
    phi_target: &DensityField<T>,
    n: usize,
    opts: &ReconfigOptions<T>,
    mut observe: F,
) -> Result<Reconfiguration<T>, SwarmError>
where
    F: FnMut(&ReconfigRecord<T>, &SwarmState<T>),
{
    if n == 0 {
        return Err(SwarmError::InvalidInput("need at least one agent".into()));
    }
    let batch = opts.batch.unwrap_or(n);
    let w = phi_target.workspace();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut state = SwarmState::new(uniform_positions(w, n, &mut rng));
    let target = quantize_target(phi_target, n)?;
    let metric = SwarmMetric::new(phi_target, opts.metric_bins.unwrap_or_else(|| default_metric_bins(n)))?;
    let stop = T::lit(1e-4) * w.diameter();
    let every = opts.frame_every.max(1);

    let first = ReconfigRecord {
        iter: 0,
        w2: metric.estimate(&state.positions)?,
        objective: None,
        mean_displacement: T::zero(),
    };
    state.w2 = Some(first.w2);
    observe(&first, &state);
    let mut records = vec![first];
    let mut frames = vec![(0, state.positions.clone())];
    let mut converged = false;
    for k in 0..opts.iters {
        let out = transport_step(w, &state, &target, opts.tau, batch, step_seed(opts.seed, k))?;
        state = out.state;
        let rec = ReconfigRecord {
            iter: k + 1,
            w2: metric.estimate(&state.positions)?,
            objective: Some(out.objective),
            mean_displacement: out.mean_displacement,
        };
        state.w2 = Some(rec.w2);
        observe(&rec, &state);
        records.push(rec);
        converged = out.mean_displacement < stop;
        if (k + 1) % every == 0 || converged || k + 1 == opts.iters {
            frames.push((k + 1, state.positions.clone()));
        }
        if converged {
            break;
        }
    }
    Ok(Reconfiguration {
        records,
        frames,
        target,
        final_state: state,
        converged,
    })
}

/// Pairs `(i, j)`, `i < j`, whose Voronoi cells in `W` share a boundary segment
/// longer than `1e-9`.
pub fn voronoi_graph<T: Scalar>(workspace: &ConvexPolygon<T>, positions: &[Vec2<T>]) -> Result<Vec<(usize, usize)>, SwarmError> {
    let cells = voronoi_cells(workspace, positions)?;
    let boxes: Vec<Aabb<T>> = cells.iter().map(|c| c.bounding_box()).collect();
    let tol = T::lit(1e-7).max(T::geo_eps());
    let min_len = T::lit(1e-9);
    let n = positions.len();
    let edges: Vec<Vec<(usize, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            for j in i + 1..n {
                let (a, b) = (&boxes[i], &boxes[j]);
                if a.min.x > b.max.x + tol || b.min.x > a.max.x + tol || a.min.y > b.max.y + tol || b.min.y > a.max.y + tol {
                    continue;
                }
                let Some(line) = HalfPlane::bisector(positions[i], positions[j]) else { continue };
                if shared_boundary_length(&cells[i], &line, &cells[j]) > min_len {
                    out.push((i, j));
                }
            }
            out
        })
        .collect();
    Ok(edges.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    type P = Vec2<f64>;

    #[test]
    fn two_agents_are_adjacent() {
        let w = ConvexPolygon::unit_square();
        let g = voronoi_graph(&w, &[P::new(0.2, 0.5), P::new(0.8, 0.4)]).unwrap();
        assert_eq!(g, vec![(0, 1)]);
    }

    #[test]
    fn quadrants_touch_only_their_sides() {
        let w = ConvexPolygon::unit_square();
        let sites = [P::new(0.25, 0.25), P::new(0.75, 0.25), P::new(0.25, 0.75), P::new(0.75, 0.75)];
        let g = voronoi_graph(&w, &sites).unwrap();
        assert_eq!(g, vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn complete_transport_lands_on_target() {
        let w = ConvexPolygon::unit_square();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let start = uniform_positions(&w, 30, &mut rng);
        let goal = uniform_positions(&w, 30, &mut rng);
        let target = DiscreteMeasure::uniform(goal.clone()).unwrap();
        let out = transport_step(&w, &SwarmState::new(start), &target, 1.0, 30, 0).unwrap();
        let mut got = out.state.positions.clone();
        let mut want = goal;
        let key = |p: &P| (p.x, p.y);
        got.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        want.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        for (a, b) in got.iter().zip(&want) {
            assert!(a.dist(*b) < 1e-12);
        }
    }

    #[test]
    fn state_on_target_does_not_move() {
        let w = ConvexPolygon::unit_square();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pts = uniform_positions(&w, 25, &mut rng);
        let target = DiscreteMeasure::uniform(pts.clone()).unwrap();
        let out = transport_step(&w, &SwarmState::new(pts), &target, 0.4, 25, 1).unwrap();
        assert!(out.mean_displacement < 1e-15);
        assert_eq!(out.objective, 0.0);
    }

    #[test]
    fn quantized_target_has_requested_size() {
        let phi = DensityField::uniform(ConvexPolygon::rectangle(0.0, 0.0, 2.0, 1.0).unwrap());
        let t = quantize_target(&phi, 101).unwrap();
        assert_eq!(t.len(), 101);
        assert!(t.points().iter().all(|p| phi.workspace().contains(*p)));
    }
}
