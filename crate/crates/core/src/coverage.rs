//! Locational-optimization costs and Lloyd descent for homogeneous (Voronoi) and
//! heterogeneous (power diagram) agents, plus the equitable-partition weight solver.

use log::warn;
use rayon::prelude::*;
use thiserror::Error;

use crate::density::DensityField;
use crate::geometry::{power_cells, voronoi_cells, ConvexPolygon, GeometryError, Vec2};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoverageError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("power kernel needs a power partition when radii differ")]
    KernelMismatch,
    #[error("cost rose from {previous} to {current} at iteration {iter}; quadrature too coarse?")]
    NonMonotoneDescent { iter: usize, previous: f64, current: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// One agent: position, power radius (0 for homogeneous agents) and id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState<T> {
    pub id: usize,
    pub position: Vec2<T>,
    pub power_radius: T,
}

impl<T: Scalar> AgentState<T> {
    pub fn new(id: usize, position: Vec2<T>) -> Self {
        Self {
            id,
            position,
            power_radius: T::zero(),
        }
    }

    pub fn with_radius(mut self, rho: T) -> Self {
        self.power_radius = rho;
        self
    }
}

/// Agents with ids `0..n` at `positions`, radii optional.
pub fn agents_from<T: Scalar>(positions: &[Vec2<T>], radii: Option<&[T]>) -> Vec<AgentState<T>> {
    positions
        .iter()
        .enumerate()
        .map(|(i, p)| AgentState::new(i, *p).with_radius(radii.map_or(T::zero(), |r| r[i])))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PartitionKind {
    Voronoi,
    Power,
}

/// Service degradation `f` in the locational cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKernel {
    /// `f(r) = r²`
    Squared,
    /// `f(r) = r² − ρ_i²`
    Power,
}

impl PartitionKind {
    pub fn natural_kernel(self) -> CostKernel {
        match self {
            PartitionKind::Voronoi => CostKernel::Squared,
            PartitionKind::Power => CostKernel::Power,
        }
    }
}

/// Cells (one per agent, possibly empty for power diagrams) with their φ-masses and
/// centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition<T> {
    pub kind: PartitionKind,
    pub cells: Vec<Option<ConvexPolygon<T>>>,
    pub masses: Vec<T>,
    pub centroids: Vec<Option<Vec2<T>>>,
}

impl<T: Scalar> Partition<T> {
    pub fn total_mass(&self) -> T {
        self.masses.iter().copied().sum()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

pub fn build_partition<T: Scalar>(
    phi: &DensityField<T>,
    agents: &[AgentState<T>],
    kind: PartitionKind,
) -> Result<Partition<T>, CoverageError> {
    let sites: Vec<Vec2<T>> = agents.iter().map(|a| a.position).collect();
    let cells: Vec<Option<ConvexPolygon<T>>> = match kind {
        PartitionKind::Voronoi => voronoi_cells(phi.workspace(), &sites)?
            .into_iter()
            .map(Some)
            .collect(),
        PartitionKind::Power => {
            let radii: Vec<T> = agents.iter().map(|a| a.power_radius).collect();
            power_cells(phi.workspace(), &sites, &radii)?
        }
    };
    let moments: Vec<(T, Option<Vec2<T>>)> = cells
        .par_iter()
        .map(|c| match c {
            Some(cell) => {
                let m = phi.cell_mass_centroid(cell);
                (m.mass, m.centroid)
            }
            None => (T::zero(), None),
        })
        .collect();
    let (masses, centroids) = moments.into_iter().unzip();
    Ok(Partition {
        kind,
        cells,
        masses,
        centroids,
    })
}

/// `H = Σ_i ∫_{W_i} f(‖q − p_i‖) dφ` over the given partition.
pub fn coverage_cost<T: Scalar>(
    phi: &DensityField<T>,
    agents: &[AgentState<T>],
    partition: &Partition<T>,
    kernel: CostKernel,
) -> Result<T, CoverageError> {
    if agents.len() != partition.len() {
        return Err(CoverageError::InvalidInput(format!(
            "{} agents but {} cells",
            agents.len(),
            partition.len()
        )));
    }
    if kernel == CostKernel::Power && partition.kind == PartitionKind::Voronoi {
        let r0 = agents.first().map_or(T::zero(), |a| a.power_radius);
        if agents.iter().any(|a| a.power_radius != r0) {
            return Err(CoverageError::KernelMismatch);
        }
    }
    let terms: Vec<T> = partition
        .cells
        .par_iter()
        .zip(agents.par_iter())
        .zip(partition.masses.par_iter())
        .map(|((cell, agent), mass)| {
            let Some(cell) = cell else { return T::zero() };
            let second = phi.second_moment(cell, agent.position);
            match kernel {
                CostKernel::Squared => second,
                CostKernel::Power => second - agent.power_radius * agent.power_radius * *mass,
            }
        })
        .collect();
    Ok(terms.into_iter().sum())
}

/// `∂H_V/∂p_i = 2 m_i (p_i − c_i)`; zero for empty cells.
pub fn cost_gradient<T: Scalar>(agents: &[AgentState<T>], partition: &Partition<T>) -> Vec<Vec2<T>> {
    agents
        .iter()
        .zip(&partition.masses)
        .zip(&partition.centroids)
        .map(|((a, m), c)| match c {
            Some(c) => (a.position - *c) * (T::lit(2.0) * *m),
            None => Vec2::zero(),
        })
        .collect()
}

/// Result of one Lloyd map application.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydStep<T> {
    pub agents: Vec<AgentState<T>>,
    /// Partition of the positions before the move.
    pub partition: Partition<T>,
    /// Cost before the move.
    pub cost: T,
    pub max_displacement: T,
}

/// Moves every agent with a non-empty cell to its cell centroid.
pub fn lloyd_step<T: Scalar>(
    phi: &DensityField<T>,
    agents: &[AgentState<T>],
    kind: PartitionKind,
) -> Result<LloydStep<T>, CoverageError> {
    let partition = build_partition(phi, agents, kind)?;
    let cost = coverage_cost(phi, agents, &partition, kind.natural_kernel())?;
    let w = phi.workspace();
    let mut next: Vec<AgentState<T>> = agents.to_vec();
    for (i, agent) in next.iter_mut().enumerate() {
        match partition.centroids[i] {
            Some(c) => agent.position = w.project(c),
            None => warn!("agent {} has an empty cell; holding position", agent.id),
        }
    }
    separate_collisions(w, &mut next);
    let max_displacement = agents
        .iter()
        .zip(&next)
        .map(|(a, b)| a.position.dist(b.position))
        .fold(T::zero(), |m, d| m.max(d));
    Ok(LloydStep {
        agents: next,
        partition,
        cost,
        max_displacement,
    })
}

/// Nudges coincident agents apart by `1e-6 · diam(W)`.
fn separate_collisions<T: Scalar>(w: &ConvexPolygon<T>, agents: &mut [AgentState<T>]) {
    let eps = T::geo_eps();
    let nudge = T::lit(1e-6) * w.diameter();
    for j in 1..agents.len() {
        for i in 0..j {
            if agents[i].position.dist(agents[j].position) <= eps {
                warn!("agents {} and {} collided; perturbing", agents[i].id, agents[j].id);
                let angle = T::lit(2.399_963_229_728_653) * T::from_usize_lossy(j);
                let dir = Vec2::new(angle.cos(), angle.sin());
                let mut p = w.project(agents[j].position + dir * nudge);
                if p.dist(agents[i].position) <= eps {
                    p = w.project(agents[j].position - dir * nudge);
                }
                agents[j].position = p;
            }
        }
    }
}

/// One iteration of a descent run.
#[derive(Debug, Clone, PartialEq)]
pub struct DescentRecord<T> {
    pub iter: usize,
    pub cost: T,
    /// Positions at which `cost` and `masses` were evaluated.
    pub positions: Vec<Vec2<T>>,
    pub masses: Vec<T>,
    pub max_displacement: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub records: Vec<DescentRecord<T>>,
    pub final_agents: Vec<AgentState<T>>,
    pub converged: bool,
}

impl<T: Scalar> Trajectory<T> {
    pub fn costs(&self) -> Vec<T> {
        self.records.iter().map(|r| r.cost).collect()
    }

    pub fn final_positions(&self) -> Vec<Vec2<T>> {
        self.final_agents.iter().map(|a| a.position).collect()
    }
}

/// Relative slack allowed before a cost increase counts as non-monotone.
pub const DESCENT_SLACK: f64 = 1e-6;

/// Iterates [`lloyd_step`] until the largest displacement drops below `tol` or
/// `max_iters` steps have been taken.
pub fn run_descent<T: Scalar>(
    phi: &DensityField<T>,
    agents: &[AgentState<T>],
    kind: PartitionKind,
    max_iters: usize,
    tol: T,
) -> Result<Trajectory<T>, CoverageError> {
    run_descent_observed(phi, agents, kind, max_iters, tol, |_| {})
}

/// [`run_descent`] calling `observe` after every iteration (before any error check on
/// that iteration's cost, so logs keep the offending record).
pub fn run_descent_observed<T: Scalar, F: FnMut(&DescentRecord<T>)>(
    phi: &DensityField<T>,
    agents: &[AgentState<T>],
    kind: PartitionKind,
    max_iters: usize,
    tol: T,
    mut observe: F,
) -> Result<Trajectory<T>, CoverageError> {
    if max_iters == 0 || !(tol > T::zero()) {
        return Err(CoverageError::InvalidInput("need max_iters ≥ 1 and tol > 0".into()));
    }
    let mut current = agents.to_vec();
    let mut records: Vec<DescentRecord<T>> = Vec::new();
    let mut converged = false;
    for iter in 0..max_iters {
        let step = lloyd_step(phi, &current, kind)?;
        let record = DescentRecord {
            iter,
            cost: step.cost,
            positions: current.iter().map(|a| a.position).collect(),
            masses: step.partition.masses.clone(),
            max_displacement: step.max_displacement,
        };
        observe(&record);
        if let Some(prev) = records.last() {
            let slack = T::lit(DESCENT_SLACK) * prev.cost.abs();
            if record.cost > prev.cost + slack {
                return Err(CoverageError::NonMonotoneDescent {
                    iter,
                    previous: prev.cost.to_f64_lossy(),
                    current: record.cost.to_f64_lossy(),
                });
            }
        }
        records.push(record);
        current = step.agents;
        if step.max_displacement < tol {
            converged = true;
            break;
        }
    }
    Ok(Trajectory {
        records,
        final_agents: current,
        converged,
    })
}

/// Dual objective of semi-discrete transport with weights `w_i = ρ_i²`:
/// `Σ_i ∫_{P_i} (‖q − p_i‖² − w_i) dφ + Σ_i w_i / N`, with its gradient `1/N − m_i`.
fn equitable_dual<T: Scalar>(
    phi: &DensityField<T>,
    sites: &[Vec2<T>],
    w: &[T],
) -> Result<(T, Vec<T>), CoverageError> {
    let radii: Vec<T> = w.iter().map(|x| x.max(T::zero()).sqrt()).collect();
    let cells = power_cells(phi.workspace(), sites, &radii)?;
    let target = T::one() / T::from_usize_lossy(sites.len());
    let parts: Vec<(T, T)> = cells
        .par_iter()
        .enumerate()
        .map(|(i, c)| match c {
            Some(cell) => {
                let m = phi.mass(cell);
                (phi.second_moment(cell, sites[i]) - w[i] * m, m)
            }
            None => (T::zero(), T::zero()),
        })
        .collect();
    let value = parts.iter().map(|p| p.0).sum::<T>() + w.iter().copied().sum::<T>() * target;
    Ok((value, parts.into_iter().map(|p| p.1).collect()))
}

/// Power radii making every power cell carry mass `1/N ± tol_mass`.
///
/// Ascends the concave dual on the squared radii, `ρ_i² ← ρ_i² + η (1/N − m_i)`, from
/// `η = area(W)/2`, halving `η` whenever a step fails the Armijo test.
pub fn equitable_weights<T: Scalar>(
    phi: &DensityField<T>,
    positions: &[Vec2<T>],
    tol_mass: T,
) -> Result<Vec<T>, CoverageError> {
    const MAX_ITERS: usize = 10_000;
    let n = positions.len();
    if n == 0 {
        return Err(CoverageError::InvalidInput("no sites".into()));
    }
    let target = T::one() / T::from_usize_lossy(n);
    let eta0 = phi.workspace().area() * T::lit(0.5);
    let mut eta = eta0;
    let mut w = vec![T::zero(); n];
    let (mut value, mut masses) = equitable_dual(phi, positions, &w)?;
    let residual = |m: &[T]| m.iter().fold(T::zero(), |acc, mi| acc.max((*mi - target).abs()));
    for _ in 0..MAX_ITERS {
        if residual(&masses) <= tol_mass {
            return Ok(w.iter().map(|x| x.sqrt()).collect());
        }
        let grad: Vec<T> = masses.iter().map(|m| target - *m).collect();
        let grad_sq: T = grad.iter().map(|g| *g * *g).sum();
        loop {
            let mut trial: Vec<T> = w.iter().zip(&grad).map(|(wi, g)| *wi + eta * *g).collect();
            // the diagram is invariant to a common shift; keep min weight at zero
            let lo = trial.iter().fold(T::infinity(), |m, x| m.min(*x));
            trial.iter_mut().for_each(|x| *x -= lo);
            let (v, m) = equitable_dual(phi, positions, &trial)?;
            let armijo = v >= value + T::lit(0.25) * eta * grad_sq;
            if armijo || eta < eta0 * T::lit(1e-9) {
                w = trial;
                value = v;
                masses = m;
                if armijo {
                    eta = (eta * T::lit(1.5)).min(eta0);
                }
                break;
            }
            eta *= T::lit(0.5);
        }
    }
    Err(CoverageError::NoConvergence {
        iterations: MAX_ITERS,
        residual: residual(&masses).to_f64_lossy(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::GaussianMixture;
    use crate::linalg::Sym2;

    type P = Vec2<f64>;

    fn uniform() -> DensityField<f64> {
        DensityField::uniform(ConvexPolygon::unit_square())
    }

    /// Midpoint-rule oracle of Σ_i ∫_{V_i} ‖q − p_i‖² dq for uniform φ on the unit square.
    fn riemann_cost(sites: &[P], n: usize) -> f64 {
        let h = 1.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let q = P::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                acc += sites.iter().map(|s| s.dist_sq(q)).fold(f64::INFINITY, f64::min);
            }
        }
        acc * h * h
    }

    #[test]
    fn single_agent_at_center_costs_one_sixth() {
        let phi = uniform();
        let agents = agents_from(&[P::new(0.5, 0.5)], None);
        let part = build_partition(&phi, &agents, PartitionKind::Voronoi).unwrap();
        let h = coverage_cost(&phi, &agents, &part, CostKernel::Squared).unwrap();
        assert!((h - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn two_agents_match_riemann_oracle() {
        let phi = uniform();
        let sites = [P::new(0.25, 0.5), P::new(0.75, 0.5)];
        let agents = agents_from(&sites, None);
        let part = build_partition(&phi, &agents, PartitionKind::Voronoi).unwrap();
        let h = coverage_cost(&phi, &agents, &part, CostKernel::Squared).unwrap();
        let oracle = riemann_cost(&sites, 1000);
        assert!((h - oracle).abs() < 1e-4, "{h} vs {oracle}");
        assert!((h - 5.0 / 48.0).abs() < 1e-12);
    }

    #[test]
    fn equal_radii_shift_cost_by_rho_squared() {
        let phi = uniform();
        let sites = [P::new(0.2, 0.3), P::new(0.7, 0.6), P::new(0.4, 0.85)];
        let c = 0.3;
        let agents = agents_from(&sites, Some(&[c, c, c]));
        let vor = build_partition(&phi, &agents, PartitionKind::Voronoi).unwrap();
        let pow = build_partition(&phi, &agents, PartitionKind::Power).unwrap();
        let hv = coverage_cost(&phi, &agents, &vor, CostKernel::Squared).unwrap();
        let hp = coverage_cost(&phi, &agents, &pow, CostKernel::Power).unwrap();
        assert!((hp - (hv - c * c)).abs() < 1e-6);
    }

    #[test]
    fn kernel_mismatch_is_reported() {
        let phi = uniform();
        let agents = agents_from(&[P::new(0.2, 0.3), P::new(0.7, 0.6)], Some(&[0.1, 0.2]));
        let vor = build_partition(&phi, &agents, PartitionKind::Voronoi).unwrap();
        assert_eq!(
            coverage_cost(&phi, &agents, &vor, CostKernel::Power),
            Err(CoverageError::KernelMismatch)
        );
    }

    #[test]
    fn single_agent_reaches_center_in_one_step() {
        let phi = uniform();
        let agents = agents_from(&[P::new(0.1, 0.8)], None);
        let step = lloyd_step(&phi, &agents, PartitionKind::Voronoi).unwrap();
        assert!(step.agents[0].position.dist(P::new(0.5, 0.5)) < 1e-12);
    }

    #[test]
    fn fixed_point_stops_after_one_iteration() {
        let phi = uniform();
        let sites = [
            P::new(0.25, 0.25),
            P::new(0.75, 0.25),
            P::new(0.25, 0.75),
            P::new(0.75, 0.75),
        ];
        let traj = run_descent(&phi, &agents_from(&sites, None), PartitionKind::Voronoi, 50, 1e-9)
            .unwrap();
        assert_eq!(traj.records.len(), 1);
        assert!(traj.records[0].max_displacement < 1e-12);
        assert!(traj.converged);
    }

    #[test]
    fn empty_power_cell_holds_position() {
        let phi = uniform();
        let agents = agents_from(&[P::new(0.25, 0.5), P::new(0.75, 0.5)], Some(&[10.0, 0.0]));
        let step = lloyd_step(&phi, &agents, PartitionKind::Power).unwrap();
        assert_eq!(step.agents[1].position, P::new(0.75, 0.5));
        assert!(step.partition.cells[1].is_none());
        assert_eq!(step.partition.masses[1], 0.0);
    }

    #[test]
    fn gradient_formula_on_two_agents() {
        let phi = uniform();
        let agents = agents_from(&[P::new(0.3, 0.5), P::new(0.75, 0.5)], None);
        let part = build_partition(&phi, &agents, PartitionKind::Voronoi).unwrap();
        let g = cost_gradient(&agents, &part);
        // left cell [0, 0.525] × [0, 1]: centroid x = 0.2625, mass 0.525
        assert!((g[0].x - 2.0 * 0.525 * (0.3 - 0.2625)).abs() < 1e-12);
    }

    #[test]
    fn equitable_symmetric_pair() {
        let phi = uniform();
        let sites = [P::new(0.25, 0.5), P::new(0.75, 0.5)];
        let rho = equitable_weights(&phi, &sites, 1e-6).unwrap();
        assert!((rho[0] - rho[1]).abs() < 1e-9);
    }

    #[test]
    fn equitable_asymmetric_pair_against_grid_labeling() {
        let phi = uniform();
        let sites = [P::new(0.1, 0.2), P::new(0.3, 0.35)];
        let tol = 1e-4;
        let rho = equitable_weights(&phi, &sites, tol).unwrap();
        let n = 800;
        let mut count = [0usize; 2];
        for i in 0..n {
            for j in 0..n {
                let q = P::new((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
                count[crate::geometry::nearest_site(&sites, Some(&rho), q)] += 1;
            }
        }
        let frac = count[0] as f64 / (n * n) as f64;
        assert!((frac - 0.5).abs() < tol + 2e-3, "{frac}");
    }

    #[test]
    fn descent_on_mixture_is_monotone() {
        let cov = Sym2::scaled_identity(0.01);
        let m = GaussianMixture::from_parts(
            &[0.5, 0.5],
            &[P::new(0.3, 0.3), P::new(0.7, 0.6)],
            &[cov, cov],
        )
        .unwrap();
        let phi = DensityField::gmm(ConvexPolygon::unit_square(), m).unwrap();
        let start = phi.sample(3, 5);
        let traj = run_descent(&phi, &agents_from(&start, None), PartitionKind::Voronoi, 300, 1e-6)
            .unwrap();
        assert!(traj.converged);
    }
}
