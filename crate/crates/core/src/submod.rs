//! Monotone set-function maximization by sequential greedy under uniform and
//! partition matroids, with an exhaustive oracle for small instances.

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::Vec2;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubmodError {
    #[error("search space of {size} sets exceeds the limit of {limit}")]
    SearchSpaceTooLarge { size: u128, limit: u128 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Largest number of candidate sets `brute_force_opt` will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// A set function over the ground set `0..ground_size()`.
pub trait SetFunction<T>: Sync {
    fn ground_size(&self) -> usize;

    /// `f(set)`; `set` holds distinct elements in any order.
    fn eval(&self, set: &[usize]) -> T;

    /// `f(set ∪ {x}) − f(set)`.
    fn marginal(&self, set: &[usize], x: usize) -> T
    where
        T: Scalar,
    {
        let mut with = set.to_vec();
        with.push(x);
        self.eval(&with) - self.eval(set)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyResult<T> {
    /// Picked elements in pick order.
    pub selected: Vec<usize>,
    /// `(element, marginal gain)` per round.
    pub trace: Vec<(usize, T)>,
    pub value: T,
}

/// Index of the largest gain, lowest index on ties.
fn argmax<T: Scalar>(cands: &[usize], gains: &[T]) -> Option<(usize, T)> {
    let mut best: Option<(usize, T)> = None;
    for (&x, &g) in cands.iter().zip(gains) {
        if best.is_none_or(|(bx, bg)| g > bg || (g == bg && x < bx)) {
            best = Some((x, g));
        }
    }
    best
}

fn gains<T: Scalar, F: SetFunction<T> + ?Sized>(f: &F, set: &[usize], cands: &[usize]) -> Vec<T> {
    cands.par_iter().map(|&x| f.marginal(set, x)).collect()
}

/// Sequential greedy under `|R| ≤ n`: `n` rounds, each adding the element of largest
/// marginal gain.
pub fn greedy_uniform<T: Scalar, F: SetFunction<T> + ?Sized>(f: &F, n: usize) -> Result<GreedyResult<T>, SubmodError> {
    let size = f.ground_size();
    if n > size {
        return Err(SubmodError::InvalidInput(format!("cannot pick {n} of {size} elements")));
    }
    let mut selected = Vec::with_capacity(n);
    let mut trace = Vec::with_capacity(n);
    let mut taken = vec![false; size];
    for _ in 0..n {
        let cands: Vec<usize> = (0..size).filter(|&x| !taken[x]).collect();
        let g = gains(f, &selected, &cands);
        let (x, gain) = argmax(&cands, &g).expect("candidates remain");
        taken[x] = true;
        selected.push(x);
        trace.push((x, gain));
    }
    let value = f.eval(&selected);
    Ok(GreedyResult { selected, trace, value })
}

/// Order in which `greedy_partition` visits the blocks.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum BlockOrder {
    #[default]
    Ascending,
    Descending,
    Custom(Vec<usize>),
}

impl BlockOrder {
    fn sequence(&self, n: usize) -> Result<Vec<usize>, SubmodError> {
        match self {
            BlockOrder::Ascending => Ok((0..n).collect()),
            BlockOrder::Descending => Ok((0..n).rev().collect()),
            BlockOrder::Custom(order) => {
                let mut seen = vec![false; n];
                for &b in order {
                    if b >= n || std::mem::replace(&mut seen[b], true) {
                        return Err(SubmodError::InvalidInput(format!("block order {order:?} is not a permutation of 0..{n}")));
                    }
                }
                if order.len() != n {
                    return Err(SubmodError::InvalidInput(format!("block order {order:?} is not a permutation of 0..{n}")));
                }
                Ok(order.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionGreedy<T> {
    /// `(block, element)` in visiting order.
    pub picks: Vec<(usize, usize)>,
    pub trace: Vec<(usize, T)>,
    pub value: T,
}

impl<T: Scalar> PartitionGreedy<T> {
    pub fn selected(&self) -> Vec<usize> {
        self.picks.iter().map(|p| p.1).collect()
    }
}

fn check_blocks(blocks: &[Vec<usize>], size: usize) -> Result<(), SubmodError> {
    let mut owner = vec![false; size];
    for (b, block) in blocks.iter().enumerate() {
        if block.is_empty() {
            return Err(SubmodError::InvalidInput(format!("block {b} is empty")));
        }
        for &x in block {
            if x >= size {
                return Err(SubmodError::InvalidInput(format!("element {x} outside the ground set")));
            }
            if std::mem::replace(&mut owner[x], true) {
                return Err(SubmodError::InvalidInput(format!("element {x} appears in two blocks")));
            }
        }
    }
    Ok(())
}

/// Sequential greedy under the partition matroid `|R ∩ S_b| ≤ 1`: one round per block,
/// each picking the block element of largest marginal gain.
pub fn greedy_partition<T: Scalar, F: SetFunction<T> + ?Sized>(
    f: &F,
    blocks: &[Vec<usize>],
    order: &BlockOrder,
) -> Result<PartitionGreedy<T>, SubmodError> {
    check_blocks(blocks, f.ground_size())?;
    let mut selected = Vec::with_capacity(blocks.len());
    let mut picks = Vec::with_capacity(blocks.len());
    let mut trace = Vec::with_capacity(blocks.len());
    for b in order.sequence(blocks.len())? {
        let g = gains(f, &selected, &blocks[b]);
        let (x, gain) = argmax(&blocks[b], &g).expect("block is non-empty");
        selected.push(x);
        picks.push((b, x));
        trace.push((x, gain));
    }
    let value = f.eval(&selected);
    Ok(PartitionGreedy { picks, trace, value })
}

/// Blocks `S_i = {(i, j)}` over pair elements `i · pois + j`.
pub fn pair_blocks(agents: usize, pois: usize) -> Vec<Vec<usize>> {
    (0..agents).map(|i| (0..pois).map(|j| i * pois + j).collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Matroid {
    /// `|R| ≤ k`.
    Uniform { k: usize },
    /// At most one element per block.
    Partition { blocks: Vec<Vec<usize>> },
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

/// Exhaustive maximum over every independent set of `constraint`; on ties the first
/// set enumerated wins (smaller sets first, then lexicographic).
pub fn brute_force_opt<T: Scalar, F: SetFunction<T> + ?Sized>(
    f: &F,
    constraint: &Matroid,
) -> Result<(Vec<usize>, T), SubmodError> {
    let size = f.ground_size();
    match constraint {
        Matroid::Uniform { k } => {
            let k = (*k).min(size);
            let total: u128 = (0..=k).map(|r| binomial(size, r)).fold(0u128, |a, b| a.saturating_add(b));
            if total > BRUTE_FORCE_LIMIT {
                return Err(SubmodError::SearchSpaceTooLarge { size: total, limit: BRUTE_FORCE_LIMIT });
            }
            let mut best = (Vec::new(), f.eval(&[]));
            for r in 1..=k {
                let mut comb: Vec<usize> = (0..r).collect();
                loop {
                    let v = f.eval(&comb);
                    if v > best.1 {
                        best = (comb.clone(), v);
                    }
                    // next combination in lexicographic order
                    let Some(i) = (0..r).rev().find(|&i| comb[i] < size - r + i) else { break };
                    comb[i] += 1;
                    for t in i + 1..r {
                        comb[t] = comb[t - 1] + 1;
                    }
                }
            }
            Ok(best)
        }
        Matroid::Partition { blocks } => {
            check_blocks(blocks, size)?;
            let total = blocks.iter().fold(1u128, |a, b| a.saturating_mul(b.len() as u128 + 1));
            if total > BRUTE_FORCE_LIMIT {
                return Err(SubmodError::SearchSpaceTooLarge { size: total, limit: BRUTE_FORCE_LIMIT });
            }
            // choice[b] == 0 leaves block b empty, otherwise picks blocks[b][choice[b] - 1]
            let mut choice = vec![0usize; blocks.len()];
            let mut best = (Vec::new(), f.eval(&[]));
            let mut set = Vec::with_capacity(blocks.len());
            loop {
                set.clear();
                set.extend(choice.iter().zip(blocks).filter(|(c, _)| **c > 0).map(|(c, b)| b[*c - 1]));
                let v = f.eval(&set);
                if v > best.1 {
                    best = (set.clone(), v);
                }
                let Some(b) = (0..blocks.len()).rev().find(|&b| choice[b] < blocks[b].len()) else { break };
                choice[b] += 1;
                choice[b + 1..].iter_mut().for_each(|c| *c = 0);
            }
            Ok(best)
        }
    }
}

/// `f(R) = Σ_{x∈R} w_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Modular<T> {
    pub weights: Vec<T>,
}

impl<T: Scalar> SetFunction<T> for Modular<T> {
    fn ground_size(&self) -> usize {
        self.weights.len()
    }

    fn eval(&self, set: &[usize]) -> T {
        set.iter().map(|&x| self.weights[x]).sum()
    }

    fn marginal(&self, set: &[usize], x: usize) -> T {
        if set.contains(&x) {
            T::zero()
        } else {
            self.weights[x]
        }
    }
}

/// Weighted union size: element `x` covers `sets[x]` ⊆ `0..weights.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxCover<T> {
    pub sets: Vec<Vec<usize>>,
    pub weights: Vec<T>,
}

impl<T: Scalar> MaxCover<T> {
    pub fn new(sets: Vec<Vec<usize>>, weights: Vec<T>) -> Result<Self, SubmodError> {
        if sets.iter().flatten().any(|&u| u >= weights.len()) {
            return Err(SubmodError::InvalidInput("set references an item outside the universe".into()));
        }
        if weights.iter().any(|w| !(*w >= T::zero())) {
            return Err(SubmodError::InvalidInput("item weights must be nonnegative".into()));
        }
        Ok(Self { sets, weights })
    }

    fn covered(&self, set: &[usize]) -> Vec<bool> {
        let mut hit = vec![false; self.weights.len()];
        for &x in set {
            for &u in &self.sets[x] {
                hit[u] = true;
            }
        }
        hit
    }
}

impl<T: Scalar> SetFunction<T> for MaxCover<T> {
    fn ground_size(&self) -> usize {
        self.sets.len()
    }

    fn eval(&self, set: &[usize]) -> T {
        self.covered(set)
            .iter()
            .zip(&self.weights)
            .filter(|(h, _)| **h)
            .map(|(_, w)| *w)
            .sum()
    }

    fn marginal(&self, set: &[usize], x: usize) -> T {
        let hit = self.covered(set);
        let mut fresh = self.sets[x].clone();
        fresh.sort_unstable();
        fresh.dedup();
        fresh.iter().filter(|&&u| !hit[u]).map(|&u| self.weights[u]).sum()
    }
}

/// Exemplar-based clustering utility `f(R) = L({d₀}) − L(R ∪ {d₀})` with
/// `L(R) = Σ_{d∈D} min_{p∈R} ‖p − d‖` and a phantom exemplar `d₀` at distance `d_max`
/// from every datum.
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarClustering<T> {
    candidates: Vec<Vec2<T>>,
    data: Vec<Vec2<T>>,
    d_max: T,
    /// `dist[x][d]`, clamped at `d_max`.
    dist: Vec<Vec<T>>,
}

impl<T: Scalar> ExemplarClustering<T> {
    pub fn new(candidates: Vec<Vec2<T>>, data: Vec<Vec2<T>>, d_max: T) -> Result<Self, SubmodError> {
        if !(d_max > T::zero()) {
            return Err(SubmodError::InvalidInput("d_max must be positive".into()));
        }
        let dist = candidates
            .iter()
            .map(|p| data.iter().map(|d| p.dist(*d).min(d_max)).collect())
            .collect();
        Ok(Self {
            candidates,
            data,
            d_max,
            dist,
        })
    }

    /// Phantom distance `2 · diameter`.
    pub fn with_diameter(candidates: Vec<Vec2<T>>, data: Vec<Vec2<T>>, diameter: T) -> Result<Self, SubmodError> {
        Self::new(candidates, data, T::lit(2.0) * diameter)
    }

    pub fn candidates(&self) -> &[Vec2<T>] {
        &self.candidates
    }

    pub fn data(&self) -> &[Vec2<T>] {
        &self.data
    }

    pub fn d_max(&self) -> T {
        self.d_max
    }

    /// `L(R ∪ {d₀})`.
    pub fn loss(&self, set: &[usize]) -> T {
        (0..self.data.len())
            .map(|d| set.iter().fold(self.d_max, |m, &x| m.min(self.dist[x][d])))
            .sum()
    }
}

impl<T: Scalar> SetFunction<T> for ExemplarClustering<T> {
    fn ground_size(&self) -> usize {
        self.candidates.len()
    }

    fn eval(&self, set: &[usize]) -> T {
        self.d_max * T::from_usize_lossy(self.data.len()) - self.loss(set)
    }
}

/// Agent-dependent coverage over pair elements `i · pois + j`: agent `i` placed at PoI
/// `j` covers every datum within `radii[i]`; the value is the covered data weight.
#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneousCoverage<T> {
    cover: MaxCover<T>,
    agents: usize,
    pois: usize,
}

impl<T: Scalar> HeterogeneousCoverage<T> {
    pub fn new(radii: &[T], pois: &[Vec2<T>], data: &[Vec2<T>], weights: Vec<T>) -> Result<Self, SubmodError> {
        if weights.len() != data.len() {
            return Err(SubmodError::InvalidInput("one weight per datum required".into()));
        }
        let mut sets = Vec::with_capacity(radii.len() * pois.len());
        for r in radii {
            for p in pois {
                sets.push((0..data.len()).filter(|&d| p.dist(data[d]) <= *r).collect());
            }
        }
        Ok(Self {
            cover: MaxCover::new(sets, weights)?,
            agents: radii.len(),
            pois: pois.len(),
        })
    }

    pub fn blocks(&self) -> Vec<Vec<usize>> {
        pair_blocks(self.agents, self.pois)
    }

    /// `(agent, poi)` of a pair element.
    pub fn pair(&self, x: usize) -> (usize, usize) {
        (x / self.pois, x % self.pois)
    }
}

impl<T: Scalar> SetFunction<T> for HeterogeneousCoverage<T> {
    fn ground_size(&self) -> usize {
        self.cover.ground_size()
    }

    fn eval(&self, set: &[usize]) -> T {
        self.cover.eval(set)
    }

    fn marginal(&self, set: &[usize], x: usize) -> T {
        self.cover.marginal(set, x)
    }
}

/// Agent-independent utility lifted to pair elements `i · pois + j` (PoI `j`).
#[derive(Debug, Clone, PartialEq)]
pub struct Lifted<F> {
    pub inner: F,
    pub agents: usize,
}

impl<T: Scalar, F: SetFunction<T>> SetFunction<T> for Lifted<F> {
    fn ground_size(&self) -> usize {
        self.agents * self.inner.ground_size()
    }

    fn eval(&self, set: &[usize]) -> T {
        let n = self.inner.ground_size();
        let mut pois: Vec<usize> = set.iter().map(|x| x % n).collect();
        pois.sort_unstable();
        pois.dedup();
        self.inner.eval(&pois)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Vec<Vec2<f64>> {
        xs.iter().map(|&x| Vec2::new(x, 0.0)).collect()
    }

    #[test]
    fn modular_greedy_takes_largest() {
        let f = Modular { weights: vec![0.3, 2.0, 1.5, 0.1, 1.9] };
        let r = greedy_uniform(&f, 3).unwrap();
        assert_eq!(r.selected, vec![1, 4, 2]);
        assert!((r.value - 5.4f64).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let f = Modular { weights: vec![1.0, 2.0, 2.0, 2.0] };
        assert_eq!(greedy_uniform(&f, 2).unwrap().selected, vec![1, 2]);
    }

    #[test]
    fn full_selection_is_ground_set() {
        let f = Modular { weights: vec![1.0, 3.0, 2.0] };
        let mut s = greedy_uniform(&f, 3).unwrap().selected;
        s.sort_unstable();
        assert_eq!(s, vec![0, 1, 2]);
    }

    #[test]
    fn too_many_picks_rejected() {
        let f = Modular { weights: vec![1.0] };
        assert!(greedy_uniform(&f, 2).is_err());
    }

    #[test]
    fn exemplar_hand_computation() {
        let data = line(&[0.0, 1.0, 10.0]);
        let f = ExemplarClustering::new(data.clone(), data, 20.0).unwrap();
        assert_eq!(f.eval(&[]), 0.0);
        assert!((f.loss(&[1]) - 10.0).abs() < 1e-12);
        assert!((f.eval(&[1]) - 50.0).abs() < 1e-12);
        assert!((f.eval(&[0, 1, 2]) - 60.0).abs() < 1e-12);
    }

    #[test]
    fn forced_partition() {
        let f = Modular { weights: vec![1.0, 2.0, 3.0] };
        let r = greedy_partition(&f, &[vec![2], vec![0], vec![1]], &BlockOrder::Ascending).unwrap();
        assert_eq!(r.picks, vec![(0, 2), (1, 0), (2, 1)]);
    }

    #[test]
    fn modular_partition_ignores_order() {
        let f = Modular { weights: vec![1.0, 5.0, 3.0, 2.0, 4.0, 0.5] };
        let blocks = vec![vec![0, 1], vec![2, 3], vec![4, 5]];
        let a = greedy_partition(&f, &blocks, &BlockOrder::Ascending).unwrap();
        let b = greedy_partition(&f, &blocks, &BlockOrder::Descending).unwrap();
        let mut sa = a.selected();
        let mut sb = b.selected();
        sa.sort_unstable();
        sb.sort_unstable();
        assert_eq!(sa, vec![1, 2, 4]);
        assert_eq!(sa, sb);
    }

    #[test]
    fn bad_block_order_rejected() {
        let f = Modular { weights: vec![1.0, 2.0] };
        let blocks = vec![vec![0], vec![1]];
        assert!(greedy_partition(&f, &blocks, &BlockOrder::Custom(vec![0, 0])).is_err());
        assert!(greedy_partition(&f, &[vec![0, 1], vec![1]], &BlockOrder::Ascending).is_err());
    }

    #[test]
    fn brute_force_on_modular() {
        let f = Modular { weights: vec![0.3, 2.0, 1.5, 0.1, 1.9] };
        let (set, v) = brute_force_opt(&f, &Matroid::Uniform { k: 2 }).unwrap();
        assert_eq!(set, vec![1, 4]);
        assert!((v - 3.9f64).abs() < 1e-12);
    }

    #[test]
    fn brute_force_size_guard() {
        let f = Modular { weights: vec![1.0; 40] };
        assert!(matches!(
            brute_force_opt(&f, &Matroid::Uniform { k: 10 }),
            Err(SubmodError::SearchSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn max_cover_counts_union() {
        let f = MaxCover::new(vec![vec![0, 1], vec![1, 2], vec![3]], vec![1.0, 1.0, 1.0, 5.0]).unwrap();
        assert_eq!(f.eval(&[0, 1]), 3.0);
        assert_eq!(f.marginal(&[0], 1), 1.0);
        assert_eq!(greedy_uniform(&f, 1).unwrap().selected, vec![2]);
    }

    #[test]
    fn lifted_collapses_duplicate_pois() {
        let f = Lifted {
            inner: Modular { weights: vec![1.0, 2.0] },
            agents: 2,
        };
        assert_eq!(f.eval(&[1, 3]), 2.0);
        assert_eq!(f.eval(&[0, 3]), 3.0);
    }
}
