//! Primal network simplex for the uncapacitated transportation problem with
//! integer supplies and demands.
//!
//! Sources `0..m`, sinks `m..m+k`, and an artificial root carrying big-M arcs
//! `source → root` and `root → sink` that seed a strongly feasible spanning tree.
//! Leaving arcs follow Cunningham's last-blocking-arc rule, so degenerate pivots
//! cannot cycle.

use std::collections::VecDeque;

use crate::Scalar;

struct Network<'a, T> {
    m: usize,
    k: usize,
    cost: &'a [T],
    art: T,
}

impl<T: Scalar> Network<'_, T> {
    fn real_arcs(&self) -> usize {
        self.m * self.k
    }

    fn total_arcs(&self) -> usize {
        self.real_arcs() + self.m + self.k
    }

    fn root(&self) -> usize {
        self.m + self.k
    }

    fn ends(&self, a: usize) -> (usize, usize) {
        let mk = self.real_arcs();
        if a < mk {
            (a / self.k, self.m + a % self.k)
        } else if a < mk + self.m {
            (a - mk, self.root())
        } else {
            (self.root(), self.m + (a - mk - self.m))
        }
    }

    fn arc_cost(&self, a: usize) -> T {
        if a < self.real_arcs() {
            self.cost[a]
        } else {
            self.art
        }
    }
}

/// Optimal integer flows `(source, sink, amount)` with `amount > 0`.
///
/// `supply` and `demand` must be nonnegative with equal sums; `cost` is row-major
/// `supply.len() × demand.len()`.
pub(crate) fn solve<T: Scalar>(supply: &[i64], demand: &[i64], cost: &[T]) -> Vec<(usize, usize, i64)> {
    debug_assert_eq!(supply.iter().sum::<i64>(), demand.iter().sum::<i64>());
    // drop empty atoms: a zero-flow arc pointing at the root would break strong feasibility
    let src: Vec<usize> = (0..supply.len()).filter(|&i| supply[i] > 0).collect();
    let snk: Vec<usize> = (0..demand.len()).filter(|&j| demand[j] > 0).collect();
    if src.is_empty() || snk.is_empty() {
        return Vec::new();
    }
    let kk = demand.len();
    let (m, k) = (src.len(), snk.len());
    let mut sub = Vec::with_capacity(m * k);
    for &i in &src {
        sub.extend(snk.iter().map(|&j| cost[i * kk + j]));
    }
    let max_cost = sub.iter().fold(T::zero(), |a, c| a.max(c.abs()));
    let net = Network {
        m,
        k,
        cost: &sub,
        art: (max_cost + T::one()) * T::from_usize_lossy(m + k + 1),
    };
    let flows = pivot_loop(&net, &src.iter().map(|&i| supply[i]).collect::<Vec<_>>(), &snk.iter().map(|&j| demand[j]).collect::<Vec<_>>());
    flows
        .into_iter()
        .map(|(i, j, f)| (src[i], snk[j], f))
        .collect()
}

fn pivot_loop<T: Scalar>(net: &Network<'_, T>, supply: &[i64], demand: &[i64]) -> Vec<(usize, usize, i64)> {
    let (m, k) = (net.m, net.k);
    let nodes = m + k + 1;
    let root = net.root();
    let arcs = net.total_arcs();
    let mk = net.real_arcs();

    let mut flow = vec![0i64; arcs];
    let mut in_tree = vec![false; arcs];
    let mut parent = vec![usize::MAX; nodes];
    let mut parc = vec![usize::MAX; nodes];
    let mut depth = vec![0usize; nodes];
    let mut pot = vec![T::zero(); nodes];
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nodes];

    for i in 0..m {
        let a = mk + i;
        flow[a] = supply[i];
        in_tree[a] = true;
        parent[i] = root;
        parc[i] = a;
        depth[i] = 1;
        pot[i] = -net.art;
        adj[i].push((root, a));
        adj[root].push((i, a));
    }
    for (j, &d) in demand.iter().enumerate() {
        let a = mk + m + j;
        let node = m + j;
        flow[a] = d;
        in_tree[a] = true;
        parent[node] = root;
        parc[node] = a;
        depth[node] = 1;
        pot[node] = net.art;
        adj[node].push((root, a));
        adj[root].push((node, a));
    }

    let tol = T::epsilon() * net.art * T::lit(64.0);
    let block = ((arcs as f64).sqrt() as usize).max(16);
    let mut next = 0usize;
    let mut u_path: Vec<usize> = Vec::new();
    let mut v_path: Vec<usize> = Vec::new();
    let mut queue: VecDeque<usize> = VecDeque::new();

    loop {
        // block pricing
        let mut entering = usize::MAX;
        let mut best = -tol;
        let mut scanned = 0usize;
        while scanned < arcs {
            let end = (scanned + block).min(arcs);
            for _ in scanned..end {
                let a = next;
                next += 1;
                if next == arcs {
                    next = 0;
                }
                if in_tree[a] {
                    continue;
                }
                let (t, h) = net.ends(a);
                let rc = net.arc_cost(a) + pot[t] - pot[h];
                if rc < best {
                    best = rc;
                    entering = a;
                }
            }
            scanned = end;
            if entering != usize::MAX {
                break;
            }
        }
        if entering == usize::MAX {
            break;
        }

        let (u, v) = net.ends(entering);
        u_path.clear();
        v_path.clear();
        let (mut x, mut y) = (u, v);
        while depth[x] > depth[y] {
            u_path.push(x);
            x = parent[x];
        }
        while depth[y] > depth[x] {
            v_path.push(y);
            y = parent[y];
        }
        while x != y {
            u_path.push(x);
            x = parent[x];
            v_path.push(y);
            y = parent[y];
        }

        // backward arcs: on the u side those pointing up, on the v side those pointing down
        let u_back = |n: usize| net.ends(parc[n]).0 == n;
        let v_back = |n: usize| net.ends(parc[n]).1 == n;
        let mut delta = i64::MAX;
        for &n in &u_path {
            if u_back(n) {
                delta = delta.min(flow[parc[n]]);
            }
        }
        for &n in &v_path {
            if v_back(n) {
                delta = delta.min(flow[parc[n]]);
            }
        }
        assert!(delta != i64::MAX, "transportation problem is unbounded");

        let mut leave: Option<(usize, bool)> = None;
        for &n in &v_path {
            if v_back(n) && flow[parc[n]] == delta {
                leave = Some((n, false));
            }
        }
        if leave.is_none() {
            leave = u_path
                .iter()
                .find(|&&n| u_back(n) && flow[parc[n]] == delta)
                .map(|&n| (n, true));
        }
        let (out, on_u_side) = leave.expect("a blocking arc exists");

        for &n in &u_path {
            if u_back(n) {
                flow[parc[n]] -= delta;
            } else {
                flow[parc[n]] += delta;
            }
        }
        for &n in &v_path {
            if v_back(n) {
                flow[parc[n]] -= delta;
            } else {
                flow[parc[n]] += delta;
            }
        }
        flow[entering] = delta;

        let leaving = parc[out];
        let out_parent = parent[out];
        in_tree[leaving] = false;
        in_tree[entering] = true;
        adj[out].retain(|e| e.1 != leaving);
        adj[out_parent].retain(|e| e.1 != leaving);
        adj[u].push((v, entering));
        adj[v].push((u, entering));

        // the detached subtree holds `u` when the leaving arc is on the u side
        let (q, p) = if on_u_side { (u, v) } else { (v, u) };
        let c = net.arc_cost(entering);
        parent[q] = p;
        parc[q] = entering;
        depth[q] = depth[p] + 1;
        pot[q] = if u == p { pot[p] + c } else { pot[p] - c };
        queue.clear();
        queue.push_back(q);
        while let Some(n) = queue.pop_front() {
            for &(y, a) in &adj[n] {
                if y == parent[n] && a == parc[n] {
                    continue;
                }
                parent[y] = n;
                parc[y] = a;
                depth[y] = depth[n] + 1;
                let (t, _) = net.ends(a);
                let ca = net.arc_cost(a);
                pot[y] = if t == n { pot[n] + ca } else { pot[n] - ca };
                queue.push_back(y);
            }
        }
    }

    (0..mk)
        .filter(|&a| flow[a] > 0)
        .map(|a| (a / k, a % k, flow[a]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_prefers_diagonal() {
        let cost = [0.0, 1.0, 1.0, 0.0];
        let f = solve::<f64>(&[3, 5], &[3, 5], &cost);
        assert_eq!(f, vec![(0, 0, 3), (1, 1, 5)]);
    }

    #[test]
    fn unbalanced_atoms_split() {
        // one source feeding three sinks
        let f = solve::<f64>(&[10], &[2, 3, 5], &[1.0, 2.0, 3.0]);
        assert_eq!(f, vec![(0, 0, 2), (0, 1, 3), (0, 2, 5)]);
    }

    #[test]
    fn zero_supply_atoms_are_ignored() {
        let cost = [1.0, 0.0, 0.0, 2.0, 3.0, 1.0];
        let f = solve::<f64>(&[0, 4], &[1, 0, 3], &cost);
        let total: i64 = f.iter().map(|e| e.2).sum();
        assert_eq!(total, 4);
        assert!(f.iter().all(|e| e.0 == 1 && e.1 != 1));
    }
}
