//! Log-domain Sinkhorn with ε-scaling and rounding onto the transport polytope.
//!
//! Iterations run in blocks on the stabilized kernel
//! `K_ij = exp((f_i + g_j − c_ij)/ε) a_i b_j`, with the block's scalings absorbed back
//! into the potentials `f`, `g` at the end; a block that underflows falls back to one
//! exact log-sum-exp sweep.

use rayon::prelude::*;

use crate::Scalar;

pub(crate) struct SinkhornOutput<T> {
    pub value: T,
    pub f: Vec<T>,
    pub g: Vec<T>,
    pub violation: T,
    pub iterations: usize,
}

fn lse_rows<T: Scalar>(x: impl Iterator<Item = T> + Clone) -> T {
    let m = x.clone().fold(T::neg_infinity(), |m, v| m.max(v));
    if !m.is_finite() {
        return m;
    }
    m + x.map(|v| (v - m).exp()).sum::<T>().ln()
}

/// Scalings larger than `e^LOG_CAP` trigger an early absorption.
const LOG_CAP: f64 = 40.0;

struct Problem<'a, T> {
    m: usize,
    k: usize,
    c: &'a [T],
    log_a: Vec<T>,
    log_b: Vec<T>,
}

impl<T: Scalar> Problem<'_, T> {
    fn kernel(&self, f: &[T], g: &[T], eps: T) -> Vec<T> {
        let k = self.k;
        let mut out = vec![T::zero(); self.m * k];
        out.par_chunks_mut(k).enumerate().for_each(|(i, row)| {
            let c = &self.c[i * k..(i + 1) * k];
            for j in 0..k {
                row[j] = ((f[i] + g[j] - c[j]) / eps + self.log_a[i] + self.log_b[j]).exp();
            }
        });
        out
    }

    fn mul(&self, kern: &[T], v: &[T]) -> Vec<T> {
        kern.par_chunks(self.k)
            .map(|row| row.iter().zip(v).map(|(x, y)| *x * *y).sum())
            .collect()
    }

    fn mul_t(&self, kern: &[T], u: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.k];
        for (row, ui) in kern.chunks(self.k).zip(u) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += *x * *ui;
            }
        }
        out
    }

    fn update_f(&self, f: &mut [T], g: &[T], eps: T) {
        let k = self.k;
        f.par_iter_mut().enumerate().for_each(|(i, fi)| {
            let row = &self.c[i * k..(i + 1) * k];
            *fi = -eps * lse_rows((0..k).map(|j| (g[j] - row[j]) / eps + self.log_b[j]));
        });
    }

    fn update_g(&self, g: &mut [T], f: &[T], eps: T) {
        let (m, k) = (self.m, self.k);
        g.par_iter_mut().enumerate().for_each(|(j, gj)| {
            *gj = -eps * lse_rows((0..m).map(|i| (f[i] - self.c[i * k + j]) / eps + self.log_a[i]));
        });
    }

    /// Up to `sweeps` relaxed scaling sweeps; when `check` is set, one plain sweep
    /// follows and the L1 row violation of the resulting column-exact plan is returned.
    /// Returns `(sweeps done, violation)`; `None` violation means the block stopped early.
    fn block(&self, f: &mut [T], g: &mut [T], eps: T, omega: T, sweeps: usize, check: bool) -> (usize, Option<T>) {
        let kern = self.kernel(f, g, eps);
        let mut lu = vec![T::zero(); self.m];
        let mut lv = vec![T::zero(); self.k];
        let cap = T::lit(LOG_CAP);
        let mut done = 0;
        let mut violation = None;
        let total = sweeps + usize::from(check);
        while done < total {
            let w = if done < sweeps { omega } else { T::one() };
            let v: Vec<T> = lv.iter().map(|x| x.exp()).collect();
            let kv = self.mul(&kern, &v);
            let nu: Vec<T> = (0..self.m)
                .map(|i| (T::one() - w) * lu[i] + w * (self.log_a[i] - kv[i].ln()))
                .collect();
            let u: Vec<T> = nu.iter().map(|x| x.exp()).collect();
            let ktu = self.mul_t(&kern, &u);
            let nv: Vec<T> = (0..self.k)
                .map(|j| (T::one() - w) * lv[j] + w * (self.log_b[j] - ktu[j].ln()))
                .collect();
            if !nu.iter().chain(&nv).all(|x| x.is_finite()) {
                break;
            }
            lu = nu;
            lv = nv;
            done += 1;
            if done == total && check {
                let v: Vec<T> = lv.iter().map(|x| x.exp()).collect();
                let kv = self.mul(&kern, &v);
                violation = Some((0..self.m).map(|i| (lu[i].exp() * kv[i] - self.log_a[i].exp()).abs()).sum());
            }
            if lu.iter().chain(&lv).any(|x| x.abs() > cap) {
                break;
            }
        }
        f.iter_mut().zip(&lu).for_each(|(x, y)| *x += eps * *y);
        g.iter_mut().zip(&lv).for_each(|(x, y)| *x += eps * *y);
        if done == 0 {
            self.update_f(f, g, eps);
            self.update_g(g, f, eps);
            done = 1;
        }
        (done, violation)
    }

    fn row_violation(&self, f: &[T], g: &[T], eps: T) -> T {
        let k = self.k;
        (0..self.m)
            .into_par_iter()
            .map(|i| {
                let row = &self.c[i * k..(i + 1) * k];
                let r: T = (0..k)
                    .map(|j| ((f[i] + g[j] - row[j]) / eps + self.log_a[i] + self.log_b[j]).exp())
                    .sum();
                (r - self.log_a[i].exp()).abs()
            })
            .collect::<Vec<T>>()
            .into_iter()
            .sum()
    }
}

/// Entropic OT dual potentials for marginals `a`, `b` and row-major cost `c`.
/// `value` is the dual objective `⟨f, a⟩ + ⟨g, b⟩`; `violation` the L1 row-marginal
/// error of the final (column-exact) plan.
pub(crate) fn solve<T: Scalar>(
    a: &[T],
    b: &[T],
    c: &[T],
    epsilon: T,
    max_iters: usize,
    tol: T,
) -> SinkhornOutput<T> {
    let (m, k) = (a.len(), b.len());
    let prob = Problem {
        m,
        k,
        c,
        log_a: a.iter().map(|x| x.ln()).collect(),
        log_b: b.iter().map(|x| x.ln()).collect(),
    };
    let mut f = vec![T::zero(); m];
    let mut g = vec![T::zero(); k];
    let cmax = c.iter().fold(T::zero(), |acc, v| acc.max(*v));
    let mut eps = cmax.max(epsilon);
    let mut iterations = 0usize;

    // anneal from the cost scale down to the requested epsilon
    while eps > epsilon && iterations < max_iters {
        let mut left = 8usize;
        while left > 0 {
            let (done, _) = prob.block(&mut f, &mut g, eps, T::one(), left, false);
            left = left.saturating_sub(done);
            iterations += done;
        }
        eps = (eps * T::lit(0.5)).max(epsilon);
    }
    eps = epsilon;
    // relaxed updates x ← (1 − ω) x + ω T(x); ω is halved toward 1 when a check regresses
    let mut omega = T::lit(1.8);
    let mut best = T::infinity();
    while iterations < max_iters {
        let sweeps = 10.min(max_iters - iterations);
        let (done, v) = prob.block(&mut f, &mut g, eps, omega, sweeps, true);
        iterations += done;
        let Some(v) = v else { continue };
        if v <= tol {
            break;
        }
        if v > best {
            omega = T::one() + (omega - T::one()) * T::lit(0.5);
        }
        best = best.min(v);
    }
    let violation = prob.row_violation(&f, &g, eps);
    let value = a.iter().zip(&f).map(|(x, y)| *x * *y).sum::<T>()
        + b.iter().zip(&g).map(|(x, y)| *x * *y).sum::<T>();
    SinkhornOutput {
        value,
        f,
        g,
        violation,
        iterations,
    }
}

/// Entropic OT of a measure with itself using the averaged fixed-point update
/// `f ← ½ (f + T_ε f)`, which avoids the slow oscillation of alternating updates.
pub(crate) fn solve_symmetric<T: Scalar>(
    a: &[T],
    c: &[T],
    epsilon: T,
    max_iters: usize,
    tol: T,
) -> SinkhornOutput<T> {
    let m = a.len();
    let log_a: Vec<T> = a.iter().map(|x| x.ln()).collect();
    let prob = Problem {
        m,
        k: m,
        c,
        log_a: log_a.clone(),
        log_b: log_a,
    };
    let mut f = vec![T::zero(); m];
    let cmax = c.iter().fold(T::zero(), |acc, v| acc.max(*v));
    let mut eps = cmax.max(epsilon);
    let half = T::lit(0.5);
    let cap = T::lit(LOG_CAP);

    // averaged sweeps on the symmetric kernel; returns sweeps done and, if asked, the violation
    let block = |f: &mut Vec<T>, eps: T, sweeps: usize, check: bool| -> (usize, Option<T>) {
        let kern = prob.kernel(f, f, eps);
        let mut lu = vec![T::zero(); m];
        let mut done = 0;
        let mut violation = None;
        while done < sweeps {
            let u: Vec<T> = lu.iter().map(|x| x.exp()).collect();
            let ku = prob.mul(&kern, &u);
            let nu: Vec<T> = (0..m).map(|i| half * lu[i] + half * (prob.log_a[i] - ku[i].ln())).collect();
            if !nu.iter().all(|x| x.is_finite()) {
                break;
            }
            lu = nu;
            done += 1;
            if lu.iter().any(|x| x.abs() > cap) {
                break;
            }
        }
        if check && done == sweeps {
            let u: Vec<T> = lu.iter().map(|x| x.exp()).collect();
            let ku = prob.mul(&kern, &u);
            violation = Some((0..m).map(|i| (u[i] * ku[i] - a[i]).abs()).sum());
        }
        f.iter_mut().zip(&lu).for_each(|(x, y)| *x += eps * *y);
        if done == 0 {
            let mut t = f.clone();
            prob.update_f(&mut t, f, eps);
            f.iter_mut().zip(&t).for_each(|(x, y)| *x = half * (*x + *y));
            done = 1;
        }
        (done, violation)
    };

    let mut iterations = 0usize;
    while eps > epsilon && iterations < max_iters {
        let mut left = 4usize;
        while left > 0 {
            let (done, _) = block(&mut f, eps, left, false);
            left = left.saturating_sub(done);
            iterations += done;
        }
        eps = (eps * T::lit(0.5)).max(epsilon);
    }
    while iterations < max_iters {
        let sweeps = 10.min(max_iters - iterations);
        let (done, v) = block(&mut f, epsilon, sweeps, true);
        iterations += done;
        if v.is_some_and(|v| v <= tol) {
            break;
        }
    }
    let violation = prob.row_violation(&f, &f, epsilon);
    let value = T::lit(2.0) * a.iter().zip(&f).map(|(x, y)| *x * *y).sum::<T>();
    SinkhornOutput {
        value,
        g: f.clone(),
        f,
        violation,
        iterations,
    }
}

/// `Σ π_ij c_ij` of the unrounded plan given by the potentials.
pub(crate) fn plan_cost<T: Scalar>(a: &[T], b: &[T], c: &[T], f: &[T], g: &[T], epsilon: T) -> T {
    let k = b.len();
    (0..a.len())
        .into_par_iter()
        .map(|i| {
            (0..k)
                .map(|j| {
                    let idx = i * k + j;
                    ((f[i] + g[j] - c[idx]) / epsilon).exp() * a[i] * b[j] * c[idx]
                })
                .sum::<T>()
        })
        .collect::<Vec<T>>()
        .into_iter()
        .sum()
}

/// Dense plan from potentials, rounded onto `Π(a, b)` by the Altschuler–Weed–Rigollet
/// procedure.
pub(crate) fn rounded_plan<T: Scalar>(a: &[T], b: &[T], c: &[T], f: &[T], g: &[T], epsilon: T) -> Vec<T> {
    let (m, k) = (a.len(), b.len());
    let mut p: Vec<T> = (0..m * k)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / k, idx % k);
            ((f[i] + g[j] - c[idx]) / epsilon).exp() * a[i] * b[j]
        })
        .collect();
    for i in 0..m {
        let r: T = p[i * k..(i + 1) * k].iter().copied().sum();
        if r > a[i] {
            let s = a[i] / r;
            p[i * k..(i + 1) * k].iter_mut().for_each(|x| *x *= s);
        }
    }
    let mut col = vec![T::zero(); k];
    for i in 0..m {
        for j in 0..k {
            col[j] += p[i * k + j];
        }
    }
    for j in 0..k {
        if col[j] > b[j] {
            let s = b[j] / col[j];
            for i in 0..m {
                p[i * k + j] *= s;
            }
        }
    }
    let mut err_r: Vec<T> = a.to_vec();
    let mut err_c: Vec<T> = b.to_vec();
    for i in 0..m {
        for j in 0..k {
            err_r[i] -= p[i * k + j];
            err_c[j] -= p[i * k + j];
        }
    }
    err_r.iter_mut().for_each(|x| *x = x.max(T::zero()));
    err_c.iter_mut().for_each(|x| *x = x.max(T::zero()));
    let norm: T = err_r.iter().copied().sum();
    if norm > T::zero() {
        for i in 0..m {
            for j in 0..k {
                p[i * k + j] += err_r[i] * err_c[j] / norm;
            }
        }
    }
    p
}
