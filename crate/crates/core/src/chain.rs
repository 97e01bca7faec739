//! Explicit finite Markov chains.
//!
//! A [`FiniteChain`] stores a dense row-stochastic matrix. All distances use
//! the unhalved L1 norm `sum_x |p(x) - q(x)|`, so the mixing threshold is 1/4
//! and total variation is half of [`l1_distance`].

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{too_large, Error, Result};
use crate::rng::RandomSource;

/// Row sums must be within this of 1 for [`FiniteChain::new`].
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Largest chain [`FiniteChain::mixing_time_exact`] will power up.
pub const MIXING_GUARD: usize = 4096;
/// Above this size the stationary solver has no direct fallback.
pub const DIRECT_SOLVE_GUARD: usize = 512;
/// Float slack on the 1/4 threshold, so an exact 1/4 is not lost to rounding.
pub const MIXING_SLACK: f64 = 1e-12;

const STATIONARY_TOL: f64 = 1e-12;
const STATIONARY_RESIDUAL: f64 = 1e-11;
const MAX_MIXING_STEPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteChain {
    n: usize,
    transition: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

impl FiniteChain {
    /// Builds a chain from its rows, validating stochasticity at [`ROW_SUM_TOL`].
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_tolerance(rows, ROW_SUM_TOL)
    }

    pub fn with_tolerance(rows: Vec<Vec<f64>>, tol: f64) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidChain("chain has no states".into()));
        }
        let mut transition = Vec::with_capacity(n * n);
        for (x, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidChain(format!(
                    "row {x} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (y, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidChain(format!("P[{x}][{y}] = {p} is not a probability")));
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::InvalidChain(format!("row {x} sums to {sum}")));
            }
            transition.extend_from_slice(row);
        }
        Ok(FiniteChain {
            n,
            transition,
            labels: None,
        })
    }

    /// Builds a chain from a flat row-major matrix that is stochastic by construction.
    pub(crate) fn from_flat(n: usize, transition: Vec<f64>) -> Self {
        debug_assert_eq!(transition.len(), n * n);
        FiniteChain {
            n,
            transition,
            labels: None,
        }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    #[inline]
    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.transition[x * self.n + y]
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[f64] {
        &self.transition[x * self.n..(x + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|x| self.row(x).to_vec()).collect()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.transition)
    }

    /// First state whose holding probability is below 1/2, if any.
    pub fn lazy_violation(&self) -> Option<(usize, f64)> {
        (0..self.n)
            .map(|x| (x, self.prob(x, x)))
            .find(|&(_, d)| d < 0.5 - ROW_SUM_TOL)
    }

    pub fn is_lazy(&self) -> bool {
        self.lazy_violation().is_none()
    }

    fn successors(&self, x: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(x)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(y, _)| y)
    }

    fn bfs_levels(&self, reverse: bool) -> Vec<Option<usize>> {
        let mut level = vec![None; self.n];
        level[0] = Some(0);
        let mut queue = VecDeque::from([0usize]);
        while let Some(u) = queue.pop_front() {
            let d = level[u].unwrap();
            for v in 0..self.n {
                let p = if reverse { self.prob(v, u) } else { self.prob(u, v) };
                if p > 0.0 && level[v].is_none() {
                    level[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        level
    }

    pub fn is_strongly_connected(&self) -> bool {
        self.bfs_levels(false).iter().all(Option::is_some)
            && self.bfs_levels(true).iter().all(Option::is_some)
    }

    /// Period of an irreducible chain: gcd of `level(u) + 1 - level(v)` over all edges.
    pub fn period(&self) -> usize {
        let level = self.bfs_levels(false);
        let mut g = 0usize;
        for u in 0..self.n {
            let Some(lu) = level[u] else { continue };
            for v in self.successors(u) {
                if let Some(lv) = level[v] {
                    g = gcd(g, (lu + 1).abs_diff(lv));
                }
            }
        }
        g
    }

    /// Strong connectivity plus aperiodicity.
    pub fn check_ergodic(&self) -> Result<()> {
        if !self.is_strongly_connected() {
            return Err(Error::NotErgodic("transition graph is not strongly connected".into()));
        }
        let period = self.period();
        if period != 1 {
            return Err(Error::NotErgodic(format!("chain has period {period}")));
        }
        Ok(())
    }

    /// Stationary distribution: power iteration on the lazy version, with a
    /// direct linear solve as fallback for small chains.
    pub fn stationary(&self) -> Result<Distribution> {
        self.check_ergodic()?;
        let n = self.n;
        let lazy = self.lazify();
        let cap = (50_000_000 / (n * n)).clamp(10_000, 1_000_000);
        let mut pi = vec![1.0 / n as f64; n];
        let mut next = vec![0.0; n];
        let mut converged = false;
        // past STATIONARY_TOL, keep going until the change reaches roundoff or stalls
        let mut best = f64::INFINITY;
        let mut stalled = 0;
        for _ in 0..cap {
            lazy.step_into(&pi, &mut next);
            let change: f64 = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut pi, &mut next);
            if change < best {
                best = change;
                stalled = 0;
            } else {
                stalled += 1;
            }
            if change < STATIONARY_TOL {
                converged = true;
                if change <= 4.0 * f64::EPSILON || stalled >= 50 {
                    break;
                }
            }
        }
        normalize(&mut pi);
        if !converged || self.stationary_residual(&pi) > STATIONARY_RESIDUAL {
            if n > DIRECT_SOLVE_GUARD {
                return Err(Error::IterationCap(cap));
            }
            pi = self.solve_stationary();
        }
        if let Some(x) = pi.iter().position(|&p| p <= 0.0) {
            return Err(Error::ZeroStationaryMass(x));
        }
        Ok(Distribution { probs: pi })
    }

    fn solve_stationary(&self) -> Vec<f64> {
        let n = self.n;
        // pi (P - I) = 0 with the last equation replaced by sum(pi) = 1
        let mut a = self.to_matrix().transpose();
        for i in 0..n {
            a[(i, i)] -= 1.0;
        }
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        let sol = a.lu().solve(&b).unwrap_or_else(|| DVector::from_element(n, 1.0 / n as f64));
        let mut pi: Vec<f64> = sol.iter().map(|&p| p.max(0.0)).collect();
        normalize(&mut pi);
        pi
    }

    fn stationary_residual(&self, pi: &[f64]) -> f64 {
        let mut next = vec![0.0; self.n];
        self.step_into(pi, &mut next);
        pi.iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `out = p P`.
    pub(crate) fn step_into(&self, p: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (x, &px) in p.iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            for (o, &pxy) in out.iter_mut().zip(self.row(x)) {
                *o += px * pxy;
            }
        }
    }

    /// `P' = (I + P) / 2`.
    pub fn lazify(&self) -> FiniteChain {
        let n = self.n;
        let mut t: Vec<f64> = self.transition.iter().map(|p| 0.5 * p).collect();
        for x in 0..n {
            t[x * n + x] += 0.5;
        }
        FiniteChain {
            n,
            transition: t,
            labels: self.labels.clone(),
        }
    }

    /// Metropolis filter: off-diagonal moves are thinned by `min(1, F(y)/F(x))`
    /// and the rejected mass stays on the diagonal.
    pub fn metropolize(&self, weights: &[f64]) -> Result<FiniteChain> {
        let n = self.n;
        if weights.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: weights.len(),
            });
        }
        if let Some((index, &value)) = weights.iter().enumerate().find(|(_, &w)| !(w > 0.0 && w.is_finite())) {
            return Err(Error::NonPositiveWeight { index, value });
        }
        let mut t = vec![0.0; n * n];
        for x in 0..n {
            let mut off = 0.0;
            for y in 0..n {
                if x != y {
                    let p = self.prob(x, y) * (weights[y] / weights[x]).min(1.0);
                    t[x * n + y] = p;
                    off += p;
                }
            }
            t[x * n + x] = 1.0 - off;
        }
        Ok(FiniteChain {
            n,
            transition: t,
            labels: self.labels.clone(),
        })
    }

    /// Exact `p0 P^t`.
    pub fn evolve(&self, p0: &Distribution, t: usize) -> Result<Distribution> {
        self.check_len(p0.len())?;
        let mut p = p0.probs.clone();
        let mut next = vec![0.0; self.n];
        for _ in 0..t {
            self.step_into(&p, &mut next);
            std::mem::swap(&mut p, &mut next);
        }
        Ok(Distribution { probs: p })
    }

    /// One trajectory `x0, x1, ..., xt`.
    pub fn simulate(&self, x0: usize, t: usize, rng: &mut RandomSource) -> Result<Vec<usize>> {
        if x0 >= self.n {
            return Err(Error::InvalidState(format!("start {x0} out of range")));
        }
        let mut path = Vec::with_capacity(t + 1);
        path.push(x0);
        let mut x = x0;
        for _ in 0..t {
            x = self.sample_next(x, rng);
            path.push(x);
        }
        Ok(path)
    }

    /// Draws the next state from row `x`.
    pub fn sample_next(&self, x: usize, rng: &mut RandomSource) -> usize {
        sample_row(self.row(x), rng.random::<f64>())
    }

    /// Least `t >= 1` with `max_x |delta_x P^t - pi|_1 <= 1/4`.
    pub fn mixing_time_exact(&self) -> Result<usize> {
        too_large("chain", self.n, MIXING_GUARD)?;
        let pi = self.stationary()?;
        let mut rows: Vec<Vec<f64>> = (0..self.n).map(|x| unit(self.n, x)).collect();
        let mut next = vec![0.0; self.n];
        for t in 1..=MAX_MIXING_STEPS {
            let mut worst: f64 = 0.0;
            for row in rows.iter_mut() {
                self.step_into(row, &mut next);
                std::mem::swap(row, &mut next);
                worst = worst.max(l1(row, pi.as_slice()));
            }
            if worst <= 0.25 + MIXING_SLACK {
                return Ok(t);
            }
        }
        Err(Error::IterationCap(MAX_MIXING_STEPS))
    }

    /// `max_x |delta_x P^t - pi|_1` for `t = 0..=horizon`.
    pub fn worst_case_distances(&self, pi: &Distribution, horizon: usize) -> Result<Vec<f64>> {
        self.check_len(pi.len())?;
        let mut rows: Vec<Vec<f64>> = (0..self.n).map(|x| unit(self.n, x)).collect();
        let mut next = vec![0.0; self.n];
        let mut out = Vec::with_capacity(horizon + 1);
        for t in 0..=horizon {
            if t > 0 {
                for row in rows.iter_mut() {
                    self.step_into(row, &mut next);
                    std::mem::swap(row, &mut next);
                }
            }
            out.push(rows.iter().map(|r| l1(r, pi.as_slice())).fold(0.0, f64::max));
        }
        Ok(out)
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got });
        }
        Ok(())
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn unit(n: usize, x: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[x] = 1.0;
    v
}

fn normalize(p: &mut [f64]) {
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
}

fn l1(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

/// Inverse-CDF draw from a probability row; `u` is uniform on [0, 1).
pub(crate) fn sample_row(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (y, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = y;
            if u < acc {
                return y;
            }
        }
    }
    last
}

/// A probability vector over the states of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(**p >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("negative entry {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidDistribution(format!("sums to {sum}")));
        }
        Ok(Distribution { probs })
    }

    pub fn uniform(n: usize) -> Self {
        Distribution {
            probs: vec![1.0 / n as f64; n],
        }
    }

    /// Point mass at `x`.
    pub fn point(n: usize, x: usize) -> Self {
        Distribution { probs: unit(n, x) }
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        Distribution::new(weights.iter().map(|w| w / total).collect()).or_else(|_| {
            let mut probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
            normalize(&mut probs);
            Ok(Distribution { probs })
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, x: usize) -> f64 {
        self.probs[x]
    }

    /// Smallest entry (the `pi_0` of the mixing bounds).
    pub fn min_mass(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

/// `|pi(x) P_xy - pi(y) P_yx| <= tol` for every pair.
pub fn check_reversible(chain: &FiniteChain, pi: &Distribution, tol: f64) -> Result<bool> {
    Ok(reversibility_defect(chain, pi)? <= tol)
}

/// Largest detailed-balance violation over all pairs.
pub fn reversibility_defect(chain: &FiniteChain, pi: &Distribution) -> Result<f64> {
    chain.check_len(pi.len())?;
    let n = chain.n_states();
    let mut worst: f64 = 0.0;
    for x in 0..n {
        for y in x + 1..n {
            let d = (pi.get(x) * chain.prob(x, y) - pi.get(y) * chain.prob(y, x)).abs();
            worst = worst.max(d);
        }
    }
    Ok(worst)
}

pub fn l1_distance(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(l1(p.as_slice(), q.as_slice()))
}

/// `Ent(p) = sum_x p(x) log(p(x) / pi(x))`, natural log, with `0 log 0 = 0`.
pub fn relative_entropy(p: &Distribution, pi: &Distribution) -> Result<f64> {
    if p.len() != pi.len() {
        return Err(Error::DimensionMismatch {
            expected: pi.len(),
            got: p.len(),
        });
    }
    let mut ent = 0.0;
    for (x, (&px, &qx)) in p.as_slice().iter().zip(pi.as_slice()).enumerate() {
        if qx <= 0.0 {
            return Err(Error::ZeroStationaryMass(x));
        }
        if px > 0.0 {
            ent += px * (px / qx).ln();
        }
    }
    Ok(ent.max(0.0))
}
