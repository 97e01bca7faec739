//! Couplings of explicit chains and the path-coupling bound.
//!
//! A [`CouplingRule`] moves two copies of the same chain jointly. Every rule
//! shipped here is coalescing: once the copies agree they consume the same
//! randomness and never separate again.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{l1_distance, sample_row, Distribution, FiniteChain};
use crate::error::{too_large, Error, Result};
use crate::models::hypercube_walk;
use crate::rng::RandomSource;

/// Exact joint laws are used up to this many outcomes per pair.
pub const EXACT_OUTCOME_LIMIT: usize = 1_000_000;
/// Largest chain for all-pairs shortest paths.
pub const METRIC_GUARD: usize = 4096;

pub trait CouplingRule {
    fn chain(&self) -> &FiniteChain;

    fn joint_step(&self, x: usize, y: usize, rng: &mut RandomSource) -> (usize, usize);

    /// Exact joint law of one step from `(x, y)` as `(probability, x', y')`
    /// triples, when the rule's randomness is finite.
    fn joint_law(&self, _x: usize, _y: usize) -> Option<Vec<(f64, usize, usize)>> {
        None
    }
}

/// Independent moves while apart, identical moves once met.
#[derive(Debug, Clone)]
pub struct IndependentCoupling {
    chain: FiniteChain,
}

impl IndependentCoupling {
    pub fn new(chain: FiniteChain) -> Self {
        IndependentCoupling { chain }
    }
}

impl CouplingRule for IndependentCoupling {
    fn chain(&self) -> &FiniteChain {
        &self.chain
    }

    fn joint_step(&self, x: usize, y: usize, rng: &mut RandomSource) -> (usize, usize) {
        let nx = self.chain.sample_next(x, rng);
        if x == y {
            return (nx, nx);
        }
        (nx, self.chain.sample_next(y, rng))
    }

    fn joint_law(&self, x: usize, y: usize) -> Option<Vec<(f64, usize, usize)>> {
        let n = self.chain.n_states();
        let mut out = Vec::new();
        for a in 0..n {
            let pa = self.chain.prob(x, a);
            if pa == 0.0 {
                continue;
            }
            if x == y {
                out.push((pa, a, a));
                continue;
            }
            for b in 0..n {
                let pb = self.chain.prob(y, b);
                if pb > 0.0 {
                    out.push((pa * pb, a, b));
                }
            }
        }
        Some(out)
    }
}

/// Both copies invert their own row CDF at one shared uniform.
#[derive(Debug, Clone)]
pub struct SharedUniformCoupling {
    chain: FiniteChain,
}

impl SharedUniformCoupling {
    pub fn new(chain: FiniteChain) -> Self {
        SharedUniformCoupling { chain }
    }
}

impl CouplingRule for SharedUniformCoupling {
    fn chain(&self) -> &FiniteChain {
        &self.chain
    }

    fn joint_step(&self, x: usize, y: usize, rng: &mut RandomSource) -> (usize, usize) {
        let u = rng.random::<f64>();
        (sample_row(self.chain.row(x), u), sample_row(self.chain.row(y), u))
    }

    fn joint_law(&self, x: usize, y: usize) -> Option<Vec<(f64, usize, usize)>> {
        fn cuts(row: &[f64]) -> Vec<f64> {
            let mut acc = 0.0;
            row.iter()
                .map(|&p| {
                    acc += p;
                    acc
                })
                .collect()
        }
        let mut points = cuts(self.chain.row(x));
        points.extend(cuts(self.chain.row(y)));
        points.push(0.0);
        points.push(1.0);
        points.retain(|p| (0.0..=1.0).contains(p));
        points.sort_by(f64::total_cmp);
        points.dedup();
        let mut out = Vec::new();
        for w in points.windows(2) {
            let width = w[1] - w[0];
            if width <= 0.0 {
                continue;
            }
            let mid = 0.5 * (w[0] + w[1]);
            out.push((
                width,
                sample_row(self.chain.row(x), mid),
                sample_row(self.chain.row(y), mid),
            ));
        }
        Some(out)
    }
}

/// Same-coordinate coupling of the lazy hypercube walk: both copies pick the
/// same coordinate and write the same fresh bit into it.
#[derive(Debug, Clone)]
pub struct HypercubeCoupling {
    dim: usize,
    chain: FiniteChain,
}

pub fn hypercube_coupling_rule(n: usize) -> HypercubeCoupling {
    HypercubeCoupling {
        dim: n,
        chain: hypercube_walk(n),
    }
}

impl HypercubeCoupling {
    pub fn dimension(&self) -> usize {
        self.dim
    }

    fn set_bit(x: usize, j: usize, b: bool) -> usize {
        if b {
            x | 1 << j
        } else {
            x & !(1 << j)
        }
    }
}

impl CouplingRule for HypercubeCoupling {
    fn chain(&self) -> &FiniteChain {
        &self.chain
    }

    fn joint_step(&self, x: usize, y: usize, rng: &mut RandomSource) -> (usize, usize) {
        let j = rng.random_range(0..self.dim);
        let b = rng.random_bool(0.5);
        (Self::set_bit(x, j, b), Self::set_bit(y, j, b))
    }

    fn joint_law(&self, x: usize, y: usize) -> Option<Vec<(f64, usize, usize)>> {
        let p = 1.0 / (2 * self.dim) as f64;
        let mut out = Vec::with_capacity(2 * self.dim);
        for j in 0..self.dim {
            for b in [false, true] {
                out.push((p, Self::set_bit(x, j, b), Self::set_bit(y, j, b)));
            }
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalReport {
    pub pairs_tested: usize,
    pub trials: usize,
    pub max_deviation: f64,
    pub passed: bool,
}

/// Empirical one-step marginals of both coordinates against the chain's rows.
///
/// All start pairs are tested on chains with at most 8 states, otherwise a
/// spread of 16 pairs. Passes when every frequency is within `tol` of its
/// transition probability.
pub fn verify_marginals<R: CouplingRule + ?Sized>(
    rule: &R,
    trials: usize,
    tol: f64,
    rng: &mut RandomSource,
) -> MarginalReport {
    let chain = rule.chain();
    let n = chain.n_states();
    let pairs: Vec<(usize, usize)> = if n <= 8 {
        (0..n).flat_map(|x| (0..n).map(move |y| (x, y))).collect()
    } else {
        (0..16).map(|k| ((k * 7919) % n, (k * 104_729 + 1) % n)).collect()
    };
    let mut max_deviation: f64 = 0.0;
    let mut cx = vec![0usize; n];
    let mut cy = vec![0usize; n];
    for &(x, y) in &pairs {
        cx.iter_mut().for_each(|c| *c = 0);
        cy.iter_mut().for_each(|c| *c = 0);
        for _ in 0..trials {
            let (a, b) = rule.joint_step(x, y, rng);
            cx[a] += 1;
            cy[b] += 1;
        }
        for z in 0..n {
            let fx = cx[z] as f64 / trials as f64;
            let fy = cy[z] as f64 / trials as f64;
            max_deviation = max_deviation
                .max((fx - chain.prob(x, z)).abs())
                .max((fy - chain.prob(y, z)).abs());
        }
    }
    MarginalReport {
        pairs_tested: pairs.len(),
        trials,
        max_deviation,
        passed: max_deviation <= tol,
    }
}

/// Monte Carlo estimate of `Pr(X_t != Y_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeetEstimate {
    pub t: usize,
    pub trials: usize,
    pub failures: usize,
    pub p_hat: f64,
    /// Binomial standard error `sqrt(p (1 - p) / n)`.
    pub se: f64,
}

impl MeetEstimate {
    fn from_counts(t: usize, trials: usize, failures: usize) -> Self {
        let p_hat = if trials == 0 { 0.0 } else { failures as f64 / trials as f64 };
        let se = if trials == 0 { 0.0 } else { (p_hat * (1.0 - p_hat) / trials as f64).sqrt() };
        MeetEstimate {
            t,
            trials,
            failures,
            p_hat,
            se,
        }
    }

    /// `p_hat + k * se`, with the standard error taken at the add-one smoothed
    /// proportion so that zero observed failures still leave a margin.
    pub fn upper(&self, k: f64) -> f64 {
        let n = self.trials as f64;
        let smoothed = (self.failures as f64 + 1.0) / (n + 2.0);
        self.p_hat + k * (smoothed * (1.0 - smoothed) / n.max(1.0)).sqrt()
    }

    /// `p_hat - k * se` with the same smoothing as [`MeetEstimate::upper`].
    pub fn lower(&self, k: f64) -> f64 {
        let n = self.trials as f64;
        let smoothed = (self.failures as f64 + 1.0) / (n + 2.0);
        self.p_hat - k * (smoothed * (1.0 - smoothed) / n.max(1.0)).sqrt()
    }
}

pub fn estimate_meet_prob<R: CouplingRule + ?Sized>(
    rule: &R,
    x0: usize,
    y0: usize,
    t: usize,
    trials: usize,
    rng: &mut RandomSource,
) -> MeetEstimate {
    meet_failure_curve(rule, x0, y0, t, trials, rng)
        .pop()
        .unwrap_or_else(|| MeetEstimate::from_counts(t, trials, 0))
}

/// `Pr(X_s != Y_s)` for every `s = 0..=horizon` from the same trials.
pub fn meet_failure_curve<R: CouplingRule + ?Sized>(
    rule: &R,
    x0: usize,
    y0: usize,
    horizon: usize,
    trials: usize,
    rng: &mut RandomSource,
) -> Vec<MeetEstimate> {
    let mut failures = vec![0usize; horizon + 1];
    for _ in 0..trials {
        let (mut x, mut y) = (x0, y0);
        for slot in failures.iter_mut() {
            if x != y {
                *slot += 1;
            } else {
                break;
            }
            (x, y) = rule.joint_step(x, y, rng);
        }
    }
    failures
        .into_iter()
        .enumerate()
        .map(|(t, f)| MeetEstimate::from_counts(t, trials, f))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingTvReport {
    pub t: usize,
    /// Unhalved `sum_x |p_t(x) - pi(x)|`, as displayed alongside the coupling inequality.
    pub l1: f64,
    /// `l1 / 2`, the side that is actually asserted.
    pub tv: f64,
    pub meet: MeetEstimate,
    /// `tv <= p_hat + 3 se`.
    pub holds: bool,
}

/// Coupling inequality with `Y_0 ~ pi`: total variation of `X_t` from `pi`
/// against the estimated non-meeting probability.
pub fn coupling_tv_check<R: CouplingRule + ?Sized>(
    rule: &R,
    x0: usize,
    t: usize,
    trials: usize,
    rng: &mut RandomSource,
) -> Result<CouplingTvReport> {
    let chain = rule.chain();
    let n = chain.n_states();
    if x0 >= n {
        return Err(Error::InvalidState(format!("start {x0} out of range")));
    }
    let pi = chain.stationary()?;
    let pt = chain.evolve(&Distribution::point(n, x0), t)?;
    let l1 = l1_distance(&pt, &pi)?;
    let mut failures = 0;
    for _ in 0..trials {
        let mut y = sample_row(pi.as_slice(), rng.random::<f64>());
        let mut x = x0;
        for _ in 0..t {
            if x == y {
                break;
            }
            (x, y) = rule.joint_step(x, y, rng);
        }
        if x != y {
            failures += 1;
        }
    }
    let meet = MeetEstimate::from_counts(t, trials, failures);
    let tv = 0.5 * l1;
    Ok(CouplingTvReport {
        t,
        l1,
        tv,
        meet,
        holds: tv <= meet.upper(3.0),
    })
}

/// Shortest-path metric on a directed graph over the states.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMetricGraph {
    n: usize,
    adjacency: Vec<Vec<usize>>,
    dist: Vec<u32>,
    diameter: u32,
}

impl PathMetricGraph {
    /// The transition graph of the chain, self-loops dropped.
    pub fn from_chain(chain: &FiniteChain) -> Result<Self> {
        let n = chain.n_states();
        let adjacency = (0..n)
            .map(|x| (0..n).filter(|&y| y != x && chain.prob(x, y) > 0.0).collect())
            .collect();
        Self::new(adjacency)
    }

    pub fn new(adjacency: Vec<Vec<usize>>) -> Result<Self> {
        let n = adjacency.len();
        too_large("metric graph", n, METRIC_GUARD)?;
        let mut dist = vec![u32::MAX; n * n];
        let mut queue = VecDeque::new();
        for s in 0..n {
            dist[s * n + s] = 0;
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                let d = dist[s * n + u];
                for &v in &adjacency[u] {
                    if v >= n {
                        return Err(Error::InvalidState(format!("edge to {v} out of range")));
                    }
                    if dist[s * n + v] == u32::MAX {
                        dist[s * n + v] = d + 1;
                        queue.push_back(v);
                    }
                }
            }
        }
        if let Some(i) = dist.iter().position(|&d| d == u32::MAX) {
            return Err(Error::NotConnected(format!(
                "no path from {} to {}",
                i / n,
                i % n
            )));
        }
        let diameter = dist.iter().copied().max().unwrap_or(0);
        Ok(PathMetricGraph {
            n,
            adjacency,
            dist,
            diameter,
        })
    }

    pub fn distance(&self, x: usize, y: usize) -> u32 {
        self.dist[x * self.n + y]
    }

    pub fn diameter(&self) -> u32 {
        self.diameter
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, vs)| vs.iter().map(move |&v| (u, v)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairContraction {
    pub u: usize,
    pub v: usize,
    pub expected: f64,
    /// Zero for exact expectations.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    /// Largest expected next-step distance over adjacent pairs.
    pub beta_pc: f64,
    pub diameter: u32,
    pub exact: bool,
    pub per_pair: Vec<PairContraction>,
}

/// Expected distance after one joint step from every adjacent pair.
///
/// Exact when the rule exposes a joint law of at most [`EXACT_OUTCOME_LIMIT`]
/// outcomes, otherwise `mc_trials` Monte Carlo steps per pair.
pub fn path_contraction_factor<R: CouplingRule + ?Sized>(
    rule: &R,
    metric: &PathMetricGraph,
    mc_trials: usize,
    rng: &mut RandomSource,
) -> ContractionReport {
    let mut per_pair = Vec::new();
    let mut exact = true;
    for (u, v) in metric.edges() {
        let law = rule.joint_law(u, v).filter(|l| l.len() <= EXACT_OUTCOME_LIMIT);
        let pc = match law {
            Some(law) => PairContraction {
                u,
                v,
                expected: law.iter().map(|&(p, a, b)| p * metric.distance(a, b) as f64).sum(),
                se: 0.0,
            },
            None => {
                exact = false;
                let (mut sum, mut sq) = (0.0, 0.0);
                for _ in 0..mc_trials {
                    let (a, b) = rule.joint_step(u, v, rng);
                    let d = metric.distance(a, b) as f64;
                    sum += d;
                    sq += d * d;
                }
                let m = mc_trials.max(1) as f64;
                let mean = sum / m;
                PairContraction {
                    u,
                    v,
                    expected: mean,
                    se: ((sq / m - mean * mean).max(0.0) / m).sqrt(),
                }
            }
        };
        per_pair.push(pc);
    }
    let beta_pc = per_pair.iter().map(|p| p.expected).fold(0.0, f64::max);
    ContractionReport {
        beta_pc,
        diameter: metric.diameter(),
        exact,
        per_pair,
    }
}

/// `D beta^t`, the path-coupling bound on `Pr(X_t != Y_t)`.
pub fn path_coupling_bound(diameter: u32, beta_pc: f64, t: u32) -> Result<f64> {
    if !(0.0..1.0).contains(&beta_pc) {
        return Err(Error::NoContraction(beta_pc));
    }
    Ok(diameter as f64 * beta_pc.powi(t as i32))
}
