//! Ising partition function by spin enumeration, and the subgraph-world
//! sampler over edge subsets `T` weighted by `mu^|odd(T)| prod_{e in T} w(e)`.
//!
//! The Hamiltonian sums over all ordered pairs `(i, j)` including `i = j`:
//!
//! ```text
//! H(s) = -sum_{i,j} V_ij s_i s_j - B sum_k s_k
//! ```
//!
//! so a symmetric off-diagonal coupling counts twice and the diagonal adds the
//! constant `-sum_i V_ii`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{Distribution, FiniteChain};
use crate::error::{too_large, Error, Result};
use crate::rng::RandomSource;

pub const SPIN_GUARD: usize = 20;
/// Largest edge set for the weight table.
pub const SUBSET_TABLE_GUARD: usize = 22;
/// Largest edge set for the explicit chain.
pub const SUBGRAPH_CHAIN_GUARD: usize = 12;
/// Largest edge set for which samplers compare against the exact law.
pub const SAMPLE_ORACLE_GUARD: usize = 16;
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingProblem {
    n: usize,
    v: Vec<f64>,
    b: f64,
    beta: f64,
}

impl IsingProblem {
    pub fn new(v: Vec<Vec<f64>>, b: f64, beta: f64) -> Result<Self> {
        let n = v.len();
        if let Some(row) = v.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: row.len(),
            });
        }
        for i in 0..n {
            for j in 0..i {
                if !v[i][j].is_finite() || (v[i][j] - v[j][i]).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidModel(format!("V is not symmetric at ({i},{j})")));
                }
            }
        }
        if !b.is_finite() || !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidModel(format!("need finite B and beta >= 0, got B={b} beta={beta}")));
        }
        Ok(IsingProblem {
            n,
            v: v.into_iter().flatten().collect(),
            b,
            beta,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn field(&self) -> f64 {
        self.b
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.v[i * self.n + j]
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        let rows = self.v.chunks(self.n.max(1)).map(<[f64]>::to_vec).take(self.n).collect();
        Self::new(rows, self.b, beta)
    }
}

pub fn hamiltonian(p: &IsingProblem, sigma: &[i32]) -> Result<f64> {
    if sigma.len() != p.n {
        return Err(Error::DimensionMismatch {
            expected: p.n,
            got: sigma.len(),
        });
    }
    if let Some((index, &value)) = sigma.iter().enumerate().find(|(_, &s)| s != 1 && s != -1) {
        return Err(Error::BadSpinValue { index, value });
    }
    let mut h = 0.0;
    for i in 0..p.n {
        for j in 0..p.n {
            h -= p.coupling(i, j) * (sigma[i] * sigma[j]) as f64;
        }
    }
    Ok(h - p.b * sigma.iter().map(|&s| s as f64).sum::<f64>())
}

/// `H` of every configuration, indexed by the bitmask of `+1` spins.
fn energies(p: &IsingProblem) -> Result<Vec<f64>> {
    too_large("spin count", p.n, SPIN_GUARD)?;
    let n = p.n;
    let mut sigma = vec![-1i32; n];
    let mut h = hamiltonian(p, &sigma)?;
    let mut out = vec![0.0; 1 << n];
    out[0] = h;
    let mut gray = 0usize;
    for k in 1..(1usize << n) {
        let j = k.trailing_zeros() as usize;
        let s: f64 = (0..n)
            .filter(|&i| i != j)
            .map(|i| (p.coupling(j, i) + p.coupling(i, j)) * sigma[i] as f64)
            .sum();
        h += 2.0 * sigma[j] as f64 * (s + p.b);
        sigma[j] = -sigma[j];
        gray ^= 1 << j;
        out[gray] = h;
    }
    Ok(out)
}

/// `ln Z`, evaluated with the minimum energy factored out.
pub fn log_partition_exact(p: &IsingProblem) -> Result<f64> {
    let e = energies(p)?;
    let h_min = e.iter().copied().fold(f64::INFINITY, f64::min);
    let s: f64 = e.iter().map(|&h| (-p.beta * (h - h_min)).exp()).sum();
    Ok(-p.beta * h_min + s.ln())
}

/// `Z = sum_s exp(-beta H(s))` over all `2^n` configurations. At `beta = 0`
/// every term is exactly 1.
pub fn partition_exact(p: &IsingProblem) -> Result<f64> {
    let e = energies(p)?;
    let h_min = e.iter().copied().fold(f64::INFINITY, f64::min);
    let s: f64 = e.iter().map(|&h| (-p.beta * (h - h_min)).exp()).sum();
    Ok((-p.beta * h_min).exp() * s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgraphWorld {
    nodes: usize,
    edges: Vec<(usize, usize, f64)>,
    mu: f64,
}

impl SubgraphWorld {
    pub fn new(nodes: usize, edges: Vec<(usize, usize, f64)>, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidModel(format!("mu must be positive, got {mu}")));
        }
        let mut seen = std::collections::HashSet::new();
        for (index, &(u, v, w)) in edges.iter().enumerate() {
            if u >= nodes || v >= nodes {
                return Err(Error::InvalidModel(format!("edge ({u},{v}) outside {nodes} nodes")));
            }
            if u == v {
                return Err(Error::InvalidModel(format!("loop at node {u}")));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::InvalidModel(format!("duplicate edge ({u},{v})")));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::NonPositiveWeight { index, value: w });
            }
        }
        Ok(SubgraphWorld { nodes, edges, mu })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

/// Edge subset `T` as membership flags over the world's edge list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubgraphState {
    present: Vec<bool>,
}

impl SubgraphState {
    pub fn empty(world: &SubgraphWorld) -> Self {
        SubgraphState {
            present: vec![false; world.edge_count()],
        }
    }

    pub fn from_mask(world: &SubgraphWorld, mask: u64) -> Result<Self> {
        let m = world.edge_count();
        if m < 64 && mask >> m != 0 {
            return Err(Error::InvalidState(format!("mask {mask:#x} has bits beyond {m} edges")));
        }
        Ok(SubgraphState {
            present: (0..m).map(|e| e < 64 && mask >> e & 1 == 1).collect(),
        })
    }

    /// Bitmask of the subset when it fits in 64 bits.
    pub fn mask(&self) -> Option<u64> {
        if self.present.len() > 64 {
            return None;
        }
        Some(self.present.iter().enumerate().filter(|(_, &b)| b).map(|(e, _)| 1u64 << e).sum())
    }

    pub fn contains(&self, e: usize) -> bool {
        self.present[e]
    }

    pub fn len(&self) -> usize {
        self.present.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn edge_indices(&self) -> Vec<usize> {
        (0..self.present.len()).filter(|&e| self.present[e]).collect()
    }

    fn check(&self, world: &SubgraphWorld) -> Result<()> {
        if self.present.len() != world.edge_count() {
            return Err(Error::DimensionMismatch {
                expected: world.edge_count(),
                got: self.present.len(),
            });
        }
        Ok(())
    }
}

fn odd_vertices(world: &SubgraphWorld, t: &SubgraphState) -> Vec<bool> {
    let mut odd = vec![false; world.nodes];
    for (e, &(u, v, _)) in world.edges.iter().enumerate() {
        if t.present[e] {
            odd[u] ^= true;
            odd[v] ^= true;
        }
    }
    odd
}

/// `w(T) = mu^|odd(T)| prod_{e in T} w(e)`.
pub fn subgraph_weight(world: &SubgraphWorld, t: &SubgraphState) -> Result<f64> {
    t.check(world)?;
    let odd = odd_vertices(world, t).iter().filter(|&&b| b).count();
    let prod: f64 = t.edge_indices().iter().map(|&e| world.edges[e].2).product();
    Ok(world.mu.powi(odd as i32) * prod)
}

/// `w(T)` for every subset, indexed by bitmask.
pub fn subgraph_weight_table(world: &SubgraphWorld) -> Result<Vec<f64>> {
    let m = world.edge_count();
    too_large("subgraph edge count", m, SUBSET_TABLE_GUARD)?;
    (0..1u64 << m)
        .map(|mask| subgraph_weight(world, &SubgraphState::from_mask(world, mask)?))
        .collect()
}

pub fn subgraph_total_weight(world: &SubgraphWorld) -> Result<f64> {
    Ok(subgraph_weight_table(world)?.iter().sum())
}

/// `w(T + e) / w(T)` or `w(T - e) / w(T)`, given the current odd set.
fn flip_ratio(world: &SubgraphWorld, present: bool, odd: &[bool], e: usize) -> f64 {
    let (u, v, w) = world.edges[e];
    let parity = |x: usize| if odd[x] { 1.0 / world.mu } else { world.mu };
    let edge = if present { 1.0 / w } else { w };
    edge * parity(u) * parity(v)
}

/// In-place subgraph chain with incremental degree parities.
#[derive(Debug, Clone)]
pub struct SubgraphWalker<'a> {
    world: &'a SubgraphWorld,
    state: SubgraphState,
    odd: Vec<bool>,
}

impl<'a> SubgraphWalker<'a> {
    pub fn new(world: &'a SubgraphWorld, start: SubgraphState) -> Result<Self> {
        start.check(world)?;
        let odd = odd_vertices(world, &start);
        Ok(SubgraphWalker {
            world,
            state: start,
            odd,
        })
    }

    pub fn state(&self) -> &SubgraphState {
        &self.state
    }

    /// Lazy coin, then a uniform edge, then the Metropolis accept. The accept
    /// uniform is drawn only when the weight ratio is below 1.
    pub fn step(&mut self, rng: &mut RandomSource) {
        if rng.random_bool(0.5) {
            return;
        }
        let m = self.world.edge_count();
        if m == 0 {
            return;
        }
        let e = rng.random_range(0..m);
        let ratio = flip_ratio(self.world, self.state.present[e], &self.odd, e);
        if ratio < 1.0 && rng.random::<f64>() >= ratio {
            return;
        }
        let (u, v, _) = self.world.edges[e];
        self.state.present[e] ^= true;
        self.odd[u] ^= true;
        self.odd[v] ^= true;
    }
}

/// One lazy Metropolis single-edge flip.
pub fn subgraph_chain_step(world: &SubgraphWorld, t: &SubgraphState, rng: &mut RandomSource) -> Result<SubgraphState> {
    let mut w = SubgraphWalker::new(world, t.clone())?;
    w.step(rng);
    Ok(w.state)
}

/// The chain over all `2^|E|` subsets, states indexed by bitmask.
pub fn subgraph_chain_explicit(world: &SubgraphWorld) -> Result<FiniteChain> {
    let m = world.edge_count();
    too_large("subgraph chain edge count", m, SUBGRAPH_CHAIN_GUARD)?;
    let size = 1usize << m;
    let mut t = vec![0.0; size * size];
    for x in 0..size {
        let s = SubgraphState::from_mask(world, x as u64)?;
        let odd = odd_vertices(world, &s);
        let mut off = 0.0;
        for e in 0..m {
            let p = 0.5 / m as f64 * flip_ratio(world, s.present[e], &odd, e).min(1.0);
            t[x * size + (x ^ 1 << e)] = p;
            off += p;
        }
        t[x * size + x] = 1.0 - off;
    }
    Ok(FiniteChain::from_flat(size, t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgraphSamples {
    pub samples: Vec<SubgraphState>,
    /// Chain steps between consecutive samples.
    pub steps: usize,
    /// Unhalved L1 distance of the sample frequencies from `w(T) / sum w`,
    /// when the edge set is small enough to tabulate and samples exist.
    pub l1_vs_exact: Option<f64>,
}

/// One trajectory from the empty subgraph, recording the state after every
/// `steps` steps until `count` samples are collected.
pub fn sample_subgraphs(
    world: &SubgraphWorld,
    steps: usize,
    count: usize,
    rng: &mut RandomSource,
) -> Result<SubgraphSamples> {
    let mut walker = SubgraphWalker::new(world, SubgraphState::empty(world))?;
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        for _ in 0..steps {
            walker.step(rng);
        }
        samples.push(walker.state.clone());
    }
    let l1_vs_exact = if count > 0 && world.edge_count() <= SAMPLE_ORACLE_GUARD {
        Some(empirical_l1(world, &samples)?)
    } else {
        None
    };
    Ok(SubgraphSamples {
        samples,
        steps,
        l1_vs_exact,
    })
}

/// Unhalved L1 distance between sample frequencies and the exact law.
pub fn empirical_l1(world: &SubgraphWorld, samples: &[SubgraphState]) -> Result<f64> {
    let exact = Distribution::from_weights(&subgraph_weight_table(world)?)?;
    let mut freq = vec![0.0; exact.len()];
    for s in samples {
        let mask = s.mask().ok_or_else(|| Error::InvalidState("subset does not fit a mask".into()))?;
        freq[mask as usize] += 1.0;
    }
    let k = samples.len().max(1) as f64;
    Ok(freq.iter().zip(exact.as_slice()).map(|(f, p)| (f / k - p).abs()).sum())
}
