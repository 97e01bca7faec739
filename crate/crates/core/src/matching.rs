//! Perfect and near-perfect matchings of bipartite graphs, the permanent,
//! and the matching chain used to sample them.
//!
//! `n` is always the size of one side. A near-perfect matching has `n - 1`
//! edges and leaves one left vertex `u` and one right vertex `v` unmatched;
//! `(u, v)` are its holes.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::FiniteChain;
use crate::error::{too_large, Error, Result};
use crate::rng::RandomSource;

/// Largest side for matching enumeration and explicit chains.
pub const ENUMERATION_GUARD: usize = 10;
/// Most matchings materialised by one enumeration.
pub const ENUMERATION_LIMIT: usize = 2_000_000;
/// Largest matrix for the exact permanent.
pub const PERMANENT_GUARD: usize = 12;
/// Largest matrix for the permutation-sum permanent.
pub const BRUTE_FORCE_GUARD: usize = 9;
/// Largest explicit matching chain.
pub const CHAIN_GUARD: usize = 4096;

const FREE: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    weights: Option<Vec<f64>>,
    #[serde(skip)]
    index: Vec<Option<usize>>,
}

impl BipartiteGraph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        Self::build(n, edges, None)
    }

    pub fn with_weights(n: usize, edges: Vec<(usize, usize)>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != edges.len() {
            return Err(Error::DimensionMismatch {
                expected: edges.len(),
                got: weights.len(),
            });
        }
        if let Some((index, &value)) = weights.iter().enumerate().find(|(_, &w)| !(w > 0.0 && w.is_finite())) {
            return Err(Error::NonPositiveWeight { index, value });
        }
        Self::build(n, edges, Some(weights))
    }

    fn build(n: usize, edges: Vec<(usize, usize)>, weights: Option<Vec<f64>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidModel("bipartite graph needs n >= 1".into()));
        }
        let mut index = vec![None; n * n];
        for (k, &(i, j)) in edges.iter().enumerate() {
            if i >= n || j >= n {
                return Err(Error::InvalidModel(format!("edge ({i},{j}) outside side size {n}")));
            }
            if index[i * n + j].replace(k).is_some() {
                return Err(Error::InvalidModel(format!("duplicate edge ({i},{j})")));
            }
        }
        Ok(BipartiteGraph {
            n,
            edges,
            weights,
            index,
        })
    }

    /// Edges at the positive entries of a square nonnegative matrix. Entries
    /// other than 0 and 1 become edge weights.
    pub fn from_matrix(a: &[Vec<f64>]) -> Result<Self> {
        let n = square_size(a)?;
        let mut edges = Vec::new();
        let mut weights = Vec::new();
        for (i, row) in a.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                if !(x >= 0.0 && x.is_finite()) {
                    return Err(Error::NonPositiveWeight { index: i * n + j, value: x });
                }
                if x > 0.0 {
                    edges.push((i, j));
                    weights.push(x);
                }
            }
        }
        if weights.iter().all(|&w| w == 1.0) {
            Self::new(n, edges)
        } else {
            Self::with_weights(n, edges, weights)
        }
    }

    pub fn complete(n: usize) -> Self {
        Self::new(n, (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect()).expect("valid complete graph")
    }

    pub fn identity(n: usize) -> Self {
        Self::new(n, (0..n).map(|i| (i, i)).collect()).expect("valid identity graph")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_weighted(&self) -> bool {
        self.weights.is_some()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edge_index(i, j).is_some()
    }

    fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n || j >= self.n {
            return None;
        }
        if self.index.len() != self.n * self.n {
            return self.edges.iter().position(|&e| e == (i, j));
        }
        self.index[i * self.n + j]
    }

    /// `w(i, j)`, 1 on unweighted graphs and 0 off the edge set.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match (self.edge_index(i, j), &self.weights) {
            (None, _) => 0.0,
            (Some(_), None) => 1.0,
            (Some(k), Some(w)) => w[k],
        }
    }

    /// Weighted biadjacency matrix.
    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.weight(i, j)).collect()).collect()
    }

    /// 0-1 biadjacency matrix.
    pub fn adjacency(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| if self.has_edge(i, j) { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        let w = (0..self.edges.len())
            .map(|k| c * self.weights.as_ref().map_or(1.0, |w| w[k]))
            .collect();
        Self::with_weights(self.n, self.edges.clone(), w)
    }

    /// Maximum matching by augmenting paths.
    pub fn maximum_matching(&self) -> Matching {
        let n = self.n;
        let mut adj = vec![Vec::new(); n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
        }
        let mut mr = vec![FREE; n];
        fn augment(u: usize, adj: &[Vec<usize>], seen: &mut [bool], mr: &mut [usize]) -> bool {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    if mr[v] == FREE || augment(mr[v], adj, seen, mr) {
                        mr[v] = u;
                        return true;
                    }
                }
            }
            false
        }
        for u in 0..n {
            let mut seen = vec![false; n];
            augment(u, &adj, &mut seen, &mut mr);
        }
        let mut mate = vec![None; n];
        for (v, &u) in mr.iter().enumerate() {
            if u != FREE {
                mate[u] = Some(v);
            }
        }
        Matching { mate }
    }
}

/// A matching stored as the right mate of each left vertex.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Matching {
    mate: Vec<Option<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchingKind {
    Perfect,
    NearPerfect { u: usize, v: usize },
    Other,
}

impl Matching {
    pub fn from_mates(mate: Vec<Option<usize>>) -> Result<Self> {
        let n = mate.len();
        let mut used = vec![false; n];
        for &v in mate.iter().flatten() {
            if v >= n || std::mem::replace(&mut used[v], true) {
                return Err(Error::InvalidState(format!("right vertex {v} repeated or out of range")));
            }
        }
        Ok(Matching { mate })
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut mate = vec![None; n];
        for &(i, j) in edges {
            if i >= n || mate[i].replace(j).is_some() {
                return Err(Error::InvalidState(format!("left vertex {i} repeated or out of range")));
            }
        }
        Self::from_mates(mate)
    }

    pub fn n(&self) -> usize {
        self.mate.len()
    }

    pub fn mate(&self, u: usize) -> Option<usize> {
        self.mate[u]
    }

    pub fn len(&self) -> usize {
        self.mate.iter().flatten().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.mate.get(i) == Some(&Some(j))
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.mate.iter().enumerate().filter_map(|(i, m)| m.map(|j| (i, j))).collect()
    }

    pub fn kind(&self) -> MatchingKind {
        let n = self.n();
        match self.len() {
            k if k == n => MatchingKind::Perfect,
            k if k + 1 == n => {
                let u = self.mate.iter().position(Option::is_none).expect("one free left vertex");
                let mut used = vec![false; n];
                for &v in self.mate.iter().flatten() {
                    used[v] = true;
                }
                let v = used.iter().position(|&b| !b).expect("one free right vertex");
                MatchingKind::NearPerfect { u, v }
            }
            _ => MatchingKind::Other,
        }
    }

    pub fn is_perfect(&self) -> bool {
        self.kind() == MatchingKind::Perfect
    }

    /// `w(M)`: product of edge weights, 1 for the empty matching.
    pub fn weight(&self, g: &BipartiteGraph) -> f64 {
        self.edges().iter().map(|&(i, j)| g.weight(i, j)).product()
    }

    fn check_in(&self, g: &BipartiteGraph) -> Result<()> {
        if self.n() != g.n() {
            return Err(Error::DimensionMismatch {
                expected: g.n(),
                got: self.n(),
            });
        }
        if let Some((i, j)) = self.edges().into_iter().find(|&(i, j)| !g.has_edge(i, j)) {
            return Err(Error::InvalidState(format!("({i},{j}) is not an edge")));
        }
        if self.kind() == MatchingKind::Other {
            return Err(Error::InvalidState(format!(
                "matching has {} edges, neither perfect nor near-perfect",
                self.len()
            )));
        }
        Ok(())
    }
}

/// In-place state of the matching chain.
#[derive(Debug, Clone)]
struct Walker<'a> {
    g: &'a BipartiteGraph,
    ml: Vec<usize>,
    mr: Vec<usize>,
    hole: Option<(usize, usize)>,
}

impl<'a> Walker<'a> {
    fn new(g: &'a BipartiteGraph, m: &Matching) -> Self {
        let n = g.n();
        let mut ml = vec![FREE; n];
        let mut mr = vec![FREE; n];
        for (i, j) in m.edges() {
            ml[i] = j;
            mr[j] = i;
        }
        let hole = match m.kind() {
            MatchingKind::NearPerfect { u, v } => Some((u, v)),
            _ => None,
        };
        Walker { g, ml, mr, hole }
    }

    fn apply(&mut self, e: usize) {
        let (u, v) = self.g.edges[e];
        match self.hole {
            None => {
                if self.ml[u] == v {
                    self.ml[u] = FREE;
                    self.mr[v] = FREE;
                    self.hole = Some((u, v));
                }
            }
            Some((hu, hv)) => {
                if u == hu && v == hv {
                    self.ml[u] = v;
                    self.mr[v] = u;
                    self.hole = None;
                } else if v == hv {
                    let w = self.ml[u];
                    self.ml[u] = v;
                    self.mr[v] = u;
                    self.mr[w] = FREE;
                    self.hole = Some((hu, w));
                } else if u == hu {
                    let w = self.mr[v];
                    self.mr[v] = u;
                    self.ml[u] = v;
                    self.ml[w] = FREE;
                    self.hole = Some((w, hv));
                }
            }
        }
    }

    fn step(&mut self, rng: &mut RandomSource) {
        let m = self.g.edge_count();
        if m > 0 {
            self.apply(rng.random_range(0..m));
        }
    }

    fn is_perfect(&self) -> bool {
        self.hole.is_none()
    }

    fn matching(&self) -> Matching {
        Matching {
            mate: self.ml.iter().map(|&j| (j != FREE).then_some(j)).collect(),
        }
    }
}

/// One move of the matching chain: pick an edge `e = (u, v)` uniformly.
///
/// - perfect and `e` in `M`: drop `e`;
/// - near-perfect with holes `u, v`: add `e`;
/// - near-perfect, `v` a hole and `u` matched to `w`: add `e`, drop `(u, w)`,
///   and symmetrically when `u` is the hole;
/// - otherwise stay.
pub fn broder_step(g: &BipartiteGraph, current: &Matching, rng: &mut RandomSource) -> Result<Matching> {
    current.check_in(g)?;
    let mut w = Walker::new(g, current);
    w.step(rng);
    Ok(w.matching())
}

/// Deterministic move for a chosen edge index.
pub fn broder_apply(g: &BipartiteGraph, current: &Matching, edge: usize) -> Result<Matching> {
    current.check_in(g)?;
    if edge >= g.edge_count() {
        return Err(Error::InvalidState(format!("edge index {edge} out of range")));
    }
    let mut w = Walker::new(g, current);
    w.apply(edge);
    Ok(w.matching())
}

/// All perfect and all near-perfect matchings, each list in lexicographic order.
pub fn enumerate_matchings(g: &BipartiteGraph) -> Result<(Vec<Matching>, Vec<Matching>)> {
    let n = g.n();
    too_large("matching enumeration side", n, ENUMERATION_GUARD)?;
    let adj: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| g.has_edge(i, j)).collect()).collect();
    let mut perfect = Vec::new();
    let mut near = Vec::new();
    let mut mate = vec![None; n];

    struct Ctx<'a> {
        adj: &'a [Vec<usize>],
        perfect: &'a mut Vec<Matching>,
        near: &'a mut Vec<Matching>,
    }

    fn rec(ctx: &mut Ctx, i: usize, used: u32, skipped: bool, mate: &mut Vec<Option<usize>>) -> Result<()> {
        if i == mate.len() {
            let total = ctx.perfect.len() + ctx.near.len();
            too_large("matching count", total + 1, ENUMERATION_LIMIT)?;
            let m = Matching { mate: mate.clone() };
            if skipped {
                ctx.near.push(m);
            } else {
                ctx.perfect.push(m);
            }
            return Ok(());
        }
        if !skipped {
            mate[i] = None;
            rec(ctx, i + 1, used, true, mate)?;
        }
        for &j in &ctx.adj[i] {
            if used & 1 << j == 0 {
                mate[i] = Some(j);
                rec(ctx, i + 1, used | 1 << j, skipped, mate)?;
            }
        }
        mate[i] = None;
        Ok(())
    }

    let mut ctx = Ctx {
        adj: &adj,
        perfect: &mut perfect,
        near: &mut near,
    };
    rec(&mut ctx, 0, 0, false, &mut mate)?;
    perfect.sort();
    near.sort();
    Ok((perfect, near))
}

fn square_size(a: &[Vec<f64>]) -> Result<usize> {
    let n = a.len();
    if let Some(row) = a.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: row.len(),
        });
    }
    Ok(n)
}

/// `sum_sigma prod_i A[i][sigma(i)]` by Ryser's inclusion-exclusion with a
/// Gray-code walk over column subsets. The 0x0 permanent is 1.
pub fn permanent_exact(a: &[Vec<f64>]) -> Result<f64> {
    let n = square_size(a)?;
    too_large("permanent size", n, PERMANENT_GUARD)?;
    if n == 0 {
        return Ok(1.0);
    }
    let mut row_sums = vec![0.0; n];
    let mut total = 0.0;
    let mut gray = 0usize;
    for k in 1..(1usize << n) {
        let j = k.trailing_zeros() as usize;
        let adding = gray & 1 << j == 0;
        gray ^= 1 << j;
        for (s, row) in row_sums.iter_mut().zip(a) {
            if adding {
                *s += row[j];
            } else {
                *s -= row[j];
            }
        }
        let prod: f64 = row_sums.iter().product();
        if gray.count_ones() % 2 == n as u32 % 2 {
            total += prod;
        } else {
            total -= prod;
        }
    }
    Ok(total)
}

/// Permanent as a sum over permutations, for cross-checking.
pub fn permanent_brute_force(a: &[Vec<f64>]) -> Result<f64> {
    let n = square_size(a)?;
    too_large("permanent size", n, BRUTE_FORCE_GUARD)?;
    fn rec(a: &[Vec<f64>], i: usize, used: u32, acc: f64) -> f64 {
        if i == a.len() {
            return acc;
        }
        let mut s = 0.0;
        for (j, &x) in a[i].iter().enumerate() {
            if x != 0.0 && used & 1 << j == 0 {
                s += rec(a, i + 1, used | 1 << j, acc * x);
            }
        }
        s
    }
    Ok(rec(a, 0, 0, 1.0))
}

fn minor(a: &[Vec<f64>], u: usize, v: usize) -> Vec<Vec<f64>> {
    a.iter()
        .enumerate()
        .filter(|&(i, _)| i != u)
        .map(|(_, row)| row.iter().enumerate().filter(|&(j, _)| j != v).map(|(_, &x)| x).collect())
        .collect()
}

/// Total weight of perfect matchings and of each near-perfect hole class
/// `(u, v)`, the latter stored row-major.
pub fn hole_class_weights(g: &BipartiteGraph) -> Result<(f64, Vec<f64>)> {
    let n = g.n();
    too_large("permanent size", n, PERMANENT_GUARD)?;
    let a = g.to_matrix();
    let perfect = permanent_exact(&a)?;
    let mut classes = vec![0.0; n * n];
    for u in 0..n {
        for v in 0..n {
            classes[u * n + v] = permanent_exact(&minor(&a, u, v))?;
        }
    }
    Ok((perfect, classes))
}

/// `(|M|, |M'|)` from permanents of the 0-1 biadjacency matrix and its minors.
pub fn count_matchings(g: &BipartiteGraph) -> Result<(u64, u64)> {
    let unweighted = BipartiteGraph::new(g.n(), g.edges().to_vec())?;
    let (p, classes) = hole_class_weights(&unweighted)?;
    Ok((p.round() as u64, classes.iter().sum::<f64>().round() as u64))
}

/// `|M'| / |M|`, infinite when there is no perfect matching.
pub fn near_perfect_ratio(g: &BipartiteGraph) -> Result<f64> {
    let (p, near) = count_matchings(g)?;
    if p == 0 {
        return Ok(f64::INFINITY);
    }
    Ok(near as f64 / p as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseReport {
    /// Every row has at least `n/2` ones.
    pub dense: bool,
    /// Every column has at least `n/2` ones.
    pub columns_dense: bool,
    pub min_row: usize,
    pub min_col: usize,
}

/// Row and column density of a 0-1 matrix; entries are counted as ones when nonzero.
pub fn dense_check(a: &[Vec<f64>]) -> DenseReport {
    let n = a.len();
    let row_ones: Vec<usize> = a.iter().map(|r| r.iter().filter(|&&x| x != 0.0).count()).collect();
    let col_ones: Vec<usize> = (0..n)
        .map(|j| a.iter().filter(|r| r.get(j).is_some_and(|&x| x != 0.0)).count())
        .collect();
    let min_row = row_ones.iter().copied().min().unwrap_or(0);
    let min_col = col_ones.iter().copied().min().unwrap_or(0);
    DenseReport {
        dense: 2 * min_row >= n,
        columns_dense: 2 * min_col >= n,
        min_row,
        min_col,
    }
}

/// The matching chain over all perfect and near-perfect matchings.
#[derive(Debug, Clone)]
pub struct BroderChain {
    pub chain: FiniteChain,
    /// Perfect matchings first, then near-perfect ones.
    pub states: Vec<Matching>,
    pub n_perfect: usize,
}

impl BroderChain {
    pub fn index_of(&self, m: &Matching) -> Option<usize> {
        self.states.iter().position(|s| s == m)
    }
}

/// Materialise the matching chain; each edge is picked with probability `1/|E|`.
pub fn broder_chain_explicit(g: &BipartiteGraph) -> Result<BroderChain> {
    let (perfect, near) = enumerate_matchings(g)?;
    let n_perfect = perfect.len();
    let states: Vec<Matching> = perfect.into_iter().chain(near).collect();
    let size = states.len();
    too_large("matching chain states", size, CHAIN_GUARD)?;
    let lookup: HashMap<&Matching, usize> = states.iter().enumerate().map(|(k, m)| (m, k)).collect();
    let m = g.edge_count();
    let mut t = vec![0.0; size * size];
    for (x, s) in states.iter().enumerate() {
        if m == 0 {
            t[x * size + x] = 1.0;
            continue;
        }
        let mut w = Walker::new(g, s);
        for e in 0..m {
            w.apply(e);
            let y = lookup[&w.matching()];
            t[x * size + y] += 1.0 / m as f64;
            w = Walker::new(g, s);
        }
    }
    let chain = FiniteChain::from_flat(size, t);
    if size == 0 || !chain.is_strongly_connected() {
        return Err(Error::NotConnected(format!(
            "matching chain on {size} states is reducible"
        )));
    }
    Ok(BroderChain {
        chain,
        states,
        n_perfect,
    })
}

/// Some near-perfect matching of `g`, or `NoPerfectMatching` when `g` has no
/// perfect matching.
fn greedy_near_perfect(g: &BipartiteGraph) -> Result<Matching> {
    let mut m = g.maximum_matching();
    if !m.is_perfect() {
        return Err(Error::NoPerfectMatching);
    }
    m.mate[0] = None;
    Ok(m)
}

/// Rejection sampling: run the chain `steps_per_trial` steps from a fixed
/// near-perfect start and keep the end state if it is perfect.
pub fn sample_perfect_rejection(
    g: &BipartiteGraph,
    steps_per_trial: usize,
    max_trials: usize,
    rng: &mut RandomSource,
) -> Result<Matching> {
    if max_trials == 0 {
        return Err(Error::RejectionBudgetExhausted(0));
    }
    let start = greedy_near_perfect(g)?;
    let mut w = Walker::new(g, &start);
    for _ in 0..max_trials {
        w.clone_from(&Walker::new(g, &start));
        for _ in 0..steps_per_trial {
            w.step(rng);
        }
        if w.is_perfect() {
            return Ok(w.matching());
        }
    }
    Err(Error::RejectionBudgetExhausted(max_trials))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimate {
    /// Edge `(row, col)` of the original matrix that was contracted.
    pub row: usize,
    pub col: usize,
    pub fraction: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermanentEstimate {
    pub estimate: f64,
    pub levels: Vec<LevelEstimate>,
    pub samples_used: usize,
    pub steps_used: usize,
}

/// Perfect-matching samples per level for a relative error target `eps`.
///
/// With the largest of the fractions at the first row chosen, each fraction is
/// at least `1/m` on an `m`-sided graph, so the relative variance of the
/// product is at most `sum_m (m - 1) / N = n (n - 1) / (2 N)`.
pub fn samples_per_level(n: usize, eps: f64) -> usize {
    let v = (n * n.saturating_sub(1)) as f64 / 2.0;
    (8.0 * v / (eps * eps)).ceil().max(1.0) as usize
}

/// Counting by sampling: fix the first row, estimate the fraction `f` of
/// uniform perfect matchings using its most frequent edge, contract that edge
/// and recurse. `per(A)` is the product of the `1/f` factors.
///
/// Samples come from one warm chain per level, thinned by `|E|` steps and
/// kept only when perfect.
pub fn permanent_estimate(a: &[Vec<f64>], eps: f64, rng: &mut RandomSource) -> Result<PermanentEstimate> {
    let n = square_size(a)?;
    too_large("permanent estimator side", n, ENUMERATION_GUARD)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidModel(format!("eps must be positive, got {eps}")));
    }
    if let Some((i, j)) = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .find(|&(i, j)| a[i][j] != 0.0 && a[i][j] != 1.0)
    {
        return Err(Error::InvalidModel(format!("entry ({i},{j}) is not 0 or 1")));
    }
    let dense = dense_check(a);
    if !dense.dense {
        let row = a.iter().position(|r| 2 * r.iter().filter(|&&x| x != 0.0).count() < n).unwrap_or(0);
        return Err(Error::NotDense {
            row,
            ones: dense.min_row,
        });
    }
    let g = BipartiteGraph::from_matrix(a)?;
    if !g.maximum_matching().is_perfect() {
        return Err(Error::NoPerfectMatching);
    }

    let per_level = samples_per_level(n, eps);
    let mut rows: Vec<usize> = (0..n).collect();
    let mut cols: Vec<usize> = (0..n).collect();
    let mut estimate = 1.0;
    let mut levels = Vec::new();
    let mut samples_used = 0;
    let mut steps_used = 0;
    while rows.len() > 1 {
        let sub: Vec<Vec<f64>> = rows.iter().map(|&i| cols.iter().map(|&j| a[i][j]).collect()).collect();
        let h = BipartiteGraph::from_matrix(&sub)?;
        let m = rows.len();
        let thin = h.edge_count().max(m);
        let mut w = Walker::new(&h, &greedy_near_perfect(&h)?);
        for _ in 0..thin * m {
            w.step(rng);
        }
        steps_used += thin * m;
        let mut counts = vec![0usize; m];
        let mut got = 0;
        while got < per_level {
            for _ in 0..thin {
                w.step(rng);
            }
            steps_used += thin;
            if w.is_perfect() {
                counts[w.ml[0]] += 1;
                got += 1;
            }
        }
        samples_used += got;
        let (best, &count) = counts.iter().enumerate().max_by_key(|&(j, &c)| (c, std::cmp::Reverse(j))).expect("m >= 2");
        let fraction = count as f64 / got as f64;
        estimate /= fraction;
        levels.push(LevelEstimate {
            row: rows[0],
            col: cols[best],
            fraction,
            samples: got,
        });
        rows.remove(0);
        cols.remove(best);
    }
    estimate *= a[rows[0]][cols[0]];
    Ok(PermanentEstimate {
        estimate,
        levels,
        samples_used,
        steps_used,
    })
}

/// Exact JSV-style modified weights `w'(u, v) = w(M) / w(M'(u, v))`, the
/// ratio of total perfect weight to the total weight of near-perfect
/// matchings with holes `(u, v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModifiedWeights {
    pub n: usize,
    pub perfect_weight: f64,
    /// Row-major hole-class weights.
    pub hole_weights: Vec<f64>,
    /// Hole classes without any near-perfect matching; `w'` is undefined there.
    pub empty_classes: Vec<(usize, usize)>,
}

impl ModifiedWeights {
    pub fn ratio(&self, u: usize, v: usize) -> Result<f64> {
        if u >= self.n || v >= self.n {
            return Err(Error::InvalidState(format!("hole ({u},{v}) out of range")));
        }
        let h = self.hole_weights[u * self.n + v];
        if h == 0.0 {
            return Err(Error::EmptyHoleClass(u, v));
        }
        Ok(self.perfect_weight / h)
    }

    /// `w'(M)`: `w(M)` for perfect `M`, `w(M) w'(u, v)` for near-perfect `M`.
    pub fn matching_weight(&self, g: &BipartiteGraph, m: &Matching) -> Result<f64> {
        m.check_in(g)?;
        let base = m.weight(g);
        match m.kind() {
            MatchingKind::NearPerfect { u, v } => Ok(base * self.ratio(u, v)?),
            _ => Ok(base),
        }
    }
}

pub fn jsv_modified_weights(g: &BipartiteGraph) -> Result<ModifiedWeights> {
    too_large("matching enumeration side", g.n(), ENUMERATION_GUARD)?;
    let (perfect_weight, hole_weights) = hole_class_weights(g)?;
    if perfect_weight <= 0.0 {
        return Err(Error::NoPerfectMatching);
    }
    let n = g.n();
    let empty_classes = (0..n)
        .flat_map(|u| (0..n).map(move |v| (u, v)))
        .filter(|&(u, v)| hole_weights[u * n + v] == 0.0)
        .collect();
    Ok(ModifiedWeights {
        n,
        perfect_weight,
        hole_weights,
        empty_classes,
    })
}

/// The matching chain with a Metropolis filter towards `w'(M)`.
pub fn jsv_weighted_chain(g: &BipartiteGraph, mw: &ModifiedWeights) -> Result<BroderChain> {
    let base = broder_chain_explicit(g)?;
    let weights = base
        .states
        .iter()
        .map(|m| mw.matching_weight(g, m))
        .collect::<Result<Vec<f64>>>()?;
    Ok(BroderChain {
        chain: base.chain.metropolize(&weights)?,
        ..base
    })
}
