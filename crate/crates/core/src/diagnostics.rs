//! Exhaustive mixing diagnostics for small explicit chains.
//!
//! Everything here is exact: conductance is minimized over every subset,
//! blocking conductance enumerates every blocking set, and the spectrum comes
//! from a dense symmetric eigen-solve. The point is to serve as an oracle, so
//! the guards are deliberately small.
//!
//! Conventions:
//!
//! ```text
//! Q(S, T)  = sum_{x in S, y in T} pi(x) P(x, y)
//! Phi(S)   = Q(S, S^c) / pi(S)
//! Phi      = min { Phi(S) : 0 < pi(S) < 3/4 }
//! Psi(S)   = sup_{a in (0, pi(S))} min_{B in S^c, pi(B) <= a} a Q(S, S^c \ B) / pi(S)^2
//! ```

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::chain::{reversibility_defect, Distribution, FiniteChain, MIXING_SLACK};
use crate::error::{too_large, Error, Result};

/// Largest chain handed to the dense eigen-solver.
pub const SPECTRAL_GUARD: usize = 1024;
/// Largest chain whose subsets are enumerated.
pub const SUBSET_GUARD: usize = 22;
/// Largest chain whose full blocking-conductance profile is computed (3^n work).
pub const BLOCKING_PROFILE_GUARD: usize = 14;
/// Detailed balance tolerance used to accept a chain as reversible.
pub const REVERSIBILITY_TOL: f64 = 1e-9;
/// Slack on both sides of the Cheeger inequalities.
pub const CHEEGER_SLACK: f64 = 1e-9;
/// Constant in front of the blocking-conductance mixing integral.
pub const BLOCKING_MIXING_CONSTANT: f64 = 500.0;

const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub lambda2: f64,
    #[serde(rename = "lambdaN")]
    pub lambda_n: f64,
    pub pi0: f64,
    /// All eigenvalues, largest first.
    pub eigenvalues: Vec<f64>,
}

impl SpectralSummary {
    /// `max(|lambda_2|, |lambda_N|)`.
    pub fn second_largest_modulus(&self) -> f64 {
        self.lambda2.abs().max(self.lambda_n.abs())
    }
}

/// Spectrum of a reversible chain through its symmetrization `D^1/2 P D^-1/2`.
pub fn spectral_summary(chain: &FiniteChain) -> Result<SpectralSummary> {
    too_large("chain", chain.n_states(), SPECTRAL_GUARD)?;
    let pi = chain.stationary()?;
    let defect = reversibility_defect(chain, &pi)?;
    if defect > REVERSIBILITY_TOL {
        return Err(Error::NotReversible(defect));
    }
    let n = chain.n_states();
    let sqrt_pi: Vec<f64> = pi.as_slice().iter().map(|p| p.sqrt()).collect();
    let sym = DMatrix::from_fn(n, n, |x, y| {
        let a = sqrt_pi[x] * chain.prob(x, y) / sqrt_pi[y];
        let b = sqrt_pi[y] * chain.prob(y, x) / sqrt_pi[x];
        0.5 * (a + b)
    });
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let (lambda2, lambda_n) = if n == 1 {
        (0.0, 0.0)
    } else {
        (eigenvalues[1], eigenvalues[n - 1])
    };
    Ok(SpectralSummary {
        lambda2,
        lambda_n,
        pi0: pi.min_mass(),
        eigenvalues,
    })
}

/// Real parts of the eigenvalues of `P` itself (general solver), largest first.
pub fn transition_eigenvalues(chain: &FiniteChain) -> Result<Vec<f64>> {
    too_large("chain", chain.n_states(), SPECTRAL_GUARD)?;
    let mut ev: Vec<f64> = chain.to_matrix().complex_eigenvalues().iter().map(|c| c.re).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(ev)
}

/// `(1 / pi_0) max(|lambda_2|, |lambda_N|)^t`, an upper bound on the L1 distance at time `t`.
pub fn spectral_distance_bound(s: &SpectralSummary, t: u32) -> f64 {
    s.second_largest_modulus().powi(t as i32) / s.pi0
}

/// A subset of the states of a chain.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateSet {
    members: Vec<bool>,
}

impl StateSet {
    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut members = vec![false; n];
        for &i in indices {
            if i >= n {
                return Err(Error::InvalidState(format!("state {i} out of range")));
            }
            members[i] = true;
        }
        Ok(StateSet { members })
    }

    /// Bit `i` of `mask` selects state `i`.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        StateSet {
            members: (0..n).map(|i| i < 64 && mask >> i & 1 == 1).collect(),
        }
    }

    pub fn all(n: usize) -> Self {
        StateSet {
            members: vec![true; n],
        }
    }

    pub fn complement(&self) -> Self {
        StateSet {
            members: self.members.iter().map(|m| !m).collect(),
        }
    }

    pub fn contains(&self, x: usize) -> bool {
        self.members[x]
    }

    pub fn universe(&self) -> usize {
        self.members.len()
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.members.len()).filter(|&i| self.members[i]).collect()
    }

    pub fn mass(&self, pi: &Distribution) -> f64 {
        self.indices().iter().map(|&i| pi.get(i)).sum()
    }
}

fn check_set(chain: &FiniteChain, s: &StateSet) -> Result<()> {
    if s.universe() != chain.n_states() {
        return Err(Error::DimensionMismatch {
            expected: chain.n_states(),
            got: s.universe(),
        });
    }
    Ok(())
}

/// `Q(S, T)`.
pub fn ergodic_flow(chain: &FiniteChain, pi: &Distribution, s: &StateSet, t: &StateSet) -> Result<f64> {
    check_set(chain, s)?;
    check_set(chain, t)?;
    let targets = t.indices();
    Ok(s.indices()
        .iter()
        .map(|&x| pi.get(x) * targets.iter().map(|&y| chain.prob(x, y)).sum::<f64>())
        .sum())
}

/// `Phi(S) = Q(S, S^c) / pi(S)`.
pub fn conductance_of_set(chain: &FiniteChain, pi: &Distribution, s: &StateSet) -> Result<f64> {
    check_set(chain, s)?;
    let mass = s.mass(pi);
    if !(mass > 0.0) {
        return Err(Error::EmptySet);
    }
    Ok(ergodic_flow(chain, pi, s, &s.complement())? / mass)
}

/// One enumerated subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetRecord {
    pub mask: u64,
    pub mass: f64,
    pub flow: f64,
    pub phi: f64,
    pub psi: Option<f64>,
}

/// Every subset with `0 < pi(S) <= 3/4`, with its flow and conductance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductanceProfile {
    pub n_states: usize,
    pub pi: Vec<f64>,
    pub records: Vec<SetRecord>,
    pub global_phi: f64,
    /// Subset attaining `global_phi`.
    pub argmin: u64,
}

impl ConductanceProfile {
    pub fn pi0(&self) -> f64 {
        self.pi.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn has_psi(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.psi.is_some())
    }
}

/// Exhaustive conductance over all `2^N` subsets.
pub fn global_conductance(chain: &FiniteChain) -> Result<ConductanceProfile> {
    let n = chain.n_states();
    too_large("chain for subset enumeration", n, SUBSET_GUARD)?;
    let pi = chain.stationary()?;
    let p = pi.as_slice();
    let full = 1usize << n;
    let mut mass = vec![0.0f64; full];
    let mut flow = vec![0.0f64; full];
    let mut records = Vec::new();
    let mut global_phi = f64::INFINITY;
    let mut argmin = 0u64;
    for mask in 1..full {
        let x = mask.trailing_zeros() as usize;
        let rest = mask & (mask - 1);
        mass[mask] = mass[rest] + p[x];
        // Q(S, S^c) from Q(S', S'^c) where S = S' + {x}
        let mut into_x = 0.0;
        let mut out_of_x = 0.0;
        for y in 0..n {
            if rest >> y & 1 == 1 {
                into_x += p[y] * chain.prob(y, x);
            } else if y != x {
                out_of_x += chain.prob(x, y);
            }
        }
        flow[mask] = (flow[rest] - into_x + p[x] * out_of_x).max(0.0);
        let m = mass[mask];
        if m <= 0.75 + MASS_TOL {
            let phi = (flow[mask] / m).clamp(0.0, 1.0);
            if m < 0.75 - MASS_TOL && phi < global_phi {
                global_phi = phi;
                argmin = mask as u64;
            }
            records.push(SetRecord {
                mask: mask as u64,
                mass: m,
                flow: flow[mask],
                phi,
                psi: None,
            });
        }
    }
    if !global_phi.is_finite() {
        return Err(Error::EmptyProfile);
    }
    Ok(ConductanceProfile {
        n_states: n,
        pi: pi.into_vec(),
        records,
        global_phi,
        argmin,
    })
}

/// [`global_conductance`] with `Psi(S)` filled in for every record.
pub fn blocking_profile(chain: &FiniteChain) -> Result<ConductanceProfile> {
    too_large("chain for blocking enumeration", chain.n_states(), BLOCKING_PROFILE_GUARD)?;
    let mut profile = global_conductance(chain)?;
    let pi = Distribution::new(profile.pi.clone()).unwrap_or_else(|_| Distribution::from_weights(&profile.pi).unwrap());
    let n = profile.n_states;
    for r in profile.records.iter_mut() {
        let set = StateSet::from_mask(n, r.mask);
        r.psi = Some(blocking_conductance_of_set(chain, &pi, &set)?);
    }
    Ok(profile)
}

/// Exact `Psi(S)`.
///
/// `Q(S, S^c \ B) = Q(S, S^c) - sum_{y in B} q(y)` with `q(y) = Q(S, {y})`, so
/// the inner minimum is a step function of the budget `a` that changes only at
/// achievable masses `pi(B)`. Between steps the objective grows linearly in `a`,
/// so the supremum is the maximum over right ends of the steps, the last step
/// ending at `a = pi(S)`.
pub fn blocking_conductance_of_set(chain: &FiniteChain, pi: &Distribution, s: &StateSet) -> Result<f64> {
    check_set(chain, s)?;
    let ps = s.mass(pi);
    if !(ps > 0.0) {
        return Err(Error::EmptySet);
    }
    if ps > 0.75 + MASS_TOL {
        return Err(Error::BadSetMass(ps));
    }
    let outside = s.complement().indices();
    too_large("complement for blocking enumeration", outside.len(), SUBSET_GUARD)?;
    let inside = s.indices();
    let q: Vec<f64> = outside
        .iter()
        .map(|&y| inside.iter().map(|&x| pi.get(x) * chain.prob(x, y)).sum())
        .collect();
    let total: f64 = q.iter().sum();

    let k = outside.len();
    let mut blocks: Vec<(f64, f64)> = Vec::with_capacity(1 << k);
    blocks.push((0.0, 0.0));
    for b in 1usize..(1 << k) {
        let i = b.trailing_zeros() as usize;
        let (m, f) = blocks[b & (b - 1)];
        blocks.push((m + pi.get(outside[i]), f + q[i]));
    }
    blocks.sort_by(|a, b| a.0.total_cmp(&b.0));

    let denom = ps * ps;
    let mut best_block: f64 = 0.0;
    let mut sup: f64 = 0.0;
    let mut i = 0;
    while i < blocks.len() {
        let m = blocks[i].0;
        if m >= ps {
            break;
        }
        while i < blocks.len() && blocks[i].0 == m {
            best_block = best_block.max(blocks[i].1);
            i += 1;
        }
        let right = blocks.get(i).map_or(ps, |b| b.0.min(ps));
        sup = sup.max(right * (total - best_block).max(0.0) / denom);
    }
    Ok(sup)
}

/// Step function on `(0, 3/4]`: `values[i]` on `(breakpoints[i-1], breakpoints[i]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockingFunction {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl BlockingFunction {
    pub fn constant(c: f64) -> Self {
        BlockingFunction {
            breakpoints: vec![0.75],
            values: vec![c],
        }
    }

    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(Error::EmptyProfile);
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) || breakpoints[0] <= 0.0 {
            return Err(Error::InvalidModel("breakpoints must increase from above 0".into()));
        }
        Ok(BlockingFunction { breakpoints, values })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let i = self.breakpoints.partition_point(|&b| b < t);
        self.values[i.min(self.values.len() - 1)]
    }

    fn left_end(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.breakpoints[i - 1]
        }
    }

    /// Exact check of `psi(t) <= 2 psi(t')` for all `t <= t' <= 4t/3`.
    pub fn satisfies_doubling(&self) -> bool {
        let k = self.values.len();
        (0..k).all(|i| {
            (i + 1..k)
                .filter(|&j| self.left_end(j) < 4.0 / 3.0 * self.breakpoints[i])
                .all(|j| self.values[i] <= 2.0 * self.values[j] * (1.0 + 1e-12))
        })
    }

    /// `psi(pi(S)) <= Psi(S)` for every profiled set.
    pub fn lower_bounds(&self, profile: &ConductanceProfile) -> bool {
        profile
            .records
            .iter()
            .all(|r| r.psi.is_none_or(|psi| self.eval(r.mass) <= psi * (1.0 + 1e-12)))
    }
}

/// Blocking conductance function from a profile: the minimum `Psi` at each
/// attained mass, then lowered right to left until the doubling condition holds.
/// Values are never raised, so the lower-bound property survives.
pub fn build_blocking_function(profile: &ConductanceProfile) -> Result<BlockingFunction> {
    let mut pts: Vec<(f64, f64)> = profile
        .records
        .iter()
        .filter(|r| r.mass > 0.0 && r.mass <= 0.75 + MASS_TOL)
        .map(|r| r.psi.map(|psi| (r.mass.min(0.75), psi)).ok_or(Error::EmptyProfile))
        .collect::<Result<_>>()?;
    if pts.is_empty() {
        return Err(Error::EmptyProfile);
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut breakpoints: Vec<f64> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (m, psi) in pts {
        if breakpoints.last() == Some(&m) {
            let v = values.last_mut().unwrap();
            *v = v.min(psi);
        } else {
            breakpoints.push(m);
            values.push(psi);
        }
    }
    if *breakpoints.last().unwrap() < 0.75 {
        // no set constrains this stretch
        breakpoints.push(0.75);
        values.push(1.0);
    }
    values.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    let mut psi = BlockingFunction { breakpoints, values };
    smooth_doubling(&mut psi);
    Ok(psi)
}

/// Largest function below `psi` satisfying the doubling condition.
pub fn smooth_doubling(psi: &mut BlockingFunction) {
    let k = psi.values.len();
    for i in (0..k).rev() {
        let reach = 4.0 / 3.0 * psi.breakpoints[i];
        for j in i + 1..k {
            if psi.left_end(j) >= reach {
                break;
            }
            psi.values[i] = psi.values[i].min(2.0 * psi.values[j]);
        }
    }
}

/// `500 * integral_{pi_0}^{3/4} dt / (t psi(t))`, exact on each step.
pub fn blocking_mixing_bound(psi: &BlockingFunction, pi0: f64) -> Result<f64> {
    if !(pi0 > 0.0 && pi0 < 0.75) {
        return Err(Error::InvalidDistribution(format!("pi0 = {pi0} must lie in (0, 3/4)")));
    }
    let mut integral = 0.0;
    for (i, &v) in psi.values.iter().enumerate() {
        let lo = psi.left_end(i).max(pi0);
        let hi = psi.breakpoints[i].min(0.75);
        if hi <= lo {
            continue;
        }
        if !(v > 0.0) {
            return Err(Error::ZeroPsi { lo, hi });
        }
        integral += (hi / lo).ln() / v;
    }
    Ok(BLOCKING_MIXING_CONSTANT * integral)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheegerReport {
    pub phi: f64,
    pub lambda2: f64,
    pub lower: f64,
    pub upper: f64,
    pub holds: bool,
}

/// `1 - 2 Phi <= lambda_2 <= 1 - Phi^2 / 2` on a lazy reversible chain.
pub fn cheeger_check(chain: &FiniteChain) -> Result<CheegerReport> {
    if let Some((state, diagonal)) = chain.lazy_violation() {
        return Err(Error::NotLazy { state, diagonal });
    }
    let profile = global_conductance(chain)?;
    let spectrum = spectral_summary(chain)?;
    Ok(cheeger_from(profile.global_phi, spectrum.lambda2))
}

pub fn cheeger_from(phi: f64, lambda2: f64) -> CheegerReport {
    let lower = 1.0 - 2.0 * phi;
    let upper = 1.0 - 0.5 * phi * phi;
    CheegerReport {
        phi,
        lambda2,
        lower,
        upper,
        holds: lower <= lambda2 + CHEEGER_SLACK && lambda2 <= upper + CHEEGER_SLACK,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyStep {
    pub t: usize,
    pub entropy: f64,
    /// `Ent(t) / Ent(t - 1)` while the previous value is above numerical noise.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyDecay {
    pub steps: Vec<EntropyStep>,
    /// Empirical geometric decay factor: the largest per-step ratio.
    pub alpha: Option<f64>,
    /// Reported alongside `alpha`; no relation between the two is asserted.
    pub lambda2: Option<f64>,
    pub monotone: bool,
}

const ENTROPY_NOISE: f64 = 1e-12;

/// Exact `Ent(p_t)` for `t = 0..=horizon`.
pub fn entropy_decay_report(chain: &FiniteChain, p0: &Distribution, horizon: usize) -> Result<EntropyDecay> {
    let pi = chain.stationary()?;
    let mut p = p0.clone();
    let mut steps = Vec::with_capacity(horizon + 1);
    let mut prev: Option<f64> = None;
    let mut monotone = true;
    for t in 0..=horizon {
        if t > 0 {
            p = chain.evolve(&p, 1)?;
        }
        let entropy = crate::chain::relative_entropy(&p, &pi)?;
        let ratio = prev.filter(|&e| e > ENTROPY_NOISE).map(|e| entropy / e);
        if let Some(e) = prev {
            monotone &= entropy <= e + ENTROPY_NOISE;
        }
        steps.push(EntropyStep { t, entropy, ratio });
        prev = Some(entropy);
    }
    let alpha = steps.iter().filter_map(|s| s.ratio).reduce(f64::max);
    let lambda2 = spectral_summary(chain).ok().map(|s| s.lambda2);
    Ok(EntropyDecay {
        steps,
        alpha,
        lambda2,
        monotone,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplificationReport {
    pub eps: f64,
    pub tau: usize,
    /// `ceil(tau ln(1/eps))`.
    pub steps: usize,
    pub worst_distance: f64,
    pub holds: bool,
}

/// Checks `max_x |delta_x P^t - pi|_1 <= eps` at `t = ceil(tau ln(1/eps))`.
///
/// For `eps >= 1` the logarithm is not positive and there is nothing to
/// amplify; the check is reported as holding without evaluation.
pub fn amplified_mixing_check(chain: &FiniteChain, eps: f64) -> Result<AmplificationReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidModel(format!("eps = {eps} must be positive")));
    }
    let tau = chain.mixing_time_exact()?;
    if eps >= 1.0 {
        return Ok(AmplificationReport {
            eps,
            tau,
            steps: 0,
            worst_distance: f64::NAN,
            holds: true,
        });
    }
    let steps = (tau as f64 * (1.0 / eps).ln()).ceil() as usize;
    let pi = chain.stationary()?;
    let worst_distance = *chain.worst_case_distances(&pi, steps)?.last().unwrap();
    Ok(AmplificationReport {
        eps,
        tau,
        steps,
        worst_distance,
        holds: worst_distance <= eps + MIXING_SLACK,
    })
}
