//! Random walks in convex bodies given by membership oracles, and multiphase
//! volume estimation.
//!
//! Points on the boundary of a body are members.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::chain::FiniteChain;
use crate::error::{too_large, Error, Result};
use crate::rng::RandomSource;

/// Largest dimension accepted by the volume estimator.
pub const VOLUME_DIMENSION_GUARD: usize = 8;
/// Largest explicit grid chain.
pub const GRID_CHAIN_GUARD: usize = 4096;
/// Random probes per rounding check.
pub const ROUNDING_PROBES: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub enum ConvexBody {
    Cube {
        low: Vec<f64>,
        high: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    /// `{x : a_i . x <= b_i}` with user-supplied radii about `center`.
    Halfspaces {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        center: Vec<f64>,
        inner: f64,
        outer: f64,
    },
    /// `{M x + c : x in base}`.
    Affine {
        base: Box<ConvexBody>,
        matrix: DMatrix<f64>,
        offset: DVector<f64>,
        inverse: DMatrix<f64>,
    },
}

impl ConvexBody {
    pub fn cube(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if low.len() != high.len() {
            return Err(Error::DimensionMismatch {
                expected: low.len(),
                got: high.len(),
            });
        }
        if low.is_empty() || low.iter().zip(&high).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::InvalidModel("box needs finite low < high in every coordinate".into()));
        }
        Ok(ConvexBody::Cube { low, high })
    }

    pub fn unit_cube(n: usize) -> Self {
        Self::cube(vec![0.0; n], vec![1.0; n]).expect("valid unit cube")
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidModel(format!("ball needs a center and radius > 0, got {radius}")));
        }
        Ok(ConvexBody::Ball { center, radius })
    }

    pub fn unit_ball(n: usize) -> Self {
        Self::ball(vec![0.0; n], 1.0).expect("valid unit ball")
    }

    pub fn halfspaces(a: Vec<Vec<f64>>, b: Vec<f64>, center: Vec<f64>, inner: f64, outer: f64) -> Result<Self> {
        let n = center.len();
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                got: b.len(),
            });
        }
        if let Some(row) = a.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: row.len(),
            });
        }
        if n == 0 || !(inner > 0.0 && inner <= outer && outer.is_finite()) {
            return Err(Error::InvalidModel(format!("need 0 < r <= R, got r={inner} R={outer}")));
        }
        Ok(ConvexBody::Halfspaces {
            a,
            b,
            center,
            inner,
            outer,
        })
    }

    /// `{x >= 0, sum x <= 1}` about its incenter.
    pub fn simplex(n: usize) -> Self {
        let nf = n as f64;
        let c = 1.0 / (nf + nf.sqrt());
        let outer = ((1.0 - c).powi(2) + (nf - 1.0) * c * c).sqrt();
        let mut a: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { -1.0 } else { 0.0 }).collect())
            .collect();
        let mut b = vec![0.0; n];
        a.push(vec![1.0; n]);
        b.push(1.0);
        Self::halfspaces(a, b, vec![c; n], c, outer).expect("valid simplex")
    }

    pub fn affine(base: ConvexBody, matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        let n = base.dim();
        if matrix.nrows() != n || matrix.ncols() != n || offset.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: matrix.nrows(),
            });
        }
        let inverse = matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidModel("affine map is singular".into()))?;
        Ok(ConvexBody::Affine {
            base: Box::new(base),
            matrix,
            offset,
            inverse,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexBody::Cube { low, .. } => low.len(),
            ConvexBody::Ball { center, .. } => center.len(),
            ConvexBody::Halfspaces { center, .. } => center.len(),
            ConvexBody::Affine { base, .. } => base.dim(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            ConvexBody::Cube { low, high } => x.iter().zip(low.iter().zip(high)).all(|(v, (l, h))| l <= v && v <= h),
            ConvexBody::Ball { center, radius } => dist2(x, center) <= radius * radius,
            ConvexBody::Halfspaces { a, b, .. } => a.iter().zip(b).all(|(row, &bi)| dot(row, x) <= bi),
            ConvexBody::Affine {
                base, offset, inverse, ..
            } => {
                let y = inverse * (DVector::from_column_slice(x) - offset);
                base.contains(y.as_slice())
            }
        }
    }

    pub fn center(&self) -> Vec<f64> {
        match self {
            ConvexBody::Cube { low, high } => low.iter().zip(high).map(|(l, h)| 0.5 * (l + h)).collect(),
            ConvexBody::Ball { center, .. } | ConvexBody::Halfspaces { center, .. } => center.clone(),
            ConvexBody::Affine {
                base, matrix, offset, ..
            } => (matrix * DVector::from_vec(base.center()) + offset).as_slice().to_vec(),
        }
    }

    /// `r` with `Ball(center, r)` inside the body.
    pub fn inner_radius(&self) -> f64 {
        match self {
            ConvexBody::Cube { low, high } => {
                low.iter().zip(high).map(|(l, h)| 0.5 * (h - l)).fold(f64::INFINITY, f64::min)
            }
            ConvexBody::Ball { radius, .. } => *radius,
            ConvexBody::Halfspaces { inner, .. } => *inner,
            ConvexBody::Affine { base, matrix, .. } => base.inner_radius() * singular_values(matrix).0,
        }
    }

    /// `R` with the body inside `Ball(center, R)`.
    pub fn outer_radius(&self) -> f64 {
        match self {
            ConvexBody::Cube { low, high } => {
                0.5 * low.iter().zip(high).map(|(l, h)| (h - l).powi(2)).sum::<f64>().sqrt()
            }
            ConvexBody::Ball { radius, .. } => *radius,
            ConvexBody::Halfspaces { outer, .. } => *outer,
            ConvexBody::Affine { base, matrix, .. } => base.outer_radius() * singular_values(matrix).1,
        }
    }

    /// Upper bound on the diameter.
    pub fn diameter_bound(&self) -> f64 {
        match self {
            ConvexBody::Affine { base, matrix, .. } => base.diameter_bound() * singular_values(matrix).1,
            _ => 2.0 * self.outer_radius(),
        }
    }

    /// Point drawn uniformly from the body by rejection from the outer ball.
    pub fn rejection_sample(&self, rng: &mut RandomSource) -> Vec<f64> {
        let c = self.center();
        let r = self.outer_radius();
        loop {
            let y = uniform_in_ball(&c, r, rng);
            if self.contains(&y) {
                return y;
            }
        }
    }

    /// Midpoints of random member pairs are members.
    pub fn convexity_spot_check(&self, trials: usize, rng: &mut RandomSource) -> bool {
        (0..trials).all(|_| {
            let x = self.rejection_sample(rng);
            let y = self.rejection_sample(rng);
            let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
            self.contains(&mid)
        })
    }
}

fn singular_values(m: &DMatrix<f64>) -> (f64, f64) {
    let s = m.clone().svd(false, false).singular_values;
    (s.min(), s.max())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Positive density `F` with `log F` concave.
#[derive(Clone)]
pub enum LogConcaveDensity {
    Uniform,
    /// `exp(-sum_i rate_i x_i)`.
    Exponential { rates: Vec<f64> },
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for LogConcaveDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogConcaveDensity::Uniform => write!(f, "Uniform"),
            LogConcaveDensity::Exponential { rates } => write!(f, "Exponential {{ rates: {rates:?} }}"),
            LogConcaveDensity::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl LogConcaveDensity {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            LogConcaveDensity::Uniform => 1.0,
            LogConcaveDensity::Exponential { rates } => (-dot(rates, x)).exp(),
            LogConcaveDensity::Custom(f) => f(x),
        }
    }

    /// `F(mid)^2 >= F(x) F(y)` on random member pairs, with `1e-9` relative slack.
    pub fn log_concavity_spot_check(&self, body: &ConvexBody, trials: usize, rng: &mut RandomSource) -> bool {
        (0..trials).all(|_| {
            let x = body.rejection_sample(rng);
            let y = body.rejection_sample(rng);
            let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
            let lhs = self.eval(&mid).powi(2);
            let rhs = self.eval(&x) * self.eval(&y);
            lhs >= rhs * (1.0 - 1e-9)
        })
    }
}

/// Uniform point of the solid ball: an isotropic direction from normalised
/// normal deviates, at radius `delta U^{1/n}`.
pub fn uniform_in_ball(center: &[f64], delta: f64, rng: &mut RandomSource) -> Vec<f64> {
    let mut out = vec![0.0; center.len()];
    uniform_in_ball_into(center, delta, rng, &mut out);
    out
}

fn uniform_in_ball_into(center: &[f64], delta: f64, rng: &mut RandomSource, out: &mut [f64]) {
    let n = center.len();
    let mut norm2 = 0.0;
    while norm2 == 0.0 {
        norm2 = 0.0;
        for o in out.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *o = z;
            norm2 += z * z;
        }
    }
    let radius = delta * rng.random::<f64>().powf(1.0 / n as f64);
    let scale = radius / norm2.sqrt();
    for (o, c) in out.iter_mut().zip(center) {
        *o = c + *o * scale;
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("step size must be positive, got {delta}")))
    }
}

fn check_start(body: &ConvexBody, x: &[f64]) -> Result<()> {
    if x.len() != body.dim() {
        return Err(Error::DimensionMismatch {
            expected: body.dim(),
            got: x.len(),
        });
    }
    if !body.contains(x) {
        return Err(Error::StartOutsideBody);
    }
    Ok(())
}

/// Propose uniformly in `Ball(x, delta)`, move if the proposal is a member.
pub fn ball_walk_step(body: &ConvexBody, x: &[f64], delta: f64, rng: &mut RandomSource) -> Result<Vec<f64>> {
    check_start(body, x)?;
    check_delta(delta)?;
    let y = uniform_in_ball(x, delta, rng);
    Ok(if body.contains(&y) { y } else { x.to_vec() })
}

/// Ball-walk proposal thinned by `min(1, F(y)/F(x))`. The accept uniform is
/// drawn only when the ratio is below 1, so `F = 1` reproduces the ball walk
/// draw for draw.
pub fn metropolis_walk_step(
    body: &ConvexBody,
    density: &LogConcaveDensity,
    x: &[f64],
    delta: f64,
    rng: &mut RandomSource,
) -> Result<Vec<f64>> {
    check_start(body, x)?;
    check_delta(delta)?;
    let y = uniform_in_ball(x, delta, rng);
    Ok(if metropolis_accept(body, density, x, &y, rng) { y } else { x.to_vec() })
}

fn metropolis_accept(body: &ConvexBody, density: &LogConcaveDensity, x: &[f64], y: &[f64], rng: &mut RandomSource) -> bool {
    if !body.contains(y) {
        return false;
    }
    let ratio = density.eval(y) / density.eval(x);
    ratio >= 1.0 || rng.random::<f64>() < ratio
}

/// Integer coordinates on the lattice `origin + delta Z^n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPoint(pub Vec<i64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub origin: Vec<f64>,
    pub delta: f64,
}

impl Lattice {
    pub fn new(origin: Vec<f64>, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        Ok(Lattice { origin, delta })
    }

    pub fn point(&self, g: &GridPoint) -> Vec<f64> {
        self.origin.iter().zip(&g.0).map(|(o, &k)| o + self.delta * k as f64).collect()
    }
}

/// Pick one of the `2n` coordinate neighbours uniformly and move there if it
/// is a member.
pub fn coordinate_walk_step(
    body: &ConvexBody,
    lattice: &Lattice,
    x: &GridPoint,
    rng: &mut RandomSource,
) -> Result<GridPoint> {
    if x.0.len() != body.dim() || lattice.origin.len() != body.dim() {
        return Err(Error::DimensionMismatch {
            expected: body.dim(),
            got: x.0.len(),
        });
    }
    if !body.contains(&lattice.point(x)) {
        return Err(Error::StartOutsideBody);
    }
    let k = rng.random_range(0..2 * x.0.len());
    let mut y = x.clone();
    y.0[k / 2] += if k % 2 == 0 { 1 } else { -1 };
    Ok(if body.contains(&lattice.point(&y)) { y } else { x.clone() })
}

/// The coordinate walk on the member grid points reachable from `start`.
pub fn grid_chain(body: &ConvexBody, lattice: &Lattice, start: &GridPoint) -> Result<(FiniteChain, Vec<GridPoint>)> {
    if !body.contains(&lattice.point(start)) {
        return Err(Error::StartOutsideBody);
    }
    let n = start.0.len();
    let mut index: HashMap<GridPoint, usize> = HashMap::new();
    let mut points = vec![start.clone()];
    index.insert(start.clone(), 0);
    let mut queue = VecDeque::from([0usize]);
    let mut moves: Vec<Vec<usize>> = Vec::new();
    while let Some(i) = queue.pop_front() {
        let mut out = Vec::new();
        for k in 0..2 * n {
            let mut y = points[i].clone();
            y.0[k / 2] += if k % 2 == 0 { 1 } else { -1 };
            if !body.contains(&lattice.point(&y)) {
                out.push(i);
                continue;
            }
            let j = match index.get(&y) {
                Some(&j) => j,
                None => {
                    let j = points.len();
                    too_large("grid chain states", j + 1, GRID_CHAIN_GUARD)?;
                    index.insert(y.clone(), j);
                    points.push(y);
                    queue.push_back(j);
                    j
                }
            };
            out.push(j);
        }
        if moves.len() <= i {
            moves.resize(i + 1, Vec::new());
        }
        moves[i] = out;
    }
    let size = points.len();
    let mut t = vec![0.0; size * size];
    for (i, out) in moves.iter().enumerate() {
        for &j in out {
            t[i * size + j] += 1.0 / (2 * n) as f64;
        }
    }
    Ok((FiniteChain::from_flat(size, t), points))
}

/// `vol(Ball(0, radius))` in `n` dimensions.
pub fn ball_volume(n: usize, radius: f64) -> f64 {
    let unit = match n {
        0 => 1.0,
        1 => 2.0,
        _ => {
            let (mut v, start) = if n % 2 == 0 { (1.0, 2) } else { (2.0, 3) };
            for k in (start..=n).step_by(2) {
                v *= 2.0 * PI / k as f64;
            }
            v
        }
    };
    unit * radius.powi(n as i32)
}

/// Membership probes confirming `Ball(c, r) <= K <= Ball(c, R)`.
pub fn check_rounding(body: &ConvexBody, rng: &mut RandomSource) -> Result<()> {
    let n = body.dim();
    let c = body.center();
    let (r, big_r) = (body.inner_radius(), body.outer_radius());
    if !(r > 0.0 && r <= big_r && big_r.is_finite()) {
        return Err(Error::BadRounding(format!("need 0 < r <= R, got r={r} R={big_r}")));
    }
    if !body.contains(&c) {
        return Err(Error::BadRounding("center is not a member".into()));
    }
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for j in 0..n {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; n];
            d[j] = s;
            dirs.push(d);
        }
    }
    for _ in 0..ROUNDING_PROBES {
        let mut d: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            d.iter_mut().for_each(|x| *x /= norm);
            dirs.push(d);
        }
    }
    let at = |d: &[f64], rho: f64| -> Vec<f64> { c.iter().zip(d).map(|(ci, di)| ci + rho * di).collect() };
    for d in &dirs {
        if !body.contains(&at(d, r * (1.0 - 1e-9))) {
            return Err(Error::BadRounding(format!("a point at distance {r} from the center is outside")));
        }
        if body.contains(&at(d, big_r * (1.0 + 1e-6))) {
            return Err(Error::BadRounding(format!("a point beyond distance {big_r} is inside")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseEstimate {
    pub radius: f64,
    /// Estimate of `vol(K_{i-1}) / vol(K_i)`.
    pub ratio: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub estimate: f64,
    pub base_volume: f64,
    pub phases: Vec<PhaseEstimate>,
    pub steps_used: usize,
}

/// Samples per phase for relative error `eps` over `m` phases. Each ratio is
/// at least 1/2, so its relative variance is at most `1/N` for independent
/// samples; the factor 12 leaves room for correlation between thinned walk
/// samples.
pub fn volume_samples_per_phase(m: usize, eps: f64) -> usize {
    (12.0 * m.max(1) as f64 / (eps * eps)).ceil() as usize
}

/// Multiphase estimator over `K_i = K ∩ Ball(c, r 2^{i/n})`, `i = 0..=m`,
/// `m = ceil(n log2(R/r))`, with `c` the body's center. `K_0` is the ball
/// `Ball(c, r)`; each ratio `vol(K_{i-1}) / vol(K_i)` is the fraction of
/// ball-walk samples from `K_i` that land in `K_{i-1}`.
pub fn volume_estimate(body: &ConvexBody, eps: f64, rng: &mut RandomSource) -> Result<VolumeEstimate> {
    let n = body.dim();
    too_large("volume dimension", n, VOLUME_DIMENSION_GUARD)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidModel(format!("eps must be positive, got {eps}")));
    }
    check_rounding(body, rng)?;
    let c = body.center();
    let (r, big_r) = (body.inner_radius(), body.outer_radius());
    let nf = n as f64;
    let m = (nf * (big_r / r).log2()).ceil().max(0.0) as usize;
    let base_volume = ball_volume(n, r);
    let per_phase = volume_samples_per_phase(m, eps);
    let thin = 4 * n * n;

    let mut x = c.clone();
    let mut y = vec![0.0; n];
    let mut phases = Vec::with_capacity(m);
    let mut estimate = base_volume;
    let mut steps_used = 0;
    for i in 1..=m {
        let radius = r * 2f64.powf(i as f64 / nf);
        let inner = r * 2f64.powf((i - 1) as f64 / nf);
        let (rad2, inner2) = (radius * radius, inner * inner);
        let delta = radius / nf.sqrt();
        let mut walk = |x: &mut Vec<f64>, y: &mut Vec<f64>, steps: usize| {
            for _ in 0..steps {
                uniform_in_ball_into(x, delta, rng, y);
                if dist2(y, &c) <= rad2 && body.contains(y) {
                    std::mem::swap(x, y);
                }
            }
        };
        walk(&mut x, &mut y, thin * n);
        let mut hits = 0;
        for _ in 0..per_phase {
            walk(&mut x, &mut y, thin);
            if dist2(&x, &c) <= inner2 {
                hits += 1;
            }
        }
        steps_used += thin * (n + per_phase);
        let ratio = hits as f64 / per_phase as f64;
        if ratio == 0.0 {
            return Err(Error::BadRounding(format!("no samples landed in phase {}", i - 1)));
        }
        estimate /= ratio;
        phases.push(PhaseEstimate {
            radius,
            ratio,
            samples: per_phase,
        });
    }
    Ok(VolumeEstimate {
        estimate,
        base_volume,
        phases,
        steps_used,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutSide {
    /// `S = {x : x_axis <= value}`.
    Lower,
    /// `S = {x : x_axis >= value}`.
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfspaceCut {
    pub axis: usize,
    pub value: f64,
    pub side: CutSide,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutReport {
    pub cut: HalfspaceCut,
    /// `F` integrated over the section `x_axis = value` inside the box.
    pub boundary: f64,
    /// `F` integrated over `S`.
    pub mass: f64,
    pub total: f64,
    /// `(2/d) mass`.
    pub rhs: f64,
    pub margin: f64,
    pub holds: bool,
}

/// `int_l^h exp(-a t) dt`.
fn exp_integral(a: f64, l: f64, h: f64) -> f64 {
    if a == 0.0 {
        h - l
    } else {
        ((-a * l).exp() - (-a * h).exp()) / a
    }
}

/// Closed-form check of `int_{dS} F >= (2/d) int_S F` for halfspace cuts of a
/// box, where `d` is the box diagonal and `F` is uniform or a product of
/// exponentials.
pub fn isoperimetry_halfspace_check(
    body: &ConvexBody,
    density: &LogConcaveDensity,
    cuts: &[HalfspaceCut],
) -> Result<Vec<CutReport>> {
    let ConvexBody::Cube { low, high } = body else {
        return Err(Error::InvalidModel("halfspace checks need a box".into()));
    };
    let n = low.len();
    let rates = match density {
        LogConcaveDensity::Uniform => vec![0.0; n],
        LogConcaveDensity::Exponential { rates } if rates.len() == n => rates.clone(),
        LogConcaveDensity::Exponential { rates } => {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: rates.len(),
            })
        }
        LogConcaveDensity::Custom(_) => {
            return Err(Error::InvalidModel("halfspace checks need a closed-form density".into()))
        }
    };
    let d = body.diameter_bound();
    let factors: Vec<f64> = (0..n).map(|i| exp_integral(rates[i], low[i], high[i])).collect();
    let total: f64 = factors.iter().product();
    cuts.iter()
        .map(|&cut| {
            let k = cut.axis;
            if k >= n || !(low[k] < cut.value && cut.value < high[k]) {
                return Err(Error::InvalidModel(format!("cut {cut:?} does not split the box")));
            }
            let others: f64 = (0..n).filter(|&i| i != k).map(|i| factors[i]).product();
            let boundary = (-rates[k] * cut.value).exp() * others;
            let along = match cut.side {
                CutSide::Lower => exp_integral(rates[k], low[k], cut.value),
                CutSide::Upper => exp_integral(rates[k], cut.value, high[k]),
            };
            let mass = along * others;
            if mass > 0.5 * total * (1.0 + 1e-12) {
                return Err(Error::CutTooLarge {
                    threshold: cut.value,
                    mass,
                    total,
                });
            }
            let rhs = 2.0 / d * mass;
            Ok(CutReport {
                cut,
                boundary,
                mass,
                total,
                rhs,
                margin: boundary - rhs,
                holds: boundary >= rhs,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkKind {
    Ball,
    Coordinate,
    Metropolis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub delta: f64,
    pub steps: usize,
    /// Defaults to the body's center.
    pub start: Option<Vec<f64>>,
}

pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkReport {
    pub kind: WalkKind,
    pub trajectory: Vec<Vec<f64>>,
    /// Fraction of steps that moved.
    pub acceptance_rate: f64,
    /// Mean Euclidean length of a step, stays included.
    pub mean_displacement: f64,
    /// Per-axis occupancy counts over `[c_j - R, c_j + R]` in equal bins.
    pub histograms: Vec<Vec<usize>>,
}

pub fn run_walk(
    body: &ConvexBody,
    config: &WalkConfig,
    kind: WalkKind,
    density: Option<&LogConcaveDensity>,
    rng: &mut RandomSource,
) -> Result<WalkReport> {
    check_delta(config.delta)?;
    let start = config.start.clone().unwrap_or_else(|| body.center());
    check_start(body, &start)?;
    let uniform = LogConcaveDensity::Uniform;
    let density = density.unwrap_or(&uniform);
    let lattice = Lattice::new(start.clone(), config.delta)?;
    let mut grid = GridPoint(vec![0; start.len()]);
    let mut trajectory = Vec::with_capacity(config.steps + 1);
    trajectory.push(start);
    let mut moved = 0;
    let mut travelled = 0.0;
    for _ in 0..config.steps {
        let x = trajectory.last().expect("nonempty");
        let y = match kind {
            WalkKind::Ball => ball_walk_step(body, x, config.delta, rng)?,
            WalkKind::Metropolis => metropolis_walk_step(body, density, x, config.delta, rng)?,
            WalkKind::Coordinate => {
                grid = coordinate_walk_step(body, &lattice, &grid, rng)?;
                lattice.point(&grid)
            }
        };
        let step = dist2(x, &y).sqrt();
        if step > 0.0 {
            moved += 1;
        }
        travelled += step;
        trajectory.push(y);
    }
    let c = body.center();
    let big_r = body.outer_radius();
    let mut histograms = vec![vec![0usize; HISTOGRAM_BINS]; c.len()];
    for x in &trajectory {
        for (j, h) in histograms.iter_mut().enumerate() {
            let u = (x[j] - (c[j] - big_r)) / (2.0 * big_r);
            let bin = ((u * HISTOGRAM_BINS as f64).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
            h[bin] += 1;
        }
    }
    let steps = config.steps.max(1) as f64;
    Ok(WalkReport {
        kind,
        trajectory,
        acceptance_rate: if config.steps == 0 { 0.0 } else { moved as f64 / steps },
        mean_displacement: if config.steps == 0 { 0.0 } else { travelled / steps },
        histograms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn body_geometry() {
        let c = ConvexBody::unit_cube(4);
        assert_eq!(c.center(), vec![0.5; 4]);
        assert_eq!(c.inner_radius(), 0.5);
        assert_abs_diff_eq!(c.outer_radius(), 1.0, epsilon = 1e-15);
        assert!(c.contains(&[0.0, 1.0, 0.5, 0.5]));
        assert!(!c.contains(&[0.0, 1.0 + 1e-12, 0.5, 0.5]));

        let s = ConvexBody::simplex(3);
        let mut rng = RandomSource::new(1);
        check_rounding(&s, &mut rng).unwrap();
        check_rounding(&ConvexBody::unit_ball(3), &mut rng).unwrap();
        check_rounding(&c, &mut rng).unwrap();

        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let e = ConvexBody::affine(ConvexBody::unit_ball(2), m, DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!(e.contains(&[2.9, 1.0]) && !e.contains(&[1.0, 1.6]));
        assert_abs_diff_eq!(e.inner_radius(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(e.outer_radius(), 2.0, epsilon = 1e-12);
        check_rounding(&e, &mut rng).unwrap();

        let wrong = ConvexBody::halfspaces(vec![vec![1.0], vec![-1.0]], vec![1.0, 1.0], vec![0.0], 0.5, 0.9).unwrap();
        assert!(matches!(check_rounding(&wrong, &mut rng), Err(Error::BadRounding(_))));
        let wrong = ConvexBody::halfspaces(vec![vec![1.0], vec![-1.0]], vec![1.0, 1.0], vec![0.0], 1.2, 1.5).unwrap();
        assert!(matches!(check_rounding(&wrong, &mut rng), Err(Error::BadRounding(_))));
    }

    #[test]
    fn membership_matches_representation() {
        let mut rng = RandomSource::new(2);
        let s = ConvexBody::simplex(3);
        let b = ConvexBody::ball(vec![1.0, -1.0, 0.5], 2.0).unwrap();
        for _ in 0..1000 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..3.5)).collect();
            let in_simplex = x.iter().all(|&v| v >= 0.0) && x.iter().sum::<f64>() <= 1.0;
            assert_eq!(s.contains(&x), in_simplex);
            let d = ((x[0] - 1.0).powi(2) + (x[1] + 1.0).powi(2) + (x[2] - 0.5).powi(2)).sqrt();
            assert_eq!(b.contains(&x), d <= 2.0);
        }
        for body in [s, b, ConvexBody::unit_cube(3)] {
            assert!(body.convexity_spot_check(300, &mut rng));
        }
    }

    #[test]
    fn ball_volumes() {
        assert_abs_diff_eq!(ball_volume(1, 1.0), 2.0);
        assert_abs_diff_eq!(ball_volume(2, 1.0), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(ball_volume(3, 1.0), 4.0 * PI / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ball_volume(4, 2.0), PI * PI / 2.0 * 16.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ball_volume(5, 1.0), 8.0 * PI * PI / 15.0, epsilon = 1e-14);
    }

    #[test]
    fn uniform_ball_draws() {
        let mut rng = RandomSource::new(3);
        let c = [1.0, 2.0, 3.0];
        let draws = 100_000;
        let mut mean = [0.0; 3];
        for _ in 0..draws {
            let y = uniform_in_ball(&c, 0.5, &mut rng);
            assert!(dist2(&y, &c) <= 0.25 + 1e-15);
            for j in 0..3 {
                mean[j] += y[j] / draws as f64;
            }
        }
        // coordinate variance in a 3-ball of radius rho is rho^2 / 5
        let se = (0.25f64 / 5.0 / draws as f64).sqrt();
        for j in 0..3 {
            assert!((mean[j] - c[j]).abs() <= 3.0 * se, "{mean:?}");
        }

        // one dimension: uniform on [c - delta, c + delta]
        let mut bins = [0usize; 10];
        for _ in 0..draws {
            let y = uniform_in_ball(&[0.0], 1.0, &mut rng)[0];
            bins[(((y + 1.0) / 2.0 * 10.0) as usize).min(9)] += 1;
        }
        let mut cdf = 0.0;
        let mut ks: f64 = 0.0;
        for (k, &b) in bins.iter().enumerate() {
            cdf += b as f64 / draws as f64;
            ks = ks.max((cdf - (k + 1) as f64 / 10.0).abs());
        }
        assert!(ks < 1.36 / (draws as f64).sqrt(), "{ks}");
    }

    #[test]
    fn ball_walk_rules() {
        let mut rng = RandomSource::new(4);
        let huge = ConvexBody::ball(vec![0.0; 2], 1e6).unwrap();
        let mut x = vec![0.0; 2];
        let mut moved = 0;
        for _ in 0..1000 {
            let y = ball_walk_step(&huge, &x, 0.1, &mut rng).unwrap();
            moved += (y != x) as usize;
            x = y;
        }
        assert_eq!(moved, 1000);
        assert!(matches!(
            ball_walk_step(&ConvexBody::unit_cube(2), &[2.0, 0.0], 0.1, &mut rng),
            Err(Error::StartOutsideBody)
        ));
        // a point on the face with a tiny cube in front: most proposals leave
        let thin = ConvexBody::cube(vec![0.0, 0.0], vec![1e-6, 1.0]).unwrap();
        let x = vec![0.0, 0.5];
        let stays = (0..200).filter(|_| ball_walk_step(&thin, &x, 0.5, &mut rng).unwrap() == x).count();
        assert!(stays > 190);
    }

    #[test]
    fn ball_walk_halves_balance() {
        let mut rng = RandomSource::new(5);
        let body = ConvexBody::cube(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let cfg = WalkConfig {
            delta: 0.5,
            steps: 200_000,
            start: Some(vec![0.9, 0.9]),
        };
        let r = run_walk(&body, &cfg, WalkKind::Ball, None, &mut rng).unwrap();
        let left = r.trajectory.iter().filter(|x| x[0] < 0.0).count() as f64 / r.trajectory.len() as f64;
        assert!((left - 0.5).abs() < 0.02, "{left}");
    }

    #[test]
    fn coordinate_walk_rules() {
        let mut rng = RandomSource::new(6);
        let body = ConvexBody::unit_cube(2);
        let lat = Lattice::new(vec![0.0, 0.0], 0.25).unwrap();
        let corner = GridPoint(vec![0, 0]);
        let trials = 40_000;
        let stays = (0..trials)
            .filter(|_| coordinate_walk_step(&body, &lat, &corner, &mut rng).unwrap() == corner)
            .count();
        assert!((stays as f64 / trials as f64 - 0.5).abs() < 0.01);

        let mid = GridPoint(vec![2, 2]);
        let mut counts: HashMap<GridPoint, usize> = HashMap::new();
        for _ in 0..trials {
            *counts.entry(coordinate_walk_step(&body, &lat, &mid, &mut rng).unwrap()).or_default() += 1;
        }
        assert_eq!(counts.len(), 4);
        for c in counts.values() {
            assert!((*c as f64 / trials as f64 - 0.25).abs() < 0.01);
        }
        assert!(matches!(
            coordinate_walk_step(&body, &lat, &GridPoint(vec![5, 0]), &mut rng),
            Err(Error::StartOutsideBody)
        ));
    }

    #[test]
    fn grid_chain_is_uniform() {
        let body = ConvexBody::unit_cube(2);
        let lat = Lattice::new(vec![0.0, 0.0], 0.25).unwrap();
        let (chain, pts) = grid_chain(&body, &lat, &GridPoint(vec![0, 0])).unwrap();
        assert_eq!(pts.len(), 25);
        let pi = chain.stationary().unwrap();
        for &p in pi.as_slice() {
            assert_abs_diff_eq!(p, 1.0 / 25.0, epsilon = 1e-12);
        }
        // the triangle {x >= 0, y >= 0, x + y <= 1}
        let tri = ConvexBody::simplex(2);
        let (chain, pts) = grid_chain(&tri, &lat, &GridPoint(vec![0, 0])).unwrap();
        assert_eq!(pts.len(), 15);
        let pi = chain.stationary().unwrap();
        for &p in pi.as_slice() {
            assert_abs_diff_eq!(p, 1.0 / 15.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn metropolis_with_flat_density_is_the_ball_walk() {
        let body = ConvexBody::simplex(3);
        let start = body.center();
        let cfg = WalkConfig {
            delta: 0.3,
            steps: 5_000,
            start: Some(start),
        };
        let a = run_walk(&body, &cfg, WalkKind::Ball, None, &mut RandomSource::new(7)).unwrap();
        let b = run_walk(&body, &cfg, WalkKind::Metropolis, Some(&LogConcaveDensity::Uniform), &mut RandomSource::new(7))
            .unwrap();
        assert_eq!(a.trajectory, b.trajectory);
    }

    #[test]
    fn metropolis_uphill_always_accepted() {
        let mut rng = RandomSource::new(8);
        let body = ConvexBody::unit_cube(1);
        let f = LogConcaveDensity::Exponential { rates: vec![1.0] };
        for _ in 0..1000 {
            let y = uniform_in_ball(&[0.6], 0.1, &mut rng);
            if y[0] <= 0.6 {
                assert!(metropolis_accept(&body, &f, &[0.6], &y, &mut rng));
            }
        }
    }

    #[test]
    fn metropolis_matches_exponential_density() {
        let mut rng = RandomSource::new(9);
        let body = ConvexBody::unit_cube(1);
        let f = LogConcaveDensity::Exponential { rates: vec![1.0] };
        let cfg = WalkConfig {
            delta: 0.3,
            steps: 1_000_000,
            start: None,
        };
        let r = run_walk(&body, &cfg, WalkKind::Metropolis, Some(&f), &mut rng).unwrap();
        let l1 = exponential_histogram_l1(&r.trajectory, 20);
        assert!(l1 <= 0.05, "{l1}");
    }

    /// L1 distance between a histogram of points in [0,1] and `e^{-x}` normalised.
    pub(crate) fn exponential_histogram_l1(points: &[Vec<f64>], bins: usize) -> f64 {
        let mut counts = vec![0.0; bins];
        for p in points {
            counts[((p[0] * bins as f64) as usize).min(bins - 1)] += 1.0;
        }
        let z = 1.0 - (-1.0f64).exp();
        (0..bins)
            .map(|k| {
                let (a, b) = (k as f64 / bins as f64, (k + 1) as f64 / bins as f64);
                let exact = ((-a).exp() - (-b).exp()) / z;
                (counts[k] / points.len() as f64 - exact).abs()
            })
            .sum()
    }

    #[test]
    fn log_concavity_checks() {
        let mut rng = RandomSource::new(10);
        let body = ConvexBody::unit_cube(2);
        assert!(LogConcaveDensity::Exponential { rates: vec![1.0, -2.0] }.log_concavity_spot_check(&body, 200, &mut rng));
        let gauss = LogConcaveDensity::Custom(Arc::new(|x: &[f64]| (-dot(x, x)).exp()));
        assert!(gauss.log_concavity_spot_check(&body, 200, &mut rng));
        let bimodal = LogConcaveDensity::Custom(Arc::new(|x: &[f64]| (-(x[0] - 0.1).powi(2) * 50.0).exp() + (-(x[0] - 0.9).powi(2) * 50.0).exp()));
        assert!(!bimodal.log_concavity_spot_check(&body, 500, &mut rng));
    }

    #[test]
    fn volume_examples() {
        let mut rng = RandomSource::new(11);
        for n in 1..=4 {
            let v = volume_estimate(&ConvexBody::unit_cube(n), 0.1, &mut rng).unwrap();
            assert!((v.estimate - 1.0).abs() <= 0.1, "n={n} {v:?}");
        }
        let v = volume_estimate(&ConvexBody::unit_ball(3), 0.1, &mut rng).unwrap();
        assert_abs_diff_eq!(v.estimate, 4.0 * PI / 3.0, epsilon = 1e-12);
        let v = volume_estimate(&ConvexBody::simplex(3), 0.1, &mut rng).unwrap();
        assert!((v.estimate * 6.0 - 1.0).abs() <= 0.1, "{v:?}");

        let bad = ConvexBody::halfspaces(vec![vec![1.0], vec![-1.0]], vec![1.0, 1.0], vec![0.0], 0.5, 0.9).unwrap();
        assert!(matches!(volume_estimate(&bad, 0.1, &mut rng), Err(Error::BadRounding(_))));
        assert!(matches!(volume_estimate(&ConvexBody::unit_cube(9), 0.1, &mut rng), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn isoperimetry_examples() {
        let sq = ConvexBody::unit_cube(2);
        let r = isoperimetry_halfspace_check(
            &sq,
            &LogConcaveDensity::Uniform,
            &[HalfspaceCut {
                axis: 0,
                value: 0.3,
                side: CutSide::Lower,
            }],
        )
        .unwrap();
        assert_abs_diff_eq!(r[0].boundary, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r[0].rhs, 2.0 / 2f64.sqrt() * 0.3, epsilon = 1e-12);
        assert!(r[0].holds);

        let margins: Vec<f64> = [0.3, 0.1, 0.01, 1e-4]
            .iter()
            .map(|&s| {
                let cut = HalfspaceCut {
                    axis: 0,
                    value: s,
                    side: CutSide::Lower,
                };
                isoperimetry_halfspace_check(&sq, &LogConcaveDensity::Uniform, &[cut]).unwrap()[0].margin
            })
            .collect();
        assert!(margins.windows(2).all(|w| w[1] > w[0]));

        // [0,1] with F = e^{-x}: the lower half-line at 0.5 carries more than half the mass
        let seg = ConvexBody::unit_cube(1);
        let f = LogConcaveDensity::Exponential { rates: vec![1.0] };
        let lower = HalfspaceCut {
            axis: 0,
            value: 0.5,
            side: CutSide::Lower,
        };
        assert!(matches!(isoperimetry_halfspace_check(&seg, &f, &[lower]), Err(Error::CutTooLarge { .. })));
        let upper = HalfspaceCut {
            side: CutSide::Upper,
            ..lower
        };
        let r = isoperimetry_halfspace_check(&seg, &f, &[upper]).unwrap()[0];
        assert_abs_diff_eq!(r.boundary, (-0.5f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(r.mass, (-0.5f64).exp() - (-1.0f64).exp(), epsilon = 1e-15);
        assert!(r.holds && r.margin > 0.0);
    }

    proptest! {
        #[test]
        fn halfspace_cuts_satisfy_isoperimetry(seed in any::<u64>()) {
            let mut rng = RandomSource::new(seed);
            let n = rng.random_range(1..=4);
            let low: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..0.0)).collect();
            let high: Vec<f64> = low.iter().map(|l| l + rng.random_range(0.1..3.0)).collect();
            let body = ConvexBody::cube(low.clone(), high.clone()).unwrap();
            let rates: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let f = LogConcaveDensity::Exponential { rates };
            let axis = rng.random_range(0..n);
            let value = rng.random_range(low[axis]..high[axis]);
            for side in [CutSide::Lower, CutSide::Upper] {
                match isoperimetry_halfspace_check(&body, &f, &[HalfspaceCut { axis, value, side }]) {
                    Ok(r) => prop_assert!(r[0].holds, "{:?}", r[0]),
                    Err(Error::CutTooLarge { .. }) => {}
                    Err(e) => prop_assert!(false, "{e}"),
                }
            }
        }

        #[test]
        fn trajectories_stay_inside(seed in any::<u64>(), kind in 0usize..3) {
            let mut rng = RandomSource::new(seed);
            let body = ConvexBody::simplex(3);
            let kind = [WalkKind::Ball, WalkKind::Coordinate, WalkKind::Metropolis][kind];
            let f = LogConcaveDensity::Exponential { rates: vec![1.0, 0.5, -1.0] };
            let cfg = WalkConfig { delta: 0.05, steps: 2_000, start: None };
            let r = run_walk(&body, &cfg, kind, Some(&f), &mut rng).unwrap();
            prop_assert!(r.trajectory.iter().all(|x| body.contains(x)));
        }
    }

    #[test]
    fn run_walk_examples() {
        let body = ConvexBody::unit_cube(2);
        let cfg = WalkConfig {
            delta: 0.1,
            steps: 0,
            start: None,
        };
        let r = run_walk(&body, &cfg, WalkKind::Ball, None, &mut RandomSource::new(12)).unwrap();
        assert_eq!(r.trajectory, vec![vec![0.5, 0.5]]);

        let cfg = WalkConfig { steps: 500, ..cfg };
        let a = run_walk(&body, &cfg, WalkKind::Coordinate, None, &mut RandomSource::new(13)).unwrap();
        let b = run_walk(&body, &cfg, WalkKind::Coordinate, None, &mut RandomSource::new(13)).unwrap();
        assert_eq!(a, b);

        let rates: Vec<f64> = [0.05, 0.2, 0.8]
            .iter()
            .map(|&delta| {
                let cfg = WalkConfig {
                    delta,
                    steps: 20_000,
                    start: None,
                };
                run_walk(&body, &cfg, WalkKind::Ball, None, &mut RandomSource::new(14)).unwrap().acceptance_rate
            })
            .collect();
        assert!(rates.windows(2).all(|w| w[1] < w[0]), "{rates:?}");
        assert_eq!(a.histograms.len(), 2);
        assert_eq!(a.histograms[0].iter().sum::<usize>(), 501);
    }
}
