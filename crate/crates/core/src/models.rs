//! Stock chains: hypercube and cycle walks, and random reversible chains for sweeps.

use rand::Rng;

use crate::chain::FiniteChain;
use crate::rng::RandomSource;

/// Lazy walk on `{0,1}^n`: hold with probability 1/2, otherwise flip a uniform coordinate.
/// State `x` is the integer whose bits are the coordinates.
pub fn hypercube_walk(n: usize) -> FiniteChain {
    assert!((1..=12).contains(&n), "hypercube dimension {n} out of range");
    let size = 1usize << n;
    let mut t = vec![0.0; size * size];
    let step = 1.0 / (2.0 * n as f64);
    for x in 0..size {
        t[x * size + x] = 0.5;
        for j in 0..n {
            t[x * size + (x ^ (1 << j))] = step;
        }
    }
    FiniteChain::from_flat(size, t)
}

/// Lazy simple walk on the `n`-cycle: hold 1/2, each neighbour 1/4.
pub fn cycle_walk(n: usize) -> FiniteChain {
    assert!(n >= 1);
    let mut t = vec![0.0; n * n];
    for i in 0..n {
        t[i * n + i] += 0.5;
        t[i * n + (i + 1) % n] += 0.25;
        t[i * n + (i + n - 1) % n] += 0.25;
    }
    FiniteChain::from_flat(n, t)
}

/// Random walk on a random connected weighted graph with self-loops.
///
/// Reversible with respect to the weighted degrees. With `lazy` the walk is
/// lazified, so every holding probability is at least 1/2.
pub fn random_reversible_chain(n: usize, lazy: bool, rng: &mut RandomSource) -> FiniteChain {
    assert!(n >= 1);
    let mut w = vec![0.0; n * n];
    let link = |w: &mut Vec<f64>, a: usize, b: usize, v: f64| {
        w[a * n + b] = v;
        w[b * n + a] = v;
    };
    for i in 1..n {
        let parent = rng.random_range(0..i);
        let v = rng.random_range(0.1..1.0);
        link(&mut w, i, parent, v);
    }
    for a in 0..n {
        for b in a + 1..n {
            if w[a * n + b] == 0.0 && rng.random_bool(0.4) {
                let v = rng.random_range(0.05..1.0);
                link(&mut w, a, b, v);
            }
        }
        if rng.random_bool(0.5) {
            w[a * n + a] = rng.random_range(0.0..1.0);
        }
    }
    let mut t = vec![0.0; n * n];
    for a in 0..n {
        let deg: f64 = w[a * n..(a + 1) * n].iter().sum();
        if deg == 0.0 {
            t[a * n + a] = 1.0;
            continue;
        }
        for b in 0..n {
            t[a * n + b] = w[a * n + b] / deg;
        }
    }
    let chain = FiniteChain::from_flat(n, t);
    if lazy {
        chain.lazify()
    } else {
        chain
    }
}
