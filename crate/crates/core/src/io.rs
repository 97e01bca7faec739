//! JSON input formats.
//!
//! Vertex, node and state indices are 0-based everywhere.
//!
//! | input    | shape |
//! |----------|-------|
//! | chain    | `{"n": 2, "P": [[..], ..], "labels": [..]}` (`labels` optional) |
//! | matrix   | `{"n": 3, "A": [[..], ..]}` or `{"n": 3, "edges": [[i, j, w], ..]}` |
//! | ising    | `{"n": 2, "V": [[..], ..], "B": 0.0, "beta": 1.0}` |
//! | world    | `{"nodes": 3, "edges": [[u, v, w], ..], "mu": 0.5}` |
//! | body     | `{"type": "cube", "low": [..], "high": [..]}`, `{"type": "ball", "center": [..], "radius": 1}`, `{"type": "halfspaces", "A": [[..]], "b": [..], "r": r, "R": R, "center": [..]}` |
//! | coupling | a chain, or `{"hypercube": {"n": 4}}` |

use serde::Deserialize;

use crate::chain::FiniteChain;
use crate::coupling::{hypercube_coupling_rule, CouplingRule, HypercubeCoupling, SharedUniformCoupling};
use crate::error::{Error, Result};
use crate::geometry::ConvexBody;
use crate::ising::{IsingProblem, SubgraphWorld};
use crate::matching::BipartiteGraph;

/// Row-sum tolerance for chains read from files.
pub const INPUT_ROW_SUM_TOL: f64 = 1e-9;

fn parse<'a, T: Deserialize<'a>>(text: &'a str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

fn check_n(name: &str, declared: Option<usize>, actual: usize) -> Result<()> {
    match declared {
        Some(n) if n != actual => Err(Error::Parse(format!("\"n\" is {n} but {name} has {actual} rows"))),
        _ => Ok(()),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainFile {
    n: Option<usize>,
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    labels: Option<Vec<String>>,
}

pub fn parse_chain(text: &str) -> Result<FiniteChain> {
    let f: ChainFile = parse(text)?;
    check_n("P", f.n, f.p.len())?;
    let chain = FiniteChain::with_tolerance(f.p, INPUT_ROW_SUM_TOL)?;
    match f.labels {
        Some(l) => chain.with_labels(l),
        None => Ok(chain),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixFile {
    n: Option<usize>,
    #[serde(rename = "A")]
    a: Option<Vec<Vec<f64>>>,
    edges: Option<Vec<(usize, usize, f64)>>,
}

/// A square nonnegative matrix, from either a dense or an edge-list file.
pub fn parse_matrix(text: &str) -> Result<Vec<Vec<f64>>> {
    let f: MatrixFile = parse(text)?;
    match (f.a, f.edges) {
        (Some(a), None) => {
            check_n("A", f.n, a.len())?;
            Ok(a)
        }
        (None, Some(edges)) => {
            let n = f.n.ok_or_else(|| Error::Parse("edge-list matrix needs \"n\"".into()))?;
            let mut a = vec![vec![0.0; n]; n];
            for (i, j, w) in edges {
                if i >= n || j >= n {
                    return Err(Error::Parse(format!("edge ({i},{j}) outside n = {n}")));
                }
                a[i][j] = w;
            }
            Ok(a)
        }
        _ => Err(Error::Parse("matrix needs exactly one of \"A\" and \"edges\"".into())),
    }
}

pub fn parse_graph(text: &str) -> Result<BipartiteGraph> {
    BipartiteGraph::from_matrix(&parse_matrix(text)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IsingFile {
    n: Option<usize>,
    #[serde(rename = "V")]
    v: Vec<Vec<f64>>,
    #[serde(rename = "B", default)]
    b: f64,
    beta: f64,
}

pub fn parse_ising(text: &str) -> Result<IsingProblem> {
    let f: IsingFile = parse(text)?;
    check_n("V", f.n, f.v.len())?;
    IsingProblem::new(f.v, f.b, f.beta)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldFile {
    nodes: usize,
    edges: Vec<(usize, usize, f64)>,
    mu: f64,
}

pub fn parse_world(text: &str) -> Result<SubgraphWorld> {
    let f: WorldFile = parse(text)?;
    SubgraphWorld::new(f.nodes, f.edges, f.mu)
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum BodyFile {
    Cube {
        low: Vec<f64>,
        high: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Halfspaces {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        r: f64,
        #[serde(rename = "R")]
        big_r: f64,
        center: Option<Vec<f64>>,
    },
}

/// Bodies without an explicit center for their radii are taken about the origin.
pub fn parse_body(text: &str) -> Result<ConvexBody> {
    match parse(text)? {
        BodyFile::Cube { low, high } => ConvexBody::cube(low, high),
        BodyFile::Ball { center, radius } => ConvexBody::ball(center, radius),
        BodyFile::Halfspaces { a, b, r, big_r, center } => {
            let n = a.first().map_or(0, Vec::len);
            ConvexBody::halfspaces(a, b, center.unwrap_or_else(|| vec![0.0; n]), r, big_r)
        }
    }
}

#[derive(Debug, Clone)]
pub enum CouplingInput {
    Chain(SharedUniformCoupling),
    Hypercube(HypercubeCoupling),
}

impl CouplingInput {
    pub fn rule(&self) -> &dyn CouplingRule {
        match self {
            CouplingInput::Chain(c) => c,
            CouplingInput::Hypercube(c) => c,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HypercubeFile {
    hypercube: HypercubeSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HypercubeSpec {
    n: usize,
}

/// A chain file gets the shared-uniform coupling; `{"hypercube": {"n": k}}`
/// gets the same-coordinate coupling of the lazy `k`-cube walk.
pub fn parse_coupling(text: &str) -> Result<CouplingInput> {
    if let Ok(h) = serde_json::from_str::<HypercubeFile>(text) {
        let n = h.hypercube.n;
        if !(1..=12).contains(&n) {
            return Err(Error::TooLarge {
                what: "hypercube dimension",
                size: n,
                limit: 12,
            });
        }
        return Ok(CouplingInput::Hypercube(hypercube_coupling_rule(n)));
    }
    Ok(CouplingInput::Chain(SharedUniformCoupling::new(parse_chain(text)?)))
}
