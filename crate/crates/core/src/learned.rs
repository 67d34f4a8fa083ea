//! Spanning trees fitted to a sample of queries, and their evaluation.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::counter::CountingIndex;
use crate::error::{Error, Result};
use crate::geom::{sq_dist, EpsParams, Seed, WeightedPointSet};
use crate::ptree::visiting_number;
use crate::spantree::{Edge, SpanningTree};
use crate::unionfind::UnionFind;

/// A nonempty list of query points of one dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct QuerySample {
    dim: usize,
    queries: Vec<Vec<f64>>,
    pub source: String,
}

impl QuerySample {
    pub fn new(queries: Vec<Vec<f64>>, source: impl Into<String>) -> Result<Self> {
        let dim = queries.first().map(Vec::len).unwrap_or(0);
        if dim == 0 {
            return Err(Error::contract("query sample must be nonempty"));
        }
        if let Some(q) = queries.iter().find(|q| q.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: q.len() });
        }
        if queries.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::contract("query coordinates must be finite"));
        }
        Ok(QuerySample {
            dim,
            queries,
            source: source.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn queries(&self) -> &[Vec<f64>] {
        &self.queries
    }

    pub fn map(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        QuerySample::new(self.queries.iter().map(|q| f(q)).collect(), self.source.clone())
    }

    /// Per-query fingerprints, used to detect holdout/training overlap.
    pub fn fingerprints(&self) -> BTreeSet<u64> {
        self.queries.iter().map(|q| fingerprint(q)).collect()
    }
}

pub(crate) fn fingerprint(q: &[f64]) -> u64 {
    let mut h = Sha256::new();
    for c in q {
        h.update(c.to_bits().to_le_bytes());
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

/// `ceil(multiplier · n · (d·log2 n + log2(1/δ)))`.
pub fn default_sample_size(n: usize, d: usize, delta: f64) -> Result<usize> {
    sample_size_with(n, d, delta, 1.0)
}

pub fn sample_size_with(n: usize, d: usize, delta: f64, multiplier: f64) -> Result<usize> {
    if n < 2 || d == 0 || !(delta > 0.0 && delta < 1.0) || !(multiplier > 0.0) {
        return Err(Error::contract(format!("invalid sample-size inputs n={n} d={d} delta={delta}")));
    }
    let n_f = n as f64;
    Ok((multiplier * n_f * (d as f64 * n_f.log2() + (1.0 / delta).log2())).ceil() as usize)
}

/// Symmetric matrix of per-pair stab counts over a query sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StabCountMatrix {
    n: usize,
    counts: Vec<u32>,
}

impl StabCountMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, a: usize, b: usize) -> u32 {
        self.counts[a * self.n + b]
    }

    /// Sum of counts over the edges of `edges`.
    pub fn weight_of(&self, edges: &[Edge]) -> u64 {
        edges.iter().map(|e| self.get(e.a, e.b) as u64).sum()
    }
}

/// `counts[a][b]` = number of sampled queries that ε-stab `{p_a, p_b}`.
pub fn pair_stab_counts(pts: &WeightedPointSet, sample: &QuerySample, params: &EpsParams) -> Result<StabCountMatrix> {
    if sample.dim() != pts.dim() {
        return Err(Error::DimensionMismatch {
            expected: pts.dim(),
            got: sample.dim(),
        });
    }
    let n = pts.len();
    let (inner, outer) = (params.inner_sq(), params.outer_sq());
    let counts = sample
        .queries()
        .par_iter()
        .fold(
            || vec![0u32; n * n],
            |mut acc, q| {
                let mut near = Vec::new();
                let mut far = Vec::new();
                for (i, p) in pts.points().enumerate() {
                    let d = sq_dist(p, q);
                    if d <= inner {
                        near.push(i);
                    } else if d >= outer {
                        far.push(i);
                    }
                }
                for &a in &near {
                    for &b in &far {
                        acc[a * n + b] += 1;
                        acc[b * n + a] += 1;
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0u32; n * n],
            |mut x, y| {
                x.iter_mut().zip(y).for_each(|(a, b)| *a += b);
                x
            },
        );
    Ok(StabCountMatrix { n, counts })
}

/// Kruskal on the complete graph weighted by `m`, ties broken by `(a, b)`.
pub fn minimum_spanning_tree(m: &StabCountMatrix) -> Result<SpanningTree> {
    let n = m.n();
    if n < 2 {
        return Err(Error::contract("spanning tree needs at least two points"));
    }
    let mut edges: Vec<(u32, usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            edges.push((m.get(a, b), a, b));
        }
    }
    edges.sort_unstable();
    let mut uf = UnionFind::new(n);
    let mut out = Vec::with_capacity(n - 1);
    for (_, a, b) in edges {
        if uf.union(a, b) {
            out.push(Edge { a, b });
            if out.len() == n - 1 {
                break;
            }
        }
    }
    SpanningTree::new(n, out)
}

pub fn learned_spanning_tree(pts: &WeightedPointSet, sample: &QuerySample, params: &EpsParams) -> Result<SpanningTree> {
    if pts.len() < 2 {
        return Err(Error::contract("spanning tree needs at least two points"));
    }
    minimum_spanning_tree(&pair_stab_counts(pts, sample, params)?)
}

/// Uniformly random labeled tree on `0..n` from a random Prüfer sequence.
pub fn random_spanning_tree(n: usize, seed: Seed) -> Result<SpanningTree> {
    if n < 2 {
        return Err(Error::contract("spanning tree needs at least two points"));
    }
    let mut rng = seed.rng();
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();
    let mut degree = vec![1usize; n];
    for &s in &seq {
        degree[s] += 1;
    }
    let mut leaves: BinaryHeap<Reverse<usize>> = (0..n).filter(|&v| degree[v] == 1).map(Reverse).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &s in &seq {
        let Reverse(leaf) = leaves.pop().expect("leaf available");
        edges.push(Edge::new(leaf, s)?);
        degree[s] -= 1;
        if degree[s] == 1 {
            leaves.push(Reverse(s));
        }
    }
    let Reverse(x) = leaves.pop().expect("two leaves left");
    let Reverse(y) = leaves.pop().expect("two leaves left");
    edges.push(Edge::new(x, y)?);
    SpanningTree::new(n, edges)
}

/// Mean over `sample` of the number of tree edges each query ε-stabs.
pub fn mean_stabbing(tree: &SpanningTree, pts: &WeightedPointSet, sample: &QuerySample, params: &EpsParams) -> f64 {
    let total: usize = sample
        .queries()
        .par_iter()
        .map(|q| {
            tree.edges()
                .iter()
                .filter(|e| params.stabs_sq(sq_dist(q, pts.point(e.a)), sq_dist(q, pts.point(e.b))))
                .count()
        })
        .sum();
    total as f64 / sample.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryEval {
    pub visiting: usize,
    pub t_q: usize,
    pub visited_nodes: usize,
    pub weight: f64,
    /// `B(q,r)∩P ⊆ S ⊆ B(q,(1+ε)r)∩P` in the original space.
    pub sandwich_ok: bool,
    /// Reported weight equals the weight of the reported set.
    pub weight_identity_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_visiting: f64,
    pub mean_t_q: f64,
    pub sandwich_pass_rate: f64,
    /// `None` when the index does not know its training sample.
    pub holdout_overlaps_training: Option<bool>,
    pub per_query: Vec<QueryEval>,
}

/// Exact visiting number and ambiguity count (both in the index's working
/// space) plus an original-space sandwich check for every holdout query.
pub fn evaluate_visiting(
    idx: &CountingIndex,
    holdout: &QuerySample,
    pts: &WeightedPointSet,
    params: &EpsParams,
) -> Result<EvalReport> {
    let wp = idx.working_params();
    let work = idx.working_points();
    let per_query = holdout
        .queries()
        .par_iter()
        .map(|q| -> Result<QueryEval> {
            let tq = idx.transform_query(q)?;
            let ans = idx.count(q, true)?;
            let members = idx.members_of(ans.member_ranges.as_deref().unwrap_or(&[]));
            let in_s = {
                let mut v = vec![false; pts.len()];
                members.iter().for_each(|&i| v[i] = true);
                v
            };
            let sandwich_ok = (0..pts.len()).all(|i| {
                let d = sq_dist(pts.point(i), q);
                (d > params.inner_sq() || in_s[i]) && (!in_s[i] || d <= params.outer_sq())
            });
            let set_weight: f64 = members.iter().map(|&i| pts.weight(i)).sum();
            let weight_identity_ok = (set_weight - ans.weight).abs() <= 1e-12 * set_weight.abs().max(1.0);
            let t_q = work
                .points()
                .filter(|p| {
                    let d = sq_dist(p, &tq);
                    d > wp.inner_sq() && d <= wp.outer_sq()
                })
                .count();
            Ok(QueryEval {
                visiting: visiting_number(idx.tree(), &tq, work, &wp)?,
                t_q,
                visited_nodes: ans.visited_nodes,
                weight: ans.weight,
                sandwich_ok,
                weight_identity_ok,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let m = per_query.len() as f64;
    let holdout_overlaps_training = idx
        .training_fingerprints()
        .map(|t| holdout.queries().iter().any(|q| t.contains(&fingerprint(q))));
    Ok(EvalReport {
        mean_visiting: per_query.iter().map(|e| e.visiting as f64).sum::<f64>() / m,
        mean_t_q: per_query.iter().map(|e| e.t_q as f64).sum::<f64>() / m,
        sandwich_pass_rate: per_query.iter().filter(|e| e.sandwich_ok).count() as f64 / m,
        holdout_overlaps_training,
        per_query,
    })
}

/// Whether a training-sample mean lies in `[5/8·μ − 3/8, 11/8·μ + 3/8]`
/// around the holdout mean `μ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketCheck {
    pub training_mean: f64,
    pub holdout_mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub within: bool,
}

pub fn generalization_bracket(training_mean: f64, holdout_mean: f64) -> BracketCheck {
    let lower = 5.0 / 8.0 * holdout_mean - 3.0 / 8.0;
    let upper = 11.0 / 8.0 * holdout_mean + 3.0 / 8.0;
    BracketCheck {
        training_mean,
        holdout_mean,
        lower,
        upper,
        within: training_mean >= lower && training_mean <= upper,
    }
}
