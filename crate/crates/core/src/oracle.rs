//! Brute-force reference computations. Slow, simple, and independent of the
//! index code paths they are used to check.
//!
//! Boundary conventions: balls are closed, so a point at distance exactly `r`
//! is near, and a point at exactly `(1+ε)r` is both far and in the annulus.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{EpsParams, WeightedPointSet};
use crate::ptree::PartitionTree;
use crate::spantree::{Edge, SpanningTree};

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_dim(pts: &WeightedPointSet, q: &[f64]) -> Result<()> {
    if q.len() != pts.dim() {
        return Err(Error::DimensionMismatch {
            expected: pts.dim(),
            got: q.len(),
        });
    }
    Ok(())
}

/// Sum of weights of points within `radius` of `q`.
pub fn exact_range_weight(pts: &WeightedPointSet, q: &[f64], radius: f64) -> Result<f64> {
    check_dim(pts, q)?;
    if !(radius >= 0.0) {
        return Err(Error::contract(format!("radius must be nonnegative, got {radius}")));
    }
    let r2 = radius * radius;
    Ok((0..pts.len())
        .filter(|&i| {
            let d: f64 = pts.point(i).iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum();
            d <= r2
        })
        .map(|i| pts.weight(i))
        .sum())
}

/// Indices of points within `radius` of `q`, ascending.
pub fn exact_range_members(pts: &WeightedPointSet, q: &[f64], radius: f64) -> Result<Vec<usize>> {
    check_dim(pts, q)?;
    let r2 = radius * radius;
    Ok((0..pts.len())
        .filter(|&i| pts.point(i).iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() <= r2)
        .collect())
}

fn near(d: f64, p: &EpsParams) -> bool {
    d * d <= p.radius * p.radius
}

fn far(d: f64, p: &EpsParams) -> bool {
    let o = (1.0 + p.eps) * p.radius;
    d * d >= o * o
}

fn in_annulus(d: f64, p: &EpsParams) -> bool {
    let o = (1.0 + p.eps) * p.radius;
    d * d > p.radius * p.radius && d * d <= o * o
}

/// Number of edges of `edges` that `q` ε-stabs.
pub fn exact_sigma(q: &[f64], edges: &[Edge], pts: &WeightedPointSet, params: &EpsParams) -> Result<usize> {
    check_dim(pts, q)?;
    let mut count = 0;
    for e in edges {
        if e.a >= pts.len() || e.b >= pts.len() {
            return Err(Error::contract(format!("edge ({}, {}) out of range", e.a, e.b)));
        }
        let da = euclid(pts.point(e.a), q);
        let db = euclid(pts.point(e.b), q);
        if (near(da, params) && far(db, params)) || (near(db, params) && far(da, params)) {
            count += 1;
        }
    }
    Ok(count)
}

/// Number of points with `r < dist <= (1+ε)r`.
pub fn exact_tq(pts: &WeightedPointSet, q: &[f64], params: &EpsParams) -> Result<usize> {
    check_dim(pts, q)?;
    Ok(pts.points().filter(|p| in_annulus(euclid(p, q), params)).count())
}

/// All `n^(n-2)` labeled trees on `0..n`, decoded from Prüfer sequences in
/// lexicographic order.
pub fn enumerate_spanning_trees(n: usize) -> Result<Vec<SpanningTree>> {
    if !(2..=8).contains(&n) {
        return Err(Error::contract(format!("tree enumeration supports 2..=8 vertices, got {n}")));
    }
    let len = n - 2;
    let total = n.pow(len as u32);
    let mut out = Vec::with_capacity(total);
    let mut seq = vec![0usize; len];
    for code in 0..total {
        let mut c = code;
        for s in seq.iter_mut().rev() {
            *s = c % n;
            c /= n;
        }
        out.push(SpanningTree::new(n, prufer_decode(n, &seq))?);
    }
    Ok(out)
}

fn prufer_decode(n: usize, seq: &[usize]) -> Vec<Edge> {
    let mut degree = vec![1usize; n];
    for &s in seq {
        degree[s] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &s in seq {
        let leaf = (0..n).find(|&v| degree[v] == 1).expect("a leaf always exists");
        edges.push(Edge::new(leaf, s).expect("leaf differs from its neighbor"));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    edges.push(Edge::new(rest[0], rest[1]).expect("two distinct remaining leaves"));
    edges
}

/// Visiting number by direct recursion: each internal node's member list is
/// rescanned from scratch.
pub fn exact_visiting_oracle(t: &PartitionTree, q: &[f64], pts: &WeightedPointSet, params: &EpsParams) -> Result<usize> {
    check_dim(pts, q)?;
    fn walk(t: &PartitionTree, v: usize, q: &[f64], pts: &WeightedPointSet, p: &EpsParams) -> usize {
        let Some((l, r)) = t.node(v).children else {
            return 0;
        };
        let dists: Vec<f64> = t.members(v).iter().map(|&i| euclid(pts.point(i), q)).collect();
        let stabbed = dists.iter().any(|&d| near(d, p)) && dists.iter().any(|&d| far(d, p));
        let has_annulus = dists.iter().any(|&d| in_annulus(d, p));
        let inside_outer = dists.iter().all(|&d| !far(d, p) || in_annulus(d, p));
        let misses_inner = dists.iter().all(|&d| !near(d, p));
        let charged = stabbed || (has_annulus && inside_outer) || (has_annulus && misses_inner);
        (if charged { 2 } else { 0 }) + walk(t, l, q, pts, p) + walk(t, r, q, pts, p)
    }
    Ok(1 + walk(t, t.root(), q, pts, params))
}

/// A single named ground-truth value tied to the instance it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub quantity: String,
    pub value: f64,
    pub instance_digest: String,
}

impl OracleReport {
    pub fn new(quantity: impl Into<String>, value: f64, pts: &WeightedPointSet) -> Self {
        OracleReport {
            quantity: quantity.into(),
            value,
            instance_digest: pts.digest(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Seed;
    use rand::Rng;
    use std::collections::BTreeSet;

    fn grid10() -> WeightedPointSet {
        WeightedPointSet::unit_weights((0..10).flat_map(|i| (0..10).map(move |j| vec![i as f64, j as f64])).collect())
            .unwrap()
    }

    #[test]
    fn range_weight_basics() {
        let g = grid10();
        assert_eq!(exact_range_weight(&g, &[0.5, 0.5], 0.0).unwrap(), 0.0);
        assert_eq!(exact_range_weight(&g, &[4.5, 4.5], 1e9).unwrap(), 100.0);
        assert!(exact_range_weight(&g, &[0.0, 0.0], -1.0).is_err());
        assert!(exact_range_weight(&g, &[0.0], 1.0).is_err());
    }

    #[test]
    fn range_weight_grid_center() {
        let g = grid10();
        let q = [4.5, 4.5];
        let mut hand = 0;
        for i in 0..10 {
            for j in 0..10 {
                let (dx, dy) = (i as f64 - 4.5, j as f64 - 4.5);
                if dx * dx + dy * dy <= 2.25 {
                    hand += 1;
                }
            }
        }
        assert_eq!(exact_range_weight(&g, &q, 1.5).unwrap(), hand as f64);
        assert_eq!(hand, 4);
    }

    #[test]
    fn sigma_examples() {
        let pts = WeightedPointSet::unit_weights(vec![vec![0.9], vec![1.3]]).unwrap();
        let p = EpsParams::unit(0.2).unwrap();
        assert_eq!(exact_sigma(&[0.0], &[], &pts, &p).unwrap(), 0);
        assert_eq!(exact_sigma(&[0.0], &[Edge::new(0, 1).unwrap()], &pts, &p).unwrap(), 1);
    }

    #[test]
    fn tq_examples() {
        let p = EpsParams::unit(0.5).unwrap();
        let inside = WeightedPointSet::unit_weights(vec![vec![0.5], vec![1.0], vec![-1.0]]).unwrap();
        assert_eq!(exact_tq(&inside, &[0.0], &p).unwrap(), 0);
        let shell = WeightedPointSet::unit_weights(vec![vec![1.5]]).unwrap();
        assert_eq!(exact_tq(&shell, &[0.0], &p).unwrap(), 1);

        let mut rng = Seed(3).rng();
        let pts =
            WeightedPointSet::unit_weights((0..100).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect())
                .unwrap();
        let q = [0.1, -0.2];
        let inner = exact_range_members(&pts, &q, 1.0).unwrap().len();
        let beyond = pts.points().filter(|x| euclid(x, &q) > 1.5).count();
        assert_eq!(exact_tq(&pts, &q, &p).unwrap() + inner + beyond, 100);
    }

    #[test]
    fn cayley_counts() {
        assert_eq!(enumerate_spanning_trees(2).unwrap().len(), 1);
        assert_eq!(enumerate_spanning_trees(4).unwrap().len(), 16);
        let seven = enumerate_spanning_trees(7).unwrap();
        assert_eq!(seven.len(), 16807);
        let distinct: BTreeSet<Vec<Edge>> = seven
            .iter()
            .map(|t| {
                let mut e = t.edges().to_vec();
                e.sort();
                e
            })
            .collect();
        assert_eq!(distinct.len(), 16807);
        assert!(enumerate_spanning_trees(1).is_err());
        assert!(enumerate_spanning_trees(9).is_err());
    }

    #[test]
    fn report_carries_digest() {
        let g = grid10();
        let r = OracleReport::new("t_q", 3.0, &g);
        assert_eq!(r.instance_digest, g.digest());
    }
}
