//! Spanning trees with few ε-stabbed edges, built by multiplicative weights.
//!
//! Queries live in a [`QueryMultiset`] whose multiplicities are sampler
//! weights. Every chosen edge doubles the weight of each query that ε-stabs
//! it, steering later edges away from queries that are already stabbed often.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{sq_dist, EpsParams, GaussianProjection, GridSpec, Seed, WeightedPointSet};
use crate::sampler::WeightedSampler;
use crate::unionfind::UnionFind;

/// Highest dimension for which grid queries are enumerated by default.
pub const DEFAULT_GRID_DIM_CAP: usize = 8;

/// Undirected edge between two point indices, stored with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
}

impl Edge {
    pub fn new(a: usize, b: usize) -> Result<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Ok(Edge { a, b }),
            std::cmp::Ordering::Greater => Ok(Edge { a: b, b: a }),
            std::cmp::Ordering::Equal => Err(Error::contract(format!("self-loop at {a}"))),
        }
    }
}

/// Exactly `n-1` edges forming a connected acyclic graph on `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanningTree {
    n: usize,
    edges: Vec<Edge>,
}

impl SpanningTree {
    pub fn new(n: usize, edges: Vec<Edge>) -> Result<Self> {
        if n == 0 {
            return Err(Error::contract("spanning tree needs at least one vertex"));
        }
        if edges.len() != n - 1 {
            return Err(Error::contract(format!("{} edges cannot span {n} vertices", edges.len())));
        }
        let mut uf = UnionFind::new(n);
        for e in &edges {
            if e.b >= n {
                return Err(Error::contract(format!("edge endpoint {} out of range", e.b)));
            }
            if !uf.union(e.a, e.b) {
                return Err(Error::contract(format!("edge ({}, {}) closes a cycle", e.a, e.b)));
            }
        }
        Ok(SpanningTree { n, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }
}

/// Acyclic edge set over `0..n` with its connectivity.
#[derive(Clone, Debug)]
pub struct Forest {
    edges: Vec<Edge>,
    components: UnionFind,
}

impl Forest {
    pub fn new(n: usize) -> Self {
        Forest {
            edges: Vec::new(),
            components: UnionFind::new(n),
        }
    }

    pub fn add(&mut self, e: Edge) -> Result<()> {
        if !self.components.union(e.a, e.b) {
            return Err(Error::contract(format!("edge ({}, {}) closes a cycle", e.a, e.b)));
        }
        self.edges.push(e);
        Ok(())
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n_components(&self) -> usize {
        self.components.components()
    }
}

/// Distinct query points with multiplicities held in a [`WeightedSampler`].
#[derive(Clone, Debug)]
pub struct QueryMultiset {
    dim: usize,
    support: Vec<f64>,
    sampler: WeightedSampler,
    stab_exponents: Vec<u32>,
}

impl QueryMultiset {
    /// Every query with multiplicity one.
    pub fn from_flat(dim: usize, support: Vec<f64>) -> Result<Self> {
        if dim == 0 || support.is_empty() || support.len() % dim != 0 {
            return Err(Error::contract("query support must be a nonempty list of points"));
        }
        let m = support.len() / dim;
        Ok(QueryMultiset {
            dim,
            support,
            sampler: WeightedSampler::new(&vec![1.0; m])?,
            stab_exponents: vec![0; m],
        })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::contract("queries must share one dimension"));
        }
        Self::from_flat(dim, points.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.stab_exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stab_exponents.is_empty()
    }

    pub fn query(&self, i: usize) -> &[f64] {
        &self.support[i * self.dim..(i + 1) * self.dim]
    }

    pub fn queries(&self) -> impl Iterator<Item = &[f64]> {
        self.support.chunks_exact(self.dim)
    }

    pub fn sampler(&self) -> &WeightedSampler {
        &self.sampler
    }

    /// Number of doublings applied to query `i`.
    pub fn stab_exponent(&self, i: usize) -> u32 {
        self.stab_exponents[i]
    }

    pub fn stab_exponents(&self) -> &[u32] {
        &self.stab_exponents
    }

    /// Current multiplicity of query `i` (scaled by the sampler's global offset).
    pub fn weight(&self, i: usize) -> f64 {
        self.sampler.weight(i)
    }

    fn double(&mut self, i: usize) -> Result<()> {
        self.sampler.update_weight(i, 2.0 * self.sampler.weight(i))?;
        self.stab_exponents[i] += 1;
        Ok(())
    }

    /// Double every query that ε-stabs `e`; returns how many were doubled.
    pub fn double_stabbing(&mut self, pts: &WeightedPointSet, e: Edge, params: &EpsParams) -> Result<usize> {
        let (x, y) = (pts.point(e.a), pts.point(e.b));
        let hits: Vec<usize> = (0..self.len())
            .filter(|&i| {
                let q = self.query(i);
                params.stabs_sq(sq_dist(q, x), sq_dist(q, y))
            })
            .collect();
        for &i in &hits {
            self.double(i)?;
        }
        Ok(hits.len())
    }
}

/// All grid points within `(1+ε)r` of at least one input point, each once.
pub fn generate_grid_queries(pts: &WeightedPointSet, params: &EpsParams, grid: &GridSpec) -> Result<QueryMultiset> {
    generate_grid_queries_capped(pts, params, grid, DEFAULT_GRID_DIM_CAP)
}

pub fn generate_grid_queries_capped(
    pts: &WeightedPointSet,
    params: &EpsParams,
    grid: &GridSpec,
    dim_cap: usize,
) -> Result<QueryMultiset> {
    let d = pts.dim();
    if d > dim_cap {
        return Err(Error::GridInfeasible { dim: d, cap: dim_cap });
    }
    let reach = params.outer_radius();
    let reach_sq = params.outer_sq();
    let mut cells: BTreeSet<Vec<i64>> = BTreeSet::new();
    let mut candidate = vec![0.0; d];
    for p in pts.points() {
        let lo: Vec<i64> = p.iter().map(|c| ((c - reach) / grid.side).ceil() as i64).collect();
        let hi: Vec<i64> = p.iter().map(|c| ((c + reach) / grid.side).floor() as i64).collect();
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            continue;
        }
        let mut v = lo.clone();
        loop {
            for k in 0..d {
                candidate[k] = grid.side * v[k] as f64;
            }
            if sq_dist(&candidate, p) <= reach_sq {
                cells.insert(v.clone());
            }
            // odometer increment
            let mut k = 0;
            while k < d {
                if v[k] < hi[k] {
                    v[k] += 1;
                    break;
                }
                v[k] = lo[k];
                k += 1;
            }
            if k == d {
                break;
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::contract("grid query generation produced no queries"));
    }
    let support: Vec<f64> = cells
        .iter()
        .flat_map(|v| v.iter().map(|&c| grid.side * c as f64))
        .collect();
    QueryMultiset::from_flat(d, support)
}

/// Parameters of the light-edge search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightEdgeParams {
    /// Exponent in the net density `δ = d / n^ρ`.
    pub rho: f64,
    /// Constant in the net size `C·(d/δ)·(ln(1/δ) + ln n)`.
    pub net_constant: f64,
    /// Constant in the projected dimension `c·ε⁻²·ln|net|`.
    pub embed_dim_constant: f64,
    /// Projected cells have side `ε / (grid_divisor·√k)`.
    pub grid_divisor: f64,
}

impl LightEdgeParams {
    /// `ρ = ε² / (4·ln(1/ε) + 8)` and unit constants.
    pub fn default_for(eps: f64) -> Self {
        LightEdgeParams {
            rho: eps * eps / (4.0 * (1.0 / eps).ln() + 8.0),
            net_constant: 1.0,
            embed_dim_constant: 1.0,
            grid_divisor: 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rho > 0.0
            && self.rho < 1.0
            && self.net_constant > 0.0
            && self.embed_dim_constant > 0.0
            && self.grid_divisor > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::contract(format!("invalid light-edge parameters {self:?}")))
        }
    }
}

/// Chosen edge and the total multiplicity of queries that ε-stab it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LightEdge {
    pub edge: Edge,
    pub stab_weight: f64,
    pub candidates: usize,
}

/// Light edge over all points of `pts`.
pub fn find_light_edge(
    pts: &WeightedPointSet,
    queries: &QueryMultiset,
    params: &EpsParams,
    lp: &LightEdgeParams,
    seed: Seed,
) -> Result<Edge> {
    let active: Vec<usize> = (0..pts.len()).collect();
    Ok(find_light_edge_among(pts, &active, queries, params, lp, seed)?.edge)
}

/// Light edge among the points listed in `active`.
pub fn find_light_edge_among(
    pts: &WeightedPointSet,
    active: &[usize],
    queries: &QueryMultiset,
    params: &EpsParams,
    lp: &LightEdgeParams,
    seed: Seed,
) -> Result<LightEdge> {
    let n = active.len();
    if n < 2 {
        return Err(Error::contract("light edge needs at least two points"));
    }
    if queries.dim() != pts.dim() {
        return Err(Error::DimensionMismatch {
            expected: pts.dim(),
            got: queries.dim(),
        });
    }
    lp.validate()?;
    let d = pts.dim();

    // sample the net from the current multiset
    let delta = (d as f64 / (n as f64).powf(lp.rho)).min(0.99);
    let target = (lp.net_constant * (d as f64 / delta) * ((1.0 / delta).ln() + (n as f64).ln())).ceil();
    let draws = (target.max(1.0) as usize).min(queries.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed.derive(0).0);
    let mut net: BTreeSet<usize> = BTreeSet::new();
    for _ in 0..draws {
        net.insert(queries.sampler().sample(&mut rng)?);
    }

    // one shared projection for points and net
    let k = (lp.embed_dim_constant * (1.0 / (params.eps * params.eps)) * (net.len() as f64).ln()).ceil();
    let k = (k.max(1.0) as usize).max(1);
    let proj = if k >= d {
        GaussianProjection::identity(d)
    } else {
        GaussianProjection::sample(d, k, seed.derive(1))?
    };
    let k = proj.out_dim();
    let img: Vec<Vec<f64>> = active.iter().map(|&i| proj.apply(pts.point(i))).collect();
    let centers: Vec<Vec<f64>> = net.iter().map(|&i| proj.apply(queries.query(i))).collect();

    let side = params.eps * params.radius / (lp.grid_divisor * (k as f64).sqrt());
    let cell = |x: &[f64]| -> Vec<i64> { x.iter().map(|c| (c / side).floor() as i64).collect() };
    let outer_sq = params.outer_sq();
    let cell_near_center = |c: &[i64]| -> bool {
        centers.iter().any(|z| {
            let gap: f64 = c
                .iter()
                .zip(z)
                .map(|(&ci, &zi)| {
                    let lo = ci as f64 * side;
                    let hi = lo + side;
                    let g = if zi < lo {
                        lo - zi
                    } else if zi > hi {
                        zi - hi
                    } else {
                        0.0
                    };
                    g * g
                })
                .sum();
            gap <= outer_sq
        })
    };

    let mut by_cell: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
    for (slot, x) in img.iter().enumerate() {
        by_cell.entry(cell(x)).or_default().push(slot);
    }
    let mut candidates: BTreeSet<Edge> = BTreeSet::new();
    let mut outside = Vec::new();
    for (c, slots) in &by_cell {
        for (i, &s) in slots.iter().enumerate() {
            for &t in &slots[i + 1..] {
                candidates.insert(Edge::new(active[s], active[t])?);
            }
        }
        if !cell_near_center(c) {
            outside.extend_from_slice(slots);
        }
    }
    for (i, &s) in outside.iter().enumerate() {
        for &t in &outside[i + 1..] {
            candidates.insert(Edge::new(active[s], active[t])?);
        }
    }
    // fallback: three closest projected pairs
    let mut closest: Vec<(f64, Edge)> = Vec::with_capacity(n * (n - 1) / 2);
    for s in 0..n {
        for t in s + 1..n {
            closest.push((sq_dist(&img[s], &img[t]), Edge::new(active[s], active[t])?));
        }
    }
    closest.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    candidates.extend(closest.iter().take(3).map(|&(_, e)| e));

    // exact stab weight of every candidate over the whole multiset
    let endpoints: BTreeSet<usize> = candidates.iter().flat_map(|e| [e.a, e.b]).collect();
    let dists: HashMap<usize, Vec<f64>> = endpoints
        .par_iter()
        .map(|&p| (p, queries.queries().map(|q| sq_dist(q, pts.point(p))).collect()))
        .collect();
    let weights: Vec<f64> = (0..queries.len()).map(|i| queries.weight(i)).collect();
    let candidates: Vec<Edge> = candidates.into_iter().collect();
    let scored: Vec<(f64, Edge)> = candidates
        .par_iter()
        .map(|&e| {
            let (da, db) = (&dists[&e.a], &dists[&e.b]);
            let w: f64 = (0..weights.len())
                .filter(|&i| params.stabs_sq(da[i], db[i]))
                .map(|i| weights[i])
                .sum();
            (w, e)
        })
        .collect();
    let (stab_weight, edge) = scored
        .iter()
        .copied()
        .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)))
        .expect("at least one candidate");
    Ok(LightEdge {
        edge,
        stab_weight,
        candidates: candidates.len(),
    })
}

/// `ceil(n/2)` light edges over `active`, each followed by a doubling step and
/// removal of the edge's first endpoint.
pub fn build_low_stab_forest_among(
    pts: &WeightedPointSet,
    active: &[usize],
    queries: &mut QueryMultiset,
    params: &EpsParams,
    lp: &LightEdgeParams,
    seed: Seed,
    forest: &mut Forest,
) -> Result<Vec<Edge>> {
    if active.len() < 2 {
        return Err(Error::contract("forest needs at least two points"));
    }
    let mut active: Vec<usize> = active.to_vec();
    let rounds = active.len().div_ceil(2);
    let mut added = Vec::with_capacity(rounds);
    for it in 0..rounds {
        let light = find_light_edge_among(pts, &active, queries, params, lp, seed.derive(it as u64))?;
        forest.add(light.edge)?;
        queries.double_stabbing(pts, light.edge, params)?;
        active.retain(|&i| i != light.edge.a);
        added.push(light.edge);
    }
    Ok(added)
}

/// Forest over all points of `pts`.
pub fn build_low_stab_forest(
    pts: &WeightedPointSet,
    queries: &mut QueryMultiset,
    params: &EpsParams,
    lp: &LightEdgeParams,
    seed: Seed,
) -> Result<Forest> {
    let mut forest = Forest::new(pts.len());
    let active: Vec<usize> = (0..pts.len()).collect();
    build_low_stab_forest_among(pts, &active, queries, params, lp, seed, &mut forest)?;
    Ok(forest)
}

/// Spanning tree and the number of forest rounds it took.
#[derive(Clone, Debug)]
pub struct TreeTrace {
    pub tree: SpanningTree,
    pub rounds: usize,
}

/// Repeated forests over component representatives (lowest index per
/// component) until a single component remains. Query weights carry over
/// between rounds.
pub fn build_low_stab_tree(
    pts: &WeightedPointSet,
    queries: &mut QueryMultiset,
    params: &EpsParams,
    lp: &LightEdgeParams,
    seed: Seed,
) -> Result<SpanningTree> {
    Ok(build_low_stab_tree_traced(pts, queries, params, lp, seed)?.tree)
}

pub fn build_low_stab_tree_traced(
    pts: &WeightedPointSet,
    queries: &mut QueryMultiset,
    params: &EpsParams,
    lp: &LightEdgeParams,
    seed: Seed,
) -> Result<TreeTrace> {
    let n = pts.len();
    if n < 2 {
        return Err(Error::contract("spanning tree construction needs at least two points"));
    }
    let mut forest = Forest::new(n);
    let mut reps: Vec<usize> = (0..n).collect();
    let mut rounds = 0;
    while reps.len() > 1 {
        build_low_stab_forest_among(pts, &reps, queries, params, lp, seed.derive(rounds as u64), &mut forest)?;
        rounds += 1;
        let mut uf = UnionFind::new(n);
        for e in forest.edges() {
            uf.union(e.a, e.b);
        }
        let mut seen = BTreeSet::new();
        reps = (0..n).filter(|&i| seen.insert(uf.find(i))).collect();
    }
    Ok(TreeTrace {
        tree: SpanningTree::new(n, forest.edges().to_vec())?,
        rounds,
    })
}
