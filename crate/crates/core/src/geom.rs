//! Geometric primitives shared by every other module.
//!
//! Points are plain `f64` slices; [`WeightedPointSet`] stores them row-major in
//! one flat buffer. Balls are closed: a point at distance exactly `r` is near,
//! a point at distance exactly `(1+ε)r` is far (and also inside the outer ball).

use std::ops::Deref;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Seed for every randomized operation.
///
/// Sub-structures never share a stream: they call [`Seed::derive`] with a
/// distinct label and build their own generator from the result.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    /// Deterministically derive an independent child seed.
    pub fn derive(self, label: u64) -> Seed {
        Seed(mix64(self.0 ^ mix64(label.wrapping_add(0x6a09_e667_f3bc_c909))))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// SplitMix64 finalizer.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A point in R^d with finite coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::contract("point coordinates must be finite"));
        }
        Ok(Point(coords))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for Point {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Points with real weights, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedPointSet {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedPointSet {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let dim = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::contract("point set must be nonempty"))?;
        let mut coords = Vec::with_capacity(dim * points.len());
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords, weights)
    }

    /// All weights set to one.
    pub fn unit_weights(points: Vec<Vec<f64>>) -> Result<Self> {
        let w = vec![1.0; points.len()];
        Self::new(points, w)
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::contract("dimension must be positive"));
        }
        if weights.is_empty() {
            return Err(Error::contract("point set must be nonempty"));
        }
        if coords.len() != dim * weights.len() {
            return Err(Error::contract(format!(
                "{} coordinates do not form {} points of dimension {dim}",
                coords.len(),
                weights.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::contract("point coordinates must be finite"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::contract("weights must be finite"));
        }
        Ok(WeightedPointSet {
            dim,
            coords,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        let mut weights = Vec::with_capacity(indices.len());
        for &i in indices {
            coords.extend_from_slice(self.point(i));
            weights.push(self.weights[i]);
        }
        Self::from_flat(self.dim, coords, weights)
    }

    /// Same points, new coordinates produced by `f` (weights preserved).
    pub fn map_points(&self, out_dim: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let mut coords = Vec::with_capacity(out_dim * self.len());
        for p in self.points() {
            let image = f(p);
            debug_assert_eq!(image.len(), out_dim);
            coords.extend(image);
        }
        Self::from_flat(out_dim, coords, self.weights.clone())
    }

    pub fn check_query(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: q.len(),
            });
        }
        Ok(())
    }

    /// SHA-256 over dimension, coordinates and weights (bit patterns).
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        h.update((self.len() as u64).to_le_bytes());
        for c in &self.coords {
            h.update(c.to_bits().to_le_bytes());
        }
        for w in &self.weights {
            h.update(w.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Approximation parameter and search radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsParams {
    pub eps: f64,
    pub radius: f64,
}

impl EpsParams {
    pub fn new(eps: f64, radius: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::contract(format!("eps must lie in (0,1), got {eps}")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::contract(format!("radius must be positive, got {radius}")));
        }
        Ok(EpsParams { eps, radius })
    }

    /// Radius one.
    pub fn unit(eps: f64) -> Result<Self> {
        Self::new(eps, 1.0)
    }

    pub fn outer_radius(&self) -> f64 {
        (1.0 + self.eps) * self.radius
    }

    pub(crate) fn inner_sq(&self) -> f64 {
        self.radius * self.radius
    }

    pub(crate) fn outer_sq(&self) -> f64 {
        let o = self.outer_radius();
        o * o
    }

    /// Stab test on squared distances from the query to the two endpoints.
    #[inline]
    pub(crate) fn stabs_sq(&self, dx: f64, dy: f64) -> bool {
        let (inner, outer) = (self.inner_sq(), self.outer_sq());
        (dx <= inner && dy >= outer) || (dy <= inner && dx >= outer)
    }
}

/// Side length of the cubic grid used to discretize queries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub side: f64,
}

impl GridSpec {
    pub fn new(side: f64) -> Result<Self> {
        if !(side > 0.0 && side.is_finite()) {
            return Err(Error::contract(format!("grid side must be positive, got {side}")));
        }
        Ok(GridSpec { side })
    }
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// True iff `q` (ε,r)-stabs the pair `{x, y}`: one endpoint within `r`,
/// the other at distance at least `(1+ε)r`.
pub fn eps_stabs(q: &[f64], x: &[f64], y: &[f64], params: &EpsParams) -> Result<bool> {
    if x.len() != q.len() || y.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: q.len(),
            got: if x.len() != q.len() { x.len() } else { y.len() },
        });
    }
    Ok(params.stabs_sq(sq_dist(q, x), sq_dist(q, y)))
}

/// Dense `out_dim × in_dim` matrix with i.i.d. N(0, 1/out_dim) entries.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianProjection {
    in_dim: usize,
    out_dim: usize,
    matrix: Vec<f64>,
}

impl GaussianProjection {
    pub fn sample(in_dim: usize, out_dim: usize, seed: Seed) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::contract("projection dimensions must be positive"));
        }
        let mut rng = seed.rng();
        let scale = 1.0 / (out_dim as f64).sqrt();
        let matrix = (0..in_dim * out_dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect();
        Ok(GaussianProjection {
            in_dim,
            out_dim,
            matrix,
        })
    }

    /// Identity map; stands in for a sampled matrix in tests.
    pub fn identity(dim: usize) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = 1.0;
        }
        GaussianProjection {
            in_dim: dim,
            out_dim: dim,
            matrix,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        debug_assert_eq!(p.len(), self.in_dim);
        self.matrix
            .chunks_exact(self.in_dim)
            .map(|row| row.iter().zip(p).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn apply_set(&self, pts: &WeightedPointSet) -> Result<WeightedPointSet> {
        if pts.dim() != self.in_dim {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim,
                got: pts.dim(),
            });
        }
        pts.map_points(self.out_dim, |p| self.apply(p))
    }
}

/// Image of `pts` under one freshly sampled Gaussian matrix; weights preserved.
pub fn gaussian_project(pts: &WeightedPointSet, target_dim: usize, seed: Seed) -> Result<WeightedPointSet> {
    GaussianProjection::sample(pts.dim(), target_dim, seed)?.apply_set(pts)
}

/// Round every coordinate to the nearest multiple of `grid.side` (half-up).
pub fn snap_to_grid(p: &[f64], grid: &GridSpec) -> Vec<f64> {
    p.iter()
        .map(|c| grid.side * (c / grid.side + 0.5).floor())
        .collect()
}
