//! Synthetic datasets and query workloads.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Seed, WeightedPointSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Uniform,
    Clusters,
    Grid,
}

/// Box side for which uniform points have mean pairwise distance about 1.5.
pub fn default_box_side(d: usize) -> f64 {
    1.5 * (6.0 / d as f64).sqrt()
}

pub fn uniform_points(n: usize, d: usize, side: f64, seed: Seed) -> Result<WeightedPointSet> {
    check_shape(n, d)?;
    let mut rng = seed.rng();
    let pts = (0..n).map(|_| (0..d).map(|_| rng.random_range(0.0..side)).collect()).collect();
    WeightedPointSet::unit_weights(pts)
}

/// `k` centers uniform in the box, points Gaussian around a uniformly chosen
/// center with per-coordinate deviation `spread`.
pub fn clustered_points(n: usize, d: usize, k: usize, side: f64, spread: f64, seed: Seed) -> Result<WeightedPointSet> {
    check_shape(n, d)?;
    if k == 0 || !(spread >= 0.0) {
        return Err(Error::contract("clusters need k >= 1 and a nonnegative spread"));
    }
    let mut rng = seed.rng();
    let centers: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.random_range(0.0..side)).collect()).collect();
    let noise = Normal::new(0.0, spread).map_err(|e| Error::contract(e.to_string()))?;
    let pts = (0..n)
        .map(|_| {
            let c = &centers[rng.random_range(0..k)];
            c.iter().map(|&x| x + noise.sample(&mut rng)).collect()
        })
        .collect();
    WeightedPointSet::unit_weights(pts)
}

/// First `n` points of the integer lattice with `spacing`, in row-major order
/// over a cube just large enough to hold them.
pub fn grid_points(n: usize, d: usize, spacing: f64) -> Result<WeightedPointSet> {
    check_shape(n, d)?;
    let mut per_axis = 1usize;
    while per_axis.checked_pow(d as u32).is_some_and(|c| c < n) {
        per_axis += 1;
    }
    let pts = (0..n)
        .map(|mut i| {
            let mut p = vec![0.0; d];
            for c in p.iter_mut().rev() {
                *c = spacing * (i % per_axis) as f64;
                i /= per_axis;
            }
            p
        })
        .collect();
    WeightedPointSet::unit_weights(pts)
}

pub fn dataset(kind: DatasetKind, n: usize, d: usize, seed: Seed) -> Result<WeightedPointSet> {
    let side = default_box_side(d);
    match kind {
        DatasetKind::Uniform => uniform_points(n, d, side, seed),
        DatasetKind::Clusters => clustered_points(n, d, (n / 64).max(2), 2.0 * side, 0.3 / (d as f64).sqrt(), seed),
        DatasetKind::Grid => grid_points(n, d, 0.5),
    }
}

/// Same points with weights drawn uniformly from `[0, 1)`.
pub fn with_random_weights(pts: &WeightedPointSet, seed: Seed) -> Result<WeightedPointSet> {
    let mut rng = seed.rng();
    let w = (0..pts.len()).map(|_| rng.random::<f64>()).collect();
    WeightedPointSet::from_flat(pts.dim(), pts.coords().to_vec(), w)
}

fn check_shape(n: usize, d: usize) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(Error::contract(format!("need n >= 1 and d >= 1, got n={n}, d={d}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum QueryKind {
    /// Uniform over the data's bounding box padded by `pad` on every side.
    Uniform { pad: f64 },
    /// A uniformly chosen data point plus Gaussian noise of per-coordinate
    /// deviation `spread`.
    NearData { spread: f64 },
}

impl QueryKind {
    /// Near-data queries whose offset from the chosen point has norm about `radius`.
    pub fn near_data_default(radius: f64, d: usize) -> Self {
        QueryKind::NearData {
            spread: radius / (d as f64).sqrt(),
        }
    }
}

pub fn generate_queries(pts: &WeightedPointSet, kind: QueryKind, m: usize, seed: Seed) -> Result<Vec<Vec<f64>>> {
    if pts.is_empty() || m == 0 {
        return Err(Error::contract("query generation needs data and m >= 1"));
    }
    let d = pts.dim();
    let mut rng = seed.rng();
    match kind {
        QueryKind::Uniform { pad } => {
            let mut lo = vec![f64::INFINITY; d];
            let mut hi = vec![f64::NEG_INFINITY; d];
            for p in pts.points() {
                for k in 0..d {
                    lo[k] = lo[k].min(p[k]);
                    hi[k] = hi[k].max(p[k]);
                }
            }
            Ok((0..m)
                .map(|_| (0..d).map(|k| rng.random_range(lo[k] - pad..=hi[k] + pad)).collect())
                .collect())
        }
        QueryKind::NearData { spread } => {
            let noise = Normal::new(0.0, spread).map_err(|e| Error::contract(e.to_string()))?;
            Ok((0..m)
                .map(|_| {
                    let p = pts.point(rng.random_range(0..pts.len()));
                    p.iter().map(|&x| x + noise.sample(&mut rng)).collect()
                })
                .collect())
        }
    }
}

/// `m` rows drawn with replacement from `pool`.
pub fn resample_queries(pool: &[Vec<f64>], m: usize, seed: Seed) -> Result<Vec<Vec<f64>>> {
    if pool.is_empty() {
        return Err(Error::contract("cannot resample from an empty pool"));
    }
    let mut rng = seed.rng();
    Ok((0..m).map(|_| pool[rng.random_range(0..pool.len())].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_determinism() {
        for kind in [DatasetKind::Uniform, DatasetKind::Clusters, DatasetKind::Grid] {
            let a = dataset(kind, 100, 3, Seed(1)).unwrap();
            assert_eq!((a.len(), a.dim()), (100, 3));
            assert_eq!(a.digest(), dataset(kind, 100, 3, Seed(1)).unwrap().digest());
        }
        assert!(dataset(DatasetKind::Uniform, 0, 3, Seed(1)).is_err());
    }

    #[test]
    fn grid_is_distinct_lattice() {
        let g = grid_points(10, 2, 1.0).unwrap();
        assert_eq!(g.point(0), &[0.0, 0.0]);
        assert_eq!(g.point(1), &[0.0, 1.0]);
        assert_eq!(g.point(4), &[1.0, 0.0]);
        let full = grid_points(100, 2, 1.0).unwrap();
        assert_eq!(full.point(99), &[9.0, 9.0]);
    }

    #[test]
    fn uniform_queries_stay_in_padded_box() {
        let pts = uniform_points(50, 2, 1.0, Seed(2)).unwrap();
        let q = generate_queries(&pts, QueryKind::Uniform { pad: 0.5 }, 200, Seed(3)).unwrap();
        assert_eq!(q.len(), 200);
        assert!(q.iter().flatten().all(|&c| (-0.5..=1.5).contains(&c)));
    }

    #[test]
    fn resample_draws_from_pool() {
        let pool = vec![vec![1.0], vec![2.0]];
        let r = resample_queries(&pool, 20, Seed(4)).unwrap();
        assert!(r.iter().all(|x| pool.contains(x)));
    }
}
