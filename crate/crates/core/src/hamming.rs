//! Randomized embedding of R^d into the Hamming cube.
//!
//! Each of the `dprime` coordinates projects onto a Gaussian direction, cuts
//! the line into intervals of width `(1+ε)r` at a random offset, and turns the
//! interval id into one pseudo-random bit. Near pairs collide more often than
//! far pairs, so their codes end up closer in Hamming distance.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{mix64, EpsParams, Seed};

/// Minimum code length, so that tiny subsets still get informative codes.
pub const MIN_DPRIME: usize = 8;

/// Probability that two points at distance `dist` fall into the same interval
/// of a randomly shifted one-dimensional grid of side `width` after a Gaussian
/// projection.
pub fn collision_prob(dist: f64, width: f64) -> Result<f64> {
    if !(dist > 0.0 && dist.is_finite()) || !(width > 0.0 && width.is_finite()) {
        return Err(Error::contract(format!(
            "collision_prob needs positive inputs, got dist={dist}, width={width}"
        )));
    }
    let norm = 2.0 / ((2.0 * std::f64::consts::PI).sqrt() * dist);
    let f = |s: f64| norm * (-s * s / (2.0 * dist * dist)).exp() * (1.0 - s / width);
    Ok(adaptive_simpson(&f, 0.0, width, 1e-9).clamp(0.0, 1.0))
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Code length for a set of `n_hint` points: `log2(n)/(1+ε²)`, floored at [`MIN_DPRIME`].
pub fn dprime_for(n_hint: usize, eps: f64) -> usize {
    let raw = (n_hint.max(1) as f64).log2() / (1.0 + eps * eps);
    (raw.round() as usize).max(MIN_DPRIME)
}

/// Packed bit vector; bit `i` lives in word `i / 64` at position `63 - i % 64`,
/// so the derived ordering is lexicographic in bit order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitCode {
    words: Vec<u64>,
    len: usize,
}

impl BitCode {
    pub fn zeros(len: usize) -> Self {
        BitCode {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len);
        self.words[i / 64] >> (63 - i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(i < self.len);
        let mask = 1u64 << (63 - i % 64);
        if bit {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn hamming(&self, other: &BitCode) -> u32 {
        debug_assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

/// Serializable description of a sampled embedding (everything but the random draws).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSummary {
    pub dprime: usize,
    pub width: f64,
    pub theta: f64,
    pub far_threshold: f64,
}

#[derive(Clone, Debug)]
pub struct HammingEmbedding {
    ambient_dim: usize,
    dprime: usize,
    /// `dprime × ambient_dim`, row-major, N(0,1) entries.
    directions: Vec<f64>,
    shifts: Vec<f64>,
    bit_salts: Vec<u64>,
    width: f64,
    eps: f64,
    /// Collision probability at distance `r` and at distance `(1+ε)r`.
    p_near: f64,
    p_far: f64,
    theta: f64,
    far_threshold: f64,
}

impl HammingEmbedding {
    /// Embedding with an explicit code length.
    pub fn new(ambient_dim: usize, dprime: usize, params: &EpsParams, seed: Seed) -> Result<Self> {
        if ambient_dim == 0 || dprime == 0 {
            return Err(Error::contract("embedding dimensions must be positive"));
        }
        let width = params.outer_radius();
        let p_near = collision_prob(params.radius, width)?;
        let p_far = collision_prob(width, width)?;
        let mu_near = 0.5 * dprime as f64 * (1.0 - p_near);
        let theta = mu_near * (1.0 + params.eps / 80.0);
        let far_threshold = theta + params.eps * dprime as f64;

        let mut rng = seed.rng();
        let directions = (0..dprime * ambient_dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let shifts = (0..dprime).map(|_| rng.random_range(0.0..width)).collect();
        let bit_salts = (0..dprime).map(|_| rng.random::<u64>()).collect();
        Ok(HammingEmbedding {
            ambient_dim,
            dprime,
            directions,
            shifts,
            bit_salts,
            width,
            eps: params.eps,
            p_near,
            p_far,
            theta,
            far_threshold,
        })
    }

    pub fn dprime(&self) -> usize {
        self.dprime
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Hamming radius of the near scan.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Hamming radius beyond which the far scan starts.
    pub fn far_threshold(&self) -> f64 {
        self.far_threshold
    }

    /// Expected code distance bound for a pair at distance `r`.
    pub fn mu_near(&self) -> f64 {
        0.5 * self.dprime as f64 * (1.0 - self.p_near)
    }

    /// Expected code distance bound for a pair at distance `(1+ε)r`.
    pub fn mu_far(&self) -> f64 {
        0.5 * self.dprime as f64 * (1.0 - self.p_far)
    }

    pub fn summary(&self) -> EmbeddingSummary {
        EmbeddingSummary {
            dprime: self.dprime,
            width: self.width,
            theta: self.theta,
            far_threshold: self.far_threshold,
        }
    }

    /// Interval index of `p` under every coordinate hash.
    pub fn buckets(&self, p: &[f64]) -> Vec<i64> {
        self.directions
            .chunks_exact(self.ambient_dim)
            .zip(&self.shifts)
            .map(|(g, s)| {
                let proj: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();
                ((proj + s) / self.width).floor() as i64
            })
            .collect()
    }

    fn bucket_bit(&self, i: usize, bucket: i64) -> bool {
        mix64(self.bit_salts[i] ^ mix64(bucket as u64)) & 1 == 1
    }

    pub fn embed(&self, p: &[f64]) -> Result<BitCode> {
        if p.len() != self.ambient_dim {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim,
                got: p.len(),
            });
        }
        let mut code = BitCode::zeros(self.dprime);
        for (i, b) in self.buckets(p).into_iter().enumerate() {
            code.set(i, self.bucket_bit(i, b));
        }
        Ok(code)
    }
}

/// Embedding sized for `n_hint` points at unit radius.
pub fn make_embedding(ambient_dim: usize, n_hint: usize, eps: f64, seed: Seed) -> Result<HammingEmbedding> {
    if n_hint < 2 {
        return Err(Error::contract("n_hint must be at least 2"));
    }
    let params = EpsParams::unit(eps)?;
    HammingEmbedding::new(ambient_dim, dprime_for(n_hint, eps), &params, seed)
}
