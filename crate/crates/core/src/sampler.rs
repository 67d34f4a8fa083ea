//! Proportional sampling over a fixed set of indices with point updates.
//!
//! A complete binary tree of subtree sums is stored in heap layout (root at
//! slot 1, leaves at `cap..2*cap`). Weights that grow by repeated doubling are
//! kept in range by dividing every leaf by 2^400 once the total passes 2^500;
//! a power-of-two rescale leaves every sampling probability unchanged.

use rand::Rng;

use crate::error::{Error, Result};

const RESCALE_TRIGGER: f64 = 3.273390607896142e150; // 2^500
const RESCALE_SHIFT: i32 = 400;

#[derive(Clone, Debug)]
pub struct WeightedSampler {
    len: usize,
    cap: usize,
    sums: Vec<f64>,
    scale_exponent: i64,
}

impl WeightedSampler {
    pub fn new(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::contract("sampler needs at least one weight"));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::contract(format!("sampler weights must be finite and nonnegative, got {w}")));
        }
        let cap = weights.len().next_power_of_two();
        let mut sums = vec![0.0; 2 * cap];
        sums[cap..cap + weights.len()].copy_from_slice(weights);
        let mut s = WeightedSampler {
            len: weights.len(),
            cap,
            sums,
            scale_exponent: 0,
        };
        s.rebuild_internal();
        s.maybe_rescale();
        Ok(s)
    }

    fn rebuild_internal(&mut self) {
        for v in (1..self.cap).rev() {
            self.sums[v] = self.sums[2 * v] + self.sums[2 * v + 1];
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Current (scaled) weight of index `i`.
    pub fn weight(&self, i: usize) -> f64 {
        self.sums[self.cap + i]
    }

    /// log2 of the unscaled weight of index `i`.
    pub fn log2_weight(&self, i: usize) -> f64 {
        self.weight(i).log2() + self.scale_exponent as f64
    }

    pub fn total(&self) -> f64 {
        self.sums[1]
    }

    /// Number of binary orders of magnitude divided out so far.
    pub fn scale_exponent(&self) -> i64 {
        self.scale_exponent
    }

    /// Draw index `i` with probability `weight(i) / total()`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        let total = self.total();
        if total <= 0.0 {
            return Err(Error::EmptyDistribution);
        }
        let mut u = rng.random::<f64>() * total;
        let mut v = 1;
        while v < self.cap {
            let (l, r) = (self.sums[2 * v], self.sums[2 * v + 1]);
            // rounding can push u past the left sum into an empty right subtree
            if (u < l && l > 0.0) || r <= 0.0 {
                v *= 2;
            } else {
                u -= l;
                v = 2 * v + 1;
            }
        }
        Ok(v - self.cap)
    }

    pub fn update_weight(&mut self, i: usize, new_weight: f64) -> Result<()> {
        if i >= self.len {
            return Err(Error::contract(format!("index {i} out of range for {} weights", self.len)));
        }
        if !(new_weight >= 0.0 && new_weight.is_finite()) {
            return Err(Error::contract(format!("weight must be finite and nonnegative, got {new_weight}")));
        }
        let mut v = self.cap + i;
        self.sums[v] = new_weight;
        while v > 1 {
            v /= 2;
            self.sums[v] = self.sums[2 * v] + self.sums[2 * v + 1];
        }
        self.maybe_rescale();
        Ok(())
    }

    fn maybe_rescale(&mut self) {
        while self.total() > RESCALE_TRIGGER {
            let factor = 2f64.powi(-RESCALE_SHIFT);
            for w in &mut self.sums[self.cap..] {
                *w *= factor;
            }
            self.rebuild_internal();
            self.scale_exponent += RESCALE_SHIFT as i64;
        }
    }

    /// Largest relative gap between a stored internal sum and the sum of its children.
    pub fn max_sum_error(&self) -> f64 {
        (1..self.cap)
            .map(|v| {
                let expect = self.sums[2 * v] + self.sums[2 * v + 1];
                let got = self.sums[v];
                if expect == 0.0 {
                    got.abs()
                } else {
                    ((got - expect) / expect).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    /// Leaf-by-leaf recomputation of the total, compared with the stored root.
    pub fn recomputed_total(&self) -> f64 {
        self.sums[self.cap..self.cap + self.len].iter().sum()
    }
}
