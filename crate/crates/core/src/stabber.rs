//! Witness search over Hamming buckets and the three-way stab classifier.
//!
//! A [`StabIndex`] embeds a subset into the Hamming cube and groups points by
//! code. A query scans buckets in order of code distance: a near scan
//! (closest codes first) looks for a point within `(1+ε)r`, a far scan
//! (farthest codes first) looks for a point at distance at least `r`. Each
//! scan gives up after `scan_cap` irrelevant points.
//!
//! Buckets inside the Hamming band of a scan (`≤ θ` for near, `≥ θ+εd'` for
//! far) are visited first. Unless [`StabConfig::strict_bands`] is set, the scan
//! then continues through the remaining buckets in the same order while the
//! cap allows; with the default cap this makes both scans exhaustive for the
//! subset sizes this crate is used at.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{sq_dist, EpsParams, Seed, WeightedPointSet};
use crate::hamming::{dprime_for, BitCode, HammingEmbedding};

/// Tuning knobs of the witness search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabConfig {
    /// Multiplies the exponent `β` of the scan cap `100·n^(1-β)`.
    pub beta_scale: f64,
    /// Only scan buckets inside the Hamming bands.
    pub strict_bands: bool,
}

impl Default for StabConfig {
    fn default() -> Self {
        StabConfig {
            beta_scale: 1.0,
            strict_bands: false,
        }
    }
}

/// `β = ε² / (19200·(1+ε²))`, scaled by `beta_scale`.
pub fn scan_beta(eps: f64, beta_scale: f64) -> f64 {
    beta_scale * eps * eps / (19200.0 * (1.0 + eps * eps))
}

/// `min(n, ceil(100·n^(1-β)))`, at least one.
pub fn scan_cap(n: usize, eps: f64, beta_scale: f64) -> usize {
    let beta = scan_beta(eps, beta_scale);
    let formula = (100.0 * (n as f64).powf(1.0 - beta)).ceil();
    let formula = if formula.is_finite() && formula >= 1.0 {
        formula as usize
    } else {
        1
    };
    n.min(formula).max(1)
}

/// Witnesses reported for one query. Indices refer to the underlying point set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WitnessSet {
    /// A point within `(1+ε)r` of the query.
    pub near: Option<usize>,
    /// A point at distance at least `r` from the query.
    pub far: Option<usize>,
    /// Number of points whose true distance was evaluated.
    pub inspected: usize,
}

#[derive(Clone, Debug)]
pub struct StabIndex {
    embedding: HammingEmbedding,
    /// Sorted by code; each list holds indices into `points`.
    buckets: Vec<(BitCode, Vec<usize>)>,
    points: Arc<WeightedPointSet>,
    n_members: usize,
    scan_cap: usize,
    params: EpsParams,
    strict_bands: bool,
}

impl StabIndex {
    /// Index the points of `points` listed in `members`.
    pub fn build(
        points: Arc<WeightedPointSet>,
        members: &[usize],
        params: &EpsParams,
        config: &StabConfig,
        seed: Seed,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::contract("cannot index an empty subset"));
        }
        if let Some(&bad) = members.iter().find(|&&i| i >= points.len()) {
            return Err(Error::contract(format!("member index {bad} out of range")));
        }
        let n = members.len();
        let embedding = HammingEmbedding::new(points.dim(), dprime_for(n.max(2), params.eps), params, seed)?;
        let mut map: BTreeMap<BitCode, Vec<usize>> = BTreeMap::new();
        for &i in members {
            map.entry(embedding.embed(points.point(i))?).or_default().push(i);
        }
        Ok(StabIndex {
            embedding,
            buckets: map.into_iter().collect(),
            points,
            n_members: n,
            scan_cap: scan_cap(n, params.eps, config.beta_scale),
            params: *params,
            strict_bands: config.strict_bands,
        })
    }

    pub fn embedding(&self) -> &HammingEmbedding {
        &self.embedding
    }

    pub fn scan_cap(&self) -> usize {
        self.scan_cap
    }

    pub fn n_members(&self) -> usize {
        self.n_members
    }

    pub fn n_buckets(&self) -> usize {
        self.buckets.len()
    }

    pub fn buckets(&self) -> impl Iterator<Item = (&BitCode, &[usize])> {
        self.buckets.iter().map(|(c, l)| (c, l.as_slice()))
    }

    /// Bucket indices grouped by Hamming distance to `code`; within a group,
    /// ascending code order.
    fn by_distance(&self, code: &BitCode) -> Vec<Vec<usize>> {
        let mut levels = vec![Vec::new(); self.embedding.dprime() + 1];
        for (b, (key, _)) in self.buckets.iter().enumerate() {
            levels[key.hamming(code) as usize].push(b);
        }
        levels
    }

    pub fn witnesses(&self, q: &[f64]) -> Result<WitnessSet> {
        let code = self.embedding.embed(q)?;
        let levels = self.by_distance(&code);
        let (inner, outer) = (self.params.inner_sq(), self.params.outer_sq());
        let theta = self.embedding.theta();
        let far_threshold = self.embedding.far_threshold();

        let mut out = WitnessSet::default();

        // near scan: ascending code distance
        let near_order = (0..levels.len()).filter(|&d| !self.strict_bands || d as f64 <= theta);
        out.near = self.scan(q, &levels, near_order, |d2| d2 <= outer, &mut out.inspected);

        // far scan: descending code distance
        let far_order = (0..levels.len()).rev().filter(|&d| !self.strict_bands || d as f64 >= far_threshold);
        out.far = self.scan(q, &levels, far_order, |d2| d2 >= inner, &mut out.inspected);

        if let Some(i) = out.near {
            assert!(sq_dist(self.points.point(i), q) <= outer, "near witness failed re-verification");
        }
        if let Some(i) = out.far {
            assert!(sq_dist(self.points.point(i), q) >= inner, "far witness failed re-verification");
        }
        Ok(out)
    }

    fn scan(
        &self,
        q: &[f64],
        levels: &[Vec<usize>],
        order: impl Iterator<Item = usize>,
        accept: impl Fn(f64) -> bool,
        inspected: &mut usize,
    ) -> Option<usize> {
        let mut irrelevant = 0;
        for d in order {
            for &b in &levels[d] {
                for &i in &self.buckets[b].1 {
                    *inspected += 1;
                    if accept(sq_dist(self.points.point(i), q)) {
                        return Some(i);
                    }
                    irrelevant += 1;
                    if irrelevant >= self.scan_cap {
                        return None;
                    }
                }
            }
        }
        None
    }
}

/// Index over a whole point set with default search settings.
pub fn build_stab_index(subset: &WeightedPointSet, params: &EpsParams, seed: Seed) -> Result<StabIndex> {
    let members: Vec<usize> = (0..subset.len()).collect();
    StabIndex::build(Arc::new(subset.clone()), &members, params, &StabConfig::default(), seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Stabbed,
    Covered,
    Disjoint,
}

/// Verdict together with the witnesses behind it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClassifyOutcome {
    pub verdict: Verdict,
    pub near: Option<usize>,
    pub far: Option<usize>,
    pub inspected: usize,
}

/// `ceil(3·log2 n)`, at least one.
pub fn default_repetitions(n_subset: usize) -> usize {
    if n_subset < 2 {
        1
    } else {
        (3.0 * (n_subset as f64).log2()).ceil() as usize
    }
}

#[derive(Clone, Debug)]
pub struct StabClassifier {
    copies: Vec<StabIndex>,
    params: EpsParams,
}

impl StabClassifier {
    pub fn build(
        points: Arc<WeightedPointSet>,
        members: &[usize],
        params: &EpsParams,
        repetitions: usize,
        config: &StabConfig,
        seed: Seed,
    ) -> Result<Self> {
        if repetitions == 0 {
            return Err(Error::contract("classifier needs at least one repetition"));
        }
        let copies = (0..repetitions)
            .map(|c| StabIndex::build(points.clone(), members, params, config, seed.derive(c as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(StabClassifier {
            copies,
            params: *params,
        })
    }

    pub fn copies(&self) -> &[StabIndex] {
        &self.copies
    }

    pub fn repetitions(&self) -> usize {
        self.copies.len()
    }

    /// Total number of stored bucket entries across copies.
    pub fn entries(&self) -> usize {
        self.copies.iter().map(StabIndex::n_members).sum()
    }

    pub fn classify(&self, q: &[f64]) -> Result<Verdict> {
        Ok(self.classify_detailed(q)?.verdict)
    }

    /// Query copies in order until both witness kinds are known.
    ///
    /// * near and far witness: `Stabbed`
    /// * witnesses all within `(1+ε)r`: `Covered`
    /// * otherwise, with some witness: `Disjoint`
    /// * no witness at all: `Stabbed` (undecided, the caller must look deeper)
    pub fn classify_detailed(&self, q: &[f64]) -> Result<ClassifyOutcome> {
        let (mut near, mut far, mut inspected) = (None, None, 0);
        for copy in &self.copies {
            let w = copy.witnesses(q)?;
            inspected += w.inspected;
            near = near.or(w.near);
            far = far.or(w.far);
            if near.is_some() && far.is_some() {
                break;
            }
        }
        let verdict = match (near, far) {
            (Some(_), Some(_)) | (None, None) => Verdict::Stabbed,
            (Some(_), None) => Verdict::Covered,
            (None, Some(f)) => {
                let points = &self.copies[0].points;
                if sq_dist(points.point(f), q) <= self.params.outer_sq() {
                    Verdict::Covered
                } else {
                    Verdict::Disjoint
                }
            }
        };
        Ok(ClassifyOutcome {
            verdict,
            near,
            far,
            inspected,
        })
    }
}

/// Classifier over a whole point set with default search settings.
pub fn build_classifier(
    subset: &WeightedPointSet,
    params: &EpsParams,
    repetitions: usize,
    seed: Seed,
) -> Result<StabClassifier> {
    let members: Vec<usize> = (0..subset.len()).collect();
    StabClassifier::build(
        Arc::new(subset.clone()),
        &members,
        params,
        repetitions,
        &StabConfig::default(),
        seed,
    )
}
