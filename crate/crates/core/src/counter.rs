//! The range-counting index: transform points, build a spanning tree, cut its
//! DFS path into a balanced partition tree, and attach a stab classifier to
//! every internal node.

use std::collections::BTreeSet;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generate::{generate_queries, QueryKind};
use crate::geom::{snap_to_grid, sq_dist, EpsParams, GaussianProjection, GridSpec, Seed, WeightedPointSet};
use crate::learned::{fingerprint, learned_spanning_tree, random_spanning_tree, sample_size_with, QuerySample};
use crate::ptree::{path_to_partition_tree, tree_to_path, PartitionTree, SpanningPath};
use crate::spantree::{build_low_stab_tree, generate_grid_queries, LightEdgeParams};
use crate::stabber::{default_repetitions, StabClassifier, StabConfig, Verdict};

// seed labels for independent build stages
const LABEL_PROJECTION: u64 = 1;
const LABEL_TREE: u64 = 2;
const LABEL_SAMPLE: u64 = 3;
const LABEL_CLASSIFIERS: u64 = 4;

/// Where the learned tree's training queries come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "from", rename_all = "kebab-case")]
pub enum SampleSpec {
    /// Generated from the data; `m = None` uses the default sample size.
    Generated { kind: QueryKind, m: Option<usize>, delta: f64, multiplier: f64 },
    /// Supplied by the caller (e.g. a query file); only its size and digest are kept.
    Provided { m: usize, digest: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TreeSource {
    /// Multiplicative-weights tree over grid queries of side `grid_side`
    /// (defaults to the snapping grid).
    WorstCase { light_edge: LightEdgeParams, grid_side: Option<f64> },
    /// Minimum spanning tree under sampled stab counts.
    Learned { sample: SampleSpec },
    /// Uniformly random labeled tree; a baseline.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub eps: f64,
    pub radius: f64,
    pub jl_enabled: bool,
    pub jl_target_dim: Option<usize>,
    pub snap_queries: bool,
    /// Snapping grid side; `None` means `ε·r/(10·√d)` in the working dimension.
    pub grid_side: Option<f64>,
    /// `None` means `ceil(3·log2 n)` per node.
    pub classifier_repetitions: Option<usize>,
    pub stab: StabConfig,
    pub tree_source: TreeSource,
    pub seed: Seed,
}

impl BuildConfig {
    pub fn new(eps: f64, tree_source: TreeSource, seed: Seed) -> Self {
        BuildConfig {
            eps,
            radius: 1.0,
            jl_enabled: false,
            jl_target_dim: None,
            snap_queries: false,
            grid_side: None,
            classifier_repetitions: None,
            stab: StabConfig::default(),
            tree_source,
            seed,
        }
    }

    pub fn learned(eps: f64, seed: Seed) -> Self {
        Self::new(
            eps,
            TreeSource::Learned {
                sample: SampleSpec::Generated {
                    kind: QueryKind::NearData { spread: 0.25 },
                    m: None,
                    delta: 0.1,
                    multiplier: 1.0,
                },
            },
            seed,
        )
    }

    pub fn worst_case(eps: f64, seed: Seed) -> Self {
        Self::new(
            eps,
            TreeSource::WorstCase {
                light_edge: LightEdgeParams::default_for(eps / 2.0),
                grid_side: None,
            },
            seed,
        )
    }

    /// Projection is switched on by default only above 64 dimensions.
    pub fn with_auto_jl(mut self, ambient_dim: usize) -> Self {
        self.jl_enabled = ambient_dim > 64;
        self
    }

    pub fn params(&self) -> Result<EpsParams> {
        EpsParams::new(self.eps, self.radius)
    }

    pub fn working_params(&self) -> Result<EpsParams> {
        EpsParams::new(self.eps / 2.0, self.radius)
    }

    pub fn rescale_factor(&self) -> f64 {
        if self.snap_queries {
            1.0 / (1.0 + self.eps / 5.0)
        } else {
            1.0
        }
    }

    /// `min(d, max(16, ceil(2·ln n / (ε/10)²)))`.
    pub fn default_jl_dim(n: usize, d: usize, eps: f64) -> usize {
        let k = (2.0 * (n.max(2) as f64).ln() / (eps / 10.0).powi(2)).ceil() as usize;
        k.max(16).min(d)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        if self.jl_target_dim == Some(0) || self.classifier_repetitions == Some(0) {
            return Err(Error::contract("projection dimension and repetitions must be positive"));
        }
        if let Some(g) = self.grid_side {
            GridSpec::new(g)?;
        }
        if !(self.stab.beta_scale > 0.0) {
            return Err(Error::contract("beta_scale must be positive"));
        }
        if let TreeSource::WorstCase { light_edge, grid_side } = &self.tree_source {
            light_edge.validate()?;
            if let Some(g) = grid_side {
                GridSpec::new(*g)?;
            }
        }
        Ok(())
    }
}

/// Per-verdict tallies of one traversal.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub stabbed: usize,
    pub covered: usize,
    pub disjoint: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountAnswer {
    pub weight: f64,
    pub visited_nodes: usize,
    pub verdict_counts: VerdictCounts,
    /// Half-open intervals of the path order whose union is the reported set,
    /// merged and ascending; present in verification mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub member_ranges: Option<Vec<(usize, usize)>>,
}

#[derive(Clone, Debug)]
pub struct CountingIndex {
    tree: PartitionTree,
    working_points: Arc<WeightedPointSet>,
    projection: Option<GaussianProjection>,
    grid: GridSpec,
    rescale_factor: f64,
    working_params: EpsParams,
    config: BuildConfig,
    ambient_dim: usize,
    training: Option<BTreeSet<u64>>,
}

/// Build from scratch. `sample` is required when the tree source is
/// `Learned` with a `Provided` sample and ignored otherwise.
pub fn build_counting_index(pts: &WeightedPointSet, cfg: BuildConfig) -> Result<CountingIndex> {
    CountingIndex::build(pts, cfg, None)
}

impl CountingIndex {
    pub fn build(pts: &WeightedPointSet, cfg: BuildConfig, sample: Option<&QuerySample>) -> Result<Self> {
        let mut idx = Self::prepare(pts, cfg)?;
        let n = pts.len();
        let path = if n == 1 {
            SpanningPath::new(vec![0])?
        } else {
            let tree_seed = idx.config.seed.derive(LABEL_TREE);
            let work = idx.working_points.clone();
            let tree = match &idx.config.tree_source {
                TreeSource::WorstCase { light_edge, grid_side } => {
                    let g = GridSpec::new(grid_side.unwrap_or(idx.grid.side))?;
                    let mut queries = generate_grid_queries(&work, &idx.working_params, &g)?;
                    build_low_stab_tree(&work, &mut queries, &idx.working_params, light_edge, tree_seed)?
                }
                TreeSource::Learned { sample: spec } => {
                    let raw = match (spec, sample) {
                        (SampleSpec::Provided { .. }, Some(s)) => s.clone(),
                        (SampleSpec::Provided { .. }, None) => {
                            return Err(Error::contract("learned tree needs the provided query sample"))
                        }
                        (
                            SampleSpec::Generated {
                                kind,
                                m,
                                delta,
                                multiplier,
                            },
                            _,
                        ) => {
                            let m = match m {
                                Some(m) => *m,
                                None => sample_size_with(n, pts.dim(), *delta, *multiplier)?,
                            };
                            QuerySample::new(
                                generate_queries(pts, *kind, m, idx.config.seed.derive(LABEL_SAMPLE))?,
                                "generated",
                            )?
                        }
                    };
                    if raw.dim() != pts.dim() {
                        return Err(Error::DimensionMismatch {
                            expected: pts.dim(),
                            got: raw.dim(),
                        });
                    }
                    idx.training = Some(raw.fingerprints());
                    let work_sample = raw.map(|q| idx.transform_unchecked(q))?;
                    learned_spanning_tree(&work, &work_sample, &idx.working_params)?
                }
                TreeSource::Random => random_spanning_tree(n, tree_seed)?,
            };
            tree_to_path(&tree, &work)?
        };
        idx.attach(path)?;
        Ok(idx)
    }

    /// Rebuild from a stored path order; classifiers come out identical to
    /// the original build because they depend only on the seed and the order.
    pub fn with_path(pts: &WeightedPointSet, cfg: BuildConfig, path: SpanningPath, training: Option<BTreeSet<u64>>) -> Result<Self> {
        if path.len() != pts.len() {
            return Err(Error::contract(format!("stored path has {} entries for {} points", path.len(), pts.len())));
        }
        let mut idx = Self::prepare(pts, cfg)?;
        idx.training = training;
        idx.attach(path)?;
        Ok(idx)
    }

    fn prepare(pts: &WeightedPointSet, cfg: BuildConfig) -> Result<Self> {
        cfg.validate()?;
        if pts.is_empty() {
            return Err(Error::contract("cannot index an empty point set"));
        }
        let d = pts.dim();
        let projection = if cfg.jl_enabled {
            let k = cfg.jl_target_dim.unwrap_or_else(|| BuildConfig::default_jl_dim(pts.len(), d, cfg.eps));
            if k < d {
                Some(GaussianProjection::sample(d, k, cfg.seed.derive(LABEL_PROJECTION))?)
            } else {
                None
            }
        } else {
            None
        };
        let wd = projection.as_ref().map_or(d, GaussianProjection::out_dim);
        let grid = GridSpec::new(cfg.grid_side.unwrap_or(cfg.eps * cfg.radius / (10.0 * (wd as f64).sqrt())))?;
        let f = cfg.rescale_factor();
        let working = pts.map_points(wd, |p| {
            let x = projection.as_ref().map_or_else(|| p.to_vec(), |m| m.apply(p));
            x.into_iter().map(|c| c * f).collect()
        })?;
        Ok(CountingIndex {
            tree: path_to_partition_tree(&SpanningPath::new((0..pts.len()).collect())?, &working)?,
            working_points: Arc::new(working),
            projection,
            grid,
            rescale_factor: f,
            working_params: cfg.working_params()?,
            ambient_dim: d,
            config: cfg,
            training: None,
        })
    }

    fn attach(&mut self, path: SpanningPath) -> Result<()> {
        let mut tree = path_to_partition_tree(&path, &self.working_points)?;
        let base = self.config.seed.derive(LABEL_CLASSIFIERS);
        let internal: Vec<usize> = tree.internal_nodes().collect();
        let built = internal
            .par_iter()
            .map(|&v| {
                let members = tree.members(v);
                let reps = self
                    .config
                    .classifier_repetitions
                    .unwrap_or_else(|| default_repetitions(members.len()));
                StabClassifier::build(
                    self.working_points.clone(),
                    members,
                    &self.working_params,
                    reps,
                    &self.config.stab,
                    base.derive(v as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        for (v, c) in internal.into_iter().zip(built) {
            tree.attach_classifier(v, c)?;
        }
        self.tree = tree;
        Ok(())
    }

    fn transform_unchecked(&self, q: &[f64]) -> Vec<f64> {
        let x = self.projection.as_ref().map_or_else(|| q.to_vec(), |m| m.apply(q));
        let x: Vec<f64> = x.into_iter().map(|c| c * self.rescale_factor).collect();
        if self.config.snap_queries {
            snap_to_grid(&x, &self.grid)
        } else {
            x
        }
    }

    /// Map an original-space query into the working space.
    pub fn transform_query(&self, q: &[f64]) -> Result<Vec<f64>> {
        if q.len() != self.ambient_dim {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim,
                got: q.len(),
            });
        }
        if q.iter().any(|c| !c.is_finite()) {
            return Err(Error::contract("query coordinates must be finite"));
        }
        Ok(self.transform_unchecked(q))
    }

    pub fn count(&self, q: &[f64], verify: bool) -> Result<CountAnswer> {
        let x = self.transform_query(q)?;
        let leaf_sq = {
            let r = (1.0 + self.working_params.eps) * self.working_params.radius;
            r * r
        };
        let mut weight = 0.0;
        let mut visited = 0;
        let mut tallies = VerdictCounts::default();
        let mut ranges: Vec<(usize, usize)> = Vec::new();
        let take = |ranges: &mut Vec<(usize, usize)>, s: usize, e: usize| {
            if !verify {
                return;
            }
            match ranges.last_mut() {
                Some(last) if last.1 == s => last.1 = e,
                _ => ranges.push((s, e)),
            }
        };
        let mut stack = vec![self.tree.root()];
        while let Some(v) = stack.pop() {
            visited += 1;
            let node = self.tree.node(v);
            let Some((l, r)) = node.children else {
                let i = self.tree.members(v)[0];
                if sq_dist(self.working_points.point(i), &x) <= leaf_sq {
                    weight += node.cum_weight;
                    take(&mut ranges, node.start, node.start + 1);
                }
                continue;
            };
            let c = node.classifier.as_ref().expect("internal nodes carry classifiers");
            match c.classify(&x)? {
                Verdict::Covered => {
                    tallies.covered += 1;
                    weight += node.cum_weight;
                    take(&mut ranges, node.start, node.start + node.len);
                }
                Verdict::Disjoint => tallies.disjoint += 1,
                Verdict::Stabbed => {
                    tallies.stabbed += 1;
                    stack.push(r);
                    stack.push(l);
                }
            }
        }
        Ok(CountAnswer {
            weight,
            visited_nodes: visited,
            verdict_counts: tallies,
            member_ranges: verify.then_some(ranges),
        })
    }

    /// Point indices covered by path-order ranges, in path order.
    pub fn members_of(&self, ranges: &[(usize, usize)]) -> Vec<usize> {
        let order = self.tree.path().order();
        ranges.iter().flat_map(|&(s, e)| order[s..e].iter().copied()).collect()
    }

    pub fn tree(&self) -> &PartitionTree {
        &self.tree
    }

    pub fn path(&self) -> &SpanningPath {
        self.tree.path()
    }

    pub fn working_points(&self) -> &WeightedPointSet {
        &self.working_points
    }

    pub fn working_params(&self) -> EpsParams {
        self.working_params
    }

    pub fn projection(&self) -> Option<&GaussianProjection> {
        self.projection.as_ref()
    }

    pub fn rescale_factor(&self) -> f64 {
        self.rescale_factor
    }

    pub fn config(&self) -> &BuildConfig {
        &self.config
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn training_fingerprints(&self) -> Option<&BTreeSet<u64>> {
        self.training.as_ref()
    }

    /// Total number of points stored across all classifier copies.
    pub fn bucket_entries(&self) -> usize {
        self.tree
            .nodes()
            .iter()
            .filter_map(|n| n.classifier.as_ref())
            .map(StabClassifier::entries)
            .sum()
    }
}

/// Digest of a query list, for recording provided samples.
pub fn sample_digest(sample: &QuerySample) -> String {
    let fp: Vec<String> = sample.queries().iter().map(|q| format!("{:016x}", fingerprint(q))).collect();
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(fp.concat().as_bytes()))
}
