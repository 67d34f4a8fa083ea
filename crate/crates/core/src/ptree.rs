//! Spanning paths and binary partition trees over them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{sq_dist, EpsParams, WeightedPointSet};
use crate::spantree::SpanningTree;
use crate::stabber::StabClassifier;

/// A permutation of `0..n` listing points in path order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanningPath {
    order: Vec<usize>,
}

impl SpanningPath {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &i in &order {
            if i >= order.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::contract(format!("path order is not a permutation (at {i})")));
            }
        }
        Ok(SpanningPath { order })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Consecutive pairs as edges `(order[i], order[i+1])`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.order.windows(2).map(|w| (w[0], w[1]))
    }
}

/// First-visit order of a depth-first search from vertex 0, children in
/// ascending index order.
pub fn tree_to_path(t: &SpanningTree, pts: &WeightedPointSet) -> Result<SpanningPath> {
    let n = t.n();
    if n != pts.len() {
        return Err(Error::contract(format!("tree spans {n} vertices but there are {} points", pts.len())));
    }
    let mut adj = vec![Vec::new(); n];
    for e in t.edges() {
        adj[e.a].push(e.b);
        adj[e.b].push(e.a);
    }
    for a in &mut adj {
        a.sort_unstable();
    }
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    while let Some(v) = stack.pop() {
        if std::mem::replace(&mut seen[v], true) {
            continue;
        }
        order.push(v);
        stack.extend(adj[v].iter().rev().filter(|&&c| !seen[c]));
    }
    if order.len() != n {
        return Err(Error::contract("spanning tree is disconnected"));
    }
    SpanningPath::new(order)
}

/// One node of a [`PartitionTree`]: the path-order slice `start..start+len`.
#[derive(Clone, Debug)]
pub struct PNode {
    pub start: usize,
    pub len: usize,
    pub cum_weight: f64,
    pub children: Option<(usize, usize)>,
    pub depth: usize,
    pub classifier: Option<StabClassifier>,
}

impl PNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Near-complete binary tree over a spanning path. Nodes are stored in level
/// order with the root at index 0; a node of size `m` gives its left child
/// `ceil(m/2)` points.
#[derive(Clone, Debug)]
pub struct PartitionTree {
    nodes: Vec<PNode>,
    path: SpanningPath,
}

pub fn path_to_partition_tree(p: &SpanningPath, pts: &WeightedPointSet) -> Result<PartitionTree> {
    let n = p.len();
    if n == 0 || n != pts.len() {
        return Err(Error::contract(format!("path of length {n} does not match {} points", pts.len())));
    }
    let mut nodes = vec![PNode {
        start: 0,
        len: n,
        cum_weight: 0.0,
        children: None,
        depth: 0,
        classifier: None,
    }];
    let mut head = 0;
    while head < nodes.len() {
        let (start, len, depth) = (nodes[head].start, nodes[head].len, nodes[head].depth);
        if len > 1 {
            let left = len.div_ceil(2);
            let l = nodes.len();
            for (s, m) in [(start, left), (start + left, len - left)] {
                nodes.push(PNode {
                    start: s,
                    len: m,
                    cum_weight: 0.0,
                    children: None,
                    depth: depth + 1,
                    classifier: None,
                });
            }
            nodes[head].children = Some((l, l + 1));
        }
        head += 1;
    }
    // children always come after their parent
    for v in (0..nodes.len()).rev() {
        nodes[v].cum_weight = match nodes[v].children {
            Some((l, r)) => nodes[l].cum_weight + nodes[r].cum_weight,
            None => pts.weight(p.order()[nodes[v].start]),
        };
    }
    Ok(PartitionTree { nodes, path: p.clone() })
}

impl PartitionTree {
    pub fn nodes(&self) -> &[PNode] {
        &self.nodes
    }

    pub fn node(&self, v: usize) -> &PNode {
        &self.nodes[v]
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn n_points(&self) -> usize {
        self.path.len()
    }

    pub fn path(&self) -> &SpanningPath {
        &self.path
    }

    /// Point indices of node `v`.
    pub fn members(&self, v: usize) -> &[usize] {
        let nd = &self.nodes[v];
        &self.path.order()[nd.start..nd.start + nd.len]
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn internal_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&v| !self.nodes[v].is_leaf())
    }

    pub fn attach_classifier(&mut self, v: usize, c: StabClassifier) -> Result<()> {
        if self.nodes[v].is_leaf() {
            return Err(Error::contract(format!("node {v} is a leaf")));
        }
        self.nodes[v].classifier = Some(c);
        Ok(())
    }
}

/// Per-node distance summary used by the visiting-number rules.
#[derive(Clone, Copy, Default)]
struct Flags {
    near: bool,
    far: bool,
    annulus: bool,
    all_within_outer: bool,
}

impl Flags {
    fn merge(self, o: Flags) -> Flags {
        Flags {
            near: self.near || o.near,
            far: self.far || o.far,
            annulus: self.annulus || o.annulus,
            all_within_outer: self.all_within_outer && o.all_within_outer,
        }
    }

    fn charges_children(self) -> bool {
        let stabbed = self.near && self.far;
        stabbed || (self.annulus && (self.all_within_outer || !self.near))
    }
}

/// Root plus both children of every internal node `u` such that `P_u` is
/// ε-stabbed by `q`, or `P_u` has a point in the annulus and either lies
/// inside the outer ball or misses the inner ball.
pub fn visiting_number(t: &PartitionTree, q: &[f64], pts: &WeightedPointSet, params: &EpsParams) -> Result<usize> {
    pts.check_query(q)?;
    let (inner, outer) = (params.inner_sq(), params.outer_sq());
    let mut flags = vec![Flags::default(); t.nodes.len()];
    let mut count = 1;
    for v in (0..t.nodes.len()).rev() {
        flags[v] = match t.nodes[v].children {
            Some((l, r)) => {
                let f = flags[l].merge(flags[r]);
                if f.charges_children() {
                    count += 2;
                }
                f
            }
            None => {
                let d = sq_dist(q, pts.point(t.members(v)[0]));
                Flags {
                    near: d <= inner,
                    far: d >= outer,
                    annulus: d > inner && d <= outer,
                    all_within_outer: d <= outer,
                }
            }
        };
    }
    Ok(count)
}

/// Leaf order of `t`, left to right.
pub fn canonical_path_of_tree(t: &PartitionTree) -> SpanningPath {
    let mut order = Vec::with_capacity(t.n_points());
    let mut stack = vec![t.root()];
    while let Some(v) = stack.pop() {
        match t.nodes[v].children {
            Some((l, r)) => {
                stack.push(r);
                stack.push(l);
            }
            None => order.push(t.members(v)[0]),
        }
    }
    SpanningPath { order }
}
