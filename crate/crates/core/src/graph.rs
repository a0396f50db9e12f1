//! Item-graph construction from panel features.
//!
//! All graphs here are undirected and self-loop free; self-loops only appear
//! in [`normalize_adjacency`]. Edges are stored once with `i < j`, so
//! symmetry holds by construction.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{GemiError, Result};
use crate::ingest::LabelMatrix;
use crate::numerics::rng::bernoulli;
use crate::numerics::{dot, l2_normalize_rows, DenseMatrix, SparseAdjacency, SparseMatrix, NORMALIZE_EPS};
use crate::real::Real;
use crate::users::UserProfile;

/// Which rule created an edge. When an edge is produced by more than one
/// rule the first one wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    Knn,
    Epsilon,
    LabelAugment,
    Attachment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemGraph {
    n: usize,
    edges: BTreeMap<(usize, usize), EdgeKind>,
}

impl ItemGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            edges: BTreeMap::new(),
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Inserts the undirected edge `{i, j}` if absent. Self-loops are ignored.
    /// Returns whether a new edge was added.
    pub fn add_edge(&mut self, i: usize, j: usize, kind: EdgeKind) -> bool {
        assert!(i < self.n && j < self.n, "edge ({i}, {j}) out of range for {} nodes", self.n);
        if i == j {
            return false;
        }
        let key = (i.min(j), i.max(j));
        if self.edges.contains_key(&key) {
            return false;
        }
        self.edges.insert(key, kind);
        true
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains_key(&(i.min(j), i.max(j)))
    }

    pub fn kind(&self, i: usize, j: usize) -> Option<EdgeKind> {
        self.edges.get(&(i.min(j), i.max(j))).copied()
    }

    /// Undirected edges as `(i, j, kind)` with `i < j`, in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, EdgeKind)> + '_ {
        self.edges.iter().map(|(&(i, j), &k)| (i, j, k))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(i, j) in self.edges.keys() {
            d[i] += 1;
            d[j] += 1;
        }
        d
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .keys()
            .filter_map(|&(a, b)| if a == i { Some(b) } else if b == i { Some(a) } else { None })
            .collect();
        out.sort_unstable();
        out
    }

    /// Unit-weight symmetric adjacency, without self-loops.
    pub fn to_adjacency<T: Real>(&self) -> SparseAdjacency<T> {
        SparseAdjacency::from_undirected(self.n, self.edges.keys().map(|&(i, j)| (i, j, T::one())))
            .expect("item graph edges are valid by construction")
    }

    /// Union with another graph over the same nodes.
    pub fn union(&self, other: &ItemGraph) -> Result<ItemGraph> {
        if self.n != other.n {
            return Err(GemiError::shape("ItemGraph::union", self.n, other.n));
        }
        let mut out = self.clone();
        for (i, j, k) in other.edges() {
            out.add_edge(i, j, k);
        }
        Ok(out)
    }

    /// Subgraph induced by `nodes`, reindexed to `0..nodes.len()` in order.
    pub fn induced(&self, nodes: &[usize]) -> ItemGraph {
        let pos: BTreeMap<usize, usize> = nodes.iter().enumerate().map(|(p, &i)| (i, p)).collect();
        let mut out = ItemGraph::empty(nodes.len());
        for (i, j, k) in self.edges() {
            if let (Some(&a), Some(&b)) = (pos.get(&i), pos.get(&j)) {
                out.add_edge(a, b, k);
            }
        }
        out
    }
}

/// Indices of the `k` largest scores, descending; ties by ascending index.
pub fn top_k_by_score<T: Real>(scored: &mut [(usize, T)], k: usize) -> Vec<usize> {
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    scored.iter().take(k).map(|&(i, _)| i).collect()
}

fn normalized<T: Real>(x: &DenseMatrix<T>) -> DenseMatrix<T> {
    l2_normalize_rows(x, T::lit(NORMALIZE_EPS))
}

/// Symmetric kNN graph over `subset` (all nodes when `None`): every node
/// links to its `k` most cosine-similar distinct nodes, similarities floored
/// at `similarity_floor`, and the union of both directions is kept.
pub fn knn_graph_symmetric<T: Real>(
    x: &DenseMatrix<T>,
    k: usize,
    similarity_floor: T,
    subset: Option<&[usize]>,
) -> Result<ItemGraph> {
    let all: Vec<usize>;
    let nodes = match subset {
        Some(s) => s,
        None => {
            all = (0..x.rows()).collect();
            &all
        }
    };
    if k == 0 {
        return Err(GemiError::InvalidArgument("k must be >= 1".into()));
    }
    if k >= nodes.len() {
        return Err(GemiError::InvalidArgument(format!(
            "k = {k} must be smaller than the node count {}",
            nodes.len()
        )));
    }
    if let Some(&bad) = nodes.iter().find(|&&i| i >= x.rows()) {
        return Err(GemiError::InvalidArgument(format!("node {bad} out of range")));
    }
    let xn = normalized(x);
    let mut g = ItemGraph::empty(x.rows());
    let mut scored = Vec::with_capacity(nodes.len());
    for &i in nodes {
        scored.clear();
        for &j in nodes {
            if j != i {
                scored.push((j, dot(xn.row(i), xn.row(j)).max(similarity_floor)));
            }
        }
        for j in top_k_by_score(&mut scored, k) {
            g.add_edge(i, j, EdgeKind::Knn);
        }
    }
    Ok(g)
}

/// ε-graph: negative similarities are suppressed to zero and an edge joins
/// `i ≠ j` when the suppressed similarity is positive and at least `epsilon`.
pub fn epsilon_graph<T: Real>(x: &DenseMatrix<T>, epsilon: T) -> ItemGraph {
    let xn = normalized(x);
    let n = x.rows();
    let mut g = ItemGraph::empty(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let s = dot(xn.row(i), xn.row(j)).max(T::zero());
            if s > T::zero() && s >= epsilon {
                g.add_edge(i, j, EdgeKind::Epsilon);
            }
        }
    }
    g
}

/// Adds edges among training nodes positive for `label`: each links to its
/// `k_label` most similar fellow positives. When there are more than
/// `max_nodes` positives a uniform subsample of that size is used.
#[allow(clippy::too_many_arguments)]
pub fn augment_label_edges<T: Real>(
    g: &ItemGraph,
    x: &DenseMatrix<T>,
    labels: &LabelMatrix,
    label: usize,
    k_label: usize,
    max_nodes: usize,
    train_mask: &[bool],
    rng: &mut impl RngCore,
) -> Result<ItemGraph> {
    if label >= labels.cols() {
        return Err(GemiError::InvalidArgument(format!("label index {label} out of range")));
    }
    if k_label == 0 {
        return Err(GemiError::InvalidArgument("k_label must be >= 1".into()));
    }
    if x.rows() != g.n() || labels.rows() != g.n() || train_mask.len() != g.n() {
        return Err(GemiError::shape("augment_label_edges", g.n(), format!("{}/{}/{}", x.rows(), labels.rows(), train_mask.len())));
    }
    let mut positives: Vec<usize> = (0..g.n()).filter(|&i| train_mask[i] && labels.get(i, label)).collect();
    if positives.len() > max_nodes {
        let mut picked: Vec<usize> = sample(rng, positives.len(), max_nodes).into_iter().map(|p| positives[p]).collect();
        picked.sort_unstable();
        positives = picked;
    }
    let mut out = g.clone();
    if positives.len() < 2 {
        return Ok(out);
    }
    let xn = normalized(x);
    let k = k_label.min(positives.len() - 1);
    let mut scored = Vec::with_capacity(positives.len());
    for &i in &positives {
        scored.clear();
        for &j in &positives {
            if j != i {
                scored.push((j, dot(xn.row(i), xn.row(j))));
            }
        }
        for j in top_k_by_score(&mut scored, k) {
            out.add_edge(i, j, EdgeKind::LabelAugment);
        }
    }
    Ok(out)
}

/// Keeps each undirected edge with probability `1 − p`, one draw per edge in
/// sorted edge order. Edges whose kind is in `exempt` are always kept and
/// consume no draw.
pub fn edge_dropout(g: &ItemGraph, p: f64, exempt: &[EdgeKind], rng: &mut impl RngCore) -> Result<ItemGraph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(GemiError::InvalidArgument(format!("edge dropout must be in [0, 1], got {p}")));
    }
    let mut out = ItemGraph::empty(g.n());
    for (i, j, k) in g.edges() {
        if exempt.contains(&k) || bernoulli(rng, 1.0 - p) {
            out.add_edge(i, j, k);
        }
    }
    Ok(out)
}

/// `1 / √((dᵢ + 1)(dⱼ + 1))`, the self-loop-augmented symmetric weight.
fn pair_weight<T: Real>(di: usize, dj: usize) -> T {
    (T::count(di + 1) * T::count(dj + 1)).sqrt().recip()
}

/// `D̂^{-1/2} (A + I) D̂^{-1/2}` with `D̂` the degree matrix of `A + I`.
pub fn normalize_adjacency<T: Real>(g: &ItemGraph) -> SparseAdjacency<T> {
    let deg = g.degrees();
    let mut entries: Vec<(usize, usize, T)> = (0..g.n()).map(|i| (i, i, pair_weight(deg[i], deg[i]))).collect();
    for (i, j, _) in g.edges() {
        let w = pair_weight(deg[i], deg[j]);
        entries.push((i, j, w));
        entries.push((j, i, w));
    }
    SparseAdjacency::from_entries(g.n(), entries).expect("normalized adjacency is symmetric")
}

/// Extends a training graph with test nodes `n_train..n_train + n_test`; each
/// test node links to its `k` most similar training nodes (similarities
/// floored at zero, ties by ascending index). No test–test edges are created.
pub fn attach_test_items<T: Real>(
    train_graph: &ItemGraph,
    x_train: &DenseMatrix<T>,
    x_test: &DenseMatrix<T>,
    k: usize,
) -> Result<ItemGraph> {
    let n_train = train_graph.n();
    if x_train.rows() != n_train {
        return Err(GemiError::shape("attach_test_items", n_train, x_train.rows()));
    }
    if x_train.cols() != x_test.cols() {
        return Err(GemiError::shape("attach_test_items", x_train.cols(), x_test.cols()));
    }
    if k == 0 || k > n_train {
        return Err(GemiError::InvalidArgument(format!(
            "attachment k = {k} must be in 1..={n_train}"
        )));
    }
    let tr = normalized(x_train);
    let te = normalized(x_test);
    let mut g = ItemGraph::empty(n_train + x_test.rows());
    for (i, j, kind) in train_graph.edges() {
        g.add_edge(i, j, kind);
    }
    let mut scored = Vec::with_capacity(n_train);
    for t in 0..x_test.rows() {
        scored.clear();
        for s in 0..n_train {
            scored.push((s, dot(te.row(t), tr.row(s)).max(T::zero())));
        }
        for s in top_k_by_score(&mut scored, k) {
            g.add_edge(n_train + t, s, EdgeKind::Attachment);
        }
    }
    Ok(g)
}

/// Propagation operator for inference on an attached graph.
///
/// Rows of training nodes equal the symmetric normalisation of the training
/// subgraph alone; a test row holds `1/√(d̂_t d̂_s)` for each attached training
/// node `s` plus its own self-loop, with `d̂` the self-loop-augmented degree
/// (test nodes counted only on their own row). Information therefore flows
/// from training nodes to test nodes and never back, so a test node's
/// prediction cannot depend on any other test node.
pub fn inductive_propagation<T: Real>(attached: &ItemGraph, n_train: usize) -> Result<SparseMatrix<T>> {
    let n = attached.n();
    let mut train_deg = vec![0usize; n_train];
    let mut test_nbrs: Vec<Vec<usize>> = vec![Vec::new(); n - n_train];
    for (i, j, _) in attached.edges() {
        match (i < n_train, j < n_train) {
            (true, true) => {
                train_deg[i] += 1;
                train_deg[j] += 1;
            }
            (true, false) => test_nbrs[j - n_train].push(i),
            (false, true) => test_nbrs[i - n_train].push(j),
            (false, false) => {
                return Err(GemiError::Validation(format!("test-test edge ({i}, {j}) in attached graph")));
            }
        }
    }
    let mut trip = Vec::new();
    for i in 0..n_train {
        trip.push((i, i, pair_weight(train_deg[i], train_deg[i])));
    }
    for (i, j, _) in attached.edges() {
        if i < n_train && j < n_train {
            let w = pair_weight(train_deg[i], train_deg[j]);
            trip.push((i, j, w));
            trip.push((j, i, w));
        }
    }
    for (t, nbrs) in test_nbrs.iter().enumerate() {
        let row = n_train + t;
        let dt = nbrs.len();
        trip.push((row, row, pair_weight(dt, dt)));
        for &s in nbrs {
            trip.push((row, s, pair_weight(dt, train_deg[s])));
        }
    }
    SparseMatrix::from_triplets(n, trip)
}

/// Users joined to the items they interacted with, plus the item–item graph.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    pub num_users: usize,
    pub num_items: usize,
    /// `(user, item)` pairs in profile order.
    pub user_item: Vec<(usize, usize)>,
    pub item_graph: ItemGraph,
}

impl BipartiteGraph {
    pub fn user_degree(&self, u: usize) -> usize {
        self.user_item.iter().filter(|&&(a, _)| a == u).count()
    }

    /// Joint undirected graph with users at `num_items..num_items + num_users`.
    pub fn to_item_graph(&self) -> ItemGraph {
        let mut g = ItemGraph::empty(self.num_items + self.num_users);
        for (i, j, k) in self.item_graph.edges() {
            g.add_edge(i, j, k);
        }
        for &(u, i) in &self.user_item {
            g.add_edge(self.num_items + u, i, EdgeKind::Attachment);
        }
        g
    }
}

pub fn build_user_item_graph(profiles: &[UserProfile], item_graph: &ItemGraph) -> Result<BipartiteGraph> {
    let mut user_item = Vec::new();
    for (u, p) in profiles.iter().enumerate() {
        for &i in &p.items {
            if i >= item_graph.n() {
                return Err(GemiError::InvalidArgument(format!(
                    "profile {} references item {i} outside {} items",
                    p.user_id,
                    item_graph.n()
                )));
            }
            user_item.push((u, i));
        }
    }
    Ok(BipartiteGraph {
        num_users: profiles.len(),
        num_items: item_graph.n(),
        user_item,
        item_graph: item_graph.clone(),
    })
}

/// User node features: mean of the interacted items' rows (zero row for an
/// empty profile).
pub fn user_features<T: Real>(profiles: &[UserProfile], x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let mut out = DenseMatrix::zeros(profiles.len(), x.cols());
    for (u, p) in profiles.iter().enumerate() {
        if !p.items.is_empty() {
            let m = x.mean_of_rows(&p.items)?;
            out.row_mut(u).copy_from_slice(&m);
        }
    }
    Ok(out)
}
