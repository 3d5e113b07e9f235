//! Graph storage, split bookkeeping and neighborhood queries.
//!
//! Adjacency is kept in compressed sparse row form, symmetric and free of
//! self-loops. Self-loops only appear later, inside the normalized
//! propagation operator.

mod io;
mod view;

use std::collections::VecDeque;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_graph, read_features, write_edges_csv, write_features_bin, write_features_csv,
    write_labels_csv, write_splits_json, FEATURE_MAGIC,
};
pub use view::{induced_view, SubgraphView};

/// Sorted set of node ids, strictly ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeSet(Vec<usize>);

impl NodeSet {
    pub fn new(ids: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = ids.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        NodeSet(v)
    }

    pub fn empty() -> Self {
        NodeSet(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn union(&self, other: &NodeSet) -> NodeSet {
        NodeSet::new(self.iter().chain(other.iter()))
    }

    pub fn difference(&self, other: &NodeSet) -> NodeSet {
        NodeSet(self.iter().filter(|&v| !other.contains(v)).collect())
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.iter().all(|v| other.contains(v))
    }

    pub fn max(&self) -> Option<usize> {
        self.0.last().copied()
    }
}

impl FromIterator<usize> for NodeSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        NodeSet::new(iter)
    }
}

/// Which of the three graphs a node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Val,
    Test,
}

/// Inductive: train/val/test are disjoint graphs and neighborhoods never
/// cross a partition boundary. Transductive: one shared graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    #[default]
    Inductive,
    Transductive,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: NodeSet,
    pub train_labeled: NodeSet,
    pub val: NodeSet,
    pub val_labeled: NodeSet,
    pub test: NodeSet,
    #[serde(rename = "test_targets")]
    pub test_targets: NodeSet,
}

impl Splits {
    pub fn partition(&self, p: Partition) -> &NodeSet {
        match p {
            Partition::Train => &self.train,
            Partition::Val => &self.val,
            Partition::Test => &self.test,
        }
    }

    fn all_sets(&self) -> [(&'static str, &NodeSet); 6] {
        [
            ("train", &self.train),
            ("train_labeled", &self.train_labeled),
            ("val", &self.val),
            ("val_labeled", &self.val_labeled),
            ("test", &self.test),
            ("test_targets", &self.test_targets),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    features: Array2<f32>,
    labels: Option<Vec<Option<usize>>>,
    n_classes: usize,
    splits: Splits,
    partition_of: Vec<Option<Partition>>,
    setting: Setting,
    external_ids: Vec<i64>,
}

impl Graph {
    /// Builds a graph from dense node ids. Edges are mirrored, deduplicated
    /// and stripped of self-loops.
    pub fn new(
        features: Array2<f32>,
        edges: &[(usize, usize)],
        labels: Option<Vec<Option<usize>>>,
        splits: Splits,
    ) -> Result<Graph> {
        let n = features.nrows();
        let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(edges.len() * 2);
        for &(u, v) in edges {
            for id in [u, v] {
                if id >= n {
                    return Err(Error::NodeOutOfRange {
                        id: id as i64,
                        n_nodes: n,
                    });
                }
            }
            if u != v {
                pairs.push((u, v));
                pairs.push((v, u));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut offsets = vec![0usize; n + 1];
        for &(u, _) in &pairs {
            offsets[u + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let neighbors = pairs.into_iter().map(|(_, v)| v).collect();

        let n_classes = match &labels {
            Some(ls) => {
                if ls.len() != n {
                    return Err(Error::Dimension(format!(
                        "{} label slots for {} nodes",
                        ls.len(),
                        n
                    )));
                }
                ls.iter().flatten().max().map_or(0, |&c| c + 1)
            }
            None => 0,
        };

        for (name, set) in splits.all_sets() {
            if let Some(max) = set.max() {
                if max >= n {
                    return Err(Error::NodeOutOfRange {
                        id: max as i64,
                        n_nodes: n,
                    });
                }
            }
            if name.ends_with("labeled") {
                for v in set.iter() {
                    if labels.as_ref().and_then(|ls| ls[v]).is_none() {
                        return Err(Error::Data(format!(
                            "node {v} flagged {name} but has no label"
                        )));
                    }
                }
            }
        }
        let pairs_subset = [
            ("train_labeled", &splits.train_labeled, "train", &splits.train),
            ("val_labeled", &splits.val_labeled, "val", &splits.val),
            ("test_targets", &splits.test_targets, "test", &splits.test),
        ];
        for (sub_name, sub, sup_name, sup) in pairs_subset {
            if !sub.is_subset(sup) {
                return Err(Error::Data(format!("{sub_name} is not a subset of {sup_name}")));
            }
        }

        let mut partition_of = vec![None; n];
        for p in [Partition::Train, Partition::Val, Partition::Test] {
            for v in splits.partition(p).iter() {
                if let Some(prev) = partition_of[v] {
                    return Err(Error::Data(format!(
                        "node {v} belongs to both {prev:?} and {p:?}"
                    )));
                }
                partition_of[v] = Some(p);
            }
        }

        Ok(Graph {
            offsets,
            neighbors,
            features,
            labels,
            n_classes,
            splits,
            partition_of,
            setting: Setting::Inductive,
            external_ids: (0..n as i64).collect(),
        })
    }

    pub fn with_setting(mut self, setting: Setting) -> Self {
        self.setting = setting;
        self
    }

    /// Overrides the class count inferred from the labels (useful when some
    /// class never appears in the label file).
    pub fn with_n_classes(mut self, n_classes: usize) -> Result<Self> {
        if let Some(ls) = &self.labels {
            if let Some(&bad) = ls.iter().flatten().find(|&&c| c >= n_classes) {
                return Err(Error::Data(format!(
                    "label {bad} out of range for {n_classes} classes"
                )));
            }
        }
        self.n_classes = n_classes;
        Ok(self)
    }

    pub(crate) fn with_external_ids(mut self, ids: Vec<i64>) -> Self {
        debug_assert_eq!(ids.len(), self.n_nodes());
        self.external_ids = ids;
        self
    }

    pub fn n_nodes(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn setting(&self) -> Setting {
        self.setting
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn features(&self) -> &Array2<f32> {
        &self.features
    }

    pub fn feature_row(&self, v: usize) -> ArrayView1<'_, f32> {
        self.features.row(v)
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn label(&self, v: usize) -> Option<usize> {
        self.labels.as_ref().and_then(|ls| ls[v])
    }

    pub fn labels(&self) -> Option<&[Option<usize>]> {
        self.labels.as_deref()
    }

    pub fn partition_of(&self, v: usize) -> Option<Partition> {
        self.partition_of[v]
    }

    /// External id of a dense node id (identity unless ids were remapped on load).
    pub fn external_id(&self, v: usize) -> i64 {
        self.external_ids[v]
    }

    /// Node set of one message-passing graph: the partition itself in the
    /// inductive setting, every node in the transductive one.
    pub fn graph_nodes(&self, p: Partition) -> NodeSet {
        match self.setting {
            Setting::Inductive => self.splits.partition(p).clone(),
            Setting::Transductive => NodeSet((0..self.n_nodes()).collect()),
        }
    }

    /// Iterates undirected edges once each as `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    /// Whether `u` may be reached from `targets` by message passing. In the
    /// inductive setting traversal stays inside the targets' partitions.
    pub(crate) fn region_filter(&self, targets: &NodeSet) -> impl Fn(usize) -> bool + '_ {
        let parts: Vec<Option<Partition>> = match self.setting {
            Setting::Inductive => {
                let mut p: Vec<_> = targets.iter().map(|t| self.partition_of[t]).collect();
                p.sort();
                p.dedup();
                p
            }
            Setting::Transductive => Vec::new(),
        };
        let inductive = self.setting == Setting::Inductive;
        move |u| !inductive || parts.contains(&self.partition_of[u])
    }
}

/// All nodes at shortest-path distance in `[1, k]` from any target.
pub fn k_hop_neighborhood(g: &Graph, targets: &NodeSet, k: usize) -> NodeSet {
    let allowed = g.region_filter(targets);
    let mut dist = vec![usize::MAX; g.n_nodes()];
    let mut queue = VecDeque::new();
    for t in targets.iter() {
        dist[t] = 0;
        queue.push_back(t);
    }
    let mut found = Vec::new();
    while let Some(u) = queue.pop_front() {
        if dist[u] == k {
            continue;
        }
        for &v in g.neighbors(u) {
            if dist[v] == usize::MAX && allowed(v) {
                dist[v] = dist[u] + 1;
                found.push(v);
                queue.push_back(v);
            }
        }
    }
    NodeSet::new(found)
}
