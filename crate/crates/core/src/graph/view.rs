use std::collections::HashMap;

use ndarray::Array2;

use super::{Graph, NodeSet};
use crate::error::{Error, Result};

/// Induced subgraph over an active node set.
///
/// Nodes carry local indices in insertion order; [`SubgraphView::push`]
/// grows the view by one node and links it to the already active nodes, so a
/// permutation walk never rebuilds the view from scratch.
#[derive(Debug, Clone)]
pub struct SubgraphView<'g> {
    graph: &'g Graph,
    nodes: Vec<usize>,
    local: HashMap<usize, usize>,
    adj: Vec<Vec<usize>>,
    n_edges: usize,
}

/// View exposing exactly the base edges with both endpoints in `active`.
pub fn induced_view<'g>(g: &'g Graph, active: &NodeSet) -> Result<SubgraphView<'g>> {
    let mut view = SubgraphView::empty(g);
    for v in active.iter() {
        view.push(v)?;
    }
    Ok(view)
}

impl<'g> SubgraphView<'g> {
    pub fn empty(graph: &'g Graph) -> Self {
        SubgraphView {
            graph,
            nodes: Vec::new(),
            local: HashMap::new(),
            adj: Vec::new(),
            n_edges: 0,
        }
    }

    /// Activates `v`, adding its edges to every already active node.
    pub fn push(&mut self, v: usize) -> Result<()> {
        if v >= self.graph.n_nodes() {
            return Err(Error::NodeOutOfRange {
                id: v as i64,
                n_nodes: self.graph.n_nodes(),
            });
        }
        if self.local.contains_key(&v) {
            return Err(Error::Data(format!("node {v} already active in view")));
        }
        let idx = self.nodes.len();
        let mut links = Vec::new();
        for &u in self.graph.neighbors(v) {
            if let Some(&j) = self.local.get(&u) {
                links.push(j);
                self.adj[j].push(idx);
            }
        }
        self.n_edges += links.len();
        self.local.insert(v, idx);
        self.nodes.push(v);
        self.adj.push(links);
        Ok(())
    }

    /// Same node set with every edge dropped.
    pub fn without_edges(&self) -> SubgraphView<'g> {
        SubgraphView {
            graph: self.graph,
            nodes: self.nodes.clone(),
            local: self.local.clone(),
            adj: vec![Vec::new(); self.nodes.len()],
            n_edges: 0,
        }
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Active nodes in local (insertion) order.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn active(&self) -> NodeSet {
        NodeSet::new(self.nodes.iter().copied())
    }

    pub fn contains(&self, v: usize) -> bool {
        self.local.contains_key(&v)
    }

    pub fn local_index(&self, v: usize) -> Option<usize> {
        self.local.get(&v).copied()
    }

    pub fn local_neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    /// Induced edges in global ids, each once, as `(min, max)` pairs sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_edges);
        for (i, links) in self.adj.iter().enumerate() {
            for &j in links {
                if i < j {
                    let (a, b) = (self.nodes[i], self.nodes[j]);
                    out.push((a.min(b), a.max(b)));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Feature rows of the active nodes, in local order, widened to f64.
    pub fn features(&self) -> Array2<f64> {
        let d = self.graph.feature_dim();
        let mut x = Array2::zeros((self.nodes.len(), d));
        for (i, &v) in self.nodes.iter().enumerate() {
            let row = self.graph.feature_row(v);
            for (dst, &src) in x.row_mut(i).iter_mut().zip(row.iter()) {
                *dst = f64::from(src);
            }
        }
        x
    }

    /// Local indices of `set`, which must be active.
    pub fn local_indices(&self, set: &NodeSet) -> Result<Vec<usize>> {
        set.iter()
            .map(|v| {
                self.local_index(v)
                    .ok_or_else(|| Error::Data(format!("node {v} is not active in the view")))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Setting, Splits};

    fn triangle() -> Graph {
        let feats = Array2::from_shape_fn((4, 2), |(i, j)| (i + j) as f32);
        Graph::new(feats, &[(0, 1), (1, 2), (0, 2), (2, 3)], None, Splits::default())
            .unwrap()
            .with_setting(Setting::Transductive)
    }

    #[test]
    fn induced_edge_counts() {
        let g = triangle();
        assert_eq!(induced_view(&g, &NodeSet::new([0, 1])).unwrap().n_edges(), 1);
        let single = induced_view(&g, &NodeSet::new([0])).unwrap();
        assert_eq!((single.len(), single.n_edges()), (1, 0));
        let all = induced_view(&g, &NodeSet::new(0..4)).unwrap();
        assert_eq!(all.edges(), g.edges().collect::<Vec<_>>());
    }

    #[test]
    fn idempotent_induction() {
        let g = triangle();
        let set = NodeSet::new([0, 2, 3]);
        let once = induced_view(&g, &set).unwrap();
        let twice = induced_view(&g, &once.active()).unwrap();
        assert_eq!(once.edges(), twice.edges());
    }

    #[test]
    fn incremental_matches_scratch() {
        let g = triangle();
        let mut view = SubgraphView::empty(&g);
        for v in [3, 0, 2, 1] {
            view.push(v).unwrap();
            let scratch = induced_view(&g, &view.active()).unwrap();
            assert_eq!(view.edges(), scratch.edges());
        }
        assert!(view.push(1).is_err());
    }

    #[test]
    fn features_restricted_to_active() {
        let g = triangle();
        let view = induced_view(&g, &NodeSet::new([2])).unwrap();
        let x = view.features();
        assert_eq!(x.shape(), &[1, 2]);
        assert_eq!(x[[0, 1]], 3.0);
        assert!(view.without_edges().n_edges() == 0);
    }
}
