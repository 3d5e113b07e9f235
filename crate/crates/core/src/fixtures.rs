//! Small random instances (graph, targets, model, extractor) for tests,
//! examples and the oracle checks.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::features::{FeatureConfig, FeatureExtractor, FixedLabels, TrainStats};
use crate::graph::{induced_view, Graph, NodeSet, Setting, Splits};
use crate::model::{forward, Conv, Layer, ModelParams};
use crate::seed;

pub struct Instance {
    pub graph: Graph,
    pub targets: NodeSet,
    pub extractor: FeatureExtractor,
}

impl Instance {
    pub fn k(&self) -> usize {
        self.extractor.params.k_hops()
    }
}

fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize, sd: f64) -> Array2<f64> {
    let n = Normal::new(0.0, sd).expect("sd > 0");
    Array2::from_shape_simple_fn((rows, cols), || n.sample(rng))
}

/// A random two-layer classifier over `dim` inputs and `classes` outputs.
pub fn random_model(seed: u64, dim: usize, classes: usize, conv: Conv, k: usize) -> ModelParams {
    let mut rng = seed::rng(seed::derive(seed, "fixture-model", 0));
    let hidden = 4;
    let layer = |rng: &mut _, out: usize, inp: usize| Layer {
        weight: gaussian(rng, out, inp, 1.5).mapv(|v| v as f32),
        bias: Array1::from_iter(gaussian(rng, out, 1, 0.3).iter().map(|&v| v as f32)),
    };
    let l1 = layer(&mut rng, hidden, dim);
    let l2 = layer(&mut rng, classes, hidden);
    ModelParams::new(vec![l1, l2], conv, k).expect("consistent layer sizes")
}

/// Builds the extractor for `g` with random training statistics and labels
/// fixed from the model's output on the whole graph.
pub fn random_extractor(seed: u64, g: &Graph, params: ModelParams, targets: &NodeSet) -> FeatureExtractor {
    let mut rng = seed::rng(seed::derive(seed, "fixture-stats", 0));
    let d = g.feature_dim();
    let c = params.n_classes();
    let stats = TrainStats {
        mean_train_repr: gaussian(&mut rng, 1, d, 1.0).row(0).to_owned(),
        class_prototypes: gaussian(&mut rng, c, d, 1.0),
    };
    let all = NodeSet::new(0..g.n_nodes());
    let view = induced_view(g, &all).expect("all nodes are in range");
    let pred = forward(&params, &view).expect("dimensions match");
    let fixed = FixedLabels::from_predictions(&pred, targets).expect("targets predicted");
    FeatureExtractor::new(params, stats, fixed, FeatureConfig::default())
}

/// Random connected-ish graph on `n` nodes with labels everywhere; the first
/// `n_targets` nodes are the targets. Some extra nodes may be isolated.
pub fn random_graph(seed: u64, n: usize, n_targets: usize, classes: usize) -> (Graph, NodeSet) {
    let mut rng = seed::rng(seed::derive(seed, "fixture-graph", 0));
    let dim = 3;
    let x = gaussian(&mut rng, n, dim, 1.0).mapv(|v| v as f32);
    let mut edges = Vec::new();
    for v in 1..n {
        // attach to an earlier node most of the time; otherwise leave for
        // the random extra edges (or isolation)
        if rng.random::<f64>() < 0.85 {
            edges.push((rng.random_range(0..v), v));
        }
    }
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < 0.15 {
                edges.push((u, v));
            }
        }
    }
    let labels = (0..n).map(|_| Some(rng.random_range(0..classes))).collect();
    let g = Graph::new(x, &edges, Some(labels), Splits::default())
        .expect("valid fixture graph")
        .with_setting(Setting::Transductive)
        .with_n_classes(classes)
        .expect("labels in range");
    (g, NodeSet::new(0..n_targets))
}

/// Random instance with between 3 and `max_nodes` nodes.
pub fn random_instance(seed: u64, max_nodes: usize) -> Instance {
    let mut rng = seed::rng(seed::derive(seed, "fixture-shape", 0));
    let n = rng.random_range(3..=max_nodes.max(3));
    let n_targets = if n > 4 && rng.random::<bool>() { 2 } else { 1 };
    let conv = if rng.random::<bool>() { Conv::Sgc } else { Conv::Gcn };
    let k = rng.random_range(1..=2);
    let (graph, targets) = random_graph(seed, n, n_targets, 3);
    let params = random_model(seed, graph.feature_dim(), 3, conv, k);
    let extractor = random_extractor(seed, &graph, params, &targets);
    Instance {
        graph,
        targets,
        extractor,
    }
}

/// Target 0 followed by a path of `len` neighbors; only one order exists
/// when `k >= len`.
pub fn chain_instance(seed: u64, len: usize, k: usize) -> Instance {
    let n = len + 1;
    let mut rng = seed::rng(seed::derive(seed, "fixture-chain", 0));
    let x = gaussian(&mut rng, n, 3, 1.0).mapv(|v| v as f32);
    let edges: Vec<(usize, usize)> = (0..len).map(|i| (i, i + 1)).collect();
    let labels = (0..n).map(|_| Some(rng.random_range(0..3))).collect();
    let graph = Graph::new(x, &edges, Some(labels), Splits::default())
        .expect("valid chain")
        .with_setting(Setting::Transductive)
        .with_n_classes(3)
        .expect("labels in range");
    let targets = NodeSet::new([0]);
    let params = random_model(seed, 3, 3, Conv::Sgc, k);
    let extractor = random_extractor(seed, &graph, params, &targets);
    Instance {
        graph,
        targets,
        extractor,
    }
}

/// Target 0 joined to `leaves` leaves that all share one feature row, so
/// every leaf is interchangeable.
pub fn star_instance(seed: u64, leaves: usize) -> Instance {
    let n = leaves + 1;
    let mut rng = seed::rng(seed::derive(seed, "fixture-star", 0));
    let hub = gaussian(&mut rng, 1, 3, 1.0);
    let leaf = gaussian(&mut rng, 1, 3, 1.0);
    let x = Array2::from_shape_fn((n, 3), |(i, j)| {
        let v = if i == 0 { hub[[0, j]] } else { leaf[[0, j]] };
        v as f32
    });
    let edges: Vec<(usize, usize)> = (1..n).map(|i| (0, i)).collect();
    let labels = (0..n).map(|i| Some(if i == 0 { 1 } else { 2 })).collect();
    let graph = Graph::new(x, &edges, Some(labels), Splits::default())
        .expect("valid star")
        .with_setting(Setting::Transductive)
        .with_n_classes(3)
        .expect("labels in range");
    let targets = NodeSet::new([0]);
    let params = random_model(seed, 3, 3, Conv::Gcn, 1);
    let extractor = random_extractor(seed, &graph, params, &targets);
    Instance {
        graph,
        targets,
        extractor,
    }
}
