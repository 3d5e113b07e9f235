//! The fixed node classifier: an MLP trained on raw features that runs
//! SGC- or GCN-style message passing at inference, plus label propagation.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{induced_view, Graph, NodeSet, Partition, SubgraphView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Conv {
    /// Propagate features `k` times, then run the MLP.
    #[default]
    Sgc,
    /// One propagation after each of the first `min(k, layers)` linear layers.
    Gcn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`
    pub weight: Array2<f32>,
    pub bias: Array1<f32>,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

#[derive(Debug, Clone)]
struct Layer64 {
    weight: Array2<f64>,
    bias: Array1<f64>,
}

impl From<&Layer> for Layer64 {
    fn from(l: &Layer) -> Self {
        Layer64 {
            weight: l.weight.mapv(f64::from),
            bias: l.bias.mapv(f64::from),
        }
    }
}

/// Trained weights plus the inference-time propagation scheme.
#[derive(Debug, Clone)]
pub struct ModelParams {
    layers: Vec<Layer>,
    conv: Conv,
    k_hops: usize,
    wide: Vec<Layer64>,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.conv == other.conv && self.k_hops == other.k_hops
    }
}

impl ModelParams {
    pub fn new(layers: Vec<Layer>, conv: Conv, k_hops: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Dimension("model needs at least one layer".into()));
        }
        if k_hops == 0 {
            return Err(Error::Config("k_hops must be at least 1".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::Dimension(format!("layer {i}: bias length mismatch")));
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(Error::Dimension(format!(
                    "layer {i} expects {} inputs, previous layer emits {}",
                    l.in_dim(),
                    layers[i - 1].out_dim()
                )));
            }
        }
        let wide = layers.iter().map(Layer64::from).collect();
        Ok(ModelParams {
            layers,
            conv,
            k_hops,
            wide,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn conv(&self) -> Conv {
        self.conv
    }

    pub fn k_hops(&self) -> usize {
        self.k_hops
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    /// Same weights, different propagation scheme.
    pub fn with_propagation(&self, conv: Conv, k_hops: usize) -> Result<Self> {
        ModelParams::new(self.layers.clone(), conv, k_hops)
    }

    fn gcn_propagations(&self) -> usize {
        self.k_hops.min(self.layers.len())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&ModelFile::from(self)).expect("model serialize");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile =
            serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        file.try_into()
    }
}

/// JSON layout of a model file. Weights are row-major decimal f32 arrays;
/// shortest round-trip formatting keeps them bit-exact.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub conv: Conv,
    pub k_hops: usize,
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<f32>>,
    pub biases: Vec<Vec<f32>>,
}

impl From<&ModelParams> for ModelFile {
    fn from(p: &ModelParams) -> Self {
        let mut layer_dims = vec![p.input_dim()];
        layer_dims.extend(p.layers.iter().map(Layer::out_dim));
        ModelFile {
            conv: p.conv,
            k_hops: p.k_hops,
            layer_dims,
            weights: p.layers.iter().map(|l| l.weight.iter().copied().collect()).collect(),
            biases: p.layers.iter().map(|l| l.bias.to_vec()).collect(),
        }
    }
}

impl TryFrom<ModelFile> for ModelParams {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let n_layers = f.layer_dims.len().saturating_sub(1);
        if f.weights.len() != n_layers || f.biases.len() != n_layers {
            return Err(Error::Dimension("layer_dims disagree with weight arrays".into()));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for (i, (w, b)) in f.weights.into_iter().zip(f.biases).enumerate() {
            let (inp, out) = (f.layer_dims[i], f.layer_dims[i + 1]);
            let weight = Array2::from_shape_vec((out, inp), w)
                .map_err(|e| Error::Dimension(format!("layer {i}: {e}")))?;
            layers.push(Layer {
                weight,
                bias: Array1::from(b),
            });
        }
        ModelParams::new(layers, f.conv, f.k_hops)
    }
}

/// Symmetric normalized operator `D^-1/2 (A + I) D^-1/2` over a view, stored
/// row-wise in local indices.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    rows: Vec<Vec<(usize, f64)>>,
}

pub fn normalize_adjacency(view: &SubgraphView<'_>) -> NormalizedAdjacency {
    let m = view.len();
    let deg: Vec<f64> = (0..m)
        .map(|i| (view.local_neighbors(i).len() + 1) as f64)
        .collect();
    let rows = (0..m)
        .map(|i| {
            let mut row = Vec::with_capacity(view.local_neighbors(i).len() + 1);
            row.push((i, 1.0 / deg[i]));
            for &j in view.local_neighbors(i) {
                row.push((j, 1.0 / (deg[i] * deg[j]).sqrt()));
            }
            row
        })
        .collect();
    NormalizedAdjacency { rows }
}

impl NormalizedAdjacency {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn is_identity(&self) -> bool {
        self.rows.iter().all(|r| r.len() == 1)
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(x.raw_dim());
        for (i, row) in self.rows.iter().enumerate() {
            let mut dst = out.row_mut(i);
            for &(j, w) in row {
                dst.scaled_add(w, &x.row(j));
            }
        }
        out
    }

    pub fn apply_k(&self, x: &Array2<f64>, k: usize) -> Array2<f64> {
        let mut h = x.clone();
        if self.is_identity() {
            return h;
        }
        for _ in 0..k {
            h = self.apply(&h);
        }
        h
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let m = self.rows.len();
        let mut a = Array2::zeros((m, m));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                a[[i, j]] = w;
            }
        }
        a
    }
}

/// Row-stochastic class probabilities for the nodes of a view.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    nodes: Vec<usize>,
    sorted: Vec<(usize, usize)>,
    probs: Array2<f64>,
}

impl Predictions {
    pub fn new(nodes: Vec<usize>, probs: Array2<f64>) -> Self {
        debug_assert_eq!(nodes.len(), probs.nrows());
        let mut sorted: Vec<(usize, usize)> =
            nodes.iter().copied().enumerate().map(|(i, v)| (v, i)).collect();
        sorted.sort_unstable();
        Predictions {
            nodes,
            sorted,
            probs,
        }
    }

    /// Node ids in row order.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn n_classes(&self) -> usize {
        self.probs.ncols()
    }

    pub fn row_index(&self, node: usize) -> Option<usize> {
        self.sorted
            .binary_search_by_key(&node, |&(v, _)| v)
            .ok()
            .map(|k| self.sorted[k].1)
    }

    pub fn row(&self, node: usize) -> Option<ndarray::ArrayView1<'_, f64>> {
        self.row_index(node).map(|i| self.probs.row(i))
    }

    /// Predicted class of `node`, ties broken toward the lowest class index.
    pub fn predicted_class(&self, node: usize) -> Option<usize> {
        self.row(node).map(|r| argmax(r.iter().copied()))
    }
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn linear(h: &Array2<f64>, layer: &Layer64) -> Array2<f64> {
    h.dot(&layer.weight.t()) + &layer.bias
}

fn mlp_logits(layers: &[Layer64], input: Array2<f64>, a_hat: Option<(&NormalizedAdjacency, usize)>) -> Array2<f64> {
    let mut h = input;
    let last = layers.len() - 1;
    for (l, layer) in layers.iter().enumerate() {
        let mut z = linear(&h, layer);
        if let Some((a, n_prop)) = a_hat {
            if l < n_prop {
                z = a.apply(&z);
            }
        }
        if l < last {
            z.mapv_inplace(|v| v.max(0.0));
        }
        h = z;
    }
    h
}

/// Class probabilities for every node of `view`.
pub fn forward(params: &ModelParams, view: &SubgraphView<'_>) -> Result<Predictions> {
    let x = view.features();
    if x.ncols() != params.input_dim() {
        return Err(Error::Dimension(format!(
            "view has {} features, model expects {}",
            x.ncols(),
            params.input_dim()
        )));
    }
    let a = normalize_adjacency(view);
    let mut z = match params.conv {
        Conv::Sgc => mlp_logits(&params.wide, a.apply_k(&x, params.k_hops), None),
        Conv::Gcn => mlp_logits(&params.wide, x, Some((&a, params.gcn_propagations()))),
    };
    softmax_rows(&mut z);
    Ok(Predictions::new(view.nodes().to_vec(), z))
}

/// Iterates `P <- alpha * A P + (1 - alpha) * P0` over the view's edges and
/// renormalizes rows.
pub fn label_propagation(
    view: &SubgraphView<'_>,
    init: &Predictions,
    alpha: f64,
    iters: usize,
) -> Result<Predictions> {
    if init.nodes() != view.nodes() {
        return Err(Error::Dimension("initial predictions do not match view nodes".into()));
    }
    let a = normalize_adjacency(view);
    let p0 = init.probs();
    let mut p = p0.clone();
    if !a.is_identity() {
        for _ in 0..iters {
            let mut next = a.apply(&p);
            next.mapv_inplace(|v| alpha * v);
            next.scaled_add(1.0 - alpha, p0);
            p = next;
        }
    }
    for mut row in p.rows_mut() {
        let s = row.sum();
        if s > 0.0 {
            row.mapv_inplace(|v| v / s);
        }
    }
    Ok(Predictions::new(view.nodes().to_vec(), p))
}

/// Fraction of `nodes` whose predicted class equals its label.
pub fn accuracy(pred: &Predictions, graph: &Graph, nodes: &NodeSet) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    let mut correct = 0usize;
    for v in nodes.iter() {
        let y = graph.label(v).ok_or(Error::Unlabeled(v))?;
        let yhat = pred
            .predicted_class(v)
            .ok_or_else(|| Error::Data(format!("no prediction for node {v}")))?;
        if y == yhat {
            correct += 1;
        }
    }
    Ok(correct as f64 / nodes.len() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub conv: Conv,
    pub k_hops: usize,
    /// Train with message passing active (transductive full GNN) instead of
    /// as a plain MLP.
    pub propagate: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![32],
            epochs: 200,
            lr: 0.1,
            batch_size: 64,
            seed: 0,
            conv: Conv::Sgc,
            k_hops: 2,
            propagate: false,
        }
    }
}

/// Per-epoch mean training loss.
pub type TrainLog = Vec<f64>;

fn init_layers(dims: &[usize], rng: &mut ChaCha8Rng) -> Vec<Layer64> {
    dims.windows(2)
        .map(|w| {
            let (inp, out) = (w[0], w[1]);
            let limit = (6.0 / (inp + out) as f64).sqrt();
            // Round through f32 so epochs=0 reproduces the stored weights.
            let weight = Array2::from_shape_fn((out, inp), |_| {
                f64::from(rng.random_range(-limit..limit) as f32)
            });
            Layer64 {
                weight,
                bias: Array1::zeros(out),
            }
        })
        .collect()
}

struct Gradients {
    loss: f64,
    layers: Vec<Layer64>,
}

/// Mean cross-entropy over `rows` and its gradient. `a_hat` applies the
/// operator after the first `n_prop` linear layers.
fn backprop(
    layers: &[Layer64],
    input: &Array2<f64>,
    a_hat: Option<(&NormalizedAdjacency, usize)>,
    rows: &[usize],
    targets: &[usize],
) -> Gradients {
    let last = layers.len() - 1;
    let mut acts = vec![input.clone()];
    let mut pre = Vec::with_capacity(layers.len());
    for (l, layer) in layers.iter().enumerate() {
        let mut z = linear(&acts[l], layer);
        if let Some((a, n_prop)) = a_hat {
            if l < n_prop {
                z = a.apply(&z);
            }
        }
        if l < last {
            acts.push(z.mapv(|v| v.max(0.0)));
        }
        pre.push(z);
    }

    let mut probs = pre[last].clone();
    softmax_rows(&mut probs);
    let scale = 1.0 / rows.len() as f64;
    let mut loss = 0.0;
    let mut dz = Array2::zeros(probs.raw_dim());
    for (&r, &y) in rows.iter().zip(targets) {
        loss -= probs[[r, y]].max(1e-300).ln();
        let mut g = dz.row_mut(r);
        g.assign(&probs.row(r));
        g[y] -= 1.0;
        g.mapv_inplace(|v| v * scale);
    }
    loss *= scale;

    let mut grads = vec![
        Layer64 {
            weight: Array2::zeros((0, 0)),
            bias: Array1::zeros(0),
        };
        layers.len()
    ];
    for l in (0..layers.len()).rev() {
        let du = match a_hat {
            // The operator is symmetric, so its transpose is itself.
            Some((a, n_prop)) if l < n_prop => a.apply(&dz),
            _ => dz,
        };
        grads[l] = Layer64 {
            weight: du.t().dot(&acts[l]),
            bias: du.sum_axis(Axis(0)),
        };
        if l > 0 {
            let mut da = du.dot(&layers[l].weight);
            da.zip_mut_with(&pre[l - 1], |g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
            dz = da;
        } else {
            break;
        }
    }
    Gradients {
        loss,
        layers: grads,
    }
}

fn step(layers: &mut [Layer64], grads: &[Layer64], lr: f64) {
    for (l, g) in layers.iter_mut().zip(grads) {
        l.weight.scaled_add(-lr, &g.weight);
        l.bias.scaled_add(-lr, &g.bias);
    }
}

/// Trains the classifier on the labeled training nodes.
///
/// With `propagate == false` the network never sees the graph during
/// training; message passing is only switched on at inference. With
/// `propagate == true` the training graph is propagated (SGC: features are
/// pre-propagated; GCN: full-batch training through the operator).
pub fn train_mlp(g: &Graph, cfg: &TrainConfig) -> Result<(ModelParams, TrainLog)> {
    let labeled = &g.splits().train_labeled;
    if labeled.is_empty() {
        return Err(Error::NoTrainingLabels);
    }
    if cfg.k_hops == 0 {
        return Err(Error::Config("k_hops must be at least 1".into()));
    }
    let n_classes = g.n_classes().max(1);
    let mut dims = vec![g.feature_dim()];
    dims.extend(&cfg.hidden);
    dims.push(n_classes);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut layers = init_layers(&dims, &mut rng);
    let mut log = Vec::with_capacity(cfg.epochs);

    let train_nodes = g.graph_nodes(Partition::Train);
    let view = induced_view(g, &train_nodes)?;
    let labels: Vec<usize> = labeled
        .iter()
        .map(|v| g.label(v).ok_or(Error::Unlabeled(v)))
        .collect::<Result<_>>()?;
    let label_rows = view.local_indices(labeled)?;

    let full_batch_gcn = cfg.propagate && cfg.conv == Conv::Gcn;
    if full_batch_gcn {
        let a = normalize_adjacency(&view);
        let x = view.features();
        let n_prop = cfg.k_hops.min(layers.len());
        for _ in 0..cfg.epochs {
            let grads = backprop(&layers, &x, Some((&a, n_prop)), &label_rows, &labels);
            step(&mut layers, &grads.layers, cfg.lr);
            log.push(grads.loss);
        }
    } else {
        let x = if cfg.propagate {
            normalize_adjacency(&view).apply_k(&view.features(), cfg.k_hops)
        } else {
            view.features()
        };
        let inputs = x.select(Axis(0), &label_rows);
        let batch = cfg.batch_size.max(1);
        let mut order: Vec<usize> = (0..label_rows.len()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(batch) {
                let xb = inputs.select(Axis(0), chunk);
                let yb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                let rows: Vec<usize> = (0..chunk.len()).collect();
                let grads = backprop(&layers, &xb, None, &rows, &yb);
                step(&mut layers, &grads.layers, cfg.lr);
                total += grads.loss * chunk.len() as f64;
            }
            log.push(total / order.len() as f64);
        }
    }

    let layers = layers
        .into_iter()
        .map(|l| Layer {
            weight: l.weight.mapv(|v| v as f32),
            bias: l.bias.mapv(|v| v as f32),
        })
        .collect();
    let params = ModelParams::new(layers, cfg.conv, cfg.k_hops)?;
    Ok((params, log))
}
