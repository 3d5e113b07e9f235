//! Label-free descriptors of a subgraph state.
//!
//! Each state (targets plus the neighbors admitted so far) is summarized by
//! nine numbers: three data-side measures (homophily of the induced edges,
//! similarity of the targets' aggregated features to the training set, and to
//! class prototypes) and six model-side measures built from the fixed
//! classifier's output on the state.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{induced_view, Graph, NodeSet, Partition, SubgraphView};
use crate::model::{self, argmax, normalize_adjacency, ModelParams, Predictions};

pub const N_FEATURES: usize = 9;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "edge_cos",
    "rep_dist",
    "classwise_rep_dist",
    "max_conf",
    "target_conf",
    "prop_max_conf",
    "prop_target_conf",
    "neg_entropy",
    "conf_gap",
];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn edge_cos(&self) -> f64 {
        self.0[0]
    }
    pub fn rep_dist(&self) -> f64 {
        self.0[1]
    }
    pub fn classwise_rep_dist(&self) -> f64 {
        self.0[2]
    }
    pub fn max_conf(&self) -> f64 {
        self.0[3]
    }
    pub fn target_conf(&self) -> f64 {
        self.0[4]
    }
    pub fn prop_max_conf(&self) -> f64 {
        self.0[5]
    }
    pub fn prop_target_conf(&self) -> f64 {
        self.0[6]
    }
    pub fn neg_entropy(&self) -> f64 {
        self.0[7]
    }
    pub fn conf_gap(&self) -> f64 {
        self.0[8]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn as_array(&self) -> &[f64; N_FEATURES] {
        &self.0
    }
}

/// Ordered subset of the nine features, selected by name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct FeatureSet(Vec<usize>);

impl FeatureSet {
    pub fn all() -> Self {
        FeatureSet((0..N_FEATURES).collect())
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut idx = Vec::with_capacity(names.len());
        for n in names {
            let n = n.as_ref();
            let i = FEATURE_NAMES
                .iter()
                .position(|&f| f == n)
                .ok_or_else(|| Error::Config(format!("unknown feature {n:?}")))?;
            if idx.contains(&i) {
                return Err(Error::Config(format!("feature {n:?} listed twice")));
            }
            idx.push(i);
        }
        if idx.is_empty() {
            return Err(Error::Config("feature subset is empty".into()));
        }
        Ok(FeatureSet(idx))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.0.iter().map(|&i| FEATURE_NAMES[i].to_owned()).collect()
    }

    /// Projects a full vector onto the subset.
    pub fn select(&self, x: &FeatureVector) -> Vec<f64> {
        self.0.iter().map(|&i| x.0[i]).collect()
    }
}

impl TryFrom<Vec<String>> for FeatureSet {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        FeatureSet::from_names(&v)
    }
}

impl From<FeatureSet> for Vec<String> {
    fn from(f: FeatureSet) -> Self {
        f.names()
    }
}

/// Orientation of the entropy feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropySign {
    /// `sum p ln p`: higher means more certain.
    #[default]
    Negative,
    /// `-sum p ln p`: the entropy itself.
    Positive,
}

/// How per-class prototype similarities are reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClasswiseAgg {
    #[default]
    Min,
    Max,
}

macro_rules! str_enum {
    ($t:ty { $($name:literal => $v:expr),+ $(,)? }) => {
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($v),)+
                    other => Err(Error::Config(format!("unknown value {other:?}"))),
                }
            }
        }
    };
}
str_enum!(EntropySign { "negative" => EntropySign::Negative, "positive" => EntropySign::Positive });
str_enum!(ClasswiseAgg { "min" => ClasswiseAgg::Min, "max" => ClasswiseAgg::Max });

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub entropy_sign: EntropySign,
    pub classwise_agg: ClasswiseAgg,
    pub lp_alpha: f64,
    pub lp_iters: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            entropy_sign: EntropySign::Negative,
            classwise_agg: ClasswiseAgg::Min,
            lp_alpha: 0.9,
            lp_iters: 10,
        }
    }
}

/// Mean aggregated training representation and per-class prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainStats {
    pub mean_train_repr: Array1<f64>,
    pub class_prototypes: Array2<f64>,
}

/// Aggregates `A^k X` over the training graph and averages it, overall and
/// per labeled class.
pub fn compute_train_stats(g: &Graph, params: &ModelParams) -> Result<TrainStats> {
    let nodes = g.graph_nodes(Partition::Train);
    if nodes.is_empty() {
        return Err(Error::Data("training graph is empty".into()));
    }
    let view = induced_view(g, &nodes)?;
    let h = normalize_adjacency(&view).apply_k(&view.features(), params.k_hops());
    let mean_train_repr = h.mean_axis(Axis(0)).expect("nonempty");

    let c = params.n_classes();
    let mut sums = Array2::<f64>::zeros((c, h.ncols()));
    let mut counts = vec![0usize; c];
    for v in g.splits().train_labeled.iter() {
        let y = g.label(v).ok_or(Error::Unlabeled(v))?;
        if y >= c {
            return Err(Error::Data(format!("label {y} exceeds model class count {c}")));
        }
        let i = view.local_index(v).ok_or_else(|| {
            Error::Data(format!("labeled node {v} is outside the training graph"))
        })?;
        sums.row_mut(y).scaled_add(1.0, &h.row(i));
        counts[y] += 1;
    }
    let missing: Vec<usize> = (0..c).filter(|&y| counts[y] == 0).collect();
    if !missing.is_empty() {
        return Err(Error::MissingPrototypes(missing));
    }
    for (mut row, &n) in sums.rows_mut().into_iter().zip(&counts) {
        row.mapv_inplace(|v| v / n as f64);
    }
    Ok(TrainStats {
        mean_train_repr,
        class_prototypes: sums,
    })
}

/// Predicted class of each target on the full graph, frozen for a split.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FixedLabels(pub BTreeMap<usize, usize>);

impl FixedLabels {
    pub fn from_predictions(pred: &Predictions, targets: &NodeSet) -> Result<Self> {
        targets
            .iter()
            .map(|v| {
                pred.predicted_class(v)
                    .map(|c| (v, c))
                    .ok_or_else(|| Error::Data(format!("no prediction for target {v}")))
            })
            .collect::<Result<_>>()
            .map(FixedLabels)
    }

    /// Runs the model on the whole graph that contains `targets`.
    pub fn compute(g: &Graph, params: &ModelParams, targets: &NodeSet, part: Partition) -> Result<Self> {
        let view = induced_view(g, &g.graph_nodes(part))?;
        let pred = model::forward(params, &view)?;
        Self::from_predictions(&pred, targets)
    }

    pub fn get(&self, v: usize) -> Option<usize> {
        self.0.get(&v).copied()
    }
}

pub fn cosine(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0)
}

fn xlnx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Everything needed to describe a subgraph state without labels.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub params: ModelParams,
    pub stats: TrainStats,
    pub fixed: FixedLabels,
    pub cfg: FeatureConfig,
}

/// A subgraph state's features together with the model output they were
/// derived from.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub features: FeatureVector,
    pub predictions: Predictions,
}

impl FeatureExtractor {
    pub fn new(params: ModelParams, stats: TrainStats, fixed: FixedLabels, cfg: FeatureConfig) -> Self {
        FeatureExtractor {
            params,
            stats,
            fixed,
            cfg,
        }
    }

    pub fn extract(&self, view: &SubgraphView<'_>, targets: &NodeSet) -> Result<FeatureVector> {
        Ok(self.evaluate(view, targets)?.features)
    }

    pub fn evaluate(&self, view: &SubgraphView<'_>, targets: &NodeSet) -> Result<Evaluation> {
        let rows = view.local_indices(targets)?;
        if rows.is_empty() {
            return Err(Error::EmptyEvaluationSet);
        }
        let n_t = rows.len() as f64;
        let x = view.features();
        let a = normalize_adjacency(view);

        let mut edge_cos = 0.0;
        if view.n_edges() > 0 {
            for i in 0..view.len() {
                for &j in view.local_neighbors(i) {
                    if i < j {
                        edge_cos += cosine(x.row(i), x.row(j));
                    }
                }
            }
            edge_cos /= view.n_edges() as f64;
        }

        let h = a.apply_k(&x, self.params.k_hops());
        let mut rep = 0.0;
        let mut classwise = 0.0;
        for &r in &rows {
            let hv = h.row(r);
            rep += cosine(hv, self.stats.mean_train_repr.view());
            let sims = self.stats.class_prototypes.rows().into_iter().map(|p| cosine(hv, p));
            classwise += match self.cfg.classwise_agg {
                ClasswiseAgg::Min => sims.fold(f64::INFINITY, f64::min),
                ClasswiseAgg::Max => sims.fold(f64::NEG_INFINITY, f64::max),
            };
        }

        let pred = model::forward(&self.params, view)?;
        let init = model::forward(&self.params, &view.without_edges())?;
        let prop = model::label_propagation(view, &init, self.cfg.lp_alpha, self.cfg.lp_iters)?;

        let (mut c_max, mut c_target, mut p_max, mut p_target, mut ent, mut gap) =
            (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (&r, t) in rows.iter().zip(targets.iter()) {
            let fixed = self
                .fixed
                .get(t)
                .ok_or_else(|| Error::Data(format!("no fixed label for target {t}")))?;
            let p = pred.probs().row(r);
            let top = argmax(p.iter().copied());
            let best = p[top];
            let second = p
                .iter()
                .enumerate()
                .filter(|&(c, _)| c != top)
                .map(|(_, &v)| v)
                .fold(0.0, f64::max);
            c_max += best;
            c_target += p[fixed];
            gap += best - second;
            ent += p.iter().copied().map(xlnx).sum::<f64>();

            let q = prop.probs().row(r);
            p_max += q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            p_target += q[fixed];
        }
        let ent = match self.cfg.entropy_sign {
            EntropySign::Negative => ent,
            EntropySign::Positive => -ent,
        };

        let features = FeatureVector([
            edge_cos,
            rep / n_t,
            classwise / n_t,
            c_max / n_t,
            c_target / n_t,
            p_max / n_t,
            p_target / n_t,
            ent / n_t,
            gap / n_t,
        ]);
        Ok(Evaluation {
            features,
            predictions: pred,
        })
    }
}

impl fmt::Display for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (name, v)) in FEATURE_NAMES.iter().zip(self.0).enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{name}={v:.4}")?;
        }
        Ok(())
    }
}

/// Writes `rows` (node id + feature vector) as CSV with a named header.
pub fn write_feature_csv<W: std::io::Write>(
    w: W,
    key: &str,
    set: &FeatureSet,
    rows: impl IntoIterator<Item = (String, FeatureVector)>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec![key.to_owned()];
    header.extend(set.names());
    let csv_err = |e: csv::Error| Error::Data(e.to_string());
    wtr.write_record(&header).map_err(csv_err)?;
    for (k, x) in rows {
        let mut rec = vec![k];
        rec.extend(set.select(&x).iter().map(|v| v.to_string()));
        wtr.write_record(&rec).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::Data(e.to_string()))
}
