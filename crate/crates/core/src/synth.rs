//! Planted-partition graphs for desk-scale runs.
//!
//! Three disjoint blocks (train, val, test), each a stochastic block model
//! with Gaussian features around one-hot class means. A fraction of the
//! val/test nodes are noise nodes: features drawn around a wrong class mean
//! and edges wired uniformly at random. They are never targets.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, Graph, NodeSet, Splits};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub n_classes: usize,
    pub dim: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub sigma: f64,
    pub noise_frac: f64,
    /// Targets drawn from the clean nodes of each of val and test.
    pub n_targets: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_train: 120,
            n_val: 60,
            n_test: 60,
            n_classes: 3,
            dim: 8,
            p_in: 0.3,
            p_out: 0.02,
            sigma: 0.5,
            noise_frac: 0.1,
            n_targets: 6,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if !(0.0 <= self.p_out && self.p_out <= self.p_in && self.p_in <= 1.0) {
            return bad("need 0 <= p_out <= p_in <= 1");
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return bad("sigma must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.noise_frac) {
            return bad("noise_frac must lie in [0, 1)");
        }
        if self.n_classes < 2 || self.dim < self.n_classes {
            return bad("need at least 2 classes and dim >= classes");
        }
        for (name, n) in [("n_val", self.n_val), ("n_test", self.n_test)] {
            let clean = n - self.n_noise(n);
            if self.n_targets == 0 || self.n_targets > clean {
                return bad(&format!("n_targets must be in 1..={clean} for {name}"));
            }
        }
        if self.n_train < self.n_classes {
            return bad("n_train must cover every class");
        }
        Ok(())
    }

    fn n_noise(&self, n: usize) -> usize {
        (self.noise_frac * n as f64).round() as usize
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub graph: Graph,
    pub noise_nodes: NodeSet,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = seed::rng(seed::derive(cfg.seed, "synth", 0));
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let c = cfg.n_classes;
    let n = cfg.n_train + cfg.n_val + cfg.n_test;
    let blocks = [
        (0, cfg.n_train),
        (cfg.n_train, cfg.n_train + cfg.n_val),
        (cfg.n_train + cfg.n_val, n),
    ];

    let labels: Vec<usize> = blocks
        .iter()
        .flat_map(|&(a, b)| (a..b).map(move |i| (i - a) % c))
        .collect();

    let mut noise = vec![false; n];
    let mut targets = [NodeSet::empty(), NodeSet::empty()];
    for (slot, &(a, b)) in blocks[1..].iter().enumerate() {
        let mut ids: Vec<usize> = (a..b).collect();
        ids.shuffle(&mut rng);
        let n_noise = cfg.n_noise(b - a);
        for &v in &ids[..n_noise] {
            noise[v] = true;
        }
        targets[slot] = NodeSet::new(ids[n_noise..n_noise + cfg.n_targets].iter().copied());
    }

    let mut x = Array2::<f32>::zeros((n, cfg.dim));
    for v in 0..n {
        let class = if noise[v] {
            let others: Vec<usize> = (0..c).filter(|&k| k != labels[v]).collect();
            *others.choose(&mut rng).expect("at least two classes")
        } else {
            labels[v]
        };
        for j in 0..cfg.dim {
            let mean = if j == class { 1.0 } else { 0.0 };
            x[[v, j]] = (mean + cfg.sigma * normal.sample(&mut rng)) as f32;
        }
    }

    let p_mix = (cfg.p_in + (c - 1) as f64 * cfg.p_out) / c as f64;
    let mut edges = Vec::new();
    for &(a, b) in &blocks {
        for u in a..b {
            for v in u + 1..b {
                let p = if noise[u] || noise[v] {
                    p_mix
                } else if labels[u] == labels[v] {
                    cfg.p_in
                } else {
                    cfg.p_out
                };
                if rng.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
    }

    let block = |i: usize| NodeSet::new(blocks[i].0..blocks[i].1);
    let splits = Splits {
        train: block(0),
        train_labeled: block(0),
        val: block(1),
        val_labeled: targets[0].clone(),
        test: block(2),
        test_targets: targets[1].clone(),
    };
    let graph = Graph::new(x, &edges, Some(labels.into_iter().map(Some).collect()), splits)?
        .with_n_classes(c)?;
    Ok(SynthData {
        graph,
        noise_nodes: NodeSet::new((0..n).filter(|&v| noise[v])),
    })
}

pub const EDGES_FILE: &str = "edges.csv";
pub const FEATURES_FILE: &str = "features.bin";
pub const LABELS_FILE: &str = "labels.csv";
pub const SPLITS_FILE: &str = "splits.json";
pub const NOISE_FILE: &str = "noise_nodes.json";

/// Writes the standard file set plus `noise_nodes.json` into `dir`.
pub fn write(data: &SynthData, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let g = &data.graph;
    graph::write_edges_csv(g, &dir.join(EDGES_FILE))?;
    graph::write_features_bin(g, &dir.join(FEATURES_FILE))?;
    graph::write_labels_csv(g, &dir.join(LABELS_FILE))?;
    graph::write_splits_json(g, &dir.join(SPLITS_FILE))?;
    let path = dir.join(NOISE_FILE);
    let text = serde_json::to_string(&data.noise_nodes).expect("noise serialize");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn read_noise_nodes(path: &Path) -> Result<NodeSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}
