//! Run configuration: a TOML file plus `key=value` overrides.
//!
//! Every section and key has a default, so an empty file is a valid
//! configuration. Unknown keys are rejected.
//!
//! ```toml
//! seed = 0
//! out_dir = "runs/default"
//!
//! [data]
//! dir = "data"            # edges/features/labels/splits are relative to it
//! mode = "inductive"      # or "transductive"
//!
//! [model]
//! conv = "sgc"            # or "gcn"
//! k_hops = 2
//! hidden = [32]
//! epochs = 200
//! lr = 0.1
//!
//! [features]
//! subset = ["max_conf", "neg_entropy"]   # default: all nine
//! entropy_sign = "negative"  # or "positive"
//! classwise_agg = "min"   # or "max"
//!
//! [valuation]
//! m_val = 50
//! m_test = 5
//! target_batch = 0        # targets per game; 0 = one game over all
//! method = "sgul-shapley"
//!
//! [fit]
//! objective = "both"      # "shapley", "accuracy" or "both"
//! lambda_grid = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1]
//! folds = 5
//!
//! [eval]
//! methods = ["sgul-shapley", "random"]
//! ```
//!
//! The `[synth]` section configures `gen`; `[oracle]` and `[compare]` hold
//! the settings of those commands.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::Baseline;
use crate::error::{Error, Result};
use crate::features::{ClasswiseAgg, EntropySign, FeatureConfig, FeatureSet, FEATURE_NAMES};
use crate::fit::{FitOptions, DEFAULT_FOLDS, DEFAULT_LAMBDA_GRID};
use crate::graph::Setting;
use crate::model::{Conv, TrainConfig};
use crate::synth::SynthConfig;
use crate::valuation::{DEFAULT_M_TEST, DEFAULT_M_VAL};

/// A valuation method: one of the two learned utilities, a baseline
/// utility, or a random ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    SgulShapley,
    SgulAccuracy,
    Baseline(Baseline),
    Random,
}

impl Method {
    pub fn all() -> Vec<Method> {
        let mut v = vec![Method::SgulShapley, Method::SgulAccuracy];
        v.extend(Baseline::ALL.map(Method::Baseline));
        v.push(Method::Random);
        v
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::SgulShapley => f.write_str("sgul-shapley"),
            Method::SgulAccuracy => f.write_str("sgul-accuracy"),
            Method::Baseline(b) => b.fmt(f),
            Method::Random => f.write_str("random"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgul-shapley" => Ok(Method::SgulShapley),
            "sgul-accuracy" => Ok(Method::SgulAccuracy),
            "random" => Ok(Method::Random),
            other => other
                .parse()
                .map(Method::Baseline)
                .map_err(|_| Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitObjective {
    Shapley,
    Accuracy,
    #[default]
    Both,
}

impl FitObjective {
    pub fn shapley(self) -> bool {
        matches!(self, FitObjective::Shapley | FitObjective::Both)
    }

    pub fn accuracy(self) -> bool {
        matches!(self, FitObjective::Accuracy | FitObjective::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dir: PathBuf,
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    pub splits: PathBuf,
    pub mode: Setting,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dir: "data".into(),
            edges: crate::synth::EDGES_FILE.into(),
            features: crate::synth::FEATURES_FILE.into(),
            labels: crate::synth::LABELS_FILE.into(),
            splits: crate::synth::SPLITS_FILE.into(),
            mode: Setting::Inductive,
        }
    }
}

impl DataConfig {
    pub fn path(&self, file: &Path) -> PathBuf {
        self.dir.join(file)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub conv: Conv,
    pub k_hops: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        ModelConfig {
            conv: t.conv,
            k_hops: t.k_hops,
            hidden: t.hidden,
            epochs: t.epochs,
            lr: t.lr,
            batch_size: t.batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesConfig {
    pub subset: Vec<String>,
    pub entropy_sign: EntropySign,
    pub classwise_agg: ClasswiseAgg,
    pub lp_alpha: f64,
    pub lp_iters: usize,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        let f = FeatureConfig::default();
        FeaturesConfig {
            subset: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            entropy_sign: f.entropy_sign,
            classwise_agg: f.classwise_agg,
            lp_alpha: f.lp_alpha,
            lp_iters: f.lp_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValuationConfig {
    pub m_val: usize,
    pub m_test: usize,
    pub target_batch: usize,
    pub method: Method,
}

impl Default for ValuationConfig {
    fn default() -> Self {
        ValuationConfig {
            m_val: DEFAULT_M_VAL,
            m_test: DEFAULT_M_TEST,
            target_batch: 0,
            method: Method::SgulShapley,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub objective: FitObjective,
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            objective: FitObjective::Both,
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            folds: DEFAULT_FOLDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub methods: Vec<Method>,
    pub mse_batches: usize,
    pub mse_perms: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            methods: Method::all(),
            mse_batches: 10,
            mse_perms: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Monte Carlo permutations compared against the exact values.
    pub m: usize,
    /// Targets of the oracle game; empty means the first test target.
    pub targets: Vec<usize>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            m: 5000,
            targets: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub seeds: usize,
    /// Regenerate synthetic data per seed (otherwise reuse `data.dir`).
    pub synth: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            seeds: 10,
            synth: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub features: FeaturesConfig,
    pub valuation: ValuationConfig,
    pub fit: FitConfig,
    pub eval: EvalConfig,
    pub oracle: OracleConfig,
    pub compare: CompareConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: "runs/default".into(),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            features: FeaturesConfig::default(),
            valuation: ValuationConfig::default(),
            fit: FitConfig::default(),
            eval: EvalConfig::default(),
            oracle: OracleConfig::default(),
            compare: CompareConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_value(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_owned()))
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut t = table;
    for p in path {
        let entry = t
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{key}: {p} is not a section")))?;
    }
    t.insert(last.to_string(), parse_value(value.trim()));
    Ok(())
}

impl RunConfig {
    /// Reads `path` (if any), applies overrides in order, then validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.model.k_hops == 0 {
            return bad("model.k_hops must be at least 1".into());
        }
        if self.model.batch_size == 0 || !(self.model.lr > 0.0) {
            return bad("model.batch_size and model.lr must be positive".into());
        }
        if self.valuation.m_val == 0 || self.valuation.m_test == 0 {
            return bad("valuation.m_val and valuation.m_test must be positive".into());
        }
        if self.fit.lambda_grid.is_empty() || self.fit.lambda_grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return bad("fit.lambda_grid must hold finite non-negative values".into());
        }
        if self.fit.folds < 2 {
            return bad("fit.folds must be at least 2".into());
        }
        if !(self.features.lp_alpha > 0.0 && self.features.lp_alpha < 1.0) {
            return bad("features.lp_alpha must lie in (0, 1)".into());
        }
        FeatureSet::from_names(&self.features.subset)?;
        self.synth.validate()?;
        Ok(())
    }

    pub fn feature_set(&self) -> FeatureSet {
        FeatureSet::from_names(&self.features.subset).expect("validated")
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            entropy_sign: self.features.entropy_sign,
            classwise_agg: self.features.classwise_agg,
            lp_alpha: self.features.lp_alpha,
            lp_iters: self.features.lp_iters,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            hidden: self.model.hidden.clone(),
            epochs: self.model.epochs,
            lr: self.model.lr,
            batch_size: self.model.batch_size,
            seed: crate::seed::derive(self.seed, "train", 0),
            conv: self.model.conv,
            k_hops: self.model.k_hops,
            propagate: self.data.mode == Setting::Transductive,
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            lambda_grid: self.fit.lambda_grid.clone(),
            folds: self.fit.folds,
            seed: self.seed,
            features: self.feature_set(),
        }
    }
}
