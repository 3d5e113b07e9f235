//! Surrogate utilities fitted on the validation graph.
//!
//! Two regressions share one solver (non-negative L1 coordinate descent):
//! the Shapley-level fit regresses true accuracy Shapley values on feature
//! Shapley vectors; the accuracy-level fit regresses prefix accuracy on
//! prefix features and gets an intercept.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, FeatureSet, FeatureVector, N_FEATURES};
use crate::graph::{Graph, NodeSet};
use crate::model::accuracy;
use crate::perm::Permutation;
use crate::seed;
use crate::valuation::{feature_shapley_from_traces, trace_all, PrefixState};

pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1];
pub const DEFAULT_FOLDS: usize = 5;
pub const CD_TOLERANCE: f64 = 1e-8;
pub const CD_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Shapley,
    Accuracy,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Shapley => "sgul-shapley",
            Objective::Accuracy => "sgul-accuracy",
        })
    }
}

/// Linear utility `x -> intercept + w . x` over a feature subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityWeights {
    pub feature_names: FeatureSet,
    pub w: Vec<f64>,
    pub lambda: f64,
    pub scaling: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
    pub objective: Objective,
}

impl UtilityWeights {
    pub fn zeros(features: FeatureSet, objective: Objective) -> Self {
        let n = features.len();
        UtilityWeights {
            feature_names: features,
            w: vec![0.0; n],
            lambda: 0.0,
            scaling: vec![1.0; n],
            intercept: None,
            objective,
        }
    }

    /// Weights over the full nine-feature vector (zeros off the subset).
    pub fn full(&self) -> [f64; N_FEATURES] {
        let mut out = [0.0; N_FEATURES];
        for (&i, &w) in self.feature_names.indices().iter().zip(&self.w) {
            out[i] = w;
        }
        out
    }

    pub fn utility(&self, x: &FeatureVector) -> f64 {
        self.intercept.unwrap_or(0.0) + self.shapley(&x.0)
    }

    /// `w . psi`; the intercept has no share in any marginal.
    pub fn shapley(&self, psi: &[f64; N_FEATURES]) -> f64 {
        self.feature_names
            .indices()
            .iter()
            .zip(&self.w)
            .map(|(&i, &w)| w * psi[i])
            .sum()
    }

    pub fn describe(&self) -> String {
        let terms: Vec<String> = self
            .feature_names
            .names()
            .iter()
            .zip(&self.w)
            .filter(|(_, &w)| w != 0.0)
            .map(|(n, w)| format!("{w:.6}*{n}"))
            .collect();
        format!(
            "{} linear: {}",
            self.objective,
            if terms.is_empty() { "0".into() } else { terms.join(" + ") }
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.w.len() != self.feature_names.len() || self.scaling.len() != self.w.len() {
            return Err(Error::Dimension("weight and feature counts differ".into()));
        }
        if self.w.iter().any(|w| !w.is_finite() || *w < 0.0) || !(self.lambda >= 0.0) {
            return Err(Error::Data("weights must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("weights serialize");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let w: UtilityWeights = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        w.validate()?;
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyRow {
    pub batch: usize,
    pub node: usize,
    pub psi: [f64; N_FEATURES],
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub batch: usize,
    pub perm_id: usize,
    pub step: usize,
    pub x: FeatureVector,
    pub acc: f64,
}

/// Regression rows at both levels, pooled over target batches.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SupervisionSet {
    pub shapley: Vec<ShapleyRow>,
    pub accuracy: Vec<AccuracyRow>,
    pub n_batches: usize,
}

impl SupervisionSet {
    /// Appends another batch, renumbering its batch ids.
    pub fn extend(&mut self, other: SupervisionSet) {
        let off = self.n_batches;
        self.shapley.extend(other.shapley.into_iter().map(|mut r| {
            r.batch += off;
            r
        }));
        self.accuracy.extend(other.accuracy.into_iter().map(|mut r| {
            r.batch += off;
            r
        }));
        self.n_batches += other.n_batches;
    }

    pub fn batch(&self, b: usize) -> SupervisionSet {
        SupervisionSet {
            shapley: self.shapley.iter().filter(|r| r.batch == b).cloned().collect(),
            accuracy: self.accuracy.iter().filter(|r| r.batch == b).cloned().collect(),
            n_batches: 1,
        }
    }

    fn shapley_design(&self, set: &FeatureSet) -> (Vec<Vec<f64>>, Vec<f64>) {
        let x = self
            .shapley
            .iter()
            .map(|r| set.indices().iter().map(|&i| r.psi[i]).collect())
            .collect();
        (x, self.shapley.iter().map(|r| r.phi).collect())
    }

    fn accuracy_design(&self, set: &FeatureSet) -> (Vec<Vec<f64>>, Vec<f64>) {
        let x = self.accuracy.iter().map(|r| set.select(&r.x)).collect();
        (x, self.accuracy.iter().map(|r| r.acc).collect())
    }
}

/// Traces `perms` with features and true target accuracy, producing one
/// Shapley row per neighbor and one accuracy row per prefix.
pub fn build_supervision(
    g: &Graph,
    targets: &NodeSet,
    extractor: &FeatureExtractor,
    perms: &[Permutation],
) -> Result<SupervisionSet> {
    for t in targets.iter() {
        if g.label(t).is_none() {
            return Err(Error::Unlabeled(t));
        }
    }
    let acc = |s: &PrefixState<'_, '_>| {
        accuracy(&s.evaluation.predictions, g, s.targets).expect("targets are labeled")
    };
    let traces = trace_all(g, targets, perms, extractor, Some(&acc))?;
    let psis = feature_shapley_from_traces(&traces)?;

    let mut phi: BTreeMap<usize, f64> = BTreeMap::new();
    let mut accuracy_rows = Vec::new();
    for t in &traces {
        let u = t.utilities.as_ref().expect("traced with a utility");
        for (step, (x, &a)) in t.features.iter().zip(u).enumerate() {
            accuracy_rows.push(AccuracyRow {
                batch: 0,
                perm_id: t.perm_id,
                step,
                x: *x,
                acc: a,
            });
        }
        for s in t.steps() {
            let (before, after) = s.utility.expect("traced with a utility");
            *phi.entry(s.node).or_insert(0.0) += after - before;
        }
    }
    let m = traces.len() as f64;
    let shapley = psis
        .into_iter()
        .map(|(node, p)| ShapleyRow {
            batch: 0,
            node,
            psi: p.psi,
            phi: phi[&node] / m,
        })
        .collect();
    Ok(SupervisionSet {
        shapley,
        accuracy: accuracy_rows,
        n_batches: 1,
    })
}

/// Result of one non-negative lasso solve in fitting coordinates.
#[derive(Debug, Clone)]
struct Solution {
    w: Vec<f64>,
    intercept: f64,
}

/// Minimizes `sum (y - b - X w)^2 + lambda * |w|_1` over `w >= 0` by cyclic
/// coordinate descent; `b` is free when `intercept` is set, else zero.
fn nn_lasso(x: &[Vec<f64>], y: &[f64], lambda: f64, intercept: bool) -> Solution {
    let n = y.len();
    let p = x.first().map_or(0, Vec::len);
    // Gram form; with an intercept, column p is all ones and is neither
    // penalized nor sign-constrained.
    let q = if intercept && n > 0 { p + 1 } else { p };
    let col = |r: &Vec<f64>, j: usize| if j < p { r[j] } else { 1.0 };
    let mut gram = vec![vec![0.0; q]; q];
    let mut xty = vec![0.0; q];
    for (r, &t) in x.iter().zip(y) {
        for a in 0..q {
            let ra = col(r, a);
            xty[a] += ra * t;
            for b in a..q {
                gram[a][b] += ra * col(r, b);
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            gram[a][b] = gram[b][a];
        }
    }
    let mut w = vec![0.0; q];
    if q > p {
        w[p] = y.iter().sum::<f64>() / n as f64;
    }
    for _ in 0..CD_MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for j in 0..q {
            if gram[j][j] == 0.0 {
                continue;
            }
            let fitted: f64 = gram[j].iter().zip(&w).map(|(g, v)| g * v).sum();
            let rho = xty[j] - fitted + gram[j][j] * w[j];
            let new = if j < p {
                ((rho - lambda / 2.0) / gram[j][j]).max(0.0)
            } else {
                rho / gram[j][j]
            };
            max_change = max_change.max((new - w[j]).abs());
            w[j] = new;
        }
        if max_change < CD_TOLERANCE {
            break;
        }
    }
    let b = if q > p { w[p] } else { 0.0 };
    w.truncate(p);
    Solution { w, intercept: b }
}

fn column_scales(x: &[Vec<f64>], p: usize) -> Vec<f64> {
    (0..p)
        .map(|j| {
            let m = x.iter().map(|r| r[j].abs()).fold(0.0, f64::max);
            if m > 0.0 && m.is_finite() {
                m
            } else {
                1.0
            }
        })
        .collect()
}

fn scaled(x: &[Vec<f64>], s: &[f64]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|r| r.iter().zip(s).map(|(v, s)| v / s).collect())
        .collect()
}

fn sse(x: &[Vec<f64>], y: &[f64], sol: &Solution) -> f64 {
    x.iter()
        .zip(y)
        .map(|(r, &t)| {
            let pred = sol.intercept + r.iter().zip(&sol.w).map(|(a, b)| a * b).sum::<f64>();
            (t - pred).powi(2)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub lambda: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub weights: UtilityWeights,
    pub cv: Vec<CvRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub features: FeatureSet,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            folds: DEFAULT_FOLDS,
            seed: 0,
            features: FeatureSet::all(),
        }
    }
}

fn fit_design(
    x: &[Vec<f64>],
    y: &[f64],
    intercept: bool,
    objective: Objective,
    opts: &FitOptions,
) -> Result<FitOutcome> {
    if opts.lambda_grid.is_empty() || opts.lambda_grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(Error::Config("lambda grid must be non-empty, finite and non-negative".into()));
    }
    if y.is_empty() {
        return Err(Error::Data("no supervision rows".into()));
    }
    if y.iter().chain(x.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite supervision value".into()));
    }
    let p = opts.features.len();
    let scales = column_scales(x, p);
    let xs = scaled(x, &scales);

    if x.iter().flatten().all(|&v| v == 0.0) {
        log::warn!("all-zero design matrix for {objective}; returning zero weights");
        let mut w = UtilityWeights::zeros(opts.features.clone(), objective);
        w.lambda = opts.lambda_grid[0];
        if intercept {
            w.intercept = Some(y.iter().sum::<f64>() / y.len() as f64);
        }
        return Ok(FitOutcome { weights: w, cv: Vec::new() });
    }

    let mut cv = Vec::new();
    let lambda = if y.len() < 2 || opts.lambda_grid.len() == 1 {
        opts.lambda_grid.iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        let k = opts.folds.clamp(2, y.len());
        let mut order: Vec<usize> = (0..y.len()).collect();
        order.shuffle(&mut seed::rng(seed::derive(opts.seed, "folds", 0)));
        let mut fold_of = vec![0; y.len()];
        for (pos, &i) in order.iter().enumerate() {
            fold_of[i] = pos % k;
        }
        let mut best = (f64::INFINITY, opts.lambda_grid[0]);
        let mut grid = opts.lambda_grid.clone();
        grid.sort_by(f64::total_cmp);
        for &lambda in &grid {
            let mut total = 0.0;
            for f in 0..k {
                let (mut xt, mut yt, mut xh, mut yh) = (vec![], vec![], vec![], vec![]);
                for i in 0..y.len() {
                    if fold_of[i] == f {
                        xh.push(xs[i].clone());
                        yh.push(y[i]);
                    } else {
                        xt.push(xs[i].clone());
                        yt.push(y[i]);
                    }
                }
                let sol = nn_lasso(&xt, &yt, lambda, intercept);
                total += sse(&xh, &yh, &sol);
            }
            let mse = total / y.len() as f64;
            cv.push(CvRow { lambda, mse });
            // ties go to the larger (sparser) lambda
            if mse <= best.0 {
                best = (mse, lambda);
            }
        }
        best.1
    };

    let sol = nn_lasso(&xs, y, lambda, intercept);
    let w: Vec<f64> = sol.w.iter().zip(&scales).map(|(w, s)| w / s).collect();
    if w.iter().any(|v| !v.is_finite()) || !sol.intercept.is_finite() {
        return Err(Error::Numeric("solver produced non-finite weights".into()));
    }
    Ok(FitOutcome {
        weights: UtilityWeights {
            feature_names: opts.features.clone(),
            w,
            lambda,
            scaling: scales,
            intercept: intercept.then_some(sol.intercept),
            objective,
        },
        cv,
    })
}

/// Non-negative L1 regression of Shapley values on feature Shapley vectors.
pub fn fit_sgul_shapley(sup: &SupervisionSet, opts: &FitOptions) -> Result<FitOutcome> {
    let (x, y) = sup.shapley_design(&opts.features);
    fit_design(&x, &y, false, Objective::Shapley, opts)
}

/// Same solver on prefix (features, accuracy) pairs, with an intercept.
pub fn fit_sgul_accuracy(sup: &SupervisionSet, opts: &FitOptions) -> Result<FitOutcome> {
    if sup.accuracy.len() < 2 {
        return Err(Error::Data("accuracy-level fit needs at least two rows".into()));
    }
    let (x, y) = sup.accuracy_design(&opts.features);
    fit_design(&x, &y, true, Objective::Accuracy, opts)
}

/// Fits at a single lambda without cross-validation or rescaling, on raw
/// columns. Used to trace solution paths.
pub fn fit_fixed(x: &[Vec<f64>], y: &[f64], lambda: f64, intercept: bool) -> (Vec<f64>, f64) {
    let sol = nn_lasso(x, y, lambda, intercept);
    (sol.w, sol.intercept)
}

pub fn write_cv_report(path: &Path, rows: &[(Objective, &[CvRow])]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
    let err = |e: csv::Error| Error::Data(e.to_string());
    wtr.write_record(["objective", "lambda", "cv_mse"]).map_err(err)?;
    for (obj, cv) in rows {
        for r in *cv {
            wtr.write_record([obj.to_string(), r.lambda.to_string(), r.mse.to_string()])
                .map_err(err)?;
        }
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn sup_from(x: &[Vec<f64>], y: &[f64]) -> SupervisionSet {
        let shapley = x
            .iter()
            .zip(y)
            .enumerate()
            .map(|(i, (r, &phi))| {
                let mut psi = [0.0; N_FEATURES];
                psi[..r.len()].copy_from_slice(r);
                ShapleyRow { batch: 0, node: i, psi, phi }
            })
            .collect();
        SupervisionSet {
            shapley,
            accuracy: vec![],
            n_batches: 1,
        }
    }

    fn opts(grid: &[f64], names: &[&str]) -> FitOptions {
        FitOptions {
            lambda_grid: grid.to_vec(),
            features: FeatureSet::from_names(names).unwrap(),
            ..FitOptions::default()
        }
    }

    #[test]
    fn huge_lambda_zeroes_weights() {
        let mut rng = seed::rng(3);
        let x: Vec<Vec<f64>> = (0..30).map(|_| (0..9).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] + r[3]).collect();
        let out = fit_sgul_shapley(&sup_from(&x, &y), &FitOptions {
            lambda_grid: vec![1e9],
            ..FitOptions::default()
        })
        .unwrap();
        assert!(out.weights.w.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn exact_single_feature_solution() {
        let y = [0.1, -0.2, 0.3, 0.05];
        let x: Vec<Vec<f64>> = y.iter().map(|v| vec![2.0 * v]).collect();
        let out = fit_sgul_shapley(&sup_from(&x, &y), &opts(&[0.0], &["edge_cos"])).unwrap();
        assert!((out.weights.w[0] - 0.5).abs() < 1e-9, "{:?}", out.weights.w);
    }

    #[test]
    fn recovers_planted_weights() {
        let mut rng = seed::rng(11);
        let noise = Normal::new(0.0, 1e-3).unwrap();
        let x: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..9).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| 0.3 * r[0] + 0.7 * r[3] + noise.sample(&mut rng))
            .collect();
        let out = fit_sgul_shapley(&sup_from(&x, &y), &opts(&[1e-4], &crate::features::FEATURE_NAMES)).unwrap();
        let w = &out.weights.w;
        assert!((w[0] - 0.3).abs() < 0.05 && (w[3] - 0.7).abs() < 0.05, "{w:?}");
    }

    #[test]
    fn constant_accuracy_gives_intercept_only() {
        let mut rng = seed::rng(5);
        let accuracy = (0..20)
            .map(|i| {
                let mut x = FeatureVector::default();
                x.0.iter_mut().for_each(|v| *v = rng.random());
                AccuracyRow { batch: 0, perm_id: 0, step: i, x, acc: 0.5 }
            })
            .collect();
        let sup = SupervisionSet { shapley: vec![], accuracy, n_batches: 1 };
        let out = fit_sgul_accuracy(&sup, &FitOptions { lambda_grid: vec![0.0], ..FitOptions::default() }).unwrap();
        assert!((out.weights.intercept.unwrap() - 0.5).abs() < 1e-9);
        assert!(out.weights.w.iter().all(|&w| w.abs() < 1e-9));
    }

    #[test]
    fn zero_design_warns_and_returns_zero() {
        let x = vec![vec![0.0; 9]; 4];
        let out = fit_sgul_shapley(&sup_from(&x, &[1.0, 2.0, 3.0, 4.0]), &FitOptions::default()).unwrap();
        assert!(out.weights.w.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn cv_is_seed_deterministic() {
        let mut rng = seed::rng(9);
        let x: Vec<Vec<f64>> = (0..40).map(|_| (0..9).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| 0.2 * r[1] + rng.random::<f64>() * 0.1).collect();
        let a = fit_sgul_shapley(&sup_from(&x, &y), &FitOptions::default()).unwrap();
        let b = fit_sgul_shapley(&sup_from(&x, &y), &FitOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cv.len(), 5);
    }

    #[test]
    fn weights_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        let mut w = UtilityWeights::zeros(FeatureSet::from_names(&["max_conf", "edge_cos"]).unwrap(), Objective::Accuracy);
        w.w = vec![0.25, 1.0 / 3.0];
        w.intercept = Some(0.1);
        w.save(&path).unwrap();
        assert_eq!(UtilityWeights::load(&path).unwrap(), w);
        let mut psi = [0.0; N_FEATURES];
        psi[3] = 0.4;
        psi[0] = 0.3;
        assert!((w.shapley(&psi) - (0.1 + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn linear_combination_example() {
        let mut w = UtilityWeights::zeros(FeatureSet::all(), Objective::Shapley);
        w.w[0] = 1.0;
        w.w[1] = 2.0;
        let mut psi = [0.0; N_FEATURES];
        psi[0] = 0.3;
        psi[1] = -0.1;
        psi[2] = 5.0;
        assert!((w.shapley(&psi) - 0.1).abs() < 1e-12);
    }
}
