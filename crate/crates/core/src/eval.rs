//! Node-dropping curves, in-sample MSE comparison and fit-cost counts.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::fit::{build_supervision, fit_sgul_accuracy, fit_sgul_shapley, FitOptions, ShapleyRow, SupervisionSet, UtilityWeights};
use crate::graph::{induced_view, k_hop_neighborhood, Graph, NodeSet};
use crate::model::{accuracy, forward, ModelParams};
use crate::perm::sample_permutations;
use crate::seed;
use crate::valuation::ValueReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropCurve {
    /// `acc[k]` is target accuracy after removing the top `k` neighbors.
    pub acc: Vec<f64>,
    pub auc: f64,
}

/// Mean of `acc[1..]`; a curve with no removals scores its only point.
pub fn auc(acc: &[f64]) -> f64 {
    match acc.len() {
        0 => f64::NAN,
        1 => acc[0],
        n => acc[1..].iter().sum::<f64>() / (n - 1) as f64,
    }
}

/// Neighbors sorted by value, highest first, ties by ascending id.
pub fn removal_order(report: &ValueReport) -> Vec<usize> {
    let mut v: Vec<(usize, f64)> = report.values.iter().map(|(&k, &x)| (k, x)).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().map(|(k, _)| k).collect()
}

/// Removes neighbors cumulatively in value order and records target
/// accuracy on the rest of the targets' graph.
pub fn node_dropping(
    g: &Graph,
    targets: &NodeSet,
    report: &ValueReport,
    params: &ModelParams,
) -> Result<DropCurve> {
    let k = params.k_hops();
    let players = k_hop_neighborhood(g, targets, k);
    if report.nodes() != players {
        return Err(Error::Data(format!(
            "report covers {} nodes but the neighborhood has {}",
            report.values.len(),
            players.len()
        )));
    }
    // Target outputs depend on nodes within k hops and their degrees, so
    // one more hop makes the view exact for the targets.
    let region = targets.union(&k_hop_neighborhood(g, targets, k + 1));
    let order = removal_order(report);
    let acc = (0..=order.len())
        .into_par_iter()
        .map(|n_removed| {
            let removed = NodeSet::new(order[..n_removed].iter().copied());
            let view = induced_view(g, &region.difference(&removed))?;
            accuracy(&forward(params, &view)?, g, targets)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DropCurve { auc: auc(&acc), acc })
}

pub fn write_curve_csv(path: &Path, curve: &DropCurve) -> Result<()> {
    let mut out = String::from("k,acc\n");
    for (k, a) in curve.acc.iter().enumerate() {
        out.push_str(&format!("{k},{a}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Whitespace-separated table with one column per method, for gnuplot.
pub fn write_gnuplot(path: &Path, curves: &[(String, DropCurve)]) -> Result<()> {
    let mut out = String::from("# k");
    for (name, _) in curves {
        out.push(' ');
        out.push_str(name);
    }
    out.push('\n');
    let len = curves.iter().map(|(_, c)| c.acc.len()).max().unwrap_or(0);
    for k in 0..len {
        out.push_str(&k.to_string());
        for (_, c) in curves {
            match c.acc.get(k) {
                Some(a) => out.push_str(&format!(" {a}")),
                None => out.push_str(" NaN"),
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Mean squared error of `w . psi` against the true Shapley values.
pub fn shapley_mse(rows: &[ShapleyRow], w: &UtilityWeights) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().map(|r| (r.phi - w.shapley(&r.psi)).powi(2)).sum::<f64>() / rows.len() as f64
}

/// Two-sided exact sign test on paired differences; zeros are dropped.
pub fn sign_test(diffs: &[f64]) -> f64 {
    let pos = diffs.iter().filter(|&&d| d > 0.0).count();
    let neg = diffs.iter().filter(|&&d| d < 0.0).count();
    let n = pos + neg;
    if n == 0 {
        return 1.0;
    }
    let k = pos.min(neg);
    let mut tail = 0.0;
    let mut c = 1.0;
    for i in 0..=k {
        if i > 0 {
            c *= (n + 1 - i) as f64 / i as f64;
        }
        tail += c;
    }
    (2.0 * tail / 2f64.powi(n as i32)).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub mse_shapley: f64,
    pub mse_accuracy: f64,
    /// Per batch `(shapley-fit mse, accuracy-fit mse)`.
    pub per_batch: Vec<(f64, f64)>,
    /// Batches where the Shapley-level fit is no worse.
    pub shapley_wins: usize,
    pub sign_test_p: f64,
}

impl MseReport {
    fn from_pairs(per_batch: Vec<(f64, f64)>) -> Self {
        let n = per_batch.len().max(1) as f64;
        let diffs: Vec<f64> = per_batch.iter().map(|(s, a)| a - s).collect();
        MseReport {
            mse_shapley: per_batch.iter().map(|p| p.0).sum::<f64>() / n,
            mse_accuracy: per_batch.iter().map(|p| p.1).sum::<f64>() / n,
            shapley_wins: per_batch.iter().filter(|(s, a)| s <= a).count(),
            sign_test_p: sign_test(&diffs),
            per_batch,
        }
    }
}

/// Compares two fixed weight vectors on every batch of `sup`.
pub fn mse_report(sup: &SupervisionSet, w_shapley: &UtilityWeights, w_accuracy: &UtilityWeights) -> MseReport {
    let pairs = (0..sup.n_batches)
        .map(|b| {
            let rows: Vec<ShapleyRow> = sup.shapley.iter().filter(|r| r.batch == b).cloned().collect();
            (shapley_mse(&rows, w_shapley), shapley_mse(&rows, w_accuracy))
        })
        .collect();
    MseReport::from_pairs(pairs)
}

/// Repeated-batch protocol: each batch draws its own permutations, fits
/// both objectives on that batch alone and scores them in-sample.
pub fn mse_experiment(
    g: &Graph,
    targets: &NodeSet,
    extractor: &FeatureExtractor,
    batches: usize,
    perms_per_batch: usize,
    master_seed: u64,
    opts: &FitOptions,
) -> Result<MseReport> {
    let mut pairs = Vec::with_capacity(batches);
    for b in 0..batches {
        let perms = sample_permutations(
            g,
            targets,
            extractor.params.k_hops(),
            perms_per_batch,
            seed::derive(master_seed, "mse-batch", b as u64),
        )?;
        let sup = build_supervision(g, targets, extractor, &perms)?;
        let ws = fit_sgul_shapley(&sup, opts)?.weights;
        let wa = fit_sgul_accuracy(&sup, opts)?.weights;
        pairs.push((shapley_mse(&sup.shapley, &ws), shapley_mse(&sup.shapley, &wa)));
    }
    Ok(MseReport::from_pairs(pairs))
}

/// Design sizes of the two fits plus their wall times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub rows_shapley: usize,
    pub rows_accuracy: usize,
    #[serde(skip)]
    pub secs_shapley: f64,
    #[serde(skip)]
    pub secs_accuracy: f64,
}

/// Closed-form row counts for one game: `|N|` against `M (|N| + 1)`.
pub fn expected_rows(n_players: usize, perm_lens: &[usize]) -> (usize, usize) {
    (n_players, perm_lens.iter().map(|l| l + 1).sum())
}

/// Times both fits on `sup`.
pub fn cost_report(sup: &SupervisionSet, opts: &FitOptions) -> Result<(CostReport, UtilityWeights, UtilityWeights)> {
    let t = Instant::now();
    let ws = fit_sgul_shapley(sup, opts)?.weights;
    let secs_shapley = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let wa = fit_sgul_accuracy(sup, opts)?.weights;
    let secs_accuracy = t.elapsed().as_secs_f64();
    Ok((
        CostReport {
            rows_shapley: sup.shapley.len(),
            rows_accuracy: sup.accuracy.len(),
            secs_shapley,
            secs_accuracy,
        },
        ws,
        wa,
    ))
}
