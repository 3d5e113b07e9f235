//! Label-free accuracy proxies used as alternative utilities.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FixedLabels;
use crate::fit::SupervisionSet;
use crate::graph::{Graph, NodeSet, SubgraphView};
use crate::model::{self, argmax, ModelParams, Predictions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    AtcMc,
    AtcNe,
    Doc,
    MaxConf,
    ClassConf,
}

impl Baseline {
    pub const ALL: [Baseline; 5] = [
        Baseline::AtcMc,
        Baseline::AtcNe,
        Baseline::Doc,
        Baseline::MaxConf,
        Baseline::ClassConf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::AtcMc => "atc-mc",
            Baseline::AtcNe => "atc-ne",
            Baseline::Doc => "doc",
            Baseline::MaxConf => "max-conf",
            Baseline::ClassConf => "class-conf",
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown baseline {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineCalibration {
    pub variant: Baseline,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acc_val: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conf_val: Option<f64>,
}

impl BaselineCalibration {
    /// Variants without fitted state.
    pub fn plain(variant: Baseline) -> Self {
        BaselineCalibration {
            variant,
            threshold: None,
            beta: None,
            acc_val: None,
            conf_val: None,
        }
    }
}

pub fn max_prob(p: ndarray::ArrayView1<'_, f64>) -> f64 {
    p.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Positive Shannon entropy (natural log); higher means less certain.
pub fn entropy(p: ndarray::ArrayView1<'_, f64>) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

fn atc_score(variant: Baseline, p: ndarray::ArrayView1<'_, f64>) -> f64 {
    match variant {
        Baseline::AtcNe => entropy(p),
        _ => max_prob(p),
    }
}

/// Picks `t` so the share of `scores` strictly above `t` equals `acc`
/// (rounded to a whole count).
pub fn atc_threshold(scores: &[f64], acc: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    let mut s = scores.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let n = s.len();
    let count = (acc * n as f64).round() as usize;
    Ok(if count >= n {
        s[n - 1] - 1.0
    } else {
        s[count]
    })
}

/// Calibrates ATC on labeled validation predictions over `nodes`.
pub fn calibrate_atc(
    pred: &Predictions,
    g: &Graph,
    nodes: &NodeSet,
    variant: Baseline,
) -> Result<BaselineCalibration> {
    if !matches!(variant, Baseline::AtcMc | Baseline::AtcNe) {
        return Err(Error::Config(format!("{variant} is not an ATC variant")));
    }
    let acc = model::accuracy(pred, g, nodes)?;
    let scores: Vec<f64> = nodes
        .iter()
        .map(|v| pred.row(v).map(|r| atc_score(variant, r)))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Data("prediction missing for a validation node".into()))?;
    Ok(BaselineCalibration {
        threshold: Some(atc_threshold(&scores, acc)?),
        acc_val: Some(acc),
        ..BaselineCalibration::plain(variant)
    })
}

/// Mean top-class confidence over `nodes`.
pub fn mean_confidence(pred: &Predictions, nodes: &NodeSet) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    let mut total = 0.0;
    for v in nodes.iter() {
        let row = pred
            .row(v)
            .ok_or_else(|| Error::Data(format!("no prediction for node {v}")))?;
        total += max_prob(row);
    }
    Ok(total / nodes.len() as f64)
}

/// Fits DoC's slope through the origin on validation prefixes: confidence
/// shift `c_prefix - conf_val` against accuracy shift `acc_prefix - acc_val`.
pub fn calibrate_doc(sup: &SupervisionSet, acc_val: f64, conf_val: f64) -> Result<BaselineCalibration> {
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for r in &sup.accuracy {
        let dc = r.x.max_conf() - conf_val;
        sxy += dc * (r.acc - acc_val);
        sxx += dc * dc;
    }
    let beta = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    if !beta.is_finite() {
        return Err(Error::Numeric("DoC slope is not finite".into()));
    }
    Ok(BaselineCalibration {
        beta: Some(beta),
        acc_val: Some(acc_val),
        conf_val: Some(conf_val),
        ..BaselineCalibration::plain(Baseline::Doc)
    })
}

/// Baseline utility from predictions already computed on a view.
pub fn baseline_from_predictions(
    cal: &BaselineCalibration,
    pred: &Predictions,
    targets: &NodeSet,
    fixed: &FixedLabels,
) -> Result<f64> {
    let rows: Vec<_> = targets
        .iter()
        .map(|t| pred.row(t).ok_or_else(|| Error::Data(format!("target {t} not in view"))))
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    let n = rows.len() as f64;
    let need = |v: Option<f64>, what: &str| {
        v.ok_or_else(|| Error::Config(format!("{} calibration lacks {what}", cal.variant)))
    };
    Ok(match cal.variant {
        Baseline::AtcMc | Baseline::AtcNe => {
            let t = need(cal.threshold, "threshold")?;
            rows.iter().filter(|r| atc_score(cal.variant, r.view()) > t).count() as f64 / n
        }
        Baseline::Doc => {
            let c = rows.iter().map(|r| max_prob(r.view())).sum::<f64>() / n;
            need(cal.acc_val, "acc_val")? + need(cal.beta, "beta")? * (c - need(cal.conf_val, "conf_val")?)
        }
        Baseline::MaxConf => pred.probs().iter().copied().fold(0.0, f64::max),
        Baseline::ClassConf => {
            let mut total = 0.0;
            for (t, r) in targets.iter().zip(&rows) {
                let c = fixed
                    .get(t)
                    .unwrap_or_else(|| argmax(r.iter().copied()));
                total += r[c];
            }
            total / n
        }
    })
}

pub fn baseline_utility(
    cal: &BaselineCalibration,
    view: &SubgraphView<'_>,
    targets: &NodeSet,
    params: &ModelParams,
    fixed: &FixedLabels,
) -> Result<f64> {
    let pred = model::forward(params, view)?;
    baseline_from_predictions(cal, &pred, targets, fixed)
}

/// All baseline calibrations for a run, persisted as one JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub baselines: Vec<BaselineCalibration>,
}

impl CalibrationFile {
    pub fn get(&self, b: Baseline) -> Option<&BaselineCalibration> {
        self.baselines.iter().find(|c| c.variant == b)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("calibration serialize");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::collections::BTreeMap;

    #[test]
    fn threshold_quantiles() {
        let s = [0.9, 0.6, 0.3];
        let t = atc_threshold(&s, 2.0 / 3.0).unwrap();
        assert!((0.3..0.6).contains(&t));
        assert_eq!(s.iter().filter(|&&x| x > t).count(), 2);
        let t = atc_threshold(&s, 1.0).unwrap();
        assert!(t < 0.3);
        let t = atc_threshold(&s, 0.0).unwrap();
        assert!(s.iter().all(|&x| x <= t));
        assert!(matches!(atc_threshold(&[], 0.5), Err(Error::EmptyEvaluationSet)));
    }

    fn preds(rows: ndarray::Array2<f64>) -> Predictions {
        Predictions::new((0..rows.nrows()).collect(), rows)
    }

    #[test]
    fn utility_examples() {
        let p = preds(array![[0.9, 0.05, 0.05], [0.4, 0.3, 0.3]]);
        let targets = NodeSet::new([0, 1]);
        let fixed = FixedLabels(BTreeMap::from([(0, 0), (1, 0)]));
        let atc = BaselineCalibration {
            threshold: Some(0.5),
            ..BaselineCalibration::plain(Baseline::AtcMc)
        };
        assert_eq!(baseline_from_predictions(&atc, &p, &targets, &fixed).unwrap(), 0.5);

        let doc = BaselineCalibration {
            beta: Some(1.0),
            acc_val: Some(0.8),
            conf_val: Some(0.75),
            ..BaselineCalibration::plain(Baseline::Doc)
        };
        let p3 = preds(array![[0.7, 0.3]]);
        let one = NodeSet::new([0]);
        let u = baseline_from_predictions(&doc, &p3, &one, &fixed).unwrap();
        assert!((u - 0.75).abs() < 1e-12);

        let cc = BaselineCalibration::plain(Baseline::ClassConf);
        let p4 = preds(array![[0.2, 0.6, 0.2]]);
        let f1 = FixedLabels(BTreeMap::from([(0, 1)]));
        assert!((baseline_from_predictions(&cc, &p4, &one, &f1).unwrap() - 0.6).abs() < 1e-12);

        let mc = BaselineCalibration::plain(Baseline::MaxConf);
        assert_eq!(baseline_from_predictions(&mc, &p, &one, &fixed).unwrap(), 0.9);
    }

    #[test]
    fn entropy_is_positive() {
        assert!((entropy(array![0.5, 0.5].view()) - 2f64.ln()).abs() < 1e-12);
        assert_eq!(entropy(array![1.0, 0.0].view()), 0.0);
    }

    #[test]
    fn names_parse() {
        for b in Baseline::ALL {
            assert_eq!(b.name().parse::<Baseline>().unwrap(), b);
        }
        assert!("atc".parse::<Baseline>().is_err());
    }
}
