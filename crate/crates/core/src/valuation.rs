//! Structure-aware Shapley estimation over precedence-valid permutations.
//!
//! A game is a target set plus its k-hop neighbors (the players). The empty
//! coalition is the targets-only induced view; walking a permutation adds
//! one neighbor at a time to that view. Marginals of a scalar utility give
//! values directly; marginals of each feature give the feature Shapley
//! vectors, and a linear utility's values are their weighted sum.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Evaluation, FeatureExtractor, FeatureSet, FeatureVector, N_FEATURES};
use crate::fit::UtilityWeights;
use crate::graph::{induced_view, k_hop_neighborhood, Graph, NodeSet, SubgraphView};
use crate::perm::{enumerate_with_probabilities, sample_permutations, validate, Permutation};
use crate::seed::splitmix64;

/// Default permutation counts for utility learning and test-time valuation.
pub const DEFAULT_M_VAL: usize = 50;
pub const DEFAULT_M_TEST: usize = 5;

/// One prefix of a permutation walk, as seen by a scalar utility.
pub struct PrefixState<'a, 'g> {
    pub view: &'a SubgraphView<'g>,
    pub targets: &'a NodeSet,
    pub evaluation: &'a Evaluation,
}

/// Features (and optionally a scalar utility) at every prefix of one
/// permutation, the empty prefix included.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTrace {
    pub perm_id: usize,
    pub order: Vec<usize>,
    pub features: Vec<FeatureVector>,
    pub utilities: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct TraceStep<'a> {
    pub node: usize,
    pub before: &'a FeatureVector,
    pub after: &'a FeatureVector,
    pub utility: Option<(f64, f64)>,
}

impl MarginalTrace {
    pub fn steps(&self) -> impl Iterator<Item = TraceStep<'_>> + '_ {
        self.order.iter().enumerate().map(move |(j, &node)| TraceStep {
            node,
            before: &self.features[j],
            after: &self.features[j + 1],
            utility: self.utilities.as_ref().map(|u| (u[j], u[j + 1])),
        })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Fingerprint of a permutation list; ties feature Shapley vectors to the
/// scalar values they are compared with.
pub fn perm_digest<'a>(orders: impl IntoIterator<Item = &'a [usize]>) -> u64 {
    let mut h = 0x5EED_u64;
    for o in orders {
        h = splitmix64(h ^ o.len() as u64);
        for &v in o {
            h = splitmix64(h ^ v as u64);
        }
    }
    h
}

fn check_perms(g: &Graph, targets: &NodeSet, perms: &[Permutation]) -> Result<usize> {
    let first = perms
        .first()
        .ok_or_else(|| Error::InvalidPermutation("empty permutation list".into()))?;
    let players = k_hop_neighborhood(g, targets, first.hop_bound);
    for (i, p) in perms.iter().enumerate() {
        if &p.targets != targets {
            return Err(Error::InvalidPermutation(format!("permutation {i} has other targets")));
        }
        if p.len() != players.len() {
            return Err(Error::InvalidPermutation(format!(
                "mixed-length permutations: #{i} has {} of {} players",
                p.len(),
                players.len()
            )));
        }
        if !validate(g, p) {
            return Err(Error::InvalidPermutation(format!(
                "permutation {i} violates precedence"
            )));
        }
    }
    Ok(players.len())
}

/// Calls `f` on the targets-only view and then on each growing prefix.
pub fn walk_prefixes<'g, F>(g: &'g Graph, targets: &NodeSet, order: &[usize], mut f: F) -> Result<()>
where
    F: FnMut(&SubgraphView<'g>) -> Result<()>,
{
    let mut view = induced_view(g, targets)?;
    f(&view)?;
    for &v in order {
        view.push(v)?;
        f(&view)?;
    }
    Ok(())
}

type PrefixUtility<'u> = dyn Fn(&PrefixState<'_, '_>) -> f64 + Sync + 'u;

pub fn trace_permutation(
    g: &Graph,
    targets: &NodeSet,
    perm: &Permutation,
    perm_id: usize,
    extractor: &FeatureExtractor,
    scalar: Option<&PrefixUtility<'_>>,
) -> Result<MarginalTrace> {
    if &perm.targets != targets || !validate(g, perm) {
        return Err(Error::InvalidPermutation(format!(
            "permutation {perm_id} is not permissible for these targets"
        )));
    }
    let mut features = Vec::with_capacity(perm.len() + 1);
    let mut utilities = scalar.map(|_| Vec::with_capacity(perm.len() + 1));
    walk_prefixes(g, targets, &perm.order, |view| {
        let evaluation = extractor.evaluate(view, targets)?;
        if let (Some(u), Some(out)) = (scalar, utilities.as_mut()) {
            let value = u(&PrefixState {
                view,
                targets,
                evaluation: &evaluation,
            });
            if !value.is_finite() {
                return Err(Error::Numeric(format!("utility returned {value}")));
            }
            out.push(value);
        }
        features.push(evaluation.features);
        Ok(())
    })?;
    Ok(MarginalTrace {
        perm_id,
        order: perm.order.clone(),
        features,
        utilities,
    })
}

/// Traces every permutation in parallel; output order follows `perms`.
pub fn trace_all(
    g: &Graph,
    targets: &NodeSet,
    perms: &[Permutation],
    extractor: &FeatureExtractor,
    scalar: Option<&PrefixUtility<'_>>,
) -> Result<Vec<MarginalTrace>> {
    check_perms(g, targets, perms)?;
    perms
        .par_iter()
        .enumerate()
        .map(|(i, p)| trace_permutation(g, targets, p, i, extractor, scalar))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureShapleyVector {
    pub node: usize,
    pub psi: [f64; N_FEATURES],
    pub m: usize,
    pub perm_digest: u64,
}

/// Per-node running sums of vector-valued marginals.
#[derive(Debug, Clone)]
pub struct MarginalStats {
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
    pub n: usize,
}

impl MarginalStats {
    fn new(dim: usize) -> Self {
        MarginalStats {
            sum: vec![0.0; dim],
            sum_sq: vec![0.0; dim],
            n: 0,
        }
    }

    fn add(&mut self, delta: &[f64]) {
        for (k, &d) in delta.iter().enumerate() {
            self.sum[k] += d;
            self.sum_sq[k] += d * d;
        }
        self.n += 1;
    }

    pub fn mean(&self) -> Vec<f64> {
        self.sum.iter().map(|s| s / self.n as f64).collect()
    }

    /// Standard error of the mean, from the unbiased sample variance.
    pub fn std_err(&self) -> Vec<f64> {
        let n = self.n as f64;
        if self.n < 2 {
            return vec![f64::INFINITY; self.sum.len()];
        }
        self.sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(s, ss)| {
                let var = ((ss - s * s / n) / (n - 1.0)).max(0.0);
                (var / n).sqrt()
            })
            .collect()
    }
}

/// Feature Shapley vectors from already computed traces.
pub fn feature_shapley_from_traces(traces: &[MarginalTrace]) -> Result<BTreeMap<usize, FeatureShapleyVector>> {
    let m = traces.len();
    if m == 0 {
        return Err(Error::InvalidPermutation("empty permutation list".into()));
    }
    let len = traces[0].len();
    if traces.iter().any(|t| t.len() != len) {
        return Err(Error::InvalidPermutation("mixed-length permutations".into()));
    }
    let digest = perm_digest(traces.iter().map(|t| t.order.as_slice()));
    let mut acc: BTreeMap<usize, [f64; N_FEATURES]> = BTreeMap::new();
    for t in traces {
        for s in t.steps() {
            let e = acc.entry(s.node).or_insert([0.0; N_FEATURES]);
            for k in 0..N_FEATURES {
                e[k] += s.after.0[k] - s.before.0[k];
            }
        }
    }
    Ok(acc
        .into_iter()
        .map(|(node, sum)| {
            let psi = sum.map(|v| v / m as f64);
            (
                node,
                FeatureShapleyVector {
                    node,
                    psi,
                    m,
                    perm_digest: digest,
                },
            )
        })
        .collect())
}

pub fn feature_shapley(
    g: &Graph,
    targets: &NodeSet,
    perms: &[Permutation],
    extractor: &FeatureExtractor,
) -> Result<BTreeMap<usize, FeatureShapleyVector>> {
    let traces = trace_all(g, targets, perms, extractor, None)?;
    feature_shapley_from_traces(&traces)
}

/// Per-entry marginal statistics of feature values (for standard errors).
pub fn feature_marginal_stats(traces: &[MarginalTrace]) -> BTreeMap<usize, MarginalStats> {
    let mut out: BTreeMap<usize, MarginalStats> = BTreeMap::new();
    for t in traces {
        for s in t.steps() {
            let delta: Vec<f64> = (0..N_FEATURES).map(|k| s.after.0[k] - s.before.0[k]).collect();
            out.entry(s.node)
                .or_insert_with(|| MarginalStats::new(N_FEATURES))
                .add(&delta);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub method: String,
    pub m: usize,
    pub seed: Option<u64>,
    pub utility: String,
    pub perm_digest: u64,
}

/// Estimated value per neighbor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueReport {
    pub values: BTreeMap<usize, f64>,
    pub meta: ReportMeta,
}

impl ValueReport {
    pub fn nodes(&self) -> NodeSet {
        NodeSet::new(self.values.keys().copied())
    }

    pub fn total(&self) -> f64 {
        self.values.values().sum()
    }

    /// Writes `node_id,value` CSV plus a JSON metadata sidecar.
    pub fn save(&self, csv_path: &Path, meta_path: &Path, g: &Graph) -> Result<()> {
        let mut buf = Vec::new();
        writeln!(buf, "node_id,value").unwrap();
        for (&v, &x) in &self.values {
            writeln!(buf, "{},{x}", g.external_id(v)).unwrap();
        }
        fs::write(csv_path, buf).map_err(|e| Error::io(csv_path, e))?;
        let text = serde_json::to_string_pretty(&self.meta).expect("meta serialize");
        fs::write(meta_path, text + "\n").map_err(|e| Error::io(meta_path, e))
    }

    /// Reads values written by [`ValueReport::save`], mapping external ids
    /// back to dense ids.
    pub fn load(csv_path: &Path, meta_path: &Path, g: &Graph) -> Result<Self> {
        let ext: HashMap<i64, usize> = (0..g.n_nodes()).map(|v| (g.external_id(v), v)).collect();
        let mut rdr = csv::Reader::from_path(csv_path)
            .map_err(|e| Error::Data(format!("{}: {e}", csv_path.display())))?;
        let mut values = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Data(e.to_string()))?;
            let id: i64 = rec[0].parse().map_err(|_| Error::Data(format!("bad node id {:?}", &rec[0])))?;
            let v = *ext.get(&id).ok_or(Error::NodeOutOfRange { id, n_nodes: g.n_nodes() })?;
            let x: f64 = rec[1].parse().map_err(|_| Error::Data(format!("bad value {:?}", &rec[1])))?;
            values.insert(v, x);
        }
        let text = fs::read_to_string(meta_path).map_err(|e| Error::io(meta_path, e))?;
        let meta = serde_json::from_str(&text).map_err(|e| Error::Data(e.to_string()))?;
        Ok(ValueReport { values, meta })
    }
}

/// Per-node mean and standard error of a scalar utility's marginals.
pub fn scalar_marginal_stats<U>(
    g: &Graph,
    targets: &NodeSet,
    perms: &[Permutation],
    utility: &U,
) -> Result<BTreeMap<usize, MarginalStats>>
where
    U: Fn(&SubgraphView<'_>, &NodeSet) -> f64 + Sync,
{
    check_perms(g, targets, perms)?;
    let per_perm: Vec<Vec<(usize, f64)>> = perms
        .par_iter()
        .map(|p| {
            let mut prev = None;
            let mut out = Vec::with_capacity(p.len());
            let mut idx = 0;
            walk_prefixes(g, targets, &p.order, |view| {
                let u = utility(view, targets);
                if !u.is_finite() {
                    return Err(Error::Numeric(format!("utility returned {u}")));
                }
                if let Some(before) = prev {
                    out.push((p.order[idx], u - before));
                    idx += 1;
                }
                prev = Some(u);
                Ok(())
            })?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut stats: BTreeMap<usize, MarginalStats> = BTreeMap::new();
    for marginals in per_perm {
        for (v, d) in marginals {
            stats.entry(v).or_insert_with(|| MarginalStats::new(1)).add(&[d]);
        }
    }
    Ok(stats)
}

/// Mean marginal of `utility` over `perms`.
pub fn scalar_shapley<U>(
    g: &Graph,
    targets: &NodeSet,
    perms: &[Permutation],
    utility: &U,
    label: &str,
) -> Result<ValueReport>
where
    U: Fn(&SubgraphView<'_>, &NodeSet) -> f64 + Sync,
{
    let stats = scalar_marginal_stats(g, targets, perms, utility)?;
    Ok(ValueReport {
        values: stats.into_iter().map(|(v, s)| (v, s.mean()[0])).collect(),
        meta: ReportMeta {
            method: "scalar".into(),
            m: perms.len(),
            seed: None,
            utility: label.into(),
            perm_digest: perm_digest(perms.iter().map(|p| p.order.as_slice())),
        },
    })
}

/// Largest `|phi_i - w . psi_i|` over the players.
pub fn decompose_check(
    w: &UtilityWeights,
    psis: &BTreeMap<usize, FeatureShapleyVector>,
    phis: &ValueReport,
) -> Result<f64> {
    if psis.len() != phis.values.len() || psis.keys().any(|v| !phis.values.contains_key(v)) {
        return Err(Error::InvalidPermutation("player sets differ".into()));
    }
    if let Some(psi) = psis.values().next() {
        if psi.perm_digest != phis.meta.perm_digest || psi.m != phis.meta.m {
            return Err(Error::InvalidPermutation(
                "values were computed over a different permutation list".into(),
            ));
        }
    }
    Ok(psis
        .iter()
        .map(|(v, psi)| (phis.values[v] - w.shapley(&psi.psi)).abs())
        .fold(0.0, f64::max))
}

/// Values of the learned linear utility on a test graph, via feature
/// Shapley vectors over `m` sampled permutations.
pub fn estimate_test_values(
    g: &Graph,
    targets: &NodeSet,
    extractor: &FeatureExtractor,
    w: &UtilityWeights,
    m: usize,
    seed: u64,
    method: &str,
) -> Result<ValueReport> {
    let perms = sample_permutations(g, targets, extractor.params.k_hops(), m, seed)?;
    let psis = feature_shapley(g, targets, &perms, extractor)?;
    Ok(linear_values(&psis, w, method, Some(seed), &perms))
}

pub(crate) fn linear_values(
    psis: &BTreeMap<usize, FeatureShapleyVector>,
    w: &UtilityWeights,
    method: &str,
    seed: Option<u64>,
    perms: &[Permutation],
) -> ValueReport {
    ValueReport {
        values: psis.iter().map(|(&v, p)| (v, w.shapley(&p.psi))).collect(),
        meta: ReportMeta {
            method: method.into(),
            m: perms.len(),
            seed,
            utility: w.describe(),
            perm_digest: perm_digest(perms.iter().map(|p| p.order.as_slice())),
        },
    }
}

/// How exhaustive enumeration weights each permissible order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// Every permissible order counts equally.
    Uniform,
    /// Each order weighted by its probability under the frontier sampler;
    /// this is what Monte Carlo estimates converge to.
    Sampler,
}

/// Exact expected marginals of a vector-valued set function over all
/// permissible orders. Values are memoized per coalition.
pub fn exact_marginals<F>(
    g: &Graph,
    targets: &NodeSet,
    k: usize,
    weighting: Weighting,
    f: F,
) -> Result<BTreeMap<usize, Vec<f64>>>
where
    F: Fn(&SubgraphView<'_>) -> Result<Vec<f64>>,
{
    let orders = enumerate_with_probabilities(g, targets, k, None)?;
    let uniform = 1.0 / orders.len() as f64;
    let mut memo: HashMap<Vec<usize>, Vec<f64>> = HashMap::new();
    let mut out: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (perm, prob) in &orders {
        let weight = match weighting {
            Weighting::Uniform => uniform,
            Weighting::Sampler => *prob,
        };
        let mut prefix: Vec<usize> = Vec::new();
        let mut prev: Option<Vec<f64>> = None;
        let mut step = 0;
        walk_prefixes(g, targets, &perm.order, |view| {
            let mut key = prefix.clone();
            key.sort_unstable();
            let value = match memo.get(&key) {
                Some(v) => v.clone(),
                None => {
                    let v = f(view)?;
                    memo.insert(key, v.clone());
                    v
                }
            };
            if let Some(before) = prev.take() {
                let node = perm.order[step];
                let acc = out.entry(node).or_insert_with(|| vec![0.0; value.len()]);
                for (a, (x, b)) in acc.iter_mut().zip(value.iter().zip(&before)) {
                    *a += weight * (x - b);
                }
                step += 1;
            }
            if step < perm.order.len() {
                prefix.push(perm.order[step]);
            }
            prev = Some(value);
            Ok(())
        })?;
    }
    Ok(out)
}

/// Exact values of a scalar utility (see [`exact_marginals`]).
pub fn exact_shapley<U>(
    g: &Graph,
    targets: &NodeSet,
    k: usize,
    weighting: Weighting,
    utility: &U,
) -> Result<BTreeMap<usize, f64>>
where
    U: Fn(&SubgraphView<'_>, &NodeSet) -> f64,
{
    let m = exact_marginals(g, targets, k, weighting, |view| Ok(vec![utility(view, targets)]))?;
    Ok(m.into_iter().map(|(v, x)| (v, x[0])).collect())
}

/// Runs the engine once per target, each game over that target's own
/// neighborhood. Targets without neighbors get an empty report.
pub fn per_target_values(
    g: &Graph,
    targets: &NodeSet,
    extractor: &FeatureExtractor,
    w: &UtilityWeights,
    m: usize,
    seed: u64,
    method: &str,
) -> Result<BTreeMap<usize, ValueReport>> {
    let mut out = BTreeMap::new();
    for t in targets.iter() {
        let single = NodeSet::new([t]);
        let report = match estimate_test_values(g, &single, extractor, w, m, seed, method) {
            Ok(r) => r,
            Err(Error::NoPlayers) => ValueReport {
                values: BTreeMap::new(),
                meta: ReportMeta {
                    method: method.into(),
                    m,
                    seed: Some(seed),
                    utility: w.describe(),
                    perm_digest: 0,
                },
            },
            Err(e) => return Err(e),
        };
        out.insert(t, report);
    }
    Ok(out)
}

/// Writes feature Shapley vectors as CSV with a feature-name header.
pub fn write_psi_csv(path: &Path, g: &Graph, psis: &BTreeMap<usize, FeatureShapleyVector>) -> Result<()> {
    let mut buf = Vec::new();
    crate::features::write_feature_csv(
        &mut buf,
        "node_id",
        &FeatureSet::all(),
        psis.iter()
            .map(|(&v, p)| (g.external_id(v).to_string(), FeatureVector(p.psi))),
    )?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FEATURE_NAMES;
    use crate::fit::Objective;
    use crate::fixtures::{chain_instance, random_instance, star_instance};
    use crate::perm::sample_permutation;

    fn full_view<'g>(g: &'g Graph, targets: &NodeSet, k: usize) -> SubgraphView<'g> {
        induced_view(g, &targets.union(&k_hop_neighborhood(g, targets, k))).unwrap()
    }

    #[test]
    fn single_neighbor_trace() {
        let inst = chain_instance(1, 1, 1);
        let perms = sample_permutations(&inst.graph, &inst.targets, 1, 3, 0).unwrap();
        let t = trace_permutation(&inst.graph, &inst.targets, &perms[0], 0, &inst.extractor, None).unwrap();
        assert_eq!(t.len(), 1);
        let empty = induced_view(&inst.graph, &inst.targets).unwrap();
        assert_eq!(t.features[0], inst.extractor.extract(&empty, &inst.targets).unwrap());
    }

    #[test]
    fn size_and_zero_utilities() {
        let inst = random_instance(4, 8);
        let perms = sample_permutations(&inst.graph, &inst.targets, inst.k(), 7, 1).unwrap();
        let size = |v: &SubgraphView<'_>, t: &NodeSet| (v.len() - t.len()) as f64;
        let r = scalar_shapley(&inst.graph, &inst.targets, &perms, &size, "size").unwrap();
        assert!(r.values.values().all(|&x| x == 1.0));
        let zero = |_: &SubgraphView<'_>, _: &NodeSet| 0.0;
        let r = scalar_shapley(&inst.graph, &inst.targets, &perms, &zero, "zero").unwrap();
        assert!(r.values.values().all(|&x| x == 0.0));
        let nan = |_: &SubgraphView<'_>, _: &NodeSet| f64::NAN;
        assert!(matches!(
            scalar_shapley(&inst.graph, &inst.targets, &perms, &nan, "nan"),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn telescoping_and_incremental_equivalence() {
        for s in 0..15 {
            let inst = random_instance(s, 8);
            let (g, t, ex) = (&inst.graph, &inst.targets, &inst.extractor);
            let Ok(perms) = sample_permutations(g, t, inst.k(), 5, s) else { continue };
            let traces = trace_all(g, t, &perms, ex, None).unwrap();
            for tr in &traces {
                let mut active = t.clone();
                for (j, x) in tr.features.iter().enumerate() {
                    if j > 0 {
                        active = active.union(&NodeSet::new([tr.order[j - 1]]));
                    }
                    let scratch = ex.extract(&induced_view(g, &active).unwrap(), t).unwrap();
                    for k in 0..N_FEATURES {
                        assert!((x.0[k] - scratch.0[k]).abs() < 1e-6, "{}", FEATURE_NAMES[k]);
                    }
                }
            }
            let psis = feature_shapley_from_traces(&traces).unwrap();
            let x_full = ex.extract(&full_view(g, t, inst.k()), t).unwrap();
            let x_empty = ex.extract(&induced_view(g, t).unwrap(), t).unwrap();
            for k in 0..N_FEATURES {
                let total: f64 = psis.values().map(|p| p.psi[k]).sum();
                assert!((total - (x_full.0[k] - x_empty.0[k])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn decomposition_matches_linear_utility() {
        for s in 0..10 {
            let inst = random_instance(100 + s, 8);
            let (g, t, ex) = (&inst.graph, &inst.targets, &inst.extractor);
            let Ok(perms) = sample_permutations(g, t, inst.k(), 4, s) else { continue };
            let mut w = UtilityWeights::zeros(FeatureSet::all(), Objective::Shapley);
            for (i, v) in w.w.iter_mut().enumerate() {
                *v = ((s as usize * 7 + i * 3) % 5) as f64 * 0.4;
            }
            let psis = feature_shapley(g, t, &perms, ex).unwrap();
            let u = |view: &SubgraphView<'_>, t: &NodeSet| w.utility(&ex.extract(view, t).unwrap());
            let phis = scalar_shapley(g, t, &perms, &u, "linear").unwrap();
            assert!(decompose_check(&w, &psis, &phis).unwrap() < 1e-9);

            let est = estimate_test_values(g, t, ex, &w, 4, s, "sgul").unwrap();
            for (v, x) in &est.values {
                assert!((x - phis.values[v]).abs() < 1e-9);
            }

            let zero = UtilityWeights::zeros(FeatureSet::all(), Objective::Shapley);
            let est = estimate_test_values(g, t, ex, &zero, 2, s, "zero").unwrap();
            assert!(est.values.values().all(|&x| x == 0.0));

            let other = sample_permutations(g, t, inst.k(), 4, s + 1000).unwrap();
            let phis2 = scalar_shapley(g, t, &other, &u, "linear").unwrap();
            if phis2.meta.perm_digest != phis.meta.perm_digest {
                assert!(decompose_check(&w, &psis, &phis2).is_err());
            }
        }
    }

    #[test]
    fn single_neighbor_value_is_independent_of_m() {
        let inst = chain_instance(3, 1, 1);
        let mut w = UtilityWeights::zeros(FeatureSet::all(), Objective::Shapley);
        w.w = vec![0.5; N_FEATURES];
        let (g, t, ex) = (&inst.graph, &inst.targets, &inst.extractor);
        let a = estimate_test_values(g, t, ex, &w, 1, 0, "m").unwrap();
        let b = estimate_test_values(g, t, ex, &w, 9, 5, "m").unwrap();
        let x1 = ex.extract(&full_view(g, t, 1), t).unwrap();
        let x0 = ex.extract(&induced_view(g, t).unwrap(), t).unwrap();
        let direct = w.utility(&x1) - w.utility(&x0);
        assert!((a.values[&1] - direct).abs() < 1e-12);
        assert!((b.values[&1] - direct).abs() < 1e-12);
    }

    #[test]
    fn chain_sampled_equals_exact() {
        let inst = chain_instance(2, 3, 3);
        let (g, t, ex) = (&inst.graph, &inst.targets, &inst.extractor);
        let u = |view: &SubgraphView<'_>, t: &NodeSet| ex.extract(view, t).unwrap().max_conf();
        let exact = exact_shapley(g, t, 3, Weighting::Uniform, &u).unwrap();
        let perms = sample_permutations(g, t, 3, 3, 9).unwrap();
        let mc = scalar_shapley(g, t, &perms, &u, "max_conf").unwrap();
        for (v, x) in &exact {
            assert!((x - mc.values[v]).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_star_values() {
        let inst = star_instance(5, 3);
        let (g, t, ex) = (&inst.graph, &inst.targets, &inst.extractor);
        let u = |view: &SubgraphView<'_>, t: &NodeSet| ex.extract(view, t).unwrap().target_conf();
        for weighting in [Weighting::Uniform, Weighting::Sampler] {
            let exact = exact_shapley(g, t, 1, weighting, &u).unwrap();
            let vals: Vec<f64> = exact.values().copied().collect();
            assert!(vals.iter().all(|v| (v - vals[0]).abs() < 1e-9), "{vals:?}");
        }
    }

    #[test]
    fn rejects_bad_permutation_lists() {
        let inst = chain_instance(2, 3, 3);
        let (g, t, ex) = (&inst.graph, &inst.targets, &inst.extractor);
        let good = sample_permutation(g, t, 3, 0).unwrap();
        let mut short = good.clone();
        short.order.pop();
        assert!(matches!(feature_shapley(g, t, &[good.clone(), short], ex), Err(Error::InvalidPermutation(_))));
        let mut swapped = good.clone();
        swapped.order.swap(0, 1);
        assert!(trace_permutation(g, t, &swapped, 0, ex, None).is_err());
        assert!(feature_shapley(g, t, &[], ex).is_err());
    }

    #[test]
    fn thread_count_does_not_change_values() {
        let inst = random_instance(42, 8);
        let (g, t, ex) = (&inst.graph, &inst.targets, &inst.extractor);
        let mut w = UtilityWeights::zeros(FeatureSet::all(), Objective::Shapley);
        w.w = (0..N_FEATURES).map(|i| i as f64 / 10.0).collect();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_test_values(g, t, ex, &w, 6, 17, "sgul"))
        };
        match (run(1), run(4)) {
            (Ok(a), Ok(b)) => assert_eq!(a, b),
            (Err(Error::NoPlayers), Err(Error::NoPlayers)) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn report_files_round_trip() {
        let inst = random_instance(8, 8);
        let dir = tempfile::tempdir().unwrap();
        let report = ValueReport {
            values: BTreeMap::from([(1, 0.25), (2, -1.0 / 3.0)]),
            meta: ReportMeta {
                method: "x".into(),
                m: 3,
                seed: Some(4),
                utility: "u".into(),
                perm_digest: 99,
            },
        };
        let (c, j) = (dir.path().join("v.csv"), dir.path().join("v.json"));
        report.save(&c, &j, &inst.graph).unwrap();
        assert_eq!(ValueReport::load(&c, &j, &inst.graph).unwrap(), report);
    }
}
