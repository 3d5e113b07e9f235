//! The command stages: each reads artifacts from the run directory, does
//! one step and writes its own artifacts. Stages never overwrite an
//! existing artifact unless forced.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::baselines::{
    baseline_utility, calibrate_atc, calibrate_doc, mean_confidence, Baseline, BaselineCalibration,
    CalibrationFile,
};
use crate::config::{Method, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{self, expected_rows, mse_experiment, node_dropping, DropCurve};
use crate::features::{compute_train_stats, FeatureExtractor, FixedLabels, FEATURE_NAMES};
use crate::fit::{
    build_supervision, fit_sgul_accuracy, fit_sgul_shapley, write_cv_report, CvRow, Objective,
    SupervisionSet, UtilityWeights,
};
use crate::graph::{induced_view, k_hop_neighborhood, load_graph, Graph, NodeSet, Partition, SubgraphView};
use crate::model::{forward, train_mlp, ModelParams};
use crate::perm::{sample_permutations, Permutation};
use crate::seed;
use crate::synth;
use crate::valuation::{
    exact_shapley, feature_shapley, linear_values, perm_digest, scalar_marginal_stats,
    scalar_shapley, decompose_check, ReportMeta, ValueReport, Weighting,
};

pub const MODEL_FILE: &str = "model.json";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const WEIGHTS_FILE: &str = "weights.json";
pub const WEIGHTS_ACCURACY_FILE: &str = "weights_accuracy.json";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const TIMINGS_LOG: &str = "timings.log";
pub const AUC_SUMMARY: &str = "auc_summary.json";

/// A configured run with its output directory.
pub struct Run {
    pub cfg: RunConfig,
    pub force: bool,
}

fn json_text<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("artifact serializes") + "\n"
}

impl Run {
    pub fn new(cfg: RunConfig, force: bool) -> Self {
        Run { cfg, force }
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn fresh(&self, path: &Path) -> Result<()> {
        if !self.force && path.exists() {
            return Err(Error::ArtifactExists(path.to_owned()));
        }
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(())
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.out(name);
        self.fresh(&path)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        self.write(name, &json_text(value))
    }

    /// Wall times live here so the other artifacts stay reproducible.
    fn log_time(&self, stage: &str, what: &str, secs: f64) -> Result<()> {
        let path = self.out(TIMINGS_LOG);
        fs::create_dir_all(&self.cfg.out_dir).map_err(|e| Error::io(&self.cfg.out_dir, e))?;
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        writeln!(f, "{stage} {what} {secs:.6}").map_err(|e| Error::io(&path, e))
    }

    pub fn load_graph(&self) -> Result<Graph> {
        let d = &self.cfg.data;
        let labels = d.path(&d.labels);
        let g = load_graph(
            &d.path(&d.edges),
            &d.path(&d.features),
            labels.exists().then_some(labels.as_path()),
            &d.path(&d.splits),
        )?;
        Ok(g.with_setting(d.mode))
    }

    /// The trained model with the configured inference propagation.
    pub fn load_model(&self) -> Result<ModelParams> {
        ModelParams::load(&self.out(MODEL_FILE))?.with_propagation(self.cfg.model.conv, self.cfg.model.k_hops)
    }

    pub fn extractor(&self, g: &Graph, params: &ModelParams, targets: &NodeSet, part: Partition) -> Result<FeatureExtractor> {
        let stats = compute_train_stats(g, params)?;
        let fixed = FixedLabels::compute(g, params, targets, part)?;
        Ok(FeatureExtractor::new(params.clone(), stats, fixed, self.cfg.feature_config()))
    }

    fn batches(&self, targets: &NodeSet) -> Vec<NodeSet> {
        let size = match self.cfg.valuation.target_batch {
            0 => targets.len().max(1),
            n => n,
        };
        targets
            .as_slice()
            .chunks(size)
            .map(|c| NodeSet::new(c.iter().copied()))
            .collect()
    }
}

/// Writes a synthetic dataset into `data.dir`.
pub fn cmd_gen(run: &Run) -> Result<synth::SynthData> {
    let mut cfg = run.cfg.synth.clone();
    cfg.seed = seed::derive(run.cfg.seed, "synth-config", cfg.seed);
    let data = synth::generate(&cfg)?;
    let dir = &run.cfg.data.dir;
    for f in [synth::EDGES_FILE, synth::FEATURES_FILE, synth::LABELS_FILE, synth::SPLITS_FILE, synth::NOISE_FILE] {
        run.fresh(&dir.join(f))?;
    }
    synth::write(&data, dir)?;
    log::info!(
        "generated {} nodes, {} edges, {} noise nodes into {}",
        data.graph.n_nodes(),
        data.graph.n_edges(),
        data.noise_nodes.len(),
        dir.display()
    );
    Ok(data)
}

pub fn cmd_train(run: &Run) -> Result<ModelParams> {
    let g = run.load_graph()?;
    let t = Instant::now();
    let (params, log) = train_mlp(&g, &run.cfg.train_config())?;
    run.log_time("train", "fit", t.elapsed().as_secs_f64())?;
    let path = run.out(MODEL_FILE);
    run.fresh(&path)?;
    params.save(&path)?;
    let mut text = String::from("epoch,loss\n");
    for (i, l) in log.iter().enumerate() {
        text.push_str(&format!("{},{l}\n", i + 1));
    }
    run.write(TRAIN_LOG, &text)?;
    Ok(params)
}

#[derive(Serialize)]
struct CostFile {
    rows_shapley: usize,
    rows_accuracy: usize,
    expected_rows_shapley: usize,
    expected_rows_accuracy: usize,
}

#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub supervision: SupervisionSet,
    pub shapley: Option<UtilityWeights>,
    pub accuracy: Option<UtilityWeights>,
    pub calibration: CalibrationFile,
}

pub fn cmd_learn_utility(run: &Run) -> Result<LearnOutcome> {
    let cfg = &run.cfg;
    let g = run.load_graph()?;
    let params = run.load_model()?;
    let targets = g.splits().val_labeled.clone();
    if targets.is_empty() {
        return Err(Error::Data("no labeled validation targets".into()));
    }
    let ex = run.extractor(&g, &params, &targets, Partition::Val)?;
    let k = params.k_hops();

    let mut sup = SupervisionSet::default();
    let (mut exp_s, mut exp_a) = (0, 0);
    let t = Instant::now();
    for (b, batch) in run.batches(&targets).iter().enumerate() {
        let perms = match sample_permutations(&g, batch, k, cfg.valuation.m_val, seed::derive(cfg.seed, "val-perm", b as u64)) {
            Ok(p) => p,
            Err(Error::NoPlayers) => {
                log::warn!("validation batch {b} has no neighbors; skipped");
                continue;
            }
            Err(e) => return Err(e),
        };
        let lens: Vec<usize> = perms.iter().map(Permutation::len).collect();
        let (s, a) = expected_rows(k_hop_neighborhood(&g, batch, k).len(), &lens);
        exp_s += s;
        exp_a += a;
        sup.extend(build_supervision(&g, batch, &ex, &perms)?);
    }
    run.log_time("learn-utility", "supervision", t.elapsed().as_secs_f64())?;
    if sup.shapley.is_empty() {
        return Err(Error::Data("validation targets have no neighbors".into()));
    }

    let opts = cfg.fit_options();
    let mut cv: Vec<(Objective, Vec<CvRow>)> = Vec::new();
    let mut shapley = None;
    let mut accuracy = None;
    if cfg.fit.objective.shapley() {
        let t = Instant::now();
        let out = fit_sgul_shapley(&sup, &opts)?;
        run.log_time("learn-utility", "fit_shapley", t.elapsed().as_secs_f64())?;
        run.write_json(WEIGHTS_FILE, &out.weights)?;
        cv.push((Objective::Shapley, out.cv));
        shapley = Some(out.weights);
    }
    if cfg.fit.objective.accuracy() {
        let t = Instant::now();
        let out = fit_sgul_accuracy(&sup, &opts)?;
        run.log_time("learn-utility", "fit_accuracy", t.elapsed().as_secs_f64())?;
        run.write_json(WEIGHTS_ACCURACY_FILE, &out.weights)?;
        cv.push((Objective::Accuracy, out.cv));
        accuracy = Some(out.weights);
    }
    let cv_path = run.out("cv_report.csv");
    run.fresh(&cv_path)?;
    let cv_refs: Vec<(Objective, &[CvRow])> = cv.iter().map(|(o, r)| (*o, r.as_slice())).collect();
    write_cv_report(&cv_path, &cv_refs)?;

    run.write("psi_val.csv", &psi_csv(&g, &sup))?;
    let mut phi = String::from("batch,node_id,phi\n");
    for r in &sup.shapley {
        phi.push_str(&format!("{},{},{}\n", r.batch, g.external_id(r.node), r.phi));
    }
    run.write("phi_val.csv", &phi)?;
    run.write_json(
        "cost_report.json",
        &CostFile {
            rows_shapley: sup.shapley.len(),
            rows_accuracy: sup.accuracy.len(),
            expected_rows_shapley: exp_s,
            expected_rows_accuracy: exp_a,
        },
    )?;

    // baselines are calibrated on the full validation graph
    let full = induced_view(&g, &g.graph_nodes(Partition::Val))?;
    let pred = forward(&params, &full)?;
    let acc_val = crate::model::accuracy(&pred, &g, &targets)?;
    let conf_val = mean_confidence(&pred, &targets)?;
    let calibration = CalibrationFile {
        baselines: vec![
            calibrate_atc(&pred, &g, &targets, Baseline::AtcMc)?,
            calibrate_atc(&pred, &g, &targets, Baseline::AtcNe)?,
            calibrate_doc(&sup, acc_val, conf_val)?,
            BaselineCalibration::plain(Baseline::MaxConf),
            BaselineCalibration::plain(Baseline::ClassConf),
        ],
    };
    run.write_json(CALIBRATION_FILE, &calibration)?;

    if cfg.eval.mse_batches > 0 {
        // compared unpenalized, where the direct fit is the in-sample optimum
        let first = run.batches(&targets).remove(0);
        let unpenalized = crate::fit::FitOptions { lambda_grid: vec![0.0], ..opts.clone() };
        match mse_experiment(&g, &first, &ex, cfg.eval.mse_batches, cfg.eval.mse_perms, seed::derive(cfg.seed, "mse", 0), &unpenalized) {
            Ok(report) => {
                run.write_json("mse_report.json", &report)?;
            }
            Err(Error::NoPlayers) => log::warn!("first validation batch has no neighbors; no MSE report"),
            Err(e) => return Err(e),
        }
    }
    Ok(LearnOutcome {
        supervision: sup,
        shapley,
        accuracy,
        calibration,
    })
}

fn psi_csv(g: &Graph, sup: &SupervisionSet) -> String {
    let mut s = format!("batch,node_id,{}\n", FEATURE_NAMES.join(","));
    for r in &sup.shapley {
        let vals: Vec<String> = r.psi.iter().map(|v| v.to_string()).collect();
        s.push_str(&format!("{},{},{}\n", r.batch, g.external_id(r.node), vals.join(",")));
    }
    s
}

/// Uniform value in [0, 1) per node, fixed by the run seed.
pub fn random_value(master: u64, node: usize) -> f64 {
    (seed::derive(master, "random", node as u64) >> 11) as f64 / (1u64 << 53) as f64
}

fn values_name(m: Method) -> (String, String) {
    (format!("values_{m}.csv"), format!("values_{m}.json"))
}

/// Values for every requested method over the test targets. Games run per
/// target batch and share one permutation list per batch; values of a node
/// appearing in several batches are summed, and targets are never valued.
pub fn compute_test_values(run: &Run, g: &Graph, params: &ModelParams, methods: &[Method]) -> Result<BTreeMap<Method, ValueReport>> {
    let cfg = &run.cfg;
    let targets = g.splits().test_targets.clone();
    if targets.is_empty() {
        return Err(Error::Data("no test targets".into()));
    }
    let ex = run.extractor(g, params, &targets, Partition::Test)?;
    let k = params.k_hops();
    let load_w = |name: &str| UtilityWeights::load(&run.out(name));
    let w_s = methods.contains(&Method::SgulShapley).then(|| load_w(WEIGHTS_FILE)).transpose()?;
    let w_a = methods.contains(&Method::SgulAccuracy).then(|| load_w(WEIGHTS_ACCURACY_FILE)).transpose()?;
    let needs_cal = methods.iter().any(|m| matches!(m, Method::Baseline(_)));
    let cal = needs_cal.then(|| CalibrationFile::load(&run.out(CALIBRATION_FILE))).transpose()?;

    let mut sums: BTreeMap<Method, BTreeMap<usize, f64>> = methods.iter().map(|&m| (m, BTreeMap::new())).collect();
    let mut all_perms: Vec<Permutation> = Vec::new();
    for (b, batch) in run.batches(&targets).iter().enumerate() {
        let perms = match sample_permutations(g, batch, k, cfg.valuation.m_test, seed::derive(cfg.seed, "test-perm", b as u64)) {
            Ok(p) => p,
            Err(Error::NoPlayers) => {
                log::warn!("test batch {b} has no neighbors; its report is empty");
                continue;
            }
            Err(e) => return Err(e),
        };
        let psis = if w_s.is_some() || w_a.is_some() {
            Some(feature_shapley(g, batch, &perms, &ex)?)
        } else {
            None
        };
        for &m in methods {
            let report = match m {
                Method::SgulShapley => linear_values(psis.as_ref().expect("traced"), w_s.as_ref().expect("loaded"), "", None, &perms),
                Method::SgulAccuracy => linear_values(psis.as_ref().expect("traced"), w_a.as_ref().expect("loaded"), "", None, &perms),
                Method::Baseline(bl) => {
                    let c = cal
                        .as_ref()
                        .and_then(|c| c.get(bl))
                        .ok_or_else(|| Error::Data(format!("no calibration for {bl}")))?;
                    let u = |view: &SubgraphView<'_>, t: &NodeSet| {
                        baseline_utility(c, view, t, params, &ex.fixed).unwrap_or(f64::NAN)
                    };
                    scalar_shapley(g, batch, &perms, &u, bl.name())?
                }
                Method::Random => ValueReport {
                    values: k_hop_neighborhood(g, batch, k)
                        .iter()
                        .map(|v| (v, random_value(cfg.seed, v)))
                        .collect(),
                    meta: ReportMeta {
                        method: String::new(),
                        m: 0,
                        seed: None,
                        utility: String::new(),
                        perm_digest: 0,
                    },
                },
            };
            let acc = sums.get_mut(&m).expect("method registered");
            for (v, x) in report.values {
                if targets.contains(v) {
                    continue;
                }
                if m == Method::Random {
                    acc.insert(v, x);
                } else {
                    *acc.entry(v).or_insert(0.0) += x;
                }
            }
        }
        all_perms.extend(perms);
    }
    let digest = perm_digest(all_perms.iter().map(|p| p.order.as_slice()));
    Ok(sums
        .into_iter()
        .map(|(m, values)| {
            let utility = match m {
                Method::SgulShapley => w_s.as_ref().map(UtilityWeights::describe).unwrap_or_default(),
                Method::SgulAccuracy => w_a.as_ref().map(UtilityWeights::describe).unwrap_or_default(),
                Method::Baseline(b) => b.name().to_owned(),
                Method::Random => "uniform random ranking".to_owned(),
            };
            let report = ValueReport {
                values,
                meta: ReportMeta {
                    method: m.to_string(),
                    m: if m == Method::Random { 0 } else { cfg.valuation.m_test },
                    seed: Some(cfg.seed),
                    utility,
                    perm_digest: if m == Method::Random { 0 } else { digest },
                },
            };
            (m, report)
        })
        .collect())
}

fn methods_for_value(cfg: &RunConfig) -> Vec<Method> {
    let mut m = cfg.eval.methods.clone();
    if !m.contains(&cfg.valuation.method) {
        m.push(cfg.valuation.method);
    }
    m.sort();
    m
}

pub fn cmd_value(run: &Run) -> Result<BTreeMap<Method, ValueReport>> {
    let g = run.load_graph()?;
    let params = run.load_model()?;
    let methods = methods_for_value(&run.cfg);
    let t = Instant::now();
    let reports = compute_test_values(run, &g, &params, &methods)?;
    run.log_time("value", "all_methods", t.elapsed().as_secs_f64())?;
    for (m, r) in &reports {
        if r.values.is_empty() {
            log::warn!("{m}: empty test neighborhood, writing an empty value file");
        }
        let (c, j) = values_name(*m);
        for name in [&c, &j] {
            run.fresh(&run.out(name))?;
        }
        r.save(&run.out(&c), &run.out(&j), &g)?;
    }
    let primary = &reports[&run.cfg.valuation.method];
    for name in ["values.csv", "values.json"] {
        run.fresh(&run.out(name))?;
    }
    primary.save(&run.out("values.csv"), &run.out("values.json"), &g)?;
    Ok(reports)
}

pub fn cmd_drop_eval(run: &Run) -> Result<BTreeMap<String, DropCurve>> {
    let g = run.load_graph()?;
    let params = run.load_model()?;
    let targets = g.splits().test_targets.clone();
    for t in targets.iter() {
        if g.label(t).is_none() {
            return Err(Error::Unlabeled(t));
        }
    }
    let mut curves = BTreeMap::new();
    for &m in &run.cfg.eval.methods {
        let (c, j) = values_name(m);
        let report = ValueReport::load(&run.out(&c), &run.out(&j), &g)?;
        let curve = node_dropping(&g, &targets, &report, &params)?;
        let path = run.out(&format!("curve_{m}.csv"));
        run.fresh(&path)?;
        eval::write_curve_csv(&path, &curve)?;
        curves.insert(m.to_string(), curve);
    }
    let summary: BTreeMap<&String, f64> = curves.iter().map(|(m, c)| (m, c.auc)).collect();
    run.write_json(AUC_SUMMARY, &summary)?;
    let flat: Vec<(String, DropCurve)> = curves.iter().map(|(m, c)| (m.clone(), c.clone())).collect();
    let path = run.out("drop_curves.dat");
    run.fresh(&path)?;
    eval::write_gnuplot(&path, &flat)?;
    Ok(curves)
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleRow {
    pub node_id: i64,
    pub exact_uniform: f64,
    pub exact_sampler: f64,
    pub mc_mean: f64,
    pub mc_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub targets: Vec<i64>,
    pub n_players: usize,
    pub m: usize,
    pub accuracy: Vec<OracleRow>,
    pub linear: Vec<OracleRow>,
    pub decompose_max_error: f64,
}

fn dense_id(g: &Graph, ext: usize) -> Result<usize> {
    (0..g.n_nodes())
        .find(|&v| g.external_id(v) == ext as i64)
        .ok_or(Error::NodeOutOfRange { id: ext as i64, n_nodes: g.n_nodes() })
}

/// Exact and sampled values on one small game, for true accuracy and for
/// the learned linear utility.
pub fn cmd_oracle(run: &Run) -> Result<OracleReport> {
    let cfg = &run.cfg;
    let g = run.load_graph()?;
    let params = run.load_model()?;
    let targets = if cfg.oracle.targets.is_empty() {
        let first = g.splits().test_targets.iter().next().ok_or_else(|| Error::Data("no test targets".into()))?;
        NodeSet::new([first])
    } else {
        cfg.oracle.targets.iter().map(|&t| dense_id(&g, t)).collect::<Result<NodeSet>>()?
    };
    let part = g.partition_of(targets.as_slice()[0]).unwrap_or(Partition::Test);
    let ex = run.extractor(&g, &params, &targets, part)?;
    let k = params.k_hops();
    let w = match UtilityWeights::load(&run.out(WEIGHTS_FILE)) {
        Ok(w) => w,
        Err(Error::Io { .. }) => {
            log::warn!("no {WEIGHTS_FILE}; the linear utility uses unit weights");
            let mut w = UtilityWeights::zeros(cfg.feature_set(), Objective::Shapley);
            w.w.iter_mut().for_each(|v| *v = 1.0);
            w
        }
        Err(e) => return Err(e),
    };
    let perms = sample_permutations(&g, &targets, k, cfg.oracle.m, seed::derive(cfg.seed, "oracle-perm", 0))?;

    let acc_u = |view: &SubgraphView<'_>, t: &NodeSet| {
        forward(&params, view)
            .and_then(|p| crate::model::accuracy(&p, &g, t))
            .unwrap_or(f64::NAN)
    };
    let lin_u = |view: &SubgraphView<'_>, t: &NodeSet| {
        ex.extract(view, t).map(|x| w.utility(&x)).unwrap_or(f64::NAN)
    };
    let rows = |u: &(dyn Fn(&SubgraphView<'_>, &NodeSet) -> f64 + Sync)| -> Result<Vec<OracleRow>> {
        let uni = exact_shapley(&g, &targets, k, Weighting::Uniform, &u)?;
        let smp = exact_shapley(&g, &targets, k, Weighting::Sampler, &u)?;
        let mc = scalar_marginal_stats(&g, &targets, &perms, &u)?;
        Ok(uni
            .keys()
            .map(|&v| OracleRow {
                node_id: g.external_id(v),
                exact_uniform: uni[&v],
                exact_sampler: smp[&v],
                mc_mean: mc[&v].mean()[0],
                mc_se: mc[&v].std_err()[0],
            })
            .collect())
    };
    let accuracy = rows(&acc_u)?;
    let linear = rows(&lin_u)?;
    let psis = feature_shapley(&g, &targets, &perms, &ex)?;
    let phis = scalar_shapley(&g, &targets, &perms, &lin_u, "linear")?;
    let report = OracleReport {
        targets: targets.iter().map(|t| g.external_id(t)).collect(),
        n_players: k_hop_neighborhood(&g, &targets, k).len(),
        m: cfg.oracle.m,
        accuracy,
        linear,
        decompose_max_error: decompose_check(&w, &psis, &phis)?,
    };
    run.write_json("oracle.json", &report)?;
    let mut csv = String::from("utility,node_id,exact_uniform,exact_sampler,mc_mean,mc_se\n");
    for (name, rows) in [("accuracy", &report.accuracy), ("linear", &report.linear)] {
        for r in rows {
            csv.push_str(&format!(
                "{name},{},{},{},{},{}\n",
                r.node_id, r.exact_uniform, r.exact_sampler, r.mc_mean, r.mc_se
            ));
        }
    }
    run.write("oracle.csv", &csv)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub auc: BTreeMap<String, f64>,
    pub curves: BTreeMap<String, Vec<f64>>,
    /// Mean value of planted noise neighbors and of clean neighbors under
    /// the primary method (synthetic runs only).
    pub noise_mean: Option<f64>,
    pub clean_mean: Option<f64>,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Runs gen (optionally), train, learn-utility, value and drop-eval once
/// per seed under `out_dir/seed_<i>` and aggregates AUCs.
pub fn cmd_compare(run: &Run) -> Result<Vec<SeedOutcome>> {
    let mut outcomes = Vec::new();
    for i in 0..run.cfg.compare.seeds as u64 {
        let mut cfg = run.cfg.clone();
        cfg.seed = run.cfg.seed + i;
        cfg.out_dir = run.cfg.out_dir.join(format!("seed_{i}"));
        if run.cfg.compare.synth {
            cfg.data.dir = cfg.out_dir.join("data");
        }
        let sub = Run::new(cfg, run.force);
        log::info!("compare: seed {} in {}", sub.cfg.seed, sub.cfg.out_dir.display());
        let noise = if run.cfg.compare.synth { Some(cmd_gen(&sub)?.noise_nodes) } else { None };
        cmd_train(&sub)?;
        cmd_learn_utility(&sub)?;
        let reports = cmd_value(&sub)?;
        let curves = cmd_drop_eval(&sub)?;
        let (noise_mean, clean_mean) = match &noise {
            Some(noise) => {
                let primary = &reports[&sub.cfg.valuation.method];
                let (mut nz, mut cl) = (Vec::new(), Vec::new());
                for (&v, &x) in &primary.values {
                    if noise.contains(v) { nz.push(x) } else { cl.push(x) }
                }
                let m = |v: &[f64]| (!v.is_empty()).then(|| mean_sd(v).0);
                (m(&nz), m(&cl))
            }
            None => (None, None),
        };
        outcomes.push(SeedOutcome {
            seed: sub.cfg.seed,
            auc: curves.iter().map(|(m, c)| (m.clone(), c.auc)).collect(),
            curves: curves.into_iter().map(|(m, c)| (m, c.acc)).collect(),
            noise_mean,
            clean_mean,
        });
    }
    write_compare(run, &outcomes)?;
    Ok(outcomes)
}

fn write_compare(run: &Run, outcomes: &[SeedOutcome]) -> Result<()> {
    let methods: Vec<String> = run.cfg.eval.methods.iter().map(Method::to_string).collect();
    let mut summary = String::from("method,auc_mean,auc_sd,n_seeds\n");
    let mut curves = String::from("method,k,acc_mean,acc_sd,n_seeds\n");
    for m in &methods {
        let aucs: Vec<f64> = outcomes.iter().filter_map(|o| o.auc.get(m).copied()).collect();
        let (mean, sd) = mean_sd(&aucs);
        summary.push_str(&format!("{m},{mean},{sd},{}\n", aucs.len()));
        let max_len = outcomes.iter().filter_map(|o| o.curves.get(m)).map(Vec::len).max().unwrap_or(0);
        for k in 0..max_len {
            let at: Vec<f64> = outcomes.iter().filter_map(|o| o.curves.get(m)?.get(k).copied()).collect();
            let (mean, sd) = mean_sd(&at);
            curves.push_str(&format!("{m},{k},{mean},{sd},{}\n", at.len()));
        }
    }
    run.write("compare_auc.csv", &summary)?;
    run.write("compare_curves.csv", &curves)?;
    run.write_json("compare_seeds.json", &outcomes)?;
    Ok(())
}
