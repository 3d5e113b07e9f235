//! Acceptance suite: runs all nine criteria, prints one line per
//! criterion and exits non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use graphval::baselines::{baseline_utility, Baseline, BaselineCalibration};
use graphval::config::RunConfig;
use graphval::error::Error;
use graphval::eval::{expected_rows, mse_experiment};
use graphval::features::{FeatureSet, FeatureVector};
use graphval::fit::{build_supervision, fit_fixed, fit_sgul_shapley, FitOptions, Objective, ShapleyRow, SupervisionSet, UtilityWeights};
use graphval::fixtures::{chain_instance, random_instance, Instance};
use graphval::graph::{induced_view, k_hop_neighborhood, NodeSet, Partition, SubgraphView};
use graphval::model::{accuracy, forward};
use graphval::perm::sample_permutations;
use graphval::pipeline::{self, Run};
use graphval::seed;
use graphval::valuation::{decompose_check, exact_shapley, feature_shapley, scalar_marginal_stats, scalar_shapley, Weighting};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(t: Instant, limit: Duration, detail: String) -> Outcome {
    let secs = t.elapsed().as_secs_f64();
    if t.elapsed() > limit {
        Err(format!("{detail}; took {secs:.1}s, limit {}s", limit.as_secs()))
    } else {
        Ok(format!("{detail}; {secs:.1}s"))
    }
}

/// Instances that have at least one player, drawn in seed order.
fn instances(count: usize, max_nodes: usize, max_players: usize, base: u64) -> Vec<Instance> {
    let mut out = Vec::new();
    let mut s = base;
    while out.len() < count {
        let inst = random_instance(s, max_nodes);
        let n = k_hop_neighborhood(&inst.graph, &inst.targets, inst.k()).len();
        if (1..=max_players).contains(&n) {
            out.push(inst);
        }
        s += 1;
    }
    out
}

fn accuracy_utility(inst: &Instance) -> impl Fn(&SubgraphView<'_>, &NodeSet) -> f64 + Sync + '_ {
    move |view, t| {
        let pred = forward(&inst.extractor.params, view).expect("forward");
        accuracy(&pred, &inst.graph, t).expect("labeled targets")
    }
}

fn max_conf_utility(inst: &Instance) -> impl Fn(&SubgraphView<'_>, &NodeSet) -> f64 + Sync + '_ {
    move |view, t| inst.extractor.extract(view, t).expect("extract").max_conf()
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let insts = instances(20, 7, 6, 1000);
    let (mut total, mut ok_sampler, mut ok_uniform) = (0usize, 0usize, 0usize);
    for (i, inst) in insts.iter().enumerate() {
        let perms = sample_permutations(&inst.graph, &inst.targets, inst.k(), 5000, seed::derive(1, "c1", i as u64))
            .map_err(|e| e.to_string())?;
        let acc = accuracy_utility(inst);
        let conf = max_conf_utility(inst);
        let utilities: [&(dyn Fn(&SubgraphView<'_>, &NodeSet) -> f64 + Sync); 2] = [&acc, &conf];
        for u in utilities {
            let mc = scalar_marginal_stats(&inst.graph, &inst.targets, &perms, &u).map_err(|e| e.to_string())?;
            let smp = exact_shapley(&inst.graph, &inst.targets, inst.k(), Weighting::Sampler, &u).map_err(|e| e.to_string())?;
            let uni = exact_shapley(&inst.graph, &inst.targets, inst.k(), Weighting::Uniform, &u).map_err(|e| e.to_string())?;
            for (v, s) in &mc {
                let tol = 3.0 * s.std_err()[0] + 1e-12;
                total += 1;
                ok_sampler += ((s.mean()[0] - smp[v]).abs() <= tol) as usize;
                ok_uniform += ((s.mean()[0] - uni[v]).abs() <= tol) as usize;
            }
        }
    }
    let mut chain_err: f64 = 0.0;
    for s in 0..5 {
        let inst = chain_instance(s, 4, 4);
        let perms = sample_permutations(&inst.graph, &inst.targets, 4, 50, s).map_err(|e| e.to_string())?;
        let u = max_conf_utility(&inst);
        let mc = scalar_shapley(&inst.graph, &inst.targets, &perms, &u, "max_conf").map_err(|e| e.to_string())?;
        let ex = exact_shapley(&inst.graph, &inst.targets, 4, Weighting::Uniform, &u).map_err(|e| e.to_string())?;
        for (v, x) in &mc.values {
            chain_err = chain_err.max((x - ex[v]).abs());
        }
    }
    let frac = ok_sampler as f64 / total as f64;
    let detail = format!(
        "{ok_sampler}/{total} node values within 3 SE of the sampler-weighted exact value ({:.1}%; uniform-weighted: {ok_uniform}/{total}); chain max error {chain_err:e}",
        100.0 * frac
    );
    check(frac >= 0.95 && chain_err <= 1e-12, detail.clone())?;
    within(t, Duration::from_secs(120), detail)
}

fn random_weights(rng: &mut impl Rng) -> UtilityWeights {
    let mut w = UtilityWeights::zeros(FeatureSet::all(), Objective::Shapley);
    for v in w.w.iter_mut() {
        *v = if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random_range(0.0..2.0) };
    }
    w
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let mut rng = seed::rng(2);
    let mut worst: f64 = 0.0;
    for (i, inst) in instances(100, 10, usize::MAX, 2000).iter().enumerate() {
        let w = random_weights(&mut rng);
        let perms = sample_permutations(&inst.graph, &inst.targets, inst.k(), 20, seed::derive(2, "c2", i as u64))
            .map_err(|e| e.to_string())?;
        let psis = feature_shapley(&inst.graph, &inst.targets, &perms, &inst.extractor).map_err(|e| e.to_string())?;
        let u = |view: &SubgraphView<'_>, t: &NodeSet| w.utility(&inst.extractor.extract(view, t).expect("extract"));
        let phis = scalar_shapley(&inst.graph, &inst.targets, &perms, &u, "linear").map_err(|e| e.to_string())?;
        worst = worst.max(decompose_check(&w, &psis, &phis).map_err(|e| e.to_string())?);
    }
    let detail = format!("max |phi - w.psi| over 100 instances = {worst:e}");
    check(worst <= 1e-9, detail.clone())?;
    within(t, Duration::from_secs(60), detail)
}

fn calibrations() -> Vec<BaselineCalibration> {
    vec![
        BaselineCalibration { threshold: Some(0.6), ..BaselineCalibration::plain(Baseline::AtcMc) },
        BaselineCalibration { threshold: Some(0.8), ..BaselineCalibration::plain(Baseline::AtcNe) },
        BaselineCalibration {
            beta: Some(0.8),
            acc_val: Some(0.7),
            conf_val: Some(0.75),
            ..BaselineCalibration::plain(Baseline::Doc)
        },
        BaselineCalibration::plain(Baseline::MaxConf),
        BaselineCalibration::plain(Baseline::ClassConf),
    ]
}

fn criterion_3() -> Outcome {
    let mut rng = seed::rng(3);
    let cals = calibrations();
    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    let insts = instances(50, 10, usize::MAX, 3000);
    for (i, inst) in insts.iter().enumerate() {
        let g = &inst.graph;
        let mut w = random_weights(&mut rng);
        w.intercept = Some(rng.random());
        let perms = sample_permutations(g, &inst.targets, inst.k(), 20, seed::derive(3, "c3", i as u64)).map_err(|e| e.to_string())?;
        let empty = induced_view(g, &inst.targets).map_err(|e| e.to_string())?;
        let full_set = inst.targets.union(&k_hop_neighborhood(g, &inst.targets, inst.k()));
        let full = induced_view(g, &full_set).map_err(|e| e.to_string())?;

        let acc = accuracy_utility(inst);
        let lin = |view: &SubgraphView<'_>, t: &NodeSet| w.utility(&inst.extractor.extract(view, t).expect("extract"));
        let mut variants: Vec<(String, Box<dyn Fn(&SubgraphView<'_>, &NodeSet) -> f64 + Sync + '_>)> =
            vec![("accuracy".into(), Box::new(acc)), ("linear".into(), Box::new(lin))];
        for cal in &cals {
            let params = &inst.extractor.params;
            let fixed = &inst.extractor.fixed;
            variants.push((
                cal.variant.name().into(),
                Box::new(move |view: &SubgraphView<'_>, t: &NodeSet| baseline_utility(cal, view, t, params, fixed).expect("baseline")),
            ));
        }
        for (name, u) in &variants {
            let report = scalar_shapley(g, &inst.targets, &perms, u, name).map_err(|e| e.to_string())?;
            let gap = (report.total() - (u(&full, &inst.targets) - u(&empty, &inst.targets))).abs();
            let e = worst.entry(name.clone()).or_insert(0.0);
            *e = e.max(gap);
        }
    }
    let max = worst.values().copied().fold(0.0, f64::max);
    let parts: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    check(max <= 1e-9, format!("max efficiency gap over 50 instances: {}", parts.join(", ")))
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let eps = 1e-9;
    let ln_c = 3f64.ln();
    let mut checked = 0;
    let mut worst_lp: f64 = 0.0;
    for s in 0..1000u64 {
        let inst = random_instance(4000 + s, 12);
        let g = &inst.graph;
        let players = k_hop_neighborhood(g, &inst.targets, inst.k());
        let mut views = vec![induced_view(g, &inst.targets).map_err(|e| e.to_string())?];
        views.push(induced_view(g, &inst.targets.union(&players)).map_err(|e| e.to_string())?);
        if !players.is_empty() {
            let p = sample_permutations(g, &inst.targets, inst.k(), 1, s).map_err(|e| e.to_string())?;
            let half = &p[0].order[..p[0].len() / 2];
            views.push(induced_view(g, &inst.targets.union(&NodeSet::new(half.iter().copied()))).map_err(|e| e.to_string())?);
        }
        for view in &views {
            let x: FeatureVector = inst.extractor.extract(view, &inst.targets).map_err(|e| e.to_string())?;
            let unit = |v: f64| (-eps..=1.0 + eps).contains(&v);
            let sym = |v: f64| (-1.0 - eps..=1.0 + eps).contains(&v);
            let ok = sym(x.edge_cos())
                && sym(x.rep_dist())
                && sym(x.classwise_rep_dist())
                && [x.max_conf(), x.target_conf(), x.prop_max_conf(), x.prop_target_conf(), x.conf_gap()].into_iter().all(unit)
                && (-ln_c - eps..=eps).contains(&x.neg_entropy())
                && x.conf_gap() <= x.max_conf() + eps
                && x.target_conf() <= x.max_conf() + eps;
            if !ok {
                return Err(format!("instance {s}: feature out of range: {x:?}"));
            }
            let bare = inst.extractor.extract(&view.without_edges(), &inst.targets).map_err(|e| e.to_string())?;
            worst_lp = worst_lp
                .max((bare.prop_max_conf() - bare.max_conf()).abs())
                .max((bare.prop_target_conf() - bare.target_conf()).abs());
            checked += 1;
        }
    }
    let detail = format!("{checked} feature vectors over 1000 instances in range; empty-edge propagation gap {worst_lp:e}");
    check(worst_lp <= 1e-6, detail.clone())?;
    within(t, Duration::from_secs(300), detail)
}

fn shapley_sup(x: &[Vec<f64>], y: &[f64]) -> SupervisionSet {
    let shapley = x
        .iter()
        .zip(y)
        .enumerate()
        .map(|(i, (r, &phi))| {
            let mut psi = [0.0; 9];
            psi.copy_from_slice(r);
            ShapleyRow { batch: 0, node: i, psi, phi }
        })
        .collect();
    SupervisionSet { shapley, accuracy: vec![], n_batches: 1 }
}

fn criterion_5() -> Outcome {
    let mut rng = seed::rng(5);
    let grid = [0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0];
    let mut negatives = 0;
    let mut non_monotone = 0;
    for _ in 0..20 {
        let x: Vec<Vec<f64>> = (0..60).map(|_| (0..9).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| r.iter().sum::<f64>() * rng.random_range(-0.5..1.0)).collect();
        let mut prev = f64::INFINITY;
        for &l in &grid {
            let (w, _) = fit_fixed(&x, &y, l, false);
            negatives += w.iter().filter(|&&v| v < 0.0).count();
            let norm: f64 = w.iter().sum();
            if norm > prev + 1e-9 {
                non_monotone += 1;
            }
            prev = norm;
        }
        let fit = fit_sgul_shapley(&shapley_sup(&x, &y), &FitOptions::default()).map_err(|e| e.to_string())?;
        negatives += fit.weights.w.iter().filter(|&&v| v < 0.0).count();
        let big = fit_sgul_shapley(&shapley_sup(&x, &y), &FitOptions { lambda_grid: vec![1e9], ..FitOptions::default() })
            .map_err(|e| e.to_string())?;
        if big.weights.w.iter().any(|&v| v != 0.0) {
            return Err(format!("lambda 1e9 left weights {:?}", big.weights.w));
        }
    }
    let noise = rand_distr::Normal::new(0.0, 1e-3).expect("sd");
    let x: Vec<Vec<f64>> = (0..200).map(|_| (0..9).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = x.iter().map(|r| 0.3 * r[0] + 0.7 * r[3] + rand_distr::Distribution::sample(&noise, &mut rng)).collect();
    let w = fit_sgul_shapley(&shapley_sup(&x, &y), &FitOptions { lambda_grid: vec![1e-4], ..FitOptions::default() })
        .map_err(|e| e.to_string())?
        .weights
        .w;
    let recovered = (w[0] - 0.3).abs() < 0.05 && (w[3] - 0.7).abs() < 0.05;
    check(
        negatives == 0 && non_monotone == 0 && recovered,
        format!(
            "negative weights {negatives}; non-monotone L1 steps {non_monotone}; recovered [{:.4}, {:.4}]",
            w[0], w[3]
        ),
    )
}

fn synth_run(dir: &Path, seed: u64) -> Result<Run, Error> {
    let mut cfg = RunConfig::default();
    cfg.seed = seed;
    cfg.out_dir = dir.join("run");
    cfg.data.dir = dir.join("data");
    let run = Run::new(cfg, false);
    pipeline::cmd_gen(&run)?;
    pipeline::cmd_train(&run)?;
    Ok(run)
}

fn criterion_6() -> Outcome {
    let t = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = synth_run(dir.path(), 0).map_err(|e| e.to_string())?;
    if run.cfg.model.conv != graphval::model::Conv::Sgc {
        return Err("default model is not SGC".into());
    }
    let g = run.load_graph().map_err(|e| e.to_string())?;
    let params = run.load_model().map_err(|e| e.to_string())?;
    let targets = g.splits().val_labeled.clone();
    let ex = run.extractor(&g, &params, &targets, Partition::Val).map_err(|e| e.to_string())?;
    let opts = FitOptions { lambda_grid: vec![0.0], ..run.cfg.fit_options() };
    let r = mse_experiment(&g, &targets, &ex, 10, 10, seed::derive(6, "c6", 0), &opts).map_err(|e| e.to_string())?;
    let detail = format!(
        "SGUL-Shapley MSE <= SGUL-Accuracy MSE in {}/10 batches (means {:.3e} vs {:.3e}, sign test p = {:.4})",
        r.shapley_wins, r.mse_shapley, r.mse_accuracy, r.sign_test_p
    );
    check(r.shapley_wins >= 9, detail.clone())?;
    within(t, Duration::from_secs(300), detail)
}

fn criterion_7() -> Outcome {
    let t = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = RunConfig::default();
    cfg.out_dir = dir.path().join("compare");
    cfg.compare.seeds = 10;
    cfg.compare.synth = true;
    cfg.eval.mse_batches = 0;
    let outcomes = pipeline::cmd_compare(&Run::new(cfg, false)).map_err(|e| e.to_string())?;
    let beats_random = outcomes
        .iter()
        .filter(|o| o.auc["sgul-shapley"] < o.auc["random"])
        .count();
    let noise_lower = outcomes
        .iter()
        .filter(|o| matches!((o.noise_mean, o.clean_mean), (Some(n), Some(c)) if n < c))
        .count();
    let detail = format!("AUC below random on {beats_random}/10 seeds; noise mean below clean mean on {noise_lower}/10 seeds");
    check(beats_random >= 9 && noise_lower >= 8, detail.clone())?;
    within(t, Duration::from_secs(600), detail)
}

fn criterion_8() -> Outcome {
    let mut runs = 0;
    for (i, inst) in instances(30, 12, usize::MAX, 8000).iter().enumerate() {
        let m = 1 + i % 7;
        let perms = sample_permutations(&inst.graph, &inst.targets, inst.k(), m, i as u64).map_err(|e| e.to_string())?;
        let sup = build_supervision(&inst.graph, &inst.targets, &inst.extractor, &perms).map_err(|e| e.to_string())?;
        let n = k_hop_neighborhood(&inst.graph, &inst.targets, inst.k()).len();
        let lens: Vec<usize> = perms.iter().map(|p| p.len()).collect();
        let (es, ea) = expected_rows(n, &lens);
        if (sup.shapley.len(), sup.accuracy.len()) != (es, ea) {
            return Err(format!(
                "instance {i}: rows ({}, {}) but closed form gives ({es}, {ea})",
                sup.shapley.len(),
                sup.accuracy.len()
            ));
        }
        if lens.iter().all(|&l| l >= 2) && sup.shapley.len() >= sup.accuracy.len() {
            return Err(format!("instance {i}: shapley rows {} not below accuracy rows {}", sup.shapley.len(), sup.accuracy.len()));
        }
        runs += 1;
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut run = synth_run(dir.path(), 8).map_err(|e| e.to_string())?;
    run.cfg.eval.mse_batches = 0;
    let out = pipeline::cmd_learn_utility(&run).map_err(|e| e.to_string())?;
    let cost: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.out("cost_report.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let rows = |k: &str| cost[k].as_u64().unwrap_or(u64::MAX) as usize;
    let ok = rows("rows_shapley") == rows("expected_rows_shapley")
        && rows("rows_accuracy") == rows("expected_rows_accuracy")
        && rows("rows_shapley") == out.supervision.shapley.len()
        && rows("rows_shapley") < rows("rows_accuracy");
    check(
        ok,
        format!(
            "{runs} random runs match the closed form; synthetic run rows {} vs {}",
            rows("rows_shapley"),
            rows("rows_accuracy")
        ),
    )
}

fn artifacts(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_owned()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).expect("readable dir") {
            let p = entry.expect("entry").path();
            if p.is_dir() {
                stack.push(p);
            } else if matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "json")) {
                out.insert(p.strip_prefix(root).expect("under root").to_owned(), fs::read(&p).expect("readable"));
            }
        }
    }
    out
}

const SMALL: &[&str] = &[
    "--set", "synth.n_train=60",
    "--set", "synth.n_val=30",
    "--set", "synth.n_test=30",
    "--set", "synth.p_in=0.15",
    "--set", "synth.n_targets=3",
    "--set", "model.epochs=60",
    "--set", "eval.mse_batches=3",
    "--set", "eval.mse_perms=4",
    "--set", "compare.seeds=2",
    "--set", "oracle.m=300",
];

fn run_stages(dir: &Path, workers: &str) -> Result<(), String> {
    let stages: &[(&str, &[&str])] = &[
        ("gen", &[]),
        ("train", &[]),
        ("learn-utility", &[]),
        ("value", &[]),
        ("drop-eval", &[]),
        ("oracle", &["--set", "model.k_hops=1"]),
        ("compare", &["--set", "out_dir=runs/compare"]),
    ];
    for (stage, extra) in stages {
        let out = Command::new(env!("CARGO_BIN_EXE_graphval"))
            .current_dir(dir)
            .arg(stage)
            .args(["--workers", workers])
            .args(SMALL)
            .args(*extra)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{stage} with {workers} workers failed: {}", String::from_utf8_lossy(&out.stderr)));
        }
    }
    Ok(())
}

fn criterion_9() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let c = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_stages(a.path(), "1")?;
    run_stages(b.path(), "4")?;
    run_stages(c.path(), "4")?;
    let (fa, fb, fc) = (artifacts(a.path()), artifacts(b.path()), artifacts(c.path()));
    let differing: Vec<String> = fa
        .keys()
        .chain(fb.keys())
        .filter(|k| fa.get(*k) != fb.get(*k) || fa.get(*k) != fc.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    check(
        differing.is_empty() && !fa.is_empty(),
        if differing.is_empty() {
            format!("{} CSV/JSON artifacts byte-identical across reruns with 1 and 4 workers", fa.len())
        } else {
            format!("differing artifacts: {}", differing.join(", "))
        },
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("oracle equivalence", criterion_1),
        ("decomposition exactness", criterion_2),
        ("efficiency", criterion_3),
        ("feature ranges", criterion_4),
        ("optimizer contracts", criterion_5),
        ("in-sample MSE direction", criterion_6),
        ("valuation quality direction", criterion_7),
        ("cost structure", criterion_8),
        ("determinism", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|a| a == &n.to_string()) {
            continue;
        }
        match f() {
            Ok(detail) => println!("criterion {n} ({name}): PASS: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
