//! Value the test neighbors with a learned utility, then drop them in value
//! order and watch target accuracy; a random order is shown for contrast.

use graphval::config::{Method, RunConfig};
use graphval::eval::node_dropping;
use graphval::pipeline::{self, Run};

fn main() -> graphval::Result<()> {
    let dir = std::env::temp_dir().join("graphval-dropping");
    let mut cfg = RunConfig::default();
    cfg.data.dir = dir.join("data");
    cfg.out_dir = dir.join("run");
    cfg.eval.mse_batches = 0;
    let run = Run::new(cfg, true);
    pipeline::cmd_gen(&run)?;
    pipeline::cmd_train(&run)?;
    pipeline::cmd_learn_utility(&run)?;

    let g = run.load_graph()?;
    let params = run.load_model()?;
    let methods = [Method::SgulShapley, Method::Random];
    let reports = pipeline::compute_test_values(&run, &g, &params, &methods)?;
    for m in methods {
        let curve = node_dropping(&g, &g.splits().test_targets, &reports[&m], &params)?;
        let points: Vec<String> = curve.acc.iter().step_by(4).map(|a| format!("{a:.2}")).collect();
        println!("{:<13} auc {:.4}  acc every 4 drops: {}", m.to_string(), curve.auc, points.join(" "));
    }
    Ok(())
}
