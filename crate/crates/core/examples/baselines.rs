//! Label-free accuracy proxies calibrated on validation, evaluated on the
//! test targets with and without their neighbors, next to true accuracy.

use graphval::baselines::baseline_utility;
use graphval::config::RunConfig;
use graphval::graph::{induced_view, k_hop_neighborhood, Partition};
use graphval::model::{accuracy, forward};
use graphval::pipeline::{self, Run};

fn main() -> graphval::Result<()> {
    let dir = std::env::temp_dir().join("graphval-baselines");
    let mut cfg = RunConfig::default();
    cfg.data.dir = dir.join("data");
    cfg.out_dir = dir.join("run");
    cfg.eval.mse_batches = 0;
    let run = Run::new(cfg, true);
    pipeline::cmd_gen(&run)?;
    pipeline::cmd_train(&run)?;
    let cal = pipeline::cmd_learn_utility(&run)?.calibration;

    let g = run.load_graph()?;
    let params = run.load_model()?;
    let t = g.splits().test_targets.clone();
    let fixed = run.extractor(&g, &params, &t, Partition::Test)?.fixed;
    let empty = induced_view(&g, &t)?;
    let full = induced_view(&g, &t.union(&k_hop_neighborhood(&g, &t, params.k_hops())))?;

    println!("{:<12} {:>8} {:>8}", "", "alone", "with nbrs");
    let truth = |v| forward(&params, v).and_then(|p| accuracy(&p, &g, &t));
    println!("{:<12} {:>8.3} {:>8.3}", "accuracy", truth(&empty)?, truth(&full)?);
    for c in &cal.baselines {
        println!(
            "{:<12} {:>8.3} {:>8.3}",
            c.variant.name(),
            baseline_utility(c, &empty, &t, &params, &fixed)?,
            baseline_utility(c, &full, &t, &params, &fixed)?
        );
    }
    Ok(())
}
