//! The transductive setting: one graph, training with propagation, and
//! neighborhoods free to cross split boundaries.

use graphval::config::RunConfig;
use graphval::graph::{k_hop_neighborhood, Setting};
use graphval::pipeline::{self, Run};

fn main() -> graphval::Result<()> {
    let dir = std::env::temp_dir().join("graphval-transductive");
    let mut cfg = RunConfig::default();
    cfg.data.dir = dir.join("data");
    cfg.out_dir = dir.join("run");
    cfg.data.mode = Setting::Transductive;
    cfg.model.k_hops = 1;
    cfg.eval.mse_batches = 0;
    let run = Run::new(cfg, true);
    pipeline::cmd_gen(&run)?;

    let g = run.load_graph()?;
    let t = &g.splits().test_targets;
    println!("test neighborhood, k = 1: {} nodes", k_hop_neighborhood(&g, t, 1).len());

    pipeline::cmd_train(&run)?;
    pipeline::cmd_learn_utility(&run)?;
    pipeline::cmd_value(&run)?;
    for (m, c) in pipeline::cmd_drop_eval(&run)? {
        println!("{m:<14} {:.4}", c.auc);
    }
    Ok(())
}
