//! End-to-end run on a synthetic planted graph: generate, train, learn the
//! utility, value test neighbors and score the rankings by node dropping.
//!
//!     cargo run --example quickstart

use graphval::config::RunConfig;
use graphval::pipeline::{self, Run};

fn main() -> graphval::Result<()> {
    let dir = std::env::temp_dir().join("graphval-quickstart");
    let mut cfg = RunConfig::default();
    cfg.data.dir = dir.join("data");
    cfg.out_dir = dir.join("run");
    let run = Run::new(cfg, true);

    pipeline::cmd_gen(&run)?;
    pipeline::cmd_train(&run)?;
    let learned = pipeline::cmd_learn_utility(&run)?;
    if let Some(w) = &learned.shapley {
        println!("learned utility: {}", w.describe());
    }
    pipeline::cmd_value(&run)?;
    println!("node-dropping AUC (lower is better):");
    for (method, curve) in pipeline::cmd_drop_eval(&run)? {
        println!("  {method:<14} {:.4}", curve.auc);
    }
    println!("artifacts in {}", run.cfg.out_dir.display());
    Ok(())
}
