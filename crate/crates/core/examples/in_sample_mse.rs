//! Repeated-batch comparison of the two fitting objectives by how well
//! each reproduces the validation Shapley values in sample.

use graphval::features::{compute_train_stats, FeatureConfig, FeatureExtractor, FixedLabels};
use graphval::eval::mse_experiment;
use graphval::fit::FitOptions;
use graphval::graph::Partition;
use graphval::model::{train_mlp, TrainConfig};
use graphval::synth::{generate, SynthConfig};

fn main() -> graphval::Result<()> {
    let g = generate(&SynthConfig::default())?.graph;
    let (params, _) = train_mlp(&g, &TrainConfig::default())?;
    let targets = g.splits().val_labeled.clone();
    let ex = FeatureExtractor::new(
        params.clone(),
        compute_train_stats(&g, &params)?,
        FixedLabels::compute(&g, &params, &targets, Partition::Val)?,
        FeatureConfig::default(),
    );
    let opts = FitOptions {
        lambda_grid: vec![0.0],
        ..FitOptions::default()
    };
    let r = mse_experiment(&g, &targets, &ex, 10, 10, 0, &opts)?;
    println!("{:>5} {:>12} {:>12}", "batch", "shapley-fit", "accuracy-fit");
    for (b, (s, a)) in r.per_batch.iter().enumerate() {
        println!("{b:>5} {s:>12.3e} {a:>12.3e}");
    }
    println!("shapley fit no worse in {}/10 batches, sign test p = {:.4}", r.shapley_wins, r.sign_test_p);
    Ok(())
}
