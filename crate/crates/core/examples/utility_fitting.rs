//! Fit the utility weights both ways on validation supervision and compare
//! them: regression on Shapley values versus on prefix accuracy.

use graphval::features::{compute_train_stats, FeatureConfig, FeatureExtractor, FixedLabels};
use graphval::fit::{build_supervision, fit_sgul_accuracy, fit_sgul_shapley, FitOptions};
use graphval::graph::Partition;
use graphval::model::{train_mlp, TrainConfig};
use graphval::perm::sample_permutations;
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
    let perms = sample_permutations(&g, &targets, params.k_hops(), 50, 0)?;
    let sup = build_supervision(&g, &targets, &ex, &perms)?;
    println!("{} Shapley rows, {} accuracy rows", sup.shapley.len(), sup.accuracy.len());

    let opts = FitOptions::default();
    for out in [fit_sgul_shapley(&sup, &opts)?, fit_sgul_accuracy(&sup, &opts)?] {
        println!("\n{}", out.weights.describe());
        for row in &out.cv {
            println!("  lambda {:>8.0e}  cv mse {:.3e}", row.lambda, row.mse);
        }
    }
    Ok(())
}
