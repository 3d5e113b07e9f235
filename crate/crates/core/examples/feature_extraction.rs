//! The nine transferable features along one permutation of a validation
//! target's neighborhood, written as CSV to stdout.

use graphval::features::{compute_train_stats, write_feature_csv, FeatureConfig, FeatureExtractor, FeatureSet, FixedLabels};
use graphval::graph::{induced_view, NodeSet, Partition};
use graphval::model::{train_mlp, TrainConfig};
use graphval::perm::sample_permutations;
use graphval::synth::{generate, SynthConfig};

fn main() -> graphval::Result<()> {
    let g = generate(&SynthConfig::default())?.graph;
    let (params, _) = train_mlp(&g, &TrainConfig::default())?;
    let target = g.splits().val_labeled.iter().next().expect("validation targets");
    let targets = NodeSet::new([target]);
    let ex = FeatureExtractor::new(
        params.clone(),
        compute_train_stats(&g, &params)?,
        FixedLabels::compute(&g, &params, &targets, Partition::Val)?,
        FeatureConfig::default(),
    );

    let perm = &sample_permutations(&g, &targets, params.k_hops(), 1, 7)?[0];
    let mut rows = Vec::new();
    for len in (0..=perm.len()).step_by(5) {
        let active = targets.union(&NodeSet::new(perm.order[..len].iter().copied()));
        rows.push((len.to_string(), ex.extract(&induced_view(&g, &active)?, &targets)?));
    }
    write_feature_csv(std::io::stdout(), "prefix_len", &FeatureSet::all(), rows)?;
    Ok(())
}
