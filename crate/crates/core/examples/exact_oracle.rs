//! Exact structure-aware Shapley values by enumeration next to the Monte
//! Carlo estimate, for target accuracy on a small random instance.

use graphval::fixtures::random_instance;
use graphval::graph::{k_hop_neighborhood, NodeSet, SubgraphView};
use graphval::model::{accuracy, forward};
use graphval::perm::sample_permutations;
use graphval::valuation::{exact_shapley, scalar_marginal_stats, Weighting};

fn main() -> graphval::Result<()> {
    let inst = (0..)
        .map(|s| random_instance(s, 7))
        .find(|i| k_hop_neighborhood(&i.graph, &i.targets, i.k()).len() >= 4)
        .expect("a seed with four players");
    let (g, t, k) = (&inst.graph, &inst.targets, inst.k());
    let u = |view: &SubgraphView<'_>, t: &NodeSet| {
        forward(&inst.extractor.params, view)
            .and_then(|p| accuracy(&p, g, t))
            .unwrap_or(f64::NAN)
    };

    let uniform = exact_shapley(g, t, k, Weighting::Uniform, &u)?;
    let sampler = exact_shapley(g, t, k, Weighting::Sampler, &u)?;
    let perms = sample_permutations(g, t, k, 5000, 1)?;
    let mc = scalar_marginal_stats(g, t, &perms, &u)?;

    println!("targets {:?}, k = {k}", t.as_slice());
    println!("{:>5} {:>10} {:>10} {:>10} {:>8}", "node", "uniform", "sampler", "mc", "se");
    for (v, s) in &mc {
        println!(
            "{v:>5} {:>10.4} {:>10.4} {:>10.4} {:>8.4}",
            uniform[v], sampler[v], s.mean()[0], s.std_err()[0]
        );
    }
    Ok(())
}
