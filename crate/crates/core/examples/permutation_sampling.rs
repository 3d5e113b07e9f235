//! Precedence-constrained permutations on a small graph: every order the
//! sampler can produce, its probability, and observed frequencies.

use std::collections::BTreeMap;

use graphval::graph::{Graph, NodeSet, Setting, Splits};
use graphval::perm::{enumerate_with_probabilities, sample_permutations};
use ndarray::Array2;

fn main() -> graphval::Result<()> {
    // target 0; neighbors 1 and 2 hang off it, 3 hangs off 1
    let g = Graph::new(Array2::zeros((4, 1)), &[(0, 1), (0, 2), (1, 3)], None, Splits::default())?
        .with_setting(Setting::Transductive);
    let targets = NodeSet::new([0]);

    let exact = enumerate_with_probabilities(&g, &targets, 2, None)?;
    let perms = sample_permutations(&g, &targets, 2, 20_000, 42)?;
    let mut seen: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for p in &perms {
        *seen.entry(p.order.clone()).or_default() += 1;
    }
    println!("{:<12} {:>8} {:>8}", "order", "p", "freq");
    for (perm, p) in &exact {
        let freq = seen.get(&perm.order).copied().unwrap_or(0) as f64 / perms.len() as f64;
        println!("{:<12} {:>8.4} {:>8.4}", format!("{:?}", perm.order), p, freq);
    }
    Ok(())
}
