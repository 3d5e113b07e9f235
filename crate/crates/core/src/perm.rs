//! Precedence-constrained permutations of a target set's k-hop neighbors.
//!
//! A node may enter an ordering only once it has a graph neighbor among the
//! targets or the nodes already placed. The sampler grows an active frontier
//! from the targets and draws uniformly from it; the enumerator lists every
//! permissible order for exact (oracle) averages.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{k_hop_neighborhood, Graph, NodeSet};
use crate::seed;

/// Largest player count accepted by exhaustive enumeration without a cap.
pub const MAX_ENUMERATION_PLAYERS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    pub order: Vec<usize>,
    pub targets: NodeSet,
    pub hop_bound: usize,
}

impl Permutation {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Players of the game (the k-hop neighborhood) with local indexing.
struct Players<'g> {
    graph: &'g Graph,
    targets: NodeSet,
    nodes: NodeSet,
    index: HashMap<usize, usize>,
    k: usize,
}

impl<'g> Players<'g> {
    fn new(graph: &'g Graph, targets: &NodeSet, k: usize) -> Self {
        let nodes = k_hop_neighborhood(graph, targets, k);
        let index = nodes.iter().enumerate().map(|(i, v)| (v, i)).collect();
        Players {
            graph,
            targets: targets.clone(),
            nodes,
            index,
            k,
        }
    }

    fn initial_frontier(&self) -> Vec<usize> {
        let mut seen = vec![false; self.nodes.len()];
        let mut frontier = Vec::new();
        for t in self.targets.iter() {
            for &u in self.graph.neighbors(t) {
                if let Some(&i) = self.index.get(&u) {
                    if !seen[i] {
                        seen[i] = true;
                        frontier.push(u);
                    }
                }
            }
        }
        frontier
    }

    fn sample(&self, seed: u64) -> Permutation {
        let mut rng = seed::rng(seed);
        let n = self.nodes.len();
        let mut visited = vec![false; n];
        let mut in_active = vec![false; n];
        let mut active = self.initial_frontier();
        for &v in &active {
            in_active[self.index[&v]] = true;
        }
        let mut order = Vec::with_capacity(n);
        while !active.is_empty() {
            let v = active.swap_remove(rng.random_range(0..active.len()));
            let vi = self.index[&v];
            in_active[vi] = false;
            visited[vi] = true;
            order.push(v);
            for &u in self.graph.neighbors(v) {
                if let Some(&ui) = self.index.get(&u) {
                    if !visited[ui] && !in_active[ui] {
                        in_active[ui] = true;
                        active.push(u);
                    }
                }
            }
        }
        Permutation {
            order,
            targets: self.targets.clone(),
            hop_bound: self.k,
        }
    }

    /// Depth-first walk over all permissible orders in lexicographic order,
    /// carrying each order's probability under the frontier sampler.
    fn enumerate(&self, cap: usize) -> Result<Vec<(Permutation, f64)>> {
        let n = self.nodes.len();
        let mut out = Vec::new();
        let mut order = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        self.descend(&mut order, &mut placed, 1.0, cap, &mut out)?;
        Ok(out)
    }

    fn candidates(&self, placed: &[bool]) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|&(i, v)| {
                !placed[i]
                    && self.graph.neighbors(v).iter().any(|&u| {
                        self.targets.contains(u) || self.index.get(&u).is_some_and(|&j| placed[j])
                    })
            })
            .map(|(i, _)| i)
            .collect()
    }

    fn descend(
        &self,
        order: &mut Vec<usize>,
        placed: &mut [bool],
        prob: f64,
        cap: usize,
        out: &mut Vec<(Permutation, f64)>,
    ) -> Result<()> {
        let cands = self.candidates(placed);
        if cands.is_empty() {
            if out.len() == cap {
                return Err(Error::CapExceeded { cap });
            }
            out.push((
                Permutation {
                    order: order.clone(),
                    targets: self.targets.clone(),
                    hop_bound: self.k,
                },
                prob,
            ));
            return Ok(());
        }
        let p = prob / cands.len() as f64;
        for i in cands {
            placed[i] = true;
            order.push(self.nodes.as_slice()[i]);
            self.descend(order, placed, p, cap, out)?;
            order.pop();
            placed[i] = false;
        }
        Ok(())
    }
}

/// Draws one full-length permissible order of the k-hop neighborhood.
pub fn sample_permutation(g: &Graph, targets: &NodeSet, k: usize, seed: u64) -> Result<Permutation> {
    let players = Players::new(g, targets, k);
    if players.nodes.is_empty() {
        return Err(Error::NoPlayers);
    }
    Ok(players.sample(seed))
}

/// Draws `m` orders; order `i` uses `seed::derive(master_seed, "perm", i)`,
/// so the result is independent of thread count.
pub fn sample_permutations(
    g: &Graph,
    targets: &NodeSet,
    k: usize,
    m: usize,
    master_seed: u64,
) -> Result<Vec<Permutation>> {
    let players = Players::new(g, targets, k);
    if players.nodes.is_empty() {
        return Err(Error::NoPlayers);
    }
    Ok((0..m as u64)
        .into_par_iter()
        .map(|i| players.sample(seed::derive(master_seed, "perm", i)))
        .collect())
}

/// Every permissible full-length order, lexicographically sorted.
///
/// Without a cap the neighborhood may hold at most
/// [`MAX_ENUMERATION_PLAYERS`] nodes; with a cap, producing more than `cap`
/// orders is an error.
pub fn enumerate_permutations(
    g: &Graph,
    targets: &NodeSet,
    k: usize,
    cap: Option<usize>,
) -> Result<Vec<Permutation>> {
    Ok(enumerate_with_probabilities(g, targets, k, cap)?
        .into_iter()
        .map(|(p, _)| p)
        .collect())
}

/// Like [`enumerate_permutations`], paired with the probability that
/// [`sample_permutation`] returns each order. The probabilities sum to one
/// and are uniform only when every step offers the same number of choices
/// in every branch (stars, chains).
pub fn enumerate_with_probabilities(
    g: &Graph,
    targets: &NodeSet,
    k: usize,
    cap: Option<usize>,
) -> Result<Vec<(Permutation, f64)>> {
    let players = Players::new(g, targets, k);
    let cap = match cap {
        Some(c) => c,
        None => {
            if players.nodes.len() > MAX_ENUMERATION_PLAYERS {
                return Err(Error::TooManyPlayers {
                    n: players.nodes.len(),
                    max: MAX_ENUMERATION_PLAYERS,
                });
            }
            usize::MAX
        }
    };
    players.enumerate(cap)
}

/// Whether every element, when placed, is a fresh k-hop neighbor with a
/// graph neighbor among the targets or earlier elements.
pub fn validate(g: &Graph, p: &Permutation) -> bool {
    let players = k_hop_neighborhood(g, &p.targets, p.hop_bound);
    let mut placed: Vec<usize> = Vec::with_capacity(p.order.len());
    for &v in &p.order {
        if !players.contains(v) || placed.contains(&v) {
            return false;
        }
        let linked = g
            .neighbors(v)
            .iter()
            .any(|&u| p.targets.contains(u) || placed.contains(&u));
        if !linked {
            return false;
        }
        placed.push(v);
    }
    true
}

/// Cached permutation list (`perms.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermsFile {
    pub master_seed: u64,
    pub k: usize,
    pub targets: Vec<usize>,
    pub perms: Vec<Vec<usize>>,
}

impl PermsFile {
    pub fn new(perms: &[Permutation], master_seed: u64) -> Result<Self> {
        let first = perms.first().ok_or(Error::NoPlayers)?;
        Ok(PermsFile {
            master_seed,
            k: first.hop_bound,
            targets: first.targets.as_slice().to_vec(),
            perms: perms.iter().map(|p| p.order.clone()).collect(),
        })
    }

    pub fn permutations(&self) -> Vec<Permutation> {
        let targets = NodeSet::new(self.targets.iter().copied());
        self.perms
            .iter()
            .map(|o| Permutation {
                order: o.clone(),
                targets: targets.clone(),
                hop_bound: self.k,
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).expect("perms serialize");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Setting, Splits};
    use ndarray::Array2;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn g(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::new(Array2::zeros((n, 1)), edges, None, Splits::default())
            .unwrap()
            .with_setting(Setting::Transductive)
    }

    fn orders(ps: &[Permutation]) -> Vec<Vec<usize>> {
        ps.iter().map(|p| p.order.clone()).collect()
    }

    #[test]
    fn star_sampling_is_balanced() {
        // t=0 with leaves 1, 2
        let graph = g(3, &[(0, 1), (0, 2)]);
        let t = NodeSet::new([0]);
        let perms = sample_permutations(&graph, &t, 1, 10_000, 3).unwrap();
        let first_a = perms.iter().filter(|p| p.order == vec![1, 2]).count();
        let frac = first_a as f64 / perms.len() as f64;
        assert!((frac - 0.5).abs() <= 0.02, "{frac}");
        assert!(perms.iter().all(|p| p.order == vec![1, 2] || p.order == vec![2, 1]));
    }

    #[test]
    fn path_orders_are_forced() {
        let graph = g(3, &[(0, 1), (1, 2)]);
        let t = NodeSet::new([0]);
        for s in 0..20 {
            assert_eq!(sample_permutation(&graph, &t, 2, s).unwrap().order, vec![1, 2]);
            assert_eq!(sample_permutation(&graph, &t, 1, s).unwrap().order, vec![1]);
        }
        assert_eq!(orders(&enumerate_permutations(&graph, &t, 2, None).unwrap()), vec![vec![1, 2]]);
    }

    #[test]
    fn empty_neighborhood_has_no_players() {
        let graph = g(2, &[]);
        assert!(matches!(
            sample_permutation(&graph, &NodeSet::new([0]), 2, 0),
            Err(Error::NoPlayers)
        ));
    }

    #[test]
    fn enumeration_counts() {
        let star = g(4, &[(0, 1), (0, 2), (0, 3)]);
        assert_eq!(enumerate_permutations(&star, &NodeSet::new([0]), 1, None).unwrap().len(), 6);

        let chain = g(4, &[(0, 1), (1, 2), (2, 3)]);
        let ps = enumerate_permutations(&chain, &NodeSet::new([0]), 3, None).unwrap();
        assert_eq!(orders(&ps), vec![vec![1, 2, 3]]);

        // t=0, a=1, b=2, c=3: t-a, t-b, a-c
        let fork = g(4, &[(0, 1), (0, 2), (1, 3)]);
        let ps = enumerate_permutations(&fork, &NodeSet::new([0]), 2, None).unwrap();
        assert_eq!(orders(&ps), vec![vec![1, 2, 3], vec![1, 3, 2], vec![2, 1, 3]]);
    }

    #[test]
    fn enumeration_cap_and_size_limit() {
        let star = g(4, &[(0, 1), (0, 2), (0, 3)]);
        let t = NodeSet::new([0]);
        assert!(matches!(
            enumerate_permutations(&star, &t, 1, Some(5)),
            Err(Error::CapExceeded { cap: 5 })
        ));
        assert_eq!(enumerate_permutations(&star, &t, 1, Some(6)).unwrap().len(), 6);
        let edges: Vec<_> = (1..10).map(|i| (0, i)).collect();
        let big = g(10, &edges);
        assert!(matches!(
            enumerate_permutations(&big, &t, 1, None),
            Err(Error::TooManyPlayers { n: 9, .. })
        ));
    }

    #[test]
    fn sampler_probabilities_match_frequencies() {
        // fork: (1,2,3) and (1,3,2) each 1/4, (2,1,3) 1/2 under the frontier process
        let fork = g(4, &[(0, 1), (0, 2), (1, 3)]);
        let t = NodeSet::new([0]);
        let exact = enumerate_with_probabilities(&fork, &t, 2, None).unwrap();
        let probs: Vec<f64> = exact.iter().map(|(_, p)| *p).collect();
        assert_eq!(probs, vec![0.25, 0.25, 0.5]);
        let perms = sample_permutations(&fork, &t, 2, 20_000, 9).unwrap();
        let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for p in &perms {
            *counts.entry(p.order.clone()).or_default() += 1;
        }
        for (p, prob) in &exact {
            let f = counts[&p.order] as f64 / perms.len() as f64;
            let se = (prob * (1.0 - prob) / perms.len() as f64).sqrt();
            assert!((f - prob).abs() < 5.0 * se, "{:?}: {f} vs {prob}", p.order);
        }
    }

    #[test]
    fn validate_examples() {
        let graph = g(3, &[(0, 1), (1, 2)]);
        let t = NodeSet::new([0]);
        let mk = |order: Vec<usize>| Permutation {
            order,
            targets: t.clone(),
            hop_bound: 2,
        };
        assert!(validate(&graph, &mk(vec![1, 2])));
        assert!(!validate(&graph, &mk(vec![2, 1])));
        assert!(!validate(&graph, &mk(vec![1, 1])));
        let iso = g(1, &[]);
        assert!(validate(
            &iso,
            &Permutation {
                order: vec![],
                targets: NodeSet::new([0]),
                hop_bound: 1
            }
        ));
    }

    #[test]
    fn sampling_is_deterministic_across_pools() {
        let graph = g(6, &[(0, 1), (0, 2), (1, 3), (2, 4), (3, 5), (4, 5)]);
        let t = NodeSet::new([0]);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| sample_permutations(&graph, &t, 3, 64, 5).unwrap());
        let b = four.install(|| sample_permutations(&graph, &t, 3, 64, 5).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn perms_file_roundtrip() {
        let graph = g(3, &[(0, 1), (0, 2)]);
        let t = NodeSet::new([0]);
        let perms = sample_permutations(&graph, &t, 1, 4, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("perms.json");
        PermsFile::new(&perms, 1).unwrap().save(&path).unwrap();
        assert_eq!(PermsFile::load(&path).unwrap().permutations(), perms);
    }

    fn random_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (3usize..8).prop_flat_map(|n| {
            let pairs = proptest::collection::vec((0..n, 0..n), 0..(2 * n));
            (Just(n), pairs)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sampled_orders_are_valid_and_in_support((n, edges) in random_graph(), k in 1usize..4, s in 0u64..1000) {
            let graph = g(n, &edges);
            let t = NodeSet::new([0]);
            let players = k_hop_neighborhood(&graph, &t, k);
            prop_assume!(!players.is_empty() && players.len() <= 6);
            let support = orders(&enumerate_permutations(&graph, &t, k, None).unwrap());
            prop_assume!(support.len() <= 40);
            let samples = 10 * support.len() * support.len();
            let perms = sample_permutations(&graph, &t, k, samples.max(20), s).unwrap();
            let mut seen = vec![false; support.len()];
            for p in &perms {
                prop_assert!(validate(&graph, p));
                prop_assert_eq!(p.len(), players.len());
                let pos = support.binary_search(&p.order);
                prop_assert!(pos.is_ok());
                seen[pos.unwrap()] = true;
            }
            prop_assert!(seen.iter().all(|&x| x));
            let total: f64 = enumerate_with_probabilities(&graph, &t, k, None).unwrap().iter().map(|x| x.1).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
