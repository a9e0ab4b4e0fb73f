//! Modularity baselines: Louvain and greedy (CNM-style) agglomeration.
//!
//! Modularity only sees undirected structure, so every method here works on
//! the symmetrized weights `w'(a, b) = w(a, b) + w(b, a)`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::infomap::{trial_rng, Objective, OptimizationResult};
use crate::mapeq::Partition;
use crate::network::FlowNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModularityScore {
    pub q: f64,
    pub resolution: f64,
}

/// Undirected weighted graph in adjacency form. `adj` excludes self-loops;
/// `loops[a]` is the diagonal entry of the symmetric weight matrix.
#[derive(Debug, Clone)]
struct SymGraph {
    adj: Vec<Vec<(usize, f64)>>,
    loops: Vec<f64>,
    strength: Vec<f64>,
    total: f64,
}

impl SymGraph {
    fn from_network(net: &FlowNetwork) -> Self {
        let n = net.node_count();
        let mut pair: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut loops = vec![0.0; n];
        for e in net.edges() {
            let w = e.weight as f64;
            if e.is_self_loop() {
                loops[e.source] += 2.0 * w;
            } else {
                let key = (e.source.min(e.target), e.source.max(e.target));
                *pair.entry(key).or_default() += w;
            }
        }
        let mut adj = vec![Vec::new(); n];
        for (&(a, b), &w) in &pair {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        Self::from_parts(adj, loops)
    }

    fn from_parts(adj: Vec<Vec<(usize, f64)>>, loops: Vec<f64>) -> Self {
        let strength: Vec<f64> = adj
            .iter()
            .zip(&loops)
            .map(|(nbrs, &l)| l + nbrs.iter().map(|&(_, w)| w).sum::<f64>())
            .collect();
        let total = strength.iter().sum();
        SymGraph {
            adj,
            loops,
            strength,
            total,
        }
    }

    fn node_count(&self) -> usize {
        self.loops.len()
    }

    /// Collapses communities (dense labels `0..k`) into nodes.
    fn aggregate(&self, labels: &[usize], k: usize) -> SymGraph {
        let mut loops = vec![0.0; k];
        let mut pair: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
        for a in 0..self.node_count() {
            let ca = labels[a];
            loops[ca] += self.loops[a];
            for &(b, w) in &self.adj[a] {
                let cb = labels[b];
                if ca == cb {
                    loops[ca] += w;
                } else {
                    *pair[ca].entry(cb).or_default() += w;
                }
            }
        }
        let adj = pair.into_iter().map(|m| m.into_iter().collect()).collect();
        SymGraph::from_parts(adj, loops)
    }
}

/// Newman modularity of `part` on the symmetrized network.
pub fn modularity(net: &FlowNetwork, part: &Partition, resolution: f64) -> Result<ModularityScore> {
    if part.len() != net.node_count() {
        return Err(Error::UniverseMismatch(net.node_count(), part.len()));
    }
    check_resolution(resolution)?;
    let g = SymGraph::from_network(net);
    if g.total == 0.0 {
        return Err(Error::EmptyNetwork);
    }
    let mut inside: BTreeMap<u32, f64> = BTreeMap::new();
    let mut degree: BTreeMap<u32, f64> = BTreeMap::new();
    for a in 0..g.node_count() {
        let Some(m) = part.module_of(a) else {
            if g.strength[a] > 0.0 {
                return Err(Error::UncoveredNode(a));
            }
            continue;
        };
        *degree.entry(m).or_default() += g.strength[a];
        let mut w_in = g.loops[a];
        for &(b, w) in &g.adj[a] {
            if part.module_of(b) == Some(m) {
                w_in += w;
            }
        }
        *inside.entry(m).or_default() += w_in;
    }
    let q = degree
        .iter()
        .map(|(m, &d)| {
            let e = inside.get(m).copied().unwrap_or(0.0) / g.total;
            let a = d / g.total;
            e - resolution * a * a
        })
        .sum();
    Ok(ModularityScore { q, resolution })
}

fn check_resolution(resolution: f64) -> Result<()> {
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(Error::InvalidArgument(format!("resolution {resolution} must be positive")));
    }
    Ok(())
}

/// One level of Louvain local moves. Returns dense community labels and
/// whether any node moved.
fn louvain_level(g: &SymGraph, resolution: f64, order: &[usize]) -> (Vec<usize>, bool) {
    let n = g.node_count();
    let m2 = g.total;
    let mut comm: Vec<usize> = (0..n).collect();
    let mut tot: Vec<f64> = g.strength.clone();
    let mut link = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut any_move = false;
    let eps = 1e-12 * m2;
    loop {
        let mut moves = 0;
        for &a in order {
            let ka = g.strength[a];
            if ka == 0.0 {
                continue;
            }
            let old = comm[a];
            for &(b, w) in &g.adj[a] {
                let c = comm[b];
                if link[c] == 0.0 {
                    touched.push(c);
                }
                link[c] += w;
            }
            tot[old] -= ka;
            let gain = |c: usize, l: f64| l - resolution * tot[c] * ka / m2;
            let mut best = old;
            let mut best_gain = gain(old, link[old]);
            touched.sort_unstable();
            touched.dedup();
            for &c in &touched {
                let gc = gain(c, link[c]);
                if gc > best_gain + eps {
                    best_gain = gc;
                    best = c;
                }
            }
            tot[best] += ka;
            comm[a] = best;
            for &c in &touched {
                link[c] = 0.0;
            }
            touched.clear();
            if best != old {
                moves += 1;
                any_move = true;
            }
        }
        if moves == 0 {
            break;
        }
    }
    let mut dense = vec![usize::MAX; n];
    let mut next = 0;
    let labels = comm
        .iter()
        .map(|&c| {
            if dense[c] == usize::MAX {
                dense[c] = next;
                next += 1;
            }
            dense[c]
        })
        .collect();
    (labels, any_move)
}

/// Two-phase Louvain on the symmetrized network. Node visiting order is
/// shuffled from `seed` at every level.
pub fn louvain(net: &FlowNetwork, seed: u64, resolution: f64) -> Result<OptimizationResult> {
    check_resolution(resolution)?;
    let n = net.node_count();
    if n == 0 {
        return Err(Error::EmptyNetwork);
    }
    let mut g = SymGraph::from_network(net);
    let mut membership: Vec<usize> = (0..n).collect();
    let mut trace = Vec::new();
    let mut levels = 0;
    if g.total > 0.0 {
        let mut rng = trial_rng(seed, 0);
        trace.push(modularity(net, &Partition::singletons(n), resolution)?.q);
        loop {
            let mut order: Vec<usize> = (0..g.node_count()).collect();
            order.shuffle(&mut rng);
            let (labels, moved) = louvain_level(&g, resolution, &order);
            if !moved {
                break;
            }
            levels += 1;
            let k = labels.iter().max().map_or(0, |m| m + 1);
            for m in membership.iter_mut() {
                *m = labels[*m];
            }
            trace.push(
                modularity(
                    net,
                    &Partition::new(membership.iter().map(|&m| Some(m as u32)).collect()),
                    resolution,
                )?
                .q,
            );
            if k == g.node_count() {
                break;
            }
            g = g.aggregate(&labels, k);
        }
    }
    let strength = SymGraph::from_network(net).strength;
    let partition = Partition::new(membership.iter().map(|&m| Some(m as u32)).collect())
        .relabeled_by_mass(&strength);
    let score = if g.total > 0.0 {
        modularity(net, &partition, resolution)?.q
    } else {
        0.0
    };
    Ok(OptimizationResult {
        partition,
        objective: Objective::Modularity,
        score,
        sweeps_run: levels,
        trial_scores: vec![score],
        trial_traces: vec![trace],
        seed_used: seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Merge {
    gain: f64,
    i: usize,
    j: usize,
    ver_i: u32,
    ver_j: u32,
}

impl Eq for Merge {}

impl Ord for Merge {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| other.i.cmp(&self.i))
            .then_with(|| other.j.cmp(&self.j))
    }
}

impl PartialOrd for Merge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Greedy agglomeration: repeatedly merges the connected pair of modules with
/// the largest modularity gain until no merge has positive gain. Ties go to
/// the lowest (i, j) pair.
pub fn greedy_modularity(net: &FlowNetwork) -> Result<OptimizationResult> {
    greedy_modularity_with(net, 1.0)
}

pub fn greedy_modularity_with(net: &FlowNetwork, resolution: f64) -> Result<OptimizationResult> {
    check_resolution(resolution)?;
    let n = net.node_count();
    let g = SymGraph::from_network(net);
    let mut membership: Vec<usize> = (0..n).collect();
    let mut merges = 0;
    let mut trace = Vec::new();
    if g.total > 0.0 {
        trace.push(modularity(net, &Partition::singletons(n), resolution)?.q);
        let w = g.total;
        let mut a: Vec<f64> = g.strength.iter().map(|s| s / w).collect();
        let mut e: Vec<BTreeMap<usize, f64>> = g
            .adj
            .iter()
            .map(|nbrs| nbrs.iter().map(|&(b, x)| (b, x / w)).collect())
            .collect();
        let mut version = vec![0u32; n];
        let mut alive = vec![true; n];
        let gain = |eij: f64, ai: f64, aj: f64| 2.0 * (eij - resolution * ai * aj);
        let mut heap = BinaryHeap::new();
        for i in 0..n {
            for (&j, &eij) in &e[i] {
                if i < j {
                    heap.push(Merge { gain: gain(eij, a[i], a[j]), i, j, ver_i: 0, ver_j: 0 });
                }
            }
        }
        let mut q = trace[0];
        while let Some(m) = heap.pop() {
            if !alive[m.i] || !alive[m.j] || version[m.i] != m.ver_i || version[m.j] != m.ver_j {
                continue;
            }
            if m.gain <= 0.0 {
                break;
            }
            let (i, j) = (m.i, m.j);
            let ej = std::mem::take(&mut e[j]);
            for (k, x) in ej {
                if k == i {
                    continue;
                }
                *e[i].entry(k).or_default() += x;
                let ek = &mut e[k];
                ek.remove(&j);
                *ek.entry(i).or_default() += x;
            }
            e[i].remove(&j);
            a[i] += a[j];
            a[j] = 0.0;
            alive[j] = false;
            version[i] += 1;
            for x in membership.iter_mut() {
                if *x == j {
                    *x = i;
                }
            }
            for (&k, &eik) in &e[i] {
                let (lo, hi) = (i.min(k), i.max(k));
                heap.push(Merge {
                    gain: gain(eik, a[i], a[k]),
                    i: lo,
                    j: hi,
                    ver_i: version[lo],
                    ver_j: version[hi],
                });
            }
            merges += 1;
            q += m.gain;
            trace.push(q);
        }
    }
    let partition = Partition::new(membership.iter().map(|&m| Some(m as u32)).collect())
        .relabeled_by_mass(&g.strength);
    let score = if g.total > 0.0 {
        modularity(net, &partition, resolution)?.q
    } else {
        0.0
    };
    Ok(OptimizationResult {
        partition,
        objective: Objective::Modularity,
        score,
        sweeps_run: merges,
        trial_scores: vec![score],
        trial_traces: vec![trace],
        seed_used: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clique_pair() -> FlowNetwork {
        let mut edges = Vec::new();
        for base in [0, 4] {
            for a in 0..4 {
                for b in 0..4 {
                    if a < b {
                        edges.push((base + a, base + b, 1));
                    }
                }
            }
        }
        FlowNetwork::from_index_edges(8, edges).unwrap()
    }

    #[test]
    fn two_disjoint_edges() {
        let net = FlowNetwork::from_index_edges(4, [(0, 1, 1), (2, 3, 1)]).unwrap();
        let q = modularity(&net, &Partition::from_labels(&[0, 0, 1, 1]), 1.0).unwrap().q;
        assert!((q - 0.5).abs() < 1e-12);
        let one = modularity(&net, &Partition::single_module(4), 1.0).unwrap().q;
        assert!(one.abs() < 1e-12);
    }

    #[test]
    fn empty_network_rejected() {
        let net = FlowNetwork::from_index_edges(2, []).unwrap();
        assert!(matches!(
            modularity(&net, &Partition::singletons(2), 1.0),
            Err(Error::EmptyNetwork)
        ));
    }

    #[test]
    fn louvain_splits_cliques() {
        let r = louvain(&clique_pair(), 7, 1.0).unwrap();
        assert_eq!(r.partition.module_count(), 2);
        assert!((r.score - 0.5).abs() < 1e-10);
    }

    #[test]
    fn louvain_merges_single_edge() {
        let net = FlowNetwork::from_index_edges(2, [(0, 1, 1)]).unwrap();
        let singles = modularity(&net, &Partition::singletons(2), 1.0).unwrap().q;
        assert!((singles + 0.5).abs() < 1e-12);
        let r = louvain(&net, 0, 1.0).unwrap();
        assert_eq!(r.partition.module_count(), 1);
        assert!(r.score.abs() < 1e-12);
    }

    #[test]
    fn greedy_cases() {
        assert_eq!(greedy_modularity(&clique_pair()).unwrap().partition.module_count(), 2);
        let star = FlowNetwork::from_index_edges(4, [(0, 1, 1), (0, 2, 1), (0, 3, 1)]).unwrap();
        assert_eq!(greedy_modularity(&star).unwrap().partition.module_count(), 1);
        let empty = FlowNetwork::from_index_edges(3, []).unwrap();
        let r = greedy_modularity(&empty).unwrap();
        assert_eq!(r.partition, Partition::singletons(3));
    }

    #[test]
    fn directed_edges_are_symmetrized() {
        let one_way = FlowNetwork::from_index_edges(4, [(0, 1, 2), (2, 3, 2), (1, 2, 1)]).unwrap();
        let both = FlowNetwork::from_index_edges(4, [(0, 1, 1), (1, 0, 1), (2, 3, 2), (2, 1, 1)])
            .unwrap();
        let p = Partition::from_labels(&[0, 0, 1, 1]);
        let a = modularity(&one_way, &p, 1.0).unwrap().q;
        let b = modularity(&both, &p, 1.0).unwrap().q;
        assert!((a - b).abs() < 1e-12);
    }
}
