//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use bikeflow::flow::{empirical_flow, random_walk_flow};
use bikeflow::{FlowNetwork, FlowState, Partition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// All set partitions of `0..n` as restricted growth strings.
pub fn set_partitions(n: usize) -> Vec<Vec<u32>> {
    fn rec(i: usize, n: usize, max: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for l in 0..=max {
            cur.push(l);
            rec(i + 1, n, if l == max { max + 1 } else { max }, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        out.push(Vec::new());
    } else {
        rec(0, n, 0, &mut Vec::new(), &mut out);
    }
    out
}

fn entropy_bits(weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| {
            let p = w / total;
            -p * p.log2()
        })
        .sum()
}

/// Two-level codelength `q H(Q) + sum_i p_i H(P_i)` evaluated from a dense
/// node-to-node flow matrix. Teleported flow is spread uniformly over all
/// nodes, the walker's own node included.
pub fn reference_codelength(flow: &FlowState, part: &Partition) -> f64 {
    let n = flow.node_count();
    let mut f = vec![vec![0.0; n]; n];
    for (&(s, t), &w) in flow.links().iter().zip(flow.edge_flow()) {
        f[s][t] += w;
    }
    for (a, &tp) in flow.teleport().iter().enumerate() {
        for row in f[a].iter_mut() {
            *row += tp / n as f64;
        }
    }
    let visit = flow.node_visit();
    let ids: Vec<u32> = part.module_ids().into_iter().collect();
    let mut exits = Vec::new();
    let mut codebooks = Vec::new();
    for &m in &ids {
        let inside = |a: usize| part.module_of(a) == Some(m);
        let mut q = 0.0;
        for a in (0..n).filter(|&a| inside(a)) {
            for b in (0..n).filter(|&b| !inside(b)) {
                q += f[a][b];
            }
        }
        let mut book = vec![q];
        book.extend((0..n).filter(|&a| inside(a)).map(|a| visit[a]));
        exits.push(q);
        codebooks.push(book);
    }
    let q: f64 = exits.iter().sum();
    let index = q * entropy_bits(&exits);
    let modules: f64 = codebooks
        .iter()
        .map(|b| b.iter().sum::<f64>() * entropy_bits(b))
        .sum();
    index + modules
}

/// Brute-force minimum over all partitions of the positive-flow nodes;
/// zero-flow nodes stay unassigned.
pub fn brute_force_min(flow: &FlowState) -> (f64, Partition) {
    let n = flow.node_count();
    let active: Vec<usize> = (0..n).filter(|&a| flow.node_visit()[a] > 0.0).collect();
    let mut best = (f64::INFINITY, Partition::unassigned(n));
    for labels in set_partitions(active.len()) {
        let mut assignment = vec![None; n];
        for (&a, &l) in active.iter().zip(&labels) {
            assignment[a] = Some(l);
        }
        let p = Partition::new(assignment);
        let l = reference_codelength(flow, &p);
        if l < best.0 {
            best = (l, p);
        }
    }
    best
}

/// Dense Gaussian elimination for `A x = b`.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Stationary distribution of the plain random walk (no teleportation) by
/// solving `p (P - I) = 0` with `sum p = 1`.
pub fn stationary_by_solve(net: &FlowNetwork) -> Vec<f64> {
    let n = net.node_count();
    let out = net.out_strengths();
    let mut a = vec![vec![0.0; n]; n];
    for e in net.edges() {
        a[e.target][e.source] += e.weight as f64 / out[e.source] as f64;
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] -= 1.0;
    }
    let mut b = vec![0.0; n];
    a[n - 1] = vec![1.0; n];
    b[n - 1] = 1.0;
    dense_solve(a, b)
}

pub fn random_digraph(n: usize, density: f64, max_w: u64, seed: u64) -> FlowNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && rng.random_bool(density) {
                edges.push((a, b, rng.random_range(1..=max_w)));
            }
        }
    }
    FlowNetwork::from_index_edges(n, edges).unwrap()
}

/// Strongly connected random digraph: a directed ring plus random chords.
pub fn random_strong_digraph(n: usize, density: f64, max_w: u64, seed: u64) -> FlowNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize, u64)> = (0..n).map(|a| (a, (a + 1) % n, 1)).collect();
    for a in 0..n {
        for b in 0..n {
            if a != b && rng.random_bool(density) {
                edges.push((a, b, rng.random_range(1..=max_w)));
            }
        }
    }
    FlowNetwork::from_index_edges(n, edges).unwrap()
}

/// Two dense directed groups joined by one weak link each way.
pub fn two_groups(k: usize) -> FlowNetwork {
    let mut edges = Vec::new();
    for g in 0..2 {
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    edges.push((g * k + a, g * k + b, 3));
                }
            }
        }
    }
    edges.push((0, k, 1));
    edges.push((k, 0, 1));
    FlowNetwork::from_index_edges(2 * k, edges).unwrap()
}

/// Named small graphs (n <= 8) with their flow states, covering both flow
/// models, dangling nodes, sinks and self-loops.
pub fn small_fixtures() -> Vec<(String, FlowNetwork, FlowState)> {
    let mut nets: Vec<(String, FlowNetwork)> = vec![
        (
            "two-cycle".into(),
            FlowNetwork::from_index_edges(2, [(0, 1, 1), (1, 0, 1)]).unwrap(),
        ),
        (
            "two-two-cycles".into(),
            FlowNetwork::from_index_edges(4, [(0, 1, 1), (1, 0, 1), (2, 3, 1), (3, 2, 1)]).unwrap(),
        ),
        (
            "hub".into(),
            FlowNetwork::from_index_edges(3, [(0, 1, 1), (0, 2, 1), (1, 0, 1), (2, 0, 1)]).unwrap(),
        ),
        (
            "self-loops".into(),
            FlowNetwork::from_index_edges(
                5,
                [(0, 0, 4), (0, 1, 2), (1, 0, 2), (1, 2, 1), (2, 3, 3), (3, 2, 3), (3, 4, 1), (4, 4, 2), (4, 3, 1)],
            )
            .unwrap(),
        ),
        ("two-groups-4".into(), two_groups(4)),
        (
            "dangling".into(),
            FlowNetwork::from_index_edges(4, [(0, 1, 2), (1, 0, 1), (1, 2, 1), (2, 3, 1)]).unwrap(),
        ),
    ];
    for (i, n) in [5usize, 6, 7, 8, 8, 8].into_iter().enumerate() {
        nets.push((format!("random-{n}-{i}"), random_digraph(n, 0.35, 5, 100 + i as u64)));
    }
    let mut complete = Vec::new();
    for a in 0..4 {
        for b in 0..4 {
            if a != b {
                complete.push((a, b, 1));
            }
        }
    }
    nets.push(("complete-4".into(), FlowNetwork::from_index_edges(4, complete).unwrap()));

    let mut out = Vec::new();
    for (name, net) in nets {
        out.push((format!("{name}/empirical"), net.clone(), empirical_flow(&net).unwrap()));
        out.push((
            format!("{name}/random-walk"),
            net.clone(),
            random_walk_flow(&net, 0.15, 1e-13, 100_000).unwrap(),
        ));
    }
    out
}
