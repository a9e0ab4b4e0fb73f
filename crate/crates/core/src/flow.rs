//! Node visit rates and edge flow rates.
//!
//! Two flow models are supported. The empirical model normalizes observed
//! trip counts directly. The random-walk model solves for the stationary
//! distribution of a walker that teleports uniformly with probability `tau`
//! and otherwise follows out-edges in proportion to their weight; nodes with
//! no out-weight always teleport.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::FlowNetwork;
use crate::output::fmt_sig;

pub const DEFAULT_TAU: f64 = 0.15;
pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FlowModel {
    #[default]
    Empirical,
    RandomWalk,
}

impl fmt::Display for FlowModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlowModel::Empirical => "empirical",
            FlowModel::RandomWalk => "random-walk",
        })
    }
}

impl FromStr for FlowModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(FlowModel::Empirical),
            "random-walk" | "random_walk" => Ok(FlowModel::RandomWalk),
            other => Err(Error::InvalidArgument(format!("unknown flow model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    pub model: FlowModel,
    pub tau: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Whether self-loops take part in the random-walk transition matrix.
    pub self_loops: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            model: FlowModel::Empirical,
            tau: DEFAULT_TAU,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            self_loops: true,
        }
    }
}

impl FlowOptions {
    pub fn solve(&self, net: &FlowNetwork) -> Result<FlowState> {
        match self.model {
            FlowModel::Empirical => empirical_flow(net),
            FlowModel::RandomWalk => {
                random_walk_flow_with(net, self.tau, self.tol, self.max_iter, self.self_loops)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub model: FlowModel,
    /// Teleportation probability; 0 for the empirical model.
    pub tau: f64,
    node_visit: Vec<f64>,
    links: Vec<(usize, usize)>,
    edge_flow: Vec<f64>,
    teleport: Vec<f64>,
    /// Power iterations used (0 for the empirical model).
    pub iterations: usize,
}

impl FlowState {
    pub fn node_count(&self) -> usize {
        self.node_visit.len()
    }

    pub fn node_visit(&self) -> &[f64] {
        &self.node_visit
    }

    /// (source, target) of each edge, aligned with [`FlowState::edge_flow`].
    pub fn links(&self) -> &[(usize, usize)] {
        &self.links
    }

    /// Flow on each edge, aligned with [`FlowNetwork::edges`].
    pub fn edge_flow(&self) -> &[f64] {
        &self.edge_flow
    }

    /// Probability mass per step that leaves each node by teleportation.
    pub fn teleport(&self) -> &[f64] {
        &self.teleport
    }

    pub fn write_visit_csv<W: Write>(&self, net: &FlowNetwork, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["station_id", "visit_rate"])?;
        for (s, p) in net.nodes().iter().zip(&self.node_visit) {
            w.write_record([s.id.to_string(), fmt_sig(*p)])?;
        }
        w.flush().map_err(|e| Error::io("<flow dump>", e))?;
        Ok(())
    }
}

fn links(net: &FlowNetwork) -> Vec<(usize, usize)> {
    net.edges().iter().map(|e| (e.source, e.target)).collect()
}

/// Flow taken straight from normalized trip counts. Node visit rates come from
/// out-strength, so nodes that only receive trips get zero visit rate.
pub fn empirical_flow(net: &FlowNetwork) -> Result<FlowState> {
    let total = net.total_weight();
    if total == 0 {
        return Err(Error::EmptyNetwork);
    }
    let total = total as f64;
    let edge_flow: Vec<f64> = net.edges().iter().map(|e| e.weight as f64 / total).collect();
    let node_visit = net
        .out_strengths()
        .into_iter()
        .map(|s| s as f64 / total)
        .collect();
    Ok(FlowState {
        model: FlowModel::Empirical,
        tau: 0.0,
        node_visit,
        links: links(net),
        edge_flow,
        teleport: vec![0.0; net.node_count()],
        iterations: 0,
    })
}

/// Stationary flow of the teleporting random walk with self-loops kept.
pub fn random_walk_flow(
    net: &FlowNetwork,
    tau: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FlowState> {
    random_walk_flow_with(net, tau, tol, max_iter, true)
}

pub fn random_walk_flow_with(
    net: &FlowNetwork,
    tau: f64,
    tol: f64,
    max_iter: usize,
    self_loops: bool,
) -> Result<FlowState> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("tau {tau} outside [0, 1]")));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::InvalidArgument("tol and max_iter must be positive".into()));
    }
    let n = net.node_count();
    if n == 0 {
        return Err(Error::EmptyNetwork);
    }
    let walkable = |e: &crate::network::Edge| self_loops || !e.is_self_loop();
    let mut out_w = vec![0.0f64; n];
    for e in net.edges().iter().filter(|e| walkable(e)) {
        out_w[e.source] += e.weight as f64;
    }
    let dangling: Vec<bool> = out_w.iter().map(|&w| w == 0.0).collect();
    let inv_n = 1.0 / n as f64;
    // Without teleportation the chain may be periodic; averaging with the
    // identity keeps the same fixed point and damps oscillation.
    let lazy = tau == 0.0;

    let mut p = vec![inv_n; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut jump = 0.0;
        for a in 0..n {
            jump += if dangling[a] { p[a] } else { tau * p[a] };
        }
        next.iter_mut().for_each(|x| *x = jump * inv_n);
        for e in net.edges().iter().filter(|e| walkable(e)) {
            next[e.target] += (1.0 - tau) * p[e.source] * e.weight as f64 / out_w[e.source];
        }
        if lazy {
            for (x, &old) in next.iter_mut().zip(&p) {
                *x = 0.5 * (*x + old);
            }
        }
        let sum: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= sum);
        residual = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut p, &mut next);
        if residual < tol {
            break;
        }
    }
    if residual >= tol {
        return Err(Error::NotConverged {
            iterations,
            residual,
        });
    }

    let edge_flow = net
        .edges()
        .iter()
        .map(|e| {
            if walkable(e) {
                (1.0 - tau) * p[e.source] * e.weight as f64 / out_w[e.source]
            } else {
                0.0
            }
        })
        .collect();
    let teleport = p
        .iter()
        .zip(&dangling)
        .map(|(&pa, &d)| if d { pa } else { tau * pa })
        .collect();
    Ok(FlowState {
        model: FlowModel::RandomWalk,
        tau,
        node_visit: p,
        links: links(net),
        edge_flow,
        teleport,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn empirical_two_edges() {
        let net = FlowNetwork::from_index_edges(2, [(0, 1, 3), (1, 0, 1)]).unwrap();
        let f = empirical_flow(&net).unwrap();
        assert_eq!(f.edge_flow(), &[0.75, 0.25]);
        assert_eq!(f.node_visit(), &[0.75, 0.25]);
    }

    #[test]
    fn empirical_self_loop() {
        let net = FlowNetwork::from_index_edges(1, [(0, 0, 2)]).unwrap();
        assert_eq!(empirical_flow(&net).unwrap().node_visit(), &[1.0]);
    }

    #[test]
    fn empirical_equal_edges() {
        let net =
            FlowNetwork::from_index_edges(4, [(0, 1, 2), (1, 2, 2), (2, 3, 2), (3, 0, 2)]).unwrap();
        assert!(empirical_flow(&net).unwrap().edge_flow().iter().all(|&f| f == 0.25));
    }

    #[test]
    fn empirical_rejects_empty() {
        let net = FlowNetwork::from_index_edges(3, []).unwrap();
        assert!(matches!(empirical_flow(&net), Err(Error::EmptyNetwork)));
    }

    #[test]
    fn hub_graph_without_teleport() {
        let net =
            FlowNetwork::from_index_edges(3, [(0, 1, 1), (0, 2, 1), (1, 0, 1), (2, 0, 1)]).unwrap();
        let f = random_walk_flow(&net, 0.0, 1e-12, 10_000).unwrap();
        let p = f.node_visit();
        assert!(close(p[0], 0.5, 1e-10) && close(p[1], 0.25, 1e-10) && close(p[2], 0.25, 1e-10));
    }

    #[test]
    fn dangling_node_teleports() {
        let net = FlowNetwork::from_index_edges(2, [(0, 1, 1)]).unwrap();
        let f = random_walk_flow(&net, 0.15, 1e-12, 10_000).unwrap();
        assert!(close(f.node_visit()[0], 1.0 / 2.85, 1e-10));
        assert!(close(f.node_visit()[1], 1.85 / 2.85, 1e-10));
        // edge flow = (1 - tau) * p_A
        assert!(close(f.edge_flow()[0], 0.85 / 2.85, 1e-10));
        assert!(close(f.teleport()[1], f.node_visit()[1], 0.0));
    }

    #[test]
    fn single_node() {
        let net = FlowNetwork::from_index_edges(1, []).unwrap();
        let f = random_walk_flow(&net, 0.3, 1e-12, 100).unwrap();
        assert_eq!(f.node_visit(), &[1.0]);
    }

    #[test]
    fn excluded_self_loops_make_nodes_dangling() {
        let net = FlowNetwork::from_index_edges(2, [(0, 0, 5), (1, 0, 1)]).unwrap();
        let f = random_walk_flow_with(&net, 0.0, 1e-12, 10_000, false).unwrap();
        assert_eq!(f.edge_flow()[0], 0.0);
        assert!(close(f.teleport()[0], f.node_visit()[0], 0.0));
    }

    #[test]
    fn non_convergence_reports_residual() {
        let net = FlowNetwork::from_index_edges(3, [(0, 1, 1), (1, 2, 1), (2, 0, 1)]).unwrap();
        let mut net_edges: Vec<_> = net.edges().iter().map(|e| (e.source, e.target, e.weight)).collect();
        net_edges.push((0, 2, 7));
        let net = FlowNetwork::from_index_edges(3, net_edges).unwrap();
        match random_walk_flow(&net, 0.0, 1e-15, 2) {
            Err(Error::NotConverged { iterations, residual }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn bad_tau_rejected() {
        let net = FlowNetwork::from_index_edges(1, []).unwrap();
        assert!(random_walk_flow(&net, 1.5, 1e-12, 10).is_err());
    }
}
