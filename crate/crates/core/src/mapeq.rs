//! Two-level map equation.
//!
//! For a partition into modules `i` with exit rates `q_i`, node visit rates
//! `p_a` and `P_i = q_i + sum_{a in i} p_a`, the codelength in bits is
//!
//! ```text
//! L = q H(Q) + sum_i P_i H(P^i)
//!   = plogp(q) - 2 sum_i plogp(q_i) - sum_a plogp(p_a) + sum_i plogp(P_i)
//! ```
//!
//! where `q = sum_i q_i` and `plogp(x) = x log2 x`. Exit flow counts edge
//! flow that leaves a module plus teleportation flow that lands on a node
//! outside it.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::flow::FlowState;
use crate::network::FlowNetwork;

#[inline]
pub fn plogp(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// Module assignment per node; `None` marks an unassigned node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    assignment: Vec<Option<u32>>,
}

impl Partition {
    pub fn new(assignment: Vec<Option<u32>>) -> Self {
        Partition { assignment }
    }

    pub fn from_labels(labels: &[u32]) -> Self {
        Partition::new(labels.iter().map(|&l| Some(l)).collect())
    }

    pub fn singletons(n: usize) -> Self {
        Partition::new((0..n as u32).map(Some).collect())
    }

    pub fn single_module(n: usize) -> Self {
        Partition::new(vec![Some(0); n])
    }

    pub fn unassigned(n: usize) -> Self {
        Partition::new(vec![None; n])
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn assignment(&self) -> &[Option<u32>] {
        &self.assignment
    }

    pub fn module_of(&self, node: usize) -> Option<u32> {
        self.assignment.get(node).copied().flatten()
    }

    pub fn module_ids(&self) -> BTreeSet<u32> {
        self.assignment.iter().flatten().copied().collect()
    }

    pub fn module_count(&self) -> usize {
        self.module_ids().len()
    }

    pub fn assigned_count(&self) -> usize {
        self.assignment.iter().filter(|a| a.is_some()).count()
    }

    /// Smallest id not in use by any module.
    pub fn next_free_id(&self) -> u32 {
        self.assignment.iter().flatten().max().map_or(0, |m| m + 1)
    }

    /// Relabels modules to `0..m`, keeping the relative order of ids.
    pub fn compacted(&self) -> Partition {
        let rank: BTreeMap<u32, u32> = self
            .module_ids()
            .into_iter()
            .enumerate()
            .map(|(i, m)| (m, i as u32))
            .collect();
        Partition {
            assignment: self.assignment.iter().map(|a| a.map(|m| rank[&m])).collect(),
        }
    }

    /// Relabels modules to `0..m` by decreasing total node weight; ties go to
    /// the module whose first member has the lower node index.
    pub fn relabeled_by_mass(&self, node_weight: &[f64]) -> Partition {
        let mut mass: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
        for (node, a) in self.assignment.iter().enumerate() {
            if let Some(m) = a {
                let entry = mass.entry(*m).or_insert((0.0, node));
                entry.0 += node_weight.get(node).copied().unwrap_or(0.0);
            }
        }
        let mut order: Vec<(u32, f64, usize)> =
            mass.into_iter().map(|(m, (w, first))| (m, w, first)).collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.2.cmp(&b.2)));
        let label: BTreeMap<u32, u32> = order
            .iter()
            .enumerate()
            .map(|(rank, &(m, _, _))| (m, rank as u32))
            .collect();
        Partition {
            assignment: self.assignment.iter().map(|a| a.map(|m| label[&m])).collect(),
        }
    }

    /// Writes `station_id,module_id` with an empty module for unassigned
    /// stations.
    pub fn write_csv<W: Write>(&self, net: &FlowNetwork, out: W) -> Result<()> {
        if net.node_count() != self.len() {
            return Err(Error::UniverseMismatch(net.node_count(), self.len()));
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["station_id", "module_id"])?;
        for (s, a) in net.nodes().iter().zip(&self.assignment) {
            w.write_record([s.id.to_string(), a.map(|m| m.to_string()).unwrap_or_default()])?;
        }
        w.flush().map_err(|e| Error::io("<partition>", e))?;
        Ok(())
    }

    /// Reads a partition CSV against the network's station universe. Every
    /// station must appear exactly once.
    pub fn read_csv<R: Read>(net: &FlowNetwork, source: R) -> Result<Partition> {
        #[derive(Deserialize)]
        struct Row {
            station_id: i64,
            module_id: Option<u32>,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
        let mut assignment = vec![None; net.node_count()];
        let mut seen = vec![false; net.node_count()];
        let mut unknown = BTreeSet::new();
        for rec in rdr.deserialize::<Row>() {
            let r = rec?;
            match net.index_of(r.station_id) {
                Some(i) if seen[i] => {
                    return Err(Error::Schema {
                        context: "partition".into(),
                        message: format!("station {} listed twice", r.station_id),
                    })
                }
                Some(i) => {
                    seen[i] = true;
                    assignment[i] = r.module_id;
                }
                None => {
                    unknown.insert(r.station_id);
                }
            }
        }
        if !unknown.is_empty() {
            return Err(Error::UnknownStations(unknown.into_iter().collect()));
        }
        let missing: Vec<String> = seen
            .iter()
            .enumerate()
            .filter(|(_, &s)| !s)
            .map(|(i, _)| net.nodes()[i].id.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Schema {
                context: "partition".into(),
                message: format!("stations missing from partition: {}", missing.join(", ")),
            });
        }
        Ok(Partition { assignment })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModuleFlowEntry {
    pub id: u32,
    /// Sum of member visit rates.
    pub visit: f64,
    /// Exit rate `q_i`.
    pub exit: f64,
    /// `q_i + visit`, the weight of the module codebook.
    pub total: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModuleFlow {
    /// One entry per module, sorted by id.
    pub modules: Vec<ModuleFlowEntry>,
    /// Total exit rate `q`.
    pub exit_total: f64,
}

fn check_cover(flow: &FlowState, part: &Partition) -> Result<()> {
    if part.len() != flow.node_count() {
        return Err(Error::UniverseMismatch(flow.node_count(), part.len()));
    }
    for (node, (&p, a)) in flow.node_visit().iter().zip(part.assignment()).enumerate() {
        if p > 0.0 && a.is_none() {
            return Err(Error::UncoveredNode(node));
        }
    }
    Ok(())
}

/// Per-module visit, exit and codebook weights.
pub fn module_flows(flow: &FlowState, part: &Partition) -> Result<ModuleFlow> {
    check_cover(flow, part)?;
    let ids: Vec<u32> = part.module_ids().into_iter().collect();
    let dense: BTreeMap<u32, usize> = ids.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    let labels: Vec<Option<usize>> = part
        .assignment()
        .iter()
        .map(|a| a.map(|m| dense[&m]))
        .collect();
    let state = ModuleState::build(flow, &labels, ids.len());
    let modules = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            let exit = state.exit(i);
            ModuleFlowEntry {
                id,
                visit: state.visit[i],
                exit,
                total: exit + state.visit[i],
                size: state.size[i],
            }
        })
        .collect::<Vec<_>>();
    let exit_total = modules.iter().map(|m| m.exit).sum();
    Ok(ModuleFlow {
        modules,
        exit_total,
    })
}

/// Map-equation codelength in bits.
pub fn codelength(flow: &FlowState, part: &Partition) -> Result<f64> {
    let mf = module_flows(flow, part)?;
    let node_term: f64 = flow
        .node_visit()
        .iter()
        .zip(part.assignment())
        .filter(|(_, a)| a.is_some())
        .map(|(&p, _)| plogp(p))
        .sum();
    let exit_term: f64 = mf.modules.iter().map(|m| plogp(m.exit)).sum();
    let total_term: f64 = mf.modules.iter().map(|m| plogp(m.total)).sum();
    Ok((plogp(mf.exit_total) - 2.0 * exit_term - node_term + total_term).max(0.0))
}

/// Change in codelength from moving `node` into `target`. `target` must be a
/// module already in use or [`Partition::next_free_id`] for a new module.
pub fn codelength_delta(
    flow: &FlowState,
    part: &Partition,
    node: usize,
    target: u32,
) -> Result<f64> {
    check_cover(flow, part)?;
    let current = part
        .module_of(node)
        .ok_or_else(|| Error::InvalidArgument(format!("node {node} is unassigned")))?;
    let ids = part.module_ids();
    if !ids.contains(&target) && target != part.next_free_id() {
        return Err(Error::InvalidModule(target));
    }
    if target == current {
        return Ok(0.0);
    }
    let mut dense: BTreeMap<u32, usize> = ids.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    let fresh = dense.len();
    dense.entry(target).or_insert(fresh);
    let labels: Vec<Option<usize>> = part
        .assignment()
        .iter()
        .map(|a| a.map(|m| dense[&m]))
        .collect();
    let state = ModuleState::build(flow, &labels, dense.len());
    let graph = FlowGraph::new(flow);
    let (from, to) = (dense[&current], dense[&target]);
    let mut out_to = [0.0; 2];
    let mut in_from = [0.0; 2];
    for &(nb, f) in &graph.out[node] {
        match labels[nb] {
            Some(m) if m == from => out_to[0] += f,
            Some(m) if m == to => out_to[1] += f,
            _ => {}
        }
    }
    for &(nb, f) in &graph.inc[node] {
        match labels[nb] {
            Some(m) if m == from => in_from[0] += f,
            Some(m) if m == to => in_from[1] += f,
            _ => {}
        }
    }
    Ok(state.delta(
        &graph,
        node,
        from,
        to,
        MoveFlows {
            out_to_old: out_to[0],
            in_from_old: in_from[0],
            out_to_new: out_to[1],
            in_from_new: in_from[1],
        },
    ))
}

/// Non-self-loop adjacency with flows, plus per-node flow totals. A node may
/// stand for a group of original nodes after aggregation.
#[derive(Debug, Clone)]
pub(crate) struct FlowGraph {
    pub out: Vec<Vec<(usize, f64)>>,
    pub inc: Vec<Vec<(usize, f64)>>,
    /// Flow leaving the node, including flow to nodes outside the graph.
    pub out_total: Vec<f64>,
    pub visit: Vec<f64>,
    pub teleport: Vec<f64>,
    /// Original nodes represented by each node.
    pub size: Vec<usize>,
    /// Original node count, the teleportation universe.
    pub universe: usize,
    /// `sum plogp(p_a)` over the original nodes.
    pub node_term: f64,
}

impl FlowGraph {
    pub fn new(flow: &FlowState) -> Self {
        let n = flow.node_count();
        let mut out = vec![Vec::new(); n];
        let mut inc = vec![Vec::new(); n];
        let mut out_total = vec![0.0; n];
        for (&(s, t), &f) in flow.links().iter().zip(flow.edge_flow()) {
            if s == t || f <= 0.0 {
                continue;
            }
            out[s].push((t, f));
            inc[t].push((s, f));
            out_total[s] += f;
        }
        FlowGraph {
            out,
            inc,
            out_total,
            visit: flow.node_visit().to_vec(),
            teleport: flow.teleport().to_vec(),
            size: vec![1; n],
            universe: n,
            node_term: flow.node_visit().iter().map(|&p| plogp(p)).sum(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.visit.len()
    }

    /// Collapses each module into one node. Labels must be dense in
    /// `0..modules`; unlabeled nodes are dropped and flow to them stays in
    /// `out_total`.
    pub fn aggregate(&self, labels: &[Option<usize>], modules: usize) -> FlowGraph {
        let mut visit = vec![0.0; modules];
        let mut teleport = vec![0.0; modules];
        let mut size = vec![0; modules];
        let mut out_total = vec![0.0; modules];
        let mut links: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (node, label) in labels.iter().enumerate() {
            let Some(m) = *label else { continue };
            visit[m] += self.visit[node];
            teleport[m] += self.teleport[node];
            size[m] += self.size[node];
            out_total[m] += self.out_total[node];
            for &(nb, f) in &self.out[node] {
                match labels[nb] {
                    Some(t) if t == m => out_total[m] -= f,
                    Some(t) => *links.entry((m, t)).or_default() += f,
                    None => {}
                }
            }
        }
        let mut out = vec![Vec::new(); modules];
        let mut inc = vec![Vec::new(); modules];
        for ((s, t), f) in links {
            out[s].push((t, f));
            inc[t].push((s, f));
        }
        FlowGraph {
            out,
            inc,
            out_total: out_total.into_iter().map(|f| f.max(0.0)).collect(),
            visit,
            teleport,
            size,
            universe: self.universe,
            node_term: self.node_term,
        }
    }
}

/// Flow between a moving node and its old and new modules, excluding the
/// node itself.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct MoveFlows {
    pub out_to_old: f64,
    pub in_from_old: f64,
    pub out_to_new: f64,
    pub in_from_new: f64,
}

/// Per-module aggregates for dense module indices, with running sums of the
/// codelength terms.
#[derive(Debug, Clone)]
pub(crate) struct ModuleState {
    n: f64,
    pub visit: Vec<f64>,
    edge_exit: Vec<f64>,
    teleport: Vec<f64>,
    pub size: Vec<usize>,
    node_term: f64,
    exit_sum: f64,
    exit_term: f64,
    total_term: f64,
}

impl ModuleState {
    pub fn build(flow: &FlowState, labels: &[Option<usize>], modules: usize) -> Self {
        let mut s = ModuleState {
            n: flow.node_count() as f64,
            visit: vec![0.0; modules],
            edge_exit: vec![0.0; modules],
            teleport: vec![0.0; modules],
            size: vec![0; modules],
            node_term: 0.0,
            exit_sum: 0.0,
            exit_term: 0.0,
            total_term: 0.0,
        };
        for (node, label) in labels.iter().enumerate() {
            if let Some(m) = *label {
                s.visit[m] += flow.node_visit()[node];
                s.teleport[m] += flow.teleport()[node];
                s.size[m] += 1;
                s.node_term += plogp(flow.node_visit()[node]);
            }
        }
        for (&(a, b), &f) in flow.links().iter().zip(flow.edge_flow()) {
            if let Some(m) = labels[a] {
                if labels[b] != Some(m) {
                    s.edge_exit[m] += f;
                }
            }
        }
        s.refresh_sums();
        s
    }

    pub fn from_graph(graph: &FlowGraph, labels: &[Option<usize>], modules: usize) -> Self {
        let mut s = ModuleState {
            n: graph.universe as f64,
            visit: vec![0.0; modules],
            edge_exit: vec![0.0; modules],
            teleport: vec![0.0; modules],
            size: vec![0; modules],
            node_term: graph.node_term,
            exit_sum: 0.0,
            exit_term: 0.0,
            total_term: 0.0,
        };
        for (node, label) in labels.iter().enumerate() {
            let Some(m) = *label else { continue };
            s.visit[m] += graph.visit[node];
            s.teleport[m] += graph.teleport[node];
            s.size[m] += graph.size[node];
            s.edge_exit[m] += graph.out_total[node];
            for &(nb, f) in &graph.out[node] {
                if labels[nb] == Some(m) {
                    s.edge_exit[m] -= f;
                }
            }
        }
        for e in s.edge_exit.iter_mut() {
            *e = e.max(0.0);
        }
        s.refresh_sums();
        s
    }

    fn refresh_sums(&mut self) {
        self.exit_sum = 0.0;
        self.exit_term = 0.0;
        self.total_term = 0.0;
        for m in 0..self.visit.len() {
            let q = self.exit(m);
            self.exit_sum += q;
            self.exit_term += plogp(q);
            self.total_term += plogp(q + self.visit[m]);
        }
    }

    fn exit_of(&self, edge_exit: f64, teleport: f64, size: usize) -> f64 {
        if size == 0 {
            return 0.0;
        }
        let q = edge_exit + teleport * (self.n - size as f64) / self.n;
        q.max(0.0)
    }

    pub fn exit(&self, m: usize) -> f64 {
        self.exit_of(self.edge_exit[m], self.teleport[m], self.size[m])
    }

    pub fn codelength(&self) -> f64 {
        plogp(self.exit_sum) - 2.0 * self.exit_term - self.node_term + self.total_term
    }

    /// Exit data of `from` and `to` after moving `node`.
    fn moved(
        &self,
        graph: &FlowGraph,
        node: usize,
        from: usize,
        to: usize,
        mv: MoveFlows,
    ) -> [(f64, f64, f64, usize); 2] {
        let out_total = graph.out_total[node];
        let t = graph.teleport[node];
        let from_edge = self.edge_exit[from] - (out_total - mv.out_to_old) + mv.in_from_old;
        let to_edge = self.edge_exit[to] + (out_total - mv.out_to_new) - mv.in_from_new;
        let from_size = self.size[from] - graph.size[node];
        [
            (
                if from_size == 0 { 0.0 } else { from_edge },
                self.teleport[from] - t,
                if from_size == 0 { 0.0 } else { self.visit[from] - graph.visit[node] },
                from_size,
            ),
            (
                to_edge,
                self.teleport[to] + t,
                self.visit[to] + graph.visit[node],
                self.size[to] + graph.size[node],
            ),
        ]
    }

    pub fn delta(&self, graph: &FlowGraph, node: usize, from: usize, to: usize, mv: MoveFlows) -> f64 {
        let old_q = [self.exit(from), self.exit(to)];
        let old_p = [self.visit[from], self.visit[to]];
        let after = self.moved(graph, node, from, to, mv);
        let new_q = [
            self.exit_of(after[0].0, after[0].1, after[0].3),
            self.exit_of(after[1].0, after[1].1, after[1].3),
        ];
        let new_exit_sum = self.exit_sum - old_q[0] - old_q[1] + new_q[0] + new_q[1];
        let d_index = plogp(new_exit_sum) - plogp(self.exit_sum);
        let d_exit = plogp(new_q[0]) + plogp(new_q[1]) - plogp(old_q[0]) - plogp(old_q[1]);
        let d_total = plogp(new_q[0] + after[0].2) + plogp(new_q[1] + after[1].2)
            - plogp(old_q[0] + old_p[0])
            - plogp(old_q[1] + old_p[1]);
        d_index - 2.0 * d_exit + d_total
    }

    pub fn apply(&mut self, graph: &FlowGraph, node: usize, from: usize, to: usize, mv: MoveFlows) {
        let old_q = [self.exit(from), self.exit(to)];
        let old_p = [self.visit[from], self.visit[to]];
        let after = self.moved(graph, node, from, to, mv);
        for (slot, m) in [from, to].into_iter().enumerate() {
            let (edge_exit, teleport, visit, size) = after[slot];
            self.edge_exit[m] = edge_exit;
            self.teleport[m] = if size == 0 { 0.0 } else { teleport };
            self.visit[m] = visit;
            self.size[m] = size;
        }
        let new_q = [self.exit(from), self.exit(to)];
        self.exit_sum += new_q[0] + new_q[1] - old_q[0] - old_q[1];
        self.exit_term += plogp(new_q[0]) + plogp(new_q[1]) - plogp(old_q[0]) - plogp(old_q[1]);
        self.total_term += plogp(new_q[0] + self.visit[from]) + plogp(new_q[1] + self.visit[to])
            - plogp(old_q[0] + old_p[0])
            - plogp(old_q[1] + old_p[1]);
    }
}
