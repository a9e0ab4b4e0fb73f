//! Map-equation minimization by randomized local moves and aggregation.
//!
//! Every trial starts from singleton modules. Nodes are swept in a fresh
//! random order and each moves into the neighbouring module that lowers the
//! codelength most. When a sweep makes no move, modules are collapsed into
//! single nodes and the sweeps repeat one level up, until no merge helps.
//! A final pass moves single nodes between the resulting modules, and the
//! whole cycle repeats while it keeps improving. The best of several
//! independently seeded trials is returned.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowState;
use crate::mapeq::{codelength, FlowGraph, ModuleState, MoveFlows, Partition};
use crate::network::FlowNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub seed: u64,
    pub trials: usize,
    /// Cap on sweeps per local-move phase and on refinement rounds.
    pub max_sweeps: usize,
    /// A move is applied only if it lowers the codelength by more than this.
    pub min_improvement: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            seed: 0,
            trials: 10,
            max_sweeps: 100,
            min_improvement: 1e-10,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.max_sweeps == 0 {
            return Err(Error::InvalidArgument("trials and max_sweeps must be >= 1".into()));
        }
        if !(self.min_improvement >= 0.0) {
            return Err(Error::InvalidArgument("min_improvement must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Map-equation codelength in bits; lower is better.
    Codelength,
    /// Newman modularity; higher is better.
    Modularity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub partition: Partition,
    pub objective: Objective,
    /// Objective value of `partition`.
    pub score: f64,
    /// Sweeps (or passes) run by the winning trial.
    pub sweeps_run: usize,
    pub trial_scores: Vec<f64>,
    /// Objective after each sweep, per trial, starting with the initial value.
    pub trial_traces: Vec<Vec<f64>>,
    pub seed_used: u64,
}

struct TrialOutcome {
    labels: Vec<Option<usize>>,
    codelength: f64,
    sweeps: usize,
    trace: Vec<f64>,
}

/// Per-trial random generator: one ChaCha stream per trial index.
pub(crate) fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn labels_to_partition(labels: &[Option<usize>]) -> Partition {
    Partition::new(labels.iter().map(|l| l.map(|m| m as u32)).collect())
}

struct Scratch {
    out_to: Vec<f64>,
    in_from: Vec<f64>,
    marked: Vec<bool>,
    touched: Vec<usize>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            out_to: vec![0.0; n],
            in_from: vec![0.0; n],
            marked: vec![false; n],
            touched: Vec::new(),
        }
    }

    fn touch(&mut self, m: usize) {
        if !self.marked[m] {
            self.marked[m] = true;
            self.touched.push(m);
        }
    }

    fn clear(&mut self) {
        for &m in &self.touched {
            self.out_to[m] = 0.0;
            self.in_from[m] = 0.0;
            self.marked[m] = false;
        }
        self.touched.clear();
    }
}

/// Relabels modules densely as `0..m`, preserving their order.
fn compact(labels: &[Option<usize>]) -> (Vec<Option<usize>>, usize) {
    let mut rank = vec![usize::MAX; labels.len()];
    for m in labels.iter().flatten() {
        rank[*m] = 0;
    }
    let mut m = 0;
    for r in rank.iter_mut().filter(|r| **r == 0) {
        *r = m;
        m += 1;
    }
    (labels.iter().map(|l| l.map(|x| rank[x])).collect(), m)
}

/// Sweep count and codelength trace of one trial.
struct Progress<'a> {
    flow: &'a FlowState,
    sweeps: usize,
    trace: Vec<f64>,
}

impl<'a> Progress<'a> {
    fn record(&mut self, leaf_labels: &[Option<usize>]) {
        let l = codelength(self.flow, &labels_to_partition(leaf_labels)).expect("active nodes are covered");
        self.trace.push(l);
    }

    fn current(&self) -> f64 {
        *self.trace.last().expect("trace starts non-empty")
    }
}

/// Sweeps the nodes of `graph` in random order, moving each into the
/// neighbouring or an empty module that lowers the codelength most, until a
/// sweep moves nothing. `leaf_of` maps original nodes to graph nodes, or is
/// `None` when the graph is the original one. Returns the moves applied.
fn move_nodes(
    graph: &FlowGraph,
    labels: &mut [Option<usize>],
    leaf_of: Option<&[Option<usize>]>,
    rng: &mut ChaCha8Rng,
    cfg: &OptimizerConfig,
    scratch: &mut Scratch,
    progress: &mut Progress,
) -> usize {
    let n = graph.node_count();
    let mut order: Vec<usize> = (0..n).filter(|&a| labels[a].is_some()).collect();
    let mut total_moves = 0;
    for _ in 0..cfg.max_sweeps {
        progress.sweeps += 1;
        let mut state = ModuleState::from_graph(graph, labels, n);
        let mut empty: Vec<usize> = (0..n).rev().filter(|&m| state.size[m] == 0).collect();
        order.shuffle(rng);
        let mut moved = 0usize;
        for &node in &order {
            let Some(current) = labels[node] else { continue };
            for &(nb, f) in &graph.out[node] {
                if let Some(m) = labels[nb] {
                    scratch.touch(m);
                    scratch.out_to[m] += f;
                }
            }
            for &(nb, f) in &graph.inc[node] {
                if let Some(m) = labels[nb] {
                    scratch.touch(m);
                    scratch.in_from[m] += f;
                }
            }
            scratch.touched.sort_unstable();
            let out_to_old = scratch.out_to[current];
            let in_from_old = scratch.in_from[current];
            let mut best: Option<(usize, MoveFlows)> = None;
            let mut best_delta = -cfg.min_improvement;
            let mut consider = |m: usize, out_to_new: f64, in_from_new: f64| {
                let mv = MoveFlows {
                    out_to_old,
                    in_from_old,
                    out_to_new,
                    in_from_new,
                };
                let d = state.delta(graph, node, current, m, mv);
                if d < best_delta {
                    best_delta = d;
                    best = Some((m, mv));
                }
            };
            for &m in &scratch.touched {
                if m != current {
                    consider(m, scratch.out_to[m], scratch.in_from[m]);
                }
            }
            if state.size[current] > graph.size[node] {
                if let Some(&m) = empty.last() {
                    consider(m, 0.0, 0.0);
                }
            }
            scratch.clear();
            if let Some((m, mv)) = best {
                if empty.last() == Some(&m) {
                    empty.pop();
                }
                state.apply(graph, node, current, m, mv);
                if state.size[current] == 0 {
                    empty.push(current);
                }
                labels[node] = Some(m);
                moved += 1;
            }
        }
        match leaf_of {
            Some(map) => {
                let leaf: Vec<Option<usize>> = map.iter().map(|g| g.and_then(|g| labels[g])).collect();
                progress.record(&leaf);
            }
            None => progress.record(labels),
        }
        debug_assert!((state.codelength() - progress.current()).abs() < 1e-8);
        total_moves += moved;
        if moved == 0 {
            break;
        }
    }
    total_moves
}

fn run_trial(leaf: &FlowGraph, flow: &FlowState, cfg: &OptimizerConfig, trial: usize) -> TrialOutcome {
    let n = leaf.node_count();
    let mut labels: Vec<Option<usize>> = (0..n).map(|a| (leaf.visit[a] > 0.0).then_some(a)).collect();
    let mut rng = trial_rng(cfg.seed, trial);
    let mut scratch = Scratch::new(n);
    let mut progress = Progress {
        flow,
        sweeps: 0,
        trace: Vec::new(),
    };
    progress.record(&labels);

    for _ in 0..cfg.max_sweeps {
        let before = progress.current();
        // Coarse phase: move whole modules until no merge helps.
        loop {
            let (dense, m) = compact(&labels);
            let graph = leaf.aggregate(&dense, m);
            let mut coarse: Vec<Option<usize>> = (0..m).map(Some).collect();
            let moves = move_nodes(&graph, &mut coarse, Some(&dense), &mut rng, cfg, &mut scratch, &mut progress);
            labels = dense.iter().map(|g| g.and_then(|g| coarse[g])).collect();
            if moves == 0 {
                break;
            }
        }
        // Fine phase: move single nodes between the modules found so far.
        labels = compact(&labels).0;
        let moves = move_nodes(leaf, &mut labels, None, &mut rng, cfg, &mut scratch, &mut progress);
        if moves == 0 || before - progress.current() <= cfg.min_improvement {
            break;
        }
    }
    TrialOutcome {
        labels,
        codelength: progress.current(),
        sweeps: progress.sweeps,
        trace: progress.trace,
    }
}

/// Minimizes the map equation by repeated randomized local moves.
///
/// Nodes with zero visit rate are left unassigned. Module ids in the result
/// are dense and ordered by decreasing visit mass.
pub fn infomap(flow: &FlowState, net: &FlowNetwork, cfg: &OptimizerConfig) -> Result<OptimizationResult> {
    cfg.validate()?;
    if net.node_count() != flow.node_count() || net.edges().len() != flow.edge_flow().len() {
        return Err(Error::InvalidArgument("flow state does not match network".into()));
    }
    let graph = FlowGraph::new(flow);
    if graph.visit.iter().all(|&p| p <= 0.0) {
        return Ok(OptimizationResult {
            partition: Partition::unassigned(net.node_count()),
            objective: Objective::Codelength,
            score: 0.0,
            sweeps_run: 0,
            trial_scores: vec![0.0; cfg.trials],
            trial_traces: vec![vec![0.0]; cfg.trials],
            seed_used: cfg.seed,
        });
    }

    let outcomes: Vec<TrialOutcome> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(&graph, flow, cfg, t))
        .collect();
    let best = outcomes
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.codelength.total_cmp(&b.1.codelength).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("at least one trial");

    let partition = labels_to_partition(&outcomes[best].labels).relabeled_by_mass(flow.node_visit());
    let score = codelength(flow, &partition)?;
    Ok(OptimizationResult {
        partition,
        objective: Objective::Codelength,
        score,
        sweeps_run: outcomes[best].sweeps,
        trial_scores: outcomes.iter().map(|o| o.codelength).collect(),
        trial_traces: outcomes.into_iter().map(|o| o.trace).collect(),
        seed_used: cfg.seed,
    })
}
