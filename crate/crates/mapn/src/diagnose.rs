//! Diagnostics: exact Ollivier-Ricci curvature via integer min-cost flow,
//! Jacobian sensitivity of a reference mean-aggregation network, empirical
//! gradient-decay checks, and over-smoothing metrics.
//!
//! Curvature of an edge `(a, b)` is `1 - W1(mu_a, mu_b)` with `mu_v` uniform
//! over the skeleton neighbors of `v` (no lazy self mass) and shortest-path
//! ground distances. Masses are scaled to integers (`|N(a)|·|N(b)|` units),
//! so the transport optimum is computed exactly.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::diff::DiffValue;
use crate::graph::{HeteroGraph, NodeId};
use crate::sample::hop_rings;
use crate::tensor::Tensor;
use crate::{Tensor64, Value};

#[derive(Debug, Error)]
pub enum DiagError {
    #[error("node {0} has an empty neighborhood")]
    EmptyNeighborhood(NodeId),
    #[error("neighborhoods of edge ({0}, {1}) are not mutually reachable")]
    Disconnected(NodeId, NodeId),
    #[error("edge ({0}, {1}) does not exist")]
    NoSuchEdge(NodeId, NodeId),
    #[error("graph is not regular; degree histogram {0:?}")]
    NotRegular(Vec<(usize, usize)>),
    #[error("graph has no edges")]
    NoEdges,
}

// ---------------------------------------------------------------------------
// exact transport by successive shortest paths
// ---------------------------------------------------------------------------

struct FlowEdge {
    to: usize,
    cap: i64,
    cost: i64,
    flow: i64,
}

/// Min-cost max-flow on a small dense instance; Bellman-Ford path search is
/// fine at this scale and handles the negative residual costs exactly.
struct MinCostFlow {
    edges: Vec<FlowEdge>,
    adj: Vec<Vec<usize>>,
}

impl MinCostFlow {
    fn new(n: usize) -> Self {
        MinCostFlow { edges: Vec::new(), adj: vec![Vec::new(); n] }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: i64, cost: i64) -> usize {
        let id = self.edges.len();
        self.edges.push(FlowEdge { to, cap, cost, flow: 0 });
        self.edges.push(FlowEdge { to: from, cap: 0, cost: -cost, flow: 0 });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    /// Returns (total cost, augmentation count); panics if the demand cannot
    /// be met (callers construct balanced instances).
    fn run(&mut self, source: usize, target: usize) -> (i64, usize) {
        let n = self.adj.len();
        let mut total_cost = 0i64;
        let mut augmentations = 0usize;
        loop {
            // Bellman-Ford shortest path in the residual graph
            let mut dist = vec![i64::MAX; n];
            let mut pred: Vec<Option<usize>> = vec![None; n];
            dist[source] = 0;
            for _ in 0..n {
                let mut changed = false;
                for (u, edge_ids) in self.adj.iter().enumerate() {
                    if dist[u] == i64::MAX {
                        continue;
                    }
                    for &eid in edge_ids {
                        let e = &self.edges[eid];
                        if e.cap - e.flow > 0 && dist[u] + e.cost < dist[e.to] {
                            dist[e.to] = dist[u] + e.cost;
                            pred[e.to] = Some(eid);
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            if dist[target] == i64::MAX {
                break;
            }
            // bottleneck along the path
            let mut push = i64::MAX;
            let mut v = target;
            while let Some(eid) = pred[v] {
                let e = &self.edges[eid];
                push = push.min(e.cap - e.flow);
                v = self.edges[eid ^ 1].to;
            }
            let mut v = target;
            while let Some(eid) = pred[v] {
                self.edges[eid].flow += push;
                self.edges[eid ^ 1].flow -= push;
                v = self.edges[eid ^ 1].to;
            }
            total_cost += push * dist[target];
            augmentations += 1;
        }
        (total_cost, augmentations)
    }
}

/// Exact minimum transport cost for integer supplies/demands and integer
/// costs. Returns (cost, plan, augmentations).
pub fn min_transport_cost(supply: &[u64], demand: &[u64], cost: &[Vec<u64>]) -> (u128, Vec<Vec<u64>>, usize) {
    let (m, n) = (supply.len(), demand.len());
    let total: u64 = supply.iter().sum();
    assert_eq!(total, demand.iter().sum::<u64>(), "unbalanced transport instance");
    let source = m + n;
    let target = m + n + 1;
    let mut flow = MinCostFlow::new(m + n + 2);
    let mut plan_edges = vec![vec![0usize; n]; m];
    for (i, &s) in supply.iter().enumerate() {
        flow.add_edge(source, i, s as i64, 0);
    }
    for (i, row) in cost.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            plan_edges[i][j] = flow.add_edge(i, m + j, supply[i].min(demand[j]) as i64, c as i64);
        }
    }
    for (j, &d) in demand.iter().enumerate() {
        flow.add_edge(m + j, target, d as i64, 0);
    }
    let (total_cost, augmentations) = flow.run(source, target);
    let plan: Vec<Vec<u64>> = plan_edges
        .iter()
        .map(|row| row.iter().map(|&eid| flow.edges[eid].flow.max(0) as u64).collect())
        .collect();
    (total_cost as u128, plan, augmentations)
}

fn bfs_distances(graph: &HeteroGraph, from: NodeId) -> Vec<usize> {
    let mut dist = vec![usize::MAX; graph.n_nodes()];
    dist[from] = 0;
    let mut queue = std::collections::VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        for &w in graph.skeleton_neighbors(v) {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

#[derive(Clone, Debug, Serialize)]
pub struct EdgeCurvature {
    pub a: NodeId,
    pub b: NodeId,
    pub kappa: f64,
    pub w1: f64,
    /// Worst absolute marginal violation of the returned plan, in mass units.
    pub plan_residual: f64,
    pub augmentations: usize,
}

/// Exact Ollivier-Ricci curvature of one skeleton edge.
pub fn ollivier_ricci(graph: &HeteroGraph, a: NodeId, b: NodeId) -> Result<EdgeCurvature, DiagError> {
    if !graph.skeleton_neighbors(a).contains(&b) {
        return Err(DiagError::NoSuchEdge(a, b));
    }
    let na = graph.skeleton_neighbors(a);
    let nb = graph.skeleton_neighbors(b);
    if na.is_empty() {
        return Err(DiagError::EmptyNeighborhood(a));
    }
    if nb.is_empty() {
        return Err(DiagError::EmptyNeighborhood(b));
    }
    let mut cost = vec![vec![0u64; nb.len()]; na.len()];
    for (i, &x) in na.iter().enumerate() {
        let dist = bfs_distances(graph, x);
        for (j, &y) in nb.iter().enumerate() {
            if dist[y] == usize::MAX {
                return Err(DiagError::Disconnected(a, b));
            }
            cost[i][j] = dist[y] as u64;
        }
    }
    let supply = vec![nb.len() as u64; na.len()];
    let demand = vec![na.len() as u64; nb.len()];
    let (total, plan, augmentations) = min_transport_cost(&supply, &demand, &cost);
    let scale = (na.len() * nb.len()) as f64;
    let w1 = total as f64 / scale;

    // feasibility of the returned plan, in original mass units
    let mut residual = 0.0f64;
    for (i, row) in plan.iter().enumerate() {
        let s: u64 = row.iter().sum();
        residual = residual.max((s as f64 - supply[i] as f64).abs() / scale);
    }
    for j in 0..nb.len() {
        let d: u64 = plan.iter().map(|row| row[j]).sum();
        residual = residual.max((d as f64 - demand[j] as f64).abs() / scale);
    }

    Ok(EdgeCurvature { a, b, kappa: 1.0 - w1, w1, plan_residual: residual, augmentations })
}

#[derive(Clone, Debug, Serialize)]
pub struct CurvatureReport {
    pub edges: Vec<EdgeCurvature>,
    pub min_kappa: f64,
    pub mean_kappa: f64,
    pub total_augmentations: usize,
}

/// Curvature of every unique skeleton edge, solved in parallel, reported in
/// `(a, b)` order.
pub fn curvature_report(graph: &HeteroGraph) -> Result<CurvatureReport, DiagError> {
    let mut pairs = Vec::new();
    for a in 0..graph.n_nodes() {
        for &b in graph.skeleton_neighbors(a) {
            if a < b {
                pairs.push((a, b));
            }
        }
    }
    if pairs.is_empty() {
        return Err(DiagError::NoEdges);
    }
    let edges: Result<Vec<EdgeCurvature>, DiagError> =
        pairs.par_iter().map(|&(a, b)| ollivier_ricci(graph, a, b)).collect();
    let edges = edges?;
    let min_kappa = edges.iter().map(|e| e.kappa).fold(f64::INFINITY, f64::min);
    let mean_kappa = edges.iter().map(|e| e.kappa).sum::<f64>() / edges.len() as f64;
    let total_augmentations = edges.iter().map(|e| e.augmentations).sum();
    Ok(CurvatureReport { edges, min_kappa, mean_kappa, total_augmentations })
}

// ---------------------------------------------------------------------------
// reference mean-aggregation network and Jacobian sensitivity
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub enum Activation {
    Identity,
    Tanh,
    LeakyRelu(f64),
}

impl Activation {
    fn apply(&self, v: &Value) -> Value {
        match self {
            Activation::Identity => v.clone(),
            Activation::Tanh => v.tanh(),
            Activation::LeakyRelu(slope) => v.leaky_relu(*slope),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Activation::Identity | Activation::Tanh => 1.0,
            Activation::LeakyRelu(slope) => slope.abs().max(1.0),
        }
    }
}

/// How the reference network pools the previous layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AggregationRule {
    /// Mean over `{v} ∪ N(v)` — the backbone used for readouts and the
    /// two-hop comparison.
    BallMean,
    /// Neighbor sum scaled by `1/(deg+1)`, self excluded — the aggregation
    /// whose per-layer operator norm is `K/(K+1)` on a K-regular graph,
    /// matching the layer-decay bound.
    NeighborsOverDegreePlusOne,
}

#[derive(Clone, Debug)]
pub struct ReferenceModel {
    pub rule: AggregationRule,
    /// Optional shared linear map applied after pooling.
    pub weight: Option<Tensor64>,
    pub activation: Activation,
}

impl ReferenceModel {
    pub fn parameter_free(rule: AggregationRule) -> Self {
        ReferenceModel { rule, weight: None, activation: Activation::Identity }
    }

    fn layer(&self, graph: &HeteroGraph, h: &[Value]) -> Vec<Value> {
        let weight = self.weight.as_ref().map(|w| Value::constant(w.clone()));
        (0..graph.n_nodes())
            .map(|v| {
                let neighbors = graph.skeleton_neighbors(v);
                let pooled = match self.rule {
                    AggregationRule::BallMean => {
                        let mut items = vec![h[v].clone()];
                        items.extend(neighbors.iter().map(|&w| h[w].clone()));
                        crate::diff::mean_of(&items)
                    }
                    AggregationRule::NeighborsOverDegreePlusOne => {
                        let scale = 1.0 / (neighbors.len() as f64 + 1.0);
                        if neighbors.is_empty() {
                            Value::constant(Tensor::zeros(&h[v].shape()))
                        } else {
                            let items: Vec<Value> = neighbors.iter().map(|&w| h[w].clone()).collect();
                            crate::diff::sum_tree(&items).scale(scale)
                        }
                    }
                };
                let mapped = match &weight {
                    Some(w) => w.matmul(&pooled),
                    None => pooled,
                };
                self.activation.apply(&mapped)
            })
            .collect()
    }

    /// States of layers `0..=layers`, starting from `x0` leaves.
    pub fn forward(&self, graph: &HeteroGraph, x0: Vec<Value>, layers: usize) -> Vec<Vec<Value>> {
        let mut states = vec![x0];
        for _ in 0..layers {
            let next = self.layer(graph, states.last().expect("nonempty"));
            states.push(next);
        }
        states
    }

    /// Numeric per-layer states (no gradient tracking).
    pub fn forward_numeric(&self, graph: &HeteroGraph, layers: usize) -> Vec<Vec<Vec<f64>>> {
        let x0: Vec<Value> = (0..graph.n_nodes())
            .map(|v| Value::constant(Tensor::vector(graph.feature_row(v))))
            .collect();
        // constants do not track gradients, so this is plain evaluation
        let states = {
            let mut states = vec![x0];
            for _ in 0..layers {
                let next = self.layer(graph, states.last().expect("nonempty"));
                states.push(next);
            }
            states
        };
        states
            .iter()
            .map(|layer| layer.iter().map(|v| v.data().data().to_vec()).collect())
            .collect()
    }
}

/// Entrywise p-norm of every block `∂H^{l}_a / ∂H^{l'}_b` for fixed `b`:
/// returns one norm per node `a`. Exact reverse-mode Jacobians, one backward
/// pass per output coordinate.
pub fn jacobian_norms(
    model: &ReferenceModel,
    graph: &HeteroGraph,
    features: &[Vec<f64>],
    l: usize,
    l_prime: usize,
    b: NodeId,
    p: f64,
) -> Vec<f64> {
    assert!(l_prime < l, "need l' < l, got l'={l_prime}, l={l}");
    let x0: Vec<Value> = features.iter().map(|f| DiffValue::leaf(Tensor::vector(f.clone()))).collect();
    let states = model.forward(graph, x0, l);
    let dim = features[0].len();
    let n = graph.n_nodes();
    let mut norms = vec![0.0f64; n];
    for a in 0..n {
        let mut block_sum = 0.0f64; // sum of |entry|^p
        for i in 0..dim {
            for layer in &states {
                for v in layer {
                    v.zero_grad();
                }
            }
            let coord = states[l][a].narrow(0, i, 1).sum_all();
            coord.backward().expect("scalar root");
            let grad = states[l_prime][b].grad();
            for &g in grad.data() {
                block_sum += g.abs().powf(p);
            }
        }
        norms[a] = block_sum.powf(1.0 / p);
    }
    norms
}

/// Spectral norm by power iteration on `WᵀW`.
pub fn spectral_norm(w: &Tensor64) -> f64 {
    let (r, c) = (w.shape()[0], w.shape()[1]);
    let mut v = vec![1.0 / (c as f64).sqrt(); c];
    let mut sigma = 0.0;
    for _ in 0..500 {
        // u = W v; v' = Wᵀ u
        let mut u = vec![0.0; r];
        for i in 0..r {
            for j in 0..c {
                u[i] += w.data()[i * c + j] * v[j];
            }
        }
        let mut nv = vec![0.0; c];
        for i in 0..r {
            for j in 0..c {
                nv[j] += w.data()[i * c + j] * u[i];
            }
        }
        let norm = nv.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for x in nv.iter_mut() {
            *x /= norm;
        }
        let new_sigma = norm.sqrt();
        if (new_sigma - sigma).abs() < 1e-14 {
            sigma = new_sigma;
            break;
        }
        sigma = new_sigma;
        v = nv;
    }
    sigma
}

fn check_regular(graph: &HeteroGraph) -> Result<usize, DiagError> {
    let mut histogram = std::collections::BTreeMap::new();
    for v in 0..graph.n_nodes() {
        *histogram.entry(graph.degree(v)).or_insert(0usize) += 1;
    }
    if histogram.len() != 1 {
        return Err(DiagError::NotRegular(histogram.into_iter().collect()));
    }
    Ok(*histogram.keys().next().expect("nonempty graph"))
}

#[derive(Clone, Debug, Serialize)]
pub struct LayerDecayReport {
    pub lhs: f64,
    pub rhs: f64,
    pub constant: f64,
    pub alpha: f64,
    pub c: f64,
    pub degree: usize,
    pub l: usize,
    pub l_prime: usize,
    pub source: NodeId,
    pub holds: bool,
}

/// Layer-decay check on a K-regular graph: per-layer Jacobian-norm energy
/// must contract by `alpha^2 c^2 K^2 / (K+1)^2`:
/// `sum_a ||dH^l_a/dH^{l'}_b||_p^2 <= C * sum_a ||dH^{l-1}_a/dH^{l'}_b||_p^2`.
pub fn theorem1_check(
    graph: &HeteroGraph,
    weight: Option<Tensor64>,
    activation: Activation,
    l: usize,
    l_prime: usize,
    b: NodeId,
    p: f64,
) -> Result<LayerDecayReport, DiagError> {
    assert!(l_prime < l && l >= 2, "need l' < l and l >= 2");
    let degree = check_regular(graph)?;
    let c = weight.as_ref().map(spectral_norm).unwrap_or(1.0);
    let alpha = activation.lipschitz();
    let model = ReferenceModel { rule: AggregationRule::NeighborsOverDegreePlusOne, weight, activation };
    let features: Vec<Vec<f64>> = (0..graph.n_nodes()).map(|v| graph.feature_row(v)).collect();
    let norms_l = jacobian_norms(&model, graph, &features, l, l_prime, b, p);
    let norms_prev = jacobian_norms(&model, graph, &features, l - 1, l_prime, b, p);
    let lhs: f64 = norms_l.iter().map(|x| x * x).sum();
    let rhs: f64 = norms_prev.iter().map(|x| x * x).sum();
    let k = degree as f64;
    let constant = alpha * alpha * c * c * k * k / ((k + 1.0) * (k + 1.0));
    let holds = lhs <= constant * rhs * (1.0 + 1e-9) + 1e-15;
    Ok(LayerDecayReport { lhs, rhs, constant, alpha, c, degree, l, l_prime, source: b, holds })
}

#[derive(Clone, Debug, Serialize)]
pub struct HopDecayReport {
    pub eta: f64,
    pub threshold: f64,
    pub precondition_met: bool,
    pub one_hop_sum: f64,
    pub two_hop_sum: f64,
    pub degree: usize,
    pub center: NodeId,
    /// None when the curvature precondition fails (report is informational).
    pub holds: Option<bool>,
}

/// Hop-decay check: on a K-regular graph whose minimum edge curvature
/// `eta` satisfies `eta >= 1/2 - 3/(2K)`, two identity-activation ball-mean
/// layers send at least as much Jacobian mass to one-hop neighbors as to
/// two-hop neighbors.
pub fn theorem2_check(graph: &HeteroGraph, center: NodeId, p: f64) -> Result<HopDecayReport, DiagError> {
    let degree = check_regular(graph)?;
    let curvature = curvature_report(graph)?;
    let eta = curvature.min_kappa;
    let threshold = 0.5 - 3.0 / (2.0 * degree as f64);
    let precondition_met = eta >= threshold - 1e-12;

    let model = ReferenceModel::parameter_free(AggregationRule::BallMean);
    let features: Vec<Vec<f64>> = (0..graph.n_nodes()).map(|v| graph.feature_row(v)).collect();
    let norms = jacobian_norms(&model, graph, &features, 2, 0, center, p);
    let rings = hop_rings(graph, center, 2);
    let one_hop_sum: f64 = rings.rings[0].iter().map(|&a| norms[a]).sum();
    let two_hop_sum: f64 = rings.rings[1].iter().map(|&a| norms[a]).sum();
    let holds = precondition_met.then(|| one_hop_sum >= two_hop_sum - 1e-12);
    Ok(HopDecayReport { eta, threshold, precondition_met, one_hop_sum, two_hop_sum, degree, center, holds })
}

/// Per-layer mean pairwise Euclidean distance, normalized by the layer-0
/// value (when nonzero).
pub fn oversmoothing_metric(layers: &[Vec<Vec<f64>>]) -> Vec<f64> {
    let raw: Vec<f64> = layers
        .iter()
        .map(|nodes| {
            let n = nodes.len();
            if n < 2 {
                return 0.0;
            }
            let mut total = 0.0;
            let mut pairs = 0usize;
            for i in 0..n {
                for j in (i + 1)..n {
                    let d: f64 = nodes[i]
                        .iter()
                        .zip(&nodes[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    total += d;
                    pairs += 1;
                }
            }
            total / pairs as f64
        })
        .collect();
    let base = raw[0];
    if base > 0.0 {
        raw.iter().map(|x| x / base).collect()
    } else {
        raw
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SmoothingReport {
    pub mean_aggregation: Vec<f64>,
    pub with_skips: Vec<f64>,
    pub without_skips: Vec<f64>,
}

/// Compare representation collapse across depth: the parameter-free mean
/// backbone versus the asynchronous aggregation with and without skips,
/// same graph and same seeded parameters.
pub fn smoothing_report(graph: &HeteroGraph, layers: usize, dim: usize, seed: u64) -> SmoothingReport {
    use crate::aggregate::{Model, ModelConfig};
    let mean_model = ReferenceModel::parameter_free(AggregationRule::BallMean);
    let mean_states = mean_model.forward_numeric(graph, layers);
    let mean_metric = oversmoothing_metric(&mean_states);

    let run_async = |skips: bool| {
        let cfg = ModelConfig { dim, state_dim: 4, hops: 2, layers, skips, ..Default::default() };
        let model = Model::new(graph, vec![], cfg, seed);
        let rings = crate::sample::rings_all(graph, 2);
        let contents = model.type_transform(graph);
        let h0: Vec<Value> = contents.iter().map(|c| model.content_aggregate(c)).collect();
        let state = model.async_aggregate(&rings, h0);
        oversmoothing_metric(&state.numeric())
    };

    SmoothingReport {
        mean_aggregation: mean_metric,
        with_skips: run_async(true),
        without_skips: run_async(false),
    }
}
