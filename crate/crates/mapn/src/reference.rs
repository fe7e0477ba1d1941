//! Independent slow-path reference implementations used by the verification
//! suites. These deliberately avoid the production code paths:
//! all-pairs shortest paths by Floyd-Warshall, the walk stationary
//! distribution by dense power iteration, and 1-Wasserstein distance by
//! exhaustive enumeration of transport-plan extreme points.

use std::collections::HashMap;

use crate::graph::{HeteroGraph, NodeId};

/// Dense all-pairs shortest-path distances on the undirected skeleton
/// (`usize::MAX` for unreachable pairs).
pub fn floyd_warshall(graph: &HeteroGraph) -> Vec<Vec<usize>> {
    let n = graph.n_nodes();
    const INF: usize = usize::MAX;
    let mut dist = vec![vec![INF; n]; n];
    for (v, row) in dist.iter_mut().enumerate() {
        row[v] = 0;
        for &w in graph.skeleton_neighbors(v) {
            row[w] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            if dist[i][k] == INF {
                continue;
            }
            for j in 0..n {
                if dist[k][j] == INF {
                    continue;
                }
                let via = dist[i][k] + dist[k][j];
                if via < dist[i][j] {
                    dist[i][j] = via;
                }
            }
        }
    }
    dist
}

/// Stationary distribution of the restart walk from `start` by power
/// iteration on the explicit transition matrix
/// `P(u, v) = p·[v = start] + (1-p)/deg(u)·[v ~ u]` (isolated `u` forces a
/// jump to `start`).
pub fn rwr_stationary(graph: &HeteroGraph, start: NodeId, restart_p: f64) -> Vec<f64> {
    let n = graph.n_nodes();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..100_000 {
        let mut next = vec![0.0f64; n];
        for u in 0..n {
            let mass = pi[u];
            if mass == 0.0 {
                continue;
            }
            let neighbors = graph.skeleton_neighbors(u);
            if neighbors.is_empty() {
                next[start] += mass;
            } else {
                next[start] += restart_p * mass;
                let share = (1.0 - restart_p) * mass / neighbors.len() as f64;
                for &w in neighbors {
                    next[w] += share;
                }
            }
        }
        let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if delta < 1e-13 {
            break;
        }
    }
    pi
}

/// Exact minimum transport cost between integer supply and demand vectors
/// under an integer cost matrix, by exhaustive enumeration of all integer
/// transport plans: row by row, every composition of the row's supply over
/// the remaining demands is tried, memoized on (row, remaining demands).
/// Intended for supports of at most ~6 entries with small integer masses.
pub fn min_transport_cost_exhaustive(supply: &[u64], demand: &[u64], cost: &[Vec<u64>]) -> u128 {
    assert_eq!(supply.iter().sum::<u64>(), demand.iter().sum::<u64>(), "unbalanced transport problem");
    let mut memo: HashMap<(usize, Vec<u64>), u128> = HashMap::new();

    /// Cheapest way to distribute `left` units of row `i` over columns
    /// `j..`, then solve the remaining rows.
    #[allow(clippy::too_many_arguments)]
    fn distribute(
        i: usize,
        j: usize,
        left: u64,
        supply: &[u64],
        demand: &mut Vec<u64>,
        cost: &[Vec<u64>],
        memo: &mut HashMap<(usize, Vec<u64>), u128>,
    ) -> u128 {
        if j == demand.len() {
            return if left == 0 { rows(i + 1, supply, demand, cost, memo) } else { u128::MAX };
        }
        // remaining columns must be able to absorb what is left
        let capacity: u64 = demand[j..].iter().sum();
        if capacity < left {
            return u128::MAX;
        }
        let mut best = u128::MAX;
        for amount in 0..=left.min(demand[j]) {
            demand[j] -= amount;
            let sub = distribute(i, j + 1, left - amount, supply, demand, cost, memo);
            demand[j] += amount;
            if sub != u128::MAX {
                let total = sub + amount as u128 * cost[i][j] as u128;
                best = best.min(total);
            }
        }
        best
    }

    fn rows(
        i: usize,
        supply: &[u64],
        demand: &mut Vec<u64>,
        cost: &[Vec<u64>],
        memo: &mut HashMap<(usize, Vec<u64>), u128>,
    ) -> u128 {
        if i == supply.len() {
            return 0; // balance guarantees demands are exhausted
        }
        if let Some(&cached) = memo.get(&(i, demand.clone())) {
            return cached;
        }
        let best = distribute(i, 0, supply[i], supply, demand, cost, memo);
        memo.insert((i, demand.clone()), best);
        best
    }

    rows(0, supply, &mut demand.to_vec(), cost, &mut memo)
}

/// Exhaustive 1-Wasserstein distance between the uniform neighborhood
/// measures of an edge's endpoints, using skeleton shortest-path ground
/// distances. The reference counterpart of the production flow solver.
pub fn w1_neighborhoods_exhaustive(graph: &HeteroGraph, a: NodeId, b: NodeId) -> f64 {
    let na = graph.skeleton_neighbors(a);
    let nb = graph.skeleton_neighbors(b);
    assert!(!na.is_empty() && !nb.is_empty(), "endpoint with empty neighborhood");
    let dist = floyd_warshall(graph);
    let cost: Vec<Vec<u64>> =
        na.iter().map(|&x| nb.iter().map(|&y| dist[x][y] as u64).collect()).collect();
    // uniform masses 1/|na| and 1/|nb| scaled to integers by |na|·|nb|
    let supply = vec![nb.len() as u64; na.len()];
    let demand = vec![na.len() as u64; nb.len()];
    let total = min_transport_cost_exhaustive(&supply, &demand, &cost);
    total as f64 / (na.len() as f64 * nb.len() as f64)
}
