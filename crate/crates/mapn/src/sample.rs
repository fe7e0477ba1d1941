//! Walk-based sampling: random walk with restart, typed top-k neighbor
//! selection, meta-path-constrained walks, shortest-path hop rings, and
//! training triples.
//!
//! Reproducibility contract: every walker draws from its own counter-based
//! stream derived from `(seed, start node, walk index)`, and parallel
//! results are merged in start-node order, so outputs are identical for
//! identical `(graph, config, seed)` regardless of thread count.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{HeteroGraph, MetaPath, NodeId, TypeId};

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("walk start node {start} has type {got:?} but the meta-path anchors at {want:?}")]
    StartTypeMismatch { start: NodeId, got: String, want: String },
    #[error("negative sampling impossible: type {0:?} has a single node")]
    NegativeSamplingImpossible(String),
    #[error("invalid walk config: {0}")]
    InvalidConfig(String),
}

/// Random-walk and neighbor-selection settings.
#[derive(Clone, Debug)]
pub struct WalkConfig {
    /// Probability of returning to the start node at each step.
    pub restart_p: f64,
    /// Nodes per walk (including the start).
    pub walk_length: usize,
    pub walks_per_node: usize,
    /// Default top-k per node type.
    pub k_default: usize,
    /// Per-type overrides of `k_default`.
    pub k_per_type: BTreeMap<TypeId, usize>,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            restart_p: 0.5,
            walk_length: 100,
            walks_per_node: 10,
            k_default: 10,
            k_per_type: BTreeMap::new(),
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn k_for(&self, t: TypeId) -> usize {
        self.k_per_type.get(&t).copied().unwrap_or(self.k_default)
    }

    pub fn validate(&self) -> Result<(), SampleError> {
        if !(self.restart_p > 0.0 && self.restart_p < 1.0) {
            return Err(SampleError::InvalidConfig(format!(
                "restart_p must lie strictly in (0,1), got {}",
                self.restart_p
            )));
        }
        if self.walk_length == 0 {
            return Err(SampleError::InvalidConfig("walk_length must be >= 1".into()));
        }
        if self.k_default == 0 || self.k_per_type.values().any(|&k| k == 0) {
            return Err(SampleError::InvalidConfig("every k must be >= 1".into()));
        }
        Ok(())
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Independent stream for walker `(a, b)` of a seeded run.
pub fn stream_rng(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    let s = splitmix64(seed ^ splitmix64(a.wrapping_add(0x51ed_2701)) ^ splitmix64(b.wrapping_mul(0x9e37_79b9)));
    ChaCha8Rng::seed_from_u64(s)
}

/// One random walk with restart of `cfg.walk_length` nodes starting at
/// `start`. At each step the walker returns to `start` with probability
/// `restart_p`, otherwise moves uniformly over the current node's skeleton
/// neighbors (all relations pooled); an isolated current node forces
/// restart.
pub fn rwr_walk(graph: &HeteroGraph, start: NodeId, cfg: &WalkConfig, rng: &mut ChaCha8Rng) -> Vec<NodeId> {
    let mut walk = Vec::with_capacity(cfg.walk_length);
    walk.push(start);
    let mut current = start;
    for _ in 1..cfg.walk_length {
        let neighbors = graph.skeleton_neighbors(current);
        let next = if neighbors.is_empty() || rng.gen_range(0.0..1.0) < cfg.restart_p {
            start
        } else {
            neighbors[rng.gen_range(0..neighbors.len())]
        };
        walk.push(next);
        current = next;
    }
    walk
}

/// All walks for one start node, each on its own derived stream.
pub fn walks_for_node(graph: &HeteroGraph, start: NodeId, cfg: &WalkConfig) -> Vec<Vec<NodeId>> {
    (0..cfg.walks_per_node)
        .map(|w| {
            let mut rng = stream_rng(cfg.seed, start as u64, w as u64);
            rwr_walk(graph, start, cfg, &mut rng)
        })
        .collect()
}

/// Per-type neighbor list of one node.
#[derive(Clone, Debug, PartialEq)]
pub struct TypedNeighbors {
    /// `(node, visit count)`, sorted count-descending then id-ascending,
    /// padded cyclically to the configured k.
    pub items: Vec<(NodeId, u32)>,
    /// True when fewer distinct nodes were visited than requested and the
    /// list was padded by resampling (or is empty).
    pub padded: bool,
}

/// Per-node, per-type top-k neighbor lists from walk visit counts.
#[derive(Clone, Debug, PartialEq)]
pub struct TypedNeighborSet {
    pub owner: NodeId,
    pub by_type: BTreeMap<TypeId, TypedNeighbors>,
}

impl TypedNeighborSet {
    /// Neighbor ids of one type (empty when that type was never visited).
    pub fn of_type(&self, t: TypeId) -> &[(NodeId, u32)] {
        self.by_type.get(&t).map(|l| l.items.as_slice()).unwrap_or(&[])
    }
}

/// Count typed visits across walks and keep the top `k_A` per type.
/// Ties break by ascending node id; deficits pad by cyclic resampling; a
/// type with no visits at all yields an empty, padded-flagged list.
pub fn typed_top_k(
    walks: &[Vec<NodeId>],
    owner: NodeId,
    graph: &HeteroGraph,
    cfg: &WalkConfig,
) -> TypedNeighborSet {
    let mut counts: BTreeMap<NodeId, u32> = BTreeMap::new();
    for walk in walks {
        for &v in walk {
            if v != owner {
                *counts.entry(v).or_insert(0) += 1;
            }
        }
    }
    let mut per_type: BTreeMap<TypeId, Vec<(NodeId, u32)>> = BTreeMap::new();
    for (&v, &c) in &counts {
        per_type.entry(graph.node_type(v)).or_default().push((v, c));
    }
    let mut by_type = BTreeMap::new();
    for t in 0..graph.n_types() {
        let k = cfg.k_for(t);
        let mut items = per_type.remove(&t).unwrap_or_default();
        items.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        items.truncate(k);
        let distinct = items.len();
        if distinct == 0 {
            by_type.insert(t, TypedNeighbors { items, padded: true });
            continue;
        }
        let mut padded = false;
        while items.len() < k {
            let clone = items[items.len() % distinct];
            items.push(clone);
            padded = true;
        }
        by_type.insert(t, TypedNeighbors { items, padded });
    }
    TypedNeighborSet { owner, by_type }
}

/// Typed top-k neighbor sets for every node, walked in parallel and merged
/// in node order.
pub fn sample_all(graph: &HeteroGraph, cfg: &WalkConfig) -> Vec<TypedNeighborSet> {
    (0..graph.n_nodes())
        .into_par_iter()
        .map(|v| {
            let walks = walks_for_node(graph, v, cfg);
            typed_top_k(&walks, v, graph, cfg)
        })
        .collect()
}

/// Up to `limit` walk instances conforming to the meta-path's type/relation
/// pattern. Dead ends abort the instance; successors are chosen uniformly
/// among pattern-valid neighbors.
pub fn meta_path_walk(
    graph: &HeteroGraph,
    start: NodeId,
    path: &MetaPath,
    limit: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<NodeId>>, SampleError> {
    if graph.node_type(start) != path.anchor_type() {
        return Err(SampleError::StartTypeMismatch {
            start,
            got: graph.type_name(graph.node_type(start)).to_string(),
            want: graph.type_name(path.anchor_type()).to_string(),
        });
    }
    let mut instances = Vec::new();
    let mut candidates: Vec<NodeId> = Vec::new();
    for _ in 0..limit {
        let mut walk = vec![start];
        let mut current = start;
        let mut dead = false;
        for (i, &rel) in path.relations.iter().enumerate() {
            let want_type = path.node_types[i + 1];
            candidates.clear();
            candidates.extend(
                graph.rel_neighbors(rel, current).iter().copied().filter(|&w| graph.node_type(w) == want_type),
            );
            if candidates.is_empty() {
                dead = true;
                break;
            }
            current = candidates[rng.gen_range(0..candidates.len())];
            walk.push(current);
        }
        if !dead {
            instances.push(walk);
        }
    }
    Ok(instances)
}

/// Nodes grouped by exact shortest-path distance from `center` on the
/// type-erased undirected skeleton; `rings[i]` holds distance `i + 1`,
/// unreachable rings are empty.
#[derive(Clone, Debug, PartialEq)]
pub struct HopRings {
    pub center: NodeId,
    pub rings: Vec<Vec<NodeId>>,
}

pub fn hop_rings(graph: &HeteroGraph, center: NodeId, hops: usize) -> HopRings {
    assert!(hops >= 1, "hop count must be >= 1");
    let mut dist = vec![usize::MAX; graph.n_nodes()];
    dist[center] = 0;
    let mut frontier = vec![center];
    let mut rings = Vec::with_capacity(hops);
    for depth in 1..=hops {
        let mut next = Vec::new();
        for &v in &frontier {
            for &w in graph.skeleton_neighbors(v) {
                if dist[w] == usize::MAX {
                    dist[w] = depth;
                    next.push(w);
                }
            }
        }
        next.sort_unstable();
        rings.push(next.clone());
        frontier = next;
    }
    HopRings { center, rings }
}

/// Hop rings for every node, in parallel.
pub fn rings_all(graph: &HeteroGraph, hops: usize) -> Vec<HopRings> {
    (0..graph.n_nodes()).into_par_iter().map(|v| hop_rings(graph, v, hops)).collect()
}

/// Training triples `(a, b, b')` from meta-path walks.
#[derive(Clone, Debug, PartialEq)]
pub struct TripleSet {
    pub path_name: String,
    pub triples: Vec<(NodeId, NodeId, NodeId)>,
}

/// Collect triples: for each meta-path walk from each anchor node, every
/// ordered pair `(a, b)` of same-walk nodes within `window` positions whose
/// `b` has the path's terminal type emits `negatives_per_positive` triples;
/// `b'` is drawn uniformly from same-type nodes excluding `b`.
pub fn sample_triples(
    graph: &HeteroGraph,
    path: &MetaPath,
    window: usize,
    negatives_per_positive: usize,
    cfg: &WalkConfig,
) -> Result<TripleSet, SampleError> {
    let terminal = path.terminal_type();
    let anchors: Vec<NodeId> = graph.nodes_of_type(path.anchor_type()).to_vec();
    let per_anchor: Vec<Result<Vec<(NodeId, NodeId, NodeId)>, SampleError>> = anchors
        .par_iter()
        .map(|&a| {
            let mut walk_rng = stream_rng(cfg.seed, a as u64, 0x77a1);
            let mut neg_rng = stream_rng(cfg.seed, a as u64, 0x9e97);
            let walks = meta_path_walk(graph, a, path, cfg.walks_per_node, &mut walk_rng)?;
            let mut triples = Vec::new();
            if window == 0 {
                return Ok(triples);
            }
            for walk in &walks {
                for i in 0..walk.len() {
                    for j in 0..walk.len() {
                        if i == j || i.abs_diff(j) > window {
                            continue;
                        }
                        let (a_node, b_node) = (walk[i], walk[j]);
                        if graph.node_type(b_node) != terminal {
                            continue;
                        }
                        let pool = graph.nodes_of_type(terminal);
                        if pool.len() < 2 {
                            return Err(SampleError::NegativeSamplingImpossible(
                                graph.type_name(terminal).to_string(),
                            ));
                        }
                        for _ in 0..negatives_per_positive {
                            let neg = loop {
                                let cand = pool[neg_rng.gen_range(0..pool.len())];
                                if cand != b_node {
                                    break cand;
                                }
                            };
                            triples.push((a_node, b_node, neg));
                        }
                    }
                }
            }
            Ok(triples)
        })
        .collect();
    let mut triples = Vec::new();
    for r in per_anchor {
        triples.extend(r?);
    }
    Ok(TripleSet { path_name: path.name.clone(), triples })
}

/// TSV export `owner<TAB>type<TAB>neighbor<TAB>count` of sampled neighbor
/// sets.
pub fn neighbors_tsv(graph: &HeteroGraph, samples: &[TypedNeighborSet]) -> String {
    let mut out = String::new();
    for s in samples {
        for (&t, list) in &s.by_type {
            for &(v, c) in &list.items {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}",
                    graph.original_id(s.owner),
                    graph.type_name(t),
                    graph.original_id(v),
                    c
                );
            }
        }
    }
    out
}

/// TSV export `path<TAB>a<TAB>b<TAB>b_neg` of training triples.
pub fn triples_tsv(graph: &HeteroGraph, sets: &[TripleSet]) -> String {
    let mut out = String::new();
    for set in sets {
        for &(a, b, neg) in &set.triples {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                set.path_name,
                graph.original_id(a),
                graph.original_id(b),
                graph.original_id(neg)
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::synth::{complete_graph, path_graph, star_graph};
    use crate::graph::GraphBuilder;
    use crate::reference;
    use proptest::prelude::*;

    fn single_node_graph() -> HeteroGraph {
        let mut b = GraphBuilder::new();
        b.add_node("v", "n").unwrap();
        b.set_feature_row("v", vec![0.0]).unwrap();
        b.build().unwrap()
    }

    #[test]
    fn isolated_node_walk_stays_home() {
        let g = single_node_graph();
        let cfg = WalkConfig { walk_length: 5, ..Default::default() };
        let mut rng = stream_rng(0, 0, 0);
        assert_eq!(rwr_walk(&g, 0, &cfg, &mut rng), vec![0, 0, 0, 0, 0]);
    }

    #[test]
    fn restart_probability_near_one_pins_walk_to_start() {
        let g = path_graph(4, 1, 0);
        let cfg = WalkConfig { restart_p: 1.0 - 1e-15, walk_length: 16, ..Default::default() };
        let mut rng = stream_rng(7, 1, 0);
        let walk = rwr_walk(&g, 1, &cfg, &mut rng);
        assert!(walk.iter().all(|&v| v == 1), "{walk:?}");
    }

    #[test]
    fn empirical_visits_match_stationary_distribution() {
        // 10-node seeded graph; one long walk against power iteration.
        let g = crate::graph::synth::sbm(10, 2, 0.6, 0.3, 2, 123).unwrap();
        let cfg = WalkConfig { restart_p: 0.3, walk_length: 100_000, ..Default::default() };
        let start = 0;
        let mut rng = stream_rng(99, start as u64, 0);
        let walk = rwr_walk(&g, start, &cfg, &mut rng);
        let mut freq = vec![0.0f64; g.n_nodes()];
        for &v in &walk {
            freq[v] += 1.0 / walk.len() as f64;
        }
        let pi = reference::rwr_stationary(&g, start, cfg.restart_p);
        let tv: f64 = 0.5 * freq.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum::<f64>();
        assert!(tv < 0.02, "total variation {tv}");
    }

    #[test]
    fn per_step_distribution_matches_restart_mixture() {
        let g = complete_graph(6, 1, 0);
        let restart_p = 0.4;
        let start = 0;
        let current = 3; // fix the source state by hand
        let mut counts = vec![0.0f64; g.n_nodes()];
        let trials = 10_000;
        for t in 0..trials {
            let mut rng = stream_rng(5, current as u64, t as u64);
            let neighbors = g.skeleton_neighbors(current);
            let next = if rng.gen_range(0.0..1.0) < restart_p {
                start
            } else {
                neighbors[rng.gen_range(0..neighbors.len())]
            };
            counts[next] += 1.0 / trials as f64;
        }
        let mut expect = vec![0.0f64; g.n_nodes()];
        expect[start] += restart_p;
        let nbrs = g.skeleton_neighbors(current);
        for &w in nbrs {
            expect[w] += (1.0 - restart_p) / nbrs.len() as f64;
        }
        let tv: f64 = 0.5 * counts.iter().zip(&expect).map(|(a, b)| (a - b).abs()).sum::<f64>();
        assert!(tv < 0.03, "total variation {tv}");
    }

    fn counted_walks(counts: &[(NodeId, u32)]) -> Vec<Vec<NodeId>> {
        let mut walk = vec![0];
        for &(v, c) in counts {
            for _ in 0..c {
                walk.push(v);
            }
        }
        vec![walk]
    }

    fn line_graph(n: usize) -> HeteroGraph {
        path_graph(n, 1, 0)
    }

    #[test]
    fn top_k_orders_by_count_then_id() {
        let g = line_graph(5);
        let cfg = WalkConfig { k_default: 2, ..Default::default() };
        let walks = counted_walks(&[(1, 5), (2, 3), (3, 1)]);
        let set = typed_top_k(&walks, 0, &g, &cfg);
        let items = set.of_type(0);
        assert_eq!(items.iter().map(|x| x.0).collect::<Vec<_>>(), vec![1, 2]);
        assert!(!set.by_type[&0].padded);
    }

    #[test]
    fn top_k_tie_breaks_by_ascending_id() {
        let g = line_graph(5);
        let cfg = WalkConfig { k_default: 1, ..Default::default() };
        let walks = counted_walks(&[(3, 3), (2, 3)]);
        let set = typed_top_k(&walks, 0, &g, &cfg);
        assert_eq!(set.of_type(0)[0].0, 2);
    }

    #[test]
    fn top_k_pads_cyclically_and_flags() {
        let g = line_graph(5);
        let cfg = WalkConfig { k_default: 3, ..Default::default() };
        let walks = counted_walks(&[(2, 2)]);
        let set = typed_top_k(&walks, 0, &g, &cfg);
        let items = set.of_type(0);
        assert_eq!(items.iter().map(|x| x.0).collect::<Vec<_>>(), vec![2, 2, 2]);
        assert!(set.by_type[&0].padded);
    }

    #[test]
    fn top_k_empty_type_flagged() {
        let g = line_graph(3);
        let cfg = WalkConfig::default();
        let set = typed_top_k(&[vec![0, 0, 0]], 0, &g, &cfg);
        assert!(set.of_type(0).is_empty());
        assert!(set.by_type[&0].padded);
    }

    #[test]
    fn top_k_invariant_to_walk_order() {
        let g = line_graph(6);
        let cfg = WalkConfig { k_default: 3, ..Default::default() };
        let w1 = vec![vec![0, 1, 2], vec![0, 3, 1], vec![0, 4, 4]];
        let mut w2 = w1.clone();
        w2.reverse();
        assert_eq!(typed_top_k(&w1, 0, &g, &cfg), typed_top_k(&w2, 0, &g, &cfg));
    }

    fn bipartite_graph() -> HeteroGraph {
        let mut b = GraphBuilder::new();
        for i in 0..3 {
            b.add_node(&format!("a{i}"), "A").unwrap();
        }
        for i in 0..3 {
            b.add_node(&format!("b{i}"), "B").unwrap();
        }
        for i in 0..3 {
            b.set_feature_row(&format!("a{i}"), vec![0.0]).unwrap();
            b.set_feature_row(&format!("b{i}"), vec![0.0]).unwrap();
        }
        for i in 0..3 {
            for j in 0..3 {
                b.add_edge(&format!("a{i}"), &format!("b{j}"), "r", None).unwrap();
            }
        }
        b.build().unwrap()
    }

    #[test]
    fn meta_path_walk_unique_instance() {
        let mut b = GraphBuilder::new();
        b.add_node("a", "A").unwrap();
        b.add_node("b", "B").unwrap();
        b.add_edge("a", "b", "R", None).unwrap();
        b.set_feature_row("a", vec![0.0]).unwrap();
        b.set_feature_row("b", vec![0.0]).unwrap();
        let g = b.build().unwrap();
        let path = MetaPath::parse("A/R/B", &g).unwrap();
        let mut rng = stream_rng(1, 0, 0);
        let walks = meta_path_walk(&g, 0, &path, 3, &mut rng).unwrap();
        assert_eq!(walks, vec![vec![0, 1], vec![0, 1], vec![0, 1]]);
    }

    #[test]
    fn meta_path_walk_wrong_start_type() {
        let g = bipartite_graph();
        let path = MetaPath::parse("A/r/B", &g).unwrap();
        let b0 = g.nodes_of_type(g.type_id("B").unwrap())[0];
        let mut rng = stream_rng(1, 0, 0);
        assert!(matches!(
            meta_path_walk(&g, b0, &path, 1, &mut rng),
            Err(SampleError::StartTypeMismatch { .. })
        ));
    }

    #[test]
    fn meta_path_endpoints_uniform_on_complete_bipartite() {
        let g = bipartite_graph();
        let path = MetaPath::parse("A/r/B", &g).unwrap();
        let mut rng = stream_rng(42, 0, 0);
        let walks = meta_path_walk(&g, 0, &path, 10_000, &mut rng).unwrap();
        let mut freq = BTreeMap::new();
        for w in &walks {
            *freq.entry(w[1]).or_insert(0.0f64) += 1.0 / walks.len() as f64;
        }
        // exact enumeration: 3 instances, uniform 1/3 each
        assert_eq!(freq.len(), 3);
        for (_, f) in freq {
            assert!((f - 1.0 / 3.0).abs() < 0.05, "endpoint frequency {f}");
        }
    }

    #[test]
    fn hop_rings_on_path_and_star() {
        let g = path_graph(3, 1, 0);
        let rings = hop_rings(&g, 0, 2);
        assert_eq!(rings.rings, vec![vec![1], vec![2]]);

        let s = star_graph(5, 1, 0);
        let rings = hop_rings(&s, 0, 2);
        assert_eq!(rings.rings[0], vec![1, 2, 3, 4]);
        assert!(rings.rings[1].is_empty());
    }

    #[test]
    fn hop_rings_match_floyd_warshall_on_random_graph() {
        let g = crate::graph::synth::sbm(50, 3, 0.15, 0.05, 2, 77).unwrap();
        let dist = reference::floyd_warshall(&g);
        for center in 0..g.n_nodes() {
            let rings = hop_rings(&g, center, 4);
            for (i, ring) in rings.rings.iter().enumerate() {
                let want: Vec<NodeId> =
                    (0..g.n_nodes()).filter(|&v| dist[center][v] == (i + 1)).collect();
                assert_eq!(ring, &want, "center {center} ring {i}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn hop_rings_equal_fw_partition_on_small_graphs(n in 4usize..24, p in 0.05f64..0.6, seed in 0u64..500) {
            let g = crate::graph::synth::sbm(n, 2, p, p * 0.5, 1, seed).unwrap();
            let dist = reference::floyd_warshall(&g);
            let hops = 5;
            for center in 0..g.n_nodes() {
                let rings = hop_rings(&g, center, hops);
                for (i, ring) in rings.rings.iter().enumerate() {
                    let want: Vec<NodeId> = (0..g.n_nodes()).filter(|&v| dist[center][v] == i + 1).collect();
                    prop_assert_eq!(ring.clone(), want);
                }
            }
        }
    }

    #[test]
    fn triples_forced_negative() {
        // A--B with exactly two B-type nodes: the negative is forced.
        let mut b = GraphBuilder::new();
        b.add_node("a", "A").unwrap();
        b.add_node("b", "B").unwrap();
        b.add_node("b2", "B").unwrap();
        b.add_edge("a", "b", "R", None).unwrap();
        for id in ["a", "b", "b2"] {
            b.set_feature_row(id, vec![0.0]).unwrap();
        }
        let g = b.build().unwrap();
        let path = MetaPath::parse("A/R/B", &g).unwrap();
        let cfg = WalkConfig { walks_per_node: 1, ..Default::default() };
        let set = sample_triples(&g, &path, 1, 1, &cfg).unwrap();
        assert_eq!(set.triples, vec![(0, 1, 2)]);
    }

    #[test]
    fn triples_window_zero_empty() {
        let g = bipartite_graph();
        let path = MetaPath::parse("A/r/B", &g).unwrap();
        let set = sample_triples(&g, &path, 0, 1, &WalkConfig::default()).unwrap();
        assert!(set.triples.is_empty());
    }

    #[test]
    fn triples_single_node_type_errors() {
        let mut b = GraphBuilder::new();
        b.add_node("a", "A").unwrap();
        b.add_node("b", "B").unwrap();
        b.add_edge("a", "b", "R", None).unwrap();
        b.set_feature_row("a", vec![0.0]).unwrap();
        b.set_feature_row("b", vec![0.0]).unwrap();
        let g = b.build().unwrap();
        let path = MetaPath::parse("A/R/B", &g).unwrap();
        assert!(matches!(
            sample_triples(&g, &path, 1, 1, &WalkConfig::default()),
            Err(SampleError::NegativeSamplingImpossible(_))
        ));
    }

    #[test]
    fn negative_draws_uniform_over_eligible() {
        let g = bipartite_graph(); // 3 B-nodes; negatives exclude the positive
        let path = MetaPath::parse("A/r/B", &g).unwrap();
        let cfg = WalkConfig { walks_per_node: 4000, seed: 3, ..Default::default() };
        let set = sample_triples(&g, &path, 1, 1, &cfg).unwrap();
        let mut freq: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
        let mut totals: BTreeMap<NodeId, f64> = BTreeMap::new();
        for &(_, b, neg) in &set.triples {
            *freq.entry((b, neg)).or_insert(0.0) += 1.0;
            *totals.entry(b).or_insert(0.0) += 1.0;
        }
        for ((b, neg), count) in freq {
            assert_ne!(b, neg, "negative equals positive");
            let f = count / totals[&b];
            assert!((f - 0.5).abs() < 0.05, "negative frequency {f} for ({b},{neg})");
        }
    }

    #[test]
    fn sampling_reproducible_across_thread_counts() {
        let g = crate::graph::synth::sbm(30, 2, 0.3, 0.1, 2, 5).unwrap();
        let cfg = WalkConfig { walk_length: 20, walks_per_node: 4, seed: 9, ..Default::default() };
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = pool1.install(|| sample_all(&g, &cfg));
        let b = pool4.install(|| sample_all(&g, &cfg));
        assert_eq!(a, b);

        let path = MetaPath::parse("node/link/node", &g).unwrap();
        let ta = pool1.install(|| sample_triples(&g, &path, 2, 2, &cfg).unwrap());
        let tb = pool4.install(|| sample_triples(&g, &path, 2, 2, &cfg).unwrap());
        assert_eq!(ta, tb);
    }

    #[test]
    fn config_validation() {
        let mut cfg = WalkConfig { restart_p: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg.restart_p = 0.5;
        cfg.walk_length = 0;
        assert!(cfg.validate().is_err());
        cfg.walk_length = 5;
        cfg.k_default = 0;
        assert!(cfg.validate().is_err());
    }
}
