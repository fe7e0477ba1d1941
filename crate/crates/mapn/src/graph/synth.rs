//! Seed-deterministic synthetic graphs: block models with planted
//! communities, a small academic-style heterogeneous generator, and the toy
//! structural families used by the diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GraphBuilder, GraphError, HeteroGraph};

/// Standard normal via Box-Muller.
fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn check_prob(p: f64) -> Result<(), GraphError> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(GraphError::InvalidProbability(p));
    }
    Ok(())
}

/// Class-mean feature vector: a shifted pattern per class.
fn class_mean(class: usize, n_classes: usize, dim: usize, separation: f64) -> Vec<f64> {
    (0..dim).map(|j| if j % n_classes == class { separation } else { 0.0 }).collect()
}

/// Two-parameter stochastic block model with class-correlated Gaussian
/// features. `p_in > p_out` gives a homophilous graph, `p_in < p_out` a
/// heterophilous one; contiguous blocks of `n_nodes / n_classes` nodes share
/// a class. Single node type `node`, single undirected relation `link`.
pub fn sbm(
    n_nodes: usize,
    n_classes: usize,
    p_in: f64,
    p_out: f64,
    feature_dim: usize,
    seed: u64,
) -> Result<HeteroGraph, GraphError> {
    sbm_with_noise(n_nodes, n_classes, p_in, p_out, feature_dim, 1.5, 1.0, seed)
}

/// Block model with explicit feature separation and noise scale.
pub fn sbm_with_noise(
    n_nodes: usize,
    n_classes: usize,
    p_in: f64,
    p_out: f64,
    feature_dim: usize,
    separation: f64,
    noise: f64,
    seed: u64,
) -> Result<HeteroGraph, GraphError> {
    check_prob(p_in)?;
    check_prob(p_out)?;
    if n_classes < 2 || n_nodes < n_classes {
        return Err(GraphError::InvalidSynthetic(format!(
            "need n_nodes >= n_classes >= 2, got {n_nodes} nodes, {n_classes} classes"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let class_of = |v: usize| (v * n_classes) / n_nodes;
    let mut b = GraphBuilder::new();
    for v in 0..n_nodes {
        b.add_node(&v.to_string(), "node")?;
        b.set_label(&v.to_string(), class_of(v))?;
    }
    for v in 0..n_nodes {
        let mean = class_mean(class_of(v), n_classes, feature_dim, separation);
        let row = mean.iter().map(|m| m + noise * gauss(&mut rng)).collect();
        b.set_feature_row(&v.to_string(), row)?;
    }
    for i in 0..n_nodes {
        for j in (i + 1)..n_nodes {
            let p = if class_of(i) == class_of(j) { p_in } else { p_out };
            if rng.gen_range(0.0..1.0) < p {
                b.add_edge(&i.to_string(), &j.to_string(), "link", None)?;
            }
        }
    }
    b.build()
}

/// Three node types (author/paper/venue), two undirected relations
/// (`writes`, `published_in`), planted communities across all types.
pub fn hetero_academic(
    n_nodes: usize,
    n_classes: usize,
    p_in: f64,
    p_out: f64,
    feature_dim: usize,
    seed: u64,
) -> Result<HeteroGraph, GraphError> {
    check_prob(p_in)?;
    check_prob(p_out)?;
    if n_classes < 2 || n_nodes < 3 * n_classes {
        return Err(GraphError::InvalidSynthetic(format!(
            "need n_nodes >= 3*n_classes and n_classes >= 2, got {n_nodes}/{n_classes}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_authors = (n_nodes * 2) / 5;
    let n_papers = (n_nodes * 2) / 5;
    let n_venues = n_nodes - n_authors - n_papers;

    let mut b = GraphBuilder::new();
    let mut names: Vec<(String, usize)> = Vec::new(); // (orig id, community)
    let add_group = |b: &mut GraphBuilder, prefix: &str, ty: &str, count: usize, names: &mut Vec<(String, usize)>| -> Result<(), GraphError> {
        for i in 0..count {
            let id = format!("{prefix}{i}");
            b.add_node(&id, ty)?;
            let community = (i * n_classes) / count;
            b.set_label(&id, community)?;
            names.push((id, community));
        }
        Ok(())
    };
    add_group(&mut b, "a", "author", n_authors, &mut names)?;
    add_group(&mut b, "p", "paper", n_papers, &mut names)?;
    add_group(&mut b, "v", "venue", n_venues, &mut names)?;

    // Feature dims differ per type to exercise the type-specific transforms.
    for (id, community) in &names {
        let dim = match id.as_bytes()[0] {
            b'a' => feature_dim,
            b'p' => feature_dim + 2,
            _ => feature_dim.div_ceil(2),
        };
        let mean = class_mean(*community, n_classes, dim, 1.5);
        let row = mean.iter().map(|m| m + gauss(&mut rng)).collect();
        b.set_feature_row(id, row)?;
    }

    // author-paper edges
    for ai in 0..n_authors {
        for pi in 0..n_papers {
            let (a, ca) = &names[ai];
            let (p, cp) = &names[n_authors + pi];
            let prob = if ca == cp { p_in } else { p_out };
            if rng.gen_range(0.0..1.0) < prob {
                b.add_edge(a, p, "writes", None)?;
            }
        }
    }
    // paper-venue edges
    for pi in 0..n_papers {
        for vi in 0..n_venues {
            let (p, cp) = &names[n_authors + pi];
            let (v, cv) = &names[n_authors + n_papers + vi];
            let prob = if cp == cv { p_in } else { p_out };
            if rng.gen_range(0.0..1.0) < prob {
                b.add_edge(p, v, "published_in", None)?;
            }
        }
    }
    b.build()
}

fn homogeneous_from_edges(
    n: usize,
    edges: &[(usize, usize)],
    feature_dim: usize,
    seed: u64,
) -> HeteroGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = GraphBuilder::new();
    for v in 0..n {
        b.add_node(&v.to_string(), "node").expect("fresh ids");
    }
    for v in 0..n {
        let row = (0..feature_dim).map(|_| gauss(&mut rng)).collect();
        b.set_feature_row(&v.to_string(), row).expect("fresh rows");
    }
    for &(s, d) in edges {
        b.add_edge(&s.to_string(), &d.to_string(), "link", None).expect("valid edge");
    }
    b.build().expect("valid toy graph")
}

pub fn cycle_graph(n: usize, feature_dim: usize, seed: u64) -> HeteroGraph {
    let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    homogeneous_from_edges(n, &edges, feature_dim, seed)
}

pub fn path_graph(n: usize, feature_dim: usize, seed: u64) -> HeteroGraph {
    let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
    homogeneous_from_edges(n, &edges, feature_dim, seed)
}

pub fn complete_graph(n: usize, feature_dim: usize, seed: u64) -> HeteroGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            edges.push((i, j));
        }
    }
    homogeneous_from_edges(n, &edges, feature_dim, seed)
}

/// Hub node 0 with `n - 1` leaves.
pub fn star_graph(n: usize, feature_dim: usize, seed: u64) -> HeteroGraph {
    let edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
    homogeneous_from_edges(n, &edges, feature_dim, seed)
}

/// Circulant graph on `n` nodes with symmetric connection offsets.
/// Offsets must be in `1..=n/2`; the offset `n/2` (n even) contributes a
/// single chord per node, so degree is `2*|offsets|` minus one per such
/// offset.
pub fn circulant_graph(n: usize, offsets: &[usize], feature_dim: usize, seed: u64) -> HeteroGraph {
    let mut edges = Vec::new();
    for &o in offsets {
        assert!(o >= 1 && o <= n / 2, "offset {o} out of range for n={n}");
        for i in 0..n {
            let j = (i + o) % n;
            if o * 2 == n && i >= j {
                continue; // diameter chord: add each once
            }
            edges.push((i, j));
        }
    }
    homogeneous_from_edges(n, &edges, feature_dim, seed)
}

/// Graph-classification corpus: cycles (label 0) versus stars (label 1) with
/// a normalized-degree channel plus Gaussian noise channels.
pub fn cycles_vs_stars_corpus(
    per_class: usize,
    nodes_per_graph: usize,
    noise_dim: usize,
    seed: u64,
) -> Vec<HeteroGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::with_capacity(per_class * 2);
    for label in 0..2usize {
        for g in 0..per_class {
            let n = nodes_per_graph + (g % 3); // slight size variation
            let edges: Vec<(usize, usize)> = if label == 0 {
                (0..n).map(|i| (i, (i + 1) % n)).collect()
            } else {
                (1..n).map(|i| (0, i)).collect()
            };
            let mut degree = vec![0usize; n];
            for &(s, d) in &edges {
                degree[s] += 1;
                degree[d] += 1;
            }
            let mut b = GraphBuilder::new();
            for v in 0..n {
                b.add_node(&v.to_string(), "node").unwrap();
            }
            for v in 0..n {
                let mut row = vec![degree[v] as f64 / n as f64];
                for _ in 0..noise_dim {
                    row.push(0.5 * gauss(&mut rng));
                }
                b.set_feature_row(&v.to_string(), row).unwrap();
            }
            for &(s, d) in &edges {
                b.add_edge(&s.to_string(), &d.to_string(), "link", None).unwrap();
            }
            b.set_graph_label(label);
            graphs.push(b.build().unwrap());
        }
    }
    graphs
}

/// Fraction of edges whose endpoints share a label.
pub fn same_label_edge_fraction(graph: &HeteroGraph) -> f64 {
    let labels = graph.labels().expect("labelled graph");
    let mut same = 0usize;
    let mut total = 0usize;
    for &(s, d, _) in graph.edges() {
        if let (Some(a), Some(b)) = (labels[s], labels[d]) {
            total += 1;
            if a == b {
                same += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        same as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::io::save_bundle;

    #[test]
    fn homophilous_sbm_has_more_within_class_edges() {
        let g = sbm(90, 3, 0.3, 0.02, 8, 7).unwrap();
        assert_eq!(g.n_nodes(), 90);
        let frac = same_label_edge_fraction(&g);
        assert!(frac > 0.5, "within-class fraction {frac} should dominate");
    }

    #[test]
    fn heterophilous_sbm_has_more_cross_class_edges() {
        let g = sbm(90, 3, 0.02, 0.3, 8, 7).unwrap();
        let frac = same_label_edge_fraction(&g);
        assert!(frac < 0.5, "within-class fraction {frac} should be minor");
    }

    #[test]
    fn invalid_probability_rejected() {
        assert!(matches!(sbm(10, 2, 1.5, 0.1, 4, 0), Err(GraphError::InvalidProbability(_))));
        assert!(matches!(sbm(10, 2, 0.5, -0.1, 4, 0), Err(GraphError::InvalidProbability(_))));
    }

    #[test]
    fn generators_are_seed_deterministic() {
        let a = sbm(40, 2, 0.4, 0.05, 4, 11).unwrap();
        let b = sbm(40, 2, 0.4, 0.05, 4, 11).unwrap();
        assert_eq!(a, b);

        // byte-identical bundles
        let ta = tempfile::tempdir().unwrap();
        let tb = tempfile::tempdir().unwrap();
        save_bundle(&a, ta.path()).unwrap();
        save_bundle(&b, tb.path()).unwrap();
        for name in ["nodes.tsv", "edges.tsv", "features/node.csv", "labels.tsv"] {
            let x = std::fs::read(ta.path().join(name)).unwrap();
            let y = std::fs::read(tb.path().join(name)).unwrap();
            assert_eq!(x, y, "{name} differs between identical seeds");
        }

        let c = sbm(40, 2, 0.4, 0.05, 4, 12).unwrap();
        assert_ne!(a, c, "different seeds should differ");
    }

    #[test]
    fn academic_generator_shapes() {
        let g = hetero_academic(30, 2, 0.3, 0.05, 4, 3).unwrap();
        assert_eq!(g.n_types(), 3);
        assert_eq!(g.n_relations(), 2);
        let authors = g.type_id("author").unwrap();
        let papers = g.type_id("paper").unwrap();
        let venues = g.type_id("venue").unwrap();
        assert_eq!(g.feature_dim(papers), g.feature_dim(authors) + 2);
        assert!(g.feature_dim(venues) < g.feature_dim(authors));
    }

    #[test]
    fn toy_families_have_expected_degrees() {
        let c = cycle_graph(8, 2, 0);
        assert!(c.skeleton_neighbors(3) == &[2, 4]);
        let s = star_graph(5, 2, 0);
        assert_eq!(s.degree(0), 4);
        assert_eq!(s.degree(1), 1);
        let k = complete_graph(4, 2, 0);
        assert_eq!(k.degree(0), 3);
        let circ = circulant_graph(8, &[1, 4], 2, 0);
        for v in 0..8 {
            assert_eq!(circ.degree(v), 3, "3-regular circulant");
        }
        let circ2 = circulant_graph(10, &[1, 2], 2, 0);
        for v in 0..10 {
            assert_eq!(circ2.degree(v), 4);
        }
    }

    #[test]
    fn corpus_labels_both_classes() {
        let corpus = cycles_vs_stars_corpus(3, 7, 2, 5);
        assert_eq!(corpus.len(), 6);
        assert_eq!(corpus.iter().filter(|g| g.graph_label() == Some(0)).count(), 3);
        assert_eq!(corpus.iter().filter(|g| g.graph_label() == Some(1)).count(), 3);
    }
}
