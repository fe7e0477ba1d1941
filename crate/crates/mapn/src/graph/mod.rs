//! Immutable heterogeneous graph storage and validation.
//!
//! A [`HeteroGraph`] holds typed nodes with dense integer ids, per-relation
//! adjacency (forward and reverse), per-type dense feature matrices, and
//! optional node/graph labels. Construction goes through [`GraphBuilder`],
//! which validates every invariant; after that the graph is immutable and
//! safe to share across threads.

pub mod io;
pub mod lappe;
pub mod synth;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::Tensor64;

pub type NodeId = usize;
pub type TypeId = usize;
pub type RelId = usize;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("duplicate node id {0:?}")]
    DuplicateNode(String),
    #[error("unknown node {id:?} referenced by {context}")]
    UnknownNode { id: String, context: String },
    #[error("{path}:{line}: malformed line: {msg}")]
    MalformedLine { path: String, line: usize, msg: String },
    #[error("feature dimension mismatch for type {type_name:?}: expected {expected}, got {got} (node {node:?})")]
    FeatureDim { type_name: String, expected: usize, got: usize, node: String },
    #[error("node {0:?} has no feature row")]
    MissingFeature(String),
    #[error("node {0:?} has more than one feature row")]
    DuplicateFeature(String),
    #[error("relation {0:?} declared both directed and undirected")]
    DirectionConflict(String),
    #[error("unknown type {0:?}")]
    UnknownType(String),
    #[error("unknown relation {0:?}")]
    UnknownRelation(String),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("invalid synthetic parameters: {0}")]
    InvalidSynthetic(String),
    #[error("positional encoding k={k} too large: {available} usable eigenvectors ({components} components, {n} nodes)")]
    KTooLarge { k: usize, available: usize, components: usize, n: usize },
    #[error("graph has no nodes")]
    Empty,
    #[error("meta-path {0}: {1}")]
    BadMetaPath(String, String),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad manifest: {0}")]
    Manifest(String),
}

/// Typed multigraph with dense node ids `0..n`, immutable after build.
#[derive(Clone, Debug, PartialEq)]
pub struct HeteroGraph {
    node_types: Vec<TypeId>,
    type_names: Vec<String>,
    relation_names: Vec<String>,
    relation_directed: Vec<bool>,
    edges: Vec<(NodeId, NodeId, RelId)>,
    rel_out: Vec<Vec<Vec<NodeId>>>,
    rel_in: Vec<Vec<Vec<NodeId>>>,
    skeleton: Vec<Vec<NodeId>>,
    features: Vec<Tensor64>,
    type_rows: Vec<usize>,
    type_members: Vec<Vec<NodeId>>,
    labels: Option<Vec<Option<usize>>>,
    graph_label: Option<usize>,
    original_ids: Vec<String>,
}

impl HeteroGraph {
    pub fn n_nodes(&self) -> usize {
        self.node_types.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_types(&self) -> usize {
        self.type_names.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relation_names.len()
    }

    pub fn node_type(&self, v: NodeId) -> TypeId {
        self.node_types[v]
    }

    pub fn type_name(&self, t: TypeId) -> &str {
        &self.type_names[t]
    }

    pub fn type_names(&self) -> &[String] {
        &self.type_names
    }

    pub fn relation_name(&self, r: RelId) -> &str {
        &self.relation_names[r]
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relation_names
    }

    pub fn type_id(&self, name: &str) -> Option<TypeId> {
        self.type_names.iter().position(|n| n == name)
    }

    pub fn relation_id(&self, name: &str) -> Option<RelId> {
        self.relation_names.iter().position(|n| n == name)
    }

    pub fn is_directed(&self, r: RelId) -> bool {
        self.relation_directed[r]
    }

    pub fn nodes_of_type(&self, t: TypeId) -> &[NodeId] {
        &self.type_members[t]
    }

    /// Declared edges in insertion order.
    pub fn edges(&self) -> &[(NodeId, NodeId, RelId)] {
        &self.edges
    }

    /// Forward neighbors of `v` under relation `r` (symmetric for
    /// undirected relations).
    pub fn rel_neighbors(&self, r: RelId, v: NodeId) -> &[NodeId] {
        &self.rel_out[r][v]
    }

    /// Reverse neighbors of `v` under relation `r`.
    pub fn rel_neighbors_rev(&self, r: RelId, v: NodeId) -> &[NodeId] {
        &self.rel_in[r][v]
    }

    /// Neighbors on the type-erased undirected skeleton (deduplicated,
    /// sorted, self loops removed).
    pub fn skeleton_neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.skeleton[v]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.skeleton[v].len()
    }

    pub fn features_of_type(&self, t: TypeId) -> &Tensor64 {
        &self.features[t]
    }

    pub fn feature_dim(&self, t: TypeId) -> usize {
        self.features[t].shape()[1]
    }

    /// Row index of `v` within its type's feature matrix.
    pub fn type_row(&self, v: NodeId) -> usize {
        self.type_rows[v]
    }

    pub fn feature_row(&self, v: NodeId) -> Vec<f64> {
        let t = self.node_types[v];
        let m = &self.features[t];
        let d = m.shape()[1];
        let r = self.type_rows[v];
        m.data()[r * d..(r + 1) * d].to_vec()
    }

    pub fn labels(&self) -> Option<&[Option<usize>]> {
        self.labels.as_deref()
    }

    pub fn label(&self, v: NodeId) -> Option<usize> {
        self.labels.as_ref().and_then(|l| l[v])
    }

    pub fn graph_label(&self) -> Option<usize> {
        self.graph_label
    }

    pub fn original_id(&self, v: NodeId) -> &str {
        &self.original_ids[v]
    }

    /// Observed (source type, target type) pairs for relation `r`.
    pub fn relation_schema(&self, r: RelId) -> Vec<(TypeId, TypeId)> {
        let mut pairs: Vec<(TypeId, TypeId)> = Vec::new();
        for v in 0..self.n_nodes() {
            for &w in &self.rel_out[r][v] {
                let p = (self.node_types[v], self.node_types[w]);
                if !pairs.contains(&p) {
                    pairs.push(p);
                }
            }
        }
        pairs.sort_unstable();
        pairs
    }

    /// New graph with `extra` (one row per node) appended to every node's
    /// feature vector; used to attach positional encodings.
    pub fn append_node_features(&self, extra: &Tensor64) -> HeteroGraph {
        assert_eq!(extra.shape()[0], self.n_nodes(), "one extra row per node required");
        let k = extra.shape()[1];
        let mut g = self.clone();
        for (t, members) in self.type_members.iter().enumerate() {
            let old = &self.features[t];
            let d = old.shape()[1];
            let mut data = Vec::with_capacity(members.len() * (d + k));
            for (row, &v) in members.iter().enumerate() {
                data.extend_from_slice(&old.data()[row * d..(row + 1) * d]);
                data.extend_from_slice(&extra.data()[v * k..(v + 1) * k]);
            }
            g.features[t] = Tensor64::matrix(members.len(), d + k, data);
        }
        g
    }
}

/// Alternating node-type / relation-type pattern constraining walks.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaPath {
    pub name: String,
    pub node_types: Vec<TypeId>,
    pub relations: Vec<RelId>,
}

impl MetaPath {
    pub fn new(name: impl Into<String>, node_types: Vec<TypeId>, relations: Vec<RelId>) -> Self {
        MetaPath { name: name.into(), node_types, relations }
    }

    /// Parse `"author/writes/paper/writes/author"` against a graph's type
    /// and relation names.
    pub fn parse(spec: &str, graph: &HeteroGraph) -> Result<Self, GraphError> {
        let parts: Vec<&str> = spec.split('/').collect();
        if parts.len() < 3 || parts.len() % 2 == 0 {
            return Err(GraphError::BadMetaPath(
                spec.to_string(),
                "expected alternating type/relation names type/rel/type/...".to_string(),
            ));
        }
        let mut node_types = Vec::new();
        let mut relations = Vec::new();
        for (i, part) in parts.iter().enumerate() {
            if i % 2 == 0 {
                node_types.push(
                    graph.type_id(part).ok_or_else(|| GraphError::UnknownType(part.to_string()))?,
                );
            } else {
                relations.push(
                    graph
                        .relation_id(part)
                        .ok_or_else(|| GraphError::UnknownRelation(part.to_string()))?,
                );
            }
        }
        let path = MetaPath { name: spec.to_string(), node_types, relations };
        path.validate(graph)?;
        Ok(path)
    }

    pub fn anchor_type(&self) -> TypeId {
        self.node_types[0]
    }

    pub fn terminal_type(&self) -> TypeId {
        *self.node_types.last().expect("meta-path has at least one type")
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    /// Check shape and that each relation connects the adjacent types in the
    /// graph's observed schema.
    pub fn validate(&self, graph: &HeteroGraph) -> Result<(), GraphError> {
        if self.node_types.len() != self.relations.len() + 1 {
            return Err(GraphError::BadMetaPath(
                self.name.clone(),
                format!("{} types vs {} relations", self.node_types.len(), self.relations.len()),
            ));
        }
        for (i, &r) in self.relations.iter().enumerate() {
            let want = (self.node_types[i], self.node_types[i + 1]);
            if !graph.relation_schema(r).contains(&want) {
                return Err(GraphError::BadMetaPath(
                    self.name.clone(),
                    format!(
                        "relation {:?} never connects {:?} to {:?}",
                        graph.relation_name(r),
                        graph.type_name(want.0),
                        graph.type_name(want.1)
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Staged construction with full validation in [`GraphBuilder::build`].
#[derive(Default)]
pub struct GraphBuilder {
    type_names: Vec<String>,
    relation_names: Vec<String>,
    relation_directed: Vec<Option<bool>>,
    nodes: Vec<(String, TypeId)>,
    node_index: BTreeMap<String, NodeId>,
    edges: Vec<(NodeId, NodeId, RelId)>,
    feature_rows: BTreeMap<NodeId, Vec<f64>>,
    labels: BTreeMap<NodeId, usize>,
    graph_label: Option<usize>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn type_id(&mut self, name: &str) -> TypeId {
        match self.type_names.iter().position(|n| n == name) {
            Some(t) => t,
            None => {
                self.type_names.push(name.to_string());
                self.type_names.len() - 1
            }
        }
    }

    fn relation_id(&mut self, name: &str) -> RelId {
        match self.relation_names.iter().position(|n| n == name) {
            Some(r) => r,
            None => {
                self.relation_names.push(name.to_string());
                self.relation_directed.push(None);
                self.relation_names.len() - 1
            }
        }
    }

    pub fn add_node(&mut self, orig_id: &str, type_name: &str) -> Result<NodeId, GraphError> {
        if self.node_index.contains_key(orig_id) {
            return Err(GraphError::DuplicateNode(orig_id.to_string()));
        }
        let t = self.type_id(type_name);
        let id = self.nodes.len();
        self.nodes.push((orig_id.to_string(), t));
        self.node_index.insert(orig_id.to_string(), id);
        Ok(id)
    }

    /// Add an edge; `directed = None` keeps the relation's existing
    /// declaration (default undirected).
    pub fn add_edge(
        &mut self,
        src: &str,
        dst: &str,
        rel_name: &str,
        directed: Option<bool>,
    ) -> Result<(), GraphError> {
        let s = *self.node_index.get(src).ok_or_else(|| GraphError::UnknownNode {
            id: src.to_string(),
            context: format!("edge ({src}, {dst}, {rel_name})"),
        })?;
        let d = *self.node_index.get(dst).ok_or_else(|| GraphError::UnknownNode {
            id: dst.to_string(),
            context: format!("edge ({src}, {dst}, {rel_name})"),
        })?;
        let r = self.relation_id(rel_name);
        if let Some(dir) = directed {
            match self.relation_directed[r] {
                Some(existing) if existing != dir => {
                    return Err(GraphError::DirectionConflict(rel_name.to_string()));
                }
                _ => self.relation_directed[r] = Some(dir),
            }
        }
        self.edges.push((s, d, r));
        Ok(())
    }

    pub fn set_feature_row(&mut self, orig_id: &str, row: Vec<f64>) -> Result<(), GraphError> {
        let id = *self.node_index.get(orig_id).ok_or_else(|| GraphError::UnknownNode {
            id: orig_id.to_string(),
            context: "feature row".to_string(),
        })?;
        if self.feature_rows.insert(id, row).is_some() {
            return Err(GraphError::DuplicateFeature(orig_id.to_string()));
        }
        Ok(())
    }

    pub fn set_label(&mut self, orig_id: &str, class: usize) -> Result<(), GraphError> {
        let id = *self.node_index.get(orig_id).ok_or_else(|| GraphError::UnknownNode {
            id: orig_id.to_string(),
            context: "label".to_string(),
        })?;
        self.labels.insert(id, class);
        Ok(())
    }

    pub fn set_graph_label(&mut self, class: usize) {
        self.graph_label = Some(class);
    }

    pub fn build(self) -> Result<HeteroGraph, GraphError> {
        if self.nodes.is_empty() {
            return Err(GraphError::Empty);
        }
        let n = self.nodes.len();
        let node_types: Vec<TypeId> = self.nodes.iter().map(|(_, t)| *t).collect();
        let original_ids: Vec<String> = self.nodes.iter().map(|(id, _)| id.clone()).collect();
        let n_types = self.type_names.len();
        let n_rels = self.relation_names.len();
        let relation_directed: Vec<bool> =
            self.relation_directed.iter().map(|d| d.unwrap_or(false)).collect();

        let mut type_members = vec![Vec::new(); n_types];
        let mut type_rows = vec![0usize; n];
        for (v, &t) in node_types.iter().enumerate() {
            type_rows[v] = type_members[t].len();
            type_members[t].push(v);
        }

        // Per-relation adjacency; undirected relations are symmetrized.
        let mut rel_out = vec![vec![Vec::new(); n]; n_rels];
        let mut rel_in = vec![vec![Vec::new(); n]; n_rels];
        for &(s, d, r) in &self.edges {
            rel_out[r][s].push(d);
            rel_in[r][d].push(s);
            if !relation_directed[r] {
                rel_out[r][d].push(s);
                rel_in[r][s].push(d);
            }
        }

        let mut skeleton: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for &(s, d, _) in &self.edges {
            if s != d {
                skeleton[s].push(d);
                skeleton[d].push(s);
            }
        }
        for adj in &mut skeleton {
            adj.sort_unstable();
            adj.dedup();
        }

        // Assemble per-type feature matrices in member order.
        let mut features = Vec::with_capacity(n_types);
        for (t, members) in type_members.iter().enumerate() {
            let mut dim: Option<usize> = None;
            let mut data: Vec<f64> = Vec::new();
            for &v in members {
                let row = self
                    .feature_rows
                    .get(&v)
                    .ok_or_else(|| GraphError::MissingFeature(original_ids[v].clone()))?;
                match dim {
                    None => dim = Some(row.len()),
                    Some(d) if d != row.len() => {
                        return Err(GraphError::FeatureDim {
                            type_name: self.type_names[t].clone(),
                            expected: d,
                            got: row.len(),
                            node: original_ids[v].clone(),
                        });
                    }
                    _ => {}
                }
                data.extend_from_slice(row);
            }
            let d = dim.unwrap_or(0);
            features.push(Tensor64::matrix(members.len(), d, data));
        }

        let labels = if self.labels.is_empty() {
            None
        } else {
            let mut l = vec![None; n];
            for (&v, &class) in &self.labels {
                l[v] = Some(class);
            }
            Some(l)
        };

        Ok(HeteroGraph {
            node_types,
            type_names: self.type_names,
            relation_names: self.relation_names,
            relation_directed,
            edges: self.edges,
            rel_out,
            rel_in,
            skeleton,
            features,
            type_rows,
            type_members,
            labels,
            graph_label: self.graph_label,
            original_ids,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node_graph() -> HeteroGraph {
        let mut b = GraphBuilder::new();
        b.add_node("0", "author").unwrap();
        b.add_node("1", "paper").unwrap();
        b.add_edge("0", "1", "writes", None).unwrap();
        b.set_feature_row("0", vec![1.0, 2.0]).unwrap();
        b.set_feature_row("1", vec![3.0]).unwrap();
        b.build().unwrap()
    }

    #[test]
    fn minimal_two_node_graph() {
        let g = two_node_graph();
        assert_eq!(g.n_nodes(), 2);
        assert_eq!(g.n_edges(), 1);
        assert_eq!(g.n_types(), 2);
        assert_eq!(g.n_relations(), 1);
        assert_eq!(g.skeleton_neighbors(0), &[1]);
        assert_eq!(g.skeleton_neighbors(1), &[0]);
        // default undirected: adjacency symmetric
        assert_eq!(g.rel_neighbors(0, 1), &[0]);
    }

    #[test]
    fn duplicate_node_rejected() {
        let mut b = GraphBuilder::new();
        b.add_node("x", "t").unwrap();
        assert!(matches!(b.add_node("x", "t"), Err(GraphError::DuplicateNode(_))));
    }

    #[test]
    fn unknown_edge_endpoint_rejected() {
        let mut b = GraphBuilder::new();
        b.add_node("5", "t").unwrap();
        let err = b.add_edge("5", "99", "r", None).unwrap_err();
        match err {
            GraphError::UnknownNode { id, .. } => assert_eq!(id, "99"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_feature_rejected() {
        let mut b = GraphBuilder::new();
        b.add_node("0", "t").unwrap();
        assert!(matches!(b.build(), Err(GraphError::MissingFeature(_))));
    }

    #[test]
    fn feature_dim_mismatch_rejected() {
        let mut b = GraphBuilder::new();
        b.add_node("0", "t").unwrap();
        b.add_node("1", "t").unwrap();
        b.set_feature_row("0", vec![1.0, 2.0]).unwrap();
        b.set_feature_row("1", vec![1.0]).unwrap();
        assert!(matches!(b.build(), Err(GraphError::FeatureDim { .. })));
    }

    #[test]
    fn direction_conflict_rejected() {
        let mut b = GraphBuilder::new();
        b.add_node("0", "t").unwrap();
        b.add_node("1", "t").unwrap();
        b.add_edge("0", "1", "r", Some(true)).unwrap();
        assert!(matches!(b.add_edge("1", "0", "r", Some(false)), Err(GraphError::DirectionConflict(_))));
    }

    #[test]
    fn directed_relation_is_asymmetric() {
        let mut b = GraphBuilder::new();
        b.add_node("0", "t").unwrap();
        b.add_node("1", "t").unwrap();
        b.add_edge("0", "1", "r", Some(true)).unwrap();
        b.set_feature_row("0", vec![0.0]).unwrap();
        b.set_feature_row("1", vec![0.0]).unwrap();
        let g = b.build().unwrap();
        assert_eq!(g.rel_neighbors(0, 0), &[1]);
        assert!(g.rel_neighbors(0, 1).is_empty());
        assert_eq!(g.rel_neighbors_rev(0, 1), &[0]);
    }

    #[test]
    fn metapath_parse_and_validate() {
        let g = two_node_graph();
        let p = MetaPath::parse("author/writes/paper", &g).unwrap();
        assert_eq!(p.anchor_type(), g.type_id("author").unwrap());
        assert_eq!(p.terminal_type(), g.type_id("paper").unwrap());
        assert!(MetaPath::parse("paper/writes/paper", &g).is_err());
        assert!(MetaPath::parse("author/writes", &g).is_err());
    }

    #[test]
    fn append_features_extends_every_type() {
        let g = two_node_graph();
        let extra = Tensor64::matrix(2, 2, vec![9.0, 8.0, 7.0, 6.0]);
        let g2 = g.append_node_features(&extra);
        assert_eq!(g2.feature_row(0), vec![1.0, 2.0, 9.0, 8.0]);
        assert_eq!(g2.feature_row(1), vec![3.0, 7.0, 6.0]);
    }
}
