//! Dataset ingestion and normalized bundle output.
//!
//! Formats:
//! * nodes: TSV `node_id<TAB>type_name`, `#` comment lines ignored
//! * edges: TSV `src_id<TAB>dst_id<TAB>relation_name[<TAB>directed|undirected]`,
//!   default undirected
//! * features: one CSV per node type named `<type_name>.csv`, first column
//!   `node_id`, remaining columns numeric
//! * labels: TSV `node_id<TAB>class_index`
//! * corpus: a JSON manifest listing per-graph file triples plus `graph_label`

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GraphBuilder, GraphError, HeteroGraph};

fn io_err(path: &Path, source: std::io::Error) -> GraphError {
    GraphError::Io { path: path.display().to_string(), source }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, GraphError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.to_string()))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .collect())
}

/// Load and validate a graph from its component files.
pub fn load_graph(
    nodes_path: &Path,
    edges_path: &Path,
    features_dir: &Path,
    labels_path: Option<&Path>,
) -> Result<HeteroGraph, GraphError> {
    let mut builder = GraphBuilder::new();

    for (line, text) in read_lines(nodes_path)? {
        let mut cols = text.split('\t');
        let (id, ty) = match (cols.next(), cols.next(), cols.next()) {
            (Some(id), Some(ty), None) => (id.trim(), ty.trim()),
            _ => {
                return Err(GraphError::MalformedLine {
                    path: nodes_path.display().to_string(),
                    line,
                    msg: "expected node_id<TAB>type_name".to_string(),
                });
            }
        };
        builder.add_node(id, ty)?;
    }

    for (line, text) in read_lines(edges_path)? {
        let cols: Vec<&str> = text.split('\t').map(|c| c.trim()).collect();
        let (src, dst, rel, directed) = match cols.as_slice() {
            [s, d, r] => (*s, *d, *r, None),
            [s, d, r, flag] => {
                let dir = match *flag {
                    "directed" => Some(true),
                    "undirected" => Some(false),
                    other => {
                        return Err(GraphError::MalformedLine {
                            path: edges_path.display().to_string(),
                            line,
                            msg: format!("expected directed|undirected, got {other:?}"),
                        });
                    }
                };
                (*s, *d, *r, dir)
            }
            _ => {
                return Err(GraphError::MalformedLine {
                    path: edges_path.display().to_string(),
                    line,
                    msg: "expected src<TAB>dst<TAB>relation[<TAB>direction]".to_string(),
                });
            }
        };
        builder.add_edge(src, dst, rel, directed)?;
    }

    // One feature file per declared type.
    let type_names: Vec<String> = builder.type_names.clone();
    for ty in &type_names {
        let path = features_dir.join(format!("{ty}.csv"));
        for (line, text) in read_lines(&path)? {
            let mut cols = text.split(',');
            let id = cols.next().map(str::trim).unwrap_or_default();
            if id.is_empty() {
                return Err(GraphError::MalformedLine {
                    path: path.display().to_string(),
                    line,
                    msg: "missing node_id column".to_string(),
                });
            }
            if id == "node_id" {
                continue; // optional header
            }
            let mut row = Vec::new();
            for col in cols {
                let v: f64 = col.trim().parse().map_err(|_| GraphError::MalformedLine {
                    path: path.display().to_string(),
                    line,
                    msg: format!("non-numeric feature value {col:?}"),
                })?;
                row.push(v);
            }
            builder.set_feature_row(id, row)?;
        }
    }

    if let Some(labels_path) = labels_path {
        for (line, text) in read_lines(labels_path)? {
            let cols: Vec<&str> = text.split('\t').map(str::trim).collect();
            match cols.as_slice() {
                [id, class] => {
                    let class: usize = class.parse().map_err(|_| GraphError::MalformedLine {
                        path: labels_path.display().to_string(),
                        line,
                        msg: format!("non-integer class {class:?}"),
                    })?;
                    builder.set_label(id, class)?;
                }
                _ => {
                    return Err(GraphError::MalformedLine {
                        path: labels_path.display().to_string(),
                        line,
                        msg: "expected node_id<TAB>class_index".to_string(),
                    });
                }
            }
        }
    }

    builder.build()
}

/// Write a graph back out as a normalized bundle:
/// `nodes.tsv`, `edges.tsv`, `features/<type>.csv`, optional `labels.tsv`.
/// Output is deterministic for identical graphs.
pub fn save_bundle(graph: &HeteroGraph, dir: &Path) -> Result<(), GraphError> {
    let features_dir = dir.join("features");
    fs::create_dir_all(&features_dir).map_err(|e| io_err(&features_dir, e))?;

    let nodes_path = dir.join("nodes.tsv");
    let mut out = String::new();
    for v in 0..graph.n_nodes() {
        out.push_str(graph.original_id(v));
        out.push('\t');
        out.push_str(graph.type_name(graph.node_type(v)));
        out.push('\n');
    }
    fs::write(&nodes_path, out).map_err(|e| io_err(&nodes_path, e))?;

    let edges_path = dir.join("edges.tsv");
    let mut out = String::new();
    for &(s, d, r) in graph.edges() {
        let dir_word = if graph.is_directed(r) { "directed" } else { "undirected" };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            graph.original_id(s),
            graph.original_id(d),
            graph.relation_name(r),
            dir_word
        ));
    }
    fs::write(&edges_path, out).map_err(|e| io_err(&edges_path, e))?;

    for t in 0..graph.n_types() {
        let path = features_dir.join(format!("{}.csv", graph.type_name(t)));
        let mut f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        let m = graph.features_of_type(t);
        let d = m.shape()[1];
        for (row, &v) in graph.nodes_of_type(t).iter().enumerate() {
            let mut line = String::from(graph.original_id(v));
            for j in 0..d {
                line.push(',');
                // round-trippable float formatting
                line.push_str(&format!("{:?}", m.data()[row * d + j]));
            }
            line.push('\n');
            f.write_all(line.as_bytes()).map_err(|e| io_err(&path, e))?;
        }
    }

    if let Some(labels) = graph.labels() {
        let path = dir.join("labels.tsv");
        let mut out = String::new();
        for (v, label) in labels.iter().enumerate() {
            if let Some(class) = label {
                out.push_str(&format!("{}\t{}\n", graph.original_id(v), class));
            }
        }
        fs::write(&path, out).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

/// Load a bundle previously written by [`save_bundle`].
pub fn load_bundle(dir: &Path) -> Result<HeteroGraph, GraphError> {
    let labels = dir.join("labels.tsv");
    load_graph(
        &dir.join("nodes.tsv"),
        &dir.join("edges.tsv"),
        &dir.join("features"),
        labels.exists().then_some(labels.as_path()),
    )
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub nodes: String,
    pub edges: String,
    pub features_dir: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    pub graph_label: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub graphs: Vec<CorpusEntry>,
}

/// Load a graph-classification corpus from a JSON manifest; paths inside the
/// manifest are relative to its directory.
pub fn load_corpus(manifest_path: &Path) -> Result<Vec<HeteroGraph>, GraphError> {
    let text = fs::read_to_string(manifest_path).map_err(|e| io_err(manifest_path, e))?;
    let manifest: CorpusManifest =
        serde_json::from_str(&text).map_err(|e| GraphError::Manifest(e.to_string()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut graphs = Vec::with_capacity(manifest.graphs.len());
    for entry in &manifest.graphs {
        let labels: Option<PathBuf> = entry.labels.as_ref().map(|l| base.join(l));
        let mut g = load_graph(
            &base.join(&entry.nodes),
            &base.join(&entry.edges),
            &base.join(&entry.features_dir),
            labels.as_deref(),
        )?;
        g.graph_label = Some(entry.graph_label);
        graphs.push(g);
    }
    Ok(graphs)
}

/// Write a labeled corpus as per-graph bundles plus `manifest.json`.
pub fn save_corpus(graphs: &[HeteroGraph], dir: &Path) -> Result<(), GraphError> {
    let mut entries = Vec::with_capacity(graphs.len());
    for (i, g) in graphs.iter().enumerate() {
        let sub = format!("g{i:04}");
        save_bundle(g, &dir.join(&sub))?;
        entries.push(CorpusEntry {
            nodes: format!("{sub}/nodes.tsv"),
            edges: format!("{sub}/edges.tsv"),
            features_dir: format!("{sub}/features"),
            labels: g.labels().map(|_| format!("{sub}/labels.tsv")),
            graph_label: g.graph_label().unwrap_or(0),
        });
    }
    let manifest = CorpusManifest { graphs: entries };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| GraphError::Manifest(e.to_string()))?;
    fs::write(&path, text).map_err(|e| io_err(&path, e))
}
