//! Dataset resolution: a path to an ingested bundle or corpus manifest, or
//! a builtin synthetic family name.
//!
//! Builtin names: `synth-sbm`, `synth-sbm-hetero`, `synth-academic`,
//! `cycle<N>`, `path<N>`, `complete<N>`, `star<N>`,
//! `circulant<N>-<o1>.<o2>...`, `corpus-cycles-stars`.

use std::path::Path;

use mapn::graph::{io, synth, HeteroGraph, MetaPath};

use crate::CliError;

/// Overridable synthetic-generation knobs.
#[derive(Clone, Debug)]
pub struct SynthParams {
    pub nodes: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub separation: f64,
    pub noise: f64,
    pub corpus_per_class: usize,
    pub corpus_graph_nodes: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            nodes: 90,
            classes: 3,
            p_in: 0.3,
            p_out: 0.02,
            feature_dim: 8,
            separation: 1.5,
            noise: 1.0,
            corpus_per_class: 50,
            corpus_graph_nodes: 9,
        }
    }
}

pub enum Dataset {
    Single(HeteroGraph),
    Corpus(Vec<HeteroGraph>),
}

impl Dataset {
    pub fn single(self) -> Result<HeteroGraph, CliError> {
        match self {
            Dataset::Single(g) => Ok(g),
            Dataset::Corpus(_) => Err(CliError::usage("this command needs a single graph, got a corpus".into())),
        }
    }
}

fn parse_sized(name: &str, prefix: &str) -> Option<usize> {
    name.strip_prefix(prefix).and_then(|rest| rest.parse().ok())
}

/// Resolve a `--dataset` argument.
pub fn resolve(spec: &str, params: &SynthParams, seed: u64) -> Result<Dataset, CliError> {
    let path = Path::new(spec);
    if path.is_dir() {
        let manifest = path.join("manifest.json");
        if manifest.exists() && !path.join("nodes.tsv").exists() {
            return Ok(Dataset::Corpus(io::load_corpus(&manifest).map_err(CliError::from)?));
        }
        return Ok(Dataset::Single(io::load_bundle(path).map_err(CliError::from)?));
    }
    if path.is_file() && spec.ends_with(".json") {
        return Ok(Dataset::Corpus(io::load_corpus(path).map_err(CliError::from)?));
    }

    let p = params;
    let graph = match spec {
        "synth-sbm" => synth::sbm_with_noise(p.nodes, p.classes, p.p_in, p.p_out, p.feature_dim, p.separation, p.noise, seed)
            .map_err(CliError::from)?,
        "synth-sbm-hetero" => {
            // heterophilous reading: swap so cross-class dominates
            let (p_in, p_out) = if p.p_in < p.p_out { (p.p_in, p.p_out) } else { (p.p_out, p.p_in) };
            synth::sbm_with_noise(p.nodes, p.classes, p_in, p_out, p.feature_dim, p.separation, p.noise, seed)
                .map_err(CliError::from)?
        }
        "synth-academic" => synth::hetero_academic(p.nodes, p.classes, p.p_in, p.p_out, p.feature_dim, seed)
            .map_err(CliError::from)?,
        "corpus-cycles-stars" => {
            return Ok(Dataset::Corpus(synth::cycles_vs_stars_corpus(
                p.corpus_per_class,
                p.corpus_graph_nodes,
                p.feature_dim.saturating_sub(1).max(1),
                seed,
            )));
        }
        other => {
            if let Some(n) = parse_sized(other, "cycle") {
                synth::cycle_graph(n, p.feature_dim, seed)
            } else if let Some(n) = parse_sized(other, "path") {
                synth::path_graph(n, p.feature_dim, seed)
            } else if let Some(n) = parse_sized(other, "complete") {
                synth::complete_graph(n, p.feature_dim, seed)
            } else if let Some(n) = parse_sized(other, "star") {
                synth::star_graph(n, p.feature_dim, seed)
            } else if let Some(rest) = other.strip_prefix("circulant") {
                let (n_str, offs) = rest
                    .split_once('-')
                    .ok_or_else(|| CliError::usage(format!("circulant spec {other:?}: expected circulant<N>-<o1>.<o2>")))?;
                let n: usize = n_str
                    .parse()
                    .map_err(|_| CliError::usage(format!("bad circulant size in {other:?}")))?;
                let offsets: Result<Vec<usize>, _> = offs.split('.').map(str::parse).collect();
                let offsets =
                    offsets.map_err(|_| CliError::usage(format!("bad circulant offsets in {other:?}")))?;
                synth::circulant_graph(n, &offsets, p.feature_dim, seed)
            } else {
                return Err(CliError::usage(format!(
                    "unknown dataset {spec:?} (not a directory, manifest, or builtin name)"
                )));
            }
        }
    };
    Ok(Dataset::Single(graph))
}

/// Meta-paths for a graph: explicit specs, or the default single-relation
/// pattern `type/rel/type` for every observed (type, rel, type) pair that
/// has same anchor and terminal type, falling back to all anchored pairs.
pub fn resolve_meta_paths(graph: &HeteroGraph, specs: &[String]) -> Result<Vec<MetaPath>, CliError> {
    if !specs.is_empty() {
        return specs.iter().map(|s| MetaPath::parse(s, graph).map_err(CliError::from)).collect();
    }
    // defaults: one two-step pattern per relation schema entry, preferring
    // symmetric (A -> r -> A) patterns
    let mut paths = Vec::new();
    for r in 0..graph.n_relations() {
        for (src, dst) in graph.relation_schema(r) {
            let path = MetaPath::new(
                format!(
                    "{}/{}/{}",
                    graph.type_name(src),
                    graph.relation_name(r),
                    graph.type_name(dst)
                ),
                vec![src, dst],
                vec![r],
            );
            if path.validate(graph).is_ok() && !paths.iter().any(|p: &MetaPath| p.name == path.name) {
                paths.push(path);
            }
        }
    }
    if paths.is_empty() {
        return Err(CliError::data("no usable meta-path could be derived from the graph schema".into()));
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_names_resolve() {
        let p = SynthParams::default();
        assert!(matches!(resolve("synth-sbm", &p, 1), Ok(Dataset::Single(_))));
        assert!(matches!(resolve("cycle8", &p, 1), Ok(Dataset::Single(_))));
        assert!(matches!(resolve("circulant8-1.4", &p, 1), Ok(Dataset::Single(_))));
        assert!(matches!(resolve("corpus-cycles-stars", &p, 1), Ok(Dataset::Corpus(_))));
        assert!(resolve("no-such-thing", &p, 1).is_err());
    }

    #[test]
    fn default_meta_paths_for_homogeneous_graph() {
        let p = SynthParams::default();
        let g = resolve("synth-sbm", &p, 1).unwrap().single().unwrap();
        let paths = resolve_meta_paths(&g, &[]).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].name, "node/link/node");
    }
}
