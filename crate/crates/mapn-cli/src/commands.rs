//! Command implementations. Every command writes its outputs into a fresh
//! run directory and echoes the effective configuration next to them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use mapn::diagnose::{
    self, curvature_report, smoothing_report, theorem1_check, theorem2_check, Activation,
};
use mapn::diff::ParamStore;
use mapn::eval::{self, eval_graph_classification, eval_node_classification, majority_baseline};
use mapn::graph::{io as gio, synth, HeteroGraph};
use mapn::sample::{self, rings_all, sample_all, stream_rng};
use mapn::train::{train, TrainConfig};
use mapn::Tensor64;
use rand::Rng;

use crate::config::RunConfig;
use crate::datasets::{resolve, resolve_meta_paths, Dataset, SynthParams};
use crate::CliError;

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(format!("mkdir {}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(format!("write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::internal(format!("serialize {}: {e}", path.display())))?;
    write_file(path, text.as_bytes())
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Echo of the effective settings written into every run directory.
#[derive(Serialize)]
pub struct ConfigEcho<'a> {
    pub command: &'a str,
    pub dataset: Option<&'a str>,
    pub seed: u64,
    pub workers: usize,
    pub config: &'a RunConfig,
}

pub fn echo_config(out: &Path, echo: &ConfigEcho) -> Result<(), CliError> {
    write_json(&out.join("config.json"), echo)
}

// ---------------------------------------------------------------------------
// ingest / generate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct BundleManifest {
    nodes: usize,
    edges: usize,
    types: Vec<String>,
    relations: Vec<String>,
    labeled_nodes: usize,
    checksums: std::collections::BTreeMap<String, String>,
}

fn bundle_manifest(graph: &HeteroGraph, dir: &Path) -> Result<BundleManifest, CliError> {
    let mut checksums = std::collections::BTreeMap::new();
    let mut files = vec!["nodes.tsv".to_string(), "edges.tsv".to_string()];
    for t in 0..graph.n_types() {
        files.push(format!("features/{}.csv", graph.type_name(t)));
    }
    if graph.labels().is_some() {
        files.push("labels.tsv".to_string());
    }
    for name in files {
        let bytes = fs::read(dir.join(&name))
            .map_err(|e| CliError::io(format!("read back {name}: {e}")))?;
        checksums.insert(name, sha256_hex(&bytes));
    }
    Ok(BundleManifest {
        nodes: graph.n_nodes(),
        edges: graph.n_edges(),
        types: graph.type_names().to_vec(),
        relations: graph.relation_names().to_vec(),
        labeled_nodes: graph.labels().map(|l| l.iter().flatten().count()).unwrap_or(0),
        checksums,
    })
}

pub fn cmd_ingest(
    nodes: &Path,
    edges: &Path,
    features: &Path,
    labels: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let graph = gio::load_graph(nodes, edges, features, labels)?;
    gio::save_bundle(&graph, out)?;
    let manifest = bundle_manifest(&graph, out)?;
    write_json(&out.join("manifest.json"), &manifest)?;
    println!(
        "ingested {} nodes, {} edges, {} types, {} relations -> {}",
        manifest.nodes,
        manifest.edges,
        manifest.types.len(),
        manifest.relations.len(),
        out.display()
    );
    Ok(())
}

pub fn cmd_generate(kind: &str, params: &SynthParams, seed: u64, out: &Path) -> Result<(), CliError> {
    match kind {
        "homophilous-sbm" | "heterophilous-sbm" | "hetero-academic" => {
            let graph = match kind {
                "homophilous-sbm" => synth::sbm_with_noise(
                    params.nodes,
                    params.classes,
                    params.p_in,
                    params.p_out,
                    params.feature_dim,
                    params.separation,
                    params.noise,
                    seed,
                )?,
                "heterophilous-sbm" => {
                    let (p_in, p_out) = if params.p_in < params.p_out {
                        (params.p_in, params.p_out)
                    } else {
                        (params.p_out, params.p_in)
                    };
                    synth::sbm_with_noise(
                        params.nodes,
                        params.classes,
                        p_in,
                        p_out,
                        params.feature_dim,
                        params.separation,
                        params.noise,
                        seed,
                    )?
                }
                _ => synth::hetero_academic(
                    params.nodes,
                    params.classes,
                    params.p_in,
                    params.p_out,
                    params.feature_dim,
                    seed,
                )?,
            };
            gio::save_bundle(&graph, out)?;
            let manifest = bundle_manifest(&graph, out)?;
            write_json(&out.join("manifest.json"), &manifest)?;
            println!("generated {kind} with {} nodes -> {}", graph.n_nodes(), out.display());
        }
        "cycles-vs-stars" => {
            let corpus = synth::cycles_vs_stars_corpus(
                params.corpus_per_class,
                params.corpus_graph_nodes,
                params.feature_dim.saturating_sub(1).max(1),
                seed,
            );
            gio::save_corpus(&corpus, out)?;
            println!("generated corpus of {} graphs -> {}", corpus.len(), out.display());
        }
        other => {
            return Err(CliError::usage(format!(
                "unknown kind {other:?}: expected homophilous-sbm|heterophilous-sbm|hetero-academic|cycles-vs-stars"
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// train / embed
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct TrainSummary<'a> {
    dataset: &'a str,
    meta_paths: Vec<String>,
    n_nodes: usize,
    n_edges: usize,
    epochs_run: usize,
    final_loss: f64,
    best_loss: f64,
    best_epoch: usize,
    stopped_early: bool,
    wall_ms: u64,
    config: &'a RunConfig,
    seed: u64,
}

fn embeddings_tsv(graph: &HeteroGraph, embeddings: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for (v, row) in embeddings.iter().enumerate() {
        out.push_str(graph.original_id(v));
        out.push('\t');
        let cells: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn cmd_train(
    dataset: &str,
    meta_paths: &[String],
    run_cfg: &RunConfig,
    params: &SynthParams,
    seed: u64,
    dump_samples: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let graph = resolve(dataset, params, seed)?.single()?;
    let paths = resolve_meta_paths(&graph, meta_paths)?;
    let cfg = run_cfg.train_config(seed)?;
    cfg.validate()?;

    let result = train(&graph, &paths, &cfg)?;

    let mut metrics = String::new();
    for rec in &result.metrics.epochs {
        metrics.push_str(&serde_json::to_string(rec).expect("serializable record"));
        metrics.push('\n');
    }
    write_file(&out.join("metrics.jsonl"), metrics.as_bytes())?;
    write_file(&out.join("checkpoint.bin"), &result.best_checkpoint)?;
    write_file(&out.join("embeddings.tsv"), embeddings_tsv(&result.graph, &result.embeddings).as_bytes())?;
    let summary = TrainSummary {
        dataset,
        meta_paths: paths.iter().map(|p| p.name.clone()).collect(),
        n_nodes: graph.n_nodes(),
        n_edges: graph.n_edges(),
        epochs_run: result.metrics.epochs.len(),
        final_loss: result.metrics.final_loss,
        best_loss: result.metrics.best_loss,
        best_epoch: result.metrics.best_epoch,
        stopped_early: result.metrics.stopped_early,
        wall_ms: result.metrics.wall_ms,
        config: run_cfg,
        seed,
    };
    write_json(&out.join("summary.json"), &summary)?;

    if let Some(dir) = dump_samples {
        let mut walk = cfg.walk.clone();
        walk.seed = seed;
        let samples = sample_all(&result.graph, &walk);
        write_file(&dir.join("neighbors.tsv"), sample::neighbors_tsv(&result.graph, &samples).as_bytes())?;
        let mut sets = Vec::new();
        for p in &paths {
            sets.push(sample::sample_triples(&result.graph, p, cfg.window, cfg.negatives_per_positive, &walk)?);
        }
        write_file(&dir.join("triples.tsv"), sample::triples_tsv(&result.graph, &sets).as_bytes())?;
    }

    println!(
        "trained {} epochs on {dataset}: final loss {:.6}, best {:.6} at epoch {} -> {}",
        summary.epochs_run,
        summary.final_loss,
        summary.best_loss,
        summary.best_epoch,
        out.display()
    );
    Ok(())
}

/// Recompute embeddings from a finished run directory.
pub fn cmd_embed(dataset: &str, run_dir: &Path, params: &SynthParams, seed: u64, out: &Path) -> Result<(), CliError> {
    use mapn::aggregate::Model;

    let echo_path = run_dir.join("config.json");
    let text = fs::read_to_string(&echo_path)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", echo_path.display())))?;
    let echo: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::data(format!("bad config echo: {e}")))?;
    let run_cfg: RunConfig = serde_json::from_value(
        echo.get("config").cloned().ok_or_else(|| CliError::data("config echo missing `config`".into()))?,
    )
    .map_err(|e| CliError::data(format!("bad config echo: {e}")))?;
    let train_seed = echo.get("seed").and_then(|s| s.as_u64()).unwrap_or(seed);

    let graph = resolve(dataset, params, train_seed)?.single()?;
    let cfg = run_cfg.train_config(train_seed)?;
    let graph = if cfg.use_lap_pe {
        let pe = mapn::graph::lappe::lap_pe(&graph, cfg.lap_pe_k)?;
        graph.append_node_features(&pe.encodings)
    } else {
        graph
    };
    let paths = resolve_meta_paths(&graph, &[])?;
    let ckpt = fs::read(run_dir.join("checkpoint.bin"))
        .map_err(|e| CliError::io(format!("cannot read checkpoint: {e}")))?;
    let store: ParamStore<f64> = ParamStore::load(&ckpt[..])?;
    let model = Model::from_store(&graph, paths, cfg.model_config(), store);
    let mut walk = cfg.walk.clone();
    walk.seed = train_seed;
    let samples = sample_all(&graph, &walk);
    let rings = rings_all(&graph, cfg.hops);
    let fwd = model.forward(&graph, &samples, &rings);
    write_file(&out.join("embeddings.tsv"), embeddings_tsv(&graph, &fwd.embeddings()).as_bytes())?;
    println!("embedded {} nodes -> {}", graph.n_nodes(), out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct NodeEvalReport<'a> {
    dataset: &'a str,
    embedding_source: String,
    accuracy_mean: f64,
    accuracy_std: f64,
    per_split: Vec<f64>,
    majority_baseline: f64,
    chance: f64,
    splits: usize,
}

#[derive(Serialize)]
struct GraphEvalReport<'a> {
    dataset: &'a str,
    accuracy_mean: f64,
    accuracy_std: f64,
    per_fold: Vec<f64>,
    degenerate: bool,
    folds: usize,
    readout_layers: usize,
}

/// Zero-padded raw features (heterogeneous types may have unequal dims).
fn padded_features(graph: &HeteroGraph) -> Vec<Vec<f64>> {
    let max_dim = (0..graph.n_types()).map(|t| graph.feature_dim(t)).max().unwrap_or(0);
    (0..graph.n_nodes())
        .map(|v| {
            let mut row = graph.feature_row(v);
            row.resize(max_dim, 0.0);
            row
        })
        .collect()
}

fn run_embeddings(dataset: &str, run_dir: &Path, params: &SynthParams, seed: u64) -> Result<Vec<Vec<f64>>, CliError> {
    let tmp = tempfile_dir()?;
    cmd_embed(dataset, run_dir, params, seed, &tmp)?;
    let text = fs::read_to_string(tmp.join("embeddings.tsv"))
        .map_err(|e| CliError::io(format!("read embeddings: {e}")))?;
    let mut rows = Vec::new();
    for line in text.lines() {
        let (_, vals) = line
            .split_once('\t')
            .ok_or_else(|| CliError::data("malformed embeddings.tsv".into()))?;
        let row: Result<Vec<f64>, _> = vals.split(',').map(str::parse).collect();
        rows.push(row.map_err(|e| CliError::data(format!("bad embedding value: {e}")))?);
    }
    let _ = fs::remove_dir_all(&tmp);
    Ok(rows)
}

fn tempfile_dir() -> Result<PathBuf, CliError> {
    let base = std::env::temp_dir().join(format!("mapn-embed-{}", std::process::id()));
    fs::create_dir_all(&base).map_err(|e| CliError::io(format!("mkdir {}: {e}", base.display())))?;
    Ok(base)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_eval(
    dataset: &str,
    run_dir: Option<&Path>,
    run_cfg: &RunConfig,
    params: &SynthParams,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    match resolve(dataset, params, seed)? {
        Dataset::Single(graph) => {
            let labels = graph
                .labels()
                .ok_or_else(|| CliError::data("node classification needs a labeled dataset".into()))?
                .to_vec();
            let (source, embeddings) = match run_dir {
                Some(dir) => ("trained".to_string(), run_embeddings(dataset, dir, params, seed)?),
                None => ("raw-features".to_string(), padded_features(&graph)),
            };
            let fractions =
                (run_cfg.eval.train_fraction, run_cfg.eval.val_fraction, run_cfg.eval.test_fraction);
            let eval = eval_node_classification(&embeddings, &labels, fractions, run_cfg.eval.splits, seed)?;
            let n_classes = labels.iter().flatten().max().map(|c| c + 1).unwrap_or(1);
            let report = NodeEvalReport {
                dataset,
                embedding_source: source,
                accuracy_mean: eval.mean,
                accuracy_std: eval.std,
                per_split: eval.per_split.clone(),
                majority_baseline: majority_baseline(&labels),
                chance: 1.0 / n_classes as f64,
                splits: run_cfg.eval.splits,
            };
            write_json(&out.join("eval.json"), &report)?;
            println!("node classification on {dataset}: accuracy {:.4} +- {:.4}", eval.mean, eval.std);
        }
        Dataset::Corpus(corpus) => {
            let labels: Vec<usize> = corpus
                .iter()
                .map(|g| g.graph_label().ok_or_else(|| CliError::data("corpus graph without label".into())))
                .collect::<Result<_, _>>()?;
            for g in &corpus {
                if g.n_nodes() == 0 {
                    return Err(CliError::data("corpus contains an empty graph".into()));
                }
            }
            let readouts: Vec<Vec<f64>> = corpus
                .iter()
                .map(|g| eval::mean_aggregation_readout(g, run_cfg.eval.readout_layers))
                .collect();
            let eval = eval_graph_classification(&readouts, &labels, run_cfg.eval.folds, seed)?;
            let report = GraphEvalReport {
                dataset,
                accuracy_mean: eval.mean,
                accuracy_std: eval.std,
                per_fold: eval.per_split.clone(),
                degenerate: eval.degenerate,
                folds: run_cfg.eval.folds,
                readout_layers: run_cfg.eval.readout_layers,
            };
            write_json(&out.join("eval.json"), &report)?;
            println!("graph classification on {dataset}: accuracy {:.4} +- {:.4}", eval.mean, eval.std);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

pub fn cmd_diagnose_curvature(dataset: &str, params: &SynthParams, seed: u64, out: &Path) -> Result<(), CliError> {
    let graph = resolve(dataset, params, seed)?.single()?;
    let report = curvature_report(&graph)?;
    write_json(&out.join("curvature.json"), &report)?;
    let mut csv = String::from("a,b,kappa,w1\n");
    for e in &report.edges {
        csv.push_str(&format!("{},{},{},{}\n", e.a, e.b, e.kappa, e.w1));
    }
    write_file(&out.join("curvature.csv"), csv.as_bytes())?;
    println!(
        "curvature on {dataset}: {} edges, min {:.4}, mean {:.4}",
        report.edges.len(),
        report.min_kappa,
        report.mean_kappa
    );
    Ok(())
}

/// Random circulant of the given degree (2, 3 or 4), seed-deterministic.
pub fn random_circulant(degree: usize, rng: &mut rand_chacha::ChaCha8Rng) -> HeteroGraph {
    loop {
        match degree {
            2 => {
                let n = 2 * rng.gen_range(3..9); // even, 6..=16
                let s = rng.gen_range(1..(n / 2));
                return synth::circulant_graph(n, &[s], 3, rng.gen());
            }
            3 => {
                let n = 2 * rng.gen_range(3..9);
                let s = rng.gen_range(1..(n / 2));
                return synth::circulant_graph(n, &[s, n / 2], 3, rng.gen());
            }
            4 => {
                let n = 2 * rng.gen_range(4..9);
                let s1 = rng.gen_range(1..(n / 2));
                let mut s2 = rng.gen_range(1..(n / 2));
                while s2 == s1 {
                    s2 = rng.gen_range(1..(n / 2));
                }
                return synth::circulant_graph(n, &[s1, s2], 3, rng.gen());
            }
            other => panic!("unsupported degree {other}"),
        }
    }
}

/// Random square matrix scaled to spectral norm <= 1.
fn random_contraction(dim: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Tensor64 {
    let raw = Tensor64::from_fn(&[dim, dim], |_| rng.gen_range(-1.0..1.0));
    let norm = diagnose::spectral_norm(&raw);
    let target = rng.gen_range(0.5..1.0);
    raw.scale(if norm > 0.0 { target / norm } else { 0.0 })
}

#[derive(Serialize)]
struct Theorem1Suite {
    instances: Vec<mapn::diagnose::LayerDecayReport>,
    all_hold: bool,
}

pub fn cmd_diagnose_theorem1(
    dataset: Option<&str>,
    params: &SynthParams,
    instances: usize,
    degrees: &[usize],
    layers: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let mut reports = Vec::new();
    match dataset {
        Some(spec) => {
            let graph = resolve(spec, params, seed)?.single()?;
            for l in 2..=layers.max(2) {
                reports.push(theorem1_check(&graph, None, Activation::Identity, l, 0, 0, 2.0)?);
            }
        }
        None => {
            let mut rng = stream_rng(seed, 0x7468_3031, 0);
            for i in 0..instances {
                let degree = degrees[i % degrees.len()];
                let graph = random_circulant(degree, &mut rng);
                let weight = random_contraction(3, &mut rng);
                let activation = if i % 2 == 0 { Activation::Identity } else { Activation::Tanh };
                let b = rng.gen_range(0..graph.n_nodes());
                for l in 2..=layers.max(2) {
                    reports.push(theorem1_check(&graph, Some(weight.clone()), activation, l, 0, b, 2.0)?);
                }
            }
        }
    }
    let all_hold = reports.iter().all(|r| r.holds);
    write_json(&out.join("theorem1.json"), &Theorem1Suite { instances: reports, all_hold })?;
    println!("layer-decay check: all_hold = {all_hold} -> {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct Theorem2Suite {
    instances: Vec<mapn::diagnose::HopDecayReport>,
    all_hold_when_preconditioned: bool,
}

pub fn cmd_diagnose_theorem2(
    dataset: Option<&str>,
    params: &SynthParams,
    instances: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let mut reports = Vec::new();
    match dataset {
        Some(spec) => {
            let graph = resolve(spec, params, seed)?.single()?;
            reports.push(theorem2_check(&graph, 0, 2.0)?);
        }
        None => {
            let mut rng = stream_rng(seed, 0x7468_3032, 0);
            for i in 0..instances {
                let graph = match i % 3 {
                    0 => synth::cycle_graph(rng.gen_range(6..14), 3, rng.gen()),
                    1 => synth::complete_graph(rng.gen_range(4..8), 3, rng.gen()),
                    _ => random_circulant(4, &mut rng),
                };
                let center = rng.gen_range(0..graph.n_nodes());
                reports.push(theorem2_check(&graph, center, 2.0)?);
            }
        }
    }
    let all_hold = reports.iter().all(|r| r.holds.unwrap_or(true));
    write_json(&out.join("theorem2.json"), &Theorem2Suite { instances: reports, all_hold_when_preconditioned: all_hold })?;
    println!("hop-decay check: all_hold_when_preconditioned = {all_hold} -> {}", out.display());
    Ok(())
}

pub fn cmd_diagnose_smoothing(
    dataset: &str,
    params: &SynthParams,
    layers: usize,
    dim: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let graph = resolve(dataset, params, seed)?.single()?;
    let report = smoothing_report(&graph, layers, dim, seed);
    write_json(&out.join("smoothing.json"), &report)?;
    let mut csv = String::from("layer,mean_aggregation,with_skips,without_skips\n");
    for l in 0..report.mean_aggregation.len() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            l, report.mean_aggregation[l], report.with_skips[l], report.without_skips[l]
        ));
    }
    write_file(&out.join("smoothing.csv"), csv.as_bytes())?;
    println!(
        "smoothing on {dataset}: mean-agg layer-{} metric {:.4}, skips {:.4}, no skips {:.4}",
        layers,
        report.mean_aggregation.last().unwrap(),
        report.with_skips.last().unwrap(),
        report.without_skips.last().unwrap()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep-k
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SweepRow {
    k: usize,
    accuracy_mean: f64,
    accuracy_std: f64,
    final_loss: f64,
}

pub fn cmd_sweep_k(
    dataset: &str,
    k_values: &[usize],
    run_cfg: &RunConfig,
    params: &SynthParams,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    if k_values.is_empty() {
        return Err(CliError::usage("sweep-k needs at least one K value".into()));
    }
    let graph = resolve(dataset, params, seed)?.single()?;
    let labels = graph
        .labels()
        .ok_or_else(|| CliError::data("sweep-k needs a labeled dataset".into()))?
        .to_vec();
    let paths = resolve_meta_paths(&graph, &[])?;
    let mut rows = Vec::new();
    for &k in k_values {
        let mut cfg: TrainConfig = run_cfg.train_config(seed)?;
        cfg.hops = k;
        cfg.validate()?;
        let result = train(&graph, &paths, &cfg)?;
        let fractions = (run_cfg.eval.train_fraction, run_cfg.eval.val_fraction, run_cfg.eval.test_fraction);
        let eval = eval_node_classification(&result.embeddings, &labels, fractions, run_cfg.eval.splits, seed)?;
        println!("K={k}: accuracy {:.4} +- {:.4} (final loss {:.6})", eval.mean, eval.std, result.metrics.final_loss);
        rows.push(SweepRow { k, accuracy_mean: eval.mean, accuracy_std: eval.std, final_loss: result.metrics.final_loss });
    }
    let mut csv = String::from("K,accuracy_mean,accuracy_std\n");
    for row in &rows {
        csv.push_str(&format!("{},{},{}\n", row.k, row.accuracy_mean, row.accuracy_std));
    }
    write_file(&out.join("sweep.csv"), csv.as_bytes())?;
    write_json(&out.join("sweep.json"), &rows)?;
    Ok(())
}
