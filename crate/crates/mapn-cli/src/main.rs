//! `mapn` — heterogeneous-graph embeddings and diagnostics from the command
//! line.
//!
//! Every command exits 0 on success; failures print a single
//! `ERROR <code>: <message>` line on stderr (codes: usage, io, data,
//! numeric, internal). `--seed` reaches every stochastic component and
//! `--workers 1` pins single-threaded execution (results are deterministic
//! for any worker count; 1 is the audited contract).

mod commands;
mod config;
mod datasets;

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use datasets::SynthParams;

#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub msg: String,
}

impl CliError {
    pub fn usage(msg: String) -> Self {
        CliError { code: "usage", msg }
    }
    pub fn io(msg: String) -> Self {
        CliError { code: "io", msg }
    }
    pub fn data(msg: String) -> Self {
        CliError { code: "data", msg }
    }
    pub fn numeric(msg: String) -> Self {
        CliError { code: "numeric", msg }
    }
    pub fn internal(msg: String) -> Self {
        CliError { code: "internal", msg }
    }

    fn exit_code(&self) -> i32 {
        match self.code {
            "usage" => 2,
            "io" => 3,
            "data" => 4,
            "numeric" => 5,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ERROR {}: {}", self.code, self.msg)
    }
}

impl From<mapn::graph::GraphError> for CliError {
    fn from(e: mapn::graph::GraphError) -> Self {
        use mapn::graph::GraphError::*;
        match &e {
            Io { .. } => CliError::io(e.to_string()),
            KTooLarge { .. } | InvalidProbability(_) | InvalidSynthetic(_) => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<mapn::sample::SampleError> for CliError {
    fn from(e: mapn::sample::SampleError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<mapn::train::TrainError> for CliError {
    fn from(e: mapn::train::TrainError) -> Self {
        use mapn::train::TrainError::*;
        match e {
            e @ (NonFinite(_) | NonFiniteGrad(_)) => CliError::numeric(e.to_string()),
            e @ InvalidConfig(_) => CliError::usage(e.to_string()),
            Graph(g) => CliError::from(g),
            other => CliError::data(other.to_string()),
        }
    }
}

impl From<mapn::eval::EvalError> for CliError {
    fn from(e: mapn::eval::EvalError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<mapn::diagnose::DiagError> for CliError {
    fn from(e: mapn::diagnose::DiagError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<mapn::diff::StoreError> for CliError {
    fn from(e: mapn::diff::StoreError) -> Self {
        CliError::io(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "mapn", version, about = "Heterogeneous-graph embeddings with selective state-space aggregation")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON config file; CLI flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every stochastic component.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    /// Output directory (must not already contain files); default
    /// runs/<timestamp>-seed<seed>.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Export sampled neighbor sets and triples as TSV into this directory.
    #[arg(long, global = true)]
    dump_samples: Option<PathBuf>,
}

#[derive(Clone, Args)]
struct SynthArgs {
    /// Node count for builtin synthetic datasets.
    #[arg(long, default_value_t = 90)]
    synth_nodes: usize,

    /// Class count for builtin synthetic datasets.
    #[arg(long, default_value_t = 3)]
    synth_classes: usize,

    /// Within-class edge probability.
    #[arg(long, default_value_t = 0.3)]
    p_in: f64,

    /// Cross-class edge probability.
    #[arg(long, default_value_t = 0.02)]
    p_out: f64,

    /// Raw feature dimension.
    #[arg(long, default_value_t = 8)]
    feature_dim: usize,

    /// Class-mean separation of synthetic features.
    #[arg(long, default_value_t = 1.5)]
    feature_separation: f64,

    /// Gaussian noise scale of synthetic features.
    #[arg(long, default_value_t = 1.0)]
    feature_noise: f64,

    /// Graphs per class for corpus generators.
    #[arg(long, default_value_t = 50)]
    corpus_per_class: usize,

    /// Nodes per graph for corpus generators.
    #[arg(long, default_value_t = 9)]
    corpus_graph_nodes: usize,
}

impl SynthArgs {
    fn params(&self) -> SynthParams {
        SynthParams {
            nodes: self.synth_nodes,
            classes: self.synth_classes,
            p_in: self.p_in,
            p_out: self.p_out,
            feature_dim: self.feature_dim,
            separation: self.feature_separation,
            noise: self.feature_noise,
            corpus_per_class: self.corpus_per_class,
            corpus_graph_nodes: self.corpus_graph_nodes,
        }
    }
}

#[derive(Clone, Args)]
struct TrainOverrides {
    /// Hop count of the asynchronous aggregation.
    #[arg(long = "K")]
    k: Option<usize>,

    /// Asynchronous layer count.
    #[arg(long)]
    layers: Option<usize>,

    /// Embedding dimension (even).
    #[arg(long)]
    dim: Option<usize>,

    /// State entries per scan channel.
    #[arg(long)]
    state_dim: Option<usize>,

    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,

    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,

    /// Decoupled weight decay.
    #[arg(long)]
    weight_decay: Option<f64>,

    /// Co-occurrence window within meta-path walks.
    #[arg(long)]
    window: Option<usize>,

    /// Negatives per positive pair.
    #[arg(long)]
    negatives: Option<usize>,

    /// Append Laplacian positional encodings to features.
    #[arg(long)]
    lap_pe: bool,

    /// Positional-encoding dimension.
    #[arg(long)]
    lap_pe_k: Option<usize>,

    /// Refresh walks/triples every E epochs (0 = sample once).
    #[arg(long)]
    resample_every: Option<usize>,

    /// Add the supervised cross-entropy head (ablation).
    #[arg(long)]
    supervised: bool,

    /// Sequence fed to the node-level scan: weighted|raw.
    #[arg(long)]
    ssm_input: Option<String>,

    /// Restart probability of the neighbor-collection walks.
    #[arg(long)]
    restart_p: Option<f64>,

    /// Walk length (nodes per walk).
    #[arg(long)]
    walk_length: Option<usize>,

    /// Walks per start node.
    #[arg(long)]
    walks_per_node: Option<usize>,

    /// Top-k neighbors kept per type.
    #[arg(long)]
    top_k: Option<usize>,
}

impl TrainOverrides {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if let Some(k) = self.k {
            if k == 0 {
                return Err(CliError::usage("--K must be >= 1".into()));
            }
            cfg.train.hops = k;
        }
        if let Some(v) = self.layers {
            cfg.train.layers = v;
        }
        if let Some(v) = self.dim {
            cfg.train.dim = v;
        }
        if let Some(v) = self.state_dim {
            cfg.train.state_dim = v;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.train.lr = v;
        }
        if let Some(v) = self.weight_decay {
            cfg.train.weight_decay = v;
        }
        if let Some(v) = self.window {
            cfg.train.window = v;
        }
        if let Some(v) = self.negatives {
            cfg.train.negatives_per_positive = v;
        }
        if self.lap_pe {
            cfg.train.use_lap_pe = true;
        }
        if let Some(v) = self.lap_pe_k {
            cfg.train.lap_pe_k = v;
        }
        if let Some(v) = self.resample_every {
            cfg.train.resample_every = v;
        }
        if self.supervised {
            cfg.train.supervised = true;
        }
        if let Some(v) = &self.ssm_input {
            cfg.train.ssm_input = v.clone();
        }
        if let Some(v) = self.restart_p {
            cfg.walk.restart_p = v;
        }
        if let Some(v) = self.walk_length {
            cfg.walk.walk_length = v;
        }
        if let Some(v) = self.walks_per_node {
            cfg.walk.walks_per_node = v;
        }
        if let Some(v) = self.top_k {
            cfg.walk.k_default = v;
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a raw dataset and write a normalized bundle.
    Ingest {
        /// Nodes TSV: node_id<TAB>type_name.
        #[arg(long)]
        nodes: PathBuf,
        /// Edges TSV: src<TAB>dst<TAB>relation[<TAB>directed|undirected].
        #[arg(long)]
        edges: PathBuf,
        /// Directory with one <type>.csv per node type.
        #[arg(long)]
        features: PathBuf,
        /// Optional labels TSV: node_id<TAB>class_index.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Generate a synthetic dataset bundle or corpus.
    Generate {
        /// homophilous-sbm | heterophilous-sbm | hetero-academic | cycles-vs-stars.
        #[arg(long)]
        kind: String,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Train embeddings on a dataset.
    Train {
        /// Bundle directory, corpus manifest, or builtin name.
        #[arg(long)]
        dataset: String,
        /// Meta-path spec type/rel/type/...; repeatable. Defaults to the
        /// graph's single-relation patterns.
        #[arg(long = "meta-path")]
        meta_paths: Vec<String>,
        #[command(flatten)]
        overrides: TrainOverrides,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Recompute embeddings from a finished training run.
    Embed {
        #[arg(long)]
        dataset: String,
        /// A training output directory (config.json + checkpoint.bin).
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Evaluate frozen embeddings (node probe) or a corpus (graph probe).
    Eval {
        #[arg(long)]
        dataset: String,
        /// Training output directory; omitted = raw-feature baseline.
        #[arg(long)]
        run: Option<PathBuf>,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Curvature, gradient-decay, and smoothing diagnostics.
    Diagnose {
        #[command(subcommand)]
        what: DiagnoseCommand,
    },
    /// Train and evaluate across hop counts; emits CSV trends.
    SweepK {
        #[arg(long)]
        dataset: String,
        /// Comma-separated hop counts, e.g. 1,2,3,4.
        #[arg(long, value_delimiter = ',', required = true)]
        k_values: Vec<usize>,
        #[command(flatten)]
        overrides: TrainOverrides,
        #[command(flatten)]
        synth: SynthArgs,
    },
}

#[derive(Subcommand)]
enum DiagnoseCommand {
    /// Exact per-edge Ollivier-Ricci curvature.
    Curvature {
        #[arg(long)]
        dataset: String,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Layer-wise Jacobian-energy decay on K-regular graphs.
    Theorem1 {
        /// Optional regular dataset; omitted = generated circulant suite.
        #[arg(long)]
        dataset: Option<String>,
        /// Number of generated instances.
        #[arg(long, default_value_t = 20)]
        instances: usize,
        /// Degrees of generated circulants.
        #[arg(long, value_delimiter = ',', default_values_t = vec![2usize, 3, 4])]
        degrees: Vec<usize>,
        /// Deepest layer checked (from 2).
        #[arg(long, default_value_t = 3)]
        layers: usize,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// One-hop versus two-hop Jacobian mass under a curvature bound.
    Theorem2 {
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long, default_value_t = 12)]
        instances: usize,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Over-smoothing metric across depth, with and without skips.
    Smoothing {
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value_t = 10)]
        layers: usize,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[command(flatten)]
        synth: SynthArgs,
    },
}

fn prepare_out_dir(requested: Option<&Path>, seed: u64) -> Result<PathBuf, CliError> {
    let dir = match requested {
        Some(d) => d.to_path_buf(),
        None => {
            let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            let mut base = PathBuf::from("runs").join(format!("{stamp}-seed{seed}"));
            let mut suffix = 0;
            while base.exists() {
                suffix += 1;
                base = PathBuf::from("runs").join(format!("{stamp}-seed{seed}-{suffix}"));
            }
            base
        }
    };
    if dir.exists() {
        let occupied = std::fs::read_dir(&dir)
            .map_err(|e| CliError::io(format!("cannot inspect {}: {e}", dir.display())))?
            .next()
            .is_some();
        if occupied {
            return Err(CliError::io(format!(
                "output directory {} already contains files; runs are never overwritten",
                dir.display()
            )));
        }
    } else {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(format!("mkdir {}: {e}", dir.display())))?;
    }
    Ok(dir)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut run_cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed;

    let command_name = match &cli.command {
        Command::Ingest { .. } => "ingest",
        Command::Generate { .. } => "generate",
        Command::Train { .. } => "train",
        Command::Embed { .. } => "embed",
        Command::Eval { .. } => "eval",
        Command::Diagnose { .. } => "diagnose",
        Command::SweepK { .. } => "sweep-k",
    };
    let out = prepare_out_dir(cli.out_dir.as_deref(), seed)?;

    match cli.command {
        Command::Ingest { nodes, edges, features, labels } => {
            commands::echo_config(&out, &commands::ConfigEcho { command: command_name, dataset: None, seed, workers: cli.workers, config: &run_cfg })?;
            commands::cmd_ingest(&nodes, &edges, &features, labels.as_deref(), &out)
        }
        Command::Generate { kind, synth } => {
            commands::echo_config(&out, &commands::ConfigEcho { command: command_name, dataset: None, seed, workers: cli.workers, config: &run_cfg })?;
            commands::cmd_generate(&kind, &synth.params(), seed, &out)
        }
        Command::Train { dataset, meta_paths, overrides, synth } => {
            overrides.apply(&mut run_cfg)?;
            commands::echo_config(&out, &commands::ConfigEcho { command: command_name, dataset: Some(&dataset), seed, workers: cli.workers, config: &run_cfg })?;
            commands::cmd_train(&dataset, &meta_paths, &run_cfg, &synth.params(), seed, cli.dump_samples.as_deref(), &out)
        }
        Command::Embed { dataset, run, synth } => {
            commands::cmd_embed(&dataset, &run, &synth.params(), seed, &out)
        }
        Command::Eval { dataset, run, synth } => {
            commands::echo_config(&out, &commands::ConfigEcho { command: command_name, dataset: Some(&dataset), seed, workers: cli.workers, config: &run_cfg })?;
            commands::cmd_eval(&dataset, run.as_deref(), &run_cfg, &synth.params(), seed, &out)
        }
        Command::Diagnose { what } => match what {
            DiagnoseCommand::Curvature { dataset, synth } => {
                commands::echo_config(&out, &commands::ConfigEcho { command: "diagnose curvature", dataset: Some(&dataset), seed, workers: cli.workers, config: &run_cfg })?;
                commands::cmd_diagnose_curvature(&dataset, &synth.params(), seed, &out)
            }
            DiagnoseCommand::Theorem1 { dataset, instances, degrees, layers, synth } => {
                commands::echo_config(&out, &commands::ConfigEcho { command: "diagnose theorem1", dataset: dataset.as_deref(), seed, workers: cli.workers, config: &run_cfg })?;
                commands::cmd_diagnose_theorem1(dataset.as_deref(), &synth.params(), instances, &degrees, layers, seed, &out)
            }
            DiagnoseCommand::Theorem2 { dataset, instances, synth } => {
                commands::echo_config(&out, &commands::ConfigEcho { command: "diagnose theorem2", dataset: dataset.as_deref(), seed, workers: cli.workers, config: &run_cfg })?;
                commands::cmd_diagnose_theorem2(dataset.as_deref(), &synth.params(), instances, seed, &out)
            }
            DiagnoseCommand::Smoothing { dataset, layers, dim, synth } => {
                commands::echo_config(&out, &commands::ConfigEcho { command: "diagnose smoothing", dataset: Some(&dataset), seed, workers: cli.workers, config: &run_cfg })?;
                commands::cmd_diagnose_smoothing(&dataset, &synth.params(), layers, dim, seed, &out)
            }
        },
        Command::SweepK { dataset, k_values, overrides, synth } => {
            overrides.apply(&mut run_cfg)?;
            if k_values.iter().any(|&k| k == 0) {
                return Err(CliError::usage("K values must be >= 1".into()));
            }
            commands::echo_config(&out, &commands::ConfigEcho { command: command_name, dataset: Some(&dataset), seed, workers: cli.workers, config: &run_cfg })?;
            commands::cmd_sweep_k(&dataset, &k_values, &run_cfg, &synth.params(), seed, &out)
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    std::process::exit(0);
                }
                _ => {
                    let first_line = e.to_string().lines().next().unwrap_or("bad arguments").to_string();
                    eprintln!("ERROR usage: {first_line}");
                    std::process::exit(2);
                }
            }
        }
    };

    let workers = cli.workers;
    let result = if workers > 0 {
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(|| run(cli)),
            Err(e) => Err(CliError::internal(format!("cannot build worker pool: {e}"))),
        }
    } else {
        run(cli)
    };

    if let Err(e) = result {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
