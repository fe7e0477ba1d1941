//! Training: negative-sampling objective, AdamW with decoupled weight
//! decay, learning-rate schedules, and the full loop (sample once, forward,
//! backward, step, checkpoint best).

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{Model, ModelConfig, SsmInput};
use crate::diff::{sum_tree, DiffError, ParamStore, StoreError};
use crate::graph::{lappe, GraphError, HeteroGraph, MetaPath};
use crate::sample::{rings_all, sample_all, sample_triples, SampleError, TripleSet, WalkConfig};
use crate::tensor::Tensor;
use crate::{Tensor64, Value};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training triples were sampled")]
    EmptyTriples,
    #[error("non-finite loss at epoch {0}; aborting")]
    NonFinite(usize),
    #[error("non-finite gradient in parameter {0:?}")]
    NonFiniteGrad(String),
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SchedulerKind {
    CosineWarmRestarts { t0: usize, t_mult: usize },
    ReduceOnPlateau { factor: f64, patience: usize },
    None,
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub scheduler: SchedulerKind,
    /// Hop count of the asynchronous aggregation.
    pub hops: usize,
    /// Asynchronous layer count.
    pub layers: usize,
    pub dim: usize,
    pub state_dim: usize,
    pub seed: u64,
    pub negatives_per_positive: usize,
    pub window: usize,
    pub use_lap_pe: bool,
    pub lap_pe_k: usize,
    /// Refresh walks/triples every E epochs (0 = sample once).
    pub resample_every: usize,
    /// Add a supervised cross-entropy head on labeled nodes (ablation).
    pub supervised: bool,
    pub ssm_input: SsmInput,
    pub walk: WalkConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.1,
            weight_decay: 0.0,
            max_epochs: 500,
            scheduler: SchedulerKind::CosineWarmRestarts { t0: 50, t_mult: 2 },
            hops: 2,
            layers: 2,
            dim: 16,
            state_dim: 16,
            seed: 0,
            negatives_per_positive: 1,
            window: 2,
            use_lap_pe: false,
            lap_pe_k: 4,
            resample_every: 0,
            supervised: false,
            ssm_input: SsmInput::Weighted,
            walk: WalkConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.lr <= 0.0 {
            return Err(TrainError::InvalidConfig(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.max_epochs == 0 {
            return Err(TrainError::InvalidConfig("max_epochs must be >= 1".into()));
        }
        if self.hops == 0 || self.layers == 0 {
            return Err(TrainError::InvalidConfig("hops and layers must be >= 1".into()));
        }
        if self.dim < 2 || self.dim % 2 != 0 {
            return Err(TrainError::InvalidConfig(format!("dim must be even and >= 2, got {}", self.dim)));
        }
        self.walk.validate()?;
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            dim: self.dim,
            state_dim: self.state_dim,
            hops: self.hops,
            layers: self.layers,
            ssm_input: self.ssm_input,
            skips: true,
        }
    }
}

/// Mean negative-sampling loss over triples:
/// `-log sigmoid(z_a . z_b) - log sigmoid(-z_a . z_b')`.
pub fn nce_loss(embeddings: &[Value], triples: &[(usize, usize, usize)]) -> Result<Value, TrainError> {
    if triples.is_empty() {
        return Err(TrainError::EmptyTriples);
    }
    let terms: Vec<Value> = triples
        .iter()
        .map(|&(a, b, neg)| {
            let pos = embeddings[a].dot(&embeddings[b]).sigmoid().log().neg();
            let negative = embeddings[a].dot(&embeddings[neg]).neg().sigmoid().log().neg();
            pos.add(&negative)
        })
        .collect();
    Ok(sum_tree(&terms).scale(1.0 / terms.len() as f64))
}

/// AdamW with decoupled weight decay (decay applied before the adaptive
/// step), betas (0.9, 0.999), eps 1e-8.
pub struct AdamW {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    m: BTreeMap<String, Tensor64>,
    v: BTreeMap<String, Tensor64>,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamW { lr, betas: (0.9, 0.999), eps: 1e-8, weight_decay, t: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }

    /// Apply one update from the gradients currently stored in `store`.
    pub fn step(&mut self, store: &ParamStore<f64>) -> Result<(), TrainError> {
        self.t += 1;
        let (b1, b2) = self.betas;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for (name, value) in store.iter() {
            let grad = value.grad();
            if !grad.all_finite() {
                return Err(TrainError::NonFiniteGrad(name.to_string()));
            }
            let mut theta = value.data().clone();
            if self.weight_decay != 0.0 {
                theta = theta.map(|x| x - self.lr * self.weight_decay * x);
            }
            let m = self
                .m
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(theta.shape()));
            let v = self
                .v
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(theta.shape()));
            for i in 0..theta.len() {
                let g = grad.data()[i];
                m.data_mut()[i] = b1 * m.data()[i] + (1.0 - b1) * g;
                v.data_mut()[i] = b2 * v.data()[i] + (1.0 - b2) * g * g;
                let mhat = m.data()[i] / bc1;
                let vhat = v.data()[i] / bc2;
                theta.data_mut()[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            value.set_data(theta);
        }
        Ok(())
    }
}

/// Learning-rate schedule state.
pub enum Scheduler {
    Cosine { lr0: f64, lr_min: f64, t_cur: usize, t_i: usize, t_mult: usize },
    Plateau { lr: f64, factor: f64, patience: usize, best: f64, bad: usize },
    Constant { lr: f64 },
}

impl Scheduler {
    pub fn new(kind: &SchedulerKind, lr0: f64) -> Self {
        match *kind {
            SchedulerKind::CosineWarmRestarts { t0, t_mult } => Scheduler::Cosine {
                lr0,
                lr_min: 0.0,
                t_cur: 0,
                t_i: t0.max(1),
                t_mult: t_mult.max(1),
            },
            SchedulerKind::ReduceOnPlateau { factor, patience } => {
                Scheduler::Plateau { lr: lr0, factor, patience, best: f64::INFINITY, bad: 0 }
            }
            SchedulerKind::None => Scheduler::Constant { lr: lr0 },
        }
    }

    /// Cosine value at phase `t_cur` within a cycle of length `t_i`.
    pub fn cosine_lr(lr0: f64, lr_min: f64, t_cur: usize, t_i: usize) -> f64 {
        lr_min + (lr0 - lr_min) * (1.0 + (std::f64::consts::PI * t_cur as f64 / t_i as f64).cos()) / 2.0
    }

    /// Learning rate for the current epoch.
    pub fn lr(&self) -> f64 {
        match self {
            Scheduler::Cosine { lr0, lr_min, t_cur, t_i, .. } => Self::cosine_lr(*lr0, *lr_min, *t_cur, *t_i),
            Scheduler::Plateau { lr, .. } => *lr,
            Scheduler::Constant { lr } => *lr,
        }
    }

    /// Advance one epoch, observing its loss.
    pub fn step(&mut self, loss: f64) {
        match self {
            Scheduler::Cosine { t_cur, t_i, t_mult, .. } => {
                *t_cur += 1;
                if *t_cur >= *t_i {
                    *t_cur = 0;
                    *t_i *= *t_mult;
                }
            }
            Scheduler::Plateau { lr, factor, patience, best, bad } => {
                if loss < *best - 1e-12 {
                    *best = loss;
                    *bad = 0;
                } else {
                    *bad += 1;
                    if *bad > *patience {
                        *lr *= *factor;
                        *bad = 0;
                    }
                }
            }
            Scheduler::Constant { .. } => {}
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metrics {
    pub epochs: Vec<EpochRecord>,
    pub final_loss: f64,
    pub best_loss: f64,
    pub best_epoch: usize,
    pub wall_ms: u64,
    pub stopped_early: bool,
}

pub struct TrainResult {
    pub model: Model,
    pub metrics: Metrics,
    /// Serialized parameters of the best-loss epoch.
    pub best_checkpoint: Vec<u8>,
    /// The graph actually trained on (positional encodings appended when
    /// enabled).
    pub graph: HeteroGraph,
    /// Final embeddings under the best parameters.
    pub embeddings: Vec<Vec<f64>>,
}

fn merged_triples(
    graph: &HeteroGraph,
    paths: &[MetaPath],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<(usize, usize, usize)>, TrainError> {
    let mut walk = cfg.walk.clone();
    walk.seed = seed;
    let mut all = Vec::new();
    for path in paths {
        let set: TripleSet = sample_triples(graph, path, cfg.window, cfg.negatives_per_positive, &walk)?;
        all.extend(set.triples);
    }
    Ok(all)
}

/// Full training run. Sampling is cached across epochs (refresh with
/// `resample_every`); the best-loss parameters are checkpointed and define
/// the returned embeddings.
pub fn train(graph: &HeteroGraph, paths: &[MetaPath], cfg: &TrainConfig) -> Result<TrainResult, TrainError> {
    cfg.validate()?;
    for p in paths {
        p.validate(graph)?;
    }
    let started = Instant::now();

    let graph = if cfg.use_lap_pe {
        let pe = lappe::lap_pe(graph, cfg.lap_pe_k)?;
        graph.append_node_features(&pe.encodings)
    } else {
        graph.clone()
    };

    let mut walk = cfg.walk.clone();
    walk.seed = cfg.seed;
    let mut samples = sample_all(&graph, &walk);
    let rings = rings_all(&graph, cfg.hops);
    let mut triples = merged_triples(&graph, paths, cfg, cfg.seed)?;
    if triples.is_empty() {
        return Err(TrainError::EmptyTriples);
    }

    let mut model = Model::new(&graph, paths.to_vec(), cfg.model_config(), cfg.seed);

    // Optional supervised head (ablation): affine map to class logits.
    let supervised_head = if cfg.supervised {
        let labels = graph.labels().ok_or_else(|| {
            TrainError::InvalidConfig("supervised head requires node labels".into())
        })?;
        let n_classes = labels.iter().flatten().copied().max().map(|c| c + 1).unwrap_or(0);
        if n_classes < 2 {
            return Err(TrainError::InvalidConfig("supervised head requires >= 2 classes".into()));
        }
        let scale = 1.0 / (cfg.dim as f64).sqrt();
        let mut rng = crate::sample::stream_rng(cfg.seed, 0x68656164, 1);
        use rand::Rng;
        let w = Tensor64::from_fn(&[n_classes, cfg.dim], |_| rng.gen_range(-scale..scale));
        let b = Tensor64::zeros(&[n_classes]);
        let w = model.store.register("head.weight", w)?;
        let b = model.store.register("head.bias", b)?;
        Some((w, b))
    } else {
        None
    };

    let mut optimizer = AdamW::new(cfg.lr, cfg.weight_decay);
    let mut scheduler = Scheduler::new(&cfg.scheduler, cfg.lr);

    let mut records = Vec::with_capacity(cfg.max_epochs);
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_checkpoint: Vec<u8> = Vec::new();
    let mut stopped_early = false;

    for epoch in 0..cfg.max_epochs {
        if cfg.resample_every > 0 && epoch > 0 && epoch % cfg.resample_every == 0 {
            walk.seed = cfg.seed.wrapping_add(epoch as u64);
            samples = sample_all(&graph, &walk);
            triples = merged_triples(&graph, paths, cfg, walk.seed)?;
        }
        let epoch_start = Instant::now();
        let lr = scheduler.lr();
        optimizer.lr = lr;

        model.store.zero_grad();
        let out = model.forward(&graph, &samples, &rings);
        let mut loss = nce_loss(&out.z, &triples)?;
        if let Some((w, b)) = &supervised_head {
            loss = loss.add(&supervised_ce(&out.z, &graph, w, b));
        }
        let loss_value = loss.item();
        if !loss_value.is_finite() {
            records.push(EpochRecord {
                epoch,
                loss: loss_value,
                lr,
                wall_ms: epoch_start.elapsed().as_millis() as u64,
            });
            stopped_early = true;
            break;
        }
        loss.backward()?;
        optimizer.step(&model.store)?;
        scheduler.step(loss_value);

        if loss_value < best_loss {
            best_loss = loss_value;
            best_epoch = epoch;
            best_checkpoint.clear();
            model.store.save(&mut best_checkpoint)?;
        }
        records.push(EpochRecord {
            epoch,
            loss: loss_value,
            lr,
            wall_ms: epoch_start.elapsed().as_millis() as u64,
        });
    }

    // Restore the best parameters before producing embeddings.
    if !best_checkpoint.is_empty() {
        let best = ParamStore::load(&best_checkpoint[..])?;
        model.store.load_values_from(&best)?;
    }
    let out = model.forward(&graph, &samples, &rings);
    let embeddings = out.embeddings();

    let final_loss = records.last().map(|r| r.loss).unwrap_or(f64::NAN);
    Ok(TrainResult {
        model,
        metrics: Metrics {
            epochs: records,
            final_loss,
            best_loss,
            best_epoch,
            wall_ms: started.elapsed().as_millis() as u64,
            stopped_early,
        },
        best_checkpoint,
        graph,
        embeddings,
    })
}

/// Cross-entropy of the affine head over all labeled nodes.
fn supervised_ce(z: &[Value], graph: &HeteroGraph, w: &Value, b: &Value) -> Value {
    let labels = graph.labels().expect("labels checked at setup");
    let mut terms = Vec::new();
    for (v, label) in labels.iter().enumerate() {
        if let Some(class) = label {
            let logits = w.matmul(&z[v]).add(b);
            let p = logits.softmax().narrow(0, *class, 1).sum_all();
            terms.push(p.log().neg());
        }
    }
    sum_tree(&terms).scale(1.0 / terms.len() as f64)
}
