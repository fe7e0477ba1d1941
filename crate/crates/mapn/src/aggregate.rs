//! The model forward pass.
//!
//! Pipeline per epoch: project every node's raw features into a shared
//! `dim`-dimensional space with a type-specific affine map, pool content
//! with a bidirectional recurrent encoder, run `layers` rounds of
//! asynchronous multi-hop aggregation (hop rings filtered through a
//! selective scan, with hop-level and layer-level additive skips), then
//! aggregate within and across meta-paths: per path a second pair of
//! bidirectional encoders summarizes each node and its sampled neighbors,
//! attention weights the neighbors, a selective scan filters the weighted
//! sequence, and a final path-level softmax fuses the per-path vectors.
//!
//! Reductions over node sets sum in value-sorted order, so relabeling the
//! graph permutes outputs exactly.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::diff::{sum_tree, ParamStore};
use crate::graph::{HeteroGraph, MetaPath, NodeId};
use crate::sample::{stream_rng, HopRings, TypedNeighborSet};
use crate::ssm::{GatePolicy, SsmParams};
use crate::tensor::Tensor;
use crate::{Tensor64, Value};

const LEAKY_SLOPE: f64 = 0.01;

/// Which sequence the node-level selective scan consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SsmInput {
    /// Attention-scaled neighbor summaries (default reading).
    Weighted,
    /// Raw neighbor summaries.
    Raw,
}

#[derive(Clone, Debug)]
pub struct ModelConfig {
    /// Shared embedding dimension (even; encoders use `dim / 2` hidden units).
    pub dim: usize,
    /// State entries per scan channel.
    pub state_dim: usize,
    /// Hop count of the asynchronous aggregation.
    pub hops: usize,
    /// Number of asynchronous layers.
    pub layers: usize,
    pub ssm_input: SsmInput,
    /// Hop-level and layer-level additive skip connections.
    pub skips: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { dim: 16, state_dim: 16, hops: 2, layers: 2, ssm_input: SsmInput::Weighted, skips: true }
    }
}

/// One direction of a gated recurrent encoder; gate weights packed as
/// `(4h x in)` input map, `(4h x h)` recurrent map, `(4h)` bias.
struct LstmCell {
    w: Value,
    u: Value,
    b: Value,
    hidden: usize,
}

impl LstmCell {
    fn register(store: &mut ParamStore<f64>, prefix: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let w_scale = 2.0 / (input as f64).sqrt();
        let u_scale = 1.0 / (hidden as f64).sqrt();
        let w = Tensor64::from_fn(&[4 * hidden, input], |_| rng.gen_range(-w_scale..w_scale));
        let u = Tensor64::from_fn(&[4 * hidden, hidden], |_| rng.gen_range(-u_scale..u_scale));
        // open input and output gates at init; downstream products need
        // encoder outputs that are not vanishingly small
        let b = Tensor64::from_fn(&[4 * hidden], |i| if i < hidden || (2 * hidden..3 * hidden).contains(&i) { 1.0 } else { 0.0 });
        LstmCell {
            w: store.register(&format!("{prefix}.w"), w).expect("fresh prefix"),
            u: store.register(&format!("{prefix}.u"), u).expect("fresh prefix"),
            b: store.register(&format!("{prefix}.b"), b).expect("fresh prefix"),
            hidden,
        }
    }

    fn from_store(store: &ParamStore<f64>, prefix: &str) -> Self {
        let w = store.expect(&format!("{prefix}.w"));
        let hidden = w.shape()[0] / 4;
        LstmCell { w, u: store.expect(&format!("{prefix}.u")), b: store.expect(&format!("{prefix}.b")), hidden }
    }

    fn step(&self, x: &Value, h: &Value, c: &Value) -> (Value, Value) {
        let z = self.w.matmul(x).add(&self.u.matmul(h)).add(&self.b);
        let hn = self.hidden;
        let i = z.narrow(0, 0, hn).sigmoid();
        let f = z.narrow(0, hn, hn).sigmoid();
        let o = z.narrow(0, 2 * hn, hn).sigmoid();
        let g = z.narrow(0, 3 * hn, hn).tanh();
        let c_next = f.mul(c).add(&i.mul(&g));
        let h_next = o.mul(&c_next.tanh());
        (h_next, c_next)
    }

    /// Hidden state at every position.
    fn run(&self, items: &[Value]) -> Vec<Value> {
        let mut h = Value::constant(Tensor::zeros(&[self.hidden]));
        let mut c = h.clone();
        let mut states = Vec::with_capacity(items.len());
        for x in items {
            let (hn, cn) = self.step(x, &h, &c);
            states.push(hn.clone());
            h = hn;
            c = cn;
        }
        states
    }
}

/// Bidirectional recurrent encoder; per item the forward and backward
/// hidden states are concatenated, so outputs have `2 * hidden` entries.
pub struct BiEncoder {
    fwd: LstmCell,
    bwd: LstmCell,
}

impl BiEncoder {
    fn register(store: &mut ParamStore<f64>, prefix: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        BiEncoder {
            fwd: LstmCell::register(store, &format!("{prefix}.fwd"), input, hidden, rng),
            bwd: LstmCell::register(store, &format!("{prefix}.bwd"), input, hidden, rng),
        }
    }

    fn from_store(store: &ParamStore<f64>, prefix: &str) -> Self {
        BiEncoder { fwd: LstmCell::from_store(store, &format!("{prefix}.fwd")), bwd: LstmCell::from_store(store, &format!("{prefix}.bwd")) }
    }

    /// Per-item `[forward ⊕ backward]` encodings.
    pub fn encode_each(&self, items: &[Value]) -> Vec<Value> {
        assert!(!items.is_empty(), "encoder requires at least one item");
        let f_states = self.fwd.run(items);
        let rev: Vec<Value> = items.iter().rev().cloned().collect();
        let mut b_states = self.bwd.run(&rev);
        b_states.reverse();
        f_states.iter().zip(&b_states).map(|(f, b)| Value::concat(0, &[f.clone(), b.clone()])).collect()
    }

    /// Mean over the per-item encodings.
    pub fn encode_mean(&self, items: &[Value]) -> Value {
        let each = self.encode_each(items);
        crate::diff::mean_of(&each)
    }
}

/// Representations at layers `0..=layers` of the asynchronous aggregation.
pub struct LayerState {
    pub layers: Vec<Vec<Value>>,
}

impl LayerState {
    pub fn input(&self) -> &[Value] {
        &self.layers[0]
    }

    pub fn last(&self) -> &[Value] {
        self.layers.last().expect("at least the input layer")
    }

    /// Plain per-layer numeric snapshots.
    pub fn numeric(&self) -> Vec<Vec<Vec<f64>>> {
        self.layers
            .iter()
            .map(|layer| layer.iter().map(|v| v.data().data().to_vec()).collect())
            .collect()
    }
}

/// Forward-pass output.
pub struct ForwardOutput {
    /// Final per-node embedding: the fused meta-path vector where defined,
    /// otherwise the last asynchronous layer.
    pub z: Vec<Value>,
    pub layer_state: LayerState,
    /// Sum of every attention softmax produced during the pass (each should
    /// be 1 up to roundoff).
    pub softmax_sums: Vec<f64>,
}

impl ForwardOutput {
    pub fn embeddings(&self) -> Vec<Vec<f64>> {
        self.z.iter().map(|v| v.data().data().to_vec()).collect()
    }
}

/// Sum in value-sorted order so results are invariant to node relabeling.
fn canonical_sum(items: &[Value]) -> Value {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&i, &j| {
        let a = items[i].data();
        let b = items[j].data();
        for (x, y) in a.data().iter().zip(b.data()) {
            match x.total_cmp(y) {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        std::cmp::Ordering::Equal
    });
    let sorted: Vec<Value> = order.into_iter().map(|i| items[i].clone()).collect();
    sum_tree(&sorted)
}

fn canonical_mean(items: &[Value]) -> Value {
    canonical_sum(items).scale(1.0 / items.len() as f64)
}

/// Trainable model: parameter store plus the meta-path roster.
pub struct Model {
    pub cfg: ModelConfig,
    pub paths: Vec<MetaPath>,
    pub store: ParamStore<f64>,
    type_maps: Vec<(Value, Value)>,
    content_enc: BiEncoder,
    path_own_enc: Vec<BiEncoder>,
    path_nbr_enc: Vec<BiEncoder>,
    path_attn: Vec<Value>,
    fuse_q: Value,
    ssm_node: SsmParams<f64>,
    ssm_path: SsmParams<f64>,
    ssm_async: SsmParams<f64>,
}

impl Model {
    /// Register all parameters for `graph`'s schema with a seeded init.
    pub fn new(graph: &HeteroGraph, paths: Vec<MetaPath>, cfg: ModelConfig, seed: u64) -> Self {
        assert!(cfg.dim >= 2 && cfg.dim % 2 == 0, "dim must be even, got {}", cfg.dim);
        assert!(cfg.hops >= 1 && cfg.layers >= 1);
        let mut store = ParamStore::new();
        let mut rng = stream_rng(seed, 0x6d61_706e, 0x696e_6974);
        let d = cfg.dim;
        let h = d / 2;

        let mut type_maps = Vec::with_capacity(graph.n_types());
        for t in 0..graph.n_types() {
            let dt = graph.feature_dim(t);
            let scale = 1.0 / (dt.max(1) as f64).sqrt();
            let w = Tensor64::from_fn(&[d, dt], |_| rng.gen_range(-scale..scale));
            let b = Tensor64::zeros(&[d]);
            let name = graph.type_name(t);
            type_maps.push((
                store.register(&format!("type.{name}.weight"), w).expect("fresh store"),
                store.register(&format!("type.{name}.bias"), b).expect("fresh store"),
            ));
        }

        let content_enc = BiEncoder::register(&mut store, "content_enc", d, h, &mut rng);
        let mut path_own_enc = Vec::new();
        let mut path_nbr_enc = Vec::new();
        let mut path_attn = Vec::new();
        for (i, _) in paths.iter().enumerate() {
            path_own_enc.push(BiEncoder::register(&mut store, &format!("path{i}.own"), d, h, &mut rng));
            path_nbr_enc.push(BiEncoder::register(&mut store, &format!("path{i}.nbr"), d, h, &mut rng));
            let scale = 1.0 / (2.0 * d as f64).sqrt();
            let u = Tensor64::from_fn(&[2 * d], |_| rng.gen_range(-scale..scale));
            path_attn.push(store.register(&format!("path{i}.attn_u"), u).expect("fresh store"));
        }
        let q_scale = 1.0 / (d as f64).sqrt();
        let fuse_q = store
            .register("fuse.q", Tensor64::from_fn(&[d], |_| rng.gen_range(-q_scale..q_scale)))
            .expect("fresh store");

        // Node- and path-level scans start as pass-through filters (d = 1):
        // their outputs multiply into other vectors, and a zero feedthrough
        // would collapse the product scale at initialization. The async scan
        // keeps d = 0 so empty neighborhoods contribute nothing.
        let ssm_node = SsmParams::register_with_feedthrough(&mut store, "ssm_node", d, cfg.state_dim, 1.0, &mut rng);
        let ssm_path = SsmParams::register_with_feedthrough(&mut store, "ssm_path", d, cfg.state_dim, 1.0, &mut rng);
        let ssm_async = SsmParams::register(&mut store, "ssm_async", d + 1, cfg.state_dim, &mut rng);

        Model {
            cfg,
            paths,
            store,
            type_maps,
            content_enc,
            path_own_enc,
            path_nbr_enc,
            path_attn,
            fuse_q,
            ssm_node,
            ssm_path,
            ssm_async,
        }
    }

    /// Rebind a model to parameters loaded from a checkpoint.
    pub fn from_store(graph: &HeteroGraph, paths: Vec<MetaPath>, cfg: ModelConfig, store: ParamStore<f64>) -> Self {
        let type_maps = (0..graph.n_types())
            .map(|t| {
                let name = graph.type_name(t);
                (store.expect(&format!("type.{name}.weight")), store.expect(&format!("type.{name}.bias")))
            })
            .collect();
        let content_enc = BiEncoder::from_store(&store, "content_enc");
        let path_own_enc = (0..paths.len()).map(|i| BiEncoder::from_store(&store, &format!("path{i}.own"))).collect();
        let path_nbr_enc = (0..paths.len()).map(|i| BiEncoder::from_store(&store, &format!("path{i}.nbr"))).collect();
        let path_attn = (0..paths.len()).map(|i| store.expect(&format!("path{i}.attn_u"))).collect();
        let fuse_q = store.expect("fuse.q");
        let ssm_node = SsmParams::from_store(&store, "ssm_node", GatePolicy::Input);
        let ssm_path = SsmParams::from_store(&store, "ssm_path", GatePolicy::Input);
        let ssm_async = SsmParams::from_store(&store, "ssm_async", GatePolicy::Input);
        Model {
            cfg,
            paths,
            store,
            type_maps,
            content_enc,
            path_own_enc,
            path_nbr_enc,
            path_attn,
            fuse_q,
            ssm_node,
            ssm_path,
            ssm_async,
        }
    }

    pub fn async_ssm(&self) -> &SsmParams<f64> {
        &self.ssm_async
    }

    /// Project every node's raw content into the shared dimension; one
    /// latent per content block (here: the node's feature row).
    pub fn type_transform(&self, graph: &HeteroGraph) -> Vec<Vec<Value>> {
        (0..graph.n_nodes())
            .map(|v| {
                let t = graph.node_type(v);
                let (w, b) = &self.type_maps[t];
                let x = Value::constant(Tensor::vector(graph.feature_row(v)));
                let latent = w.matmul(&x).add(b);
                assert_eq!(latent.shape(), vec![self.cfg.dim], "type transform must produce dim-{} latents", self.cfg.dim);
                vec![latent]
            })
            .collect()
    }

    /// Pool a node's content latents: bidirectional encoding of the content
    /// sequence, averaged over items.
    pub fn content_aggregate(&self, latents: &[Value]) -> Value {
        assert!(!latents.is_empty(), "content_aggregate on empty content");
        self.content_enc.encode_mean(latents)
    }

    /// One asynchronous layer: per node, the hop sequence of ring means
    /// (nearest to farthest, empty rings as zero vectors with a presence
    /// mask channel) runs through the selective scan; the first `dim`
    /// channels of the last output form the update, combined with hop-level
    /// (previous layer) and layer-level (input layer) additive skips.
    pub fn async_layer(&self, rings: &[HopRings], current: &[Value], input_layer: &[Value]) -> Vec<Value> {
        let d = self.cfg.dim;
        let n = current.len();
        let mut next = Vec::with_capacity(n);
        for v in 0..n {
            let mut items = Vec::with_capacity(self.cfg.hops);
            for i in 0..self.cfg.hops {
                let ring = rings[v].rings.get(i).map(|r| r.as_slice()).unwrap_or(&[]);
                let x = if ring.is_empty() {
                    Value::constant(Tensor::zeros(&[d + 1]))
                } else {
                    let members: Vec<Value> = ring.iter().map(|&w| current[w].clone()).collect();
                    let mean = canonical_mean(&members);
                    Value::concat(0, &[mean, Value::constant(Tensor::vector(vec![1.0]))])
                };
                items.push(x);
            }
            let y = self.ssm_async.filter_set(&items);
            let update = y.narrow(0, 0, d);
            let out = if self.cfg.skips { update.add(&current[v]).add(&input_layer[v]) } else { update };
            assert_eq!(out.shape(), vec![d], "async layer must preserve dim");
            next.push(out);
        }
        next
    }

    /// Run all asynchronous layers from the pooled content layer.
    pub fn async_aggregate(&self, rings: &[HopRings], h0: Vec<Value>) -> LayerState {
        let mut layers = vec![h0];
        for _ in 0..self.cfg.layers {
            let next = self.async_layer(rings, layers.last().expect("nonempty"), &layers[0]);
            layers.push(next);
        }
        LayerState { layers }
    }

    /// Per-path encodings: `own[v]` is the bidirectional encoding of the
    /// node's own content under the path, `q[v]` the encoding of its sampled
    /// terminal-type neighbors' `own` vectors in visit-count order. Nodes
    /// whose terminal list is empty fall back to `own[v]`.
    pub fn intra_path_encode(
        &self,
        path_idx: usize,
        node_inputs: &[Value],
        samples: &[TypedNeighborSet],
    ) -> (Vec<Value>, Vec<Value>) {
        let terminal = self.paths[path_idx].terminal_type();
        let own: Vec<Value> = node_inputs
            .iter()
            .map(|x| self.path_own_enc[path_idx].encode_mean(std::slice::from_ref(x)))
            .collect();
        let q: Vec<Value> = (0..node_inputs.len())
            .map(|v| {
                let list = samples[v].of_type(terminal);
                if list.is_empty() {
                    own[v].clone()
                } else {
                    let items: Vec<Value> = list.iter().map(|&(b, _)| own[b].clone()).collect();
                    self.path_nbr_enc[path_idx].encode_mean(&items)
                }
            })
            .collect();
        (own, q)
    }

    /// Node-level aggregation under one path: attention over the sampled
    /// neighbors, selective-scan filtering of the attention-ordered
    /// sequence, and the filtered output gating the neighbor sum.
    ///
    /// Returns `(Zi, alphas)`.
    pub fn inter_path_node_aggregate(
        &self,
        path_idx: usize,
        center_q: &Value,
        neighbors: &[(NodeId, Value)],
    ) -> (Value, Value) {
        assert!(!neighbors.is_empty(), "inter-path aggregation requires at least one neighbor");
        let u = &self.path_attn[path_idx];
        let logits: Vec<Value> = neighbors
            .iter()
            .map(|(_, q_b)| {
                u.dot(&Value::concat(0, &[center_q.clone(), q_b.clone()])).leaky_relu(LEAKY_SLOPE)
            })
            .collect();
        let alphas = Value::stack(&logits).softmax();

        // scan order: descending attention weight, ties by ascending node id
        let alpha_vals: Vec<f64> = alphas.data().data().to_vec();
        let mut order: Vec<usize> = (0..neighbors.len()).collect();
        order.sort_by(|&i, &j| {
            alpha_vals[j].total_cmp(&alpha_vals[i]).then(neighbors[i].0.cmp(&neighbors[j].0))
        });
        let items: Vec<Value> = order
            .iter()
            .map(|&i| {
                let q_b = &neighbors[i].1;
                match self.cfg.ssm_input {
                    SsmInput::Weighted => q_b.mul(&alphas.narrow(0, i, 1)),
                    SsmInput::Raw => q_b.clone(),
                }
            })
            .collect();
        let y = self.ssm_node.filter_set(&items);
        let scaled: Vec<Value> = order.iter().map(|&i| y.mul(&neighbors[i].1)).collect();
        let zi = sum_tree(&scaled);
        (zi, alphas)
    }

    /// Fuse one node's per-path vectors: path importances softmax-normalize,
    /// the weighted path sequence (fixed roster order) runs through the
    /// path-level scan, and the filtered output gates each path vector.
    ///
    /// Returns `(Z, betas, per-path Zw)`.
    pub fn meta_path_fuse(&self, per_path: &[(usize, Value)]) -> (Value, Value, Vec<Value>) {
        assert!(!per_path.is_empty(), "fuse requires at least one path vector");
        let logits: Vec<Value> = per_path
            .iter()
            .map(|(_, zi)| self.fuse_q.mul(zi).leaky_relu(LEAKY_SLOPE).sum_all())
            .collect();
        let betas = Value::stack(&logits).softmax();
        let items: Vec<Value> =
            per_path.iter().enumerate().map(|(i, (_, zi))| zi.mul(&betas.narrow(0, i, 1))).collect();
        let y = self.ssm_path.filter_set(&items);
        let zw: Vec<Value> = per_path.iter().map(|(_, zi)| y.mul(zi)).collect();
        let z = sum_tree(&zw);
        (z, betas, zw)
    }

    /// Full forward pass.
    pub fn forward(&self, graph: &HeteroGraph, samples: &[TypedNeighborSet], rings: &[HopRings]) -> ForwardOutput {
        let n = graph.n_nodes();
        let contents = self.type_transform(graph);
        let h0: Vec<Value> = contents.iter().map(|c| self.content_aggregate(c)).collect();
        let layer_state = self.async_aggregate(rings, h0);
        let top = layer_state.last().to_vec();

        let mut softmax_sums = Vec::new();
        let mut per_node_paths: Vec<Vec<(usize, Value)>> = vec![Vec::new(); n];
        for (p, path) in self.paths.iter().enumerate() {
            let (_own, q) = self.intra_path_encode(p, &top, samples);
            let terminal = path.terminal_type();
            for &v in graph.nodes_of_type(path.anchor_type()) {
                let list = samples[v].of_type(terminal);
                if list.is_empty() {
                    continue; // no sampled neighbors under this path
                }
                let neighbors: Vec<(NodeId, Value)> = list.iter().map(|&(b, _)| (b, q[b].clone())).collect();
                let (zi, alphas) = self.inter_path_node_aggregate(p, &q[v], &neighbors);
                softmax_sums.push(alphas.data().sum());
                per_node_paths[v].push((p, zi));
            }
        }

        let z: Vec<Value> = (0..n)
            .map(|v| {
                if per_node_paths[v].is_empty() {
                    top[v].clone()
                } else {
                    let (z, betas, _) = self.meta_path_fuse(&per_node_paths[v]);
                    softmax_sums.push(betas.data().sum());
                    z
                }
            })
            .collect();
        for zv in &z {
            assert_eq!(zv.shape(), vec![self.cfg.dim], "final embedding must have dim {}", self.cfg.dim);
        }
        ForwardOutput { z, layer_state, softmax_sums }
    }
}
