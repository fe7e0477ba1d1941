//! Heterogeneous-graph representation learning at desk scale.
//!
//! The crate is organized around a small dense-tensor / reverse-mode
//! differentiation core that is generic over the scalar type (`f32`/`f64`
//! via [`scalar::Real`]), with the graph pipeline pinned to `f64` through
//! the aliases exported at the crate root. The pipeline itself:
//!
//! * [`graph`] — immutable typed graphs, ingestion, synthetic generators,
//!   Laplacian positional encoding.
//! * [`sample`] — random walk with restart, typed top-k neighbor selection,
//!   meta-path walks, shortest-path hop rings, training triples.
//! * [`diff`] — the autodiff engine and parameter store.
//! * [`ssm`] — discretized selective state-space scans (numeric and
//!   differentiable).
//! * [`aggregate`] — the full forward pass: type-specific transforms,
//!   bidirectional recurrent encoders, intra/inter meta-path attention with
//!   state-space filtering, asynchronous multi-hop aggregation.
//! * [`train`] — negative-sampling objective, AdamW, schedulers, the
//!   training loop.
//! * [`eval`] — frozen-embedding probes and classification metrics.
//! * [`diagnose`] — exact Ollivier-Ricci curvature, Jacobian sensitivity,
//!   gradient-decay checks, over-smoothing metrics.
//! * [`reference`] — independent slow-path implementations (exhaustive
//!   transport plans, Floyd-Warshall, stationary distributions) used by the
//!   verification suites.

pub mod aggregate;
pub mod diagnose;
pub mod diff;
pub mod eval;
pub mod graph;
pub mod reference;
pub mod sample;
pub mod scalar;
pub mod ssm;
pub mod tensor;
pub mod train;

/// Scalar type used by the concrete pipeline.
pub type Scalar = f64;
/// Dense array of the pipeline scalar.
pub type Tensor64 = tensor::Tensor<f64>;
/// Differentiable value over the pipeline scalar.
pub type Value = diff::DiffValue<f64>;
/// Parameter store over the pipeline scalar.
pub type ParamStore64 = diff::ParamStore<f64>;

/// Differentiable selective-scan parameters over the pipeline scalar.
pub type SsmParams64 = ssm::SsmParams<f64>;
