//! Run configuration: JSON file sections with CLI-flag overrides (flags
//! win). Unknown keys are rejected; the effective configuration is echoed
//! into every output bundle.

use std::path::Path;

use serde::{Deserialize, Serialize};

use mapn::aggregate::SsmInput;
use mapn::sample::WalkConfig;
use mapn::train::{SchedulerKind, TrainConfig};

use crate::CliError;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub scheduler: SchedulerKind,
    pub hops: usize,
    pub layers: usize,
    pub dim: usize,
    pub state_dim: usize,
    pub negatives_per_positive: usize,
    pub window: usize,
    pub use_lap_pe: bool,
    pub lap_pe_k: usize,
    pub resample_every: usize,
    pub supervised: bool,
    pub ssm_input: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            lr: d.lr,
            weight_decay: d.weight_decay,
            epochs: d.max_epochs,
            scheduler: d.scheduler,
            hops: d.hops,
            layers: d.layers,
            dim: d.dim,
            state_dim: d.state_dim,
            negatives_per_positive: d.negatives_per_positive,
            window: d.window,
            use_lap_pe: d.use_lap_pe,
            lap_pe_k: d.lap_pe_k,
            resample_every: d.resample_every,
            supervised: d.supervised,
            ssm_input: "weighted".to_string(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct WalkSection {
    pub restart_p: f64,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub k_default: usize,
}

impl Default for WalkSection {
    fn default() -> Self {
        let d = WalkConfig::default();
        WalkSection {
            restart_p: d.restart_p,
            walk_length: d.walk_length,
            walks_per_node: d.walks_per_node,
            k_default: d.k_default,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub splits: usize,
    pub folds: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    /// Mean-aggregation depth for graph-corpus readouts.
    pub readout_layers: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            splits: 10,
            folds: 10,
            train_fraction: 0.6,
            val_fraction: 0.2,
            test_fraction: 0.2,
            readout_layers: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    pub p_norm: f64,
    pub instances: usize,
    pub degrees: Vec<usize>,
    pub layers: usize,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection { p_norm: 2.0, instances: 20, degrees: vec![2, 3, 4], layers: 3 }
    }
}

/// Whole config file; all sections optional with defaults.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub train: TrainSection,
    pub walk: WalkSection,
    pub eval: EvalSection,
    pub diagnostics: DiagnosticsSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("bad config {}: {e}", path.display())))
    }

    /// Assemble the library-level train config, applying the given seed.
    pub fn train_config(&self, seed: u64) -> Result<TrainConfig, CliError> {
        let ssm_input = match self.train.ssm_input.as_str() {
            "weighted" => SsmInput::Weighted,
            "raw" => SsmInput::Raw,
            other => return Err(CliError::usage(format!("ssm_input must be weighted|raw, got {other:?}"))),
        };
        Ok(TrainConfig {
            lr: self.train.lr,
            weight_decay: self.train.weight_decay,
            max_epochs: self.train.epochs,
            scheduler: self.train.scheduler.clone(),
            hops: self.train.hops,
            layers: self.train.layers,
            dim: self.train.dim,
            state_dim: self.train.state_dim,
            seed,
            negatives_per_positive: self.train.negatives_per_positive,
            window: self.train.window,
            use_lap_pe: self.train.use_lap_pe,
            lap_pe_k: self.train.lap_pe_k,
            resample_every: self.train.resample_every,
            supervised: self.train.supervised,
            ssm_input,
            walk: WalkConfig {
                restart_p: self.walk.restart_p,
                walk_length: self.walk.walk_length,
                walks_per_node: self.walk.walks_per_node,
                k_default: self.walk.k_default,
                k_per_type: Default::default(),
                seed,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_library() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.train.lr, 0.1);
        assert_eq!(cfg.train.epochs, 500);
        let tc = cfg.train_config(7).unwrap();
        assert_eq!(tc.seed, 7);
        assert_eq!(tc.walk.seed, 7);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = r#"{ "train": { "lr": 0.1, "bogus": 3 } }"#;
        let parsed: Result<RunConfig, _> = serde_json::from_str(text);
        assert!(parsed.is_err());
    }

    #[test]
    fn partial_sections_accepted() {
        let text = r#"{ "train": { "lr": 0.01 } }"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.train.lr, 0.01);
        assert_eq!(cfg.train.epochs, 500);
    }
}
