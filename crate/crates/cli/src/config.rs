//! Flat key/value run configuration. Defaults follow the reference setup;
//! a TOML file and then `--set key=value` pairs and command flags override
//! them in that order.

use std::path::Path;

use cep3::ar_update::UpdateScope;
use cep3::baselines::{MarkerHead, NeuralConfig};
use cep3::ctdg::SplitSpec;
use cep3::encoder::EncoderConfig;
use cep3::forecaster::HeadKind;
use cep3::training::TrainConfig;
use cep3::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Cep3,
    Poisson,
    Hawkes,
    Rmtpp,
    RmtppHrchy,
    GruGaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F64,
    F32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub time_span: f64,
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub louvain_full_stream: bool,

    pub model: ModelKind,
    pub precision: Precision,
    pub head: HeadKind,
    pub update_scope: UpdateScope,
    pub layers: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub fanout: usize,
    pub time_dim: usize,
    pub uniform_sampling: bool,
    pub forecaster_hidden: usize,
    pub rollout_hops: usize,
    pub message_layers: usize,
    pub literal_first_dt: bool,
    pub mask_self_loops: bool,
    pub pair_budget: usize,

    pub epochs: usize,
    pub lr: f64,
    pub k: usize,
    /// 0 means `k`.
    pub stride: usize,
    pub parallel_windows: usize,
    pub clip_norm: f64,
    /// Write a checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,

    pub embed_dim: usize,
    pub rnn_hidden: usize,
    pub history_len: usize,
    pub baseline_epochs: usize,
    pub baseline_lr: f64,

    pub rollouts: usize,
    pub viz_keep: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            time_span: 1000.0,
            train_frac: 0.70,
            val_frac: 0.15,
            test_frac: 0.15,
            louvain_full_stream: false,
            model: ModelKind::Cep3,
            precision: Precision::F64,
            head: HeadKind::Hierarchical,
            update_scope: UpdateScope::Full,
            layers: 2,
            hidden_dim: 100,
            heads: 4,
            fanout: 15,
            time_dim: 16,
            uniform_sampling: false,
            forecaster_hidden: 50,
            rollout_hops: 2,
            message_layers: 1,
            literal_first_dt: false,
            mask_self_loops: false,
            pair_budget: 1 << 20,
            epochs: 100,
            lr: 1e-4,
            k: 200,
            stride: 0,
            parallel_windows: 1,
            clip_norm: 5.0,
            checkpoint_every: 0,
            embed_dim: 8,
            rnn_hidden: 32,
            history_len: 64,
            baseline_epochs: 20,
            baseline_lr: 5e-3,
            rollouts: 3,
            viz_keep: 0.33,
        }
    }
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_value(value: &str) -> toml::Value {
    format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

impl RunConfig {
    /// Defaults, then `file`, then each `key=value` override.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
                text.parse::<toml::Table>().map_err(|e| CliError::usage(format!("config {}: {}", path.display(), e.message())))?
            }
            None => toml::Table::new(),
        };
        for (key, value) in overrides {
            table.insert(key.clone(), parse_value(value));
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::usage(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: &str| Err(CliError::usage(msg.to_string()));
        self.split().validate().map_err(|e| CliError::usage(e.to_string()))?;
        if !(self.time_span > 0.0) {
            return fail("time_span must be positive");
        }
        if self.hidden_dim == 0 || self.heads == 0 || !self.hidden_dim.is_multiple_of(self.heads) {
            return fail("heads must divide hidden_dim");
        }
        if self.layers == 0 || self.time_dim == 0 || self.forecaster_hidden == 0 || self.message_layers == 0 {
            return fail("layers, time_dim, forecaster_hidden and message_layers must be at least 1");
        }
        if self.k == 0 || self.parallel_windows == 0 || self.rollouts == 0 {
            return fail("k, parallel_windows and rollouts must be at least 1");
        }
        if !(self.lr > 0.0) || !(self.baseline_lr > 0.0) || !(self.clip_norm > 0.0) {
            return fail("lr, baseline_lr and clip_norm must be positive");
        }
        if !(self.viz_keep > 0.0 && self.viz_keep <= 1.0) {
            return fail("viz_keep must lie in (0, 1]");
        }
        if self.embed_dim == 0 || self.rnn_hidden == 0 {
            return fail("embed_dim and rnn_hidden must be at least 1");
        }
        Ok(())
    }

    pub fn split(&self) -> SplitSpec {
        SplitSpec { train: self.train_frac, val: self.val_frac, test: self.test_frac }
    }

    pub fn model_config(&self, edge_feature_dim: usize) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                layers: self.layers,
                hidden_dim: self.hidden_dim,
                heads: self.heads,
                fanout: self.fanout,
                time_dim: self.time_dim,
                edge_feature_dim,
                uniform_sampling_seed: self.uniform_sampling.then_some(self.seed),
            },
            forecaster_hidden: self.forecaster_hidden,
            head: self.head,
            update_scope: self.update_scope,
            rollout_hops: self.rollout_hops,
            message_layers: self.message_layers,
            literal_first_dt: self.literal_first_dt,
            mask_self_loops: self.mask_self_loops,
            pair_budget: self.pair_budget,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            k: self.k,
            stride: (self.stride > 0).then_some(self.stride),
            parallel_windows: self.parallel_windows,
            seed: self.seed,
            clip_norm: self.clip_norm,
            shuffle: true,
        }
    }

    pub fn neural_config(&self, marker: MarkerHead) -> NeuralConfig {
        NeuralConfig {
            marker,
            embed_dim: self.embed_dim,
            hidden_dim: self.rnn_hidden,
            history_len: self.history_len,
            epochs: self.baseline_epochs,
            lr: self.baseline_lr,
            clip_norm: self.clip_norm,
            seed: self.seed,
            pair_budget: self.pair_budget,
        }
    }

    pub fn stride(&self) -> usize {
        if self.stride == 0 {
            self.k
        } else {
            self.stride
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "epochs = 5\nlr = 0.01\nmodel = \"hawkes\"\n").unwrap();
        let cfg = RunConfig::resolve(Some(&path), &[("epochs".into(), "7".into()), ("head".into(), "joint".into())]).unwrap();
        assert_eq!(cfg.epochs, 7);
        assert_eq!(cfg.lr, 0.01);
        assert_eq!(cfg.model, ModelKind::Hawkes);
        assert_eq!(cfg.head, HeadKind::Joint);
        assert_eq!(cfg.hidden_dim, 100);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::resolve(None, &[("epochs".into(), "-1".into())]).is_err());
        assert!(RunConfig::resolve(None, &[("nonsense".into(), "1".into())]).is_err());
        assert!(RunConfig::resolve(None, &[("heads".into(), "3".into())]).is_err());
        assert!(RunConfig::resolve(None, &[("train_frac".into(), "0.9".into())]).is_err());
    }

    #[test]
    fn defaults_roundtrip_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert!(text.parse::<toml::Table>().unwrap().contains_key("parallel_windows"));
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
