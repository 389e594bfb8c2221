//! Run configuration: a versioned JSON schema with two presets.
//!
//! `desk` is the default CPU-minutes-scale experiment; `paper` keeps the
//! published hyperparameter table values (30 iterations, 5000 policy steps
//! per round). Every artifact file embeds the config hash so runs are
//! auditable.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::advgen::AscentConfig;
use crate::embed::EmbedConfig;
use crate::env::DistributionConfig;
use crate::error::{Error, Result};
use crate::grasp::GraspConfig;
use crate::policy::PolicyConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetParams {
    pub train_count: usize,
    pub test_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub grid_size: usize,
    pub dataset: DatasetParams,
    pub train_dist: DistributionConfig,
    pub test_dist: DistributionConfig,
    pub grasp: GraspConfig,
    pub policy: PolicyConfig,
    /// Policy steps for the pre-training round and for each retraining.
    pub policy_steps_pretrain: usize,
    pub policy_steps_retrain: usize,
    pub embed: EmbedConfig,
    pub ascent: AscentConfig,
    /// Minimax iterations.
    pub iterations: u32,
    /// New environments per iteration for every augmenting method.
    pub k_per_iteration: usize,
    /// Noise level of the Gaussian augmentation baseline.
    pub gaussian_sigma: f64,
    pub eval_frictions: Vec<f64>,
    /// Environments per train-success evaluation subsample.
    pub train_eval_cap: usize,
}

impl ExperimentConfig {
    pub fn desk() -> Self {
        ExperimentConfig {
            schema_version: crate::SCHEMA_VERSION,
            grid_size: 16,
            dataset: DatasetParams {
                train_count: 200,
                test_count: 200,
            },
            train_dist: DistributionConfig::default_train(),
            test_dist: DistributionConfig::default_test(),
            grasp: GraspConfig::default(),
            policy: PolicyConfig::default(),
            policy_steps_pretrain: 1000,
            policy_steps_retrain: 1000,
            embed: EmbedConfig::default(),
            ascent: AscentConfig::default(),
            iterations: 10,
            k_per_iteration: 96,
            gaussian_sigma: 0.05,
            eval_frictions: vec![0.3, 0.4, 0.5],
            train_eval_cap: 200,
        }
    }

    pub fn paper() -> Self {
        ExperimentConfig {
            policy_steps_pretrain: 5000,
            policy_steps_retrain: 5000,
            iterations: 30,
            ..ExperimentConfig::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(Error::usage(format!(
                "unknown preset '{other}' (expected 'desk' or 'paper')"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != crate::SCHEMA_VERSION {
            return Err(Error::config(format!(
                "config schema version {} does not match tool schema {}",
                self.schema_version,
                crate::SCHEMA_VERSION
            )));
        }
        if self.grid_size < 8 {
            return Err(Error::config("grid_size must be at least 8"));
        }
        self.train_dist.validate()?;
        self.test_dist.validate()?;
        DistributionConfig::check_shift(&self.train_dist, &self.test_dist)?;
        if self.dataset.train_count == 0 || self.dataset.test_count == 0 {
            return Err(Error::config("dataset counts must be positive"));
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations must be >= 1"));
        }
        if self.eval_frictions.is_empty() {
            return Err(Error::config("eval_frictions must not be empty"));
        }
        if !(self.gaussian_sigma >= 0.0) {
            return Err(Error::config("gaussian_sigma must be >= 0"));
        }
        if self.ascent.eta <= 0.0 || self.ascent.lambda < 0.0 || self.ascent.max_steps == 0 {
            return Err(Error::config("ascent needs eta > 0, lambda >= 0, steps >= 1"));
        }
        if !(0.0..=1.0).contains(&self.ascent.target_fraction) {
            return Err(Error::config("ascent target_fraction must be in [0, 1]"));
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical (field-ordered) JSON encoding.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex_digest(canonical.as_bytes())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// A full run request: experiment config plus method and master seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: String,
    pub seed: u64,
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.experiment.validate()?;
        if !crate::augment::strategy_names().contains(&self.method.as_str()) {
            return Err(Error::usage(format!(
                "unknown method '{}'; available: {}",
                self.method,
                crate::augment::strategy_names().join(", ")
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        ExperimentConfig::desk().validate().unwrap();
        ExperimentConfig::paper().validate().unwrap();
        assert!(ExperimentConfig::preset("nope").is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::desk();
        let mut b = ExperimentConfig::desk();
        assert_eq!(a.hash(), b.hash());
        b.k_per_iteration = 97;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn json_round_trip() {
        let a = ExperimentConfig::desk();
        let b = ExperimentConfig::from_json(&a.to_json_pretty()).unwrap();
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn identical_dists_are_rejected() {
        let mut cfg = ExperimentConfig::desk();
        cfg.test_dist = cfg.train_dist.clone();
        assert!(cfg.validate().is_err());
    }
}
