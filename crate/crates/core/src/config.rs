use marc_envs::EnvConfig;
use marc_gnn::{EncoderConfig, EntitySource, LayerRegistry};
use marc_relgraph::{preset_is_continuous, RelationOptions};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Learner hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgoConfig {
    pub gamma: f64,
    pub tau: f64,
    /// Entropy coefficient.
    pub alpha: f64,
    pub critic_lr: f64,
    pub policy_lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Environment steps between update rounds.
    pub update_interval: u64,
    pub updates_per_interval: usize,
    pub critic_hidden: usize,
    pub policy_hidden: usize,
    pub reward_normalization: bool,
    /// Expected value over agent i's own next action instead of one sample.
    pub analytic_target: bool,
    /// Score-function policy gradient on one sampled own action.
    pub sampled_pg: bool,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.001,
            alpha: 0.01,
            critic_lr: 1e-3,
            policy_lr: 1e-3,
            batch_size: 1024,
            buffer_capacity: 100_000,
            update_interval: 100,
            updates_per_interval: 4,
            critic_hidden: 128,
            policy_hidden: 128,
            reward_normalization: true,
            analytic_target: false,
            sampled_pg: false,
        }
    }
}

/// Everything that determines a training run apart from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub env: EnvConfig,
    #[serde(default)]
    pub algo: AlgoConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    /// Relation preset name.
    #[serde(default = "default_relations")]
    pub relations: String,
    #[serde(default)]
    pub relation_options: RelationOptions,
    #[serde(default)]
    pub entities: EntitySource,
    #[serde(default = "default_total_steps")]
    pub total_steps: u64,
    /// Greedy evaluation cadence in env steps; 0 evaluates only at the end.
    #[serde(default)]
    pub eval_every: u64,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
}

fn default_relations() -> String {
    "default".into()
}

fn default_total_steps() -> u64 {
    300_000
}

fn default_eval_episodes() -> usize {
    100
}

impl TrainingConfig {
    /// Defaults for `env`, with the relation preset matching its domain.
    pub fn for_env(env: EnvConfig) -> Self {
        let relations = if env.is_grid() {
            default_relations()
        } else {
            "continuous-default".into()
        };
        Self {
            env,
            algo: AlgoConfig::default(),
            encoder: EncoderConfig::default(),
            relations,
            relation_options: RelationOptions::default(),
            entities: EntitySource::default(),
            total_steps: default_total_steps(),
            eval_every: 0,
            eval_episodes: default_eval_episodes(),
        }
    }

    /// Collects every problem instead of stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if let Err(e) = self.env.validate() {
            problems.push(e.to_string());
        }
        let a = &self.algo;
        if !(a.gamma > 0.0 && a.gamma <= 1.0) {
            problems.push(format!("algo.gamma must lie in (0, 1], got {}", a.gamma));
        }
        if !(a.tau > 0.0 && a.tau <= 1.0) {
            problems.push(format!("algo.tau must lie in (0, 1], got {}", a.tau));
        }
        if !(a.alpha >= 0.0 && a.alpha.is_finite()) {
            problems.push(format!("algo.alpha must be a non-negative number, got {}", a.alpha));
        }
        for (name, lr) in [("critic_lr", a.critic_lr), ("policy_lr", a.policy_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                problems.push(format!("algo.{name} must be positive, got {lr}"));
            }
        }
        for (name, n) in [
            ("batch_size", a.batch_size),
            ("buffer_capacity", a.buffer_capacity),
            ("updates_per_interval", a.updates_per_interval),
            ("critic_hidden", a.critic_hidden),
            ("policy_hidden", a.policy_hidden),
        ] {
            if n == 0 {
                problems.push(format!("algo.{name} must be positive"));
            }
        }
        if a.update_interval == 0 {
            problems.push("algo.update_interval must be positive".into());
        }
        if a.batch_size > a.buffer_capacity {
            problems.push(format!(
                "algo.batch_size {} exceeds algo.buffer_capacity {}",
                a.batch_size, a.buffer_capacity
            ));
        }
        if self.encoder.layers == 0 || self.encoder.embed_dim == 0 {
            problems.push("encoder.layers and encoder.embed_dim must be positive".into());
        }
        let registry = LayerRegistry::default();
        if !registry.contains(&self.encoder.architecture) {
            problems.push(format!(
                "unknown encoder.architecture '{}' (valid: {})",
                self.encoder.architecture,
                registry.names().join(", ")
            ));
        }
        match preset_is_continuous(&self.relations) {
            Ok(continuous) if continuous == self.env.is_grid() => problems.push(format!(
                "relation preset '{}' is for {} worlds but {} is {}",
                self.relations,
                if continuous { "continuous" } else { "grid" },
                self.env.name(),
                if self.env.is_grid() { "a grid" } else { "continuous" },
            )),
            Ok(_) => {}
            Err(e) => problems.push(e.to_string()),
        }
        if self.entities == EntitySource::Grid && !self.env.is_grid() {
            problems.push(format!("grid entities need a grid environment, {} is continuous", self.env.name()));
        }
        if self.eval_episodes == 0 {
            problems.push("eval_episodes must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CoreError::Config(problems))
        }
    }
}
