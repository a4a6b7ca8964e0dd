use std::path::{Path, PathBuf};

use marc_core::{AlgoConfig, TrainingConfig};
use marc_envs::EnvConfig;
use marc_gnn::{EncoderConfig, EntitySource};
use marc_relgraph::RelationOptions;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// A complete experiment: the training setup plus seeds and output plumbing.
/// Written back to the output directory fully resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Relative paths resolve against the working directory.
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_total_steps")]
    pub total_steps: u64,
    /// 0 evaluates only at the end.
    #[serde(default)]
    pub eval_every: u64,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    /// 0 writes only the final checkpoint.
    #[serde(default)]
    pub checkpoint_every: u64,
    /// Spacing of the learning-curve points; 0 picks total_steps / 100.
    #[serde(default)]
    pub log_every: u64,
    /// Episodes averaged into each learning-curve point.
    #[serde(default = "default_window")]
    pub curve_window: usize,
    #[serde(default)]
    pub parallel: bool,
    #[serde(default = "default_relations")]
    pub relations: String,
    #[serde(default)]
    pub entities: EntitySource,
    pub env: EnvConfig,
    #[serde(default)]
    pub algo: AlgoConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub relation_options: RelationOptions,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

fn default_total_steps() -> u64 {
    300_000
}

fn default_eval_episodes() -> usize {
    100
}

fn default_window() -> usize {
    100
}

fn default_relations() -> String {
    "default".into()
}

impl RunConfig {
    /// Defaults around `env`, with the relation preset matching its domain.
    pub fn for_env(env: EnvConfig) -> Self {
        let t = TrainingConfig::for_env(env);
        Self {
            seeds: default_seeds(),
            output: default_output(),
            total_steps: t.total_steps,
            eval_every: t.eval_every,
            eval_episodes: t.eval_episodes,
            checkpoint_every: 0,
            log_every: 0,
            curve_window: default_window(),
            parallel: false,
            relations: t.relations,
            entities: t.entities,
            env: t.env,
            algo: t.algo,
            encoder: t.encoder,
            relation_options: t.relation_options,
        }
    }

    pub fn training(&self) -> TrainingConfig {
        TrainingConfig {
            env: self.env.clone(),
            algo: self.algo.clone(),
            encoder: self.encoder.clone(),
            relations: self.relations.clone(),
            relation_options: self.relation_options,
            entities: self.entities,
            total_steps: self.total_steps,
            eval_every: self.eval_every,
            eval_episodes: self.eval_episodes,
        }
    }

    pub fn curve_step(&self) -> u64 {
        if self.log_every > 0 {
            self.log_every
        } else {
            (self.total_steps / 100).max(1)
        }
    }

    /// Every problem in one report.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if let Err(e) = self.training().validate() {
            match e {
                marc_core::CoreError::Config(p) => problems.extend(p),
                other => problems.push(other.to_string()),
            }
        }
        if self.seeds.is_empty() {
            problems.push("seeds must list at least one seed".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            problems.push("seeds must be distinct".into());
        }
        if self.curve_window == 0 {
            problems.push("curve_window must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(problems))
        }
    }

    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Parse {
            path: origin.into(),
            detail: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    /// Applies `key=value` with a dotted key, e.g. `algo.alpha=0.05`.
    pub fn with_override(&self, assignment: &str) -> Result<Self> {
        let (key, value) = split_assignment(assignment)?;
        let mut tree = toml::Value::try_from(self).expect("run configs always serialize");
        set_dotted(&mut tree, key, parse_value(value))?;
        let text = toml::to_string(&tree).expect("toml values always serialize");
        Self::from_toml(&text, &format!("override {assignment}"))
    }
}

pub(crate) fn split_assignment(assignment: &str) -> Result<(&str, &str)> {
    match assignment.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim(), v.trim())),
        _ => Err(CliError::OverrideSyntax(assignment.into())),
    }
}

/// TOML literal if it parses as one, a bare string otherwise.
pub(crate) fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.into()))
}

pub(crate) fn set_dotted(tree: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node.as_table_mut().ok_or_else(|| CliError::OverrideSyntax(key.into()))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Err(CliError::OverrideSyntax(key.into()))
}
