use marc_relgraph::ObservationSchema;
use serde::{Deserialize, Serialize};

use crate::cpp::{Cpp, CppConfig};
use crate::error::{EnvError, Result};
use crate::lbf::{Lbf, LbfConfig};
use crate::target::{Target, TargetConfig};
use crate::wolfpack::{Wolfpack, WolfpackConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// One raw observation per agent.
    pub observations: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    /// The task ended on its own (no bootstrapping past this step).
    pub terminal: bool,
    /// The step limit was reached without the task ending.
    pub truncated: bool,
    /// Episode success metric so far (see [`Environment::success`]).
    pub success: f64,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// Uniform interface over the simulators. Every instance owns its RNG,
/// seeded at construction, so a seed plus an action sequence fixes the
/// whole trajectory.
pub trait Environment: Send + std::fmt::Debug {
    fn name(&self) -> &'static str;

    fn agent_count(&self) -> usize;

    /// Size of every agent's discrete action set.
    fn action_count(&self) -> usize;

    fn action_names(&self) -> &'static [&'static str];

    fn schema(&self) -> &ObservationSchema;

    fn step_limit(&self) -> usize;

    /// Steps taken in the current episode.
    fn steps(&self) -> usize;

    fn reset(&mut self) -> Vec<Vec<f64>>;

    fn step(&mut self, actions: &[usize]) -> Result<StepResult>;

    fn observations(&self) -> Vec<Vec<f64>>;

    /// Positions of every entity, agents first, in a fixed order.
    fn entity_positions(&self) -> Vec<(f64, f64)>;

    /// CPP: all boxes delivered (0/1). LBF: fraction of the maximum team
    /// return. Wolfpack: captures this episode. Target: mean distance of
    /// agents to their landmarks.
    fn success(&self) -> f64;
}

pub(crate) fn check_actions(env: &'static str, actions: &[usize], agents: usize, count: usize) -> Result<()> {
    if actions.len() != agents {
        return Err(EnvError::ActionCount {
            env,
            got: actions.len(),
            expected: agents,
        });
    }
    if let Some((agent, &action)) = actions.iter().enumerate().find(|(_, &a)| a >= count) {
        return Err(EnvError::InvalidAction {
            env,
            agent,
            action,
            actions: count,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum EnvConfig {
    Cpp(CppConfig),
    Lbf(LbfConfig),
    Wolfpack(WolfpackConfig),
    Target(TargetConfig),
}

impl EnvConfig {
    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::Cpp(_) => "cpp",
            EnvConfig::Lbf(_) => "lbf",
            EnvConfig::Wolfpack(_) => "wolfpack",
            EnvConfig::Target(_) => "target",
        }
    }

    pub fn step_limit(&self) -> usize {
        match self {
            EnvConfig::Cpp(c) => c.step_limit,
            EnvConfig::Lbf(c) => c.step_limit,
            EnvConfig::Wolfpack(c) => c.step_limit,
            EnvConfig::Target(c) => c.step_limit,
        }
    }

    pub fn is_grid(&self) -> bool {
        !matches!(self, EnvConfig::Target(_))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvConfig::Cpp(c) => c.validate(),
            EnvConfig::Lbf(c) => c.validate(),
            EnvConfig::Wolfpack(c) => c.validate(),
            EnvConfig::Target(c) => c.validate(),
        }
    }
}

pub type EnvBuilder = fn(&EnvConfig, u64) -> Result<Box<dyn Environment>>;

/// Environment constructors by name.
#[derive(Debug, Clone)]
pub struct EnvRegistry {
    entries: Vec<(&'static str, EnvBuilder)>,
}

fn wrong(cfg: &EnvConfig, expected: &'static str) -> EnvError {
    EnvError::WrongConfig {
        got: cfg.name(),
        expected,
    }
}

impl Default for EnvRegistry {
    fn default() -> Self {
        let mut r = Self { entries: Vec::new() };
        r.register("cpp", |cfg, seed| match cfg {
            EnvConfig::Cpp(c) => Ok(Box::new(Cpp::new(c.clone(), seed)?)),
            other => Err(wrong(other, "cpp")),
        });
        r.register("lbf", |cfg, seed| match cfg {
            EnvConfig::Lbf(c) => Ok(Box::new(Lbf::new(c.clone(), seed)?)),
            other => Err(wrong(other, "lbf")),
        });
        r.register("wolfpack", |cfg, seed| match cfg {
            EnvConfig::Wolfpack(c) => Ok(Box::new(Wolfpack::new(c.clone(), seed)?)),
            other => Err(wrong(other, "wolfpack")),
        });
        r.register("target", |cfg, seed| match cfg {
            EnvConfig::Target(c) => Ok(Box::new(Target::new(c.clone(), seed)?)),
            other => Err(wrong(other, "target")),
        });
        r
    }
}

impl EnvRegistry {
    pub fn register(&mut self, name: &'static str, builder: EnvBuilder) {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(e) => e.1 = builder,
            None => self.entries.push((name, builder)),
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn make_named(&self, name: &str, config: &EnvConfig, seed: u64) -> Result<Box<dyn Environment>> {
        let (_, build) = self
            .entries
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| EnvError::Unknown {
                name: name.to_string(),
                valid: self.names().join(", "),
            })?;
        build(config, seed)
    }

    pub fn make(&self, config: &EnvConfig, seed: u64) -> Result<Box<dyn Environment>> {
        self.make_named(config.name(), config, seed)
    }
}

/// Builds an environment from the default registry.
pub fn make_env(config: &EnvConfig, seed: u64) -> Result<Box<dyn Environment>> {
    EnvRegistry::default().make(config, seed)
}
