use marc_gnn::EntitySource;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// A single-axis variation of a base configuration.
pub trait AblationPreset: Send + Sync {
    fn name(&self) -> &str;

    /// The config field this preset alters.
    fn axis(&self) -> &'static str;

    fn apply(&self, config: &mut RunConfig);
}

struct Relations(&'static str, &'static str);

impl AblationPreset for Relations {
    fn name(&self) -> &str {
        self.0
    }

    fn axis(&self) -> &'static str {
        "relations"
    }

    fn apply(&self, config: &mut RunConfig) {
        config.relations = self.1.into();
    }
}

struct Entities(&'static str, EntitySource);

impl AblationPreset for Entities {
    fn name(&self) -> &str {
        self.0
    }

    fn axis(&self) -> &'static str {
        "entities"
    }

    fn apply(&self, config: &mut RunConfig) {
        config.entities = self.1;
    }
}

struct Architecture(&'static str, &'static str);

impl AblationPreset for Architecture {
    fn name(&self) -> &str {
        self.0
    }

    fn axis(&self) -> &'static str {
        "encoder.architecture"
    }

    fn apply(&self, config: &mut RunConfig) {
        config.encoder.architecture = self.1.into();
    }
}

/// Ablation presets by name.
pub struct AblationRegistry {
    presets: Vec<Box<dyn AblationPreset>>,
}

impl Default for AblationRegistry {
    fn default() -> Self {
        let mut r = Self { presets: Vec::new() };
        r.register(Box::new(Relations("relations-default", "default")));
        r.register(Box::new(Relations("relations-local", "local")));
        r.register(Box::new(Relations("relations-all", "all")));
        r.register(Box::new(Entities("entities-objects", EntitySource::Objects)));
        r.register(Box::new(Entities("entities-grid", EntitySource::Grid)));
        r.register(Box::new(Architecture("arch-rgcn", "rgcn")));
        r.register(Box::new(Architecture("arch-gat", "gat")));
        r.register(Box::new(Architecture("arch-rgat", "rgat")));
        r
    }
}

impl AblationRegistry {
    /// Replaces a preset with the same name.
    pub fn register(&mut self, preset: Box<dyn AblationPreset>) {
        self.presets.retain(|p| p.name() != preset.name());
        self.presets.push(preset);
    }

    pub fn names(&self) -> Vec<&str> {
        self.presets.iter().map(|p| p.name()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn AblationPreset> {
        self.presets
            .iter()
            .find(|p| p.name() == name)
            .map(|p| p.as_ref())
            .ok_or_else(|| CliError::UnknownPreset {
                name: name.into(),
                valid: self.names().join(", "),
            })
    }

    pub fn apply(&self, name: &str, base: &RunConfig) -> Result<RunConfig> {
        let mut out = base.clone();
        self.get(name)?.apply(&mut out);
        Ok(out)
    }
}

/// Applies a preset from the default registry.
pub fn ablate(name: &str, base: &RunConfig) -> Result<RunConfig> {
    AblationRegistry::default().apply(name, base)
}

/// Dotted paths of every leaf that differs between two configs.
pub fn config_diff(a: &RunConfig, b: &RunConfig) -> Vec<String> {
    fn walk(prefix: &str, a: &toml::Value, b: &toml::Value, out: &mut Vec<String>) {
        match (a, b) {
            (toml::Value::Table(x), toml::Value::Table(y)) => {
                let mut keys: Vec<&String> = x.keys().chain(y.keys()).collect();
                keys.sort();
                keys.dedup();
                for k in keys {
                    let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    match (x.get(k), y.get(k)) {
                        (Some(u), Some(v)) => walk(&path, u, v, out),
                        _ => out.push(path),
                    }
                }
            }
            _ if a != b => out.push(prefix.to_string()),
            _ => {}
        }
    }
    let a = toml::Value::try_from(a).expect("run configs always serialize");
    let b = toml::Value::try_from(b).expect("run configs always serialize");
    let mut out = Vec::new();
    walk("", &a, &b, &mut out);
    out
}
