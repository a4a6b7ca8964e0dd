//! Multi-agent environments with a shared reset/step interface: collaborative
//! pick and place, level-based foraging with trees, wolfpack and a
//! continuous target-reaching task.

mod audit;
pub mod cpp;
mod env;
mod error;
pub mod grid;
pub mod lbf;
pub mod target;
pub mod wolfpack;

pub use audit::{audit, AuditReport};
pub use cpp::{Cpp, CppConfig};
pub use env::{make_env, EnvBuilder, EnvConfig, EnvRegistry, Environment, StepResult};
pub use error::{EnvError, Result};
pub use lbf::{Lbf, LbfConfig};
pub use target::{Target, TargetConfig};
pub use wolfpack::{scripted_prey_policy, PreyPolicy, PreyView, ScriptedPrey, Seen, Wolfpack, WolfpackConfig};
