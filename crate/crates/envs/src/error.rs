use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("{env}: agent {agent} chose action {action}, valid actions are 0..{actions}")]
    InvalidAction {
        env: &'static str,
        agent: usize,
        action: usize,
        actions: usize,
    },
    #[error("{env}: got {got} actions for {expected} agents")]
    ActionCount {
        env: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("{env}: {needed} entities do not fit on {cells} cells")]
    Crowded {
        env: &'static str,
        needed: usize,
        cells: usize,
    },
    #[error("{env}: invalid config: {detail}")]
    Config { env: &'static str, detail: String },
    #[error("unknown environment '{name}' (valid: {valid})")]
    Unknown { name: String, valid: String },
    #[error("config for '{got}' passed to the '{expected}' environment")]
    WrongConfig { got: &'static str, expected: &'static str },
    #[error("{0}: step called on a finished episode; reset first")]
    EpisodeOver(&'static str),
}

pub type Result<T, E = EnvError> = std::result::Result<T, E>;
