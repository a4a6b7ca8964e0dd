//! Multi-agent relational actor-critic: per-agent critics over a shared
//! relational observation encoder, per-agent soft policies, a replay buffer
//! and the off-policy training loop.

mod buffer;
mod config;
mod error;
mod model;
mod normalize;
mod sac;
mod trainer;

pub use buffer::{ReplayBuffer, Transition};
pub use config::{AlgoConfig, TrainingConfig};
pub use error::{CoreError, Result};
pub use model::{argmax, check_distribution, sample_categorical, Critic, ObservationView, Policies};
pub use normalize::{RewardScaler, STD_FLOOR};
pub use sac::{act_with, target_value, Batch, CriticLoss, Learner, PolicyEvaluation, PolicyLoss};
pub use trainer::{
    eval_seed, mean_std, metrics_csv, random_rollouts, rollouts, Checkpoint, EvalReport, MetricsRow, TrainedPolicy, Trainer,
    CHECKPOINT_FORMAT, CHECKPOINT_VERSION, METRICS_HEADER,
};
