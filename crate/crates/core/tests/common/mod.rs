#![allow(dead_code)]

use marc_core::{Batch, Trainer, TrainingConfig};
use marc_envs::{CppConfig, EnvConfig, LbfConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn cpp_smoke() -> EnvConfig {
    EnvConfig::Cpp(CppConfig {
        width: 5,
        height: 5,
        pickers: 1,
        deliverers: 1,
        boxes: 1,
        goals: 1,
        ..CppConfig::default()
    })
}

pub fn lbf_small() -> EnvConfig {
    EnvConfig::Lbf(LbfConfig {
        width: 5,
        height: 5,
        agents: 2,
        fruits: 2,
        ..LbfConfig::default()
    })
}

/// Narrow networks and tiny batches so updates are cheap.
pub fn small_config(env: EnvConfig) -> TrainingConfig {
    let mut cfg = TrainingConfig::for_env(env);
    cfg.algo.batch_size = 4;
    cfg.algo.buffer_capacity = 500;
    cfg.algo.update_interval = 10;
    cfg.algo.critic_hidden = 16;
    cfg.algo.policy_hidden = 16;
    cfg.encoder.embed_dim = 8;
    cfg.total_steps = 200;
    cfg.eval_episodes = 3;
    cfg
}

/// A trainer whose buffer holds `steps` transitions and that has not updated.
pub fn filled(cfg: &TrainingConfig, seed: u64, steps: usize) -> Trainer {
    let mut cfg = cfg.clone();
    cfg.algo.update_interval = u64::MAX;
    let mut t = Trainer::new(&cfg, seed).unwrap();
    for _ in 0..steps {
        t.step().unwrap();
    }
    t
}

pub fn batch(t: &Trainer, size: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = t.buffer.sample(size, &mut rng).unwrap();
    t.learner.prepare(&sample, Some(&t.scaler)).unwrap()
}
