//! The training loop, greedy evaluation and checkpoints.

use std::fmt::Write as _;
use std::path::Path;

use marc_envs::{make_env, EnvConfig, Environment};
use marc_tensor::{AdamState, ParamSet};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::buffer::{ReplayBuffer, Transition};
use crate::config::TrainingConfig;
use crate::error::{CoreError, Result};
use crate::model::ObservationView;
use crate::normalize::RewardScaler;
use crate::sac::{act_with, Learner};

pub const METRICS_HEADER: &str =
    "env_step,episode,mean_return,length,success,critic_loss,policy_loss,entropy";

/// One finished training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub env_step: u64,
    pub episode: u64,
    /// Episode return averaged over agents.
    pub mean_return: f64,
    pub length: usize,
    pub success: f64,
    /// Most recent update losses; absent before the first update.
    pub critic_loss: Option<f64>,
    pub policy_loss: Option<f64>,
    pub entropy: Option<f64>,
}

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.env_step,
            self.episode,
            self.mean_return,
            self.length,
            self.success,
            opt(self.critic_loss),
            opt(self.policy_loss),
            opt(self.entropy)
        )
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    out
}

/// Greedy rollout statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub env_step: u64,
    pub episodes: usize,
    pub mean_return: f64,
    /// Standard deviation of the per-episode mean return.
    pub std_return: f64,
    pub success: f64,
    pub mean_length: f64,
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs `episodes` episodes choosing actions with `choose`, returning the
/// per-episode (mean return, success, length).
pub fn rollouts(
    env: &mut dyn Environment,
    episodes: usize,
    mut choose: impl FnMut(&[Vec<f64>]) -> Result<Vec<usize>>,
) -> Result<Vec<(f64, f64, usize)>> {
    let mut out = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset();
        let mut total = 0.0;
        let mut length = 0;
        let mut success = env.success();
        if env.step_limit() > 0 {
            loop {
                let actions = choose(&obs)?;
                let r = env.step(&actions)?;
                total += r.rewards.iter().sum::<f64>() / r.rewards.len() as f64;
                length += 1;
                success = r.success;
                if r.done() {
                    break;
                }
                obs = r.observations;
            }
        }
        out.push((total, success, length));
    }
    Ok(out)
}

fn report(env_step: u64, episodes: &[(f64, f64, usize)]) -> EvalReport {
    let returns: Vec<f64> = episodes.iter().map(|e| e.0).collect();
    let (mean_return, std_return) = mean_std(&returns);
    let n = episodes.len().max(1) as f64;
    EvalReport {
        env_step,
        episodes: episodes.len(),
        mean_return,
        std_return,
        success: episodes.iter().map(|e| e.1).sum::<f64>() / n,
        mean_length: episodes.iter().map(|e| e.2 as f64).sum::<f64>() / n,
    }
}

/// Uniform-random joint actions on `env`, for baselines.
pub fn random_rollouts(env_config: &EnvConfig, episodes: usize, seed: u64) -> Result<EvalReport> {
    use rand::Rng;
    if env_config.step_limit() == 0 {
        return Ok(report(0, &vec![(0.0, 0.0, 0); episodes]));
    }
    let mut env = make_env(env_config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, a) = (env.agent_count(), env.action_count());
    let eps = rollouts(env.as_mut(), episodes, |_| Ok((0..n).map(|_| rng.gen_range(0..a)).collect()))?;
    Ok(report(0, &eps))
}

/// Training state for one seed.
#[derive(Debug)]
pub struct Trainer {
    pub config: TrainingConfig,
    pub seed: u64,
    pub learner: Learner,
    pub buffer: ReplayBuffer<Transition>,
    pub scaler: RewardScaler,
    env: Box<dyn Environment>,
    env_seed: u64,
    rng: ChaCha8Rng,
    observations: Vec<Vec<f64>>,
    episode_returns: Vec<f64>,
    pub env_step: u64,
    pub episode: u64,
    pub metrics: Vec<MetricsRow>,
    pub evaluations: Vec<EvalReport>,
    last_losses: Option<(f64, f64, f64)>,
}

/// Builds the observation view and action sizes that `config` implies for `env`.
fn view_for(config: &TrainingConfig, env: &dyn Environment) -> Result<(ObservationView, Vec<usize>)> {
    let width = env.observations().first().map_or(0, Vec::len);
    let view = ObservationView::new(
        env.schema().clone(),
        &config.relations,
        &config.relation_options,
        config.entities,
        width,
    )?;
    Ok((view, vec![env.action_count(); env.agent_count()]))
}

impl Trainer {
    pub fn new(config: &TrainingConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let env_seed = rng.next_u64();
        let mut env = make_env(&config.env, env_seed)?;
        let observations = env.reset();
        let (view, actions) = view_for(config, env.as_ref())?;
        let learner = Learner::new(&config.algo, &config.encoder, view, &actions, &mut rng)?;
        let n = env.agent_count();
        Ok(Self {
            buffer: ReplayBuffer::new(config.algo.buffer_capacity),
            scaler: RewardScaler::new(n, config.algo.gamma),
            config: config.clone(),
            seed,
            learner,
            env,
            env_seed,
            rng,
            observations,
            episode_returns: vec![0.0; n],
            env_step: 0,
            episode: 0,
            metrics: Vec::new(),
            evaluations: Vec::new(),
            last_losses: None,
        })
    }

    /// One environment step, plus an update round when one is due.
    pub fn step(&mut self) -> Result<Option<MetricsRow>> {
        let actions = self.learner.act(&self.observations, false, &mut self.rng)?;
        let r = self.env.step(&actions)?;
        self.env_step += 1;
        self.scaler.observe(&r.rewards);
        for (g, x) in self.episode_returns.iter_mut().zip(&r.rewards) {
            *g += x;
        }
        let done = r.done();
        self.buffer.push(Transition {
            observations: std::mem::take(&mut self.observations),
            actions,
            rewards: r.rewards,
            next_observations: r.observations.clone(),
            terminal: r.terminal,
        });
        let mut row = None;
        if done {
            self.episode += 1;
            let n = self.episode_returns.len() as f64;
            let (critic_loss, policy_loss, entropy) = match self.last_losses {
                Some((c, p, e)) => (Some(c), Some(p), Some(e)),
                None => (None, None, None),
            };
            let m = MetricsRow {
                env_step: self.env_step,
                episode: self.episode,
                mean_return: self.episode_returns.iter().sum::<f64>() / n,
                length: self.env.steps(),
                success: r.success,
                critic_loss,
                policy_loss,
                entropy,
            };
            self.metrics.push(m.clone());
            row = Some(m);
            self.episode_returns.iter_mut().for_each(|g| *g = 0.0);
            self.scaler.end_episode();
            self.observations = self.env.reset();
        } else {
            self.observations = r.observations;
        }
        let algo = &self.config.algo;
        if self.env_step % algo.update_interval == 0 && self.buffer.len() >= algo.batch_size {
            self.update_round()?;
        }
        Ok(row)
    }

    /// `updates_per_interval` rounds of: fresh batch, critic update, policy
    /// update, soft target update.
    pub fn update_round(&mut self) -> Result<()> {
        for _ in 0..self.config.algo.updates_per_interval {
            let batch = {
                let sample = self.buffer.sample(self.config.algo.batch_size, &mut self.rng)?;
                let scaler = self.config.algo.reward_normalization.then_some(&self.scaler);
                self.learner.prepare(&sample, scaler)?
            };
            let c = self.learner.critic_update(&batch, &mut self.rng)?;
            let (p, e) = self.learner.policy_update(&batch, &mut self.rng)?;
            self.learner.soft_update()?;
            self.last_losses = Some((c, p, e));
        }
        Ok(())
    }

    /// Trains until `total_steps`, evaluating on the configured cadence and
    /// once at the end. `on_episode` sees every finished episode.
    pub fn run(&mut self, mut on_episode: impl FnMut(&MetricsRow)) -> Result<()> {
        while self.env_step < self.config.total_steps {
            if let Some(row) = self.step()? {
                on_episode(&row);
            }
            let every = self.config.eval_every;
            if every > 0 && self.env_step % every == 0 && self.env_step < self.config.total_steps {
                let r = self.evaluate()?;
                self.evaluations.push(r);
            }
        }
        let r = self.evaluate()?;
        self.evaluations.push(r);
        Ok(())
    }

    /// Greedy rollouts on a fresh copy of the training environment.
    pub fn evaluate(&self) -> Result<EvalReport> {
        let mut env = make_env(&self.config.env, eval_seed(self.seed))?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = &self.learner;
        let eps = rollouts(env.as_mut(), self.config.eval_episodes, |obs| {
            act_with(&l.policies, &l.policy_params, &l.view, obs, true, &mut rng)
        })?;
        Ok(report(self.env_step, &eps))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let l = &self.learner;
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            seed: self.seed,
            env_seed: self.env_seed,
            env_step: self.env_step,
            episode: self.episode,
            critic: l.critic_params.clone(),
            critic_target: l.critic_target.clone(),
            critic_adam: l.critic_adam.clone(),
            policy: l.policy_params.clone(),
            policy_target: l.policy_target.clone(),
            policy_adam: l.policy_adam.clone(),
            scaler: self.scaler.clone(),
            rng: self.rng.clone(),
            evaluations: self.evaluations.clone(),
        }
    }
}

/// Environment seed of the greedy evaluations of a run with `seed`.
pub fn eval_seed(seed: u64) -> u64 {
    seed.wrapping_add(0x9e37_79b9_7f4a_7c15)
}

pub const CHECKPOINT_FORMAT: &str = "marc-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to rebuild and evaluate a trained learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: TrainingConfig,
    pub seed: u64,
    pub env_seed: u64,
    pub env_step: u64,
    pub episode: u64,
    pub critic: ParamSet,
    pub critic_target: ParamSet,
    pub critic_adam: AdamState,
    pub policy: ParamSet,
    pub policy_target: ParamSet,
    pub policy_adam: AdamState,
    pub scaler: RewardScaler,
    pub rng: ChaCha8Rng,
    pub evaluations: Vec<EvalReport>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let header: serde_json::Value = serde_json::from_str(text)?;
        let format = header.get("format").and_then(|v| v.as_str()).unwrap_or("");
        if format != CHECKPOINT_FORMAT {
            return Err(CoreError::Checkpoint {
                field: "format".into(),
                detail: format!("expected '{CHECKPOINT_FORMAT}', found '{format}'"),
            });
        }
        let version = header.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
        if version != CHECKPOINT_VERSION as u64 {
            return Err(CoreError::Checkpoint {
                field: "version".into(),
                detail: format!("expected {CHECKPOINT_VERSION}, found {version}"),
            });
        }
        Ok(serde_json::from_value(header)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Rebuilds the policies for greedy evaluation, checking that the stored
    /// parameters fit the architecture the stored config implies.
    pub fn policy(&self) -> Result<TrainedPolicy> {
        let env = make_env(&self.config.env, self.env_seed)?;
        let (view, actions) = view_for(&self.config, env.as_ref())?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let learner = Learner::new(&self.config.algo, &self.config.encoder, view, &actions, &mut rng)?;
        mismatch("policy", &learner.policy_params, &self.policy)?;
        mismatch("critic", &learner.critic_params, &self.critic)?;
        Ok(TrainedPolicy {
            policies: learner.policies,
            params: self.policy.clone(),
            view: learner.view,
        })
    }
}

fn mismatch(what: &str, built: &ParamSet, stored: &ParamSet) -> Result<()> {
    built.check_compatible(stored).map_err(|e| CoreError::Checkpoint {
        field: what.into(),
        detail: e.to_string(),
    })
}

/// Policies restored from a checkpoint.
#[derive(Debug, Clone)]
pub struct TrainedPolicy {
    pub policies: crate::model::Policies,
    pub params: ParamSet,
    pub view: ObservationView,
}

impl TrainedPolicy {
    /// Greedy rollouts on `env_config`, which may differ from the training
    /// environment in entity counts and grid size.
    pub fn evaluate(&self, env_config: &EnvConfig, episodes: usize, seed: u64) -> Result<EvalReport> {
        let mut env = make_env(env_config, seed)?;
        if env.schema().feature_names != self.view.schema.feature_names {
            return Err(CoreError::Checkpoint {
                field: "env".into(),
                detail: format!("trained on {}, asked to evaluate {}", self.view.schema.env, env.name()),
            });
        }
        let mut view = self.view.clone();
        view.schema = env.schema().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let eps = rollouts(env.as_mut(), episodes, |obs| {
            act_with(&self.policies, &self.params, &view, obs, true, &mut rng)
        })?;
        Ok(report(0, &eps))
    }
}
