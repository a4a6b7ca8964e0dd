use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{debug, info};
use marc_core::{
    act_with, eval_seed, metrics_csv, random_rollouts, Checkpoint, CoreError, EvalReport, MetricsRow, ObservationView,
    Trainer,
};
use marc_envs::{make_env, EnvConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{parse_value, split_assignment, RunConfig};
use crate::curves::{aggregate, aggregate_csv, curve_csv, learning_curve, AggregatePoint};
use crate::error::{CliError, Result};
use crate::plot::render_svg;

pub const RESOLVED_CONFIG: &str = "config.toml";
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const LEARNING_CURVE_SVG: &str = "learning_curve.svg";
pub const METRICS_CSV: &str = "metrics.csv";
pub const CURVE_CSV: &str = "curve.csv";
pub const EVAL_CSV: &str = "eval.csv";
pub const FINAL_CHECKPOINT: &str = "checkpoint.json";
pub const EVAL_HEADER: &str = "env_step,episodes,mean_return,std_return,success,mean_length";

/// Environment fields an evaluation may change.
pub const ENTITY_KEYS: [&str; 11] = [
    "width",
    "height",
    "agents",
    "fruits",
    "pickers",
    "deliverers",
    "boxes",
    "goals",
    "predators",
    "prey",
    "obstacles",
];

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub dir: PathBuf,
    pub metrics: Vec<MetricsRow>,
    pub curve: Vec<(u64, f64)>,
    pub evaluations: Vec<EvalReport>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub seeds: Vec<SeedRun>,
    pub aggregate: Vec<AggregatePoint>,
}

impl RunSummary {
    pub fn checkpoint(&self, seed: u64) -> Option<PathBuf> {
        self.seeds
            .iter()
            .find(|s| s.seed == seed)
            .map(|s| s.dir.join(FINAL_CHECKPOINT))
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(CliError::io(path))
}

fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let mut entries = std::fs::read_dir(dir).map_err(CliError::io(dir))?;
        if entries.next().is_some() && !force {
            return Err(CliError::OutputExists(dir.to_path_buf()));
        }
    }
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))
}

pub fn eval_csv(reports: &[EvalReport]) -> String {
    let mut s = format!("{EVAL_HEADER}\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.env_step, r.episodes, r.mean_return, r.std_return, r.success, r.mean_length
        );
    }
    s
}

/// Trains every seed of `run` into `run.output`, then writes the aggregate
/// CSV and the learning-curve SVG.
pub fn train(run: &RunConfig, force: bool) -> Result<RunSummary> {
    run.validate()?;
    let dir = run.output.clone();
    prepare_dir(&dir, force)?;
    write(&dir.join(RESOLVED_CONFIG), run.to_toml())?;
    let seeds: Vec<SeedRun> = if run.parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = run.seeds.iter().map(|&seed| s.spawn(move || train_seed(run, seed))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("seed thread panicked"))
                .collect::<Result<_>>()
        })?
    } else {
        run.seeds.iter().map(|&seed| train_seed(run, seed)).collect::<Result<_>>()?
    };
    let curves: Vec<Vec<(u64, f64)>> = seeds.iter().map(|s| s.curve.clone()).collect();
    let points = aggregate(&curves);
    write(&dir.join(AGGREGATE_CSV), aggregate_csv(&points))?;
    if !points.is_empty() {
        let title = format!("{} ({} seed{})", run.env.name(), seeds.len(), if seeds.len() == 1 { "" } else { "s" });
        write(&dir.join(LEARNING_CURVE_SVG), render_svg(&points, &title)?)?;
    }
    Ok(RunSummary {
        dir,
        seeds,
        aggregate: points,
    })
}

fn train_seed(run: &RunConfig, seed: u64) -> Result<SeedRun> {
    let dir = run.output.join(format!("seed-{seed}"));
    std::fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
    let mut t = Trainer::new(&run.training(), seed)?;
    info!("seed {seed}: training {} for {} steps", run.env.name(), run.total_steps);
    while t.env_step < run.total_steps {
        if let Some(row) = t.step()? {
            debug!(
                "seed {seed} episode {} step {} return {:.4}",
                row.episode, row.env_step, row.mean_return
            );
        }
        if run.eval_every > 0 && t.env_step % run.eval_every == 0 && t.env_step < run.total_steps {
            let r = t.evaluate()?;
            info!("seed {seed} step {}: greedy return {:.4}", r.env_step, r.mean_return);
            t.evaluations.push(r);
        }
        if run.checkpoint_every > 0 && t.env_step % run.checkpoint_every == 0 && t.env_step < run.total_steps {
            t.checkpoint().save(&dir.join(format!("checkpoint-{}.json", t.env_step)))?;
        }
    }
    let r = t.evaluate()?;
    info!("seed {seed} done: greedy return {:.4}, success {:.3}", r.mean_return, r.success);
    t.evaluations.push(r);
    t.checkpoint().save(&dir.join(FINAL_CHECKPOINT))?;
    let curve = learning_curve(&t.metrics, run.curve_step(), run.total_steps, run.curve_window);
    write(&dir.join(METRICS_CSV), metrics_csv(&t.metrics))?;
    write(&dir.join(CURVE_CSV), curve_csv(&curve))?;
    write(&dir.join(EVAL_CSV), eval_csv(&t.evaluations))?;
    Ok(SeedRun {
        seed,
        dir,
        metrics: t.metrics,
        curve,
        evaluations: t.evaluations,
    })
}

/// `env` with `key=value` overrides restricted to entity counts and grid size.
pub fn override_env(env: &EnvConfig, overrides: &[String]) -> Result<EnvConfig> {
    let mut tree = toml::Value::try_from(env).expect("env configs always serialize");
    let table = tree.as_table_mut().expect("env configs are tables");
    let allowed: Vec<&str> = ENTITY_KEYS.iter().copied().filter(|k| table.contains_key(*k)).collect();
    for o in overrides {
        let (key, value) = split_assignment(o)?;
        if !allowed.contains(&key) {
            return Err(CliError::Override {
                key: key.into(),
                allowed: allowed.join(", "),
            });
        }
        table.insert(key.into(), parse_value(value));
    }
    let out: EnvConfig = tree.try_into().map_err(|e: toml::de::Error| CliError::Parse {
        path: "env overrides".into(),
        detail: e.to_string(),
    })?;
    out.validate().map_err(CoreError::from)?;
    Ok(out)
}

/// Greedy rollouts of a checkpoint's policies; the checkpoint is only read.
/// Without `seed`, uses the environment seed of the training-time evaluations.
pub fn evaluate(checkpoint: &Path, overrides: &[String], episodes: usize, seed: Option<u64>) -> Result<EvalReport> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let env = override_env(&ckpt.config.env, overrides)?;
    let policy = ckpt.policy()?;
    let mut report = policy.evaluate(&env, episodes, seed.unwrap_or_else(|| eval_seed(ckpt.seed)))?;
    report.env_step = ckpt.env_step;
    Ok(report)
}

/// Uniform-random joint actions on the run's environment.
pub fn baseline(run: &RunConfig, episodes: usize, seed: u64) -> Result<EvalReport> {
    Ok(random_rollouts(&run.env, episodes, seed)?)
}

pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const ACTIONS_CSV: &str = "actions.csv";
pub const EPISODE_ENV: &str = "env.toml";
pub const TRAJECTORY_HEADER: &str = "step,entity_id,x,y,reward";

/// The environment and seed of a recorded episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSource {
    pub seed: u64,
    pub env: EnvConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub source: EpisodeSource,
    /// Joint action per step.
    pub actions: Vec<Vec<usize>>,
    /// Entity positions before each step and after the last one.
    pub positions: Vec<Vec<(f64, f64)>>,
    pub rewards: Vec<Vec<f64>>,
}

impl Episode {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().flatten().sum()
    }

    /// One row per entity per step; agents carry the reward of that step,
    /// other entities leave it blank. The final row block has no rewards.
    pub fn trajectory_csv(&self) -> String {
        let mut s = format!("{TRAJECTORY_HEADER}\n");
        for (step, positions) in self.positions.iter().enumerate() {
            let rewards = self.rewards.get(step);
            for (id, (x, y)) in positions.iter().enumerate() {
                let r = rewards.and_then(|r| r.get(id)).map_or(String::new(), |r| r.to_string());
                let _ = writeln!(s, "{step},{id},{x},{y},{r}");
            }
        }
        s
    }

    pub fn actions_csv(&self) -> String {
        let mut s = String::from("step,agent,action\n");
        for (step, joint) in self.actions.iter().enumerate() {
            for (agent, a) in joint.iter().enumerate() {
                let _ = writeln!(s, "{step},{agent},{a}");
            }
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        write(&dir.join(TRAJECTORY_CSV), self.trajectory_csv())?;
        write(&dir.join(ACTIONS_CSV), self.actions_csv())?;
        let env = toml::to_string(&self.source).expect("episode sources always serialize");
        write(&dir.join(EPISODE_ENV), env)
    }
}

/// Plays one episode, asking `choose` for every joint action until the
/// episode ends or `choose` returns `None`.
fn play(
    source: EpisodeSource,
    mut choose: impl FnMut(usize, &[Vec<f64>]) -> Result<Option<Vec<usize>>>,
) -> Result<Episode> {
    let mut env = make_env(&source.env, source.seed).map_err(CoreError::from)?;
    let mut obs = env.reset();
    let mut episode = Episode {
        source,
        actions: Vec::new(),
        positions: vec![env.entity_positions()],
        rewards: Vec::new(),
    };
    while env.step_limit() > 0 {
        let Some(actions) = choose(episode.actions.len(), &obs)? else {
            break;
        };
        let r = env.step(&actions).map_err(CoreError::from)?;
        episode.actions.push(actions);
        episode.positions.push(env.entity_positions());
        episode.rewards.push(r.rewards.clone());
        if r.done() {
            break;
        }
        obs = r.observations;
    }
    Ok(episode)
}

/// One greedy episode of a checkpoint's policies, written to `dir`.
pub fn rollout(checkpoint: &Path, dir: &Path, seed: Option<u64>) -> Result<Episode> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let policy = ckpt.policy()?;
    let source = EpisodeSource {
        seed: seed.unwrap_or_else(|| eval_seed(ckpt.seed)),
        env: ckpt.config.env.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let episode = play(source, |_, obs| {
        Ok(Some(act_with(&policy.policies, &policy.params, &policy.view, obs, true, &mut rng)?))
    })?;
    episode.write(dir)?;
    Ok(episode)
}

/// Replays the action log of a recorded episode directory into `out`.
pub fn replay(recorded: &Path, out: &Path) -> Result<Episode> {
    let env_path = recorded.join(EPISODE_ENV);
    let text = std::fs::read_to_string(&env_path).map_err(CliError::io(&env_path))?;
    let source: EpisodeSource = toml::from_str(&text).map_err(|e| CliError::Parse {
        path: env_path.display().to_string(),
        detail: e.to_string(),
    })?;
    let log_path = recorded.join(ACTIONS_CSV);
    let log = std::fs::read_to_string(&log_path).map_err(CliError::io(&log_path))?;
    let mut actions: Vec<Vec<usize>> = Vec::new();
    for (i, line) in log.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<usize> = line
            .split(',')
            .map(|f| f.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| CliError::Csv(format!("{}: line {}: expected step,agent,action", log_path.display(), i + 1)))?;
        let [step, agent, action] = fields[..] else {
            return Err(CliError::Csv(format!("{}: line {}: expected 3 fields", log_path.display(), i + 1)));
        };
        if step == actions.len() {
            actions.push(Vec::new());
        }
        match actions.get_mut(step) {
            Some(joint) if joint.len() == agent => joint.push(action),
            _ => {
                return Err(CliError::Csv(format!(
                    "{}: line {}: steps and agents must be listed in order",
                    log_path.display(),
                    i + 1
                )))
            }
        }
    }
    let episode = play(source, |step, _| Ok(actions.get(step).cloned()))?;
    episode.write(out)?;
    Ok(episode)
}

/// Edges of `agent`'s first observation as `relation source target` lines.
pub fn graph_dump(run: &RunConfig, seed: u64, agent: usize) -> Result<String> {
    let mut env = make_env(&run.env, seed).map_err(CoreError::from)?;
    let obs = env.reset();
    let o = obs.get(agent).ok_or_else(|| {
        CliError::Config(vec![format!("agent {agent} does not exist, the env has {} agents", obs.len())])
    })?;
    let view = ObservationView::new(env.schema().clone(), &run.relations, &run.relation_options, run.entities, o.len())?;
    Ok(view.graph(o)?.dump())
}
