//! Critic regression, entropy-regularised policy improvement and Polyak
//! target tracking.

use marc_gnn::{EncoderConfig, GraphBatch};
use marc_tensor::{AdamConfig, AdamState, Matrix, ParamSet, Tape, Var};
use rand::{Rng, RngCore};

use crate::buffer::Transition;
use crate::config::AlgoConfig;
use crate::error::{CoreError, Result};
use crate::model::{argmax, check_distribution, sample_categorical, Critic, ObservationView, Policies};
use crate::normalize::RewardScaler;

/// Regression target for one agent:
/// `r + γ·(Q̄ − α·log π̄)`, without the bootstrap term on terminal steps.
pub fn target_value(reward: f64, gamma: f64, terminal: bool, next_q: f64, next_log_prob: f64, alpha: f64) -> f64 {
    if terminal {
        reward
    } else {
        reward + gamma * (next_q - alpha * next_log_prob)
    }
}

/// A sampled minibatch laid out for the networks.
#[derive(Debug)]
pub struct Batch {
    pub size: usize,
    /// Graphs of `o`, agent-major.
    pub graphs: GraphBatch,
    /// Graphs of `o′`, agent-major.
    pub next_graphs: GraphBatch,
    /// Per agent, B × policy-width.
    pub inputs: Vec<Matrix>,
    pub next_inputs: Vec<Matrix>,
    /// Joint action per transition.
    pub actions: Vec<Vec<usize>>,
    /// Per agent, per transition, after normalization.
    pub rewards: Vec<Vec<f64>>,
    pub terminal: Vec<bool>,
}

/// Q-vectors and joint actions freshly sampled from the current policies.
#[derive(Debug, Clone)]
pub struct PolicyEvaluation {
    /// Per agent, B × |A_i|, from the online critic.
    pub q: Vec<Matrix>,
    /// Per agent, the sampled own action per row.
    pub actions: Vec<Vec<usize>>,
    /// Per agent, `Σ_a π(a)·Q(a)` per row under the sampling-time policy.
    pub baseline: Vec<Vec<f64>>,
    /// Per agent, `log π(a_s)` of the sampled own action at sampling time.
    pub log_probs: Vec<Vec<f64>>,
}

#[derive(Debug)]
pub struct CriticLoss {
    pub total: Var,
    pub per_agent: Vec<Var>,
}

#[derive(Debug)]
pub struct PolicyLoss {
    pub total: Var,
    pub per_agent: Vec<Var>,
    /// Mean policy entropy over agents and rows.
    pub entropy: f64,
}

/// Online and target networks with their optimizers.
#[derive(Debug)]
pub struct Learner {
    pub config: AlgoConfig,
    pub view: ObservationView,
    pub action_counts: Vec<usize>,
    pub critic: Critic,
    pub critic_params: ParamSet,
    pub critic_target: ParamSet,
    pub critic_adam: AdamState,
    pub policies: Policies,
    pub policy_params: ParamSet,
    pub policy_target: ParamSet,
    pub policy_adam: AdamState,
}

impl Learner {
    pub fn new(
        config: &AlgoConfig,
        encoder: &EncoderConfig,
        view: ObservationView,
        action_counts: &[usize],
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        let mut critic_params = ParamSet::new();
        let critic = Critic::new(encoder, &view, action_counts, config.critic_hidden, &mut critic_params, rng)?;
        let mut policy_params = ParamSet::new();
        let policies = Policies::new(view.policy_width, action_counts, config.policy_hidden, &mut policy_params, rng);
        let adam = |lr| AdamConfig {
            lr,
            ..AdamConfig::default()
        };
        Ok(Self {
            critic_adam: AdamState::new(&critic_params, adam(config.critic_lr)),
            policy_adam: AdamState::new(&policy_params, adam(config.policy_lr)),
            critic_target: critic_params.clone(),
            policy_target: policy_params.clone(),
            config: config.clone(),
            view,
            action_counts: action_counts.to_vec(),
            critic,
            critic_params,
            policies,
            policy_params,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.action_counts.len()
    }

    fn inputs(&self, rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|o| self.view.policy_input(o)).collect::<Vec<_>>())
    }

    pub fn prepare(&self, transitions: &[&Transition], scaler: Option<&RewardScaler>) -> Result<Batch> {
        let n = self.agent_count();
        let per_agent = |next: bool| -> Vec<Vec<&[f64]>> {
            (0..n)
                .map(|i| {
                    transitions
                        .iter()
                        .map(|t| {
                            let o = if next { &t.next_observations } else { &t.observations };
                            o[i].as_slice()
                        })
                        .collect()
                })
                .collect()
        };
        let obs = per_agent(false);
        let next = per_agent(true);
        Ok(Batch {
            size: transitions.len(),
            graphs: self.view.batch(obs.iter().flatten().copied())?,
            next_graphs: self.view.batch(next.iter().flatten().copied())?,
            inputs: obs.iter().map(|o| self.inputs(o)).collect(),
            next_inputs: next.iter().map(|o| self.inputs(o)).collect(),
            actions: transitions.iter().map(|t| t.actions.clone()).collect(),
            rewards: (0..n)
                .map(|i| {
                    transitions
                        .iter()
                        .map(|t| scaler.map_or(t.rewards[i], |s| s.scale(i, t.rewards[i])))
                        .collect()
                })
                .collect(),
            terminal: transitions.iter().map(|t| t.terminal).collect(),
        })
    }

    /// Q-vectors of every agent under `params` for the joint actions `joint`.
    fn q_plain(&self, params: &ParamSet, graphs: &GraphBatch, joint: &[Vec<usize>]) -> Result<Vec<Matrix>> {
        let views: Vec<&[usize]> = joint.iter().map(Vec::as_slice).collect();
        let others: Vec<Matrix> = (0..self.agent_count())
            .map(|i| self.critic.others_one_hot(i, &views))
            .collect();
        let mut tape = Tape::new();
        let bound = params.bind_frozen(&mut tape);
        let q = self.critic.q_values(&mut tape, &bound, graphs, &others)?;
        Ok(q.into_iter().map(|v| tape.value(v).clone()).collect())
    }

    /// Samples one joint action per row from `params` policies on `inputs`.
    fn sample_joint<R: Rng + ?Sized>(
        &self,
        params: &ParamSet,
        inputs: &[Matrix],
        rng: &mut R,
    ) -> Result<(Vec<(Matrix, Matrix)>, Vec<Vec<usize>>)> {
        let dists: Vec<(Matrix, Matrix)> = (0..self.agent_count())
            .map(|i| self.policies.distribution(params, i, &inputs[i]))
            .collect::<Result<_>>()?;
        let rows = inputs.first().map_or(0, Matrix::rows);
        let joint = (0..rows)
            .map(|b| dists.iter().map(|(p, _)| sample_categorical(p.row(b), rng)).collect())
            .collect();
        Ok((dists, joint))
    }

    /// Targets `y_i` per agent and transition, from the target networks.
    pub fn compute_targets<R: Rng + ?Sized>(&self, batch: &Batch, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        let (dists, joint) = self.sample_joint(&self.policy_target, &batch.next_inputs, rng)?;
        let q = self.q_plain(&self.critic_target, &batch.next_graphs, &joint)?;
        let (gamma, alpha) = (self.config.gamma, self.config.alpha);
        Ok((0..self.agent_count())
            .map(|i| {
                let (probs, logp) = &dists[i];
                (0..batch.size)
                    .map(|b| {
                        let r = batch.rewards[i][b];
                        if self.config.analytic_target {
                            let soft: f64 = (0..probs.cols())
                                .map(|a| probs.get(b, a) * (q[i].get(b, a) - alpha * logp.get(b, a)))
                                .sum();
                            target_value(r, gamma, batch.terminal[b], soft, 0.0, alpha)
                        } else {
                            let a = joint[b][i];
                            target_value(r, gamma, batch.terminal[b], q[i].get(b, a), logp.get(b, a), alpha)
                        }
                    })
                    .collect()
            })
            .collect())
    }

    /// `Σ_i mean_b (Q_i(o_i, a)[a_i] − y_i)²` on `tape` with critic
    /// parameters bound as `bound`.
    pub fn critic_loss(
        &self,
        tape: &mut Tape,
        bound: &marc_tensor::Bound,
        batch: &Batch,
        targets: &[Vec<f64>],
    ) -> Result<CriticLoss> {
        let views: Vec<&[usize]> = batch.actions.iter().map(Vec::as_slice).collect();
        let others: Vec<Matrix> = (0..self.agent_count())
            .map(|i| self.critic.others_one_hot(i, &views))
            .collect();
        let q = self.critic.q_values(tape, bound, &batch.graphs, &others)?;
        let mut per_agent = Vec::with_capacity(q.len());
        for (i, qi) in q.into_iter().enumerate() {
            let own: Vec<usize> = batch.actions.iter().map(|a| a[i]).collect();
            let picked = tape.pick_cols(qi, own.into())?;
            let y = tape.constant(Matrix::column_vector(&targets[i]));
            let diff = tape.sub(picked, y)?;
            let sq = tape.mul(diff, diff)?;
            per_agent.push(tape.mean(sq));
        }
        let mut total = per_agent[0];
        for &l in &per_agent[1..] {
            total = tape.add(total, l)?;
        }
        Ok(CriticLoss { total, per_agent })
    }

    /// One Adam step on the joint critic loss with targets held fixed.
    pub fn critic_step(&mut self, batch: &Batch, targets: &[Vec<f64>]) -> Result<f64> {
        let mut tape = Tape::new();
        let bound = self.critic_params.bind(&mut tape);
        let loss = self.critic_loss(&mut tape, &bound, batch, targets)?;
        let value = tape.scalar(loss.total);
        if !value.is_finite() {
            let parts: Vec<f64> = loss.per_agent.iter().map(|&v| tape.scalar(v)).collect();
            return Err(CoreError::NonFinite {
                what: "critic loss",
                detail: format!("per-agent losses {parts:?}"),
            });
        }
        let mut grads = tape.backward(loss.total)?;
        let g = bound.gradients(&tape, &mut grads)?;
        self.critic_adam.step(&mut self.critic_params, &g)?;
        Ok(value)
    }

    pub fn critic_update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<f64> {
        let targets = self.compute_targets(batch, rng)?;
        self.critic_step(batch, &targets)
    }

    /// Resamples every agent's action from the current policies and
    /// evaluates the online critic on the result.
    pub fn evaluate_policies<R: Rng + ?Sized>(&self, batch: &Batch, rng: &mut R) -> Result<PolicyEvaluation> {
        let (dists, joint) = self.sample_joint(&self.policy_params, &batch.inputs, rng)?;
        let q = self.q_plain(&self.critic_params, &batch.graphs, &joint)?;
        let actions = (0..self.agent_count())
            .map(|i| joint.iter().map(|a| a[i]).collect())
            .collect();
        let baseline = dists
            .iter()
            .zip(&q)
            .map(|((p, _), q)| {
                (0..q.rows())
                    .map(|b| p.row(b).iter().zip(q.row(b)).map(|(pa, qa)| pa * qa).sum())
                    .collect()
            })
            .collect();
        let log_probs = dists
            .iter()
            .enumerate()
            .map(|(i, (_, lp))| joint.iter().enumerate().map(|(b, a)| lp.get(b, a[i])).collect())
            .collect();
        Ok(PolicyEvaluation {
            q,
            actions,
            baseline,
            log_probs,
        })
    }

    /// Negated soft policy objective. With the exact form each agent
    /// minimises `mean_b Σ_a π(a)·(α·log π(a) − (Q(a) − b))`, where the
    /// baseline `b` comes from [`PolicyEvaluation`]; the sampled form uses
    /// `log π(a_s)·(α·log π(a_s) − (Q(a_s) − b))` with the bracket taken
    /// from the evaluation and held fixed.
    pub fn policy_loss(
        &self,
        tape: &mut Tape,
        bound: &marc_tensor::Bound,
        batch: &Batch,
        eval: &PolicyEvaluation,
    ) -> Result<PolicyLoss> {
        let alpha = self.config.alpha;
        let mut per_agent = Vec::with_capacity(self.agent_count());
        let mut entropy = 0.0;
        for i in 0..self.agent_count() {
            let x = tape.constant(batch.inputs[i].clone());
            let logits = self.policies.logits(tape, bound, i, x)?;
            let logp = tape.log_softmax_rows(logits)?;
            let probs = tape.softmax_rows(logits)?;
            let (p, lp) = (tape.value(probs).clone(), tape.value(logp).clone());
            check_distribution(&p)?;
            let q = &eval.q[i];
            let mut advantage = Matrix::zeros(q.rows(), q.cols());
            for b in 0..q.rows() {
                for a in 0..q.cols() {
                    advantage.set(b, a, q.get(b, a) - eval.baseline[i][b]);
                }
                entropy -= p.row(b).iter().zip(lp.row(b)).map(|(pa, la)| pa * la).sum::<f64>();
            }
            let rows = q.rows() as f64;
            let loss = if self.config.sampled_pg {
                let own = &eval.actions[i];
                let weights: Vec<f64> = own
                    .iter()
                    .enumerate()
                    .map(|(b, &a)| alpha * eval.log_probs[i][b] - advantage.get(b, a))
                    .collect();
                let picked = tape.pick_cols(logp, own.as_slice().into())?;
                let w = tape.constant(Matrix::column_vector(&weights));
                let weighted = tape.mul(picked, w)?;
                let s = tape.sum(weighted);
                tape.scale(s, 1.0 / rows)
            } else {
                let ent = tape.scale(logp, alpha);
                let adv = tape.constant(advantage);
                let bracket = tape.sub(ent, adv)?;
                let weighted = tape.mul(probs, bracket)?;
                let s = tape.sum(weighted);
                tape.scale(s, 1.0 / rows)
            };
            per_agent.push(loss);
        }
        let mut total = per_agent[0];
        for &l in &per_agent[1..] {
            total = tape.add(total, l)?;
        }
        let count = (self.agent_count() * batch.size).max(1) as f64;
        Ok(PolicyLoss {
            total,
            per_agent,
            entropy: entropy / count,
        })
    }

    /// One Adam step on every policy. Returns (loss, mean entropy).
    pub fn policy_step(&mut self, batch: &Batch, eval: &PolicyEvaluation) -> Result<(f64, f64)> {
        let mut tape = Tape::new();
        let bound = self.policy_params.bind(&mut tape);
        let loss = self.policy_loss(&mut tape, &bound, batch, eval)?;
        let value = tape.scalar(loss.total);
        if !value.is_finite() {
            return Err(CoreError::NonFinite {
                what: "policy loss",
                detail: format!("entropy {}", loss.entropy),
            });
        }
        let mut grads = tape.backward(loss.total)?;
        let g = bound.gradients(&tape, &mut grads)?;
        self.policy_adam.step(&mut self.policy_params, &g)?;
        Ok((value, loss.entropy))
    }

    pub fn policy_update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<(f64, f64)> {
        let eval = self.evaluate_policies(batch, rng)?;
        self.policy_step(batch, &eval)
    }

    /// `target ← (1 − τ)·target + τ·online` for critics and policies.
    pub fn soft_update(&mut self) -> Result<()> {
        let tau = self.config.tau;
        self.critic_target.soft_update_from(&self.critic_params, tau)?;
        self.policy_target.soft_update_from(&self.policy_params, tau)?;
        Ok(())
    }

    /// Actions for one joint observation, sampled or greedy.
    pub fn act<R: Rng + ?Sized>(&self, observations: &[Vec<f64>], greedy: bool, rng: &mut R) -> Result<Vec<usize>> {
        act_with(&self.policies, &self.policy_params, &self.view, observations, greedy, rng)
    }
}

/// Policy actions for any number of agents: agent `k` uses policy
/// `k mod n`.
pub fn act_with<R: Rng + ?Sized>(
    policies: &Policies,
    params: &ParamSet,
    view: &ObservationView,
    observations: &[Vec<f64>],
    greedy: bool,
    rng: &mut R,
) -> Result<Vec<usize>> {
    observations
        .iter()
        .enumerate()
        .map(|(k, o)| {
            let x = Matrix::row_vector(&view.policy_input(o));
            let p = policies.probabilities(params, k % policies.agent_count(), &x)?;
            Ok(if greedy {
                argmax(p.row(0))
            } else {
                sample_categorical(p.row(0), rng)
            })
        })
        .collect()
}
