mod common;

use common::*;
use marc_core::*;
use marc_envs::{EnvConfig, LbfConfig};

#[test]
fn zero_steps_keep_the_initialization() {
    let mut cfg = small_config(cpp_smoke());
    cfg.total_steps = 0;
    let mut t = Trainer::new(&cfg, 3).unwrap();
    t.run(|_| {}).unwrap();
    let fresh = Trainer::new(&cfg, 3).unwrap();
    let c = t.checkpoint();
    assert_eq!(c.critic, fresh.learner.critic_params);
    assert_eq!(c.policy, fresh.learner.policy_params);
    assert_eq!(c.critic_target, c.critic);
    assert_eq!(c.policy_target, c.policy);
    assert!(t.metrics.is_empty());
    assert_eq!(t.evaluations.len(), 1);
}

fn run(cfg: &TrainingConfig, seed: u64) -> (String, String) {
    let mut t = Trainer::new(cfg, seed).unwrap();
    t.run(|_| {}).unwrap();
    (metrics_csv(&t.metrics), t.checkpoint().to_json().unwrap())
}

#[test]
fn identical_seeds_give_identical_runs() {
    let mut cfg = small_config(lbf_small());
    cfg.total_steps = 400;
    let a = run(&cfg, 8);
    let b = run(&cfg, 8);
    assert_eq!(a, b);
    assert!(a.0.lines().count() > 3);
    assert!(a.0.starts_with(METRICS_HEADER));
    assert_ne!(run(&cfg, 9).0, a.0);
}

#[test]
fn no_updates_before_one_batch_is_stored() {
    let mut cfg = small_config(cpp_smoke());
    cfg.algo.batch_size = 64;
    cfg.algo.update_interval = 10;
    let mut t = Trainer::new(&cfg, 0).unwrap();
    let init = (t.learner.critic_params.clone(), t.learner.policy_params.clone());
    for _ in 0..60 {
        t.step().unwrap();
    }
    assert_eq!((t.learner.critic_params.clone(), t.learner.policy_params.clone()), init);
    let target = t.learner.critic_target.fingerprint();
    for _ in 0..10 {
        t.step().unwrap();
    }
    assert_ne!(t.learner.critic_params, init.0);
    assert_ne!(t.learner.policy_params, init.1);
    assert_ne!(t.learner.critic_target.fingerprint(), target);
}

#[test]
fn targets_only_move_in_update_rounds() {
    let mut cfg = small_config(cpp_smoke());
    cfg.algo.update_interval = 25;
    let mut t = Trainer::new(&cfg, 1).unwrap();
    let mut last = t.learner.critic_target.fingerprint();
    for step in 1..=100u64 {
        t.step().unwrap();
        let now = t.learner.critic_target.fingerprint();
        assert_eq!(now != last, step % 25 == 0, "step {step}");
        last = now;
    }
}

#[test]
fn buffer_stores_raw_rewards_and_truncation_is_not_terminal() {
    let mut cfg = small_config(cpp_smoke());
    cfg.total_steps = 120;
    let mut t = Trainer::new(&cfg, 2).unwrap();
    t.run(|_| {}).unwrap();
    let allowed = [-0.1, 0.4, -1.1, 0.9, 1.4];
    for tr in t.buffer.iter() {
        for r in &tr.rewards {
            assert!(allowed.iter().any(|a| (a - r).abs() < 1e-12), "{r}");
        }
    }
    // step 50 of an episode that did not finish is a truncation
    for row in t.metrics.iter().filter(|m| m.length == 50 && m.success == 0.0) {
        let tr = t.buffer.get(row.env_step as usize - 1).unwrap();
        assert!(!tr.terminal);
    }
}

#[test]
fn invalid_configs_report_every_problem() {
    let mut cfg = small_config(cpp_smoke());
    cfg.algo.gamma = 0.0;
    cfg.algo.tau = 2.0;
    cfg.relations = "continuous-default".into();
    cfg.encoder.architecture = "transformer".into();
    let err = Trainer::new(&cfg, 0).unwrap_err();
    let CoreError::Config(problems) = &err else {
        panic!("{err}");
    };
    assert_eq!(problems.len(), 4, "{problems:?}");
    assert!(err.to_string().contains("relation preset 'continuous-default' is for continuous worlds but cpp is a grid"));

    let mut cfg = TrainingConfig::for_env(EnvConfig::Target(Default::default()));
    cfg.entities = marc_gnn::EntitySource::Grid;
    assert!(matches!(Trainer::new(&cfg, 0), Err(CoreError::Config(p)) if p.len() == 1));
}

#[test]
fn checkpoints_round_trip() {
    let mut cfg = small_config(lbf_small());
    cfg.total_steps = 150;
    let mut t = Trainer::new(&cfg, 4).unwrap();
    t.run(|_| {}).unwrap();
    let c = t.checkpoint();
    let text = c.to_json().unwrap();
    assert_eq!(Checkpoint::from_json(&text).unwrap(), c);
    assert!(text.starts_with(r#"{"format":"marc-checkpoint","version":1,"#));

    let other = text.replacen(r#""version":1"#, r#""version":7"#, 1);
    assert_eq!(
        Checkpoint::from_json(&other).unwrap_err().to_string(),
        "checkpoint mismatch in version: expected 1, found 7"
    );
    assert!(Checkpoint::from_json("{}").is_err());
}

#[test]
fn checkpoint_architecture_must_match_its_config() {
    let cfg = small_config(lbf_small());
    let t = Trainer::new(&cfg, 4).unwrap();
    let mut c = t.checkpoint();
    c.config.algo.policy_hidden = 32;
    let err = c.policy().unwrap_err().to_string();
    assert!(err.starts_with("checkpoint mismatch in policy: "), "{err}");
    assert!(err.contains("policy.0.0.weight"), "{err}");
}

#[test]
fn trained_policies_run_on_other_team_sizes() {
    let mut cfg = small_config(EnvConfig::Lbf(LbfConfig {
        width: 6,
        height: 6,
        agents: 2,
        fruits: 1,
        ..LbfConfig::default()
    }));
    cfg.total_steps = 100;
    let mut t = Trainer::new(&cfg, 5).unwrap();
    t.run(|_| {}).unwrap();
    let policy = t.checkpoint().policy().unwrap();
    for agents in [1, 2, 3, 5] {
        let env = EnvConfig::Lbf(LbfConfig {
            width: 6,
            height: 6,
            agents,
            fruits: 1,
            ..LbfConfig::default()
        });
        let r = policy.evaluate(&env, 4, 0).unwrap();
        assert_eq!(r.episodes, 4);
        assert!(r.mean_length > 0.0);
    }
    let wrong = policy.evaluate(&cpp_smoke(), 1, 0).unwrap_err().to_string();
    assert_eq!(wrong, "checkpoint mismatch in env: trained on lbf, asked to evaluate cpp");
    // same env and seed as the training-time evaluation
    let again = policy.evaluate(&cfg.env, cfg.eval_episodes, eval_seed(5));
    assert!(again.is_ok());
}

#[test]
fn random_baseline_is_deterministic() {
    let a = random_rollouts(&cpp_smoke(), 20, 1).unwrap();
    assert_eq!(a, random_rollouts(&cpp_smoke(), 20, 1).unwrap());
    assert!(a.mean_return < 0.0 && a.std_return > 0.0);
    let mut zero = cpp_smoke();
    if let EnvConfig::Cpp(c) = &mut zero {
        c.step_limit = 0;
    }
    let z = random_rollouts(&zero, 5, 1).unwrap();
    assert_eq!((z.mean_return, z.std_return, z.mean_length), (0.0, 0.0, 0.0));
}

#[test]
fn greedy_evaluation_matches_the_trainer() {
    let mut cfg = small_config(cpp_smoke());
    cfg.total_steps = 100;
    cfg.eval_episodes = 5;
    let mut t = Trainer::new(&cfg, 6).unwrap();
    t.run(|_| {}).unwrap();
    let from_trainer = t.evaluations.last().unwrap().clone();
    let policy = t.checkpoint().policy().unwrap();
    let mut direct = policy
        .evaluate(&cfg.env, 5, eval_seed(6))
        .unwrap();
    direct.env_step = from_trainer.env_step;
    assert_eq!(direct, from_trainer);
}
