use marc_envs::wolfpack::STAY;
use marc_envs::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn configs() -> Vec<EnvConfig> {
    vec![
        EnvConfig::Cpp(CppConfig::default()),
        EnvConfig::Cpp(CppConfig {
            width: 4,
            height: 4,
            pickers: 2,
            deliverers: 2,
            boxes: 3,
            goals: 4,
            ..CppConfig::default()
        }),
        EnvConfig::Lbf(LbfConfig::default()),
        EnvConfig::Lbf(LbfConfig {
            width: 5,
            height: 5,
            agents: 3,
            fruits: 5,
            coop: false,
            ..LbfConfig::default()
        }),
        EnvConfig::Wolfpack(WolfpackConfig::default()),
        EnvConfig::Wolfpack(WolfpackConfig {
            width: 4,
            height: 4,
            predators: 4,
            prey: 3,
            step_limit: 30,
            ..WolfpackConfig::default()
        }),
        EnvConfig::Target(TargetConfig::default()),
    ]
}

#[test]
fn random_play_keeps_every_invariant() {
    for cfg in configs() {
        let report = audit(&cfg, 20_000, 11).unwrap();
        assert!(report.violations.is_empty(), "{}: {:?}", cfg.name(), report.violations);
        assert!(report.episodes > 0);
    }
}

fn trajectory(cfg: &EnvConfig, seed: u64) -> Vec<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut env = make_env(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let mut out = vec![(env.reset(), Vec::new())];
    for _ in 0..300 {
        let actions: Vec<usize> = (0..env.agent_count()).map(|_| rng.gen_range(0..env.action_count())).collect();
        let r = env.step(&actions).unwrap();
        let done = r.done();
        out.push((r.observations, r.rewards));
        if done {
            out.push((env.reset(), Vec::new()));
        }
    }
    out
}

#[test]
fn same_seed_same_trajectory() {
    for cfg in configs() {
        let a = trajectory(&cfg, 5);
        let b = trajectory(&cfg, 5);
        assert!(a == b, "{}", cfg.name());
        assert!(trajectory(&cfg, 6) != a, "{}", cfg.name());
    }
}

#[test]
fn overcrowded_layouts_are_rejected() {
    let cfg = EnvConfig::Lbf(LbfConfig {
        width: 2,
        height: 2,
        agents: 3,
        fruits: 2,
        ..LbfConfig::default()
    });
    assert_eq!(make_env(&cfg, 0).unwrap_err().to_string(), "lbf: 5 entities do not fit on 4 cells");
}

#[test]
fn registry_builds_by_name() {
    let reg = EnvRegistry::default();
    assert_eq!(reg.names(), vec!["cpp", "lbf", "wolfpack", "target"]);
    let err = reg
        .make_named("lbf", &EnvConfig::Cpp(CppConfig::default()), 0)
        .unwrap_err();
    assert_eq!(err.to_string(), "config for 'cpp' passed to the 'lbf' environment");
    assert!(reg.make_named("smac", &EnvConfig::Cpp(CppConfig::default()), 0).is_err());
}

fn view(cells: [[Seen; 3]; 3]) -> PreyView {
    PreyView { cells }
}

use Seen::{Empty as E, Predator as P, Prey as Q, Wall as W};

#[test]
fn prey_flees_a_predator_to_the_west() {
    // rows are dy = -1, 0, +1; columns dx = -1, 0, +1
    let v = view([[E, E, E], [P, Q, E], [E, E, E]]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..100 {
        assert_eq!(scripted_prey_policy(&v, &mut rng), 3);
    }
}

#[test]
fn boxed_in_prey_stays() {
    let v = view([[W, P, W], [Q, Q, P], [W, W, W]]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(scripted_prey_policy(&v, &mut rng), STAY);
}

#[test]
fn unthreatened_prey_wanders_uniformly() {
    let p_value = |v: &PreyView, free: &[usize]| {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0usize; 5];
        let draws = 10_000;
        for _ in 0..draws {
            counts[scripted_prey_policy(v, &mut rng)] += 1;
        }
        assert!(counts.iter().enumerate().all(|(k, &c)| free.contains(&k) || c == 0));
        let expected = draws as f64 / free.len() as f64;
        let stat: f64 = free.iter().map(|&k| (counts[k] as f64 - expected).powi(2) / expected).sum();
        1.0 - ChiSquared::new((free.len() - 1) as f64).unwrap().cdf(stat)
    };
    let open = view([[E, E, E], [E, Q, E], [E, E, E]]);
    assert!(p_value(&open, &[0, 1, 2, 3]) > 0.01);
    // a wall below and another prey to the right leave up and left
    let corner = view([[W, W, W], [E, Q, Q], [E, E, E]]);
    assert!(p_value(&corner, &[0, 2]) > 0.01);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn respawned_prey_never_overlap(seed in any::<u64>()) {
        let cfg = WolfpackConfig { width: 4, height: 4, predators: 5, prey: 4, step_limit: 50, ..WolfpackConfig::default() };
        let mut env = Wolfpack::new(cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let a: Vec<usize> = (0..5).map(|_| rng.gen_range(0..5)).collect();
            env.step(&a).unwrap();
            let mut all: Vec<_> = env.predators.iter().chain(&env.prey).copied().collect();
            all.sort_unstable();
            let n = all.len();
            all.dedup();
            prop_assert_eq!(all.len(), n);
        }
    }
}
