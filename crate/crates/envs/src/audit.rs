//! Random-action runs with invariant checks after every step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cpp::Cpp;
use crate::env::{EnvConfig, Environment, StepResult};
use crate::error::Result;
use crate::grid::{in_bounds, manhattan, Cell};
use crate::lbf::Lbf;
use crate::target::Target;
use crate::wolfpack::Wolfpack;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub steps: usize,
    pub episodes: usize,
    pub violations: Vec<String>,
}

impl AuditReport {
    fn fail(&mut self, msg: String) {
        // keep the report readable when something breaks everywhere
        if self.violations.len() < 20 {
            self.violations.push(format!("step {}: {msg}", self.steps));
        }
    }
}

fn distinct(cells: &[Cell]) -> bool {
    let mut v = cells.to_vec();
    v.sort_unstable();
    v.windows(2).all(|w| w[0] != w[1])
}

trait Audited: Environment {
    fn snapshot(&self) -> Snapshot;
    fn check(&self, before: &Snapshot, result: &StepResult, report: &mut AuditReport);
}

#[derive(Debug, Clone, Default)]
struct Snapshot {
    count: usize,
    delivered: usize,
}

impl Audited for Cpp {
    fn snapshot(&self) -> Snapshot {
        Snapshot {
            count: self.boxes.len(),
            delivered: self.delivered(),
        }
    }

    fn check(&self, before: &Snapshot, _: &StepResult, report: &mut AuditReport) {
        let c = self.config();
        let agents: Vec<Cell> = self.agents.iter().map(|a| a.pos).collect();
        if !distinct(&agents) {
            report.fail("two agents share a cell".into());
        }
        let all = agents.iter().chain(self.boxes.iter().map(|b| &b.pos)).chain(self.goals.iter().map(|g| &g.pos));
        if all.clone().any(|&p| !in_bounds(p, c.width, c.height)) {
            report.fail("entity off the grid".into());
        }
        if self.boxes.len() != before.count {
            report.fail("box count changed".into());
        }
        if self.delivered() < before.delivered {
            report.fail("delivered count decreased".into());
        }
        for g in &self.goals {
            let on = self.boxes.iter().filter(|b| b.delivered && b.pos == g.pos).count();
            if on > 1 || (on == 1) != g.locked {
                report.fail(format!("goal at {:?} holds {on} boxes, locked={}", g.pos, g.locked));
            }
        }
        for (i, a) in self.agents.iter().enumerate() {
            if let Some(b) = a.carrying {
                let bx = &self.boxes[b];
                if bx.carrier != Some(i) || bx.pos != a.pos {
                    report.fail(format!("agent {i} and box {b} disagree"));
                }
            }
        }
    }
}

impl Audited for Lbf {
    fn snapshot(&self) -> Snapshot {
        Snapshot {
            count: self.fruits.len(),
            delivered: self.trees(),
        }
    }

    fn check(&self, before: &Snapshot, _: &StepResult, report: &mut AuditReport) {
        let agents: Vec<Cell> = self.agents.iter().map(|a| a.pos).collect();
        let fruits: Vec<Cell> = self.fruits.iter().map(|f| f.pos).collect();
        let all: Vec<Cell> = agents.iter().chain(&fruits).copied().collect();
        if !distinct(&all) {
            report.fail("cell shared by agents, fruits or trees".into());
        }
        if let marc_relgraph::Domain::Grid { width, height } = self.schema().domain {
            if all.iter().any(|&p| !in_bounds(p, width, height)) {
                report.fail("entity off the grid".into());
            }
        }
        let remaining = self.fruits.iter().filter(|f| !f.collected).count();
        if remaining + self.trees() != before.count {
            report.fail("trees + fruits differs from the initial fruit count".into());
        }
        if self.trees() < before.delivered {
            report.fail("a tree disappeared".into());
        }
    }
}

impl Audited for Wolfpack {
    fn snapshot(&self) -> Snapshot {
        Snapshot::default()
    }

    fn check(&self, _: &Snapshot, result: &StepResult, report: &mut AuditReport) {
        let all: Vec<Cell> = self.predators.iter().chain(&self.prey).copied().collect();
        if !distinct(&all) {
            report.fail("two animals share a cell".into());
        }
        if let marc_relgraph::Domain::Grid { width, height } = self.schema().domain {
            if all.iter().any(|&p| !in_bounds(p, width, height)) {
                report.fail("entity off the grid".into());
            }
        }
        // recount every predator–prey adjacency from scratch
        let mut expected = vec![0.0; self.predators.len()];
        for &q in &self.checked_prey {
            let pack: Vec<usize> = (0..self.predators.len())
                .filter(|&i| manhattan(self.predators[i], q) == 1)
                .collect();
            if pack.len() >= 2 {
                for &i in &pack {
                    expected[i] += pack.len() as f64;
                }
            }
        }
        let unit = self.config().capture_reward;
        let agree = expected
            .iter()
            .zip(&result.rewards)
            .all(|(e, r)| (e * unit - r).abs() < 1e-12);
        if !agree {
            report.fail(format!("capture oracle {expected:?} disagrees with rewards {:?}", result.rewards));
        }
    }
}

impl Audited for Target {
    fn snapshot(&self) -> Snapshot {
        Snapshot::default()
    }

    fn check(&self, _: &Snapshot, result: &StepResult, report: &mut AuditReport) {
        let c = self.config();
        let inside = |p: &marc_relgraph::Point| p.x.abs() <= c.half_extent && p.y.abs() <= c.half_extent;
        if !self.agents.iter().all(|b| inside(&b.pos)) || !self.obstacles.iter().all(|b| inside(&b.pos)) {
            report.fail("body outside the world".into());
        }
        if self.agents.iter().any(|b| b.vel.x.hypot(b.vel.y) > c.max_speed + 1e-12) {
            report.fail("speed above the clamp".into());
        }
        for (i, &r) in result.rewards.iter().enumerate() {
            let want = -c.distance_weight * self.distance_to_landmark(i) - c.collision_penalty * self.contacts(i) as f64;
            if (want - r).abs() > 1e-12 {
                report.fail(format!("agent {i} reward {r} vs {want}"));
            }
        }
    }
}

fn run<E: Audited>(env: &mut E, steps: usize, seed: u64) -> AuditReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = AuditReport::default();
    let (n, k, limit) = (env.agent_count(), env.action_count(), env.step_limit());
    env.reset();
    while report.steps < steps {
        let before = env.snapshot();
        let actions: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let result = match env.step(&actions) {
            Ok(r) => r,
            Err(e) => {
                report.fail(e.to_string());
                break;
            }
        };
        report.steps += 1;
        env.check(&before, &result, &mut report);
        if result.rewards.len() != n || result.observations.len() != n {
            report.fail("one reward and one observation per agent".into());
        }
        if env.steps() > limit {
            report.fail(format!("episode ran {} steps past the limit {limit}", env.steps()));
        }
        if result.done() {
            report.episodes += 1;
            env.reset();
        }
    }
    report
}

/// Runs `steps` uniformly random joint actions, resetting after every
/// episode, and records every invariant violation.
pub fn audit(config: &EnvConfig, steps: usize, seed: u64) -> Result<AuditReport> {
    Ok(match config {
        EnvConfig::Cpp(c) => run(&mut Cpp::new(c.clone(), seed)?, steps, seed),
        EnvConfig::Lbf(c) => run(&mut Lbf::new(c.clone(), seed)?, steps, seed),
        EnvConfig::Wolfpack(c) => run(&mut Wolfpack::new(c.clone(), seed)?, steps, seed),
        EnvConfig::Target(c) => run(&mut Target::new(c.clone(), seed)?, steps, seed),
    })
}
