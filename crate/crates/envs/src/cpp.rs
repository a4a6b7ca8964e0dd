//! Collaborative pick and place: pickers collect boxes, hand them to
//! delivery agents, who drop them on free goals.

use marc_relgraph::{Domain, ObservationSchema};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{check_actions, Environment, StepResult};
use crate::error::{EnvError, Result};
use crate::grid::{egocentric, manhattan, offset, resolve_moves, sample_cells, Cell, MOVES};

pub const PASS: usize = 4;
pub const WAIT: usize = 5;
const ACTIONS: [&str; 6] = ["up", "down", "left", "right", "pass", "wait"];
const SELF_FLAG: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CppConfig {
    pub width: usize,
    pub height: usize,
    pub pickers: usize,
    pub deliverers: usize,
    pub boxes: usize,
    pub goals: usize,
    pub step_limit: usize,
    pub pass_reward: f64,
    pub repeat_pass_penalty: f64,
    pub step_penalty: f64,
    pub completion_bonus: f64,
}

impl Default for CppConfig {
    fn default() -> Self {
        Self {
            width: 10,
            height: 10,
            pickers: 2,
            deliverers: 2,
            boxes: 3,
            goals: 3,
            step_limit: 50,
            pass_reward: 0.5,
            repeat_pass_penalty: -1.0,
            step_penalty: -0.1,
            completion_bonus: 1.0,
        }
    }
}

impl CppConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |detail: &str| {
            Err(EnvError::Config {
                env: "cpp",
                detail: detail.into(),
            })
        };
        if self.width == 0 || self.height == 0 {
            return fail("grid must be at least 1x1");
        }
        if self.step_limit == 0 {
            return fail("step_limit must be positive");
        }
        if self.pickers == 0 || self.deliverers == 0 {
            return fail("needs at least one picker and one delivery agent");
        }
        if self.goals < self.boxes {
            return fail("fewer goals than boxes");
        }
        Ok(())
    }

    pub fn agents(&self) -> usize {
        self.pickers + self.deliverers
    }
}

pub fn cpp_schema(width: usize, height: usize) -> ObservationSchema {
    ObservationSchema {
        env: "cpp".into(),
        domain: Domain::Grid { width, height },
        feature_names: [
            "type.agent",
            "type.box",
            "type.goal",
            "role.picker",
            "role.delivery",
            "carrying",
            "done",
            "self",
        ]
        .map(String::from)
        .to_vec(),
        type_offset: 0,
        type_names: ["agent", "box", "goal"].map(String::from).to_vec(),
        type_radii: vec![0.0; 3],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CppAgent {
    pub pos: Cell,
    pub picker: bool,
    pub carrying: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CppBox {
    pub pos: Cell,
    pub carrier: Option<usize>,
    pub delivered: bool,
    pub passes: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CppGoal {
    pub pos: Cell,
    pub locked: bool,
}

#[derive(Debug)]
pub struct Cpp {
    config: CppConfig,
    schema: ObservationSchema,
    rng: ChaCha8Rng,
    pub agents: Vec<CppAgent>,
    pub boxes: Vec<CppBox>,
    pub goals: Vec<CppGoal>,
    steps: usize,
    over: bool,
}

impl Cpp {
    pub fn new(config: CppConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let needed = config.agents() + config.boxes + config.goals;
        if needed > config.width * config.height {
            return Err(EnvError::Crowded {
                env: "cpp",
                needed,
                cells: config.width * config.height,
            });
        }
        let mut env = Self {
            schema: cpp_schema(config.width, config.height),
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            agents: Vec::new(),
            boxes: Vec::new(),
            goals: Vec::new(),
            steps: 0,
            over: false,
        };
        env.reset();
        Ok(env)
    }

    pub fn config(&self) -> &CppConfig {
        &self.config
    }

    pub fn delivered(&self) -> usize {
        self.boxes.iter().filter(|b| b.delivered).count()
    }

    fn blocks(&self) -> Vec<Vec<f64>> {
        let flag = |b: bool| b as u8 as f64;
        let mut out = Vec::new();
        for a in &self.agents {
            out.push(vec![
                a.pos.0 as f64,
                a.pos.1 as f64,
                1.0,
                0.0,
                0.0,
                flag(a.picker),
                flag(!a.picker),
                flag(a.carrying.is_some()),
                0.0,
                0.0,
            ]);
        }
        for b in &self.boxes {
            out.push(vec![
                b.pos.0 as f64,
                b.pos.1 as f64,
                0.0,
                1.0,
                0.0,
                0.0,
                0.0,
                flag(b.carrier.is_some()),
                flag(b.delivered),
                0.0,
            ]);
        }
        for g in &self.goals {
            out.push(vec![g.pos.0 as f64, g.pos.1 as f64, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, flag(g.locked), 0.0]);
        }
        out
    }
}

impl Environment for Cpp {
    fn name(&self) -> &'static str {
        "cpp"
    }

    fn agent_count(&self) -> usize {
        self.agents.len()
    }

    fn action_count(&self) -> usize {
        ACTIONS.len()
    }

    fn action_names(&self) -> &'static [&'static str] {
        &ACTIONS
    }

    fn schema(&self) -> &ObservationSchema {
        &self.schema
    }

    fn step_limit(&self) -> usize {
        self.config.step_limit
    }

    fn steps(&self) -> usize {
        self.steps
    }

    fn reset(&mut self) -> Vec<Vec<f64>> {
        let c = &self.config;
        let n = c.agents();
        let cells = sample_cells(&mut self.rng, "cpp", c.width, c.height, n + c.boxes + c.goals)
            .expect("placement checked at construction");
        self.agents = (0..n)
            .map(|i| CppAgent {
                pos: cells[i],
                picker: i < c.pickers,
                carrying: None,
            })
            .collect();
        self.boxes = (0..c.boxes)
            .map(|i| CppBox {
                pos: cells[n + i],
                carrier: None,
                delivered: false,
                passes: 0,
            })
            .collect();
        self.goals = (0..c.goals)
            .map(|i| CppGoal {
                pos: cells[n + c.boxes + i],
                locked: false,
            })
            .collect();
        self.steps = 0;
        self.over = false;
        self.observations()
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        if self.over {
            return Err(EnvError::EpisodeOver("cpp"));
        }
        check_actions("cpp", actions, self.agents.len(), ACTIONS.len())?;
        let n = self.agents.len();
        let mut rewards = vec![self.config.step_penalty; n];

        let current: Vec<Cell> = self.agents.iter().map(|a| a.pos).collect();
        let desired: Vec<Cell> = current
            .iter()
            .zip(actions)
            .map(|(&p, &a)| if a < 4 { offset(p, MOVES[a]) } else { p })
            .collect();
        let moved = resolve_moves(&current, &desired, self.config.width, self.config.height, |_| false);
        for (a, p) in self.agents.iter_mut().zip(moved) {
            a.pos = p;
            if let Some(b) = a.carrying {
                self.boxes[b].pos = p;
            }
        }

        for i in 0..n {
            let a = &self.agents[i];
            if !a.picker || a.carrying.is_some() {
                continue;
            }
            let pos = a.pos;
            if let Some(b) = self
                .boxes
                .iter()
                .position(|b| b.pos == pos && b.carrier.is_none() && !b.delivered)
            {
                self.boxes[b].carrier = Some(i);
                self.agents[i].carrying = Some(b);
            }
        }

        let mut received = vec![false; n];
        for i in 0..n {
            let Some(b) = self.agents[i].carrying else { continue };
            if actions[i] != PASS || received[i] {
                continue;
            }
            let giver = &self.agents[i];
            let receiver = (0..n).find(|&j| {
                let r = &self.agents[j];
                r.picker != giver.picker && r.carrying.is_none() && manhattan(r.pos, giver.pos) == 1
            });
            if let Some(j) = receiver {
                let r = if self.boxes[b].passes == 0 {
                    self.config.pass_reward
                } else {
                    self.config.repeat_pass_penalty
                };
                rewards[i] += r;
                rewards[j] += r;
                self.boxes[b].passes += 1;
                self.boxes[b].carrier = Some(j);
                self.boxes[b].pos = self.agents[j].pos;
                self.agents[i].carrying = None;
                self.agents[j].carrying = Some(b);
                received[j] = true;
            }
        }

        for i in 0..n {
            let a = &self.agents[i];
            let Some(b) = a.carrying else { continue };
            if a.picker {
                continue;
            }
            if let Some(g) = self.goals.iter().position(|g| g.pos == a.pos && !g.locked) {
                self.goals[g].locked = true;
                self.boxes[b].carrier = None;
                self.boxes[b].delivered = true;
                self.agents[i].carrying = None;
            }
        }

        self.steps += 1;
        let terminal = self.boxes.iter().all(|b| b.delivered);
        if terminal {
            rewards.iter_mut().for_each(|r| *r += self.config.completion_bonus);
        }
        let truncated = !terminal && self.steps >= self.config.step_limit;
        self.over = terminal || truncated;
        Ok(StepResult {
            observations: self.observations(),
            rewards,
            terminal,
            truncated,
            success: self.success(),
        })
    }

    fn observations(&self) -> Vec<Vec<f64>> {
        let blocks = self.blocks();
        (0..self.agents.len())
            .map(|i| egocentric(&blocks, self.agents.len(), i, SELF_FLAG))
            .collect()
    }

    fn entity_positions(&self) -> Vec<(f64, f64)> {
        self.blocks().iter().map(|b| (b[0], b[1])).collect()
    }

    fn success(&self) -> f64 {
        self.boxes.iter().all(|b| b.delivered) as u8 as f64
    }
}
