//! Predators hunt scripted prey; a prey with two or more orthogonally
//! adjacent predators is captured and respawns elsewhere.

use std::fmt::Debug;

use marc_relgraph::{Domain, ObservationSchema};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{check_actions, Environment, StepResult};
use crate::error::{EnvError, Result};
use crate::grid::{egocentric, in_bounds, manhattan, offset, random_free_cell, resolve_moves, sample_cells, Cell, MOVES};

pub const STAY: usize = 4;
const ACTIONS: [&str; 5] = ["up", "down", "left", "right", "stay"];
const SELF_FLAG: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WolfpackConfig {
    pub width: usize,
    pub height: usize,
    pub predators: usize,
    pub prey: usize,
    pub step_limit: usize,
    /// Reward per pack member, multiplied by the pack size.
    pub capture_reward: f64,
}

impl Default for WolfpackConfig {
    fn default() -> Self {
        Self {
            width: 10,
            height: 10,
            predators: 3,
            prey: 2,
            step_limit: 200,
            capture_reward: 1.0,
        }
    }
}

impl WolfpackConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |detail: &str| {
            Err(EnvError::Config {
                env: "wolfpack",
                detail: detail.into(),
            })
        };
        if self.width == 0 || self.height == 0 {
            return fail("grid must be at least 1x1");
        }
        if self.step_limit == 0 {
            return fail("step_limit must be positive");
        }
        if self.predators == 0 {
            return fail("needs at least one predator");
        }
        Ok(())
    }
}

pub fn wolfpack_schema(width: usize, height: usize) -> ObservationSchema {
    ObservationSchema {
        env: "wolfpack".into(),
        domain: Domain::Grid { width, height },
        feature_names: ["type.predator", "type.prey", "self"].map(String::from).to_vec(),
        type_offset: 0,
        type_names: ["predator", "prey"].map(String::from).to_vec(),
        type_radii: vec![0.0; 2],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Seen {
    Wall,
    Empty,
    Predator,
    Prey,
}

/// The 3×3 window around a prey; `cells[1 + dy][1 + dx]`, centre is the prey.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreyView {
    pub cells: [[Seen; 3]; 3],
}

impl PreyView {
    pub fn at(&self, d: Cell) -> Seen {
        self.cells[(1 + d.1) as usize][(1 + d.0) as usize]
    }

    /// Moves (action indices 0..4) onto empty cells.
    pub fn free_moves(&self) -> Vec<usize> {
        (0..4).filter(|&k| self.at(MOVES[k]) == Seen::Empty).collect()
    }

    pub fn predators(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for dy in -1..=1 {
            for dx in -1..=1 {
                if self.at((dx, dy)) == Seen::Predator {
                    out.push((dx, dy));
                }
            }
        }
        out
    }
}

pub trait PreyPolicy: Send + Sync + Debug {
    fn act(&self, view: &PreyView, rng: &mut dyn RngCore) -> usize;
}

/// Flees visible predators, otherwise wanders.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedPrey;

impl PreyPolicy for ScriptedPrey {
    fn act(&self, view: &PreyView, rng: &mut dyn RngCore) -> usize {
        scripted_prey_policy(view, rng)
    }
}

/// Picks the free move maximising the minimum Euclidean distance to the
/// visible predators (ties at random), a uniformly random free move when no
/// predator is visible, and stays when boxed in.
pub fn scripted_prey_policy(view: &PreyView, rng: &mut dyn RngCore) -> usize {
    let free = view.free_moves();
    if free.is_empty() {
        return STAY;
    }
    let predators = view.predators();
    if predators.is_empty() {
        return free[rng.gen_range(0..free.len())];
    }
    let score = |k: usize| {
        let (x, y) = MOVES[k];
        predators
            .iter()
            .map(|&(px, py)| (((x - px).pow(2) + (y - py).pow(2)) as f64).sqrt())
            .fold(f64::INFINITY, f64::min)
    };
    let best = free.iter().map(|&k| score(k)).fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = free.into_iter().filter(|&k| score(k) == best).collect();
    ties[rng.gen_range(0..ties.len())]
}

#[derive(Debug)]
pub struct Wolfpack {
    config: WolfpackConfig,
    schema: ObservationSchema,
    rng: ChaCha8Rng,
    policy: Box<dyn PreyPolicy>,
    pub predators: Vec<Cell>,
    pub prey: Vec<Cell>,
    /// Prey cells at the most recent capture check, before any respawn.
    pub checked_prey: Vec<Cell>,
    captures: usize,
    steps: usize,
    over: bool,
}

impl Wolfpack {
    pub fn new(config: WolfpackConfig, seed: u64) -> Result<Self> {
        Self::with_policy(config, seed, Box::new(ScriptedPrey))
    }

    pub fn with_policy(config: WolfpackConfig, seed: u64, policy: Box<dyn PreyPolicy>) -> Result<Self> {
        config.validate()?;
        let needed = config.predators + config.prey;
        if needed > config.width * config.height {
            return Err(EnvError::Crowded {
                env: "wolfpack",
                needed,
                cells: config.width * config.height,
            });
        }
        let mut env = Self {
            schema: wolfpack_schema(config.width, config.height),
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            policy,
            predators: Vec::new(),
            prey: Vec::new(),
            checked_prey: Vec::new(),
            captures: 0,
            steps: 0,
            over: false,
        };
        env.reset();
        Ok(env)
    }

    pub fn config(&self) -> &WolfpackConfig {
        &self.config
    }

    pub fn view(&self, at: Cell) -> PreyView {
        let mut cells = [[Seen::Empty; 3]; 3];
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                let c = offset(at, (dx, dy));
                cells[(1 + dy) as usize][(1 + dx) as usize] = if (dx, dy) == (0, 0) {
                    Seen::Prey
                } else if !in_bounds(c, self.config.width, self.config.height) {
                    Seen::Wall
                } else if self.predators.contains(&c) {
                    Seen::Predator
                } else if self.prey.contains(&c) {
                    Seen::Prey
                } else {
                    Seen::Empty
                };
            }
        }
        PreyView { cells }
    }

    fn blocks(&self) -> Vec<Vec<f64>> {
        let p = self.predators.iter().map(|c| vec![c.0 as f64, c.1 as f64, 1.0, 0.0, 0.0]);
        let q = self.prey.iter().map(|c| vec![c.0 as f64, c.1 as f64, 0.0, 1.0, 0.0]);
        p.chain(q).collect()
    }
}

impl Environment for Wolfpack {
    fn name(&self) -> &'static str {
        "wolfpack"
    }

    fn agent_count(&self) -> usize {
        self.predators.len()
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
        let cells = sample_cells(&mut self.rng, "wolfpack", c.width, c.height, c.predators + c.prey)
            .expect("placement checked at construction");
        self.predators = cells[..c.predators].to_vec();
        self.prey = cells[c.predators..].to_vec();
        self.checked_prey = self.prey.clone();
        self.captures = 0;
        self.steps = 0;
        self.over = false;
        self.observations()
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        if self.over {
            return Err(EnvError::EpisodeOver("wolfpack"));
        }
        check_actions("wolfpack", actions, self.predators.len(), ACTIONS.len())?;
        let desired: Vec<Cell> = self
            .predators
            .iter()
            .zip(actions)
            .map(|(&p, &a)| if a < 4 { offset(p, MOVES[a]) } else { p })
            .collect();
        let prey = &self.prey;
        self.predators = resolve_moves(&self.predators, &desired, self.config.width, self.config.height, |c| {
            prey.contains(&c)
        });

        for k in 0..self.prey.len() {
            let view = self.view(self.prey[k]);
            let a = self.policy.act(&view, &mut self.rng);
            if a < 4 && view.at(MOVES[a]) == Seen::Empty {
                self.prey[k] = offset(self.prey[k], MOVES[a]);
            }
        }

        let mut rewards = vec![0.0; self.predators.len()];
        self.checked_prey = self.prey.clone();
        let mut captured = Vec::new();
        for (k, &q) in self.prey.iter().enumerate() {
            let pack: Vec<usize> = (0..self.predators.len())
                .filter(|&i| manhattan(self.predators[i], q) == 1)
                .collect();
            if pack.len() >= 2 {
                for &i in &pack {
                    rewards[i] += pack.len() as f64 * self.config.capture_reward;
                }
                captured.push(k);
            }
        }
        self.captures += captured.len();
        for k in captured {
            // the captured prey leaves the grid before its new cell is drawn
            self.prey[k] = (-1, -1);
            let (w, h) = (self.config.width, self.config.height);
            let taken: Vec<Cell> = self.predators.iter().chain(&self.prey).copied().collect();
            if let Some(c) = random_free_cell(&mut self.rng, w, h, |c| !taken.contains(&c)) {
                self.prey[k] = c;
            } else {
                self.prey[k] = self.checked_prey[k];
            }
        }

        self.steps += 1;
        let truncated = self.steps >= self.config.step_limit;
        self.over = truncated;
        Ok(StepResult {
            observations: self.observations(),
            rewards,
            terminal: false,
            truncated,
            success: self.success(),
        })
    }

    fn observations(&self) -> Vec<Vec<f64>> {
        let blocks = self.blocks();
        (0..self.predators.len())
            .map(|i| egocentric(&blocks, self.predators.len(), i, SELF_FLAG))
            .collect()
    }

    fn entity_positions(&self) -> Vec<(f64, f64)> {
        self.predators
            .iter()
            .chain(&self.prey)
            .map(|c| (c.0 as f64, c.1 as f64))
            .collect()
    }

    fn success(&self) -> f64 {
        self.captures as f64
    }
}
