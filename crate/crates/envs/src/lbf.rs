//! Level-based foraging where collected fruit leaves a tree behind.

use marc_relgraph::{Domain, ObservationSchema};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{check_actions, Environment, StepResult};
use crate::error::{EnvError, Result};
use crate::grid::{egocentric, manhattan, offset, resolve_moves, sample_cells, Cell, MOVES};

pub const LOAD: usize = 4;
pub const NOOP: usize = 5;
const ACTIONS: [&str; 6] = ["up", "down", "left", "right", "load", "noop"];
const SELF_FLAG: usize = 6;
pub const TREE_LEVEL: f64 = -1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfConfig {
    pub width: usize,
    pub height: usize,
    pub agents: usize,
    pub fruits: usize,
    pub max_agent_level: u32,
    /// Every fruit needs the combined level of the strongest agents.
    pub coop: bool,
    pub step_limit: usize,
}

impl Default for LbfConfig {
    fn default() -> Self {
        Self {
            width: 10,
            height: 10,
            agents: 4,
            fruits: 4,
            max_agent_level: 2,
            coop: true,
            step_limit: 50,
        }
    }
}

impl LbfConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |detail: &str| {
            Err(EnvError::Config {
                env: "lbf",
                detail: detail.into(),
            })
        };
        if self.width == 0 || self.height == 0 {
            return fail("grid must be at least 1x1");
        }
        if self.step_limit == 0 {
            return fail("step_limit must be positive");
        }
        if self.agents == 0 {
            return fail("needs at least one agent");
        }
        if self.max_agent_level == 0 {
            return fail("max_agent_level must be positive");
        }
        Ok(())
    }
}

pub fn lbf_schema(width: usize, height: usize) -> ObservationSchema {
    ObservationSchema {
        env: "lbf".into(),
        domain: Domain::Grid { width, height },
        feature_names: ["type.agent", "type.fruit", "type.tree", "level", "self"]
            .map(String::from)
            .to_vec(),
        type_offset: 0,
        type_names: ["agent", "fruit", "tree"].map(String::from).to_vec(),
        type_radii: vec![0.0; 3],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfAgent {
    pub pos: Cell,
    pub level: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fruit {
    pub pos: Cell,
    pub level: u32,
    /// Collected fruit stays on the grid as a tree.
    pub collected: bool,
}

#[derive(Debug)]
pub struct Lbf {
    config: LbfConfig,
    schema: ObservationSchema,
    rng: ChaCha8Rng,
    pub agents: Vec<LbfAgent>,
    pub fruits: Vec<Fruit>,
    total_level: u32,
    team_return: f64,
    steps: usize,
    over: bool,
}

impl Lbf {
    pub fn new(config: LbfConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let needed = config.agents + config.fruits;
        if needed > config.width * config.height {
            return Err(EnvError::Crowded {
                env: "lbf",
                needed,
                cells: config.width * config.height,
            });
        }
        let mut env = Self {
            schema: lbf_schema(config.width, config.height),
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            agents: Vec::new(),
            fruits: Vec::new(),
            total_level: 0,
            team_return: 0.0,
            steps: 0,
            over: false,
        };
        env.reset();
        Ok(env)
    }

    /// Replaces the layout, e.g. to set up a specific scenario.
    pub fn set_layout(&mut self, agents: Vec<LbfAgent>, fruits: Vec<Fruit>) {
        self.total_level = fruits.iter().map(|f| f.level).sum();
        self.agents = agents;
        self.fruits = fruits;
        self.team_return = 0.0;
        self.steps = 0;
        self.over = false;
    }

    pub fn trees(&self) -> usize {
        self.fruits.iter().filter(|f| f.collected).count()
    }

    fn blocks(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = self
            .agents
            .iter()
            .map(|a| vec![a.pos.0 as f64, a.pos.1 as f64, 1.0, 0.0, 0.0, a.level as f64, 0.0])
            .collect();
        for f in &self.fruits {
            let (fruit, tree, level) = if f.collected {
                (0.0, 1.0, TREE_LEVEL)
            } else {
                (1.0, 0.0, f.level as f64)
            };
            out.push(vec![f.pos.0 as f64, f.pos.1 as f64, 0.0, fruit, tree, level, 0.0]);
        }
        out
    }
}

impl Environment for Lbf {
    fn name(&self) -> &'static str {
        "lbf"
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
        let cells = sample_cells(&mut self.rng, "lbf", c.width, c.height, c.agents + c.fruits)
            .expect("placement checked at construction");
        let agents: Vec<LbfAgent> = (0..c.agents)
            .map(|i| LbfAgent {
                pos: cells[i],
                level: self.rng.gen_range(1..=c.max_agent_level),
            })
            .collect();
        let mut levels: Vec<u32> = agents.iter().map(|a| a.level).collect();
        levels.sort_unstable_by(|a, b| b.cmp(a));
        let top: u32 = levels.iter().take(3).sum();
        let fruits = (0..c.fruits)
            .map(|i| Fruit {
                pos: cells[c.agents + i],
                level: if c.coop { top } else { self.rng.gen_range(1..=top) },
                collected: false,
            })
            .collect();
        self.set_layout(agents, fruits);
        self.observations()
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        if self.over {
            return Err(EnvError::EpisodeOver("lbf"));
        }
        check_actions("lbf", actions, self.agents.len(), ACTIONS.len())?;
        let n = self.agents.len();
        let mut rewards = vec![0.0; n];

        let current: Vec<Cell> = self.agents.iter().map(|a| a.pos).collect();
        let desired: Vec<Cell> = current
            .iter()
            .zip(actions)
            .map(|(&p, &a)| if a < 4 { offset(p, MOVES[a]) } else { p })
            .collect();
        let fruits = &self.fruits;
        let moved = resolve_moves(&current, &desired, self.config.width, self.config.height, |c| {
            fruits.iter().any(|f| f.pos == c)
        });
        for (a, p) in self.agents.iter_mut().zip(moved) {
            a.pos = p;
        }

        for f in 0..self.fruits.len() {
            let fruit = &self.fruits[f];
            if fruit.collected {
                continue;
            }
            let loaders: Vec<usize> = (0..n)
                .filter(|&i| actions[i] == LOAD && manhattan(self.agents[i].pos, fruit.pos) == 1)
                .collect();
            let combined: u32 = loaders.iter().map(|&i| self.agents[i].level).sum();
            if loaders.is_empty() || combined < fruit.level {
                continue;
            }
            // per-agent share, normalised so a full episode sums to 1 over the team
            let scale = fruit.level as f64 / (combined as f64 * self.total_level.max(1) as f64);
            for &i in &loaders {
                rewards[i] += self.agents[i].level as f64 * scale;
            }
            self.fruits[f].collected = true;
        }

        self.team_return += rewards.iter().sum::<f64>();
        self.steps += 1;
        let terminal = self.fruits.iter().all(|f| f.collected);
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
        self.team_return
    }
}
