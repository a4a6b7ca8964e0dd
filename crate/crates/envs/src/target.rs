//! Continuous navigation: agents steer toward assigned landmarks among
//! moving obstacles under damped double-integrator dynamics.

use marc_relgraph::{Domain, ObservationSchema, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{check_actions, Environment, StepResult};
use crate::error::{EnvError, Result};
use crate::grid::egocentric;

const ACTIONS: [&str; 5] = ["noop", "+x", "-x", "+y", "-y"];
const FORCES: [(f64, f64); 5] = [(0.0, 0.0), (1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)];
const ASSIGNED: usize = 7;
const SELF_FLAG: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    pub agents: usize,
    pub obstacles: usize,
    /// The world is the square [-half_extent, half_extent]².
    pub half_extent: f64,
    pub dt: f64,
    pub damping: f64,
    pub accel: f64,
    pub max_speed: f64,
    pub agent_radius: f64,
    pub landmark_radius: f64,
    pub obstacle_radius: f64,
    pub obstacle_speed: f64,
    pub step_limit: usize,
    pub distance_weight: f64,
    /// Subtracted once per overlapping agent or obstacle per step.
    pub collision_penalty: f64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            agents: 3,
            obstacles: 3,
            half_extent: 1.0,
            dt: 0.1,
            damping: 0.25,
            accel: 5.0,
            max_speed: 1.0,
            agent_radius: 0.05,
            landmark_radius: 0.05,
            obstacle_radius: 0.1,
            obstacle_speed: 0.2,
            step_limit: 25,
            distance_weight: 1.0,
            collision_penalty: 1.0,
        }
    }
}

impl TargetConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |detail: &str| {
            Err(EnvError::Config {
                env: "target",
                detail: detail.into(),
            })
        };
        if self.agents == 0 {
            return fail("needs at least one agent");
        }
        if self.step_limit == 0 {
            return fail("step_limit must be positive");
        }
        if !(self.half_extent > 0.0 && self.dt > 0.0 && self.max_speed > 0.0) {
            return fail("half_extent, dt and max_speed must be positive");
        }
        if !(0.0..=1.0).contains(&self.damping) {
            return fail("damping must lie in [0, 1]");
        }
        Ok(())
    }
}

pub fn target_schema(c: &TargetConfig) -> ObservationSchema {
    ObservationSchema {
        env: "target".into(),
        domain: Domain::Continuous {
            half_extent: c.half_extent,
        },
        feature_names: [
            "vel.x",
            "vel.y",
            "type.agent",
            "type.landmark",
            "type.obstacle",
            "assigned",
            "self",
        ]
        .map(String::from)
        .to_vec(),
        type_offset: 2,
        type_names: ["agent", "landmark", "obstacle"].map(String::from).to_vec(),
        type_radii: vec![c.agent_radius, c.landmark_radius, c.obstacle_radius],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Body {
    pub pos: Point,
    pub vel: Point,
}

#[derive(Debug)]
pub struct Target {
    config: TargetConfig,
    schema: ObservationSchema,
    rng: ChaCha8Rng,
    pub agents: Vec<Body>,
    /// Landmark `i` belongs to agent `i`.
    pub landmarks: Vec<Point>,
    pub obstacles: Vec<Body>,
    steps: usize,
    over: bool,
}

impl Target {
    pub fn new(config: TargetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut env = Self {
            schema: target_schema(&config),
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            agents: Vec::new(),
            landmarks: Vec::new(),
            obstacles: Vec::new(),
            steps: 0,
            over: false,
        };
        env.reset();
        Ok(env)
    }

    pub fn config(&self) -> &TargetConfig {
        &self.config
    }

    fn random_point(&mut self) -> Point {
        let h = 0.9 * self.config.half_extent;
        Point::new(self.rng.gen_range(-h..=h), self.rng.gen_range(-h..=h))
    }

    pub fn distance_to_landmark(&self, i: usize) -> f64 {
        self.agents[i].pos.distance(self.landmarks[i])
    }

    /// Agents and obstacles overlapping agent `i`.
    pub fn contacts(&self, i: usize) -> usize {
        let (c, me) = (&self.config, self.agents[i].pos);
        let agents = (0..self.agents.len())
            .filter(|&j| j != i && me.distance(self.agents[j].pos) < 2.0 * c.agent_radius)
            .count();
        let obstacles = self
            .obstacles
            .iter()
            .filter(|o| me.distance(o.pos) < c.agent_radius + c.obstacle_radius)
            .count();
        agents + obstacles
    }

    fn blocks(&self) -> Vec<Vec<f64>> {
        let block = |b: &Body, t: usize| {
            let mut v = vec![b.pos.x, b.pos.y, b.vel.x, b.vel.y, 0.0, 0.0, 0.0, 0.0, 0.0];
            v[4 + t] = 1.0;
            v
        };
        let still = |p: &Point| Body {
            pos: *p,
            vel: Point::new(0.0, 0.0),
        };
        let mut out: Vec<Vec<f64>> = self.agents.iter().map(|b| block(b, 0)).collect();
        out.extend(self.landmarks.iter().map(|p| block(&still(p), 1)));
        out.extend(self.obstacles.iter().map(|b| block(b, 2)));
        out
    }
}

fn clamp_into(b: &mut Body, h: f64, bounce: bool) {
    for (p, v) in [(&mut b.pos.x, &mut b.vel.x), (&mut b.pos.y, &mut b.vel.y)] {
        if p.abs() > h {
            *p = p.clamp(-h, h);
            *v = if bounce { -*v } else { 0.0 };
        }
    }
}

impl Environment for Target {
    fn name(&self) -> &'static str {
        "target"
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
        let still = Point::new(0.0, 0.0);
        self.agents = (0..self.config.agents)
            .map(|_| Body {
                pos: self.random_point(),
                vel: still,
            })
            .collect();
        self.landmarks = (0..self.config.agents).map(|_| self.random_point()).collect();
        self.obstacles = (0..self.config.obstacles)
            .map(|_| {
                let pos = self.random_point();
                let angle = self.rng.gen_range(0.0..std::f64::consts::TAU);
                let s = self.config.obstacle_speed;
                Body {
                    pos,
                    vel: Point::new(s * angle.cos(), s * angle.sin()),
                }
            })
            .collect();
        self.steps = 0;
        self.over = false;
        self.observations()
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        if self.over {
            return Err(EnvError::EpisodeOver("target"));
        }
        check_actions("target", actions, self.agents.len(), ACTIONS.len())?;
        let c = self.config.clone();
        for (b, &a) in self.agents.iter_mut().zip(actions) {
            let (fx, fy) = FORCES[a];
            b.vel.x = b.vel.x * (1.0 - c.damping) + c.accel * fx * c.dt;
            b.vel.y = b.vel.y * (1.0 - c.damping) + c.accel * fy * c.dt;
            let speed = b.vel.x.hypot(b.vel.y);
            if speed > c.max_speed {
                b.vel.x *= c.max_speed / speed;
                b.vel.y *= c.max_speed / speed;
            }
            b.pos = b.pos.shifted(b.vel.x * c.dt, b.vel.y * c.dt);
            clamp_into(b, c.half_extent, false);
        }
        for o in &mut self.obstacles {
            o.pos = o.pos.shifted(o.vel.x * c.dt, o.vel.y * c.dt);
            clamp_into(o, c.half_extent, true);
        }
        let rewards = (0..self.agents.len())
            .map(|i| -c.distance_weight * self.distance_to_landmark(i) - c.collision_penalty * self.contacts(i) as f64)
            .collect();
        self.steps += 1;
        let truncated = self.steps >= c.step_limit;
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
        let n = self.agents.len();
        let w = blocks[0].len();
        (0..n)
            .map(|i| {
                let mut obs = egocentric(&blocks, n, i, SELF_FLAG);
                obs[(n + i) * w + ASSIGNED] = 1.0;
                obs
            })
            .collect()
    }

    fn entity_positions(&self) -> Vec<(f64, f64)> {
        self.blocks().iter().map(|b| (b[0], b[1])).collect()
    }

    fn success(&self) -> f64 {
        (0..self.agents.len()).map(|i| self.distance_to_landmark(i)).sum::<f64>() / self.agents.len() as f64
    }
}
