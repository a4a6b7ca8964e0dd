use serde::{Deserialize, Serialize};

pub const STD_FLOOR: f64 = 1e-8;

/// Per-agent running standard deviation of discounted returns. Rewards are
/// divided by it when a batch is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardScaler {
    gamma: f64,
    returns: Vec<f64>,
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RewardScaler {
    pub fn new(agents: usize, gamma: f64) -> Self {
        Self {
            gamma,
            returns: vec![0.0; agents],
            count: 0,
            mean: vec![0.0; agents],
            m2: vec![0.0; agents],
        }
    }

    /// Folds one step of rewards into the running returns and their
    /// statistics (Welford).
    pub fn observe(&mut self, rewards: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for (i, &r) in rewards.iter().enumerate() {
            self.returns[i] = self.gamma * self.returns[i] + r;
            let g = self.returns[i];
            let delta = g - self.mean[i];
            self.mean[i] += delta / n;
            self.m2[i] += delta * (g - self.mean[i]);
        }
    }

    /// Starts new running returns at an episode boundary.
    pub fn end_episode(&mut self) {
        self.returns.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Standard deviation for agent `i`; 1 until two returns were seen.
    pub fn std(&self, i: usize) -> f64 {
        if self.count < 2 {
            return 1.0;
        }
        (self.m2[i] / (self.count - 1) as f64).sqrt().max(STD_FLOOR)
    }

    pub fn scale(&self, i: usize, reward: f64) -> f64 {
        reward / self.std(i)
    }
}
