use super::{argmax, AgentSnapshot, ArmStats, Selector, SelectorError, SelectorKind};

/// Optimism over agents' empirical mean normalized returns.
#[derive(Debug, Clone)]
pub struct Ucb {
    delta: f64,
    stats: Vec<ArmStats>,
}

impl Ucb {
    pub fn new(num_agents: usize, delta: f64) -> Result<Self, SelectorError> {
        if num_agents == 0 {
            return Err(SelectorError::Config("need at least one agent".into()));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(SelectorError::Config(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        Ok(Self {
            delta,
            stats: vec![ArmStats::new(0.0); num_agents],
        })
    }

    /// `μ + √(2 ln(1/δ)/n)`, infinite for unpulled agents.
    pub fn index(&self, i: usize) -> f64 {
        let s = &self.stats[i];
        if s.n == 0 {
            return f64::INFINITY;
        }
        s.mean() + (2.0 * (1.0 / self.delta).ln() / s.n as f64).sqrt()
    }
}

impl Selector for Ucb {
    fn kind(&self) -> SelectorKind {
        SelectorKind::Ucb
    }

    fn num_agents(&self) -> usize {
        self.stats.len()
    }

    fn sample(&mut self) -> usize {
        if let Some(i) = self.stats.iter().position(|s| s.n == 0) {
            return i;
        }
        argmax((0..self.stats.len()).map(|i| self.index(i)))
    }

    fn update(&mut self, agent: usize, reward: f64, _round: u64) -> Result<(), SelectorError> {
        self.stats[agent].record(reward);
        let index = self.index(agent);
        self.stats[agent].phi = index;
        Ok(())
    }

    fn stats(&self) -> Vec<ArmStats> {
        self.stats.clone()
    }

    fn snapshot(&self) -> Vec<AgentSnapshot> {
        self.stats
            .iter()
            .enumerate()
            .map(|(i, s)| AgentSnapshot {
                n: s.n,
                u: s.u,
                d_hat: None,
                potential: (s.n > 0).then(|| self.index(i)),
            })
            .collect()
    }
}
