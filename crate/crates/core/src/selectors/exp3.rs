use rand_chacha::ChaCha8Rng;

use crate::agents::softmax_into;
use crate::mdp::sample_index;
use crate::seed;

use super::{AgentSnapshot, ArmStats, Selector, SelectorError, SelectorKind};

/// Exponential weights over importance-weighted reward estimates.
#[derive(Debug, Clone)]
pub struct Exp3 {
    eta: f64,
    scores: Vec<f64>,
    probs: Vec<f64>,
    stats: Vec<ArmStats>,
    rng: ChaCha8Rng,
}

impl Exp3 {
    /// `eta` defaults to `√(2 ln M / (T M))`.
    pub fn new(
        num_agents: usize,
        total_rounds: u64,
        eta: Option<f64>,
        seed: u64,
    ) -> Result<Self, SelectorError> {
        if num_agents == 0 {
            return Err(SelectorError::Config("need at least one agent".into()));
        }
        let m = num_agents as f64;
        let eta = eta.unwrap_or_else(|| (2.0 * m.ln() / (total_rounds.max(1) as f64 * m)).sqrt());
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(SelectorError::Config(format!(
                "eta must be non-negative, got {eta}"
            )));
        }
        Ok(Self {
            eta,
            scores: vec![0.0; num_agents],
            probs: vec![1.0 / m; num_agents],
            stats: vec![ArmStats::new(0.0); num_agents],
            rng: seed::rng_for(seed, seed::SELECTOR_STREAM, 0),
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `S^j += 1 − 1{j=i}(1 − r)/Ψ^i` followed by `Ψ = softmax(η S)`.
    pub fn apply(&mut self, agent: usize, reward: f64) {
        let p = self.probs[agent];
        for (j, s) in self.scores.iter_mut().enumerate() {
            *s += 1.0;
            if j == agent {
                *s -= (1.0 - reward) / p;
            }
        }
        let scaled: Vec<f64> = self.scores.iter().map(|s| self.eta * s).collect();
        softmax_into(&scaled, &mut self.probs);
    }
}

impl Selector for Exp3 {
    fn kind(&self) -> SelectorKind {
        SelectorKind::Exp3
    }

    fn num_agents(&self) -> usize {
        self.probs.len()
    }

    fn sample(&mut self) -> usize {
        sample_index(&self.probs, &mut self.rng)
    }

    fn update(&mut self, agent: usize, reward: f64, _round: u64) -> Result<(), SelectorError> {
        self.stats[agent].record(reward);
        self.apply(agent, reward);
        Ok(())
    }

    fn stats(&self) -> Vec<ArmStats> {
        self.stats.clone()
    }

    fn snapshot(&self) -> Vec<AgentSnapshot> {
        self.stats
            .iter()
            .zip(&self.probs)
            .map(|(s, p)| AgentSnapshot {
                n: s.n,
                u: s.u,
                d_hat: None,
                potential: Some(*p),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starts_uniform() {
        let s = Exp3::new(4, 100, None, 0).unwrap();
        assert_eq!(s.probs(), &[0.25; 4]);
        assert!((s.eta() - (2.0 * 4f64.ln() / 400.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn full_reward_shifts_all_scores() {
        let mut s = Exp3::new(3, 100, Some(0.5), 0).unwrap();
        s.apply(1, 0.0);
        let before = s.probs().to_vec();
        let scores = s.scores().to_vec();
        s.apply(2, 1.0);
        for (a, b) in s.scores().iter().zip(&scores) {
            assert_eq!(*a, b + 1.0);
        }
        for (a, b) in s.probs().iter().zip(&before) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_evaluated_update() {
        let mut s = Exp3::new(2, 100, Some(0.3), 0).unwrap();
        s.apply(0, 0.0);
        assert_eq!(s.scores(), &[-1.0, 1.0]);
        let z = (-0.3f64).exp() + 0.3f64.exp();
        assert!((s.probs()[0] - (-0.3f64).exp() / z).abs() < 1e-15);
        assert!((s.probs()[1] - 0.3f64.exp() / z).abs() < 1e-15);
    }
}
