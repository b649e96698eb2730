use serde::{Deserialize, Serialize};

use super::AgentError;

/// Agent whose cumulative pseudo-regret after `n` pulls is exactly `d·√n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticAgentConfig {
    pub target_coefficient: f64,
    pub optimal_value_ref: f64,
}

/// Per-episode reward on the `n`-th pull: `v* − d·(√n − √(n−1))`.
pub fn synthetic_reward(config: &SyntheticAgentConfig, n: u64) -> f64 {
    assert!(n >= 1, "pull counts start at 1");
    let n = n as f64;
    config.optimal_value_ref - config.target_coefficient * (n.sqrt() - (n - 1.0).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticAgent {
    config: SyntheticAgentConfig,
    pulls: u64,
}

impl SyntheticAgent {
    /// `return_bounds` are the episodic bounds `[H·r_lo, H·r_hi]` of the
    /// environment the agent reports into; every emitted reward must fit.
    pub fn new(
        config: SyntheticAgentConfig,
        return_bounds: (f64, f64),
        d_min: f64,
    ) -> Result<Self, AgentError> {
        let d = config.target_coefficient;
        if !(d.is_finite() && d > 0.0) {
            return Err(AgentError::Config(format!(
                "target_coefficient must be positive, got {d}"
            )));
        }
        if d < d_min {
            return Err(AgentError::Config(format!(
                "target_coefficient {d} is below d_min {d_min}"
            )));
        }
        let (lo, hi) = return_bounds;
        let first = config.optimal_value_ref - d;
        if config.optimal_value_ref > hi || first < lo {
            return Err(AgentError::Config(format!(
                "synthetic rewards span [{first}, {}] which leaves the return bounds [{lo}, {hi}]",
                config.optimal_value_ref
            )));
        }
        Ok(Self { config, pulls: 0 })
    }

    pub fn config(&self) -> &SyntheticAgentConfig {
        &self.config
    }

    pub fn pulls(&self) -> u64 {
        self.pulls
    }

    /// Reward the next pull will emit.
    pub fn next_reward(&self) -> f64 {
        synthetic_reward(&self.config, self.pulls + 1)
    }

    pub fn record_pull(&mut self) {
        self.pulls += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(d: f64, v: f64) -> SyntheticAgentConfig {
        SyntheticAgentConfig {
            target_coefficient: d,
            optimal_value_ref: v,
        }
    }

    #[test]
    fn closed_form_rewards() {
        assert_eq!(synthetic_reward(&cfg(1.0, 1.0), 1), 0.0);
        let r4 = synthetic_reward(&cfg(1.0, 1.0), 4);
        assert!((r4 - (1.0 - (2.0 - 3f64.sqrt()))).abs() < 1e-15);
        assert!((r4 - 0.732).abs() < 1e-3);
    }

    #[test]
    fn regret_telescopes() {
        let c = cfg(2.0, 1.0);
        let regret: f64 = (1..=100).map(|n| 1.0 - synthetic_reward(&c, n)).sum();
        assert!((regret - 20.0).abs() < 1e-9);
    }

    #[test]
    fn exact_bookkeeping_to_1e5() {
        let c = cfg(1.5, 0.5);
        let mut regret = 0.0;
        for n in 1..=100_000u64 {
            regret += c.optimal_value_ref - synthetic_reward(&c, n);
            if n % 997 == 0 || n == 100_000 {
                assert!((regret - 1.5 * (n as f64).sqrt()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn out_of_bounds_config_is_rejected() {
        assert!(SyntheticAgent::new(cfg(2.0, 1.0), (0.0, 1.0), 0.01).is_err());
        assert!(SyntheticAgent::new(cfg(1.0, 1.0), (0.0, 1.0), 0.01).is_ok());
        assert!(SyntheticAgent::new(cfg(0.001, 1.0), (0.0, 1.0), 0.01).is_err());
    }
}
