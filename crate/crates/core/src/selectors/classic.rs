use super::balancing::misspec_test_with_bound;
use super::{argmin, AgentSnapshot, ArmStats, BonusParams, Selector, SelectorError, SelectorKind};

/// Regret balancing against user-supplied putative bounds `R^k(n) = d_k·√n`,
/// eliminating agents whose bound is contradicted by the data.
#[derive(Debug, Clone)]
pub struct ClassicBalancing {
    params: BonusParams,
    coefficients: Vec<f64>,
    stats: Vec<ArmStats>,
    active: Vec<bool>,
}

impl ClassicBalancing {
    pub fn new(coefficients: Vec<f64>, params: BonusParams) -> Result<Self, SelectorError> {
        params.validate()?;
        if coefficients.len() != params.num_agents {
            return Err(SelectorError::Config(format!(
                "{} putative coefficients for {} agents",
                coefficients.len(),
                params.num_agents
            )));
        }
        if let Some(d) = coefficients.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(SelectorError::Config(format!(
                "putative coefficients must be positive, got {d}"
            )));
        }
        let m = coefficients.len();
        Ok(Self {
            params,
            stats: coefficients.iter().map(|d| ArmStats::new(*d)).collect(),
            coefficients,
            active: vec![true; m],
        })
    }

    pub fn putative_bound(&self, k: usize) -> f64 {
        self.coefficients[k] * (self.stats[k].n as f64).sqrt()
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn num_active(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }
}

impl Selector for ClassicBalancing {
    fn kind(&self) -> SelectorKind {
        SelectorKind::Classic
    }

    fn num_agents(&self) -> usize {
        self.stats.len()
    }

    fn sample(&mut self) -> usize {
        argmin((0..self.stats.len()).map(|k| {
            if self.active[k] {
                self.putative_bound(k)
            } else {
                f64::INFINITY
            }
        }))
    }

    fn update(&mut self, agent: usize, reward: f64, _round: u64) -> Result<(), SelectorError> {
        self.stats[agent].record(reward);
        let s = &mut self.stats[agent];
        s.phi = self.coefficients[agent] * (s.n as f64).sqrt();

        // the test compares against active agents only
        let active_stats: Vec<ArmStats> = self
            .stats
            .iter()
            .zip(&self.active)
            .map(|(s, a)| if *a { *s } else { ArmStats::new(s.d_hat) })
            .collect();
        let triggered: Vec<usize> = (0..self.stats.len())
            .filter(|&k| {
                self.active[k]
                    && misspec_test_with_bound(
                        &active_stats,
                        k,
                        self.putative_bound(k),
                        &self.params,
                    )
            })
            .collect();
        for k in triggered {
            if self.num_active() == 1 {
                break;
            }
            self.active[k] = false;
            log::debug!("classic balancing eliminated agent {k}");
        }
        Ok(())
    }

    fn stats(&self) -> Vec<ArmStats> {
        self.stats.clone()
    }

    fn snapshot(&self) -> Vec<AgentSnapshot> {
        self.stats
            .iter()
            .enumerate()
            .map(|(k, s)| AgentSnapshot {
                n: s.n,
                u: s.u,
                d_hat: Some(self.coefficients[k]),
                potential: Some(if self.active[k] {
                    self.putative_bound(k)
                } else {
                    f64::INFINITY
                }),
            })
            .collect()
    }
}
