use super::{argmin, AgentSnapshot, ArmStats, BonusParams, Selector, SelectorError, SelectorKind};

/// `c·√(ln(M·ln̄(n)/δ)/n)` with `ln̄(n) = ln(max(n, 2))`.
///
/// The outer logarithm is floored at 0, which only matters for `M = 1` with
/// `δ > ln 2`.
pub fn confidence_bonus(n: u64, params: &BonusParams) -> f64 {
    debug_assert!(n >= 1);
    let n = n as f64;
    let lnbar = n.max(2.0).ln();
    let inner = (params.num_agents as f64 * lnbar / params.delta)
        .ln()
        .max(0.0);
    params.c * (inner / n).sqrt()
}

/// Best lower confidence bound `max_j (u_j/n_j − bonus(n_j))` over pulled agents.
fn best_lower_bound(stats: &[ArmStats], params: &BonusParams) -> Option<f64> {
    stats
        .iter()
        .filter(|s| s.n >= 1)
        .map(|s| s.mean() - confidence_bonus(s.n, params))
        .reduce(f64::max)
}

/// The misspecification test for agent `i` with an explicit regret bound
/// `bound` standing in for `d̂_i·√n_i`.
pub fn misspec_test_with_bound(
    stats: &[ArmStats],
    i: usize,
    bound: f64,
    params: &BonusParams,
) -> bool {
    let s = &stats[i];
    if s.n == 0 {
        return false;
    }
    let Some(rhs) = best_lower_bound(stats, params) else {
        return false;
    };
    let lhs = s.mean() + confidence_bonus(s.n, params) + bound / s.n as f64;
    lhs <= rhs
}

/// True iff `u_i/n_i + bonus(n_i) + d̂_i√n_i/n_i ≤ max_j (u_j/n_j − bonus(n_j))`.
pub fn misspec_test(stats: &[ArmStats], i: usize, params: &BonusParams) -> bool {
    let s = &stats[i];
    misspec_test_with_bound(stats, i, s.d_hat * (s.n as f64).sqrt(), params)
}

/// Balancing with doubling estimates of each agent's regret coefficient.
#[derive(Debug, Clone)]
pub struct D3rb {
    params: BonusParams,
    stats: Vec<ArmStats>,
}

impl D3rb {
    pub fn new(params: BonusParams) -> Result<Self, SelectorError> {
        params.validate()?;
        Ok(Self {
            stats: vec![ArmStats::new(params.d_min); params.num_agents],
            params,
        })
    }

    pub fn params(&self) -> &BonusParams {
        &self.params
    }

    pub fn arms(&self) -> &[ArmStats] {
        &self.stats
    }

    /// Largest ratio `φ_i / φ_j` among pulled agents.
    pub fn balance_ratio(&self) -> f64 {
        let pulled = self.stats.iter().filter(|s| s.n >= 1).map(|s| s.phi);
        let (lo, hi) = pulled.fold((f64::INFINITY, 0.0f64), |(lo, hi), p| {
            (lo.min(p), hi.max(p))
        });
        if hi == 0.0 {
            1.0
        } else {
            hi / lo
        }
    }
}

impl Selector for D3rb {
    fn kind(&self) -> SelectorKind {
        SelectorKind::D3rb
    }

    fn num_agents(&self) -> usize {
        self.stats.len()
    }

    fn sample(&mut self) -> usize {
        argmin(self.stats.iter().map(|s| s.phi))
    }

    fn update(&mut self, agent: usize, reward: f64, _round: u64) -> Result<(), SelectorError> {
        self.stats[agent].record(reward);
        if misspec_test(&self.stats, agent, &self.params) {
            self.stats[agent].d_hat *= 2.0;
        }
        let s = &mut self.stats[agent];
        s.phi = s.d_hat * (s.n as f64).sqrt();
        debug_assert!(
            self.balance_ratio() <= 3.0 + 1e-9,
            "potentials out of balance: ratio {}",
            self.balance_ratio()
        );
        Ok(())
    }

    fn stats(&self) -> Vec<ArmStats> {
        self.stats.clone()
    }

    fn snapshot(&self) -> Vec<AgentSnapshot> {
        self.stats
            .iter()
            .map(|s| AgentSnapshot {
                n: s.n,
                u: s.u,
                d_hat: Some(s.d_hat),
                potential: Some(s.phi),
            })
            .collect()
    }
}

/// Balancing with a direct per-round estimate of each agent's regret
/// coefficient and a potential clipped to at most double per update.
#[derive(Debug, Clone)]
pub struct Ed2rb {
    params: BonusParams,
    stats: Vec<ArmStats>,
}

impl Ed2rb {
    pub fn new(params: BonusParams) -> Result<Self, SelectorError> {
        params.validate()?;
        Ok(Self {
            stats: vec![ArmStats::new(params.d_min); params.num_agents],
            params,
        })
    }

    pub fn arms(&self) -> &[ArmStats] {
        &self.stats
    }

    /// `max(d_min, √n_i·(max_j(u_j/n_j − b_j) − b_i − u_i/n_i))`.
    pub fn estimate_coefficient(stats: &[ArmStats], i: usize, params: &BonusParams) -> f64 {
        let s = &stats[i];
        let best = best_lower_bound(stats, params).unwrap_or(f64::NEG_INFINITY);
        let deficit = best - confidence_bonus(s.n, params) - s.mean();
        (deficit * (s.n as f64).sqrt()).max(params.d_min)
    }
}

impl Selector for Ed2rb {
    fn kind(&self) -> SelectorKind {
        SelectorKind::Ed2rb
    }

    fn num_agents(&self) -> usize {
        self.stats.len()
    }

    fn sample(&mut self) -> usize {
        argmin(self.stats.iter().map(|s| s.phi))
    }

    fn update(&mut self, agent: usize, reward: f64, _round: u64) -> Result<(), SelectorError> {
        self.stats[agent].record(reward);
        let d = Self::estimate_coefficient(&self.stats, agent, &self.params);
        let s = &mut self.stats[agent];
        s.d_hat = d;
        let candidate = d * (s.n as f64).sqrt();
        // φ starts at 0, where the clip interval is degenerate
        s.phi = if s.phi == 0.0 {
            candidate
        } else {
            candidate.clamp(s.phi, 2.0 * s.phi)
        };
        Ok(())
    }

    fn stats(&self) -> Vec<ArmStats> {
        self.stats.clone()
    }

    fn snapshot(&self) -> Vec<AgentSnapshot> {
        self.stats
            .iter()
            .map(|s| AgentSnapshot {
                n: s.n,
                u: s.u,
                d_hat: Some(s.d_hat),
                potential: Some(s.phi),
            })
            .collect()
    }
}
