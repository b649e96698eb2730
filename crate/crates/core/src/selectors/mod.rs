//! Online model-selection strategies.
//!
//! Every selector follows the same two-call protocol per round: `sample()`
//! returns the index of the agent to deploy, and `update(i, r, t)` reports
//! that agent's normalized episodic return `r ∈ [0, 1]` for round `t`.
//! [`GuardedSelector`] enforces the strict alternation.

mod balancing;
mod classic;
mod corral;
mod exp3;
mod ucb;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use balancing::{confidence_bonus, misspec_test, misspec_test_with_bound, D3rb, Ed2rb};
pub use classic::ClassicBalancing;
pub use corral::Corral;
pub use exp3::Exp3;
pub use ucb::Ucb;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectorError {
    #[error("degenerate environment: reward bounds collapse to a point")]
    DegenerateEnvironment,
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("invalid selector parameter: {0}")]
    Config(String),
    #[error("log-barrier mirror descent did not converge: {0}")]
    NumericalFailure(String),
}

/// Map an episodic return onto `[0, 1]` using the environment's return bounds.
pub fn normalize_return(
    episodic_return: f64,
    horizon: usize,
    reward_bounds: (f64, f64),
) -> Result<f64, SelectorError> {
    let (lo, hi) = reward_bounds;
    if hi <= lo {
        return Err(SelectorError::DegenerateEnvironment);
    }
    let h = horizon as f64;
    Ok(((episodic_return - h * lo) / (h * (hi - lo))).clamp(0.0, 1.0))
}

/// Per-agent running statistics shared by all selectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    /// Number of rounds the agent was selected.
    pub n: u64,
    /// Sum of its normalized returns.
    pub u: f64,
    /// Estimated regret coefficient (balancing selectors).
    pub d_hat: f64,
    /// Balancing potential, or the selector's per-agent score.
    pub phi: f64,
}

impl ArmStats {
    pub fn new(d_hat: f64) -> Self {
        Self {
            n: 0,
            u: 0.0,
            d_hat,
            phi: 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        self.u / self.n as f64
    }

    pub(crate) fn record(&mut self, reward: f64) {
        self.n += 1;
        self.u += reward;
    }
}

/// Constants of the concentration event behind the misspecification test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BonusParams {
    pub c: f64,
    pub delta: f64,
    pub num_agents: usize,
    pub d_min: f64,
}

impl BonusParams {
    pub fn validate(&self) -> Result<(), SelectorError> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(SelectorError::Config(format!(
                "c must be positive, got {}",
                self.c
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(SelectorError::Config(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.d_min.is_finite() && self.d_min > 0.0) {
            return Err(SelectorError::Config(format!(
                "d_min must be positive, got {}",
                self.d_min
            )));
        }
        if self.num_agents == 0 {
            return Err(SelectorError::Config("need at least one agent".into()));
        }
        Ok(())
    }
}

/// What a selector reports about one agent for logging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub n: u64,
    pub u: f64,
    pub d_hat: Option<f64>,
    /// Balancing potential, selection probability, or confidence index.
    pub potential: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    D3rb,
    Ed2rb,
    Classic,
    Exp3,
    Corral,
    Ucb,
}

impl SelectorKind {
    pub const ALL: [SelectorKind; 6] = [
        SelectorKind::D3rb,
        SelectorKind::Ed2rb,
        SelectorKind::Classic,
        SelectorKind::Exp3,
        SelectorKind::Corral,
        SelectorKind::Ucb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SelectorKind::D3rb => "d3rb",
            SelectorKind::Ed2rb => "ed2rb",
            SelectorKind::Classic => "classic",
            SelectorKind::Exp3 => "exp3",
            SelectorKind::Corral => "corral",
            SelectorKind::Ucb => "ucb",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl std::fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_c() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    0.05
}
fn default_d_min() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalancingParams {
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_d_min")]
    pub d_min: f64,
}

impl Default for BalancingParams {
    fn default() -> Self {
        Self {
            c: default_c(),
            delta: default_delta(),
            d_min: default_d_min(),
        }
    }
}

impl BalancingParams {
    pub fn bonus_params(&self, num_agents: usize) -> BonusParams {
        BonusParams {
            c: self.c,
            delta: self.delta,
            num_agents,
            d_min: self.d_min,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicParams {
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Putative regret bounds `R^k(n) = d_k·√n`, one coefficient per agent.
    /// Empty means 1.0 for every agent.
    #[serde(default)]
    pub putative_coefficients: Vec<f64>,
}

impl Default for ClassicParams {
    fn default() -> Self {
        Self {
            c: default_c(),
            delta: default_delta(),
            putative_coefficients: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exp3Params {
    /// Softmax temperature; defaults to `√(2 ln M / (T M))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorralParams {
    /// Initial log-barrier learning rate; defaults to `√(M / T)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Learning-rate growth factor; defaults to `e^(1 / ln T)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Minimum sampling probability; defaults to `1 / (2 T M)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UcbParams {
    #[serde(default = "default_delta")]
    pub delta: f64,
}

impl Default for UcbParams {
    fn default() -> Self {
        Self {
            delta: default_delta(),
        }
    }
}

/// A selector with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectorConfig {
    D3rb(BalancingParams),
    Ed2rb(BalancingParams),
    Classic(ClassicParams),
    Exp3(Exp3Params),
    Corral(CorralParams),
    Ucb(UcbParams),
}

impl SelectorConfig {
    pub fn default_for(kind: SelectorKind) -> Self {
        match kind {
            SelectorKind::D3rb => SelectorConfig::D3rb(BalancingParams::default()),
            SelectorKind::Ed2rb => SelectorConfig::Ed2rb(BalancingParams::default()),
            SelectorKind::Classic => SelectorConfig::Classic(ClassicParams::default()),
            SelectorKind::Exp3 => SelectorConfig::Exp3(Exp3Params::default()),
            SelectorKind::Corral => SelectorConfig::Corral(CorralParams::default()),
            SelectorKind::Ucb => SelectorConfig::Ucb(UcbParams::default()),
        }
    }

    pub fn kind(&self) -> SelectorKind {
        match self {
            SelectorConfig::D3rb(_) => SelectorKind::D3rb,
            SelectorConfig::Ed2rb(_) => SelectorKind::Ed2rb,
            SelectorConfig::Classic(_) => SelectorKind::Classic,
            SelectorConfig::Exp3(_) => SelectorKind::Exp3,
            SelectorConfig::Corral(_) => SelectorKind::Corral,
            SelectorConfig::Ucb(_) => SelectorKind::Ucb,
        }
    }

    /// Minimum regret coefficient used for ledger bookkeeping.
    pub fn d_min(&self) -> f64 {
        match self {
            SelectorConfig::D3rb(p) | SelectorConfig::Ed2rb(p) => p.d_min,
            _ => default_d_min(),
        }
    }

    pub fn build(
        &self,
        num_agents: usize,
        total_rounds: u64,
        seed: u64,
    ) -> Result<Box<dyn Selector>, SelectorError> {
        Ok(match self {
            SelectorConfig::D3rb(p) => Box::new(D3rb::new(p.bonus_params(num_agents))?),
            SelectorConfig::Ed2rb(p) => Box::new(Ed2rb::new(p.bonus_params(num_agents))?),
            SelectorConfig::Classic(p) => {
                let coefficients = if p.putative_coefficients.is_empty() {
                    vec![1.0; num_agents]
                } else {
                    p.putative_coefficients.clone()
                };
                Box::new(ClassicBalancing::new(
                    coefficients,
                    BonusParams {
                        c: p.c,
                        delta: p.delta,
                        num_agents,
                        d_min: default_d_min(),
                    },
                )?)
            }
            SelectorConfig::Exp3(p) => Box::new(Exp3::new(num_agents, total_rounds, p.eta, seed)?),
            SelectorConfig::Corral(p) => Box::new(Corral::new(
                num_agents,
                total_rounds,
                p.eta,
                p.beta,
                p.floor,
                seed,
            )?),
            SelectorConfig::Ucb(p) => Box::new(Ucb::new(num_agents, p.delta)?),
        })
    }
}

pub trait Selector: Send {
    fn kind(&self) -> SelectorKind;

    fn num_agents(&self) -> usize;

    /// Index of the agent to deploy this round.
    fn sample(&mut self) -> usize;

    /// Report the normalized return of the agent sampled for `round`.
    fn update(&mut self, agent: usize, reward: f64, round: u64) -> Result<(), SelectorError>;

    /// Pull counts and reward sums.
    fn stats(&self) -> Vec<ArmStats>;

    fn snapshot(&self) -> Vec<AgentSnapshot>;
}

/// Lowest index among the minimisers.
pub(crate) fn argmin(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v < best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Lowest index among the maximisers.
pub(crate) fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Enforces `sample`/`update` alternation and range checks around any selector.
pub struct GuardedSelector {
    inner: Box<dyn Selector>,
    pending: Option<usize>,
    updates: u64,
}

impl GuardedSelector {
    pub fn new(inner: Box<dyn Selector>) -> Self {
        Self {
            inner,
            pending: None,
            updates: 0,
        }
    }

    pub fn inner(&self) -> &dyn Selector {
        self.inner.as_ref()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn sample(&mut self) -> Result<usize, SelectorError> {
        if let Some(i) = self.pending {
            return Err(SelectorError::Protocol(format!(
                "sample called twice; agent {i} is still awaiting its update"
            )));
        }
        let i = self.inner.sample();
        if i >= self.inner.num_agents() {
            return Err(SelectorError::Protocol(format!(
                "selector returned agent {i} but the pool has {}",
                self.inner.num_agents()
            )));
        }
        self.pending = Some(i);
        Ok(i)
    }

    pub fn update(&mut self, agent: usize, reward: f64, round: u64) -> Result<(), SelectorError> {
        match self.pending.take() {
            Some(i) if i == agent => {}
            Some(i) => {
                self.pending = Some(i);
                return Err(SelectorError::Protocol(format!(
                    "update for agent {agent} but agent {i} was sampled"
                )));
            }
            None => {
                return Err(SelectorError::Protocol(format!(
                    "update for agent {agent} without a preceding sample"
                )))
            }
        }
        if !(0.0..=1.0).contains(&reward) {
            return Err(SelectorError::Protocol(format!(
                "reward {reward} is not normalized"
            )));
        }
        self.inner.update(agent, reward, round)?;
        self.updates += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_bounds() {
        assert_eq!(normalize_return(0.0, 3, (0.0, 1.0)).unwrap(), 0.0);
        assert_eq!(normalize_return(3.0, 3, (0.0, 1.0)).unwrap(), 1.0);
        assert_eq!(normalize_return(1.5, 3, (0.0, 1.0)).unwrap(), 0.5);
        assert_eq!(normalize_return(-2.0, 2, (-1.0, 1.0)).unwrap(), 0.0);
        assert_eq!(normalize_return(3.0 + 1e-12, 3, (0.0, 1.0)).unwrap(), 1.0);
        assert_eq!(
            normalize_return(1.0, 1, (0.5, 0.5)),
            Err(SelectorError::DegenerateEnvironment)
        );
    }

    #[test]
    fn guard_rejects_protocol_violations() {
        let mut g = GuardedSelector::new(
            SelectorConfig::default_for(SelectorKind::D3rb)
                .build(2, 10, 0)
                .unwrap(),
        );
        assert!(matches!(
            g.update(0, 0.5, 1),
            Err(SelectorError::Protocol(_))
        ));
        let i = g.sample().unwrap();
        assert!(g.sample().is_err());
        assert!(g.update(1 - i, 0.5, 1).is_err());
        g.update(i, 0.5, 1).unwrap();
        assert!(g.update(i, 0.5, 1).is_err());
        assert_eq!(g.updates(), 1);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in SelectorKind::ALL {
            assert_eq!(SelectorKind::from_name(k.name()), Some(k));
        }
        assert_eq!(SelectorKind::from_name("thompson"), None);
    }

    #[test]
    fn config_serde_uses_kind_tag() {
        let cfg: SelectorConfig = serde_json::from_str(r#"{"kind":"d3rb","c":0.5}"#).unwrap();
        assert_eq!(
            cfg,
            SelectorConfig::D3rb(BalancingParams {
                c: 0.5,
                ..BalancingParams::default()
            })
        );
        assert!(serde_json::from_str::<SelectorConfig>(r#"{"kind":"d3rb","cc":0.5}"#).is_err());
    }
}
