//! Exact pseudo-regret bookkeeping and the quantities derived from it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("agent {agent} has never been selected; its regret coefficient is undefined")]
    UndefinedCoefficient { agent: usize },
    #[error("ledger has no exact expected returns")]
    Inexact,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Per-agent pseudo-regret against the exact optimal value of whichever
/// environment phase each round was played in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretLedger {
    d_min: f64,
    /// `H·(r_hi − r_lo)`: converts raw returns into normalized units.
    scale: f64,
    exact: bool,
    n: Vec<u64>,
    ubar: Vec<f64>,
    regret: Vec<f64>,
    max_coefficient: Vec<f64>,
}

impl RegretLedger {
    pub fn new(num_agents: usize, d_min: f64, scale: f64) -> Self {
        Self {
            d_min,
            scale,
            exact: true,
            n: vec![0; num_agents],
            ubar: vec![0.0; num_agents],
            regret: vec![0.0; num_agents],
            max_coefficient: vec![d_min; num_agents],
        }
    }

    pub fn num_agents(&self) -> usize {
        self.n.len()
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Record one deployment of `agent` whose policy has exact expected
    /// return `expected` in a phase with optimal value `v_star`.
    pub fn record(&mut self, agent: usize, v_star: f64, expected: f64) {
        self.n[agent] += 1;
        self.ubar[agent] += expected;
        self.regret[agent] += v_star - expected;
        if self.exact {
            let d = self.normalized_coefficient(agent).unwrap_or(self.d_min);
            self.max_coefficient[agent] = self.max_coefficient[agent].max(d);
        }
    }

    /// Record a deployment whose expected return is not computed. The ledger
    /// keeps counting pulls but stops reporting regret.
    pub fn record_inexact(&mut self, agent: usize) {
        self.n[agent] += 1;
        self.exact = false;
    }

    pub fn pulls(&self, agent: usize) -> u64 {
        self.n[agent]
    }

    pub fn total_pulls(&self) -> u64 {
        self.n.iter().sum()
    }

    /// Cumulative exact expected return `ū` of the policies `agent` deployed.
    pub fn ubar(&self, agent: usize) -> Result<f64, MetricsError> {
        self.exact
            .then(|| self.ubar[agent])
            .ok_or(MetricsError::Inexact)
    }

    /// `Regret_t^i = Σ over its rounds of (v*_phase − E[r | π])`.
    pub fn regret(&self, agent: usize) -> Result<f64, MetricsError> {
        self.exact
            .then(|| self.regret[agent])
            .ok_or(MetricsError::Inexact)
    }

    pub fn normalized_regret(&self, agent: usize) -> Result<f64, MetricsError> {
        Ok(self.regret(agent)? / self.scale)
    }

    fn coefficient_of(&self, agent: usize, regret: f64) -> Result<f64, MetricsError> {
        let n = self.n[agent];
        if n == 0 {
            return Err(MetricsError::UndefinedCoefficient { agent });
        }
        Ok((regret / (n as f64).sqrt()).max(self.d_min))
    }

    /// `d_t^i = max(Regret_t^i / √n_t^i, d_min)` in raw return units.
    pub fn regret_coefficient(&self, agent: usize) -> Result<f64, MetricsError> {
        self.coefficient_of(agent, self.regret(agent)?)
    }

    /// Regret coefficient in normalized units, comparable with a selector's `d̂`.
    pub fn normalized_coefficient(&self, agent: usize) -> Result<f64, MetricsError> {
        self.coefficient_of(agent, self.normalized_regret(agent)?)
    }

    /// `Σ_i Regret_t^i` in raw units.
    pub fn total_regret(&self) -> Result<f64, MetricsError> {
        if !self.exact {
            return Err(MetricsError::Inexact);
        }
        Ok(self.regret.iter().sum())
    }

    pub fn total_normalized_regret(&self) -> Result<f64, MetricsError> {
        Ok(self.total_regret()? / self.scale)
    }

    /// `min_i max_t d_t^i` (normalized units).
    pub fn d_star(&self) -> Result<f64, MetricsError> {
        if !self.exact {
            return Err(MetricsError::Inexact);
        }
        Ok(self
            .max_coefficient
            .iter()
            .zip(&self.n)
            .filter(|(_, n)| **n > 0)
            .map(|(d, _)| *d)
            .fold(f64::INFINITY, f64::min))
    }
}

/// Realized against predicted compute shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationReport {
    pub t: u64,
    pub realized: Vec<f64>,
    pub predicted: Vec<f64>,
    pub coefficients: Vec<f64>,
    /// `realized / predicted` per agent.
    pub ratio: Vec<f64>,
}

/// `(1/d_i)² / Σ_j (1/d_j)²`.
pub fn predicted_allocation(coefficients: &[f64]) -> Vec<f64> {
    let inv: Vec<f64> = coefficients.iter().map(|d| d.powi(-2)).collect();
    let total: f64 = inv.iter().sum();
    inv.into_iter().map(|x| x / total).collect()
}

pub fn allocation_report(ledger: &RegretLedger) -> Result<AllocationReport, MetricsError> {
    let t = ledger.total_pulls();
    let coefficients = (0..ledger.num_agents())
        .map(|i| ledger.normalized_coefficient(i))
        .collect::<Result<Vec<_>, _>>()?;
    let realized: Vec<f64> = (0..ledger.num_agents())
        .map(|i| ledger.pulls(i) as f64 / t as f64)
        .collect();
    let predicted = predicted_allocation(&coefficients);
    let ratio = realized
        .iter()
        .zip(&predicted)
        .map(|(r, p)| r / p)
        .collect();
    Ok(AllocationReport {
        t,
        realized,
        predicted,
        coefficients,
        ratio,
    })
}

/// Number of independent copies so that all of them fail with probability at
/// most `delta` when each fails with probability `gamma`: `⌈ln δ / ln γ⌉`.
pub fn self_selection_size(gamma: f64, delta: f64) -> Result<usize, MetricsError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(MetricsError::InvalidParameter(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(MetricsError::InvalidParameter(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    let ratio = delta.ln() / gamma.ln();
    // ratios within rounding of an integer are that integer
    let nearest = ratio.round();
    let m = if (ratio - nearest).abs() < 1e-12 {
        nearest
    } else {
        ratio.ceil()
    };
    Ok(m.max(1.0) as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub t: u64,
    pub regret: f64,
    pub ratio: f64,
}

/// `Regret(T)/√T` for each `(T, Regret(T))` pair, sorted by `T`.
pub fn regret_scaling_diagnostic(points: &[(u64, f64)]) -> Vec<ScalingRow> {
    let mut rows: Vec<ScalingRow> = points
        .iter()
        .map(|&(t, regret)| ScalingRow {
            t,
            regret,
            ratio: regret / (t as f64).sqrt(),
        })
        .collect();
    rows.sort_by_key(|r| r.t);
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficient_arithmetic() {
        let mut l = RegretLedger::new(2, 0.01, 1.0);
        assert_eq!(
            l.regret_coefficient(0),
            Err(MetricsError::UndefinedCoefficient { agent: 0 })
        );
        for _ in 0..4 {
            l.record(0, 1.0, 1.0);
            l.record(1, 3.5, 1.0);
        }
        assert_eq!(l.regret_coefficient(0).unwrap(), 0.01);
        assert_eq!(l.regret_coefficient(1).unwrap(), 5.0);
        assert_eq!(l.total_regret().unwrap(), 10.0);
        assert_eq!(l.d_star().unwrap(), 0.01);
    }

    #[test]
    fn normalized_units() {
        let mut l = RegretLedger::new(1, 0.01, 4.0);
        for _ in 0..16 {
            l.record(0, 2.0, 1.0);
        }
        assert_eq!(l.regret(0).unwrap(), 16.0);
        assert_eq!(l.normalized_regret(0).unwrap(), 4.0);
        assert_eq!(l.normalized_coefficient(0).unwrap(), 1.0);
        assert_eq!(l.regret_coefficient(0).unwrap(), 4.0);
    }

    #[test]
    fn inexact_ledger_counts_only() {
        let mut l = RegretLedger::new(1, 0.01, 1.0);
        l.record_inexact(0);
        assert_eq!(l.pulls(0), 1);
        assert_eq!(l.total_regret(), Err(MetricsError::Inexact));
    }

    #[test]
    fn predicted_fractions() {
        assert_eq!(predicted_allocation(&[3.0, 3.0]), vec![0.5, 0.5]);
        let p = predicted_allocation(&[1.0, 2.0]);
        assert!((p[0] - 0.8).abs() < 1e-12 && (p[1] - 0.2).abs() < 1e-12);
        let p = predicted_allocation(&[1.0, 2.0, 4.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p[0] - 16.0 / 21.0).abs() < 1e-12);
    }

    #[test]
    fn self_selection_sizes() {
        assert_eq!(self_selection_size(0.5, 0.05).unwrap(), 5);
        assert_eq!(self_selection_size(0.3, 0.3).unwrap(), 1);
        assert_eq!(self_selection_size(0.9, 0.01).unwrap(), 44);
        assert_eq!(self_selection_size(0.5, 0.25).unwrap(), 2);
        assert!(self_selection_size(1.0, 0.05).is_err());
        assert!(self_selection_size(0.5, 1.0).is_err());
    }

    #[test]
    fn scaling_rows_are_sorted() {
        let rows = regret_scaling_diagnostic(&[(400, 20.0), (100, 10.0)]);
        assert_eq!(rows[0].t, 100);
        assert_eq!(rows[0].ratio, 1.0);
        assert_eq!(rows[1].ratio, 1.0);
    }
}
