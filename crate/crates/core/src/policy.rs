use serde::{Deserialize, Serialize};

use crate::mdp::MdpError;

/// Tolerance for a probability row to count as a distribution.
pub const DIST_TOL: f64 = 1e-9;

/// A non-stationary stochastic policy: one action distribution per
/// `(step, state)` pair, stored row-major as `[(step * S + state) * A + action]`.
///
/// Step indices are zero-based (`0..horizon`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy", into = "RawPolicy")]
pub struct PolicySnapshot {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPolicy {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl TryFrom<RawPolicy> for PolicySnapshot {
    type Error = MdpError;

    fn try_from(raw: RawPolicy) -> Result<Self, Self::Error> {
        PolicySnapshot::new(raw.horizon, raw.num_states, raw.num_actions, raw.probs)
    }
}

impl From<PolicySnapshot> for RawPolicy {
    fn from(p: PolicySnapshot) -> Self {
        RawPolicy {
            horizon: p.horizon,
            num_states: p.num_states,
            num_actions: p.num_actions,
            probs: p.probs,
        }
    }
}

pub(crate) fn check_distribution(row: &[f64]) -> bool {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return false;
    }
    (row.iter().sum::<f64>() - 1.0).abs() <= DIST_TOL
}

impl PolicySnapshot {
    pub fn new(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        probs: Vec<f64>,
    ) -> Result<Self, MdpError> {
        if horizon == 0 || num_states == 0 || num_actions == 0 {
            return Err(MdpError::InvalidPolicy("empty policy table".into()));
        }
        if probs.len() != horizon * num_states * num_actions {
            return Err(MdpError::InvalidPolicy(format!(
                "expected {} entries, got {}",
                horizon * num_states * num_actions,
                probs.len()
            )));
        }
        for (row_idx, row) in probs.chunks(num_actions).enumerate() {
            if !check_distribution(row) {
                return Err(MdpError::InvalidPolicy(format!(
                    "row (step {}, state {}) is not a distribution: {:?}",
                    row_idx / num_states,
                    row_idx % num_states,
                    row
                )));
            }
        }
        Ok(Self {
            horizon,
            num_states,
            num_actions,
            probs,
        })
    }

    pub fn uniform(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        Self {
            horizon,
            num_states,
            num_actions,
            probs: vec![p; horizon * num_states * num_actions],
        }
    }

    /// Deterministic policy from a `(step, state) -> action` table.
    pub fn deterministic(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        actions: &[usize],
    ) -> Result<Self, MdpError> {
        if actions.len() != horizon * num_states {
            return Err(MdpError::InvalidPolicy(format!(
                "expected {} actions, got {}",
                horizon * num_states,
                actions.len()
            )));
        }
        let mut probs = vec![0.0; horizon * num_states * num_actions];
        for (row, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(MdpError::InvalidPolicy(format!("action {a} out of range")));
            }
            probs[row * num_actions + a] = 1.0;
        }
        Self::new(horizon, num_states, num_actions, probs)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Action distribution at `(step, state)`.
    pub fn row(&self, step: usize, state: usize) -> &[f64] {
        let start = (step * self.num_states + state) * self.num_actions;
        &self.probs[start..start + self.num_actions]
    }

    pub fn prob(&self, step: usize, state: usize, action: usize) -> f64 {
        self.row(step, state)[action]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn same_shape(&self, other: &PolicySnapshot) -> bool {
        self.horizon == other.horizon
            && self.num_states == other.num_states
            && self.num_actions == other.num_actions
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_rows_that_do_not_sum_to_one() {
        let err = PolicySnapshot::new(1, 1, 2, vec![0.5, 0.6]).unwrap_err();
        assert!(matches!(err, MdpError::InvalidPolicy(_)));
        assert!(PolicySnapshot::new(1, 1, 2, vec![-0.1, 1.1]).is_err());
        assert!(PolicySnapshot::new(1, 1, 2, vec![0.5]).is_err());
    }

    #[test]
    fn deterministic_table() {
        let p = PolicySnapshot::deterministic(2, 2, 3, &[0, 2, 1, 1]).unwrap();
        assert_eq!(p.row(0, 1), &[0.0, 0.0, 1.0]);
        assert_eq!(p.prob(1, 0, 1), 1.0);
    }

    #[test]
    fn json_round_trip_validates() {
        let p = PolicySnapshot::uniform(2, 1, 2);
        let text = serde_json::to_string(&p).unwrap();
        let back: PolicySnapshot = serde_json::from_str(&text).unwrap();
        assert_eq!(p, back);
        let bad = r#"{"horizon":1,"num_states":1,"num_actions":2,"probs":[0.9,0.9]}"#;
        assert!(serde_json::from_str::<PolicySnapshot>(bad).is_err());
    }
}
