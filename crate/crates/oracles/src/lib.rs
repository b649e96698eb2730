//! Brute-force reference computations for testing `modsel`.
//!
//! Everything here is deliberately naive: it expands sums over every
//! trajectory or re-derives selector arithmetic from the formulas, sharing
//! as little code as possible with the library it checks. Nothing in the
//! training loop depends on this crate.

use modsel::agents::{is_trajectory_ratio, AgentError};
use modsel::mdp::{MdpSpec, Step, Trajectory};
use modsel::PolicySnapshot;
use thiserror::Error;

/// Maximum number of paths [`enumerate`] will expand.
pub const MAX_PATHS: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("more than {MAX_PATHS} trajectories to enumerate")]
    TooLarge,
    #[error("policy and MDP shapes differ")]
    ShapeMismatch,
    #[error(transparent)]
    Agent(#[from] AgentError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedPath {
    pub trajectory: Trajectory,
    pub probability: f64,
}

impl EnumeratedPath {
    pub fn episodic_return(&self) -> f64 {
        self.trajectory.episodic_return
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnumeration {
    pub paths: Vec<EnumeratedPath>,
}

impl TrajectoryEnumeration {
    pub fn total_mass(&self) -> f64 {
        self.paths.iter().map(|p| p.probability).sum()
    }

    pub fn expected_return(&self) -> f64 {
        self.paths
            .iter()
            .map(|p| p.probability * p.episodic_return())
            .sum()
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Every positive-probability trajectory of `policy` in `mdp`, branching on
/// the initial state, each action, each reward outcome and each successor
/// state. Successors of the final step are not expanded.
pub fn enumerate(
    mdp: &MdpSpec,
    policy: &PolicySnapshot,
) -> Result<TrajectoryEnumeration, OracleError> {
    if policy.horizon() != mdp.horizon()
        || policy.num_states() != mdp.num_states()
        || policy.num_actions() != mdp.num_actions()
    {
        return Err(OracleError::ShapeMismatch);
    }
    let mut paths = Vec::new();
    let mut prefix = Vec::with_capacity(mdp.horizon());
    for (s0, p0) in mdp.initial_dist().iter().enumerate() {
        if *p0 > 0.0 {
            expand(mdp, policy, s0, *p0, &mut prefix, &mut paths)?;
        }
    }
    Ok(TrajectoryEnumeration { paths })
}

fn expand(
    mdp: &MdpSpec,
    policy: &PolicySnapshot,
    state: usize,
    prob: f64,
    prefix: &mut Vec<Step>,
    out: &mut Vec<EnumeratedPath>,
) -> Result<(), OracleError> {
    let h = prefix.len();
    for action in 0..mdp.num_actions() {
        let pa = policy.prob(h, state, action);
        if pa <= 0.0 {
            continue;
        }
        let dist = mdp.reward_dist(state, action);
        for (value, pr) in dist.values.iter().zip(&dist.probs) {
            if *pr <= 0.0 {
                continue;
            }
            prefix.push(Step {
                state,
                action,
                reward: *value,
            });
            let p = prob * pa * pr;
            if h + 1 == mdp.horizon() {
                if out.len() >= MAX_PATHS {
                    return Err(OracleError::TooLarge);
                }
                out.push(EnumeratedPath {
                    trajectory: Trajectory::from_steps(prefix.clone()),
                    probability: p,
                });
            } else {
                for (next, pn) in mdp.transition_row(state, action).iter().enumerate() {
                    if *pn > 0.0 {
                        expand(mdp, policy, next, p * pn, prefix, out)?;
                    }
                }
            }
            prefix.pop();
        }
    }
    Ok(())
}

/// `Σ_τ P_behavior(τ) · ratio(τ) · return(τ)`.
pub fn exact_is_value(
    mdp: &MdpSpec,
    behavior: &PolicySnapshot,
    target: &PolicySnapshot,
) -> Result<f64, OracleError> {
    let paths = enumerate(mdp, behavior)?;
    let mut total = 0.0;
    for p in &paths.paths {
        let ratio = is_trajectory_ratio(&p.trajectory, behavior, target)?;
        total += p.probability * ratio * p.episodic_return();
    }
    Ok(total)
}

/// `Σ_τ P_behavior(τ) · ratio(τ)`, which is 1 when the behaviour policy
/// covers the target.
pub fn likelihood_ratio_mean(
    mdp: &MdpSpec,
    behavior: &PolicySnapshot,
    target: &PolicySnapshot,
) -> Result<f64, OracleError> {
    let paths = enumerate(mdp, behavior)?;
    let mut total = 0.0;
    for p in &paths.paths {
        total += p.probability * is_trajectory_ratio(&p.trajectory, behavior, target)?;
    }
    Ok(total)
}

/// Raw per-agent tallies as fed to the misspecification test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tally {
    pub pulls: u64,
    pub reward_sum: f64,
    pub coefficient: f64,
}

/// Independent evaluation of the misspecification test for every agent.
/// Agents never pulled are excluded from the comparison and never flagged.
pub fn shadow_misspec_test(tallies: &[Tally], c: f64, delta: f64) -> Vec<bool> {
    let m = tallies.len() as f64;
    let width = |n: u64| -> f64 {
        let nf = n as f64;
        let log_n = if n < 2 { 2f64.ln() } else { nf.ln() };
        let arg = m * log_n / delta;
        let outer = if arg > 1.0 { arg.ln() } else { 0.0 };
        c * (outer / nf).sqrt()
    };
    let mut best = f64::NEG_INFINITY;
    for t in tallies {
        if t.pulls > 0 {
            let lower = t.reward_sum / t.pulls as f64 - width(t.pulls);
            if lower > best {
                best = lower;
            }
        }
    }
    tallies
        .iter()
        .map(|t| {
            if t.pulls == 0 {
                return false;
            }
            let n = t.pulls as f64;
            let upper = t.reward_sum / n + width(t.pulls) + t.coefficient * n.sqrt() / n;
            upper <= best
        })
        .collect()
}

/// Index of the smallest value, first occurrence on ties.
pub fn shadow_argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] < values[best] {
            best = i;
        }
    }
    best
}

/// One EXP3 score update followed by the softmax, evaluated directly.
pub fn shadow_exp3_step(
    scores: &[f64],
    probs: &[f64],
    eta: f64,
    chosen: usize,
    reward: f64,
) -> (Vec<f64>, Vec<f64>) {
    let new_scores: Vec<f64> = scores
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let hit = if j == chosen { 1.0 } else { 0.0 };
            s + 1.0 - hit * (1.0 - reward) / probs[chosen]
        })
        .collect();
    let top = new_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = new_scores.iter().map(|s| (eta * (s - top)).exp()).collect();
    let z: f64 = weights.iter().sum();
    (new_scores, weights.iter().map(|w| w / z).collect())
}
