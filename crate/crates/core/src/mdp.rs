//! Finite episodic MDPs with tabular dynamics.
//!
//! Rewards are finite distributions so that expected returns can be computed
//! exactly. States, actions and steps are zero-based indices.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{check_distribution, PolicySnapshot};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}

/// Finite reward distribution for one `(state, action)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardDist {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

impl RewardDist {
    pub fn deterministic(value: f64) -> Self {
        Self {
            values: vec![value],
            probs: vec![1.0],
        }
    }

    pub fn bernoulli(p: f64, lo: f64, hi: f64) -> Self {
        Self {
            values: vec![lo, hi],
            probs: vec![1.0 - p, p],
        }
    }

    pub fn mean(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.probs)
            .map(|(v, p)| v * p)
            .sum()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.values.len() == 1 {
            return self.values[0];
        }
        self.values[sample_index(&self.probs, rng)]
    }
}

/// Draw an index from a probability vector with a single uniform draw.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the cumulative sum
    last_positive
}

/// A finite episodic MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMdp", into = "RawMdp")]
pub struct MdpSpec {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    /// `[(s * A + a) * S + s']`
    transition: Vec<f64>,
    /// `[s * A + a]`
    reward: Vec<RewardDist>,
    reward_lo: f64,
    reward_hi: f64,
    initial_dist: Vec<f64>,
}

/// JSON document layout: nested row-major tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    /// `transition[s][a][s']`
    transition: Vec<Vec<Vec<f64>>>,
    /// `reward[s][a]`
    reward: Vec<Vec<RewardDist>>,
    reward_bounds: [f64; 2],
    initial_dist: Vec<f64>,
}

impl TryFrom<RawMdp> for MdpSpec {
    type Error = MdpError;

    fn try_from(raw: RawMdp) -> Result<Self, MdpError> {
        if raw.transition.len() != raw.num_states || raw.reward.len() != raw.num_states {
            return Err(MdpError::InvalidMdp(
                "transition and reward need one entry per state".into(),
            ));
        }
        let mut transition = Vec::new();
        for (s, per_action) in raw.transition.into_iter().enumerate() {
            if per_action.len() != raw.num_actions {
                return Err(MdpError::InvalidMdp(format!(
                    "transition[{s}] needs {} actions",
                    raw.num_actions
                )));
            }
            for row in per_action {
                transition.extend(row);
            }
        }
        let mut reward = Vec::new();
        for (s, per_action) in raw.reward.into_iter().enumerate() {
            if per_action.len() != raw.num_actions {
                return Err(MdpError::InvalidMdp(format!(
                    "reward[{s}] needs {} actions",
                    raw.num_actions
                )));
            }
            reward.extend(per_action);
        }
        MdpSpec::new(
            raw.num_states,
            raw.num_actions,
            raw.horizon,
            transition,
            reward,
            (raw.reward_bounds[0], raw.reward_bounds[1]),
            raw.initial_dist,
        )
    }
}

impl From<MdpSpec> for RawMdp {
    fn from(m: MdpSpec) -> Self {
        let (s_n, a_n) = (m.num_states, m.num_actions);
        let transition = (0..s_n)
            .map(|s| (0..a_n).map(|a| m.transition_row(s, a).to_vec()).collect())
            .collect();
        let reward = (0..s_n)
            .map(|s| (0..a_n).map(|a| m.reward[s * a_n + a].clone()).collect())
            .collect();
        RawMdp {
            num_states: s_n,
            num_actions: a_n,
            horizon: m.horizon,
            transition,
            reward,
            reward_bounds: [m.reward_lo, m.reward_hi],
            initial_dist: m.initial_dist,
        }
    }
}

impl MdpSpec {
    /// Build and validate an MDP from flat tables (`transition[(s*A+a)*S+s']`,
    /// `reward[s*A+a]`).
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        transition: Vec<f64>,
        reward: Vec<RewardDist>,
        reward_bounds: (f64, f64),
        initial_dist: Vec<f64>,
    ) -> Result<Self, MdpError> {
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(MdpError::InvalidMdp(
                "num_states, num_actions and horizon must be positive".into(),
            ));
        }
        let (lo, hi) = reward_bounds;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(MdpError::InvalidMdp(format!(
                "reward bounds [{lo}, {hi}] are not an interval"
            )));
        }
        if transition.len() != num_states * num_actions * num_states {
            return Err(MdpError::InvalidMdp(
                "transition table has wrong size".into(),
            ));
        }
        for (row_idx, row) in transition.chunks(num_states).enumerate() {
            if !check_distribution(row) {
                return Err(MdpError::InvalidMdp(format!(
                    "transition row (state {}, action {}) is not a distribution",
                    row_idx / num_actions,
                    row_idx % num_actions
                )));
            }
        }
        if reward.len() != num_states * num_actions {
            return Err(MdpError::InvalidMdp("reward table has wrong size".into()));
        }
        for (idx, dist) in reward.iter().enumerate() {
            let (s, a) = (idx / num_actions, idx % num_actions);
            if dist.values.is_empty() || dist.values.len() != dist.probs.len() {
                return Err(MdpError::InvalidMdp(format!(
                    "reward (state {s}, action {a}) needs matching values and probs"
                )));
            }
            if !check_distribution(&dist.probs) {
                return Err(MdpError::InvalidMdp(format!(
                    "reward (state {s}, action {a}) probabilities are not a distribution"
                )));
            }
            if dist.values.iter().any(|v| !(lo..=hi).contains(v)) {
                return Err(MdpError::InvalidMdp(format!(
                    "reward (state {s}, action {a}) support leaves [{lo}, {hi}]"
                )));
            }
        }
        if initial_dist.len() != num_states || !check_distribution(&initial_dist) {
            return Err(MdpError::InvalidMdp(
                "initial_dist is not a distribution over states".into(),
            ));
        }
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            transition,
            reward,
            reward_lo: lo,
            reward_hi: hi,
            initial_dist,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn reward_bounds(&self) -> (f64, f64) {
        (self.reward_lo, self.reward_hi)
    }

    /// Bounds on the episodic return: `[H * r_lo, H * r_hi]`.
    pub fn return_bounds(&self) -> (f64, f64) {
        let h = self.horizon as f64;
        (h * self.reward_lo, h * self.reward_hi)
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * self.num_actions + action) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    pub fn reward_dist(&self, state: usize, action: usize) -> &RewardDist {
        &self.reward[state * self.num_actions + action]
    }

    pub fn mean_reward(&self, state: usize, action: usize) -> f64 {
        self.reward_dist(state, action).mean()
    }

    /// True when `other` has the same state, action and step counts.
    pub fn same_shape(&self, other: &MdpSpec) -> bool {
        self.num_states == other.num_states
            && self.num_actions == other.num_actions
            && self.horizon == other.horizon
    }

    fn check_policy(&self, policy: &PolicySnapshot) -> Result<(), MdpError> {
        if policy.horizon() != self.horizon
            || policy.num_states() != self.num_states
            || policy.num_actions() != self.num_actions
        {
            return Err(MdpError::InvalidPolicy(format!(
                "policy shape ({}, {}, {}) does not match MDP ({}, {}, {})",
                policy.horizon(),
                policy.num_states(),
                policy.num_actions(),
                self.horizon,
                self.num_states,
                self.num_actions
            )));
        }
        Ok(())
    }

    fn one_step_value(&self, state: usize, action: usize, next_values: &[f64]) -> f64 {
        let future: f64 = self
            .transition_row(state, action)
            .iter()
            .zip(next_values)
            .map(|(p, v)| p * v)
            .sum();
        self.mean_reward(state, action) + future
    }
}

/// One `(state, action, reward)` step of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

/// A complete episode; always exactly `horizon` steps long.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub episodic_return: f64,
}

impl Trajectory {
    pub fn from_steps(steps: Vec<Step>) -> Self {
        let episodic_return = steps.iter().map(|s| s.reward).sum();
        Self {
            steps,
            episodic_return,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Reward-to-go from each step, with per-step discount `gamma`
    /// applied as `gamma^(k - h)`.
    pub fn returns_to_go(&self, gamma: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.steps.len()];
        let mut acc = 0.0;
        for (h, step) in self.steps.iter().enumerate().rev() {
            acc = step.reward + gamma * acc;
            out[h] = acc;
        }
        out
    }
}

/// Sample one episode of `policy` in `mdp`.
pub fn rollout<R: Rng + ?Sized>(
    mdp: &MdpSpec,
    policy: &PolicySnapshot,
    rng: &mut R,
) -> Result<Trajectory, MdpError> {
    mdp.check_policy(policy)?;
    let mut steps = Vec::with_capacity(mdp.horizon);
    let mut state = sample_index(&mdp.initial_dist, rng);
    for h in 0..mdp.horizon {
        let action = sample_index(policy.row(h, state), rng);
        let reward = mdp.reward_dist(state, action).sample(rng);
        steps.push(Step {
            state,
            action,
            reward,
        });
        if h + 1 < mdp.horizon {
            state = sample_index(mdp.transition_row(state, action), rng);
        }
    }
    Ok(Trajectory::from_steps(steps))
}

/// Exact expected episodic return of `policy` by backward dynamic programming.
pub fn evaluate_policy(mdp: &MdpSpec, policy: &PolicySnapshot) -> Result<f64, MdpError> {
    mdp.check_policy(policy)?;
    let mut next = vec![0.0; mdp.num_states];
    let mut current = vec![0.0; mdp.num_states];
    for h in (0..mdp.horizon).rev() {
        for (s, value) in current.iter_mut().enumerate() {
            *value = policy
                .row(h, s)
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(|(a, p)| p * mdp.one_step_value(s, a, &next))
                .sum();
        }
        std::mem::swap(&mut next, &mut current);
    }
    Ok(mdp.initial_dist.iter().zip(&next).map(|(p, v)| p * v).sum())
}

/// Exact optimal value `v*` by finite-horizon value iteration, together with
/// a greedy deterministic optimal policy (ties to the lowest action index).
pub fn optimal_value(mdp: &MdpSpec) -> (f64, PolicySnapshot) {
    let (s_n, a_n, h_n) = (mdp.num_states, mdp.num_actions, mdp.horizon);
    let mut next = vec![0.0; s_n];
    let mut current = vec![0.0; s_n];
    let mut actions = vec![0usize; h_n * s_n];
    for h in (0..h_n).rev() {
        for s in 0..s_n {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..a_n {
                let q = mdp.one_step_value(s, a, &next);
                if q > best {
                    best = q;
                    best_a = a;
                }
            }
            current[s] = best;
            actions[h * s_n + s] = best_a;
        }
        std::mem::swap(&mut next, &mut current);
    }
    let value = mdp.initial_dist.iter().zip(&next).map(|(p, v)| p * v).sum();
    let policy = PolicySnapshot::deterministic(h_n, s_n, a_n, &actions)
        .expect("greedy table is well formed");
    (value, policy)
}

/// Piecewise-constant sequence of MDPs indexed by round (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule", into = "RawSchedule")]
pub struct NonstationarySchedule {
    phases: Vec<(u64, MdpSpec)>,
}

#[derive(Serialize, Deserialize)]
struct RawPhase {
    start_round: u64,
    mdp: MdpSpec,
}

#[derive(Serialize, Deserialize)]
struct RawSchedule {
    phases: Vec<RawPhase>,
}

impl TryFrom<RawSchedule> for NonstationarySchedule {
    type Error = MdpError;

    fn try_from(raw: RawSchedule) -> Result<Self, MdpError> {
        NonstationarySchedule::new(
            raw.phases
                .into_iter()
                .map(|p| (p.start_round, p.mdp))
                .collect(),
        )
    }
}

impl From<NonstationarySchedule> for RawSchedule {
    fn from(s: NonstationarySchedule) -> Self {
        RawSchedule {
            phases: s
                .phases
                .into_iter()
                .map(|(start_round, mdp)| RawPhase { start_round, mdp })
                .collect(),
        }
    }
}

impl NonstationarySchedule {
    pub fn new(phases: Vec<(u64, MdpSpec)>) -> Result<Self, MdpError> {
        let Some((first_start, first)) = phases.first() else {
            return Err(MdpError::InvalidSchedule("no phases".into()));
        };
        if *first_start != 1 {
            return Err(MdpError::InvalidSchedule(
                "first phase must start at round 1".into(),
            ));
        }
        for pair in phases.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(MdpError::InvalidSchedule(
                    "phase start rounds must be strictly increasing".into(),
                ));
            }
            if !pair[1].1.same_shape(first) {
                return Err(MdpError::InvalidSchedule(
                    "all phases must share states, actions and horizon".into(),
                ));
            }
        }
        Ok(Self { phases })
    }

    pub fn stationary(mdp: MdpSpec) -> Self {
        Self {
            phases: vec![(1, mdp)],
        }
    }

    pub fn phases(&self) -> &[(u64, MdpSpec)] {
        &self.phases
    }

    /// Index of the phase active at round `t` (the last phase starting at or before `t`).
    pub fn phase_index(&self, t: u64) -> usize {
        self.phases.partition_point(|(start, _)| *start <= t).max(1) - 1
    }

    pub fn active_mdp(&self, t: u64) -> &MdpSpec {
        &self.phases[self.phase_index(t)].1
    }

    /// Any phase; all phases share shape and the shape is what callers need.
    pub fn first(&self) -> &MdpSpec {
        &self.phases[0].1
    }
}

impl From<MdpSpec> for NonstationarySchedule {
    fn from(mdp: MdpSpec) -> Self {
        Self::stationary(mdp)
    }
}

/// Check a distribution against the crate tolerance (exposed for tests of
/// other crates).
pub fn is_distribution(row: &[f64]) -> bool {
    check_distribution(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_step_bandit(means: &[f64]) -> MdpSpec {
        presets::bandit(means).unwrap()
    }

    #[test]
    fn single_state_deterministic_reward() {
        let mdp = MdpSpec::new(
            1,
            2,
            1,
            vec![1.0, 1.0],
            vec![
                RewardDist::deterministic(1.0),
                RewardDist::deterministic(0.0),
            ],
            (0.0, 1.0),
            vec![1.0],
        )
        .unwrap();
        let policy = PolicySnapshot::deterministic(1, 1, 2, &[0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let traj = rollout(&mdp, &policy, &mut rng).unwrap();
        assert_eq!(traj.episodic_return, 1.0);
        assert_eq!(traj.len(), 1);
    }

    #[test]
    fn deterministic_chain_always_right() {
        let mdp = presets::chain(3, 3, 0.0).unwrap();
        let right = PolicySnapshot::deterministic(3, 3, 2, &[1; 9]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let traj = rollout(&mdp, &right, &mut rng).unwrap();
        let rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
        assert_eq!(rewards, vec![0.0, 0.0, 1.0]);
        assert_eq!(traj.episodic_return, 1.0);
        assert_eq!(evaluate_policy(&mdp, &right).unwrap(), 1.0);
        assert_eq!(optimal_value(&mdp).0, 1.0);
    }

    #[test]
    fn bandit_values() {
        let mdp = one_step_bandit(&[0.2, 0.8]);
        let uniform = PolicySnapshot::uniform(1, 1, 2);
        assert!((evaluate_policy(&mdp, &uniform).unwrap() - 0.5).abs() < 1e-15);
        let (v, pi) = optimal_value(&mdp);
        assert!((v - 0.8).abs() < 1e-15);
        assert_eq!(pi.row(0, 0), &[0.0, 1.0]);
    }

    #[test]
    fn rollout_rejects_mismatched_policy() {
        let mdp = one_step_bandit(&[0.2, 0.8]);
        let wrong = PolicySnapshot::uniform(2, 1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            rollout(&mdp, &wrong, &mut rng),
            Err(MdpError::InvalidPolicy(_))
        ));
    }

    #[test]
    fn rollout_is_deterministic_per_seed() {
        let mdp = presets::random_mdp(4, 2, 5, 11);
        let pi = PolicySnapshot::uniform(5, 4, 2);
        let a = rollout(&mdp, &pi, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = rollout(&mdp, &pi, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn monte_carlo_matches_exact_value() {
        // two states, stochastic transitions and Bernoulli rewards
        let mdp = MdpSpec::new(
            2,
            2,
            3,
            vec![0.7, 0.3, 0.2, 0.8, 0.5, 0.5, 0.9, 0.1],
            vec![
                RewardDist::bernoulli(0.3, 0.0, 1.0),
                RewardDist::bernoulli(0.6, 0.0, 1.0),
                RewardDist::deterministic(0.5),
                RewardDist::bernoulli(0.1, 0.0, 1.0),
            ],
            (0.0, 1.0),
            vec![0.4, 0.6],
        )
        .unwrap();
        let pi = PolicySnapshot::uniform(3, 2, 2);
        let exact = evaluate_policy(&mdp, &pi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 1_000_000;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n {
            let r = rollout(&mdp, &pi, &mut rng).unwrap().episodic_return;
            sum += r;
            sum_sq += r * r;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - exact).abs() < 3.0 * se,
            "mean {mean} exact {exact} se {se}"
        );
    }

    #[test]
    fn optimal_value_dominates_random_policies() {
        let mdp = presets::random_mdp(5, 3, 4, 77);
        let (v_star, greedy) = optimal_value(&mdp);
        assert!((evaluate_policy(&mdp, &greedy).unwrap() - v_star).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let pi = presets::random_policy(4, 5, 3, &mut rng);
            assert!(evaluate_policy(&mdp, &pi).unwrap() <= v_star + 1e-12);
        }
    }

    #[test]
    fn schedule_boundaries() {
        let a = presets::chain(3, 3, 0.0).unwrap();
        let b = presets::chain(3, 3, 0.2).unwrap();
        let single = NonstationarySchedule::stationary(a.clone());
        assert!((1..100).all(|t| single.active_mdp(t) == &a));

        let sched = NonstationarySchedule::new(vec![(1, a.clone()), (501, b.clone())]).unwrap();
        assert_eq!(sched.active_mdp(500), &a);
        assert_eq!(sched.active_mdp(501), &b);
        let first = (1..=1000).filter(|&t| sched.phase_index(t) == 0).count();
        assert_eq!(first, 500);
        assert_eq!(1000 - first, 500);
    }

    #[test]
    fn schedule_validation() {
        let a = presets::chain(3, 3, 0.0).unwrap();
        let other = presets::chain(4, 3, 0.0).unwrap();
        assert!(NonstationarySchedule::new(vec![]).is_err());
        assert!(NonstationarySchedule::new(vec![(2, a.clone())]).is_err());
        assert!(NonstationarySchedule::new(vec![(1, a.clone()), (1, a.clone())]).is_err());
        assert!(NonstationarySchedule::new(vec![(1, a), (10, other)]).is_err());
    }

    #[test]
    fn invalid_tables_are_rejected() {
        let bad_row = MdpSpec::new(
            1,
            1,
            1,
            vec![0.9],
            vec![RewardDist::deterministic(0.0)],
            (0.0, 1.0),
            vec![1.0],
        );
        assert!(bad_row.is_err());
        let out_of_bounds = MdpSpec::new(
            1,
            1,
            1,
            vec![1.0],
            vec![RewardDist::deterministic(2.0)],
            (0.0, 1.0),
            vec![1.0],
        );
        assert!(out_of_bounds.is_err());
        let bad_init = MdpSpec::new(
            1,
            1,
            1,
            vec![1.0],
            vec![RewardDist::deterministic(0.0)],
            (0.0, 1.0),
            vec![0.5],
        );
        assert!(bad_init.is_err());
    }

    #[test]
    fn json_round_trip() {
        let mdp = presets::random_mdp(3, 2, 2, 4);
        let text = serde_json::to_string(&mdp).unwrap();
        let back: MdpSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(mdp, back);
    }
}
