//! Named environments.
//!
//! All presets use reward bounds `[0, 1]` per step unless stated otherwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mdp::{MdpError, MdpSpec, NonstationarySchedule, RewardDist};
use crate::policy::PolicySnapshot;

/// Names accepted by [`by_name`].
pub const PRESET_NAMES: &[&str] = &["chain", "gridworld", "bandit", "switching-chain"];

/// Chain of `n` states. Action 0 returns to state 0; action 1 advances one
/// state with probability `1 - slip` and stays put otherwise. Every step taken
/// in the last state pays reward 1.
pub fn chain(n: usize, horizon: usize, slip: f64) -> Result<MdpSpec, MdpError> {
    chain_with_goal_reward(n, horizon, slip, RewardDist::deterministic(1.0))
}

/// [`chain`] with an arbitrary reward distribution in the goal state.
pub fn chain_with_goal_reward(
    n: usize,
    horizon: usize,
    slip: f64,
    goal: RewardDist,
) -> Result<MdpSpec, MdpError> {
    chain_layout(n, horizon, slip, goal, 1)
}

fn chain_layout(
    n: usize,
    horizon: usize,
    slip: f64,
    goal: RewardDist,
    advance: usize,
) -> Result<MdpSpec, MdpError> {
    if n < 2 {
        return Err(MdpError::InvalidMdp(
            "chain needs at least two states".into(),
        ));
    }
    if !(0.0..1.0).contains(&slip) {
        return Err(MdpError::InvalidMdp("slip must lie in [0, 1)".into()));
    }
    let reset = 1 - advance;
    let mut transition = vec![0.0; n * 2 * n];
    let mut reward = Vec::with_capacity(n * 2);
    for s in 0..n {
        transition[(s * 2 + reset) * n] = 1.0;
        let row = (s * 2 + advance) * n;
        let next = (s + 1).min(n - 1);
        transition[row + next] += 1.0 - slip;
        transition[row + s] += slip;
        for _ in 0..2 {
            reward.push(if s == n - 1 {
                goal.clone()
            } else {
                RewardDist::deterministic(0.0)
            });
        }
    }
    let mut initial = vec![0.0; n];
    initial[0] = 1.0;
    MdpSpec::new(n, 2, horizon, transition, reward, (0.0, 1.0), initial)
}

/// Single-state, one-step bandit with Bernoulli arms.
pub fn bandit(means: &[f64]) -> Result<MdpSpec, MdpError> {
    if means.is_empty() {
        return Err(MdpError::InvalidMdp("bandit needs at least one arm".into()));
    }
    let rewards = means
        .iter()
        .map(|&p| RewardDist::bernoulli(p, 0.0, 1.0))
        .collect();
    MdpSpec::new(
        1,
        means.len(),
        1,
        vec![1.0; means.len()],
        rewards,
        (0.0, 1.0),
        vec![1.0],
    )
}

/// One-state, one-action, one-step environment with deterministic reward
/// `v_star` and bounds `[lo, v_star]`; the arena for synthetic agents.
pub fn synthetic_arena(v_star: f64, lo: f64) -> Result<MdpSpec, MdpError> {
    MdpSpec::new(
        1,
        1,
        1,
        vec![1.0],
        vec![RewardDist::deterministic(v_star)],
        (lo, v_star),
        vec![1.0],
    )
}

/// `width x height` grid, start in the top-left corner, goal in the
/// bottom-right corner paying 1 per step spent there. Actions are
/// up/right/down/left; with probability `slip` the move is replaced by a
/// uniformly random one.
pub fn gridworld(
    width: usize,
    height: usize,
    horizon: usize,
    slip: f64,
) -> Result<MdpSpec, MdpError> {
    if width == 0 || height == 0 || width * height < 2 {
        return Err(MdpError::InvalidMdp(
            "gridworld needs at least two cells".into(),
        ));
    }
    if !(0.0..=1.0).contains(&slip) {
        return Err(MdpError::InvalidMdp("slip must lie in [0, 1]".into()));
    }
    let n = width * height;
    let goal = n - 1;
    let moves: [(isize, isize); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];
    let target = |s: usize, m: usize| -> usize {
        let (x, y) = ((s % width) as isize, (s / width) as isize);
        let (nx, ny) = (x + moves[m].0, y + moves[m].1);
        if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
            s
        } else {
            ny as usize * width + nx as usize
        }
    };
    let mut transition = vec![0.0; n * 4 * n];
    let mut reward = Vec::with_capacity(n * 4);
    for s in 0..n {
        for a in 0..4 {
            let row = (s * 4 + a) * n;
            transition[row + target(s, a)] += 1.0 - slip;
            for m in 0..4 {
                transition[row + target(s, m)] += slip / 4.0;
            }
            reward.push(RewardDist::deterministic(if s == goal { 1.0 } else { 0.0 }));
        }
    }
    let mut initial = vec![0.0; n];
    initial[0] = 1.0;
    MdpSpec::new(n, 4, horizon, transition, reward, (0.0, 1.0), initial)
}

/// Two-phase schedule over a chain whose goal pays 1 with probability
/// `goal_p`. From `switch_round` on the two actions swap roles: action 0
/// advances and action 1 resets. A learner that trusts its old estimates
/// keeps resetting until it has unlearned them.
pub fn switching_chain(
    n: usize,
    horizon: usize,
    switch_round: u64,
    slip: f64,
    goal_p: f64,
) -> Result<NonstationarySchedule, MdpError> {
    let goal = RewardDist::bernoulli(goal_p, 0.0, 1.0);
    let before = chain_layout(n, horizon, slip, goal.clone(), 1)?;
    let after = chain_layout(n, horizon, slip, goal, 0)?;
    NonstationarySchedule::new(vec![(1, before), (switch_round, after)])
}

/// Environment by preset name with default parameters.
pub fn by_name(name: &str) -> Result<NonstationarySchedule, MdpError> {
    match name {
        "chain" => chain(5, 8, 0.0).map(Into::into),
        "gridworld" => gridworld(3, 3, 8, 0.1).map(Into::into),
        "bandit" => bandit(&[0.2, 0.5, 0.8]).map(Into::into),
        "switching-chain" => switching_chain(5, 8, 10_001, 0.1, 0.9),
        other => Err(MdpError::InvalidMdp(format!(
            "unknown environment preset `{other}` (known: {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}

/// Random MDP with dense transitions and Bernoulli rewards; used by tests.
pub fn random_mdp(num_states: usize, num_actions: usize, horizon: usize, seed: u64) -> MdpSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transition = Vec::with_capacity(num_states * num_actions * num_states);
    for _ in 0..num_states * num_actions {
        transition.extend(random_simplex(num_states, &mut rng));
    }
    let reward = (0..num_states * num_actions)
        .map(|_| RewardDist::bernoulli(rng.random::<f64>(), 0.0, 1.0))
        .collect();
    let initial = random_simplex(num_states, &mut rng);
    MdpSpec::new(
        num_states,
        num_actions,
        horizon,
        transition,
        reward,
        (0.0, 1.0),
        initial,
    )
    .expect("random tables are valid")
}

/// Random fully-supported policy; used by tests.
pub fn random_policy<R: Rng + ?Sized>(
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    rng: &mut R,
) -> PolicySnapshot {
    let mut probs = Vec::with_capacity(horizon * num_states * num_actions);
    for _ in 0..horizon * num_states {
        probs.extend(random_simplex(num_actions, rng));
    }
    PolicySnapshot::new(horizon, num_states, num_actions, probs).expect("valid rows")
}

fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let mut out: Vec<f64> = raw.iter().map(|x| x / total).collect();
    // push the rounding residue into the last entry so rows sum to 1 tightly
    let residue = 1.0 - out.iter().sum::<f64>();
    out[n - 1] += residue;
    out
}
