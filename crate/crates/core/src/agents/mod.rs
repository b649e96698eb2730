//! Base agents: the evolving learners a selector chooses between.

mod gradient;
mod importance;
mod qlearning;
mod synthetic;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{evaluate_policy, rollout, MdpError, MdpSpec, Step, Trajectory};
use crate::policy::PolicySnapshot;
use crate::seed;

pub(crate) use gradient::softmax_into;
pub use gradient::PgTable;
pub use importance::{discounted_return, is_return_estimate, is_step_ratios, is_trajectory_ratio};
pub use qlearning::QTable;
pub use synthetic::{synthetic_reward, SyntheticAgent, SyntheticAgentConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("agent configuration error: {0}")]
    Config(String),
    #[error("importance ratio undefined: behaviour policy has zero probability for action {action} at step {step}, state {state}")]
    UndefinedRatio {
        step: usize,
        state: usize,
        action: usize,
    },
    #[error("trajectory and policies do not share a shape")]
    ShapeMismatch,
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

fn default_discount() -> f64 {
    1.0
}

/// Declarative agent description, as found in experiment config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentConfig {
    QLearning {
        step_size: f64,
        #[serde(default)]
        exploration_eps: f64,
        #[serde(default)]
        initial_value: f64,
    },
    PolicyGradient {
        step_size: f64,
        #[serde(default = "default_discount")]
        discount: f64,
    },
    Synthetic {
        target_coefficient: f64,
        /// Defaults to the environment's optimal value.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        optimal_value: Option<f64>,
    },
    Fragile {
        failure_prob: f64,
        healthy: Box<AgentConfig>,
    },
}

/// A fragile agent: with probability `failure_prob` over its seed it is
/// frozen on `broken_policy` for the whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct FragileAgentConfig {
    pub failure_prob: f64,
    pub healthy: AgentConfig,
    pub broken_policy: PolicySnapshot,
}

fn check_step_size(step_size: f64) -> Result<(), AgentError> {
    if !(step_size.is_finite() && step_size >= 0.0) {
        return Err(AgentError::Config(format!(
            "step_size must be a non-negative number, got {step_size}"
        )));
    }
    Ok(())
}

impl AgentConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            AgentConfig::QLearning { .. } => "q_learning",
            AgentConfig::PolicyGradient { .. } => "policy_gradient",
            AgentConfig::Synthetic { .. } => "synthetic",
            AgentConfig::Fragile { .. } => "fragile",
        }
    }

    /// Check parameters without building an agent.
    pub fn validate(&self) -> Result<(), AgentError> {
        match self {
            AgentConfig::QLearning {
                step_size,
                exploration_eps,
                initial_value,
            } => {
                check_step_size(*step_size)?;
                if !(0.0..=1.0).contains(exploration_eps) {
                    return Err(AgentError::Config(format!(
                        "exploration_eps must lie in [0, 1], got {exploration_eps}"
                    )));
                }
                if !initial_value.is_finite() {
                    return Err(AgentError::Config("initial_value must be finite".into()));
                }
                Ok(())
            }
            AgentConfig::PolicyGradient {
                step_size,
                discount,
            } => {
                check_step_size(*step_size)?;
                if !(0.0..=1.0).contains(discount) {
                    return Err(AgentError::Config(format!(
                        "discount must lie in [0, 1], got {discount}"
                    )));
                }
                Ok(())
            }
            AgentConfig::Synthetic {
                target_coefficient, ..
            } => {
                if !(target_coefficient.is_finite() && *target_coefficient > 0.0) {
                    return Err(AgentError::Config(
                        "target_coefficient must be positive".into(),
                    ));
                }
                Ok(())
            }
            AgentConfig::Fragile {
                failure_prob,
                healthy,
            } => {
                if !(*failure_prob > 0.0 && *failure_prob < 1.0) {
                    return Err(AgentError::Config(format!(
                        "failure_prob must lie in (0, 1), got {failure_prob}"
                    )));
                }
                if matches!(**healthy, AgentConfig::Fragile { .. }) {
                    return Err(AgentError::Config("fragile agents cannot nest".into()));
                }
                healthy.validate()
            }
        }
    }

    /// Whether this agent exposes a tabular policy over `mdp`.
    pub fn is_tabular(&self) -> bool {
        !matches!(self, AgentConfig::Synthetic { .. })
    }

    pub fn build(&self, mdp: &MdpSpec, seed: u64, d_min: f64) -> Result<BaseAgent, AgentError> {
        self.validate()?;
        let (h, s, a) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
        Ok(match self {
            AgentConfig::QLearning {
                step_size,
                exploration_eps,
                initial_value,
            } => BaseAgent::QLearning(QTable::new(
                h,
                s,
                a,
                *step_size,
                *exploration_eps,
                *initial_value,
            )),
            AgentConfig::PolicyGradient {
                step_size,
                discount,
            } => {
                let mut table = PgTable::new(h, s, a, *step_size);
                table.discount = *discount;
                BaseAgent::PolicyGradient(table)
            }
            AgentConfig::Synthetic {
                target_coefficient,
                optimal_value,
            } => {
                let v_star = match optimal_value {
                    Some(v) => *v,
                    None => crate::mdp::optimal_value(mdp).0,
                };
                let config = SyntheticAgentConfig {
                    target_coefficient: *target_coefficient,
                    optimal_value_ref: v_star,
                };
                BaseAgent::Synthetic(SyntheticAgent::new(config, mdp.return_bounds(), d_min)?)
            }
            AgentConfig::Fragile {
                failure_prob,
                healthy,
            } => {
                let config = FragileAgentConfig {
                    failure_prob: *failure_prob,
                    healthy: (**healthy).clone(),
                    broken_policy: PolicySnapshot::uniform(h, s, a),
                };
                fragile_init(&config, mdp, seed, d_min)?
            }
        })
    }
}

/// Draw the health of a fragile agent from its seed. Broken agents are frozen
/// on `broken_policy` forever; healthy ones are ordinary learners.
pub fn fragile_init(
    config: &FragileAgentConfig,
    mdp: &MdpSpec,
    seed: u64,
    d_min: f64,
) -> Result<BaseAgent, AgentError> {
    if !(config.failure_prob > 0.0 && config.failure_prob < 1.0) {
        return Err(AgentError::Config("failure_prob must lie in (0, 1)".into()));
    }
    if fragile_is_broken(config.failure_prob, seed) {
        Ok(BaseAgent::Frozen {
            policy: config.broken_policy.clone(),
            broken: true,
        })
    } else {
        config.healthy.build(mdp, seed, d_min)
    }
}

/// Health outcome of a fragile agent as a pure function of its seed.
pub fn fragile_is_broken(failure_prob: f64, seed: u64) -> bool {
    let mut rng = seed::rng_for(seed, seed::HEALTH_STREAM, 0);
    rng.random::<f64>() < failure_prob
}

/// A constructed base agent.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseAgent {
    QLearning(QTable),
    PolicyGradient(PgTable),
    Synthetic(SyntheticAgent),
    /// Plays a fixed policy and never learns.
    Frozen {
        policy: PolicySnapshot,
        broken: bool,
    },
}

impl BaseAgent {
    pub fn is_broken(&self) -> bool {
        matches!(self, BaseAgent::Frozen { broken: true, .. })
    }

    /// Current policy, if the agent acts through one.
    pub fn policy(&self) -> Option<PolicySnapshot> {
        match self {
            BaseAgent::QLearning(q) => Some(q.policy()),
            BaseAgent::PolicyGradient(pg) => Some(pg.policy()),
            BaseAgent::Synthetic(_) => None,
            BaseAgent::Frozen { policy, .. } => Some(policy.clone()),
        }
    }

    /// Number of `(step, state, action)` entries behind the policy.
    pub fn table_size(&self) -> usize {
        match self {
            BaseAgent::QLearning(q) => q.values().len(),
            BaseAgent::PolicyGradient(pg) => pg.logits().len(),
            BaseAgent::Synthetic(_) => 1,
            BaseAgent::Frozen { policy, .. } => policy.as_slice().len(),
        }
    }

    pub fn act<R: Rng + ?Sized>(&self, step: usize, state: usize, rng: &mut R) -> usize {
        match self {
            BaseAgent::QLearning(q) => q.act(step, state, rng),
            BaseAgent::PolicyGradient(pg) => pg.act(step, state, rng),
            BaseAgent::Synthetic(_) => 0,
            BaseAgent::Frozen { policy, .. } => {
                crate::mdp::sample_index(policy.row(step, state), rng)
            }
        }
    }

    /// Play one episode with the current policy. Synthetic agents spread their
    /// prescribed episodic reward evenly over the horizon at state 0, action 0.
    pub fn play_episode<R: Rng + ?Sized>(
        &self,
        mdp: &MdpSpec,
        policy: Option<&PolicySnapshot>,
        rng: &mut R,
    ) -> Result<Trajectory, AgentError> {
        match self {
            BaseAgent::Synthetic(agent) => {
                let per_step = agent.next_reward() / mdp.horizon() as f64;
                let steps = (0..mdp.horizon())
                    .map(|_| Step {
                        state: 0,
                        action: 0,
                        reward: per_step,
                    })
                    .collect();
                let mut traj = Trajectory::from_steps(steps);
                traj.episodic_return = agent.next_reward();
                Ok(traj)
            }
            _ => {
                let owned;
                let policy = match policy {
                    Some(p) => p,
                    None => {
                        owned = self.policy().expect("tabular agent has a policy");
                        &owned
                    }
                };
                Ok(rollout(mdp, policy, rng)?)
            }
        }
    }

    /// Exact expected episodic return of the policy about to be deployed.
    pub fn expected_return(
        &self,
        mdp: &MdpSpec,
        policy: Option<&PolicySnapshot>,
    ) -> Result<f64, AgentError> {
        match self {
            BaseAgent::Synthetic(agent) => Ok(agent.next_reward()),
            _ => {
                let owned;
                let policy = match policy {
                    Some(p) => p,
                    None => {
                        owned = self.policy().expect("tabular agent has a policy");
                        &owned
                    }
                };
                Ok(evaluate_policy(mdp, policy)?)
            }
        }
    }

    /// Learn from an episode the agent played itself.
    pub fn learn(&mut self, trajectory: &Trajectory) {
        match self {
            BaseAgent::QLearning(q) => q.update(trajectory),
            BaseAgent::PolicyGradient(pg) => pg.update(trajectory),
            BaseAgent::Synthetic(agent) => agent.record_pull(),
            BaseAgent::Frozen { .. } => {}
        }
    }
}

/// What happened to one non-selected agent during a shared update.
#[derive(Debug, Clone, PartialEq)]
pub enum SharingOutcome {
    /// Selected agent, or sharing disabled.
    Untouched,
    /// Agent kind does not take shared trajectories.
    NotApplicable,
    Applied {
        ratio: f64,
    },
    Skipped(AgentError),
}

/// Offer the selected agent's trajectory to every other policy-gradient agent,
/// reweighted by the trajectory importance ratio against `behavior` (the
/// selected agent's policy at rollout time).
pub fn shared_update(
    agents: &mut [BaseAgent],
    selected: usize,
    trajectory: &Trajectory,
    behavior: &PolicySnapshot,
    enabled: bool,
) -> Vec<SharingOutcome> {
    agents
        .iter_mut()
        .enumerate()
        .map(|(j, agent)| {
            if !enabled || j == selected {
                return SharingOutcome::Untouched;
            }
            let BaseAgent::PolicyGradient(pg) = agent else {
                return SharingOutcome::NotApplicable;
            };
            match is_trajectory_ratio(trajectory, behavior, &pg.policy()) {
                Ok(ratio) => {
                    pg.weighted_update(trajectory, ratio);
                    SharingOutcome::Applied { ratio }
                }
                Err(err) => {
                    log::warn!("skipping shared update for agent {j}: {err}");
                    SharingOutcome::Skipped(err)
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn healthy() -> AgentConfig {
        AgentConfig::QLearning {
            step_size: 0.5,
            exploration_eps: 0.0,
            initial_value: 1.0,
        }
    }

    fn fragile(gamma: f64) -> AgentConfig {
        AgentConfig::Fragile {
            failure_prob: gamma,
            healthy: Box::new(healthy()),
        }
    }

    #[test]
    fn fragile_extremes() {
        let mdp = presets::chain(3, 3, 0.0).unwrap();
        for seed in 0..100 {
            assert!(!fragile(1e-12).build(&mdp, seed, 0.01).unwrap().is_broken());
            assert!(fragile(1.0 - 1e-12)
                .build(&mdp, seed, 0.01)
                .unwrap()
                .is_broken());
        }
    }

    #[test]
    fn fragile_failure_rate_is_binomial() {
        let broken = (0..10_000u64)
            .filter(|&s| fragile_is_broken(0.5, s))
            .count();
        let frac = broken as f64 / 10_000.0;
        assert!((0.485..=0.515).contains(&frac), "broken fraction {frac}");
    }

    #[test]
    fn fragile_is_pure_in_seed() {
        let mdp = presets::chain(3, 3, 0.0).unwrap();
        for seed in 0..50 {
            let a = fragile(0.5).build(&mdp, seed, 0.01).unwrap();
            let b = fragile(0.5).build(&mdp, seed, 0.01).unwrap();
            assert_eq!(a.is_broken(), b.is_broken());
        }
    }

    #[test]
    fn broken_agent_plays_uniform_forever() {
        let mdp = presets::chain(3, 3, 0.0).unwrap();
        let seed = (0..).find(|&s| fragile_is_broken(0.5, s)).unwrap();
        let mut agent = fragile(0.5).build(&mdp, seed, 0.01).unwrap();
        let before = agent.policy().unwrap();
        assert_eq!(before, PolicySnapshot::uniform(3, 3, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            let traj = agent.play_episode(&mdp, None, &mut rng).unwrap();
            agent.learn(&traj);
        }
        assert_eq!(agent.policy().unwrap(), before);
    }

    #[test]
    fn sharing_disabled_leaves_others_alone() {
        let mdp = presets::random_mdp(2, 2, 2, 3);
        let cfg = AgentConfig::PolicyGradient {
            step_size: 0.3,
            discount: 1.0,
        };
        let mut agents: Vec<BaseAgent> =
            (0..3).map(|i| cfg.build(&mdp, i, 0.01).unwrap()).collect();
        let before = agents.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let behavior = agents[0].policy().unwrap();
        let traj = agents[0]
            .play_episode(&mdp, Some(&behavior), &mut rng)
            .unwrap();
        let out = shared_update(&mut agents, 0, &traj, &behavior, false);
        assert!(out.iter().all(|o| *o == SharingOutcome::Untouched));
        assert_eq!(agents, before);
    }

    #[test]
    fn identical_policies_share_as_ordinary_update() {
        let mdp = presets::random_mdp(2, 2, 2, 3);
        let cfg = AgentConfig::PolicyGradient {
            step_size: 0.3,
            discount: 1.0,
        };
        let mut agents: Vec<BaseAgent> =
            (0..2).map(|i| cfg.build(&mdp, i, 0.01).unwrap()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let behavior = agents[0].policy().unwrap();
        let traj = agents[0]
            .play_episode(&mdp, Some(&behavior), &mut rng)
            .unwrap();
        let mut ordinary = agents[1].clone();
        ordinary.learn(&traj);
        let out = shared_update(&mut agents, 0, &traj, &behavior, true);
        assert_eq!(out[1], SharingOutcome::Applied { ratio: 1.0 });
        assert_eq!(agents[1], ordinary);
    }

    #[test]
    fn zero_ratio_leaves_logits_unchanged() {
        let mdp = presets::bandit(&[0.5, 0.5]).unwrap();
        let mut target = PgTable::new(1, 1, 2, 0.5);
        target.logits_mut()[1] = -800.0; // action 1 has probability 0 after exp underflow
        let mut agents = vec![
            AgentConfig::PolicyGradient {
                step_size: 0.5,
                discount: 1.0,
            }
            .build(&mdp, 0, 0.01)
            .unwrap(),
            BaseAgent::PolicyGradient(target.clone()),
        ];
        let behavior = PolicySnapshot::deterministic(1, 1, 2, &[1]).unwrap();
        let traj = Trajectory::from_steps(vec![Step {
            state: 0,
            action: 1,
            reward: 1.0,
        }]);
        let out = shared_update(&mut agents, 0, &traj, &behavior, true);
        assert_eq!(out[1], SharingOutcome::Applied { ratio: 0.0 });
        let BaseAgent::PolicyGradient(after) = &agents[1] else {
            unreachable!()
        };
        assert_eq!(after.logits(), target.logits());
    }

    #[test]
    fn q_agents_do_not_take_shared_data() {
        let mdp = presets::bandit(&[0.5, 0.5]).unwrap();
        let mut agents = vec![
            healthy().build(&mdp, 0, 0.01).unwrap(),
            healthy().build(&mdp, 1, 0.01).unwrap(),
        ];
        let behavior = agents[0].policy().unwrap();
        let traj = Trajectory::from_steps(vec![Step {
            state: 0,
            action: 0,
            reward: 1.0,
        }]);
        let out = shared_update(&mut agents, 0, &traj, &behavior, true);
        assert_eq!(out[1], SharingOutcome::NotApplicable);
    }

    #[test]
    fn config_validation() {
        assert!(AgentConfig::QLearning {
            step_size: -1.0,
            exploration_eps: 0.0,
            initial_value: 0.0
        }
        .validate()
        .is_err());
        assert!(AgentConfig::QLearning {
            step_size: 0.1,
            exploration_eps: 1.5,
            initial_value: 0.0
        }
        .validate()
        .is_err());
        assert!(fragile(1.0).validate().is_err());
        assert!(AgentConfig::Fragile {
            failure_prob: 0.5,
            healthy: Box::new(fragile(0.5))
        }
        .validate()
        .is_err());
    }

    #[test]
    fn synthetic_agent_episode_reports_prescribed_reward() {
        let arena = presets::synthetic_arena(1.0, 0.0).unwrap();
        let cfg = AgentConfig::Synthetic {
            target_coefficient: 1.0,
            optimal_value: None,
        };
        let mut agent = cfg.build(&arena, 0, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let first = agent.play_episode(&arena, None, &mut rng).unwrap();
        assert_eq!(first.episodic_return, 0.0);
        assert_eq!(agent.expected_return(&arena, None).unwrap(), 0.0);
        agent.learn(&first);
        let second = agent.play_episode(&arena, None, &mut rng).unwrap();
        assert!((second.episodic_return - (1.0 - (2f64.sqrt() - 1.0))).abs() < 1e-15);
    }
}
