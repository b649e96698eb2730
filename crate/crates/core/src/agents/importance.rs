//! Importance weights for reusing one policy's trajectory to evaluate or
//! train another. Dynamics and reward likelihoods are identical under both
//! policies and cancel, leaving only the action-probability ratios.

use crate::mdp::Trajectory;
use crate::policy::PolicySnapshot;

use super::AgentError;

/// Per-step ratios `π_target(a_h | s_h) / π_behavior(a_h | s_h)`.
pub fn is_step_ratios(
    trajectory: &Trajectory,
    behavior: &PolicySnapshot,
    target: &PolicySnapshot,
) -> Result<Vec<f64>, AgentError> {
    if !behavior.same_shape(target) || trajectory.len() != behavior.horizon() {
        return Err(AgentError::ShapeMismatch);
    }
    trajectory
        .steps
        .iter()
        .enumerate()
        .map(|(h, step)| {
            let b = behavior.prob(h, step.state, step.action);
            if b <= 0.0 {
                return Err(AgentError::UndefinedRatio {
                    step: h,
                    state: step.state,
                    action: step.action,
                });
            }
            Ok(target.prob(h, step.state, step.action) / b)
        })
        .collect()
}

/// Trajectory likelihood ratio `Π_h is_step_ratio_h`.
pub fn is_trajectory_ratio(
    trajectory: &Trajectory,
    behavior: &PolicySnapshot,
    target: &PolicySnapshot,
) -> Result<f64, AgentError> {
    Ok(is_step_ratios(trajectory, behavior, target)?
        .into_iter()
        .product())
}

/// `Σ_h γ^(h−1) r_h` with `h` counted from 1.
pub fn discounted_return(trajectory: &Trajectory, gamma: f64) -> f64 {
    let mut weight = 1.0;
    let mut total = 0.0;
    for step in &trajectory.steps {
        total += weight * step.reward;
        weight *= gamma;
    }
    total
}

/// Unbiased estimate of the target policy's (discounted) return from one
/// behaviour trajectory.
pub fn is_return_estimate(
    trajectory: &Trajectory,
    behavior: &PolicySnapshot,
    target: &PolicySnapshot,
    gamma: f64,
) -> Result<f64, AgentError> {
    Ok(is_trajectory_ratio(trajectory, behavior, target)? * discounted_return(trajectory, gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Step;

    fn traj() -> Trajectory {
        Trajectory::from_steps(vec![
            Step {
                state: 0,
                action: 1,
                reward: 1.0,
            },
            Step {
                state: 1,
                action: 0,
                reward: 0.5,
            },
        ])
    }

    #[test]
    fn identical_policies_have_unit_ratio() {
        let p = PolicySnapshot::new(2, 2, 2, vec![0.3, 0.7, 0.6, 0.4, 0.1, 0.9, 0.5, 0.5]).unwrap();
        assert_eq!(is_trajectory_ratio(&traj(), &p, &p).unwrap(), 1.0);
    }

    #[test]
    fn disagreeing_deterministic_target_gives_zero() {
        let behavior = PolicySnapshot::uniform(2, 2, 2);
        let target = PolicySnapshot::deterministic(2, 2, 2, &[1, 1, 1, 1]).unwrap();
        // step 2 takes action 0, which the target never plays
        assert_eq!(
            is_trajectory_ratio(&traj(), &behavior, &target).unwrap(),
            0.0
        );
    }

    #[test]
    fn zero_behavior_probability_is_an_error() {
        let behavior = PolicySnapshot::deterministic(2, 2, 2, &[0, 0, 0, 0]).unwrap();
        let target = PolicySnapshot::uniform(2, 2, 2);
        assert!(matches!(
            is_trajectory_ratio(&traj(), &behavior, &target),
            Err(AgentError::UndefinedRatio { step: 0, .. })
        ));
    }

    #[test]
    fn discount_weights_start_at_one() {
        assert_eq!(discounted_return(&traj(), 1.0), 1.5);
        assert_eq!(discounted_return(&traj(), 0.5), 1.25);
    }
}
