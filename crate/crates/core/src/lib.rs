//! Online model selection over reinforcement-learning base agents.
//!
//! A *selector* chooses, once per episode, which of `M` evolving base agents
//! acts in a finite episodic MDP. The chosen agent learns from its own
//! trajectory; the selector only sees the (normalized) episodic return.
//!
//! Crate layout:
//!
//! - [`mdp`]: finite episodic MDPs, rollout, exact policy evaluation and
//!   finite-horizon value iteration, piecewise-constant switching schedules.
//! - [`policy`]: step-indexed stochastic policy tables.
//! - [`agents`]: tabular Q-learning, tabular REINFORCE with baseline, a
//!   synthetic agent with a prescribed regret coefficient, a seed-fragile
//!   agent, and importance-sampling helpers.
//! - [`selectors`]: D³RB, ED²RB, classic regret balancing, EXP3, Corral
//!   and UCB behind one [`selectors::Selector`] interface.
//! - [`training`]: the round protocol, run logs, CSV export, seed batches.
//! - [`metrics`]: the exact regret ledger and derived quantities.
//! - [`presets`]: named environments used by the experiment harness.

pub mod agents;
pub mod mdp;
pub mod metrics;
pub mod policy;
pub mod presets;
pub mod seed;
pub mod selectors;
pub mod training;

pub use agents::{AgentConfig, AgentError, BaseAgent};
pub use mdp::{MdpError, MdpSpec, NonstationarySchedule, RewardDist, Trajectory};
pub use metrics::{AllocationReport, RegretLedger};
pub use policy::PolicySnapshot;
pub use selectors::{Selector, SelectorConfig, SelectorError, SelectorKind};
pub use training::{RoundRecord, RunConfig, RunLog};
