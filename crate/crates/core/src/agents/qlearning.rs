use rand::Rng;

use crate::mdp::{sample_index, Trajectory};
use crate::policy::PolicySnapshot;

/// Tabular finite-horizon Q-learner with ε-greedy behaviour.
///
/// One value per `(step, state, action)`; the bootstrap target at the last
/// step is zero. Each episode is replayed backwards so a single trajectory
/// propagates value information all the way to the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
    pub step_size: f64,
    pub exploration_eps: f64,
}

impl QTable {
    pub fn new(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        step_size: f64,
        exploration_eps: f64,
        initial_value: f64,
    ) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            values: vec![initial_value; horizon * num_states * num_actions],
            step_size,
            exploration_eps,
        }
    }

    fn idx(&self, step: usize, state: usize) -> usize {
        (step * self.num_states + state) * self.num_actions
    }

    pub fn q_row(&self, step: usize, state: usize) -> &[f64] {
        let start = self.idx(step, state);
        &self.values[start..start + self.num_actions]
    }

    pub fn set(&mut self, step: usize, state: usize, action: usize, value: f64) {
        let i = self.idx(step, state) + action;
        self.values[i] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Greedy action; ties go to the lowest index.
    pub fn greedy(&self, step: usize, state: usize) -> usize {
        let row = self.q_row(step, state);
        let mut best = 0;
        for (a, q) in row.iter().enumerate().skip(1) {
            if *q > row[best] {
                best = a;
            }
        }
        best
    }

    fn action_probs(&self, step: usize, state: usize, out: &mut [f64]) {
        let explore = self.exploration_eps / self.num_actions as f64;
        out.fill(explore);
        out[self.greedy(step, state)] += 1.0 - self.exploration_eps;
    }

    pub fn policy(&self) -> PolicySnapshot {
        let mut probs = vec![0.0; self.values.len()];
        for h in 0..self.horizon {
            for s in 0..self.num_states {
                let start = self.idx(h, s);
                self.action_probs(h, s, &mut probs[start..start + self.num_actions]);
            }
        }
        PolicySnapshot::new(self.horizon, self.num_states, self.num_actions, probs)
            .expect("ε-greedy rows are distributions")
    }

    pub fn act<R: Rng + ?Sized>(&self, step: usize, state: usize, rng: &mut R) -> usize {
        let mut row = vec![0.0; self.num_actions];
        self.action_probs(step, state, &mut row);
        sample_index(&row, rng)
    }

    /// Backward TD sweep over one episode.
    pub fn update(&mut self, trajectory: &Trajectory) {
        debug_assert_eq!(trajectory.len(), self.horizon);
        if self.step_size == 0.0 {
            return;
        }
        for (h, step) in trajectory.steps.iter().enumerate().rev() {
            let bootstrap = match trajectory.steps.get(h + 1) {
                Some(next) => self
                    .q_row(h + 1, next.state)
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max),
                None => 0.0,
            };
            let i = self.idx(h, step.state) + step.action;
            let td = step.reward + bootstrap - self.values[i];
            self.values[i] += self.step_size * td;
        }
    }
}
