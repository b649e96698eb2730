use rand::Rng;

use crate::mdp::{sample_index, Trajectory};
use crate::policy::PolicySnapshot;

/// Tabular softmax policy trained by REINFORCE with a per-`(step, state)`
/// running-mean baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct PgTable {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    logits: Vec<f64>,
    baseline: Vec<f64>,
    baseline_weight: Vec<f64>,
    pub step_size: f64,
    /// Discount applied to the reward-to-go; 1 for the undiscounted objective.
    pub discount: f64,
}

pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

impl PgTable {
    pub fn new(horizon: usize, num_states: usize, num_actions: usize, step_size: f64) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            logits: vec![0.0; horizon * num_states * num_actions],
            baseline: vec![0.0; horizon * num_states],
            baseline_weight: vec![0.0; horizon * num_states],
            step_size,
            discount: 1.0,
        }
    }

    fn idx(&self, step: usize, state: usize) -> usize {
        (step * self.num_states + state) * self.num_actions
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    pub fn baseline(&self, step: usize, state: usize) -> f64 {
        self.baseline[step * self.num_states + state]
    }

    pub fn action_probs(&self, step: usize, state: usize) -> Vec<f64> {
        let start = self.idx(step, state);
        let mut out = vec![0.0; self.num_actions];
        softmax_into(&self.logits[start..start + self.num_actions], &mut out);
        out
    }

    pub fn policy(&self) -> PolicySnapshot {
        let mut probs = vec![0.0; self.logits.len()];
        for (row, out) in self
            .logits
            .chunks(self.num_actions)
            .zip(probs.chunks_mut(self.num_actions))
        {
            softmax_into(row, out);
        }
        // renormalised softmax rows always pass the distribution check
        PolicySnapshot::new(self.horizon, self.num_states, self.num_actions, probs)
            .expect("softmax rows are distributions")
    }

    pub fn act<R: Rng + ?Sized>(&self, step: usize, state: usize, rng: &mut R) -> usize {
        sample_index(&self.action_probs(step, state), rng)
    }

    /// Per-step advantage weights `G_h - b(h, s_h)` under the current baseline.
    pub fn advantages(&self, trajectory: &Trajectory) -> Vec<f64> {
        trajectory
            .returns_to_go(self.discount)
            .into_iter()
            .zip(&trajectory.steps)
            .enumerate()
            .map(|(h, (g, step))| g - self.baseline(h, step.state))
            .collect()
    }

    /// `Σ_h ∇ log π(a_h | s_h) · weight_h` with respect to the logits.
    pub fn score_gradient(&self, trajectory: &Trajectory, weights: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.logits.len()];
        for (h, (step, w)) in trajectory.steps.iter().zip(weights).enumerate() {
            let start = self.idx(h, step.state);
            let probs = self.action_probs(h, step.state);
            for (a, p) in probs.iter().enumerate() {
                let indicator = if a == step.action { 1.0 } else { 0.0 };
                grad[start + a] += w * (indicator - p);
            }
        }
        grad
    }

    /// Likelihood-weighted objective `Σ_h log π(a_h | s_h) · weight_h`;
    /// [`score_gradient`](Self::score_gradient) is its gradient.
    pub fn weighted_log_likelihood(&self, trajectory: &Trajectory, weights: &[f64]) -> f64 {
        trajectory
            .steps
            .iter()
            .zip(weights)
            .enumerate()
            .map(|(h, (step, w))| w * self.action_probs(h, step.state)[step.action].ln())
            .sum()
    }

    pub fn update(&mut self, trajectory: &Trajectory) {
        self.weighted_update(trajectory, 1.0);
    }

    /// Gradient step scaled by an importance weight. The baseline is a
    /// weighted running mean of reward-to-go using the same weight, so weight
    /// 1 is the ordinary on-policy update and weight 0 changes nothing.
    pub fn weighted_update(&mut self, trajectory: &Trajectory, weight: f64) {
        debug_assert_eq!(trajectory.len(), self.horizon);
        if weight == 0.0 {
            return;
        }
        let advantages = self.advantages(trajectory);
        if self.step_size != 0.0 {
            let grad = self.score_gradient(trajectory, &advantages);
            for (l, g) in self.logits.iter_mut().zip(grad) {
                *l += self.step_size * weight * g;
            }
        }
        let returns = trajectory.returns_to_go(self.discount);
        for (h, (g, step)) in returns.iter().zip(&trajectory.steps).enumerate() {
            let i = h * self.num_states + step.state;
            self.baseline_weight[i] += weight;
            if self.baseline_weight[i] > 0.0 {
                self.baseline[i] += weight * (g - self.baseline[i]) / self.baseline_weight[i];
            }
        }
    }
}
