use rand_chacha::ChaCha8Rng;

use crate::mdp::sample_index;
use crate::seed;

use super::{AgentSnapshot, ArmStats, Selector, SelectorError, SelectorKind};

const MAX_NEWTON_ITERS: usize = 100;
const ROOT_TOL: f64 = 1e-13;

/// Log-barrier online mirror descent with per-agent increasing learning rates.
#[derive(Debug, Clone)]
pub struct Corral {
    /// Mirror-descent iterate.
    p: Vec<f64>,
    /// Sampling distribution: `p` mixed with the uniform distribution.
    pbar: Vec<f64>,
    eta: Vec<f64>,
    rho: Vec<f64>,
    beta: f64,
    gamma: f64,
    stats: Vec<ArmStats>,
    rng: ChaCha8Rng,
}

impl Corral {
    /// Defaults: `eta = √(M/T)`, `beta = e^(1/ln T)`, `floor = 1/(2TM)`.
    pub fn new(
        num_agents: usize,
        total_rounds: u64,
        eta: Option<f64>,
        beta: Option<f64>,
        floor: Option<f64>,
        seed: u64,
    ) -> Result<Self, SelectorError> {
        if num_agents == 0 {
            return Err(SelectorError::Config("need at least one agent".into()));
        }
        let m = num_agents as f64;
        let t = total_rounds.max(3) as f64;
        let eta = eta.unwrap_or_else(|| (m / t).sqrt());
        let beta = beta.unwrap_or_else(|| (1.0 / t.ln()).exp());
        let floor = floor.unwrap_or(1.0 / (2.0 * t * m));
        if !(eta.is_finite() && eta > 0.0) {
            return Err(SelectorError::Config(format!(
                "eta must be positive, got {eta}"
            )));
        }
        if !(beta.is_finite() && beta >= 1.0) {
            return Err(SelectorError::Config(format!(
                "beta must be at least 1, got {beta}"
            )));
        }
        if !(floor > 0.0 && floor * m < 1.0) {
            return Err(SelectorError::Config(format!(
                "floor must lie in (0, 1/M), got {floor}"
            )));
        }
        let uniform = vec![1.0 / m; num_agents];
        Ok(Self {
            p: uniform.clone(),
            pbar: uniform,
            eta: vec![eta; num_agents],
            rho: vec![2.0 * m; num_agents],
            beta,
            gamma: floor * m,
            stats: vec![ArmStats::new(0.0); num_agents],
            rng: seed::rng_for(seed, seed::SELECTOR_STREAM, 0),
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.pbar
    }

    pub fn iterate(&self) -> &[f64] {
        &self.p
    }

    pub fn learning_rates(&self) -> &[f64] {
        &self.eta
    }

    pub fn floor(&self) -> f64 {
        self.gamma / self.p.len() as f64
    }

    /// One mirror-descent step on loss `1 − reward` of the sampled agent.
    pub fn apply(&mut self, agent: usize, reward: f64) -> Result<(), SelectorError> {
        let loss = 1.0 - reward;
        if loss > 0.0 {
            let mut loss_hat = vec![0.0; self.p.len()];
            loss_hat[agent] = loss / self.pbar[agent];
            self.p = log_barrier_step(&self.p, &self.eta, &loss_hat)?;
        }
        let m = self.p.len() as f64;
        for (b, p) in self.pbar.iter_mut().zip(&self.p) {
            *b = (1.0 - self.gamma) * p + self.gamma / m;
        }
        for j in 0..self.p.len() {
            if 1.0 / self.pbar[j] > self.rho[j] {
                self.rho[j] = 2.0 / self.pbar[j];
                self.eta[j] *= self.beta;
            }
        }
        Ok(())
    }
}

/// Solve `1/p'_j = 1/p_j + η_j(ℓ_j − λ)` for the `λ` that makes `p'` a
/// distribution. Newton steps are safeguarded by bisection on the bracket
/// `[min ℓ, pole)`, where the sum of the `p'_j` is increasing in `λ`.
fn log_barrier_step(p: &[f64], eta: &[f64], loss: &[f64]) -> Result<Vec<f64>, SelectorError> {
    let weights = |lambda: f64| -> Vec<f64> {
        p.iter()
            .zip(eta)
            .zip(loss)
            .map(|((p, e), l)| 1.0 / p + e * (l - lambda))
            .collect()
    };
    let g = |lambda: f64| -> (f64, f64) {
        let w = weights(lambda);
        let value = w.iter().map(|w| 1.0 / w).sum::<f64>() - 1.0;
        let slope = w.iter().zip(eta).map(|(w, e)| e / (w * w)).sum::<f64>();
        (value, slope)
    };
    let mut lo = loss.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = p
        .iter()
        .zip(eta)
        .zip(loss)
        .map(|((p, e), l)| l + 1.0 / (p * e))
        .fold(f64::INFINITY, f64::min);
    let mut lambda = lo;
    for _ in 0..MAX_NEWTON_ITERS {
        let (value, slope) = g(lambda);
        if !value.is_finite() {
            break;
        }
        if value.abs() <= ROOT_TOL {
            let w = weights(lambda);
            let total: f64 = w.iter().map(|w| 1.0 / w).sum();
            return Ok(w.iter().map(|w| 1.0 / w / total).collect());
        }
        if value < 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let newton = lambda - value / slope;
        lambda = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(SelectorError::NumericalFailure(format!(
        "no root after {MAX_NEWTON_ITERS} iterations; p = {p:?}, eta = {eta:?}, loss = {loss:?}, bracket = [{lo}, {hi}]"
    )))
}

impl Selector for Corral {
    fn kind(&self) -> SelectorKind {
        SelectorKind::Corral
    }

    fn num_agents(&self) -> usize {
        self.p.len()
    }

    fn sample(&mut self) -> usize {
        sample_index(&self.pbar, &mut self.rng)
    }

    fn update(&mut self, agent: usize, reward: f64, _round: u64) -> Result<(), SelectorError> {
        self.stats[agent].record(reward);
        self.apply(agent, reward)
    }

    fn stats(&self) -> Vec<ArmStats> {
        self.stats.clone()
    }

    fn snapshot(&self) -> Vec<AgentSnapshot> {
        self.stats
            .iter()
            .zip(&self.pbar)
            .map(|(s, p)| AgentSnapshot {
                n: s.n,
                u: s.u,
                d_hat: None,
                potential: Some(*p),
            })
            .collect()
    }
}
