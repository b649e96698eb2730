//! The round protocol: sample an agent, play one episode with it, let it
//! learn, report the normalized return to the selector, log the round.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{shared_update, AgentConfig, AgentError, BaseAgent};
use crate::mdp::{optimal_value, MdpError, NonstationarySchedule};
use crate::metrics::{allocation_report, AllocationReport, RegretLedger};
use crate::seed::{self, RunRng};
use crate::selectors::{
    normalize_return, AgentSnapshot, BalancingParams, GuardedSelector, SelectorConfig,
    SelectorError,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Largest policy table (entries) for which the ledger evaluates every
/// deployed policy exactly when `exact_ledger` is left on auto.
pub const EXACT_LEDGER_MAX_ENTRIES: usize = 10_000;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Selector(#[from] SelectorError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("run aborted at round {round}: {source}")]
    Aborted {
        round: u64,
        source: Box<TrainingError>,
        partial: Box<RunLog>,
    },
}

fn default_log_every() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub total_rounds: u64,
    pub selector: SelectorConfig,
    pub agents: Vec<AgentConfig>,
    pub environment: NonstationarySchedule,
    pub master_seed: u64,
    #[serde(default)]
    pub is_sharing: bool,
    /// CSV row stride; the in-memory log keeps every round.
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    /// Evaluate every deployed policy exactly. `None` decides from table size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_ledger: Option<bool>,
}

impl RunConfig {
    pub fn new(
        selector: SelectorConfig,
        agents: Vec<AgentConfig>,
        environment: NonstationarySchedule,
        total_rounds: u64,
        master_seed: u64,
    ) -> Self {
        Self {
            total_rounds,
            selector,
            agents,
            environment,
            master_seed,
            is_sharing: false,
            log_every: 1,
            exact_ledger: None,
        }
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn validate(&self) -> Result<(), TrainingError> {
        if self.agents.is_empty() {
            return Err(TrainingError::Config("agents: the pool is empty".into()));
        }
        if self.total_rounds < self.agents.len() as u64 {
            return Err(TrainingError::Config(format!(
                "total_rounds: {} rounds cannot pull each of {} agents once",
                self.total_rounds,
                self.agents.len()
            )));
        }
        if self.log_every == 0 {
            return Err(TrainingError::Config("log_every must be at least 1".into()));
        }
        for (i, agent) in self.agents.iter().enumerate() {
            agent
                .validate()
                .map_err(|e| TrainingError::Config(format!("agents[{i}]: {e}")))?;
        }
        let (lo, hi) = self.environment.first().reward_bounds();
        if hi <= lo {
            return Err(SelectorError::DegenerateEnvironment.into());
        }
        Ok(())
    }
}

/// One round of the protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: u64,
    pub agent: usize,
    pub raw_return: f64,
    pub normalized_return: f64,
    /// Selector state after the update.
    pub agents: Vec<AgentSnapshot>,
    /// Cumulative exact expected return per agent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ubar: Option<Vec<f64>>,
    /// Ledger regret coefficient per agent in normalized units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtrue: Option<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub selector: String,
    pub master_seed: u64,
    pub total_rounds: u64,
    pub num_agents: usize,
    pub log_every: u64,
    pub records: Vec<RoundRecord>,
    pub ledger: RegretLedger,
    /// Which agents drew a broken seed.
    pub broken: Vec<bool>,
}

impl RunLog {
    pub fn rounds(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn selections(&self) -> impl Iterator<Item = usize> + '_ {
        self.records.iter().map(|r| r.agent)
    }

    /// Pull fraction of every agent at the end of the log.
    pub fn fractions(&self) -> Vec<f64> {
        let mut counts = vec![0u64; self.num_agents];
        for i in self.selections() {
            counts[i] += 1;
        }
        let t = self.records.len().max(1) as f64;
        counts.into_iter().map(|c| c as f64 / t).collect()
    }

    /// Selection fraction of `agent` among rounds `from..=to` (1-based).
    pub fn fraction_between(&self, agent: usize, from: u64, to: u64) -> f64 {
        let window: Vec<_> = self
            .records
            .iter()
            .filter(|r| r.t >= from && r.t <= to)
            .collect();
        if window.is_empty() {
            return 0.0;
        }
        window.iter().filter(|r| r.agent == agent).count() as f64 / window.len() as f64
    }

    fn tail(&self, window: usize) -> &[RoundRecord] {
        &self.records[self.records.len().saturating_sub(window)..]
    }

    /// Mean raw return over the last `window` rounds.
    pub fn window_mean_return(&self, window: usize) -> f64 {
        mean(self.tail(window).iter().map(|r| r.raw_return))
    }

    pub fn window_mean_normalized(&self, window: usize) -> f64 {
        mean(self.tail(window).iter().map(|r| r.normalized_return))
    }

    pub fn summary(&self, window: usize) -> RunSummary {
        let exact = self.ledger.is_exact();
        RunSummary {
            schema_version: SCHEMA_VERSION,
            selector: self.selector.clone(),
            master_seed: self.master_seed,
            total_rounds: self.total_rounds,
            num_agents: self.num_agents,
            window: window.min(self.records.len()),
            window_mean_return: self.window_mean_return(window),
            window_mean_normalized: self.window_mean_normalized(window),
            fractions: self.fractions(),
            pulls: (0..self.num_agents).map(|i| self.ledger.pulls(i)).collect(),
            total_regret: exact.then(|| self.ledger.total_regret().ok()).flatten(),
            total_normalized_regret: exact
                .then(|| self.ledger.total_normalized_regret().ok())
                .flatten(),
            d_star: exact.then(|| self.ledger.d_star().ok()).flatten(),
            allocation: allocation_report(&self.ledger).ok(),
            broken: self.broken.clone(),
        }
    }

    /// Write the per-round CSV: `t, i_t, R_raw, R_norm`, then per agent
    /// `n_i, u_i, dhat_i, phi_i`, then `ubar_i, dtrue_i` when the ledger is
    /// exact. Empty cells mean "not applicable" or "undefined yet".
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let exact = self.ledger.is_exact();
        let mut header = vec![
            "t".to_string(),
            "i_t".into(),
            "R_raw".into(),
            "R_norm".into(),
        ];
        for i in 0..self.num_agents {
            for col in ["n", "u", "dhat", "phi"] {
                header.push(format!("{col}_{i}"));
            }
        }
        if exact {
            for i in 0..self.num_agents {
                header.push(format!("ubar_{i}"));
                header.push(format!("dtrue_{i}"));
            }
        }
        w.write_record(&header)?;
        let last = self.records.len() as u64;
        for r in &self.records {
            if r.t % self.log_every != 0 && r.t != last {
                continue;
            }
            let mut row = vec![
                r.t.to_string(),
                r.agent.to_string(),
                r.raw_return.to_string(),
                r.normalized_return.to_string(),
            ];
            for s in &r.agents {
                row.push(s.n.to_string());
                row.push(s.u.to_string());
                row.push(opt(s.d_hat));
                row.push(opt(s.potential));
            }
            if exact {
                let ubar = r.ubar.as_deref().unwrap_or(&[]);
                let dtrue = r.dtrue.as_deref().unwrap_or(&[]);
                for i in 0..self.num_agents {
                    row.push(ubar.get(i).map(|v| v.to_string()).unwrap_or_default());
                    row.push(opt(dtrue.get(i).copied().flatten()));
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub selector: String,
    pub master_seed: u64,
    pub total_rounds: u64,
    pub num_agents: usize,
    pub window: usize,
    pub window_mean_return: f64,
    pub window_mean_normalized: f64,
    pub fractions: Vec<f64>,
    pub pulls: Vec<u64>,
    pub total_regret: Option<f64>,
    pub total_normalized_regret: Option<f64>,
    pub d_star: Option<f64>,
    pub allocation: Option<AllocationReport>,
    pub broken: Vec<bool>,
}

/// Execute one run. Failures after setup return [`TrainingError::Aborted`]
/// carrying the log up to the failing round.
pub fn run(config: &RunConfig) -> Result<RunLog, TrainingError> {
    config.validate()?;
    let m = config.num_agents();
    let schedule = &config.environment;
    let first = schedule.first();
    let d_min = config.selector.d_min();

    let mut agents = config
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| a.build(first, seed::agent_seed(config.master_seed, i), d_min))
        .collect::<Result<Vec<BaseAgent>, _>>()?;
    let mut rngs: Vec<RunRng> = (0..m)
        .map(|i| {
            seed::rng_for(
                seed::agent_seed(config.master_seed, i),
                seed::AGENT_STREAM,
                0,
            )
        })
        .collect();
    let selector_seed = seed::derive(config.master_seed, seed::SELECTOR_STREAM, 0);
    let mut selector = GuardedSelector::new(config.selector.build(
        m,
        config.total_rounds,
        selector_seed,
    )?);

    let phase_values: Vec<f64> = schedule
        .phases()
        .iter()
        .map(|(_, mdp)| optimal_value(mdp).0)
        .collect();
    let exact = config.exact_ledger.unwrap_or_else(|| {
        agents
            .iter()
            .all(|a| a.table_size() <= EXACT_LEDGER_MAX_ENTRIES)
    });
    let (lo, hi) = first.reward_bounds();
    let scale = first.horizon() as f64 * (hi - lo);

    let mut log = RunLog {
        selector: config.selector.kind().name().to_string(),
        master_seed: config.master_seed,
        total_rounds: config.total_rounds,
        num_agents: m,
        log_every: config.log_every,
        records: Vec::with_capacity(config.total_rounds as usize),
        ledger: RegretLedger::new(m, d_min, scale),
        broken: agents.iter().map(BaseAgent::is_broken).collect(),
    };

    for t in 1..=config.total_rounds {
        if let Err(e) = play_round(
            t,
            config,
            &mut agents,
            &mut rngs,
            &mut selector,
            &phase_values,
            exact,
            &mut log,
        ) {
            return Err(TrainingError::Aborted {
                round: t,
                source: Box::new(e),
                partial: Box::new(log),
            });
        }
    }
    Ok(log)
}

#[allow(clippy::too_many_arguments)]
fn play_round(
    t: u64,
    config: &RunConfig,
    agents: &mut [BaseAgent],
    rngs: &mut [RunRng],
    selector: &mut GuardedSelector,
    phase_values: &[f64],
    exact: bool,
    log: &mut RunLog,
) -> Result<(), TrainingError> {
    let schedule = &config.environment;
    let phase = schedule.phase_index(t);
    let mdp = schedule.active_mdp(t);

    let i = selector.sample()?;
    let behavior = agents[i].policy();
    let expected = if exact {
        Some(agents[i].expected_return(mdp, behavior.as_ref())?)
    } else {
        None
    };
    let trajectory = agents[i].play_episode(mdp, behavior.as_ref(), &mut rngs[i])?;
    agents[i].learn(&trajectory);
    if config.is_sharing {
        if let Some(behavior) = &behavior {
            shared_update(agents, i, &trajectory, behavior, true);
        }
    }

    let raw = trajectory.episodic_return;
    let normalized = normalize_return(raw, mdp.horizon(), mdp.reward_bounds())?;
    selector.update(i, normalized, t)?;

    match expected {
        Some(e) => log.ledger.record(i, phase_values[phase], e),
        None => log.ledger.record_inexact(i),
    }
    let ledger = &log.ledger;
    let (ubar, dtrue) = if ledger.is_exact() {
        (
            Some(
                (0..agents.len())
                    .map(|j| ledger.ubar(j).unwrap_or(0.0))
                    .collect(),
            ),
            Some(
                (0..agents.len())
                    .map(|j| ledger.normalized_coefficient(j).ok())
                    .collect(),
            ),
        )
    } else {
        (None, None)
    };
    log.records.push(RoundRecord {
        t,
        agent: i,
        raw_return: raw,
        normalized_return: normalized,
        agents: selector.inner().snapshot(),
        ubar,
        dtrue,
    });
    Ok(())
}

/// A single agent trained alone: a run whose selector has only one choice.
pub fn run_solo(
    agent: AgentConfig,
    environment: NonstationarySchedule,
    total_rounds: u64,
    master_seed: u64,
) -> Result<RunLog, TrainingError> {
    run(&RunConfig::new(
        SelectorConfig::D3rb(BalancingParams::default()),
        vec![agent],
        environment,
        total_rounds,
        master_seed,
    ))
}

/// Runs for seeds `master_seed + 0 .. master_seed + num_seeds`, in seed
/// order, executed in parallel.
pub fn run_batch_logs(
    config: &RunConfig,
    num_seeds: u64,
) -> Vec<(u64, Result<RunLog, TrainingError>)> {
    (0..num_seeds)
        .into_par_iter()
        .map(|k| {
            let seed = config.master_seed.wrapping_add(k);
            let mut c = config.clone();
            c.master_seed = seed;
            (seed, run(&c))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub master_seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub schema_version: u32,
    pub selector: String,
    pub num_seeds: u64,
    pub runs: Vec<RunSummary>,
    pub failures: Vec<RunFailure>,
    pub mean_window_return: f64,
    pub std_window_return: f64,
    pub mean_window_normalized: f64,
    pub mean_fractions: Vec<f64>,
}

pub fn summarize_batch(
    selector: &str,
    results: &[(u64, Result<RunLog, TrainingError>)],
    window: usize,
) -> BatchSummary {
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (seed, result) in results {
        match result {
            Ok(log) => runs.push(log.summary(window)),
            Err(e) => failures.push(RunFailure {
                master_seed: *seed,
                error: e.to_string(),
            }),
        }
    }
    summarize_runs(selector, results.len() as u64, runs, failures)
}

/// Reduce per-seed summaries, for callers that drop logs as they go.
pub fn summarize_runs(
    selector: &str,
    num_seeds: u64,
    runs: Vec<RunSummary>,
    failures: Vec<RunFailure>,
) -> BatchSummary {
    let returns: Vec<f64> = runs.iter().map(|r| r.window_mean_return).collect();
    let mean_return = mean(returns.iter().copied());
    let std_return = if returns.len() > 1 {
        let var = returns
            .iter()
            .map(|x| (x - mean_return).powi(2))
            .sum::<f64>()
            / (returns.len() - 1) as f64;
        var.sqrt()
    } else {
        0.0
    };
    let m = runs.first().map_or(0, |r| r.fractions.len());
    let mean_fractions = (0..m)
        .map(|i| mean(runs.iter().map(|r| r.fractions[i])))
        .collect();
    BatchSummary {
        schema_version: SCHEMA_VERSION,
        selector: selector.to_string(),
        num_seeds,
        mean_window_normalized: mean(runs.iter().map(|r| r.window_mean_normalized)),
        runs,
        failures,
        mean_window_return: mean_return,
        std_window_return: std_return,
        mean_fractions,
    }
}

/// Batch of runs reduced to its summary.
pub fn run_batch(config: &RunConfig, num_seeds: u64, window: usize) -> BatchSummary {
    let results = run_batch_logs(config, num_seeds);
    summarize_batch(config.selector.kind().name(), &results, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::selectors::SelectorKind;

    fn q(step_size: f64) -> AgentConfig {
        AgentConfig::QLearning {
            step_size,
            exploration_eps: 0.1,
            initial_value: 0.0,
        }
    }

    fn config(kind: SelectorKind, agents: Vec<AgentConfig>, t: u64) -> RunConfig {
        RunConfig::new(
            SelectorConfig::default_for(kind),
            agents,
            presets::chain(4, 5, 0.0).unwrap().into(),
            t,
            11,
        )
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(run(&config(SelectorKind::D3rb, vec![], 10)).is_err());
        assert!(run(&config(SelectorKind::D3rb, vec![q(0.1), q(0.2)], 1)).is_err());
    }

    #[test]
    fn first_rounds_are_round_robin() {
        let log = run(&config(SelectorKind::D3rb, vec![q(0.1), q(0.2), q(0.3)], 3)).unwrap();
        assert_eq!(log.selections().collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn final_record_accounts_for_every_round() {
        let log = run(&config(SelectorKind::Ucb, vec![q(0.1), q(0.5)], 200)).unwrap();
        let last = log.records.last().unwrap();
        assert_eq!(last.agents.iter().map(|s| s.n).sum::<u64>(), 200);
        for i in 0..2 {
            let u: f64 = log
                .records
                .iter()
                .filter(|r| r.agent == i)
                .map(|r| r.normalized_return)
                .sum();
            assert!((u - last.agents[i].u).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_respects_log_every() {
        let mut c = config(SelectorKind::D3rb, vec![q(0.1), q(0.5)], 25);
        c.log_every = 10;
        let csv = run(&c).unwrap().csv_string();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("t,i_t,R_raw,R_norm,n_0,u_0,dhat_0,phi_0"));
        assert!(lines[0].ends_with("ubar_1,dtrue_1"));
        assert!(lines[3].starts_with("25,"));
    }

    #[test]
    fn batch_of_one_matches_single_run() {
        let c = config(SelectorKind::D3rb, vec![q(0.1), q(0.5)], 50);
        let batch = run_batch(&c, 1, 10);
        assert_eq!(batch.runs.len(), 1);
        assert_eq!(batch.runs[0], run(&c).unwrap().summary(10));
        assert_eq!(batch.std_window_return, 0.0);
    }
}
