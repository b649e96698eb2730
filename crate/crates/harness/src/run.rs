//! `modsel run`: execute every selector of an experiment over its seeds and
//! write the artifacts.
//!
//! Layout of the output directory:
//!
//! ```text
//! manifest.json              what was run, with the resolved config
//! <selector>/seed_<s>.csv    per-round log of one run
//! <selector>/summary.json    batch summary over seeds
//! solo/agent_<i>/...         the same for each agent trained alone
//! allocation.json            realized against predicted compute shares
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use modsel::mdp::optimal_value;
use modsel::metrics::{allocation_report, AllocationReport};
use modsel::selectors::BalancingParams;
use modsel::training::{self, RunConfig, RunLog, RunSummary, TrainingError, SCHEMA_VERSION};
use modsel::SelectorConfig;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{bundled, ExperimentConfig};
use crate::{write_json, HarnessError};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces the config's master seed.
    pub seed: Option<u64>,
    /// Replaces the config's output directory.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseInfo {
    pub start: u64,
    pub optimal_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub name: String,
    pub total_rounds: u64,
    pub seeds: Vec<u64>,
    pub window: usize,
    pub selectors: Vec<String>,
    /// Present when solo baselines were run, one label per agent.
    pub solo: Vec<String>,
    pub num_agents: usize,
    pub phases: Vec<PhaseInfo>,
    /// `H·(r_hi − r_lo)` of the first phase.
    pub return_scale: f64,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAllocation {
    pub master_seed: u64,
    pub report: AllocationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationFile {
    pub schema_version: u32,
    pub selectors: Vec<(String, Vec<SeedAllocation>)>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub failures: Vec<String>,
}

/// Read an experiment from a file, falling back to the bundled presets.
pub fn load_config(arg: &str) -> Result<ExperimentConfig, HarnessError> {
    let path = Path::new(arg);
    if path.exists() {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        return ExperimentConfig::from_toml(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())));
    }
    bundled(arg).ok_or_else(|| {
        let names: Vec<&str> = crate::config::BUNDLED.iter().map(|(n, _)| *n).collect();
        HarnessError::Config(format!(
            "{arg}: no such file or bundled experiment (bundled: {})",
            names.join(", ")
        ))
    })
}

fn create_dir(path: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(path).map_err(|e| HarnessError::io(path, e))
}

fn write_csv(path: &Path, log: &RunLog) -> Result<(), HarnessError> {
    let file = fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    log.write_csv(std::io::BufWriter::new(file))
        .map_err(|e| HarnessError::Corrupt {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

struct SeedResult {
    seed: u64,
    summary: Option<RunSummary>,
    allocation: Option<AllocationReport>,
    failure: Option<String>,
}

/// Run one batch, writing each log as soon as it finishes so only summaries
/// stay in memory.
fn run_seeds(
    base: &RunConfig,
    seeds: &[u64],
    dir: &Path,
    window: usize,
) -> Result<Vec<SeedResult>, HarnessError> {
    create_dir(dir)?;
    seeds
        .par_iter()
        .map(|&seed| {
            let mut config = base.clone();
            config.master_seed = seed;
            let csv = dir.join(format!("seed_{seed}.csv"));
            match training::run(&config) {
                Ok(log) => {
                    write_csv(&csv, &log)?;
                    Ok(SeedResult {
                        seed,
                        summary: Some(log.summary(window)),
                        allocation: allocation_report(&log.ledger).ok(),
                        failure: None,
                    })
                }
                Err(err) => {
                    if let TrainingError::Aborted { partial, .. } = &err {
                        write_csv(&dir.join(format!("seed_{seed}.partial.csv")), partial)?;
                    }
                    log::error!("{} seed {seed}: {err}", dir.display());
                    Ok(SeedResult {
                        seed,
                        summary: None,
                        allocation: None,
                        failure: Some(err.to_string()),
                    })
                }
            }
        })
        .collect()
}

fn write_summary(label: &str, results: &[SeedResult], dir: &Path) -> Result<(), HarnessError> {
    let runs: Vec<RunSummary> = results.iter().filter_map(|r| r.summary.clone()).collect();
    let failures = results
        .iter()
        .filter_map(|r| {
            r.failure.as_ref().map(|e| training::RunFailure {
                master_seed: r.seed,
                error: e.clone(),
            })
        })
        .collect();
    let batch = training::summarize_runs(label, results.len() as u64, runs, failures);
    write_json(&dir.join("summary.json"), &batch)
}

pub fn cmd_run(
    config: &ExperimentConfig,
    options: &RunOptions,
) -> Result<RunOutcome, HarnessError> {
    let mut config = config.clone();
    if let Some(seed) = options.seed {
        config.master_seed = seed;
    }
    config.validate()?;
    let out = options
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&config.name));
    create_dir(&out)?;
    let seeds: Vec<u64> = (0..config.num_seeds)
        .map(|k| config.master_seed.wrapping_add(k))
        .collect();

    let labels = config.selector_labels();
    let mut failures = Vec::new();
    let mut allocations = Vec::new();
    for (label, selector) in labels.iter().zip(&config.selectors) {
        log::debug!("{}: {label} over {} seeds", config.name, seeds.len());
        let dir = out.join(label);
        let results = run_seeds(
            &config.run_config(selector.clone())?,
            &seeds,
            &dir,
            config.window,
        )?;
        write_summary(label, &results, &dir)?;
        failures.extend(results.iter().filter_map(|r| {
            r.failure
                .as_ref()
                .map(|e| format!("{label} seed {}: {e}", r.seed))
        }));
        let per_seed = results
            .iter()
            .filter_map(|r| {
                r.allocation.clone().map(|report| SeedAllocation {
                    master_seed: r.seed,
                    report,
                })
            })
            .collect();
        allocations.push((label.clone(), per_seed));
    }

    let mut solo = Vec::new();
    if config.solo_baselines {
        for (i, agent) in config.agents.iter().enumerate() {
            let label = format!("agent_{i}");
            log::debug!("{}: {label} alone over {} seeds", config.name, seeds.len());
            let mut base = config.run_config(SelectorConfig::D3rb(BalancingParams::default()))?;
            base.agents = vec![agent.clone()];
            let dir = out.join("solo").join(&label);
            let results = run_seeds(&base, &seeds, &dir, config.window)?;
            write_summary(&label, &results, &dir)?;
            failures.extend(results.iter().filter_map(|r| {
                r.failure
                    .as_ref()
                    .map(|e| format!("solo {label} seed {}: {e}", r.seed))
            }));
            solo.push(label);
        }
    }

    write_json(
        &out.join("allocation.json"),
        &AllocationFile {
            schema_version: SCHEMA_VERSION,
            selectors: allocations,
        },
    )?;

    let schedule = config.schedule()?;
    let first = schedule.first();
    let (lo, hi) = first.reward_bounds();
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        name: config.name.clone(),
        total_rounds: config.total_rounds,
        seeds,
        window: config.window,
        selectors: labels,
        solo,
        num_agents: config.agents.len(),
        phases: schedule
            .phases()
            .iter()
            .map(|(start, mdp)| PhaseInfo {
                start: *start,
                optimal_value: optimal_value(mdp).0,
            })
            .collect(),
        return_scale: first.horizon() as f64 * (hi - lo),
        config,
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    Ok(RunOutcome {
        out_dir: out,
        failures,
    })
}
