//! `modsel selfcheck`: structural invariants that must hold on every run,
//! checked on the D³RB runs of criteria 3 to 5 plus fuzzed selector inputs.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use modsel::seed::rng_for;
use modsel::selectors::{misspec_test, ArmStats, BonusParams, Corral, Exp3, Selector};
use modsel::training::RunLog;
use modsel_oracles::{shadow_misspec_test, Tally};
use rand::Rng;

use crate::criteria::d3rb_logs;
use crate::run::{cmd_run, RunOptions};
use crate::{bundled, HarnessError};

pub const FUZZ_UPDATES: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for InvariantResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "ok" } else { "FAILED" };
        write!(f, "{verdict:>6}  {}: {}", self.name, self.detail)
    }
}

fn result(name: &'static str, failure: Option<String>, ok_detail: String) -> InvariantResult {
    match failure {
        None => InvariantResult {
            name,
            passed: true,
            detail: ok_detail,
        },
        Some(detail) => InvariantResult {
            name,
            passed: false,
            detail,
        },
    }
}

/// `max φ_i / min φ_j ≤ 3` over pulled agents after every round.
pub fn balance(logs: &[&RunLog]) -> InvariantResult {
    let mut worst = 1.0f64;
    let mut rounds = 0u64;
    for log in logs {
        for r in &log.records {
            let phis = r
                .agents
                .iter()
                .filter(|a| a.n >= 1)
                .filter_map(|a| a.potential);
            let (lo, hi) = phis.fold((f64::INFINITY, 0.0f64), |(lo, hi), p| {
                (lo.min(p), hi.max(p))
            });
            if hi > 0.0 {
                worst = worst.max(hi / lo);
            }
            if worst > 3.0 + 1e-9 {
                return result(
                    "balancing factor 3",
                    Some(format!(
                        "seed {} round {}: ratio {worst}",
                        log.master_seed, r.t
                    )),
                    String::new(),
                );
            }
            rounds += 1;
        }
    }
    result(
        "balancing factor 3",
        None,
        format!("{rounds} rounds, worst ratio {worst:.3}"),
    )
}

/// Every `d̂` equals `d_min·2^k` for some integer `k ≥ 0`.
pub fn lattice(logs: &[&RunLog]) -> InvariantResult {
    let mut largest = 0i32;
    for log in logs {
        let d_min = log.ledger.d_min();
        for r in &log.records {
            for (i, a) in r.agents.iter().enumerate() {
                let Some(d) = a.d_hat else {
                    return result(
                        "doubling lattice",
                        Some(format!("agent {i} has no estimate")),
                        String::new(),
                    );
                };
                let k = (d / d_min).log2();
                if k < -1e-12 || (k - k.round()).abs() > 1e-9 {
                    return result(
                        "doubling lattice",
                        Some(format!(
                            "seed {} round {} agent {i}: d̂ = {d}",
                            log.master_seed, r.t
                        )),
                        String::new(),
                    );
                }
                largest = largest.max(k.round() as i32);
            }
        }
    }
    result(
        "doubling lattice",
        None,
        format!("largest exponent {largest}"),
    )
}

/// `d̂_t^i ≤ 2·max_{s ≤ t} d_s^i`, with the running max starting at `d_min`.
pub fn overshoot(logs: &[&RunLog]) -> InvariantResult {
    let mut checked = 0u64;
    for log in logs {
        let m = log.num_agents;
        let mut worst = vec![log.ledger.d_min(); m];
        for r in &log.records {
            let Some(dtrue) = &r.dtrue else {
                return result(
                    "estimate overshoot at most 2x",
                    Some(format!("seed {} has no exact ledger", log.master_seed)),
                    String::new(),
                );
            };
            for i in 0..m {
                if let Some(d) = dtrue[i] {
                    worst[i] = worst[i].max(d);
                }
                let d_hat = r.agents[i].d_hat.unwrap_or(f64::NAN);
                if d_hat.is_nan() || d_hat > 2.0 * worst[i] + 1e-12 {
                    return result(
                        "estimate overshoot at most 2x",
                        Some(format!(
                            "seed {} round {} agent {i}: d̂ = {d_hat}, max d = {}",
                            log.master_seed, r.t, worst[i]
                        )),
                        String::new(),
                    );
                }
                checked += 1;
            }
        }
    }
    result(
        "estimate overshoot at most 2x",
        None,
        format!("{checked} checks"),
    )
}

/// EXP3 and Corral distributions stay on the simplex, Corral above its floor.
pub fn simplex() -> InvariantResult {
    let name = "EXP3 and Corral simplex";
    let mut rng = rng_for(7, 0, 0);
    let mut done = 0;
    while done < FUZZ_UPDATES {
        let m = rng.random_range(1..8);
        let seed: u64 = rng.random();
        let eta = rng.random_range(0.001..1.0);
        let mut exp3 = Exp3::new(m, 1000, Some(eta), seed).expect("valid parameters");
        let mut corral = Corral::new(m, 1000, None, None, None, seed).expect("valid parameters");
        for t in 1..=1000u64 {
            let i = exp3.sample();
            if let Err(e) = exp3.update(i, rng.random(), t) {
                return result(name, Some(format!("EXP3 update: {e}")), String::new());
            }
            let p = exp3.probs();
            if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9
                || p.iter().any(|x| x.is_nan() || *x < 0.0)
            {
                return result(
                    name,
                    Some(format!("EXP3 left the simplex: {p:?}")),
                    String::new(),
                );
            }
            let j = corral.sample();
            if let Err(e) = corral.update(j, rng.random(), t) {
                return result(name, Some(format!("Corral update: {e}")), String::new());
            }
            let q = corral.probs();
            if (q.iter().sum::<f64>() - 1.0).abs() > 1e-9
                || q.iter().any(|x| *x < corral.floor() - 1e-15)
            {
                return result(
                    name,
                    Some(format!("Corral left the floored simplex: {q:?}")),
                    String::new(),
                );
            }
            done += 1;
        }
    }
    result(name, None, format!("{done} updates each"))
}

/// The production misspecification test agrees with the shadow one.
pub fn shadow_agreement() -> InvariantResult {
    let name = "misspecification test matches shadow";
    let mut rng = rng_for(99, 0, 0);
    let mut fired = 0usize;
    for _ in 0..FUZZ_UPDATES {
        let m = rng.random_range(1..6);
        let tallies: Vec<Tally> = (0..m)
            .map(|_| {
                let pulls = if rng.random_bool(0.1) {
                    0
                } else {
                    rng.random_range(1..2000)
                };
                Tally {
                    pulls,
                    reward_sum: rng.random::<f64>() * pulls as f64,
                    coefficient: 0.01 * 2f64.powi(rng.random_range(0..8)),
                }
            })
            .collect();
        let c = rng.random_range(0.01..2.0);
        let delta = rng.random_range(0.001..0.5);
        let params = BonusParams {
            c,
            delta,
            num_agents: m,
            d_min: 0.01,
        };
        let stats: Vec<ArmStats> = tallies
            .iter()
            .map(|t| ArmStats {
                n: t.pulls,
                u: t.reward_sum,
                d_hat: t.coefficient,
                phi: t.coefficient * (t.pulls as f64).sqrt(),
            })
            .collect();
        for (i, expected) in shadow_misspec_test(&tallies, c, delta)
            .into_iter()
            .enumerate()
        {
            if misspec_test(&stats, i, &params) != expected {
                return result(
                    name,
                    Some(format!("disagree on {tallies:?}, c = {c}, δ = {delta}")),
                    String::new(),
                );
            }
            fired += expected as usize;
        }
    }
    result(
        name,
        None,
        format!("{FUZZ_UPDATES} inputs, {fired} triggered"),
    )
}

fn read_tree(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            read_tree(root, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .expect("inside root")
                .display()
                .to_string();
            out.insert(rel, fs::read(&path)?);
        }
    }
    Ok(())
}

/// Two executions of a small experiment write byte-identical artifacts.
pub fn replay() -> InvariantResult {
    let name = "byte-identical replays";
    let mut config = bundled("architecture-analogue").expect("bundled preset exists");
    config.total_rounds = 300;
    config.num_seeds = 2;
    config.log_every = 1;
    let attempt = || -> Result<Vec<BTreeMap<String, Vec<u8>>>, String> {
        let mut trees = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let options = RunOptions {
                seed: None,
                out: Some(dir.path().to_path_buf()),
            };
            let outcome = cmd_run(&config, &options).map_err(|e| e.to_string())?;
            if !outcome.failures.is_empty() {
                return Err(outcome.failures.join("; "));
            }
            let mut tree = BTreeMap::new();
            read_tree(dir.path(), dir.path(), &mut tree).map_err(|e| e.to_string())?;
            trees.push(tree);
        }
        Ok(trees)
    };
    match attempt() {
        Err(e) => result(name, Some(e), String::new()),
        Ok(trees) => {
            let (a, b) = (&trees[0], &trees[1]);
            let differing: Vec<&String> = a
                .keys()
                .chain(b.keys())
                .filter(|k| a.get(*k) != b.get(*k))
                .collect();
            if differing.is_empty() {
                result(name, None, format!("{} files compared", a.len()))
            } else {
                result(
                    name,
                    Some(format!("files differ: {differing:?}")),
                    String::new(),
                )
            }
        }
    }
}

/// All invariants over the given D³RB runs of criteria 3, 4 and 5.
pub fn check(c3: &[RunLog], c4: &[RunLog], c5: &[RunLog]) -> Vec<InvariantResult> {
    let balancing: Vec<&RunLog> = c3.iter().chain(c4).chain(c5).collect();
    let allocation: Vec<&RunLog> = c3.iter().collect();
    vec![
        balance(&balancing),
        lattice(&balancing),
        overshoot(&allocation),
        simplex(),
        shadow_agreement(),
        replay(),
    ]
}

/// Compute the runs and check everything. Errors only if a run fails.
pub fn run_selfcheck() -> Result<Vec<InvariantResult>, HarnessError> {
    let c3 = d3rb_logs("synthetic-allocation")?;
    let c4 = d3rb_logs("step-size-selection")?;
    let c5 = d3rb_logs("nonstationary-switch")?;
    Ok(check(&c3, &c4, &c5))
}
