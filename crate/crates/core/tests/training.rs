use modsel::agents::AgentConfig;
use modsel::mdp::{optimal_value, MdpSpec, NonstationarySchedule, RewardDist};
use modsel::presets;
use modsel::selectors::{BalancingParams, SelectorConfig, SelectorKind};
use modsel::training::{run, run_batch, run_solo, RunConfig, SCHEMA_VERSION};

fn q(step_size: f64) -> AgentConfig {
    AgentConfig::QLearning {
        step_size,
        exploration_eps: 0.1,
        initial_value: 8.0,
    }
}

fn pg(step_size: f64) -> AgentConfig {
    AgentConfig::PolicyGradient {
        step_size,
        discount: 1.0,
    }
}

fn chain_schedule() -> NonstationarySchedule {
    presets::chain(4, 6, 0.2).unwrap().into()
}

fn d3rb() -> SelectorConfig {
    SelectorConfig::D3rb(BalancingParams::default())
}

#[test]
fn agents_only_learn_from_their_own_rounds() {
    // Each agent's stream depends on its own seed and pull count only, so an
    // isolated copy fed nothing but its own episodes replays its returns.
    for kind in [SelectorKind::D3rb, SelectorKind::Exp3, SelectorKind::Ucb] {
        let pool = vec![q(0.3), pg(0.2), q(0.05)];
        let config = RunConfig::new(
            SelectorConfig::default_for(kind),
            pool.clone(),
            chain_schedule(),
            600,
            11,
        );
        let log = run(&config).unwrap();
        for (i, agent) in pool.iter().enumerate() {
            let pooled: Vec<f64> = log
                .records
                .iter()
                .filter(|r| r.agent == i)
                .map(|r| r.raw_return)
                .collect();
            let isolated = modsel::seed::agent_seed(11, i);
            let mut built = agent
                .build(chain_schedule().first(), isolated, 0.01)
                .unwrap();
            let mut rng = modsel::seed::rng_for(isolated, modsel::seed::AGENT_STREAM, 0);
            for (k, expected) in pooled.iter().enumerate() {
                let mdp = config.environment.active_mdp(1);
                let policy = built.policy();
                let traj = built.play_episode(mdp, policy.as_ref(), &mut rng).unwrap();
                assert_eq!(traj.episodic_return, *expected, "{kind} agent {i} pull {k}");
                built.learn(&traj);
            }
        }
    }
}

#[test]
fn seeds_do_not_depend_on_pool_size() {
    let small = run(&RunConfig::new(
        d3rb(),
        vec![q(0.3)],
        chain_schedule(),
        50,
        4,
    ))
    .unwrap();
    let large = run(&RunConfig::new(
        SelectorConfig::default_for(SelectorKind::Ucb),
        vec![q(0.3), q(0.1)],
        chain_schedule(),
        400,
        4,
    ))
    .unwrap();
    let first: Vec<f64> = large
        .records
        .iter()
        .filter(|r| r.agent == 0)
        .map(|r| r.raw_return)
        .take(50)
        .collect();
    let solo: Vec<f64> = small
        .records
        .iter()
        .map(|r| r.raw_return)
        .take(first.len())
        .collect();
    assert_eq!(first, solo);
}

#[test]
fn one_episode_and_one_update_per_round() {
    let config = RunConfig::new(d3rb(), vec![q(0.3), pg(0.1)], chain_schedule(), 321, 2);
    let log = run(&config).unwrap();
    assert_eq!(log.records.len(), 321);
    for (k, r) in log.records.iter().enumerate() {
        assert_eq!(r.t, k as u64 + 1);
        assert_eq!(r.agents.iter().map(|a| a.n).sum::<u64>(), r.t);
    }
    let last = log.records.last().unwrap();
    for i in 0..2 {
        let logged: f64 = log
            .records
            .iter()
            .filter(|r| r.agent == i)
            .map(|r| r.normalized_return)
            .sum();
        assert!((last.agents[i].u - logged).abs() < 1e-9);
    }
}

fn constant_phase(reward: f64) -> MdpSpec {
    MdpSpec::new(
        1,
        1,
        2,
        vec![1.0],
        vec![RewardDist::deterministic(reward)],
        (0.0, 1.0),
        vec![1.0],
    )
    .unwrap()
}

#[test]
fn active_phase_is_used_each_round() {
    let schedule = NonstationarySchedule::new(vec![
        (1, constant_phase(0.0)),
        (40, constant_phase(1.0)),
        (70, constant_phase(0.5)),
    ])
    .unwrap();
    let log = run(&RunConfig::new(
        d3rb(),
        vec![q(0.1), q(0.2)],
        schedule,
        100,
        0,
    ))
    .unwrap();
    for r in &log.records {
        let expected = match r.t {
            1..=39 => 0.0,
            40..=69 => 2.0,
            _ => 1.0,
        };
        assert_eq!(r.raw_return, expected, "round {}", r.t);
    }
    // each phase is its own regret reference, so a constant environment has none
    assert_eq!(log.ledger.total_regret().unwrap(), 0.0);
}

#[test]
fn replays_are_byte_identical() {
    let mut config = RunConfig::new(
        SelectorConfig::default_for(SelectorKind::Corral),
        vec![q(0.3), pg(0.2), q(0.05)],
        chain_schedule(),
        300,
        77,
    );
    config.is_sharing = true;
    let a = run(&config).unwrap().csv_string();
    let b = run(&config).unwrap().csv_string();
    assert_eq!(a, b);
}

#[test]
fn matches_golden_log() {
    let config = RunConfig::new(d3rb(), vec![q(0.5), pg(0.3)], chain_schedule(), 40, 5);
    let csv = run(&config).unwrap().csv_string();
    let golden = include_str!("golden/d3rb_chain.csv");
    assert_eq!(
        csv, golden,
        "regenerate with the golden test below if the format changed"
    );
}

#[test]
#[ignore]
fn write_golden_log() {
    let config = RunConfig::new(d3rb(), vec![q(0.5), pg(0.3)], chain_schedule(), 40, 5);
    let csv = run(&config).unwrap().csv_string();
    std::fs::write(
        concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/d3rb_chain.csv"),
        csv,
    )
    .unwrap();
}

#[test]
fn solo_run_is_a_single_agent_run() {
    let solo = run_solo(q(0.3), chain_schedule(), 200, 9).unwrap();
    for kind in SelectorKind::ALL {
        let log = run(&RunConfig::new(
            SelectorConfig::default_for(kind),
            vec![q(0.3)],
            chain_schedule(),
            200,
            9,
        ))
        .unwrap();
        assert!(log.records.iter().all(|r| r.agent == 0));
        let a: Vec<f64> = log.records.iter().map(|r| r.raw_return).collect();
        let b: Vec<f64> = solo.records.iter().map(|r| r.raw_return).collect();
        assert_eq!(a, b, "{kind}");
        assert_eq!(log.ledger, solo.ledger);
    }
}

#[test]
fn synthetic_solo_regret_is_root_t() {
    let arena = presets::synthetic_arena(1.0, -1.0).unwrap();
    let agent = AgentConfig::Synthetic {
        target_coefficient: 1.0,
        optimal_value: None,
    };
    let log = run_solo(agent, arena.into(), 10_000, 0).unwrap();
    assert!((log.ledger.total_regret().unwrap() - 100.0).abs() < 1e-6);
}

#[test]
fn q_learning_solo_reaches_optimal_value() {
    let chain = presets::chain(5, 8, 0.0).unwrap();
    let v_star = optimal_value(&chain).0;
    let agent = AgentConfig::QLearning {
        step_size: 0.5,
        exploration_eps: 0.0,
        initial_value: 8.0,
    };
    let log = run_solo(agent, chain.into(), 10_000, 3).unwrap();
    assert!(log.window_mean_return(100) >= 0.99 * v_star);
}

#[test]
fn sharing_only_touches_gradient_agents() {
    let q_pool = vec![q(0.3), q(0.1)];
    let mut config = RunConfig::new(d3rb(), q_pool, chain_schedule(), 300, 8);
    let plain = run(&config).unwrap();
    config.is_sharing = true;
    let shared = run(&config).unwrap();
    assert_eq!(plain.csv_string(), shared.csv_string());

    let mut config = RunConfig::new(d3rb(), vec![pg(0.3), pg(0.3)], chain_schedule(), 300, 8);
    let plain = run(&config).unwrap();
    config.is_sharing = true;
    let shared = run(&config).unwrap();
    assert_ne!(plain.csv_string(), shared.csv_string());
}

#[test]
fn batch_summaries_are_sorted_by_seed() {
    let config = RunConfig::new(d3rb(), vec![q(0.3), q(0.1)], chain_schedule(), 200, 30);
    let batch = run_batch(&config, 4, 50);
    assert_eq!(batch.schema_version, SCHEMA_VERSION);
    let seeds: Vec<u64> = batch.runs.iter().map(|r| r.master_seed).collect();
    assert_eq!(seeds, vec![30, 31, 32, 33]);
    assert!(batch.failures.is_empty());
    for (k, summary) in batch.runs.iter().enumerate() {
        let mut single = config.clone();
        single.master_seed = 30 + k as u64;
        assert_eq!(*summary, run(&single).unwrap().summary(50));
    }
}

#[test]
fn deterministic_batch_has_zero_spread() {
    let chain = presets::chain(3, 4, 0.0).unwrap();
    let agent = AgentConfig::QLearning {
        step_size: 0.5,
        exploration_eps: 0.0,
        initial_value: 4.0,
    };
    let config = RunConfig::new(d3rb(), vec![agent], chain.into(), 100, 0);
    let batch = run_batch(&config, 3, 20);
    assert_eq!(batch.std_window_return, 0.0);
    assert_eq!(batch.mean_window_return, batch.runs[0].window_mean_return);
}
