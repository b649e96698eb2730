use modsel::agents::AgentConfig;
use modsel::metrics::{
    allocation_report, regret_scaling_diagnostic, self_selection_size, RegretLedger,
};
use modsel::presets;
use modsel::selectors::{BalancingParams, SelectorConfig};
use modsel::training::{run, run_solo, RunConfig};
use proptest::prelude::*;

fn synthetic(d: f64) -> AgentConfig {
    AgentConfig::Synthetic {
        target_coefficient: d,
        optimal_value: None,
    }
}

#[test]
fn synthetic_agent_has_its_prescribed_coefficient() {
    let arena = presets::synthetic_arena(1.0, -2.0).unwrap();
    let log = run_solo(synthetic(2.0), arena.into(), 5000, 0).unwrap();
    for r in log.records.iter().step_by(97) {
        let d = r.dtrue.as_ref().unwrap()[0].unwrap();
        // normalized by the return range of 3
        assert!((d * 3.0 - 2.0).abs() < 1e-9, "round {}: {d}", r.t);
    }
    assert!((log.ledger.regret_coefficient(0).unwrap() - 2.0).abs() < 1e-9);
}

#[test]
fn d3rb_estimates_never_overshoot_twice_the_truth() {
    let arena = presets::synthetic_arena(1.0, -3.0).unwrap();
    let pool = vec![synthetic(1.0), synthetic(2.0), synthetic(4.0)];
    let params = BalancingParams {
        c: 0.5,
        ..BalancingParams::default()
    };
    for seed in 0..3 {
        let config = RunConfig::new(
            SelectorConfig::D3rb(params.clone()),
            pool.clone(),
            arena.clone().into(),
            4000,
            seed,
        );
        let log = run(&config).unwrap();
        let mut worst = [params.d_min; 3];
        for r in &log.records {
            for (i, s) in r.agents.iter().enumerate() {
                if let Some(d) = r.dtrue.as_ref().unwrap()[i] {
                    worst[i] = worst[i].max(d);
                }
                assert!(
                    s.d_hat.unwrap() <= 2.0 * worst[i] + 1e-12,
                    "round {} agent {i}",
                    r.t
                );
            }
        }
    }
}

#[test]
fn allocation_report_of_a_run() {
    let arena = presets::synthetic_arena(1.0, -3.0).unwrap();
    let pool = vec![synthetic(1.0), synthetic(2.0), synthetic(4.0)];
    let config = RunConfig::new(
        SelectorConfig::D3rb(BalancingParams::default()),
        pool,
        arena.into(),
        3000,
        0,
    );
    let log = run(&config).unwrap();
    let report = allocation_report(&log.ledger).unwrap();
    assert_eq!(report.t, 3000);
    assert!((report.realized.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((report.predicted.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // coefficients are normalized by the return range of 4
    for (d, expected) in report.coefficients.iter().zip([0.25, 0.5, 1.0]) {
        assert!((d - expected).abs() < 1e-9);
    }
}

#[test]
fn synthetic_regret_scales_as_root_t() {
    let arena = presets::synthetic_arena(1.0, -1.0).unwrap();
    let points: Vec<(u64, f64)> = [100u64, 400, 1600]
        .iter()
        .map(|&t| {
            let log = run_solo(synthetic(1.0), arena.clone().into(), t, 0).unwrap();
            (t, log.ledger.total_regret().unwrap())
        })
        .collect();
    for row in regret_scaling_diagnostic(&points) {
        assert!((row.ratio - 1.0).abs() < 1e-9);
    }
}

#[test]
fn self_selection_sizing_examples() {
    assert_eq!(self_selection_size(0.5, 0.05).unwrap(), 5);
    assert_eq!(self_selection_size(0.1, 0.01).unwrap(), 2);
}

proptest! {
    #[test]
    fn sized_pools_meet_the_failure_target(gamma in 0.01f64..0.99, delta in 0.001f64..0.99) {
        let m = self_selection_size(gamma, delta).unwrap();
        prop_assert!(gamma.powi(m as i32) <= delta * (1.0 + 1e-9));
        if m > 1 {
            prop_assert!(gamma.powi(m as i32 - 1) > delta * (1.0 - 1e-9));
        }
    }

    #[test]
    fn ledger_totals_add_up(rounds in proptest::collection::vec((0usize..3, 0.0f64..1.0), 1..200)) {
        let mut ledger = RegretLedger::new(3, 0.01, 2.0);
        let mut total = 0.0;
        for (agent, expected) in &rounds {
            ledger.record(*agent, 1.0, *expected);
            total += 1.0 - expected;
        }
        prop_assert!((ledger.total_regret().unwrap() - total).abs() < 1e-9);
        prop_assert!((ledger.total_normalized_regret().unwrap() - total / 2.0).abs() < 1e-9);
        prop_assert_eq!(ledger.total_pulls(), rounds.len() as u64);
        let d_star = ledger.d_star().unwrap();
        prop_assert!(d_star >= 0.01);
    }
}
