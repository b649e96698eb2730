use modsel_harness::config::BUNDLED;
use modsel_harness::run::load_config;
use modsel_harness::{bundled, ExperimentConfig, HarnessError};

const SMALL: &str = r#"
schema_version = 1
name = "small"
total_rounds = 60
num_seeds = 2
window = 20

[environment]
kind = "chain"
states = 3
horizon = 4

[[agents]]
kind = "q_learning"
step_size = 0.5

[[agents]]
kind = "policy_gradient"
step_size = 0.1

[[selectors]]
kind = "d3rb"

[[selectors]]
kind = "d3rb"
c = 0.5
"#;

fn config_error(text: &str) -> String {
    match ExperimentConfig::from_toml(text) {
        Err(HarnessError::Config(msg)) => msg,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn toml_round_trip() {
    let config = ExperimentConfig::from_toml(SMALL).unwrap();
    let again = ExperimentConfig::from_toml(&config.to_toml()).unwrap();
    assert_eq!(config, again);
    assert_eq!(config.num_seeds, 2);
    assert_eq!(config.log_every, 1);
}

#[test]
fn repeated_selectors_get_distinct_labels() {
    let config = ExperimentConfig::from_toml(SMALL).unwrap();
    assert_eq!(config.selector_labels(), vec!["d3rb", "d3rb_1"]);
}

#[test]
fn bundled_presets_parse() {
    for (name, _) in BUNDLED {
        let config = bundled(name).unwrap();
        assert_eq!(&config.name, name);
        assert_eq!(
            config.to_toml(),
            ExperimentConfig::from_toml(&config.to_toml())
                .unwrap()
                .to_toml()
        );
    }
    assert!(bundled("missing").is_none());
}

#[test]
fn unknown_fields_are_named() {
    let msg = config_error(&SMALL.replace("window = 20", "window = 20\nwindw = 3"));
    assert!(msg.contains("windw"), "{msg}");
    let msg = config_error(&SMALL.replace("step_size = 0.5", "step_size = 0.5\nstepsize = 1"));
    assert!(msg.contains("stepsize"), "{msg}");
}

#[test]
fn bad_values_name_their_field() {
    let msg = config_error(&SMALL.replace("schema_version = 1", "schema_version = 7"));
    assert!(msg.contains("schema_version"), "{msg}");
    let msg = config_error(&SMALL.replace("num_seeds = 2", "num_seeds = 0"));
    assert!(msg.contains("num_seeds"), "{msg}");
    let msg = config_error(&SMALL.replace("c = 0.5", "c = -1.0"));
    assert!(msg.contains("selectors[1]"), "{msg}");
    let msg = config_error(&SMALL.replace("states = 3", "states = 0"));
    assert!(msg.contains("environment"), "{msg}");
}

#[test]
fn classic_needs_one_bound_per_agent() {
    let text = SMALL.replace(
        "[[selectors]]\nkind = \"d3rb\"\nc = 0.5",
        "[[selectors]]\nkind = \"classic\"\nputative_coefficients = [1.0]",
    );
    let msg = config_error(&text);
    assert!(msg.contains("selectors[1]"), "{msg}");
}

#[test]
fn load_config_falls_back_to_bundled_names() {
    assert_eq!(
        load_config("synthetic-allocation").unwrap().name,
        "synthetic-allocation"
    );
    let err = load_config("no-such-experiment").unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
