//! Launch files, node composition and scenario runs.

pub mod nodes;
pub mod spec;
pub mod system;

pub use nodes::{plot_samples, Node, RunReport};
pub use spec::{config_root, LaunchError, LaunchSpec, CONFIG_ROOT_ENV, NODE_NAMES};
pub use system::{evaluate, ScenarioOutcome, System, START_ORDER, STEP_ORDER};

/// Runs a scenario headless in lockstep with the full node set.
pub fn run_scenario(scenario: &str, seed: Option<u64>) -> Result<ScenarioOutcome, LaunchError> {
    let sc = crate::world::Scenario::resolve(scenario)?;
    let spec = LaunchSpec {
        seed: seed.unwrap_or(sc.seed),
        scenario: Some(scenario.to_string()),
        ..LaunchSpec::default()
    };
    let mut sys = System::launch(spec)?;
    let out = sys.run_scenario();
    sys.stop();
    out
}
