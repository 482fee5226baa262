//! Simulation harness: channel drops, experiment plans, Monte Carlo runs,
//! the grid oracle and exporters.

pub mod channel;
pub mod export;
pub mod oracle;
pub mod plan;
pub mod runner;

pub use channel::{generate_drop, TopologyConfig};
pub use export::{export_results, read_csv, read_json, Format};
pub use oracle::{grid_oracle, OracleResult};
pub use plan::{ExperimentPlan, PlanScenario, SweepAxis, SweepParam};
pub use runner::{pareto_filter, pareto_region, run_plan, summarize, ParetoPoint, ResultRow, Summary};

use crate::model::ScenarioConfig;

/// Scenario with the default plan constants and the given dimensions.
pub fn default_scenario(users: usize, bs_antennas: usize, user_antennas: usize, ris_elements: usize) -> ScenarioConfig {
    PlanScenario { users, bs_antennas, user_antennas, ris_elements, ..Default::default() }
        .to_config()
        .expect("default plan constants are valid")
}
