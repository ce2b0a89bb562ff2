//! Monte Carlo lab: synthetic populations, repeated sampling with
//! nonresponse, and tables of bias, standard error, variance relative bias
//! and interval coverage.

pub mod diagnostics;
pub mod population;
pub mod scenario;
pub mod table;

pub use diagnostics::{bias_decomposition, discrepancy_trend, log_log_slope, BiasDecomposition, MatchingKind};
pub use population::{generate_population, Population, PopulationId};
pub use scenario::{run_scenario, run_scenario_on, MonteCarloReport, ScenarioConfig, Target};
pub use table::{emit_table, table_rows, write_outputs};
