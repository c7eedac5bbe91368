//! Scripted sessions on virtual time: scenarios, an offline oracle and the
//! propagation probe.

pub mod oracle;
pub mod probe;
pub mod run;
pub mod scenario;
pub mod study;

pub use oracle::{oracle_outcome, OracleOutcome};
pub use probe::{probe_scenario, propagation_probe, HopRow, ProbeError, ProbeReport, PROBE_ITEM};
pub use run::{check_expectations, run_scenario, run_scenario_with, PropagationTrace, SimError, SimOutput};
pub use scenario::{Expectations, LoadError, Scenario, ScenarioError, ScriptEntry};
pub use study::{study_pair, STUDY_POPULATION};
