//! Scenario files and deterministic reports.
//!
//! A scenario is a TOML document naming one operator, one estimator and one
//! master seed. Parsing fills every default and checks every precondition,
//! reporting each problem with its key path. Running a scenario yields a
//! [`RunReport`] whose CSV form is byte-identical across reruns unless
//! wall-clock timing is requested.

mod config;
mod run;

pub use config::{
    parse_config, ConfigErrors, Experiment, Knot, Named, OperatorBlock, PayoffSpec, RunBlock,
    ScenarioConfig, ESTIMATORS,
};
pub use run::{
    load_config, run_scenario, scenario_files, Failure, Row, RunOptions, RunReport,
    ValidationLine, CSV_HEADER, VERSION,
};
