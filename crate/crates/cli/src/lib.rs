//! Command-line runner: scenario files in, reproducible artifacts out.
//!
//! Split from the binary so integration tests can drive the exact code
//! path the executable uses:
//!
//! - [`config`]: the strict JSON scenario schema, aggregated validation,
//!   and the config hash stamped into every artifact.
//! - [`run`]: subcommand execution, seeded end to end through fixed
//!   substreams so a rerun reproduces every output byte.
//! - [`plotdata`]: tidy CSV emission for the supported plot families.

pub mod config;
pub mod plotdata;
pub mod run;

pub use config::{load_scenario, parse_scenario, CliError, ScenarioConfig};
pub use run::{run, Command, RunOptions, RunOutcome};
