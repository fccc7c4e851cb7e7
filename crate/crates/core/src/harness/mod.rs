//! Experiment orchestration: spec files, seeded parallel trials, result
//! tables and the `gfamp` command line.

pub mod check;
pub mod cli;
pub mod output;
pub mod run;
pub mod spec;

pub use output::{write_aggregates, write_rows, write_table};
pub use run::{run_experiment, run_experiment_with_threads, se_params, Aggregate, MetricRecord, Mode, ResultTable, Status};
pub use spec::{load_spec, parse_spec, Algorithm, ExperimentSpec, Format, GridPoint, Sweep};
