//! Experiment harness: configuration, the collaboration and isolated-company
//! runs, parameter sweeps, feature-point arithmetic, and metrics CSV output.

mod config;
mod records;
mod scenario;
mod sweep;
mod value;

pub use config::{default_dataset, parse_config_text, ExperimentConfig, Mode, DATA_DIR_ENV, DEFAULT_DATASET};
pub use records::{emit_csv, final_epochs, parse_csv, render_csv, sort_records, MetricsRecord, CSV_HEADER};
pub use scenario::{
    aggregate_cells, baseline_no_collaboration, prepare_seed, run_experiment, run_experiment_detailed, run_mics,
    run_on_dataset, run_seed, run_solo_cells, simulate_companies, stratified_split, train_session, EpochMetrics,
    SeedData, SeedRecord, SeedRun, TrainedCell, MIN_CELL_TRAIN_ROWS,
};
pub use sweep::{sweep, sweep_on, SweepKind, SWEEP_MAX};
pub use value::{collaboration_value, km_expression, per_km, to_decimal, CollaborationScenario, Scenario};
