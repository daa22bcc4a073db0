//! Experiment orchestration: scenario presets, configs, comparators in
//! hindsight, regret reports and their files.

mod batch;
mod comparator;
mod config;
mod experiment;
mod prediction;
pub mod presets;
mod report;
mod step;

pub use batch::{run_batch, run_batch_sequential, seed_sweep};
pub use comparator::{
    best_dac_in_hindsight, best_drc_in_hindsight, best_linear_in_hindsight, default_stabilizer, linear_policy_cost,
    ComparatorResult, LinearComparator, OptConfig,
};
pub use config::{
    ComparatorKind, ControllerKind, ControllerSpec, CostSpec, PredictionSpec, ScenarioConfig, SysidSpec, SystemSpec,
};
pub use experiment::{run_experiment, run_sysid_experiment, telemetry_csv, trajectory_csv, Experiment, SysidExperiment};
pub use prediction::{
    run_filter_experiment, run_spectral_experiment, FilterExperiment, FilterSummary, SpectralExperiment, SpectralSummary,
};
pub use presets::{preset, scenario_presets, Scenario, PRESET_NAMES};
pub use report::{read_regret_csv, write_atomic, CsvColumns, RegretReport, Summary, CSV_HEADER};
pub use step::{gpc_step, grc_step, perturbation_bound, NOMINAL_RADIUS};
