//! Experiment grid: configuration files, the sweep runner and the report.

mod config;
mod report;
mod sweep;

pub use config::{
    default_output_dir, default_snr_list, parse_config, parse_config_str, ExperimentConfig,
    OUTPUT_DIR_ENV,
};
pub use report::{load_report, run_checks, Check, Report};
pub use sweep::{
    grid, histogram_file_name, point_configs, point_seeds, read_records, record_fields, run_point,
    run_sweep, write_records, GridPoint, PointError, SweepSummary, CONFIG_FILE, ERRORS_FILE,
    METRICS_FILE, METRICS_HEADER, SCHEMA_VERSION,
};
