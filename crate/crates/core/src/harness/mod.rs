//! Scenario configuration, batch execution and result output.

mod batch;
mod config;
mod live;
mod output;
mod presets;
mod sim;

pub use batch::{run_batch, Amplification, BatchError, BatchOptions, ResultSet, SuiteSummary};
pub use config::{
    load_config, parse_config, ChannelMode, ConfigError, LossPoint, OutputConfig, OutputFormat,
    ScenarioConfig, SuiteSelection, DEFAULT_ITERATIONS, DEFAULT_MTU,
};
pub use live::{
    live_handshake, live_run, LiveError, LiveOutcome, LiveResponder, ServedSa,
    LIVE_DEFAULT_MAX_RESTARTS,
};
pub use output::{csv_string, emit_results, summary_json, write_csv, OutputError, CSV_COLUMNS};
pub use presets::{preset, Preset, PRESETS, WIRELESS_RTT_MS};
pub use sim::{
    simulate_run, simulate_with_channels, RunOutcome, SimError, SimSettings,
    DEFAULT_DATAGRAM_BUDGET,
};
