//! Traces, baselines and experiment drivers.

pub mod baselines;
pub mod experiment;
pub mod oracle;
pub mod report;
pub mod traces;

pub use baselines::{
    baseline_greedy_downlink, baseline_greedy_uplink, baseline_knn, baseline_order_preserving, GreedyUplink,
};
pub use experiment::{
    audit_run, compare, plateau, prepare_traces, run_experiment, run_on_forecast, simulate_with, sweep_users, Plateau,
    RunOutput, RunReport, RunSummary, SlotRecord, Violation, PLATEAU_EPOCHS,
};
pub use oracle::{oracle_table, OracleRow};
pub use report::{read_policies, write_csv, write_policies, write_report, write_run, EPOCH_COLUMNS, SLOT_COLUMNS};
pub use traces::{ingest_traces, parse_traces, synth_traces, write_traces, TraceSet, TraceSource, WaypointParams};
