//! Benchmark lab for small fully connected networks trained with plain SGD.
//!
//! The same network and data can be trained by four execution strategies
//! (online, mini-batch, threaded gradient map-reduce, threaded local SGD
//! with parameter averaging). The harness times forward, backward and
//! update phases under a fixed protocol, and the analysis layer turns those
//! timings into speedups, Amdahl fits and batch-size knee estimates.

pub mod analysis;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod network;
pub mod params_io;
pub mod report;
pub mod rng;
pub mod strategies;

pub use analysis::{
    amdahl_speedup, detect_knee, estimate_parallel_fraction, speedup, AmdahlFit, KneeReport, SweepPoint,
    DEFAULT_KNEE_THRESHOLD,
};
pub use error::{Error, Result};
pub use harness::{
    run_benchmark, summarize, BenchConfig, BenchRun, Phase, PhaseSummary, Protocol, Summary, TimingRecord,
};
pub use linalg::{col_mean, col_sum, hadamard, mat_mul, mat_mul_blocked, transpose, Matrix};
pub use network::{
    activate, activate_deriv, apply_update, backward, forward, init_params, loss_grad, loss_value, ActivationKind,
    ForwardCache, Grads, Layer, LossKind, NetworkConfig, Params,
};
pub use params_io::{params_digest, read_params, write_params};
pub use report::{
    compare_runs, emit_csv, emit_plot_data, parse_config, parse_csv, ComparisonReport, RunArtifact, TimingRow,
};
pub use rng::SplitMix64;
pub use strategies::{make_dataset, train, PhaseTimings, StrategyKind, Trained, TrainingSet};
