//! Timing protocol: warm-up runs, repeated timed runs, per-phase records and
//! summary statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{init_params, NetworkConfig, Params};
use crate::strategies::{make_dataset, train, StrategyKind, Trained};

/// Epochs and repeats of a measurement protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Protocol {
    pub epochs: usize,
    pub repeats: usize,
}

impl Protocol {
    /// Whole-run timing: 1000 epochs, 4 repeats.
    pub const END_TO_END: Protocol = Protocol {
        epochs: 1000,
        repeats: 4,
    };

    /// Forward/backward split timing: 100 epochs, 4 repeats.
    pub const PHASE_SPLIT: Protocol = Protocol {
        epochs: 100,
        repeats: 4,
    };
}

pub const DEFAULT_WARMUP_REPEATS: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub run_id: String,
    pub strategy: StrategyKind,
    pub network: NetworkConfig,
    pub n_samples: usize,
    pub epochs: usize,
    pub repeats: usize,
    pub warmup_repeats: usize,
    pub data_seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            run_id: "run".to_string(),
            strategy: StrategyKind::SequentialOnline,
            network: NetworkConfig::default(),
            n_samples: 256,
            epochs: Protocol::END_TO_END.epochs,
            repeats: Protocol::END_TO_END.repeats,
            warmup_repeats: DEFAULT_WARMUP_REPEATS,
            data_seed: 1234,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.run_id.is_empty() {
            return Err(Error::config("run_id", "must not be empty"));
        }
        self.network.validate()?;
        if self.n_samples == 0 {
            return Err(Error::config("n_samples", "must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.repeats == 0 {
            return Err(Error::config("repeats", "must be at least 1"));
        }
        match self.strategy {
            StrategyKind::BatchVectorized { batch_size } if batch_size == 0 || batch_size > self.n_samples => {
                Err(Error::config(
                    "batch_size",
                    format!("must be in 1..={}, got {batch_size}", self.n_samples),
                ))
            }
            StrategyKind::ThreadMapReduce { threads: 0 } | StrategyKind::ThreadFullPipeline { threads: 0 } => {
                Err(Error::config("threads", "must be at least 1"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Forward,
    Backward,
    Update,
    Total,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::Forward, Phase::Backward, Phase::Update, Phase::Total];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Forward => "forward",
            Phase::Backward => "backward",
            Phase::Update => "update",
            Phase::Total => "total",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Phase::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Format(format!("unknown phase `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub run_id: String,
    pub repeat_index: usize,
    pub phase: Phase,
    pub wall_ns: u64,
}

/// The four records of one timed repeat.
fn repeat_records(run_id: &str, repeat_index: usize, trained: &Trained) -> Vec<TimingRecord> {
    let t = trained.timings;
    assert!(
        t.forward_ns + t.backward_ns + t.update_ns <= t.total_ns,
        "phase times exceed total: {t:?}"
    );
    [
        (Phase::Forward, t.forward_ns),
        (Phase::Backward, t.backward_ns),
        (Phase::Update, t.update_ns),
        (Phase::Total, t.total_ns),
    ]
    .into_iter()
    .map(|(phase, wall_ns)| TimingRecord {
        run_id: run_id.to_string(),
        repeat_index,
        phase,
        wall_ns,
    })
    .collect()
}

/// Output of [`run_benchmark`].
#[derive(Debug, Clone)]
pub struct BenchRun {
    pub records: Vec<TimingRecord>,
    pub initial_params: Params,
    pub final_params: Params,
    pub final_loss: f64,
}

/// Runs `warmup_repeats` discarded runs, then `repeats` timed runs, each from
/// freshly initialized parameters. Dataset generation and parameter
/// initialization happen outside every clock.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchRun> {
    config.validate()?;
    let data = make_dataset(config.n_samples, &config.network, config.data_seed)?;
    let initial_params = init_params(&config.network)?;
    let run = |p: Params| train(config.strategy, p, &data, config.epochs, &config.network);

    for _ in 0..config.warmup_repeats {
        run(initial_params.clone())?;
    }

    let mut records = Vec::with_capacity(config.repeats * Phase::ALL.len());
    let mut last: Option<Trained> = None;
    for repeat in 0..config.repeats {
        let trained = run(initial_params.clone())?;
        records.extend(repeat_records(&config.run_id, repeat, &trained));
        if let Some(prev) = &last {
            debug_assert!(prev.params.bit_eq(&trained.params), "repeats disagree");
        }
        last = Some(trained);
    }
    let last = last.expect("repeats >= 1");
    Ok(BenchRun {
        records,
        initial_params,
        final_loss: last.epoch_losses.last().copied().unwrap_or(f64::NAN),
        final_params: last.params,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub run_id: String,
    pub phase: Phase,
    pub repeats: usize,
    pub mean_ns: f64,
    pub min_ns: u64,
    pub max_ns: u64,
    /// Population standard deviation over repeats.
    pub stddev_ns: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<PhaseSummary>,
}

impl Summary {
    pub fn get(&self, run_id: &str, phase: Phase) -> Option<&PhaseSummary> {
        self.rows.iter().find(|r| r.run_id == run_id && r.phase == phase)
    }
}

/// Groups records by `(run_id, phase)`; rows come out sorted by run id, then
/// in phase order.
pub fn summarize(records: &[TimingRecord]) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::Usage("cannot summarize an empty record list".into()));
    }
    let mut groups: BTreeMap<(&str, Phase), Vec<u64>> = BTreeMap::new();
    for r in records {
        groups.entry((&r.run_id, r.phase)).or_default().push(r.wall_ns);
    }
    let rows = groups
        .into_iter()
        .map(|((run_id, phase), values)| {
            let n = values.len() as f64;
            let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
            let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
            PhaseSummary {
                run_id: run_id.to_string(),
                phase,
                repeats: values.len(),
                mean_ns: mean,
                min_ns: *values.iter().min().expect("non-empty group"),
                max_ns: *values.iter().max().expect("non-empty group"),
                stddev_ns: var.sqrt(),
            }
        })
        .collect();
    Ok(Summary { rows })
}
