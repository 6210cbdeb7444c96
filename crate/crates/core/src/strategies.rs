//! The four training schemes under comparison and the synthetic teacher
//! dataset they train on.
//!
//! Every scheme is deterministic for a fixed seed, thread count and batch
//! size: samples are visited in index order, shards are contiguous index
//! ranges, and reductions run in shard-index order.

use std::fmt;
use std::ops::Range;
use std::panic::{self, AssertUnwindSafe};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::{
    apply_update, backward, backward_scaled, cached_loss, forward_cache, init_params, LossKind, NetworkConfig, Params,
};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategyKind {
    SequentialOnline,
    BatchVectorized { batch_size: usize },
    ThreadMapReduce { threads: usize },
    ThreadFullPipeline { threads: usize },
}

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::SequentialOnline => "sequential_online",
            StrategyKind::BatchVectorized { .. } => "batch_vectorized",
            StrategyKind::ThreadMapReduce { .. } => "thread_map_reduce",
            StrategyKind::ThreadFullPipeline { .. } => "thread_full_pipeline",
        }
    }

    pub fn batch_size(&self) -> Option<usize> {
        match *self {
            StrategyKind::BatchVectorized { batch_size } => Some(batch_size),
            _ => None,
        }
    }

    pub fn threads(&self) -> Option<usize> {
        match *self {
            StrategyKind::ThreadMapReduce { threads } | StrategyKind::ThreadFullPipeline { threads } => Some(threads),
            _ => None,
        }
    }

    /// Rebuilds a strategy from its lowercase name and optional parameter.
    pub fn from_parts(name: &str, batch_size: Option<usize>, threads: Option<usize>) -> Result<Self> {
        let need = |value: Option<usize>, key: &str| {
            value.ok_or_else(|| Error::config(key, format!("required by strategy `{name}`")))
        };
        Ok(match name {
            "sequential_online" => StrategyKind::SequentialOnline,
            "batch_vectorized" => StrategyKind::BatchVectorized {
                batch_size: need(batch_size, "batch_size")?,
            },
            "thread_map_reduce" => StrategyKind::ThreadMapReduce {
                threads: need(threads, "threads")?,
            },
            "thread_full_pipeline" => StrategyKind::ThreadFullPipeline {
                threads: need(threads, "threads")?,
            },
            other => return Err(Error::config("strategy", format!("unknown strategy `{other}`"))),
        })
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            StrategyKind::SequentialOnline => f.write_str("sequential_online"),
            StrategyKind::BatchVectorized { batch_size } => write!(f, "batch_vectorized(B={batch_size})"),
            StrategyKind::ThreadMapReduce { threads } => write!(f, "thread_map_reduce(t={threads})"),
            StrategyKind::ThreadFullPipeline { threads } => write!(f, "thread_full_pipeline(t={threads})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub inputs: Matrix,
    pub targets: Matrix,
    pub seed: u64,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn sample(&self, i: usize) -> (Matrix, Matrix) {
        self.rows(i..i + 1)
    }

    fn rows(&self, r: Range<usize>) -> (Matrix, Matrix) {
        (
            self.inputs.slice_rows(r.start, r.end).expect("range checked"),
            self.targets.slice_rows(r.start, r.end).expect("range checked"),
        )
    }
}

/// Inputs uniform in `[-1, 1)` from `SplitMix64(data_seed)`, row-major.
/// Targets come from a teacher network of the same architecture initialized
/// with seed `data_seed + 1`; for BCE each output column is thresholded at
/// its median to give balanced 0/1 labels.
pub fn make_dataset(n: usize, config: &NetworkConfig, data_seed: u64) -> Result<TrainingSet> {
    if n == 0 {
        return Err(Error::config("n_samples", "must be at least 1"));
    }
    config.validate_architecture()?;
    let m = config.input_width();
    let mut rng = SplitMix64::new(data_seed);
    let inputs = Matrix::new(n, m, (0..n * m).map(|_| rng.next_range(-1.0, 1.0)).collect())?;

    let teacher_config = NetworkConfig {
        seed: data_seed.wrapping_add(1),
        ..config.clone()
    };
    let teacher = init_params(&teacher_config)?;
    let mut targets = forward_cache(&teacher, &inputs, &teacher_config)?.output().clone();
    if config.loss == LossKind::Bce {
        for j in 0..targets.cols() {
            let mut column: Vec<f64> = (0..n).map(|i| targets.get(i, j)).collect();
            column.sort_by(f64::total_cmp);
            let median = if n % 2 == 1 {
                column[n / 2]
            } else {
                (column[n / 2 - 1] + column[n / 2]) / 2.0
            };
            for i in 0..n {
                let label = if targets.get(i, j) > median { 1.0 } else { 0.0 };
                targets.set(i, j, label);
            }
        }
    }
    Ok(TrainingSet {
        inputs,
        targets,
        seed: data_seed,
    })
}

/// Accumulated wall-clock nanoseconds per phase for one training run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub forward_ns: u64,
    pub backward_ns: u64,
    pub update_ns: u64,
    pub total_ns: u64,
}

impl PhaseTimings {
    fn compute_ns(&self) -> u64 {
        self.forward_ns + self.backward_ns + self.update_ns
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub params: Params,
    pub timings: PhaseTimings,
    /// Mean training loss seen during each epoch (before each sample's or
    /// batch's update).
    pub epoch_losses: Vec<f64>,
}

#[inline]
fn timed<T>(slot: &mut u64, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot += start.elapsed().as_nanos() as u64;
    out
}

/// One forward, one backward, one update. Returns the pre-update batch loss.
fn sgd_step(
    params: &mut Params,
    inputs: &Matrix,
    targets: &Matrix,
    config: &NetworkConfig,
    timings: &mut PhaseTimings,
) -> Result<f64> {
    let cache = timed(&mut timings.forward_ns, || forward_cache(params, inputs, config))?;
    let loss = cached_loss(config.loss, &cache, targets);
    let grads = timed(&mut timings.backward_ns, || backward(params, &cache, targets, config))?;
    timed(&mut timings.update_ns, || {
        apply_update(params, &grads, config.learning_rate)
    })?;
    Ok(loss)
}

fn check_epochs(epochs: usize) -> Result<()> {
    if epochs == 0 {
        return Err(Error::config("epochs", "must be at least 1"));
    }
    Ok(())
}

fn check_threads(threads: usize) -> Result<()> {
    if threads == 0 {
        return Err(Error::config("threads", "must be at least 1"));
    }
    Ok(())
}

fn check_epoch(epoch: usize, loss: f64, params: &Params) -> Result<()> {
    if !loss.is_finite() || !params.is_finite() {
        return Err(Error::Divergence { epoch: epoch + 1 });
    }
    Ok(())
}

/// Splits `0..n` into `t` contiguous ranges; the first `n % t` get one extra
/// sample. Ranges past `n` are empty when `t > n`.
pub fn shard_ranges(n: usize, t: usize) -> Vec<Range<usize>> {
    let base = n / t;
    let extra = n % t;
    let mut start = 0;
    (0..t)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Online SGD: every sample, in index order, gets its own forward, backward
/// and immediate update.
pub fn train_sequential_online(
    mut params: Params,
    data: &TrainingSet,
    epochs: usize,
    config: &NetworkConfig,
) -> Result<Trained> {
    check_epochs(epochs)?;
    let samples: Vec<(Matrix, Matrix)> = (0..data.len()).map(|i| data.sample(i)).collect();
    let n = data.len() as f64;
    let mut timings = PhaseTimings::default();
    let mut epoch_losses = Vec::with_capacity(epochs);

    let start = Instant::now();
    for epoch in 0..epochs {
        let mut loss_sum = 0.0;
        for (x, t) in &samples {
            loss_sum += sgd_step(&mut params, x, t, config, &mut timings)?;
        }
        let loss = loss_sum / n;
        check_epoch(epoch, loss, &params)?;
        epoch_losses.push(loss);
    }
    timings.total_ns = start.elapsed().as_nanos() as u64;

    Ok(Trained {
        params,
        timings,
        epoch_losses,
    })
}

/// Mini-batch gradient descent over stacked `B x M` batches in index order;
/// the last batch may be short and is normalized by its own size.
pub fn train_batch_vectorized(
    mut params: Params,
    data: &TrainingSet,
    batch_size: usize,
    epochs: usize,
    config: &NetworkConfig,
) -> Result<Trained> {
    check_epochs(epochs)?;
    if batch_size == 0 || batch_size > data.len() {
        return Err(Error::config(
            "batch_size",
            format!("must be in 1..={}, got {batch_size}", data.len()),
        ));
    }
    let batches: Vec<(Matrix, Matrix)> = (0..data.len())
        .step_by(batch_size)
        .map(|s| data.rows(s..(s + batch_size).min(data.len())))
        .collect();
    let n = data.len() as f64;
    let mut timings = PhaseTimings::default();
    let mut epoch_losses = Vec::with_capacity(epochs);

    let start = Instant::now();
    for epoch in 0..epochs {
        let mut loss_sum = 0.0;
        for (x, t) in &batches {
            loss_sum += sgd_step(&mut params, x, t, config, &mut timings)? * x.rows() as f64;
        }
        let loss = loss_sum / n;
        check_epoch(epoch, loss, &params)?;
        epoch_losses.push(loss);
    }
    timings.total_ns = start.elapsed().as_nanos() as u64;

    Ok(Trained {
        params,
        timings,
        epoch_losses,
    })
}

/// Long-lived workers, one per shard, fed jobs over channels. Built before
/// the caller starts its clock and joined after it stops.
struct Pool<J, R> {
    job_txs: Vec<Sender<J>>,
    results: Receiver<(usize, Result<R>)>,
}

impl<J: Clone, R> Pool<J, R> {
    /// Sends `job` to every worker and returns their results in shard order.
    fn round(&self, job: &J) -> Result<Vec<R>> {
        for tx in &self.job_txs {
            tx.send(job.clone())
                .map_err(|_| Error::Domain("worker thread exited early".into()))?;
        }
        let mut slots: Vec<Option<Result<R>>> = (0..self.job_txs.len()).map(|_| None).collect();
        for _ in 0..self.job_txs.len() {
            let (idx, r) = self
                .results
                .recv()
                .map_err(|_| Error::Domain("worker thread exited early".into()))?;
            slots[idx] = Some(r);
        }
        slots.into_iter().map(|s| s.expect("every worker answered")).collect()
    }
}

fn with_pool<S, J, R, T>(
    shards: Vec<S>,
    work: impl Fn(&S, J) -> Result<R> + Sync,
    drive: impl FnOnce(&Pool<J, R>) -> T,
) -> T
where
    S: Send,
    J: Send + Clone,
    R: Send,
{
    thread::scope(|scope| {
        let (result_tx, results) = channel();
        let mut job_txs = Vec::with_capacity(shards.len());
        for (idx, shard) in shards.into_iter().enumerate() {
            let (job_tx, jobs) = channel::<J>();
            let result_tx = result_tx.clone();
            let work = &work;
            scope.spawn(move || {
                for job in jobs {
                    let r = panic::catch_unwind(AssertUnwindSafe(|| work(&shard, job)))
                        .unwrap_or_else(|_| Err(Error::Domain(format!("worker {idx} panicked"))));
                    if result_tx.send((idx, r)).is_err() {
                        break;
                    }
                }
            });
            job_txs.push(job_tx);
        }
        drop(result_tx);
        let pool = Pool { job_txs, results };
        // Dropping the pool closes every job channel, which ends the workers.
        drive(&pool)
    })
}

struct ShardOutcome<P> {
    payload: Option<P>,
    loss_sum: f64,
    timings: PhaseTimings,
}

/// Adds the phase times of the slowest worker of a round. Its spans all lie
/// inside the round's wall-clock window, so the phase sum stays within Total.
fn add_critical_path<P>(timings: &mut PhaseTimings, outcomes: &[ShardOutcome<P>]) {
    if let Some(slowest) = outcomes.iter().max_by_key(|o| o.timings.compute_ns()) {
        timings.forward_ns += slowest.timings.forward_ns;
        timings.backward_ns += slowest.timings.backward_ns;
        timings.update_ns += slowest.timings.update_ns;
    }
}

/// Map-reduce full-batch gradient descent: each worker sums its shard's
/// gradient against a frozen snapshot, the coordinator reduces the sums in
/// shard order, divides by N and applies one update per epoch.
pub fn train_thread_map_reduce(
    params: Params,
    data: &TrainingSet,
    threads: usize,
    epochs: usize,
    config: &NetworkConfig,
) -> Result<Trained> {
    check_epochs(epochs)?;
    check_threads(threads)?;
    let n = data.len();
    let shards: Vec<Option<(Matrix, Matrix)>> = shard_ranges(n, threads)
        .into_iter()
        .map(|r| (!r.is_empty()).then(|| data.rows(r)))
        .collect();

    let work = |shard: &Option<(Matrix, Matrix)>, snapshot: Arc<Params>| -> Result<ShardOutcome<Params>> {
        let mut timings = PhaseTimings::default();
        let Some((x, t)) = shard else {
            return Ok(ShardOutcome {
                payload: None,
                loss_sum: 0.0,
                timings,
            });
        };
        let cache = timed(&mut timings.forward_ns, || forward_cache(&snapshot, x, config))?;
        let loss_sum = cached_loss(config.loss, &cache, t) * x.rows() as f64;
        let grad_sum = timed(&mut timings.backward_ns, || {
            backward_scaled(&snapshot, &cache, t, config, 1.0)
        })?;
        Ok(ShardOutcome {
            payload: Some(grad_sum),
            loss_sum,
            timings,
        })
    };

    with_pool(shards, work, |pool| {
        let mut params = Arc::new(params);
        let mut timings = PhaseTimings::default();
        let mut epoch_losses = Vec::with_capacity(epochs);

        let start = Instant::now();
        for epoch in 0..epochs {
            let outcomes = pool.round(&params)?;
            add_critical_path(&mut timings, &outcomes);
            let loss = outcomes.iter().map(|o| o.loss_sum).sum::<f64>() / n as f64;

            let update_start = Instant::now();
            let mut total = params.zeros_like();
            for grads in outcomes.iter().filter_map(|o| o.payload.as_ref()) {
                total.add_in_place(grads)?;
            }
            total.div_scalar_in_place(n as f64);
            apply_update(Arc::make_mut(&mut params), &total, config.learning_rate)?;
            timings.update_ns += update_start.elapsed().as_nanos() as u64;

            check_epoch(epoch, loss, &params)?;
            epoch_losses.push(loss);
        }
        timings.total_ns = start.elapsed().as_nanos() as u64;

        Ok(Trained {
            params: Arc::try_unwrap(params).unwrap_or_else(|shared| (*shared).clone()),
            timings,
            epoch_losses,
        })
    })
}

/// Every worker runs complete online SGD (forward, backward, local update per
/// sample) over its own shard with a private copy of the parameters; at the
/// end of each epoch the copies are averaged in shard order. Workers whose
/// shard is empty (`threads > N`) sit the epoch out of the average.
pub fn train_thread_full_pipeline(
    params: Params,
    data: &TrainingSet,
    threads: usize,
    epochs: usize,
    config: &NetworkConfig,
) -> Result<Trained> {
    check_epochs(epochs)?;
    check_threads(threads)?;
    let n = data.len();
    let shards: Vec<Vec<(Matrix, Matrix)>> = shard_ranges(n, threads)
        .into_iter()
        .map(|r| r.map(|i| data.sample(i)).collect())
        .collect();

    let work = |shard: &Vec<(Matrix, Matrix)>, snapshot: Arc<Params>| -> Result<ShardOutcome<Params>> {
        let mut timings = PhaseTimings::default();
        if shard.is_empty() {
            return Ok(ShardOutcome {
                payload: None,
                loss_sum: 0.0,
                timings,
            });
        }
        let mut local = (*snapshot).clone();
        drop(snapshot);
        let mut loss_sum = 0.0;
        for (x, t) in shard {
            loss_sum += sgd_step(&mut local, x, t, config, &mut timings)?;
        }
        Ok(ShardOutcome {
            payload: Some(local),
            loss_sum,
            timings,
        })
    };

    with_pool(shards, work, |pool| {
        let mut params = Arc::new(params);
        let mut timings = PhaseTimings::default();
        let mut epoch_losses = Vec::with_capacity(epochs);

        let start = Instant::now();
        for epoch in 0..epochs {
            let outcomes = pool.round(&params)?;
            add_critical_path(&mut timings, &outcomes);
            let loss = outcomes.iter().map(|o| o.loss_sum).sum::<f64>() / n as f64;

            let update_start = Instant::now();
            let mut locals = outcomes.into_iter().filter_map(|o| o.payload);
            let mut mean = locals.next().expect("at least one non-empty shard");
            let mut count = 1usize;
            for local in locals {
                mean.add_in_place(&local)?;
                count += 1;
            }
            if count > 1 {
                mean.div_scalar_in_place(count as f64);
            }
            params = Arc::new(mean);
            timings.update_ns += update_start.elapsed().as_nanos() as u64;

            check_epoch(epoch, loss, &params)?;
            epoch_losses.push(loss);
        }
        timings.total_ns = start.elapsed().as_nanos() as u64;

        Ok(Trained {
            params: Arc::try_unwrap(params).unwrap_or_else(|shared| (*shared).clone()),
            timings,
            epoch_losses,
        })
    })
}

/// Runs `strategy` for `epochs` epochs starting from `params`.
pub fn train(
    strategy: StrategyKind,
    params: Params,
    data: &TrainingSet,
    epochs: usize,
    config: &NetworkConfig,
) -> Result<Trained> {
    match strategy {
        StrategyKind::SequentialOnline => train_sequential_online(params, data, epochs, config),
        StrategyKind::BatchVectorized { batch_size } => {
            train_batch_vectorized(params, data, batch_size, epochs, config)
        }
        StrategyKind::ThreadMapReduce { threads } => train_thread_map_reduce(params, data, threads, epochs, config),
        StrategyKind::ThreadFullPipeline { threads } => {
            train_thread_full_pipeline(params, data, threads, epochs, config)
        }
    }
}
