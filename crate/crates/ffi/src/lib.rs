//! C ABI for mlpbench.
//!
//! Networks and datasets are opaque handles created and released by this
//! library. Every fallible call returns an [`MlpStatus`]; on failure a
//! message is available from [`mlp_last_error_message`] on the same thread.
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mlpbench::params_io::{params_digest, read_params, write_params};
use mlpbench::{
    amdahl_speedup, detect_knee, estimate_parallel_fraction, forward, init_params, make_dataset, train, ActivationKind,
    Error, LossKind, Matrix, NetworkConfig, Params, StrategyKind, TrainingSet,
};

/// Result of every fallible call. Values 0 to 4 match the command-line exit
/// codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlpStatus {
    Ok = 0,
    Other = 1,
    Config = 2,
    Divergence = 3,
    Comparison = 4,
    NullPointer = 5,
    Shape = 6,
    Domain = 7,
    Format = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlpActivation {
    Relu = 0,
    Sigmoid = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlpLoss {
    Mse = 0,
    Bce = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlpStrategyKind {
    SequentialOnline = 0,
    BatchVectorized = 1,
    ThreadMapReduce = 2,
    ThreadFullPipeline = 3,
}

/// `batch_size` is read only for batch-vectorized, `threads` only for the
/// threaded kinds.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MlpStrategy {
    pub kind: MlpStrategyKind,
    pub batch_size: usize,
    pub threads: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MlpPhaseTimings {
    pub forward_ns: u64,
    pub backward_ns: u64,
    pub update_ns: u64,
    pub total_ns: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MlpKnee {
    /// Nonzero when a sub-linear interval was found.
    pub flagged: i32,
    pub lo: usize,
    pub hi: usize,
    pub boundary_estimate: f64,
}

/// Opaque network handle: parameters plus the config they were built for.
pub struct MlpNetwork {
    config: NetworkConfig,
    params: Params,
}

/// Opaque dataset handle.
pub struct MlpDataset {
    data: TrainingSet,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MlpStatus {
    match e {
        Error::Config { .. } | Error::Usage(_) => MlpStatus::Config,
        Error::Divergence { .. } => MlpStatus::Divergence,
        Error::Comparison(_) => MlpStatus::Comparison,
        Error::Shape { .. } => MlpStatus::Shape,
        Error::Domain(_) => MlpStatus::Domain,
        Error::Format(_) => MlpStatus::Format,
        Error::Io(_) => MlpStatus::Other,
    }
}

enum Failure {
    Lib(Error),
    Null(&'static str),
    Arg(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, translating errors and panics into a status and last-error text.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MlpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MlpStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(name))) => {
            set_last_error(format!("null pointer passed as `{name}`"));
            MlpStatus::NullPointer
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_last_error(msg);
            MlpStatus::Config
        }
        Err(_) => {
            set_last_error("internal panic".to_string());
            MlpStatus::Panic
        }
    }
}

fn non_null<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    // SAFETY: caller promises `p` is null or valid for reads.
    unsafe { p.as_ref() }.ok_or(Failure::Null(name))
}

fn non_null_mut<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    // SAFETY: caller promises `p` is null or valid and unaliased.
    unsafe { p.as_mut() }.ok_or(Failure::Null(name))
}

fn slice<'a, T>(p: *const T, len: usize, name: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    // SAFETY: caller promises `p` points to `len` readable elements.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn path_arg(p: *const c_char) -> Result<String, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    // SAFETY: caller promises a NUL-terminated string.
    let s = unsafe { CStr::from_ptr(p) };
    s.to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::Arg("path is not valid UTF-8".into()))
}

fn activation_of(a: MlpActivation) -> ActivationKind {
    match a {
        MlpActivation::Relu => ActivationKind::Relu,
        MlpActivation::Sigmoid => ActivationKind::Sigmoid,
    }
}

fn loss_of(l: MlpLoss) -> LossKind {
    match l {
        MlpLoss::Mse => LossKind::Mse,
        MlpLoss::Bce => LossKind::Bce,
    }
}

fn strategy_of(s: MlpStrategy) -> StrategyKind {
    match s.kind {
        MlpStrategyKind::SequentialOnline => StrategyKind::SequentialOnline,
        MlpStrategyKind::BatchVectorized => StrategyKind::BatchVectorized {
            batch_size: s.batch_size,
        },
        MlpStrategyKind::ThreadMapReduce => StrategyKind::ThreadMapReduce { threads: s.threads },
        MlpStrategyKind::ThreadFullPipeline => StrategyKind::ThreadFullPipeline { threads: s.threads },
    }
}

fn into_handle<T>(value: T, out: *mut *mut T) -> Result<(), Failure> {
    let out = non_null_mut(out, "out")?;
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mlp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a network with freshly initialised parameters.
///
/// # Safety
/// `widths` must point to `n_widths` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlp_network_new(
    widths: *const usize,
    n_widths: usize,
    activation: MlpActivation,
    loss: MlpLoss,
    learning_rate: f64,
    seed: u64,
    out: *mut *mut MlpNetwork,
) -> MlpStatus {
    guard(|| {
        let config = NetworkConfig {
            layer_widths: slice(widths, n_widths, "widths")?.to_vec(),
            activation: activation_of(activation),
            loss: loss_of(loss),
            learning_rate,
            seed,
        };
        config.validate()?;
        let params = init_params(&config)?;
        into_handle(MlpNetwork { config, params }, out)
    })
}

/// Loads parameters from an MLPW file; layer widths come from the file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlp_network_load(
    path: *const c_char,
    activation: MlpActivation,
    loss: MlpLoss,
    learning_rate: f64,
    out: *mut *mut MlpNetwork,
) -> MlpStatus {
    guard(|| {
        let params = read_params(path_arg(path)?)?;
        let config = NetworkConfig {
            layer_widths: params.layer_widths(),
            activation: activation_of(activation),
            loss: loss_of(loss),
            learning_rate,
            seed: 0,
        };
        config.validate()?;
        into_handle(MlpNetwork { config, params }, out)
    })
}

/// Releases a network. Null is ignored.
///
/// # Safety
/// `net` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mlp_network_free(net: *mut MlpNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Number of weights and biases, or 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mlp_network_num_params(net: *const MlpNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.params.num_params())
}

/// FNV-1a of the network's exported parameter bytes, or 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mlp_network_params_digest(net: *const MlpNetwork) -> u64 {
    net.as_ref().map_or(0, |n| params_digest(&n.params))
}

/// Runs a forward pass over `rows` samples stored row-major in `input`
/// (`rows * input_width` values) and writes `rows * output_width` values.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mlp_network_forward(
    net: *const MlpNetwork,
    input: *const f64,
    rows: usize,
    cols: usize,
    output: *mut f64,
    output_len: usize,
) -> MlpStatus {
    guard(|| {
        let net = non_null(net, "net")?;
        let x = Matrix::new(rows, cols, slice(input, rows * cols, "input")?.to_vec())?;
        let (pred, _) = forward(&net.params, &x, &net.config)?;
        if output_len != pred.data().len() {
            return Err(Failure::Arg(format!(
                "output buffer holds {output_len} values, forward produced {}",
                pred.data().len()
            )));
        }
        if output.is_null() {
            return Err(Failure::Null("output"));
        }
        std::slice::from_raw_parts_mut(output, output_len).copy_from_slice(pred.data());
        Ok(())
    })
}

/// Trains in place. `timings` and `final_loss` may be null. On failure the
/// network keeps its previous parameters.
///
/// # Safety
/// Handles must be live; output pointers must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn mlp_network_train(
    net: *mut MlpNetwork,
    data: *const MlpDataset,
    strategy: MlpStrategy,
    epochs: usize,
    timings: *mut MlpPhaseTimings,
    final_loss: *mut f64,
) -> MlpStatus {
    guard(|| {
        let net = non_null_mut(net, "net")?;
        let data = non_null(data, "data")?;
        let trained = train(
            strategy_of(strategy),
            net.params.clone(),
            &data.data,
            epochs,
            &net.config,
        )?;
        net.params = trained.params;
        if let Some(t) = timings.as_mut() {
            *t = MlpPhaseTimings {
                forward_ns: trained.timings.forward_ns,
                backward_ns: trained.timings.backward_ns,
                update_ns: trained.timings.update_ns,
                total_ns: trained.timings.total_ns,
            };
        }
        if let Some(l) = final_loss.as_mut() {
            *l = trained.epoch_losses.last().copied().unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Writes the parameters as an MLPW file.
///
/// # Safety
/// `net` must be live and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mlp_network_export_params(net: *const MlpNetwork, path: *const c_char) -> MlpStatus {
    guard(|| {
        let net = non_null(net, "net")?;
        write_params(path_arg(path)?, &net.params)?;
        Ok(())
    })
}

/// Synthetic dataset shaped for `net`: uniform inputs and targets from a
/// teacher network seeded from `data_seed`.
///
/// # Safety
/// `net` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mlp_dataset_new(
    net: *const MlpNetwork,
    n_samples: usize,
    data_seed: u64,
    out: *mut *mut MlpDataset,
) -> MlpStatus {
    guard(|| {
        let net = non_null(net, "net")?;
        let data = make_dataset(n_samples, &net.config, data_seed)?;
        into_handle(MlpDataset { data }, out)
    })
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mlp_dataset_len(data: *const MlpDataset) -> usize {
    data.as_ref().map_or(0, |d| d.data.len())
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `data` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mlp_dataset_free(data: *mut MlpDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Overall speedup `1 / ((1 - p) + p / s)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlp_amdahl_speedup(p: f64, s: f64, out: *mut f64) -> MlpStatus {
    guard(|| {
        *non_null_mut(out, "out")? = amdahl_speedup(p, s)?;
        Ok(())
    })
}

/// Parallel fraction that explains an observed speedup at factor `s`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlp_estimate_parallel_fraction(observed: f64, s: f64, out: *mut f64) -> MlpStatus {
    guard(|| {
        *non_null_mut(out, "out")? = estimate_parallel_fraction(observed, s)?;
        Ok(())
    })
}

/// Knee detection over `n` (batch size, runtime) pairs.
///
/// # Safety
/// `batch_sizes` and `runtimes` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mlp_detect_knee(
    batch_sizes: *const usize,
    runtimes: *const f64,
    n: usize,
    threshold: f64,
    out: *mut MlpKnee,
) -> MlpStatus {
    guard(|| {
        let b = slice(batch_sizes, n, "batch_sizes")?;
        let t = slice(runtimes, n, "runtimes")?;
        let points: Vec<(usize, f64)> = b.iter().copied().zip(t.iter().copied()).collect();
        let report = detect_knee(&points, threshold)?;
        let out = non_null_mut(out, "out")?;
        *out = match (report.flagged_interval, report.boundary_estimate) {
            (Some((lo, hi)), Some(est)) => MlpKnee {
                flagged: 1,
                lo,
                hi,
                boundary_estimate: est,
            },
            _ => MlpKnee::default(),
        };
        Ok(())
    })
}
