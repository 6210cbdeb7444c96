//! Configuration parsing, CSV persistence, run comparison and plot-ready
//! series. Everything the command-line front end reads or writes goes
//! through here.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::analysis::{detect_knee, speedup, AmdahlFit, KneeReport, SweepPoint};
use crate::error::{Error, Result};
use crate::harness::{summarize, BenchConfig, BenchRun, Phase, Summary, TimingRecord};
use crate::network::{ActivationKind, LossKind};
use crate::params_io::params_digest;
use crate::strategies::StrategyKind;

/// Keys accepted in a config file and as `--key value` flags.
pub const CONFIG_KEYS: [&str; 14] = [
    "run_id",
    "strategy",
    "activation",
    "loss",
    "layer_widths",
    "learning_rate",
    "seed",
    "data_seed",
    "n_samples",
    "epochs",
    "repeats",
    "warmup_repeats",
    "batch_size",
    "threads",
];

pub const CSV_HEADER: &str = "run_id,strategy,activation,loss,batch_size,threads,epochs,repeat,phase,wall_ns";

// ---------------------------------------------------------------------------
// config

fn parse_strategy_name(raw: &str) -> Result<&'static str> {
    let norm = raw.trim().to_ascii_lowercase().replace('-', "_");
    Ok(match norm.as_str() {
        "sequential_online" | "sequential" | "online" => "sequential_online",
        "batch_vectorized" | "batch" => "batch_vectorized",
        "thread_map_reduce" | "map_reduce" | "mapreduce" => "thread_map_reduce",
        "thread_full_pipeline" | "full_pipeline" | "pipeline" => "thread_full_pipeline",
        _ => return Err(Error::config("strategy", format!("unknown strategy `{raw}`"))),
    })
}

/// Turns a `--key value` flag into the JSON value a config file would hold.
fn flag_value(key: &str, raw: &str) -> Value {
    match key {
        "run_id" | "strategy" | "activation" | "loss" => Value::String(raw.to_string()),
        "layer_widths" => {
            let parsed: Option<Vec<Value>> = raw
                .split(',')
                .map(|w| w.trim().parse::<u64>().ok().map(Value::from))
                .collect();
            parsed
                .map(Value::Array)
                .unwrap_or_else(|| Value::String(raw.to_string()))
        }
        _ => serde_json::from_str::<Value>(raw.trim())
            .ok()
            .filter(Value::is_number)
            .unwrap_or_else(|| Value::String(raw.to_string())),
    }
}

fn as_count(key: &str, v: &Value) -> Result<usize> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| Error::config(key, format!("expected a non-negative integer, got {v}")))
}

fn as_u64(key: &str, v: &Value) -> Result<u64> {
    v.as_u64()
        .ok_or_else(|| Error::config(key, format!("expected a non-negative integer, got {v}")))
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| Error::config(key, format!("expected a string, got {v}")))
}

fn available_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Run id used when none is configured, e.g. `batch_vectorized-b32-relu`.
pub fn default_run_id(strategy: &StrategyKind, activation: ActivationKind) -> String {
    match *strategy {
        StrategyKind::SequentialOnline => format!("sequential_online-{activation}"),
        StrategyKind::BatchVectorized { batch_size } => format!("batch_vectorized-b{batch_size}-{activation}"),
        StrategyKind::ThreadMapReduce { threads } => format!("thread_map_reduce-t{threads}-{activation}"),
        StrategyKind::ThreadFullPipeline { threads } => format!("thread_full_pipeline-t{threads}-{activation}"),
    }
}

/// Builds a validated config from `base` overlaid with the entries of `map`.
pub fn config_from_map(map: &Map<String, Value>, base: &BenchConfig) -> Result<BenchConfig> {
    if let Some(key) = map.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
        return Err(Error::config(key.clone(), "unknown key"));
    }
    let mut cfg = base.clone();
    let get = |k: &str| map.get(k);

    if let Some(v) = get("activation") {
        cfg.network.activation = as_str("activation", v)?.parse()?;
    }
    if let Some(v) = get("loss") {
        cfg.network.loss = as_str("loss", v)?.parse()?;
    }
    if let Some(v) = get("layer_widths") {
        let arr = v
            .as_array()
            .ok_or_else(|| Error::config("layer_widths", format!("expected an array of integers, got {v}")))?;
        cfg.network.layer_widths = arr.iter().map(|w| as_count("layer_widths", w)).collect::<Result<_>>()?;
    }
    if let Some(v) = get("learning_rate") {
        cfg.network.learning_rate = v
            .as_f64()
            .ok_or_else(|| Error::config("learning_rate", format!("expected a number, got {v}")))?;
    }
    if let Some(v) = get("seed") {
        cfg.network.seed = as_u64("seed", v)?;
    }
    if let Some(v) = get("data_seed") {
        cfg.data_seed = as_u64("data_seed", v)?;
    }
    if let Some(v) = get("n_samples") {
        cfg.n_samples = as_count("n_samples", v)?;
    }
    if let Some(v) = get("epochs") {
        cfg.epochs = as_count("epochs", v)?;
    }
    if let Some(v) = get("repeats") {
        cfg.repeats = as_count("repeats", v)?;
    }
    if let Some(v) = get("warmup_repeats") {
        cfg.warmup_repeats = as_count("warmup_repeats", v)?;
    }

    let batch_size = get("batch_size").map(|v| as_count("batch_size", v)).transpose()?;
    if batch_size == Some(0) {
        return Err(Error::config("batch_size", "must be at least 1"));
    }
    let threads = get("threads").map(|v| as_count("threads", v)).transpose()?;
    if threads == Some(0) {
        return Err(Error::config("threads", "must be at least 1"));
    }
    let strategy_name = match get("strategy") {
        Some(v) => parse_strategy_name(as_str("strategy", v)?)?,
        None => cfg.strategy.name(),
    };
    cfg.strategy = StrategyKind::from_parts(
        strategy_name,
        batch_size.or(cfg.strategy.batch_size()).or(Some(cfg.n_samples)),
        threads.or(cfg.strategy.threads()).or_else(|| Some(available_threads())),
    )?;

    cfg.run_id = match get("run_id") {
        Some(v) => as_str("run_id", v)?.to_string(),
        None if base.run_id.is_empty() => default_run_id(&cfg.strategy, cfg.network.activation),
        None => base.run_id.clone(),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Reads an optional JSON config file and applies `--key value` overrides on
/// top of it. Flags win over the file; the file wins over `base`.
pub fn parse_config(path: Option<&Path>, flags: &[(String, String)], base: &BenchConfig) -> Result<BenchConfig> {
    let mut map = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::config("config", format!("cannot read {}: {e}", p.display())))?;
            if text.trim().is_empty() {
                Map::new()
            } else {
                match serde_json::from_str::<Value>(&text) {
                    Ok(Value::Object(m)) => m,
                    Ok(_) => return Err(Error::config("config", "top level must be a JSON object")),
                    Err(e) => return Err(Error::config("config", format!("invalid JSON: {e}"))),
                }
            }
        }
        None => Map::new(),
    };
    for (key, raw) in flags {
        map.insert(key.clone(), flag_value(key, raw));
    }
    config_from_map(&map, base)
}

/// Base config for [`parse_config`]: library defaults with an empty run id so
/// that one is derived from the strategy.
pub fn config_base() -> BenchConfig {
    BenchConfig {
        run_id: String::new(),
        ..BenchConfig::default()
    }
}

// ---------------------------------------------------------------------------
// CSV

/// One CSV row: a timing record together with the config columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimingRow {
    pub run_id: String,
    pub strategy: String,
    pub activation: ActivationKind,
    pub loss: LossKind,
    pub batch_size: Option<usize>,
    pub threads: Option<usize>,
    pub epochs: usize,
    pub repeat: usize,
    pub phase: Phase,
    pub wall_ns: u64,
}

impl TimingRow {
    pub fn new(config: &BenchConfig, record: &TimingRecord) -> Self {
        TimingRow {
            run_id: record.run_id.clone(),
            strategy: config.strategy.name().to_string(),
            activation: config.network.activation,
            loss: config.network.loss,
            batch_size: config.strategy.batch_size(),
            threads: config.strategy.threads(),
            epochs: config.epochs,
            repeat: record.repeat_index,
            phase: record.phase,
            wall_ns: record.wall_ns,
        }
    }

    pub fn record(&self) -> TimingRecord {
        TimingRecord {
            run_id: self.run_id.clone(),
            repeat_index: self.repeat,
            phase: self.phase,
            wall_ns: self.wall_ns,
        }
    }
}

fn opt(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_csv<W: Write>(out: W, rows: &[TimingRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER.split(','))
        .map_err(|e| Error::Format(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.run_id.clone(),
            r.strategy.clone(),
            r.activation.name().to_string(),
            r.loss.name().to_string(),
            opt(r.batch_size),
            opt(r.threads),
            r.epochs.to_string(),
            r.repeat.to_string(),
            r.phase.name().to_string(),
            r.wall_ns.to_string(),
        ])
        .map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(rows: &[TimingRow]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows).expect("writing to memory cannot fail");
    buf
}

pub fn parse_csv(bytes: &[u8]) -> Result<Vec<TimingRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(bytes);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| Error::Format("empty CSV, expected a header".into()))?
        .map_err(|e| Error::Format(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(Error::Format(format!("unexpected CSV header, expected `{CSV_HEADER}`")));
    }
    let bad = |line: usize, what: &str| Error::Format(format!("CSV row {line}: bad {what}"));
    let num = |line: usize, s: &str, what: &str| s.parse::<u64>().map_err(|_| bad(line, what));
    let opt_num = |line: usize, s: &str, what: &str| -> Result<Option<usize>> {
        if s.is_empty() {
            Ok(None)
        } else {
            Ok(Some(num(line, s, what)? as usize))
        }
    };

    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        if rec.len() != 10 {
            return Err(Error::Format(format!(
                "CSV row {line}: expected 10 fields, got {}",
                rec.len()
            )));
        }
        rows.push(TimingRow {
            run_id: rec[0].to_string(),
            strategy: parse_strategy_name(&rec[1])
                .map_err(|_| bad(line, "strategy"))?
                .to_string(),
            activation: rec[2].parse().map_err(|_| bad(line, "activation"))?,
            loss: rec[3].parse().map_err(|_| bad(line, "loss"))?,
            batch_size: opt_num(line, &rec[4], "batch_size")?,
            threads: opt_num(line, &rec[5], "threads")?,
            epochs: num(line, &rec[6], "epochs")? as usize,
            repeat: num(line, &rec[7], "repeat")? as usize,
            phase: rec[8].parse().map_err(|_| bad(line, "phase"))?,
            wall_ns: num(line, &rec[9], "wall_ns")?,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// artifacts and comparison

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub config: BenchConfig,
    pub records: Vec<TimingRecord>,
    pub summary: Summary,
    /// FNV-1a of the exported trained parameters; absent when the artifact
    /// was rebuilt from CSV alone.
    pub params_digest: Option<u64>,
    pub final_loss: Option<f64>,
}

impl RunArtifact {
    pub fn from_run(config: BenchConfig, run: &BenchRun) -> Result<Self> {
        Ok(RunArtifact {
            summary: summarize(&run.records)?,
            records: run.records.clone(),
            params_digest: Some(params_digest(&run.final_params)),
            final_loss: Some(run.final_loss),
            config,
        })
    }

    pub fn run_id(&self) -> &str {
        &self.config.run_id
    }

    pub fn rows(&self) -> Vec<TimingRow> {
        self.records.iter().map(|r| TimingRow::new(&self.config, r)).collect()
    }

    pub fn min_ns(&self, phase: Phase) -> Option<u64> {
        self.summary.get(self.run_id(), phase).map(|s| s.min_ns)
    }

    /// Fastest Total divided by the number of update steps in one run, i.e.
    /// the time to push one batch through forward, backward and update.
    pub fn step_time_ns(&self) -> Option<f64> {
        let batch = self.config.strategy.batch_size()?;
        let steps = self.config.epochs * self.config.n_samples.div_ceil(batch);
        Some(self.min_ns(Phase::Total)? as f64 / steps as f64)
    }
}

/// Regroups CSV rows into artifacts. Columns absent from the CSV (widths,
/// seeds, sample count, learning rate) come from `base`.
pub fn artifacts_from_rows(rows: &[TimingRow], base: &BenchConfig) -> Result<Vec<RunArtifact>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&TimingRow>> = BTreeMap::new();
    for r in rows {
        if !groups.contains_key(&r.run_id) {
            order.push(r.run_id.clone());
        }
        groups.entry(r.run_id.clone()).or_default().push(r);
    }
    order
        .into_iter()
        .map(|run_id| {
            let group = &groups[&run_id];
            let first = group[0];
            let same = |r: &&TimingRow| {
                r.strategy == first.strategy
                    && r.activation == first.activation
                    && r.loss == first.loss
                    && r.batch_size == first.batch_size
                    && r.threads == first.threads
                    && r.epochs == first.epochs
            };
            if !group.iter().all(same) {
                return Err(Error::Format(format!(
                    "rows of run `{run_id}` disagree on their config columns"
                )));
            }
            let mut config = base.clone();
            config.run_id = run_id.clone();
            config.strategy = StrategyKind::from_parts(&first.strategy, first.batch_size, first.threads)?;
            config.network.activation = first.activation;
            config.network.loss = first.loss;
            config.epochs = first.epochs;
            let mut repeats: Vec<usize> = group.iter().map(|r| r.repeat).collect();
            repeats.sort_unstable();
            repeats.dedup();
            config.repeats = repeats.len();
            let records: Vec<TimingRecord> = group.iter().map(|r| r.record()).collect();
            Ok(RunArtifact {
                summary: summarize(&records)?,
                records,
                params_digest: None,
                final_loss: None,
                config,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpeedup {
    pub phase: Phase,
    pub baseline_min_ns: u64,
    pub variant_min_ns: u64,
    /// Absent when either side measured zero time.
    pub speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantComparison {
    pub run_id: String,
    pub strategy: StrategyKind,
    pub activation: ActivationKind,
    pub phases: Vec<PhaseSpeedup>,
    pub total_speedup: Option<f64>,
    /// Present only for threaded variants with more than one thread whose
    /// observed speedup lies in `[1, threads]`.
    pub amdahl: Option<AmdahlFit>,
    /// Why a threaded variant has no fit (slowdown or superlinear speedup).
    pub amdahl_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationRow {
    pub strategy: StrategyKind,
    pub phase: Phase,
    pub relu_min_ns: u64,
    pub sigmoid_min_ns: u64,
    /// ReLU time over Sigmoid time; above 1 means ReLU is slower.
    pub relu_over_sigmoid: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub baseline_run_id: String,
    pub baseline_strategy: StrategyKind,
    pub variants: Vec<VariantComparison>,
    /// Per-step runtime of the batch-vectorized runs sharing the baseline's
    /// activation, by batch size.
    pub batch_family: Vec<SweepPoint>,
    pub knee: Option<KneeReport>,
    pub activation_table: Vec<ActivationRow>,
}

fn check_comparable(baseline: &RunArtifact, variant: &RunArtifact) -> Result<()> {
    let (a, b) = (&baseline.config, &variant.config);
    let mismatch = |what: &str, x: String, y: String| {
        Err(Error::Comparison(format!(
            "`{}` and `{}` differ in {what}: {x} vs {y}",
            a.run_id, b.run_id
        )))
    };
    if a.network.layer_widths != b.network.layer_widths {
        return mismatch(
            "layer_widths",
            format!("{:?}", a.network.layer_widths),
            format!("{:?}", b.network.layer_widths),
        );
    }
    if a.network.loss != b.network.loss {
        return mismatch("loss", a.network.loss.to_string(), b.network.loss.to_string());
    }
    if a.network.seed != b.network.seed {
        return mismatch("seed", a.network.seed.to_string(), b.network.seed.to_string());
    }
    if a.data_seed != b.data_seed {
        return mismatch("data_seed", a.data_seed.to_string(), b.data_seed.to_string());
    }
    Ok(())
}

fn compare_one(baseline: &RunArtifact, variant: &RunArtifact) -> VariantComparison {
    let phases: Vec<PhaseSpeedup> = Phase::ALL
        .into_iter()
        .map(|phase| {
            let b = baseline.min_ns(phase).unwrap_or(0);
            let v = variant.min_ns(phase).unwrap_or(0);
            PhaseSpeedup {
                phase,
                baseline_min_ns: b,
                variant_min_ns: v,
                speedup: speedup(b as f64, v as f64).ok(),
            }
        })
        .collect();
    let total_speedup = phases.iter().find(|p| p.phase == Phase::Total).and_then(|p| p.speedup);

    let (amdahl, amdahl_note) = match (variant.config.strategy.threads(), total_speedup) {
        (Some(t), Some(s)) if t > 1 => match AmdahlFit::from_observed(s, t as f64) {
            Ok(fit) => (Some(fit), None),
            Err(e) => (None, Some(e.to_string())),
        },
        (Some(t), None) if t > 1 => (None, Some("total time not measurable".to_string())),
        _ => (None, None),
    };

    VariantComparison {
        run_id: variant.run_id().to_string(),
        strategy: variant.config.strategy,
        activation: variant.config.network.activation,
        phases,
        total_speedup,
        amdahl,
        amdahl_note,
    }
}

/// Pairs every strategy that was run with both activations.
pub fn activation_table<'a>(artifacts: impl IntoIterator<Item = &'a RunArtifact>) -> Vec<ActivationRow> {
    let mut by_strategy: Vec<(StrategyKind, Option<&RunArtifact>, Option<&RunArtifact>)> = Vec::new();
    for a in artifacts {
        let idx = match by_strategy.iter().position(|(s, _, _)| *s == a.config.strategy) {
            Some(i) => i,
            None => {
                by_strategy.push((a.config.strategy, None, None));
                by_strategy.len() - 1
            }
        };
        let slot = match a.config.network.activation {
            ActivationKind::Relu => &mut by_strategy[idx].1,
            ActivationKind::Sigmoid => &mut by_strategy[idx].2,
        };
        slot.get_or_insert(a);
    }
    let mut rows = Vec::new();
    for (strategy, relu, sigmoid) in by_strategy {
        let (Some(relu), Some(sigmoid)) = (relu, sigmoid) else {
            continue;
        };
        for phase in Phase::ALL {
            let r = relu.min_ns(phase).unwrap_or(0);
            let s = sigmoid.min_ns(phase).unwrap_or(0);
            rows.push(ActivationRow {
                strategy,
                phase,
                relu_min_ns: r,
                sigmoid_min_ns: s,
                relu_over_sigmoid: speedup(r as f64, s as f64).ok(),
            });
        }
    }
    rows
}

pub fn render_activation_table(rows: &[ActivationRow]) -> String {
    let mut out = format!(
        "{:<32} {:<9} {:>14} {:>14} {:>10}\n",
        "strategy", "phase", "relu_min_ns", "sigmoid_min_ns", "relu/sig"
    );
    for r in rows {
        let ratio = r.relu_over_sigmoid.map_or("-".to_string(), |x| format!("{x:.3}"));
        out.push_str(&format!(
            "{:<32} {:<9} {:>14} {:>14} {:>10}\n",
            r.strategy.to_string(),
            r.phase.name(),
            r.relu_min_ns,
            r.sigmoid_min_ns,
            ratio
        ));
    }
    out
}

/// Speedups of every variant over `baseline` from min-over-repeats times,
/// Amdahl fits for threaded variants, and knee detection over the
/// batch-vectorized runs when at least three batch sizes are present.
pub fn compare_runs(baseline: &RunArtifact, variants: &[RunArtifact], knee_threshold: f64) -> Result<ComparisonReport> {
    for v in variants {
        check_comparable(baseline, v)?;
    }
    let compared = variants.iter().map(|v| compare_one(baseline, v)).collect();

    let mut all: Vec<&RunArtifact> = vec![baseline];
    all.extend(variants.iter().filter(|v| v.run_id() != baseline.run_id()));

    let mut family: Vec<SweepPoint> = Vec::new();
    for a in all
        .iter()
        .filter(|a| a.config.network.activation == baseline.config.network.activation)
    {
        let (Some(batch_size), Some(t)) = (a.config.strategy.batch_size(), a.step_time_ns()) else {
            continue;
        };
        if t > 0.0 && !family.iter().any(|p| p.batch_size == batch_size) {
            family.push(SweepPoint {
                batch_size,
                runtime_ns: t,
            });
        }
    }
    family.sort_by_key(|p| p.batch_size);
    let knee = if family.len() >= 3 {
        let pts: Vec<(usize, f64)> = family.iter().map(|p| (p.batch_size, p.runtime_ns)).collect();
        Some(detect_knee(&pts, knee_threshold)?)
    } else {
        None
    };

    Ok(ComparisonReport {
        baseline_run_id: baseline.run_id().to_string(),
        baseline_strategy: baseline.config.strategy,
        variants: compared,
        batch_family: family,
        knee,
        activation_table: activation_table(all),
    })
}

// ---------------------------------------------------------------------------
// plot data

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub group: Option<String>,
    /// Category names for series whose x is an index.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub labels: Option<Vec<String>>,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub series: Vec<Series>,
}

pub fn plot_data(report: &ComparisonReport) -> PlotData {
    let mut series = Vec::new();

    if !report.variants.is_empty() {
        let labels: Vec<String> = report.variants.iter().map(|v| v.run_id.clone()).collect();
        for phase in Phase::ALL {
            let points = report
                .variants
                .iter()
                .enumerate()
                .filter_map(|(i, v)| {
                    v.phases
                        .iter()
                        .find(|p| p.phase == phase)
                        .map(|p| (i as f64, p.variant_min_ns as f64))
                })
                .collect();
            series.push(Series {
                name: format!("phase_{}_ns", phase.name()),
                group: None,
                labels: Some(labels.clone()),
                points,
            });
        }
    }

    for strategy in ["thread_map_reduce", "thread_full_pipeline"] {
        let mut points: Vec<(f64, f64)> = report
            .variants
            .iter()
            .filter(|v| v.strategy.name() == strategy)
            .filter_map(|v| Some((v.strategy.threads()? as f64, v.total_speedup?)))
            .collect();
        if points.is_empty() {
            continue;
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        series.push(Series {
            name: "speedup_vs_threads".into(),
            group: Some(strategy.into()),
            labels: None,
            points,
        });
    }

    if !report.batch_family.is_empty() {
        series.push(Series {
            name: "runtime_vs_batch".into(),
            group: None,
            labels: None,
            points: report
                .batch_family
                .iter()
                .map(|p| (p.batch_size as f64, p.runtime_ns))
                .collect(),
        });
    }

    if let Some((lo, hi)) = report.knee.as_ref().and_then(|k| k.flagged_interval) {
        let at = |b: usize| {
            report
                .batch_family
                .iter()
                .find(|p| p.batch_size == b)
                .map_or(0.0, |p| p.runtime_ns)
        };
        series.push(Series {
            name: "knee_interval".into(),
            group: None,
            labels: None,
            points: vec![(lo as f64, at(lo)), (hi as f64, at(hi))],
        });
    }

    PlotData { series }
}

pub fn emit_plot_data(report: &ComparisonReport) -> Vec<u8> {
    serde_json::to_vec_pretty(&plot_data(report)).expect("plot data serializes")
}
