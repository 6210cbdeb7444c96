use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mlpbench::params_io::write_params;
use mlpbench::report::{
    artifacts_from_rows, compare_runs, config_base, emit_plot_data, parse_config, parse_csv, render_activation_table,
    write_csv, ComparisonReport, RunArtifact,
};
use mlpbench::{run_benchmark, ActivationKind, BenchConfig, Error, Phase, Protocol, Result, StrategyKind};

#[derive(Parser)]
#[command(
    name = "mlpbench",
    version,
    about = "Time MLP training under different execution strategies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and time one configuration.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Time the batch-vectorized strategy over several batch sizes.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        batch_sizes: Vec<usize>,
        /// Run every batch size once per listed activation.
        #[arg(long, value_delimiter = ',')]
        activations: Vec<ActivationKind>,
        #[arg(long, default_value_t = mlpbench::DEFAULT_KNEE_THRESHOLD)]
        threshold: f64,
    },
    /// Time the threaded strategies over the thread counts given to
    /// `--threads` (comma-separated) against a sequential online baseline.
    ThreadsSweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long, value_delimiter = ',', default_values = ["thread_map_reduce", "thread_full_pipeline"])]
        strategies: Vec<String>,
    },
    /// Compare recorded runs against a baseline and emit the comparison as
    /// JSON. With `--output` the JSON goes to that file and a readable
    /// summary to stdout.
    Analyze {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Emit plot-ready JSON series from a saved comparison or recorded runs.
    PlotData {
        #[command(flatten)]
        input: InputArgs,
        /// Defaults to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    /// 1000 epochs, 4 repeats.
    EndToEnd,
    /// 100 epochs, 4 repeats.
    PhaseSplit,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset for epochs and repeats, applied before the file and flags.
    #[arg(long, value_enum)]
    protocol: Option<ProtocolArg>,
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    loss: Option<String>,
    /// Comma-separated, e.g. 16,32,1.
    #[arg(long)]
    layer_widths: Option<String>,
    #[arg(long)]
    learning_rate: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    data_seed: Option<String>,
    #[arg(long)]
    n_samples: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    repeats: Option<String>,
    #[arg(long)]
    warmup_repeats: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    /// Worker count; a comma-separated list for `threads-sweep`.
    #[arg(long)]
    threads: Option<String>,
}

impl ConfigArgs {
    fn flags(&self) -> Vec<(String, String)> {
        let pairs = [
            ("run_id", &self.run_id),
            ("strategy", &self.strategy),
            ("activation", &self.activation),
            ("loss", &self.loss),
            ("layer_widths", &self.layer_widths),
            ("learning_rate", &self.learning_rate),
            ("seed", &self.seed),
            ("data_seed", &self.data_seed),
            ("n_samples", &self.n_samples),
            ("epochs", &self.epochs),
            ("repeats", &self.repeats),
            ("warmup_repeats", &self.warmup_repeats),
            ("batch_size", &self.batch_size),
            ("threads", &self.threads),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }

    fn base(&self) -> BenchConfig {
        let mut base = config_base();
        if let Some(p) = self.protocol {
            let preset = match p {
                ProtocolArg::EndToEnd => Protocol::END_TO_END,
                ProtocolArg::PhaseSplit => Protocol::PHASE_SPLIT,
            };
            base.epochs = preset.epochs;
            base.repeats = preset.repeats;
        }
        base
    }

    fn resolve(&self) -> Result<BenchConfig> {
        parse_config(self.config.as_deref(), &self.flags(), &self.base())
    }

    /// Like [`resolve`] with extra flags applied last.
    fn resolve_with(&self, extra: &[(&str, String)]) -> Result<BenchConfig> {
        let mut flags = self.flags();
        for (k, v) in extra {
            flags.retain(|(key, _)| key != k);
            flags.push((k.to_string(), v.clone()));
        }
        parse_config(self.config.as_deref(), &flags, &self.base())
    }
}

#[derive(Args)]
struct OutArgs {
    /// Directory for timings.csv, artifacts.json and parameter files.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct InputArgs {
    /// artifacts.json or a timings CSV (`plot-data` also takes the JSON
    /// written by `analyze`).
    #[arg(long)]
    input: PathBuf,
    /// Run id to compare against; defaults to the first run in the input.
    #[arg(long)]
    baseline: Option<String>,
    /// Config supplying columns a CSV lacks (widths, seeds, n_samples).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = mlpbench::DEFAULT_KNEE_THRESHOLD)]
    threshold: f64,
}

fn print_run(a: &RunArtifact) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "run {} ({}, {})",
        a.run_id(),
        a.config.strategy,
        a.config.network.activation
    );
    let _ = writeln!(
        out,
        "  {:<9} {:>14} {:>14} {:>14} {:>12}",
        "phase", "mean_ns", "min_ns", "max_ns", "stddev_ns"
    );
    for phase in Phase::ALL {
        if let Some(s) = a.summary.get(a.run_id(), phase) {
            let _ = writeln!(
                out,
                "  {:<9} {:>14.0} {:>14} {:>14} {:>12.0}",
                phase.name(),
                s.mean_ns,
                s.min_ns,
                s.max_ns,
                s.stddev_ns
            );
        }
    }
    if let Some(loss) = a.final_loss {
        let _ = writeln!(out, "  final loss {loss:.6e}");
    }
    if let Some(d) = a.params_digest {
        let _ = writeln!(out, "  params digest {d:016x}");
    }
    emit(&out)
}

/// Runs each config and writes timings.csv, artifacts.json and the initial
/// and trained parameters of every run into `out_dir`.
fn execute(configs: Vec<BenchConfig>, out_dir: &Path) -> Result<Vec<RunArtifact>> {
    fs::create_dir_all(out_dir)?;
    let mut artifacts = Vec::with_capacity(configs.len());
    for cfg in configs {
        let run = run_benchmark(&cfg)?;
        write_params(out_dir.join(format!("{}.init.params", cfg.run_id)), &run.initial_params)?;
        write_params(out_dir.join(format!("{}.params", cfg.run_id)), &run.final_params)?;
        let artifact = RunArtifact::from_run(cfg, &run)?;
        // Progress output is best effort; losing stdout must not cost the measurements.
        let _ = print_run(&artifact);
        artifacts.push(artifact);
    }
    let rows: Vec<_> = artifacts.iter().flat_map(RunArtifact::rows).collect();
    write_csv(fs::File::create(out_dir.join("timings.csv"))?, &rows)?;
    let json = serde_json::to_vec_pretty(&artifacts).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(out_dir.join("artifacts.json"), json)?;
    Ok(artifacts)
}

fn load_artifacts(input: &InputArgs) -> Result<Vec<RunArtifact>> {
    let bytes = fs::read(&input.input)?;
    let first = bytes.iter().find(|b| !b.is_ascii_whitespace());
    let artifacts = if matches!(first, Some(b'[') | Some(b'{')) {
        let v: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| Error::Format(e.to_string()))?;
        let v = if v.is_object() {
            serde_json::Value::Array(vec![v])
        } else {
            v
        };
        serde_json::from_value(v).map_err(|e| Error::Format(e.to_string()))?
    } else {
        let base = parse_config(input.config.as_deref(), &[], &config_base())?;
        artifacts_from_rows(&parse_csv(&bytes)?, &base)?
    };
    if artifacts.is_empty() {
        return Err(Error::Usage(format!("{} holds no runs", input.input.display())));
    }
    Ok(artifacts)
}

fn build_report(input: &InputArgs) -> Result<ComparisonReport> {
    let artifacts = load_artifacts(input)?;
    let idx = match &input.baseline {
        Some(id) => artifacts
            .iter()
            .position(|a| a.run_id() == id)
            .ok_or_else(|| Error::Usage(format!("baseline run `{id}` not found in input")))?,
        None => 0,
    };
    let variants: Vec<RunArtifact> = artifacts
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != idx)
        .map(|(_, a)| a.clone())
        .collect();
    compare_runs(&artifacts[idx], &variants, input.threshold)
}

/// Reads `path` as a comparison written by `analyze`, if it is one.
fn saved_report(path: &Path) -> Result<Option<ComparisonReport>> {
    let bytes = fs::read(path)?;
    let Ok(value) = serde_json::from_slice::<serde_json::Value>(&bytes) else {
        return Ok(None);
    };
    if value.get("baseline_run_id").is_none() {
        return Ok(None);
    }
    serde_json::from_value(value)
        .map(Some)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn write_stdout(bytes: &[u8]) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(bytes)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn print_report(r: &ComparisonReport) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "baseline {} ({})", r.baseline_run_id, r.baseline_strategy);
    for v in &r.variants {
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |s| format!("{s:.3}"));
        let per_phase: Vec<String> = v
            .phases
            .iter()
            .map(|p| format!("{}={}", p.phase.name(), fmt(p.speedup)))
            .collect();
        let _ = writeln!(out, "  {:<40} {}", v.run_id, per_phase.join(" "));
        if let Some(fit) = v.amdahl {
            let _ = writeln!(
                out,
                "    amdahl: p={:.4} at s={} (observed {:.3})",
                fit.p, fit.s, fit.overall
            );
        }
        if let Some(note) = &v.amdahl_note {
            let _ = writeln!(out, "    amdahl: {note}");
        }
    }
    if let Some(k) = &r.knee {
        match (k.flagged_interval, k.boundary_estimate) {
            (Some((lo, hi)), Some(est)) => {
                let _ = writeln!(
                    out,
                    "knee: sub-linear scaling between batch {lo} and {hi}, boundary ~{est:.1}"
                );
            }
            _ => {
                let _ = writeln!(out, "knee: none below ratio {}", k.threshold);
            }
        }
    }
    if !r.activation_table.is_empty() {
        out.push_str(&render_activation_table(&r.activation_table));
    }
    emit(&out)
}

fn real_main(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            execute(vec![config.resolve()?], &out.out_dir)?;
        }
        Command::Sweep {
            config,
            out,
            batch_sizes,
            activations,
            threshold,
        } => {
            if batch_sizes.is_empty() {
                return Err(Error::Usage("--batch-sizes is empty".into()));
            }
            let base = config.resolve_with(&[("strategy", "batch_vectorized".into()), ("batch_size", "1".into())])?;
            let max_batch = batch_sizes.iter().copied().max().unwrap_or(1);
            let n_samples = base.n_samples.max(max_batch);
            let activations = if activations.is_empty() {
                vec![base.network.activation]
            } else {
                activations
            };
            let mut configs = Vec::new();
            for &act in &activations {
                for &b in &batch_sizes {
                    if b == 0 {
                        return Err(Error::Config {
                            key: "batch_size".into(),
                            message: "must be at least 1".into(),
                        });
                    }
                    let mut cfg = base.clone();
                    cfg.n_samples = n_samples;
                    cfg.network.activation = act;
                    cfg.strategy = StrategyKind::BatchVectorized { batch_size: b };
                    cfg.run_id = format!("{}-b{b}-{act}", prefix(&config, "sweep"));
                    cfg.validate()?;
                    configs.push(cfg);
                }
            }
            let artifacts = execute(configs, &out.out_dir)?;
            let report = compare_runs(&artifacts[0], &artifacts[1..], threshold)?;
            print_report(&report)?;
        }
        Command::ThreadsSweep {
            mut config,
            out,
            strategies,
        } => {
            let list = config
                .threads
                .take()
                .ok_or_else(|| Error::Usage("threads-sweep needs --threads, e.g. --threads 1,2,4".into()))?;
            let threads = list
                .split(',')
                .map(|t| match t.trim().parse::<usize>() {
                    Ok(n) if n > 0 => Ok(n),
                    _ => Err(Error::Config {
                        key: "threads".into(),
                        message: format!("expected positive integers, got `{list}`"),
                    }),
                })
                .collect::<Result<Vec<_>>>()?;
            let base = config.resolve_with(&[("strategy", "sequential_online".into())])?;
            let mut baseline = base.clone();
            baseline.run_id = format!("{}-sequential", prefix(&config, "threads"));
            let mut configs = vec![baseline];
            for name in &strategies {
                for &t in &threads {
                    let mut cfg = base.clone();
                    cfg.strategy = StrategyKind::from_parts(name, None, Some(t))?;
                    if cfg.strategy.threads().is_none() {
                        return Err(Error::Usage(format!("`{name}` is not a threaded strategy")));
                    }
                    cfg.run_id = format!("{}-{}-t{t}", prefix(&config, "threads"), cfg.strategy.name());
                    cfg.validate()?;
                    configs.push(cfg);
                }
            }
            let artifacts = execute(configs, &out.out_dir)?;
            let report = compare_runs(&artifacts[0], &artifacts[1..], mlpbench::DEFAULT_KNEE_THRESHOLD)?;
            print_report(&report)?;
        }
        Command::Analyze { input, output } => {
            let report = build_report(&input)?;
            let json = serde_json::to_vec_pretty(&report).map_err(|e| Error::Format(e.to_string()))?;
            match output {
                Some(path) => {
                    fs::write(path, json)?;
                    print_report(&report)?;
                }
                None => write_stdout(&json)?,
            }
        }
        Command::PlotData { input, output } => {
            let report = match saved_report(&input.input)? {
                Some(report) => report,
                None => build_report(&input)?,
            };
            let json = emit_plot_data(&report);
            match output {
                Some(path) => fs::write(path, json)?,
                None => write_stdout(&json)?,
            }
        }
    }
    Ok(())
}

fn prefix(config: &ConfigArgs, default: &str) -> String {
    config.run_id.clone().unwrap_or_else(|| default.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // A reader that closes stdout early (e.g. `| head`) is not a failure.
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
