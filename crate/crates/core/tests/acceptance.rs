//! Acceptance checks. Runs without the libtest harness so that every
//! criterion prints exactly one PASS or FAIL line; exits non-zero if any
//! criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use mlpbench::harness::DEFAULT_WARMUP_REPEATS;
use mlpbench::report::{activation_table, config_base, parse_config, RunArtifact};
use mlpbench::{
    amdahl_speedup, backward, detect_knee, estimate_parallel_fraction, forward, init_params, make_dataset,
    run_benchmark, train, ActivationKind, BenchConfig, LossKind, NetworkConfig, Phase, Protocol, SplitMix64,
    StrategyKind, DEFAULT_KNEE_THRESHOLD,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(started: Instant, budget: Duration) -> Result<(), String> {
    let took = started.elapsed();
    ensure(took < budget, || format!("took {took:.2?}, budget {budget:?}"))
}

fn amdahl_forward() -> Outcome {
    let s = amdahl_speedup(0.9, 6.0).map_err(|e| e.to_string())?;
    ensure((s - 4.0).abs() <= 1e-12, || format!("got {s}"))?;
    Ok(format!("amdahl_speedup(0.9, 6) = {s}"))
}

fn amdahl_inverse() -> Outcome {
    let p = estimate_parallel_fraction(4.0, 6.0).map_err(|e| e.to_string())?;
    ensure((p - 0.9).abs() <= 1e-12, || {
        format!("estimate_parallel_fraction(4, 6) = {p}")
    })?;
    let mut worst = 0.0f64;
    for i in 0..=10 {
        let p = i as f64 / 10.0;
        for s in [2.0, 4.0, 6.0, 8.0, 16.0] {
            let observed = amdahl_speedup(p, s).map_err(|e| e.to_string())?;
            let back = estimate_parallel_fraction(observed, s).map_err(|e| e.to_string())?;
            worst = worst.max((back - p).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("grid round-trip error {worst:e}"))?;
    Ok(format!("p = {p}; 11x5 grid max error {worst:e}"))
}

fn gradient_check() -> Outcome {
    let started = Instant::now();
    let caps = [8usize, 16, 4, 2];
    let mut rng = SplitMix64::new(0xC0FFEE);
    let (mut nets, mut skipped, mut worst) = (0usize, 0usize, 0.0f64);
    for case in 0..400u64 {
        let len = 2 + (case % 3) as usize;
        let mut widths: Vec<usize> = caps[..len]
            .iter()
            .map(|&cap| 1 + (rng.next_u64() % cap as u64) as usize)
            .collect();
        if case % 25 == 0 {
            widths = caps.to_vec();
        }
        let activation = if case % 2 == 0 {
            ActivationKind::Relu
        } else {
            ActivationKind::Sigmoid
        };
        let loss = if (case / 2) % 2 == 0 {
            LossKind::Mse
        } else {
            LossKind::Bce
        };
        let cfg = NetworkConfig {
            layer_widths: widths,
            activation,
            loss,
            learning_rate: 0.1,
            seed: rng.next_u64(),
        };
        let p = random_params(&cfg, &mut rng);
        let rows = 1 + (rng.next_u64() % 5) as usize;
        let x = random_matrix(&mut rng, rows, cfg.input_width(), -1.0, 1.0);
        let y = random_targets(&mut rng, rows, cfg.output_width(), &cfg);
        if activation == ActivationKind::Relu && min_hidden_abs_preactivation(&p, &x, &cfg) <= 1e-3 {
            skipped += 1;
            continue;
        }
        worst = worst.max(max_gradient_error(&p, &x, &y, &cfg));
        nets += 1;
    }
    ensure(worst <= 1e-6, || format!("max relative error {worst:e}"))?;
    ensure(nets >= 300, || format!("only {nets} nets checked"))?;
    within_budget(started, Duration::from_secs(10))?;
    Ok(format!(
        "{nets} nets, max relative error {worst:.2e} (h = {FD_STEP:e}); {skipped} skipped at ReLU kinks"
    ))
}

fn strategy_equivalence() -> Outcome {
    let started = Instant::now();
    let cfg = NetworkConfig::default();
    let data = make_dataset(64, &cfg, 1234).map_err(|e| e.to_string())?;
    let run = |s| {
        train(s, init_params(&cfg).unwrap(), &data, 10, &cfg)
            .map(|t| t.params)
            .map_err(|e| e.to_string())
    };
    let full = run(StrategyKind::BatchVectorized { batch_size: 64 })?;
    let mut worst = 0.0f64;
    for threads in [1, 2, 4, 8] {
        let d = run(StrategyKind::ThreadMapReduce { threads })?
            .max_abs_diff(&full)
            .unwrap();
        ensure(d <= 1e-9, || format!("map-reduce t={threads} differs by {d:e}"))?;
        worst = worst.max(d);
    }
    let online = run(StrategyKind::SequentialOnline)?;
    ensure(
        run(StrategyKind::ThreadFullPipeline { threads: 1 })?.bit_eq(&online),
        || "full-pipeline t=1 not bit-equal to online".into(),
    )?;
    ensure(
        run(StrategyKind::BatchVectorized { batch_size: 1 })?.bit_eq(&online),
        || "batch B=1 not bit-equal to online".into(),
    )?;
    within_budget(started, Duration::from_secs(30))?;
    Ok(format!(
        "map-reduce t in {{1,2,4,8}} max diff {worst:.1e}; pipeline t=1 and B=1 bit-equal to online"
    ))
}

fn batch_gradient_identity() -> Outcome {
    let started = Instant::now();
    let mut worst = 0.0f64;
    for (k, (activation, loss)) in [
        (ActivationKind::Relu, LossKind::Mse),
        (ActivationKind::Sigmoid, LossKind::Mse),
        (ActivationKind::Relu, LossKind::Bce),
        (ActivationKind::Sigmoid, LossKind::Bce),
    ]
    .into_iter()
    .enumerate()
    {
        let cfg = NetworkConfig {
            activation,
            loss,
            ..NetworkConfig::default()
        };
        for b in [1usize, 2, 8, 64] {
            let mut rng = SplitMix64::new(100 * k as u64 + b as u64);
            let p = random_params(&cfg, &mut rng);
            let x = random_matrix(&mut rng, b, cfg.input_width(), -1.0, 1.0);
            let y = random_targets(&mut rng, b, cfg.output_width(), &cfg);
            let (_, cache) = forward(&p, &x, &cfg).map_err(|e| e.to_string())?;
            let g = backward(&p, &cache, &y, &cfg).map_err(|e| e.to_string())?;
            let mut mean = p.zeros_like();
            for i in 0..b {
                let (xi, yi) = (x.slice_rows(i, i + 1).unwrap(), y.slice_rows(i, i + 1).unwrap());
                let (_, c) = forward(&p, &xi, &cfg).unwrap();
                mean.add_in_place(&backward(&p, &c, &yi, &cfg).unwrap()).unwrap();
            }
            mean.div_scalar_in_place(b as f64);
            let d = g.max_abs_diff(&mean).unwrap();
            ensure(d <= 1e-10, || format!("{activation}/{loss} B={b}: {d:e}"))?;
            worst = worst.max(d);
        }
    }
    within_budget(started, Duration::from_secs(5))?;
    Ok(format!(
        "B in {{1,2,8,64}}, both activations and losses, max diff {worst:.1e}"
    ))
}

fn knee_oracle() -> Outcome {
    let series = [
        (1, 1.0),
        (2, 2.0),
        (4, 4.0),
        (8, 8.0),
        (16, 16.0),
        (32, 32.0),
        (64, 51.2),
        (128, 81.92),
        (256, 163.84),
        (512, 327.68),
    ];
    let k = detect_knee(&series, DEFAULT_KNEE_THRESHOLD).map_err(|e| e.to_string())?;
    ensure(k.flagged_interval == Some((32, 128)), || {
        format!("interval {:?}", k.flagged_interval)
    })?;
    ensure(k.boundary_estimate == Some(64.0), || {
        format!("estimate {:?}", k.boundary_estimate)
    })?;
    let linear: Vec<(usize, f64)> = (0..10).map(|i| (1usize << i, 5.0 * (1u64 << i) as f64)).collect();
    let l = detect_knee(&linear, DEFAULT_KNEE_THRESHOLD).map_err(|e| e.to_string())?;
    ensure(l.flagged_interval.is_none(), || {
        format!("linear series flagged {:?}", l.flagged_interval)
    })?;
    Ok("synthetic series flags (32, 128) with estimate 64; linear series flags nothing".into())
}

fn measured_workload(run_id: &str, strategy: StrategyKind) -> BenchConfig {
    BenchConfig {
        run_id: run_id.into(),
        strategy,
        n_samples: 1024,
        epochs: 50,
        repeats: 3,
        warmup_repeats: DEFAULT_WARMUP_REPEATS,
        ..BenchConfig::default()
    }
}

fn total_min(a: &RunArtifact) -> f64 {
    a.min_ns(Phase::Total).unwrap() as f64
}

fn phase_sum_holds(a: &RunArtifact) -> bool {
    (0..a.config.repeats).all(|r| {
        let get = |phase| {
            a.records
                .iter()
                .find(|x| x.repeat_index == r && x.phase == phase)
                .map_or(u64::MAX, |x| x.wall_ns)
        };
        get(Phase::Forward)
            .saturating_add(get(Phase::Backward))
            .saturating_add(get(Phase::Update))
            <= get(Phase::Total)
    })
}

fn measured_speedups(emitted: &mut Vec<RunArtifact>) -> Outcome {
    let started = Instant::now();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut bench = |id: &str, s| -> Result<RunArtifact, String> {
        let cfg = measured_workload(id, s);
        let run = run_benchmark(&cfg).map_err(|e| e.to_string())?;
        let a = RunArtifact::from_run(cfg, &run).map_err(|e| e.to_string())?;
        emitted.push(a.clone());
        Ok(a)
    };
    let seq = bench("sequential", StrategyKind::SequentialOnline)?;
    let batch = bench("batch-128", StrategyKind::BatchVectorized { batch_size: 128 })?;
    let mr = bench("map-reduce-4", StrategyKind::ThreadMapReduce { threads: 4 })?;

    let s_batch = total_min(&seq) / total_min(&batch);
    let s_mr = total_min(&seq) / total_min(&mr);
    ensure(s_batch > 2.0, || {
        format!("batch B=128 speedup {s_batch:.2}x, needs > 2x")
    })?;
    let mr_note = if cores >= 4 {
        ensure(s_mr > 1.5, || {
            format!("map-reduce t=4 speedup {s_mr:.2}x on {cores} cores, needs > 1.5x")
        })?;
        format!("map-reduce t=4 {s_mr:.2}x > 1.5x")
    } else {
        format!("map-reduce t=4 {s_mr:.2}x (not asserted: {cores} core(s) available, needs >= 4)")
    };
    within_budget(started, Duration::from_secs(300))?;
    Ok(format!("N=1024, 50 epochs: batch B=128 {s_batch:.2}x > 2x; {mr_note}"))
}

fn methodology(emitted: &[RunArtifact]) -> Outcome {
    ensure(
        Protocol::END_TO_END
            == Protocol {
                epochs: 1000,
                repeats: 4,
            },
        || format!("end-to-end preset {:?}", Protocol::END_TO_END),
    )?;
    ensure(
        Protocol::PHASE_SPLIT
            == Protocol {
                epochs: 100,
                repeats: 4,
            },
        || format!("phase-split preset {:?}", Protocol::PHASE_SPLIT),
    )?;
    let defaults = parse_config(None, &[], &config_base()).map_err(|e| e.to_string())?;
    ensure(defaults.epochs == 1000 && defaults.repeats == 4, || {
        format!(
            "default config runs {} epochs x {} repeats",
            defaults.epochs, defaults.repeats
        )
    })?;
    ensure(!emitted.is_empty(), || "no records emitted".into())?;
    let records: usize = emitted.iter().map(|a| a.records.len()).sum();
    if let Some(bad) = emitted.iter().find(|a| !phase_sum_holds(a)) {
        return Err(format!("phase sum exceeds total in run {}", bad.run_id()));
    }
    Ok(format!(
        "presets 1000x4 and 100x4; forward+backward+update <= total on all {records} records"
    ))
}

fn activation_comparison(emitted: &mut Vec<RunArtifact>) -> Outcome {
    let strategies = [
        StrategyKind::SequentialOnline,
        StrategyKind::BatchVectorized { batch_size: 16 },
        StrategyKind::ThreadMapReduce { threads: 2 },
        StrategyKind::ThreadFullPipeline { threads: 2 },
    ];
    let mut runs = Vec::new();
    for s in strategies {
        for act in [ActivationKind::Relu, ActivationKind::Sigmoid] {
            let mut cfg = BenchConfig {
                run_id: format!("{}-{act}", s.name()),
                strategy: s,
                n_samples: 128,
                epochs: Protocol::PHASE_SPLIT.epochs / 10,
                repeats: 2,
                ..BenchConfig::default()
            };
            cfg.network.activation = act;
            let run = run_benchmark(&cfg).map_err(|e| e.to_string())?;
            runs.push(RunArtifact::from_run(cfg, &run).map_err(|e| e.to_string())?);
        }
    }
    let table = activation_table(&runs);
    emitted.extend(runs);
    for s in strategies {
        let rows = table.iter().filter(|r| r.strategy == s).count();
        ensure(rows == Phase::ALL.len(), || format!("{s}: {rows} table rows"))?;
    }
    let ratios: Vec<String> = table
        .iter()
        .filter(|r| r.phase == Phase::Total)
        .map(|r| format!("{} {:.2}", r.strategy.name(), r.relu_over_sigmoid.unwrap_or(f64::NAN)))
        .collect();
    Ok(format!(
        "table for 4 strategies; relu/sigmoid total: {}",
        ratios.join(", ")
    ))
}

fn main() -> ExitCode {
    let mut emitted = Vec::new();
    let results: Vec<(&str, Outcome)> = vec![
        ("amdahl forward", amdahl_forward()),
        ("amdahl inverse and round-trip grid", amdahl_inverse()),
        ("gradient check suite", gradient_check()),
        ("strategy equivalence", strategy_equivalence()),
        ("batch-gradient identity", batch_gradient_identity()),
        ("knee detection oracle", knee_oracle()),
        ("measured speedups", measured_speedups(&mut emitted)),
        ("relu vs sigmoid table", activation_comparison(&mut emitted)),
        ("methodology presets and phase sums", methodology(&emitted)),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  {name:<36} {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<36} {why}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
