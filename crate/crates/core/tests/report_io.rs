use mlpbench::harness::Phase;
use mlpbench::report::{
    artifacts_from_rows, compare_runs, config_base, emit_csv, emit_plot_data, parse_config, parse_csv, RunArtifact,
    TimingRow, CSV_HEADER,
};
use mlpbench::{run_benchmark, ActivationKind, BenchConfig, LossKind, StrategyKind};
use proptest::prelude::*;

fn arb_row() -> impl Strategy<Value = TimingRow> {
    (
        "[a-zA-Z0-9_ ,\"-]{1,16}",
        prop_oneof![
            Just(("sequential_online", None, None)),
            (1usize..512).prop_map(|b| ("batch_vectorized", Some(b), None)),
            (1usize..64).prop_map(|t| ("thread_map_reduce", None, Some(t))),
            (1usize..64).prop_map(|t| ("thread_full_pipeline", None, Some(t))),
        ],
        any::<bool>(),
        any::<bool>(),
        1usize..5000,
        0usize..8,
        0usize..4,
        any::<u64>(),
    )
        .prop_map(
            |(run_id, (strategy, batch_size, threads), relu, mse, epochs, repeat, phase, wall_ns)| TimingRow {
                run_id,
                strategy: strategy.to_string(),
                activation: if relu {
                    ActivationKind::Relu
                } else {
                    ActivationKind::Sigmoid
                },
                loss: if mse { LossKind::Mse } else { LossKind::Bce },
                batch_size,
                threads,
                epochs,
                repeat,
                phase: Phase::ALL[phase],
                wall_ns,
            },
        )
}

proptest! {
    #[test]
    fn csv_round_trips(rows in prop::collection::vec(arb_row(), 0..20)) {
        let bytes = emit_csv(&rows);
        let header = format!("{}\n", CSV_HEADER);
        prop_assert!(bytes.starts_with(header.as_bytes()));
        prop_assert!(!bytes.contains(&b'\r'));
        prop_assert_eq!(parse_csv(&bytes).unwrap(), rows);
    }
}

fn small(run_id: &str, strategy: StrategyKind, activation: ActivationKind) -> BenchConfig {
    let mut cfg = parse_config(None, &[], &config_base()).unwrap();
    cfg.run_id = run_id.into();
    cfg.strategy = strategy;
    cfg.network.activation = activation;
    cfg.network.layer_widths = vec![4, 6, 1];
    cfg.n_samples = 32;
    cfg.epochs = 3;
    cfg.repeats = 2;
    cfg.warmup_repeats = 0;
    cfg
}

fn artifact(cfg: BenchConfig) -> RunArtifact {
    let run = run_benchmark(&cfg).unwrap();
    RunArtifact::from_run(cfg, &run).unwrap()
}

#[test]
fn artifacts_survive_json_and_csv() {
    let a = artifact(small(
        "a",
        StrategyKind::BatchVectorized { batch_size: 8 },
        ActivationKind::Relu,
    ));
    let json = serde_json::to_string(&a).unwrap();
    let back: RunArtifact = serde_json::from_str(&json).unwrap();
    assert_eq!(back, a);

    let rows = parse_csv(&emit_csv(&a.rows())).unwrap();
    let rebuilt = artifacts_from_rows(&rows, &a.config).unwrap();
    assert_eq!(rebuilt.len(), 1);
    assert_eq!(rebuilt[0].summary, a.summary);
    assert_eq!(rebuilt[0].config, a.config);
}

#[test]
fn records_obey_phase_sum() {
    for strategy in [
        StrategyKind::SequentialOnline,
        StrategyKind::BatchVectorized { batch_size: 5 },
        StrategyKind::ThreadMapReduce { threads: 3 },
        StrategyKind::ThreadFullPipeline { threads: 3 },
    ] {
        let a = artifact(small("x", strategy, ActivationKind::Sigmoid));
        for repeat in 0..2 {
            let get = |phase| {
                a.records
                    .iter()
                    .find(|r| r.repeat_index == repeat && r.phase == phase)
                    .unwrap()
                    .wall_ns
            };
            assert!(get(Phase::Forward) + get(Phase::Backward) + get(Phase::Update) <= get(Phase::Total));
        }
    }
}

#[test]
fn full_report_from_real_runs() {
    let base = artifact(small("seq", StrategyKind::SequentialOnline, ActivationKind::Relu));
    let mut variants = vec![artifact(small(
        "seq-sig",
        StrategyKind::SequentialOnline,
        ActivationKind::Sigmoid,
    ))];
    for b in [1, 2, 4, 8] {
        variants.push(artifact(small(
            &format!("b{b}"),
            StrategyKind::BatchVectorized { batch_size: b },
            ActivationKind::Relu,
        )));
    }
    variants.push(artifact(small(
        "mr2",
        StrategyKind::ThreadMapReduce { threads: 2 },
        ActivationKind::Relu,
    )));
    let report = compare_runs(&base, &variants, 0.85).unwrap();
    assert_eq!(report.variants.len(), variants.len());
    assert!(report
        .variants
        .iter()
        .flat_map(|v| &v.phases)
        .all(|p| p.speedup.is_none_or(|s| s > 0.0)));
    assert_eq!(report.batch_family.len(), 4);
    assert!(report.knee.is_some());
    let mr = report.variants.iter().find(|v| v.run_id == "mr2").unwrap();
    assert!(mr.amdahl.is_some() ^ mr.amdahl_note.is_some());
    assert!(report
        .activation_table
        .iter()
        .any(|r| r.strategy == StrategyKind::SequentialOnline));

    let plot: serde_json::Value = serde_json::from_slice(&emit_plot_data(&report)).unwrap();
    let names: Vec<&str> = plot["series"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["name"].as_str().unwrap())
        .collect();
    for expected in ["phase_total_ns", "runtime_vs_batch", "speedup_vs_threads"] {
        assert!(names.contains(&expected), "{names:?}");
    }
}
