mod common;

use std::process::Command;

use common::*;
use micsfed::expcli::{
    aggregate_cells, collaboration_value, final_epochs, parse_csv, run_on_dataset, run_seed, sweep_on, train_session,
    CollaborationScenario, EpochMetrics, Mode, Scenario, SweepKind, TrainedCell,
};
use micsfed::federation::{Session, SessionConfig, SessionData, TrainingConfig, TransportKind};
use micsfed::numkernel::RngStream;
use micsfed::par::Execution;
use micsfed::transform::PipelineConfig;

#[test]
fn collaboration_values_match_counting() {
    for scenario in Scenario::ALL {
        let s = CollaborationScenario {
            scenario,
            industries: 2,
            companies: 2,
            k: 3,
            m: 8,
        };
        assert_eq!(
            collaboration_value(&s),
            brute_force_value(scenario, 2, 2, 3, 8),
            "{scenario:?}"
        );
    }
    let s = CollaborationScenario {
        scenario: Scenario::Coalition,
        industries: 3,
        companies: 3,
        k: 2,
        m: 3,
    };
    assert_eq!(
        collaboration_value(&s),
        brute_force_value(Scenario::Coalition, 3, 3, 2, 3)
    );
}

fn cell(train_rows: usize, test_rows: usize, acc: f64) -> TrainedCell {
    TrainedCell {
        industry: 0,
        company: 0,
        train_rows,
        test_rows,
        epochs: vec![EpochMetrics {
            epoch: 1,
            train_loss: 0.5,
            train_accuracy: acc,
            test_accuracy: acc,
            wall_time: 0.0,
        }],
        transforms: Vec::new(),
        snapshots: Vec::new(),
        test_probabilities: Vec::new(),
        test_labels: Vec::new(),
    }
}

#[test]
fn weighting_equal_accuracies_is_identity() {
    let cells = [cell(10, 3, 0.625), cell(31, 8, 0.625), cell(7, 1, 0.625)];
    let agg = aggregate_cells(&cells);
    assert!((agg[0].test_accuracy - 0.625).abs() < 1e-15);
    assert!((agg[0].train_accuracy - 0.625).abs() < 1e-15);
    let mixed = aggregate_cells(&[cell(10, 1, 1.0), cell(30, 3, 0.0)]);
    assert!((mixed[0].test_accuracy - 0.25).abs() < 1e-15);
    assert!((mixed[0].train_accuracy - 0.25).abs() < 1e-15);
}

#[test]
fn transforms_ignore_test_rows() {
    let ds = small_wine(300);
    let sd = seed_data(&ds, 2, 2, 5);
    let cfg = session_config(5, small_training(2), TransportKind::Inproc);
    let transforms = |data: SessionData| {
        let states = Session::setup(data, cfg.clone()).unwrap().shutdown().unwrap();
        states
            .companies
            .iter()
            .map(|c| c.transform().unwrap().clone())
            .collect::<Vec<_>>()
    };
    let base = transforms(session_data(&sd, 2, 2));

    let mut flipped = session_data(&sd, 2, 2);
    for id in sd.test.customer_ids() {
        let l = flipped.labels.get_mut(id).unwrap();
        *l = 1 - *l;
    }
    assert_eq!(transforms(flipped), base);

    let mut shifted = session_data(&sd, 2, 2);
    for (_, te) in shifted.companies.iter_mut() {
        te.features = te.features.map(|v| v * 3.0 - 11.0);
    }
    assert_eq!(transforms(shifted), base);
}

#[test]
fn solo_cells_hold_block_sized_rows() {
    let ds = wine();
    for n in 1..=5 {
        let cfg = experiment("solo", 2, n, &[3], 1);
        let run = run_seed(&ds, &cfg, 3).unwrap();
        assert_eq!(run.cells.len(), 2 * n);
        let train_total: usize = run.cells.iter().filter(|c| c.industry == 0).map(|c| c.train_rows).sum();
        for c in &run.cells {
            let share = train_total as f64 / n as f64;
            assert!(
                (c.train_rows as f64 - share).abs() <= 1.0,
                "N={n}: {} vs {share}",
                c.train_rows
            );
        }
    }
}

#[test]
fn solo_single_cell_is_a_plain_run() {
    let ds = wine();
    let cfg = experiment("solo", 1, 1, &[8], 4);
    let solo = run_seed(&ds, &cfg, 8).unwrap();

    let root = RngStream::new(8);
    let sd = micsfed::expcli::prepare_seed(&ds, 1, 1, 0.8, &root).unwrap();
    let data = SessionData {
        companies_per_industry: vec![1],
        companies: sd.companies.clone(),
        labels: sd.labels(),
    };
    let session = SessionConfig {
        training: TrainingConfig::default(),
        pipeline: PipelineConfig::standardize_only(),
        transport: TransportKind::Inproc,
        execution: Execution::Sequential,
        rng: root.child("solo/industry:0/company:0"),
    };
    let plain = train_session(data, session, 4, false).unwrap();
    let accs: Vec<f64> = solo.records.iter().map(|r| r.test_accuracy).collect();
    let plain_accs: Vec<f64> = plain.epochs.iter().map(|e| e.test_accuracy).collect();
    assert_eq!(accs, plain_accs);
}

#[test]
fn final_accuracy_recounts_from_probabilities() {
    let ds = wine();
    for mode in ["mics", "solo"] {
        let cfg = experiment(mode, 2, 2, &[4], 3);
        let run = run_seed(&ds, &cfg, 4).unwrap();
        let (mut correct, mut total) = (0usize, 0usize);
        for c in &run.cells {
            for (p, &y) in c.test_probabilities.iter().zip(&c.test_labels) {
                correct += usize::from(u8::from(*p >= 0.5) == y);
                total += 1;
            }
        }
        let last = run.records.last().unwrap().test_accuracy;
        assert!((last - correct as f64 / total as f64).abs() < 1e-12, "{mode}");
    }
}

#[test]
fn modes_share_record_shape() {
    let ds = wine();
    let shape = |mode: &str| {
        let runs = run_on_dataset(&ds, &experiment(mode, 1, 1, &[1, 2], 3)).unwrap();
        runs.iter()
            .flat_map(|r| r.records.iter().map(|x| (x.industries, x.companies, x.seed, x.epoch)))
            .collect::<Vec<_>>()
    };
    assert_eq!(shape("mics"), shape("solo"));
    assert_eq!(shape("mics").len(), 6);
}

#[test]
fn sweeps_emit_one_row_per_cell_mode_seed() {
    let ds = wine();
    let template = experiment("mics", 1, 1, &[1, 2], 1);
    for (kind, cells) in [
        (SweepKind::Industries, 5),
        (SweepKind::Companies, 5),
        (SweepKind::Grid, 25),
    ] {
        let rows = sweep_on(&ds, kind, &template).unwrap();
        assert_eq!(rows.len(), cells * 2 * 2, "{kind:?}");
        assert_eq!(final_epochs(&rows).len(), rows.len());
        assert_eq!(rows.iter().filter(|r| r.mode == Mode::Solo).count(), cells * 2);
        assert!(rows
            .iter()
            .all(|r| (0.0..=1.0).contains(&r.test_accuracy) && (0.0..=1.0).contains(&r.train_accuracy)));
    }
}

#[test]
fn sequential_and_parallel_sweeps_agree() {
    let ds = small_wine(400);
    let mut template = experiment("mics", 1, 1, &[1, 2], 2);
    template.execution = Execution::Sequential;
    let seq = sweep_on(&ds, SweepKind::Industries, &template).unwrap();
    template.execution = Execution::Parallel;
    assert_eq!(sweep_on(&ds, SweepKind::Industries, &template).unwrap(), seq);
}

#[test]
fn tiny_cells_are_named_in_the_error() {
    let ds = small_wine(12);
    let err = run_seed(&ds, &experiment("solo", 1, 5, &[1], 1), 1).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("company") && msg.contains("M=1 N=5"), "{msg}");
}

#[test]
fn collaboration_beats_chance_at_m3() {
    let ds = wine();
    let runs = run_on_dataset(&ds, &experiment("mics", 3, 1, &[1, 2, 3, 4, 5], 200)).unwrap();
    let above = runs
        .iter()
        .filter(|r| r.records.last().unwrap().test_accuracy > 0.5)
        .count();
    assert!(above >= 4, "{above} of 5 seeds above chance");
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_micsfed"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn cli_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = wine_path();
    let data = data.to_str().unwrap();
    let mut outputs = Vec::new();
    for (k, extra) in [[].as_slice(), [].as_slice(), ["--sequential"].as_slice()]
        .iter()
        .enumerate()
    {
        let out = dir.path().join(format!("m{k}.csv"));
        let mut args = vec![
            "run",
            "--dataset",
            data,
            "--mode",
            "mics",
            "--industries",
            "2",
            "--companies",
            "2",
            "--seeds",
            "1,2",
            "--epochs",
            "3",
            "--out",
            out.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        let o = cli(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let records = parse_csv(std::str::from_utf8(&outputs[0]).unwrap()).unwrap();
    assert_eq!(records.len(), 2 * 3);
}

#[test]
fn cli_config_file_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("exp.conf");
    std::fs::write(
        &conf,
        format!(
            "# quick\ndataset = {}\nepochs = 2\nseeds = 3\nmode = solo\n",
            wine_path().display()
        ),
    )
    .unwrap();
    let o = cli(&["run", "--config", conf.to_str().unwrap(), "--companies", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = parse_csv(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(records.len(), 2);
    assert!(records
        .iter()
        .all(|r| r.mode == Mode::Solo && r.companies == 2 && r.seed == 3));

    let bad = cli(&["run", "--industries", "0"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(!bad.stderr.is_empty());

    let missing = cli(&["run", "--dataset", "/nonexistent/wine.csv", "--epochs", "1"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn cli_value_prints_closed_forms() {
    let o = cli(&[
        "value",
        "--scenario",
        "coalition",
        "--industries",
        "5",
        "--companies",
        "4",
        "--k",
        "3",
        "--m",
        "7",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("in units of k*m: 5km/1024"), "{text}");
    assert!(text.contains("feature points: 105/1024"), "{text}");
}
