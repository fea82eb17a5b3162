//! End-to-end acceptance run. Prints one `[PASS]`/`[FAIL]` line per criterion
//! and exits non-zero if any criterion fails.

mod common;

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use micsfed::expcli::{
    collaboration_value, km_expression, per_km, run_seed, sweep_on, CollaborationScenario, ExperimentConfig,
    MetricsRecord, Mode, Scenario, SweepKind,
};
use micsfed::federation::{
    encode, eps_stream, FrameLog, Message, Session, Split, TrainingConfig, TransportKind, HEADER_LEN,
};
use micsfed::nets::{
    bce_loss, finite_difference_check, kl_penalty, Architecture, GlobalNet, Layered, Noise, VariationalEncoder,
};
use micsfed::numkernel::{sample_standard_normal, Matrix, RngStream};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

/// Frozen-noise loss of the whole stack as a function of every parameter.
struct Stack {
    encoders: Vec<VariationalEncoder>,
    net: GlobalNet,
    inputs: Vec<Matrix>,
    eps: Vec<Matrix>,
    labels: Vec<u8>,
    beta: f64,
}

impl Stack {
    fn params(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.encoders.iter().flat_map(|e| e.flat_params()).collect();
        p.extend(self.net.flat_params());
        p
    }

    fn load(&mut self, p: &[f64]) {
        let mut at = 0;
        for e in &mut self.encoders {
            let n = e.param_count();
            e.set_flat_params(&p[at..at + n]);
            at += n;
        }
        self.net.set_flat_params(&p[at..]);
    }

    fn loss(&self) -> f64 {
        let mut kl = 0.0;
        let zs: Vec<Matrix> = self
            .encoders
            .iter()
            .zip(&self.inputs)
            .zip(&self.eps)
            .map(|((e, x), eps)| {
                let out = e.forward(x, Noise::Fixed(eps)).unwrap();
                kl += kl_penalty(&out.mu, &out.sigma, self.beta).unwrap().value;
                out.z
            })
            .collect();
        let refs: Vec<&Matrix> = zs.iter().collect();
        let (p, _) = self.net.forward(&Matrix::hstack(&refs).unwrap()).unwrap();
        bce_loss(&p, &self.labels).unwrap().0 + kl
    }
}

/// The analytic gradient is what one federated round at lr = 1 actually
/// subtracts from every parameter.
fn c1_gradients() -> Outcome {
    let ds = wine();
    let sd = seed_data(&ds, 2, 2, 1);
    let training = TrainingConfig {
        architecture: Architecture {
            embedding_dim: 3,
            ..Architecture::default()
        },
        learning_rate: 1.0,
        ..TrainingConfig::default()
    };
    let cfg = session_config(1, training, TransportKind::Inproc);
    let rows = [0usize, 1, 2, 3];
    let before = Session::setup(session_data(&sd, 2, 2), cfg.clone())
        .unwrap()
        .shutdown()
        .unwrap();
    let mut session = Session::setup(session_data(&sd, 2, 2), cfg.clone()).unwrap();
    session.run_round(&rows).unwrap();
    let after = session.shutdown().unwrap();

    let mut stack = Stack {
        encoders: before.industries.iter().map(|s| s.encoder.clone()).collect(),
        net: before.global.net.clone(),
        inputs: before
            .industries
            .iter()
            .map(|s| s.train.features.select_rows(&rows))
            .collect(),
        eps: (0..2)
            .map(|i| sample_standard_normal(&eps_stream(&cfg.rng, i, 1), rows.len(), 3))
            .collect(),
        labels: rows.iter().map(|&r| before.global.train_labels[r]).collect(),
        beta: cfg.training.beta,
    };
    let p0 = stack.params();
    let mut p1: Vec<f64> = after.industries.iter().flat_map(|s| s.encoder.flat_params()).collect();
    p1.extend(after.global.net.flat_params());
    let analytic: Vec<f64> = p0.iter().zip(&p1).map(|(a, b)| a - b).collect();

    let report = finite_difference_check(
        &p0,
        &analytic,
        |p| {
            stack.load(p);
            stack.loss()
        },
        1e-5,
        1e-4,
    );
    outcome(
        report.passed,
        format!(
            "{} parameters, max relative error {:.2e} (< 1e-4)",
            p0.len(),
            report.max_error
        ),
    )
}

fn c2_monolithic() -> Outcome {
    let ds = wine();
    let sd = seed_data(&ds, 1, 1, 2);
    let cfg = session_config(2, TrainingConfig::default(), TransportKind::Inproc);
    let mut reference = Reference::from_untrained(session_data(&sd, 1, 1), cfg.clone());
    let mut session = Session::setup(session_data(&sd, 1, 1), cfg).unwrap();
    let mut worst: f64 = 0.0;
    for round in 1..=20 {
        let fed = session.run_epoch().unwrap().loss;
        worst = worst.max((fed - reference.step(round)).abs());
    }
    outcome(worst <= 1e-10, format!("20 epochs, max |Δloss| {worst:.1e} (≤ 1e-10)"))
}

fn c3_transport() -> Outcome {
    let ds = wine();
    let sd = seed_data(&ds, 2, 2, 3);
    let run = |kind| {
        let mut s = Session::setup(
            session_data(&sd, 2, 2),
            session_config(3, TrainingConfig::default(), kind),
        )
        .unwrap();
        (0..5).map(|_| s.run_round(&[]).unwrap()).collect::<Vec<_>>()
    };
    let tcp = run(TransportKind::Tcp);
    let inproc = run(TransportKind::Inproc);
    let bits = |r: &[micsfed::federation::MetricsReport]| {
        r.iter()
            .map(|m| (m.round, m.loss.to_bits(), m.accuracy.to_bits()))
            .collect::<Vec<_>>()
    };
    let same = bits(&tcp) == bits(&inproc);
    outcome(
        same,
        format!(
            "5 rounds, final loss tcp {:.15} inproc {:.15}",
            tcp[4].loss, inproc[4].loss
        ),
    )
}

fn c4_values() -> Outcome {
    let expected = [
        (Scenario::Mics, "5km"),
        (Scenario::WithinIndustry, "km"),
        (Scenario::OneCompanyCrossIndustry, "1.25km"),
        (Scenario::Coalition, "5km/1024"),
        (Scenario::None, "km/4"),
    ];
    let mut ok = true;
    let mut shown = Vec::new();
    for (scenario, text) in expected {
        let s = CollaborationScenario {
            scenario,
            industries: 5,
            companies: 4,
            k: 3,
            m: 7,
        };
        let got = km_expression(&per_km(&s));
        ok &= got == text;
        shown.push(got);
    }
    let mut counted = 0;
    for scenario in Scenario::ALL {
        let s = CollaborationScenario {
            scenario,
            industries: 2,
            companies: 2,
            k: 3,
            m: 8,
        };
        if collaboration_value(&s) == brute_force_value(scenario, 2, 2, 3, 8) {
            counted += 1;
        }
    }
    ok &= counted == 5;
    outcome(
        ok,
        format!("M=5 N=4: {}; counting oracle {counted}/5", shown.join(", ")),
    )
}

/// The trend criteria train with 64-row mini-batches; everything else is the
/// default experiment configuration.
fn trend_template() -> ExperimentConfig {
    ExperimentConfig {
        dataset: wine_path(),
        batch_size: Some(64),
        ..ExperimentConfig::default()
    }
}

type Means = HashMap<(Mode, usize, usize), f64>;

fn means(rows: &[MetricsRecord]) -> Means {
    let mut acc: HashMap<(Mode, usize, usize), Vec<f64>> = HashMap::new();
    for r in rows {
        acc.entry((r.mode, r.industries, r.companies))
            .or_default()
            .push(r.test_accuracy);
    }
    acc.into_iter().map(|(k, v)| (k, mean(v))).collect()
}

/// Final-epoch rows for arbitrary cells, every (cell, mode, seed) in parallel.
fn final_rows(cells: &[(usize, usize)], template: &ExperimentConfig) -> Vec<MetricsRecord> {
    let ds = wine();
    let mut jobs = Vec::new();
    for &(m, n) in cells {
        for mode in [Mode::Mics, Mode::Solo] {
            for &seed in &template.seeds {
                jobs.push((m, n, mode, seed));
            }
        }
    }
    template
        .execution
        .try_map(jobs, |(m, n, mode, seed)| {
            let cfg = ExperimentConfig {
                industries: m,
                companies: n,
                mode,
                ..template.clone()
            };
            run_seed(&ds, &cfg, seed).map(|r| *r.records.last().unwrap())
        })
        .unwrap()
}

fn c5_industries(rows: &[MetricsRecord], took: Duration) -> Outcome {
    let mu = means(rows);
    let (mics5, solo5, mics1) = (
        mu[&(Mode::Mics, 5, 1)],
        mu[&(Mode::Solo, 5, 1)],
        mu[&(Mode::Mics, 1, 1)],
    );
    let margin = mics5 - solo5;
    let ok = mics5 > solo5 && mics5 >= mics1 - 0.02 && margin >= 0.03 && took < Duration::from_secs(600);
    outcome(
        ok,
        format!(
            "M=5: mics {mics5:.4} solo {solo5:.4} (margin {margin:+.4}, target ≥ 0.03); mics M=1 {mics1:.4}; {}",
            secs(took)
        ),
    )
}

fn c6_companies(rows: &[MetricsRecord], took: Duration) -> Outcome {
    let mu = means(rows);
    let gaps: Vec<f64> = (1..=5)
        .map(|n| mu[&(Mode::Mics, 1, n)] - mu[&(Mode::Solo, 1, n)])
        .collect();
    let worst = gaps.iter().fold(0.0f64, |a, g| a.max(g.abs()));
    let shown: Vec<String> = gaps.iter().map(|g| format!("{g:+.3}")).collect();
    outcome(
        worst <= 0.05 && took < Duration::from_secs(600),
        format!(
            "M=1 mics−solo by N: [{}], max |gap| {worst:.4} (≤ 0.05); {}",
            shown.join(", "),
            secs(took)
        ),
    )
}

fn c7_grid(rows: &[MetricsRecord], took: Duration) -> Outcome {
    let mu = means(rows);
    let mut ok = took < Duration::from_secs(1800);
    let mut worst_gap = f64::INFINITY;
    let mut worst_spread: f64 = 0.0;
    for n in 1..=5 {
        let gap = mu[&(Mode::Mics, 5, n)] - mu[&(Mode::Solo, 5, n)];
        worst_gap = worst_gap.min(gap);
        let across: Vec<f64> = (2..=5).map(|m| mu[&(Mode::Mics, m, n)]).collect();
        let spread = across.iter().cloned().fold(f64::MIN, f64::max) - across.iter().cloned().fold(f64::MAX, f64::min);
        worst_spread = worst_spread.max(spread);
        ok &= gap >= 0.0 && spread <= 0.05;
    }
    outcome(
        ok,
        format!(
            "min over N of mics−solo at M=5 {worst_gap:+.4} (≥ 0); max mics spread over M=2..5 {worst_spread:.4} (≤ 0.05); {}",
            secs(took)
        ),
    )
}

fn c8_reparameterization() -> Outcome {
    let root = RngStream::new(8);
    let enc = VariationalEncoder::new(5, &[16], 4, &root.child("encoder"));
    let row = micsfed::numkernel::sample_uniform(&root.child("x"), 1, 5, -1.0, 1.0);
    let n = 10_000;
    let x = Matrix::from_rows(&vec![row.row(0).to_vec(); n]).unwrap();
    let out = enc.forward(&x, Noise::Draw(&root.child("eps"))).unwrap();
    let mut ok = true;
    let (mut worst_mean, mut worst_var): (f64, f64) = (0.0, 0.0);
    for j in 0..out.z.cols() {
        let (mu, sigma) = (out.mu.row(0)[j], out.sigma.row(0)[j]);
        let col = out.z.column(j);
        let m = mean(col.iter().copied());
        let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let mean_err = (m - mu).abs() / (sigma / (n as f64).sqrt());
        let var_err = (var - sigma * sigma).abs() / (sigma * sigma);
        worst_mean = worst_mean.max(mean_err);
        worst_var = worst_var.max(var_err);
        ok &= mean_err <= 4.0 && var_err <= 0.10;
    }
    outcome(
        ok,
        format!(
            "10^4 draws: max |mean−μ| {worst_mean:.2}σ/100 (≤ 4), max variance error {:.1}% (≤ 10%)",
            worst_var * 100.0
        ),
    )
}

fn c9_determinism(dir: &Path) -> Outcome {
    let data = wine_path();
    let data = data.to_str().unwrap().to_string();
    let invocations: Vec<Vec<&str>> = vec![
        vec![
            "run",
            "--mode",
            "mics",
            "--industries",
            "3",
            "--companies",
            "2",
            "--seeds",
            "1,2",
            "--epochs",
            "5",
        ],
        vec![
            "run",
            "--mode",
            "solo",
            "--industries",
            "2",
            "--companies",
            "3",
            "--seeds",
            "4",
            "--epochs",
            "5",
            "--batch-size",
            "64",
        ],
        vec![
            "sweep",
            "--kind",
            "companies",
            "--seeds",
            "1",
            "--epochs",
            "3",
            "--transport",
            "tcp",
        ],
    ];
    let mut ok = true;
    for (k, args) in invocations.iter().enumerate() {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = dir.join(format!("c9-{k}-{rep}.csv"));
            let status = Command::new(env!("CARGO_BIN_EXE_micsfed"))
                .args(args)
                .args(["--dataset", &data, "--out", out.to_str().unwrap()])
                .status()
                .expect("binary runs");
            ok &= status.success();
            outputs.push(std::fs::read(&out).unwrap_or_default());
        }
        ok &= !outputs[0].is_empty() && outputs[0] == outputs[1];
    }
    outcome(ok, format!("{} invocations each repeated twice", invocations.len()))
}

fn c10_watermark() -> Outcome {
    let ds = wine();
    let mut sd = seed_data(&ds, 2, 2, 10);
    let mut k = 0u64;
    for (tr, te) in sd.companies.iter_mut() {
        for v in [tr, te] {
            for r in 0..v.features.rows() {
                k += 1;
                v.features.row_mut(r)[0] = 7_777.0 + k as f64 * 0.001_953_125;
            }
        }
    }
    let bits = |vals: Vec<f64>| vals.into_iter().map(f64::to_bits).collect::<HashSet<u64>>();
    let raw = bits(
        sd.companies
            .iter()
            .flat_map(|(tr, te)| tr.features.as_slice().iter().chain(te.features.as_slice()).copied())
            .collect(),
    );
    let sentinels = bits(
        sd.companies
            .iter()
            .flat_map(|(tr, te)| tr.features.column(0).into_iter().chain(te.features.column(0)))
            .collect(),
    );
    let training = TrainingConfig {
        batch_size: Some(64),
        ..TrainingConfig::default()
    };
    let log = FrameLog::new();
    let mut s = Session::setup_with_log(
        session_data(&sd, 2, 2),
        session_config(10, training, TransportKind::Inproc),
        Some(&log),
    )
    .unwrap();
    let setup_frames = log.len();
    for _ in 0..20 {
        s.run_epoch().unwrap();
        s.evaluate(Split::Train).unwrap();
        s.evaluate(Split::Test).unwrap();
    }
    let views: Vec<_> = sd.companies.iter().map(|(_, te)| te.clone()).collect();
    s.predict(&views).unwrap();
    drop(s);

    let hits = |frame: &[u8], set: &HashSet<u64>| {
        frame[HEADER_LEN..]
            .windows(8)
            .filter(|w| set.contains(&u64::from_le_bytes(<[u8; 8]>::try_from(*w).unwrap())))
            .count()
    };
    let (tr, _) = &sd.companies[0];
    let control = encode(&Message::EmbeddingUp {
        industry: 0,
        round: 1,
        z: tr.features.clone(),
    });
    let detects = hits(&control, &sentinels) == tr.len();
    let frames = log.frames();
    let mut leaks = 0;
    for (n, f) in frames.iter().enumerate() {
        leaks += hits(f, &sentinels);
        if n >= setup_frames {
            leaks += hits(f, &raw);
        }
    }
    outcome(
        detects && leaks == 0,
        format!(
            "{} frames ({} after setup) scanned for {} raw values: {leaks} hits; scanner control {}",
            frames.len(),
            frames.len() - setup_frames,
            raw.len(),
            if detects { "ok" } else { "failed" }
        ),
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut record = |name: &'static str, o: Outcome| {
        println!("[{}] {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };

    let timed = |f: &dyn Fn() -> Outcome, limit: Duration| {
        let start = Instant::now();
        let mut o = f();
        let took = start.elapsed();
        o.passed &= took < limit;
        o.detail = format!("{}; {}", o.detail, secs(took));
        o
    };
    record("C1 gradient correctness", timed(&c1_gradients, Duration::from_secs(10)));
    record(
        "C2 monolithic equivalence",
        timed(&c2_monolithic, Duration::from_secs(30)),
    );
    record(
        "C3 transport equivalence",
        timed(&c3_transport, Duration::from_secs(30)),
    );
    record("C4 collaboration arithmetic", timed(&c4_values, Duration::from_secs(1)));

    let template = trend_template();
    let ds = wine();
    let start = Instant::now();
    let industries = sweep_on(&ds, SweepKind::Industries, &template).expect("industries sweep");
    let t_industries = start.elapsed();
    record("C5 industries trend", c5_industries(&industries, t_industries));

    let start = Instant::now();
    let companies = sweep_on(&ds, SweepKind::Companies, &template).expect("companies sweep");
    let t_companies = start.elapsed();
    record("C6 companies trend", c6_companies(&companies, t_companies));

    // The grid reuses the two sweeps above; its runtime counts all three parts.
    let start = Instant::now();
    let rest: Vec<(usize, usize)> = SweepKind::Grid
        .cells()
        .into_iter()
        .filter(|&(m, n)| m > 1 && n > 1)
        .collect();
    let mut grid = final_rows(&rest, &template);
    grid.extend(industries.iter().copied());
    grid.extend(companies.iter().copied().filter(|r| r.companies > 1));
    let t_grid = start.elapsed() + t_industries + t_companies;
    assert_eq!(grid.len(), 25 * 2 * template.seeds.len());
    record("C7 grid trend", c7_grid(&grid, t_grid));

    record(
        "C8 reparameterization statistics",
        timed(&c8_reparameterization, Duration::from_secs(5)),
    );
    record("C9 determinism", c9_determinism(dir.path()));
    record("C10 no raw data on the wire", c10_watermark());

    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.passed).map(|(n, _)| *n).collect();
    println!("acceptance: {}/{} passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
