use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use micsfed::expcli::{
    collaboration_value, emit_csv, km_expression, per_km, render_csv, run_experiment_detailed, sweep, to_decimal,
    CollaborationScenario, ExperimentConfig, MetricsRecord, Scenario, SeedRecord, SweepKind,
};
use micsfed::par::Execution;
use micsfed::{Error, Result};

#[derive(Parser)]
#[command(
    name = "micsfed",
    version,
    about = "Multi-industry, multi-company federated training simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration over its seeds and write per-epoch metrics.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// mics or solo.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        industries: Option<usize>,
        #[arg(long)]
        companies: Option<usize>,
        /// Also write fitted transforms and final parameters as JSON.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Run both modes over a grid of cells and write final-epoch metrics.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// industries, companies or grid.
        #[arg(long)]
        kind: String,
    },
    /// Print the feature-point value of a collaboration scenario.
    Value {
        /// mics, within_industry, one_company_cross_industry, coalition or none.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        industries: u64,
        #[arg(long)]
        companies: u64,
        /// Features per company.
        #[arg(long)]
        k: u64,
        /// Customers.
        #[arg(long)]
        m: u64,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key = value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// One seed or a comma-separated list.
    #[arg(long, alias = "seeds")]
    seed: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long = "k-pca")]
    k_pca: Option<usize>,
    #[arg(long = "embed-dim")]
    embed_dim: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long = "train-frac")]
    train_frac: Option<f64>,
    /// inproc or tcp.
    #[arg(long)]
    transport: Option<String>,
    /// Mini-batch size; `full` (default) trains on every row each round.
    #[arg(long = "batch-size")]
    batch_size: Option<String>,
    /// Metrics CSV path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record real elapsed seconds instead of 0 in wall_time_s.
    #[arg(long)]
    timing: bool,
    /// Run seeds and cells one at a time.
    #[arg(long)]
    sequential: bool,
}

impl CommonArgs {
    fn build(&self, extra: &[(&str, Option<String>)]) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::default();
        if let Some(path) = &self.config {
            config.apply_file(path)?;
        }
        let flags: Vec<(&str, Option<String>)> = vec![
            ("dataset", self.dataset.as_ref().map(|p| p.display().to_string())),
            ("seeds", self.seed.clone()),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("lr", self.lr.map(|v| v.to_string())),
            ("k-pca", self.k_pca.map(|v| v.to_string())),
            ("embed-dim", self.embed_dim.map(|v| v.to_string())),
            ("beta", self.beta.map(|v| v.to_string())),
            ("train-frac", self.train_frac.map(|v| v.to_string())),
            ("transport", self.transport.clone()),
            ("batch-size", self.batch_size.clone()),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
        ];
        for (key, value) in flags.iter().chain(extra) {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        if self.timing {
            config.timing = true;
        }
        if self.sequential {
            config.execution = Execution::Sequential;
        }
        config.validate()?;
        Ok(config)
    }
}

fn write_records(records: &[MetricsRecord], config: &ExperimentConfig) -> Result<()> {
    match &config.output {
        Some(path) => emit_csv(records, path),
        None => {
            print!("{}", render_csv(records)?);
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            common,
            mode,
            industries,
            companies,
            record,
        } => {
            let config = common.build(&[
                ("mode", mode),
                ("industries", industries.map(|v| v.to_string())),
                ("companies", companies.map(|v| v.to_string())),
            ])?;
            let runs = run_experiment_detailed(&config)?;
            let records: Vec<MetricsRecord> = runs.iter().flat_map(|r| r.records.clone()).collect();
            write_records(&records, &config)?;
            if let Some(path) = record {
                let seeds: Vec<SeedRecord> = runs.iter().map(|r| r.record()).collect();
                let json = serde_json::json!({ "config": config, "seeds": seeds });
                let text = serde_json::to_string_pretty(&json)
                    .map_err(|e| Error::State(format!("cannot encode run record: {e}")))?;
                std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?;
            }
            Ok(())
        }
        Command::Sweep { common, kind } => {
            let kind: SweepKind = kind.parse()?;
            let config = common.build(&[])?;
            let records = sweep(kind, &config)?;
            write_records(&records, &config)
        }
        Command::Value {
            scenario,
            industries,
            companies,
            k,
            m,
        } => {
            let s = CollaborationScenario {
                scenario: scenario.parse::<Scenario>()?,
                industries,
                companies,
                k,
                m,
            };
            s.validate()?;
            let v = collaboration_value(&s);
            println!("scenario: {}", s.scenario.as_str());
            println!("feature points: {v}");
            println!("decimal: {}", to_decimal(&v, 12));
            println!("in units of k*m: {}", km_expression(&per_km(&s)));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                _ => 1,
            })
        }
    }
}
