//! Command-line benchmark harness: dataset generation, experiment runs
//! against the exact oracle, metric summaries, and the deletion error-ratio
//! bound.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use hidden_agg::estimators::math::reissue_error_bound;
use hidden_agg::harness::{
    self, generate_boolean_db, read_metrics_csv, run_experiment, summarize, write_csv_db,
    write_metrics_csv, write_summary_csv, ExperimentConfig, HarnessError, InitialSize,
    SchemaSource,
};

#[derive(Parser)]
#[command(
    name = "hidden-agg",
    about = "Simulate a dynamic database behind a top-k search interface and benchmark aggregate-tracking estimators against exact ground truth"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Boolean dataset CSV.
    Generate(GenerateArgs),
    /// Run an experiment and write a metrics CSV plus a config sidecar.
    Run(RunArgs),
    /// Summarize a metrics CSV into per-round statistics.
    Summarize(SummarizeArgs),
    /// Evaluate the deletion error-ratio bound for given parameters.
    Bound(BoundArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of tuples to generate.
    #[arg(long, default_value_t = 5000)]
    n: usize,
    /// Number of Boolean attributes.
    #[arg(long, default_value_t = 30)]
    m: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration; its fields override the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Metrics CSV output path.
    #[arg(long)]
    out: PathBuf,

    /// Boolean-synthetic starting size (ignored when --csv is given).
    #[arg(long, default_value_t = 5000)]
    n0: usize,
    /// Boolean-synthetic attribute count.
    #[arg(long, default_value_t = 30)]
    m: usize,
    /// Categorical CSV dataset path.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Initial tuple count drawn from the CSV dataset.
    #[arg(long)]
    initial_count: Option<usize>,
    /// Initial fraction drawn from the CSV dataset.
    #[arg(long)]
    initial_fraction: Option<f64>,

    /// Tuples inserted per round.
    #[arg(long, default_value_t = 50)]
    inserts_per_round: u32,
    /// Fraction of tuples deleted per round.
    #[arg(long, default_value_t = 0.005)]
    delete_fraction: f64,
    /// Update mode: round or constant.
    #[arg(long, default_value = "round")]
    mode: String,

    /// Top-k cutoff of the search interface.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Query budget per round (G).
    #[arg(long, default_value_t = 100)]
    budget: u32,
    #[arg(long, default_value_t = 50)]
    rounds: u32,
    #[arg(long, default_value_t = 1)]
    trials: u32,
    /// Estimators to run (comma-separated: restart,reissue,rs).
    #[arg(long, default_value = "restart,reissue,rs", value_delimiter = ',')]
    estimators: Vec<String>,
    /// Pilot drill-downs per history class for the adaptive estimator.
    #[arg(long, default_value_t = 10)]
    varpi: u32,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Metrics CSV produced by `run`.
    #[arg(long)]
    input: PathBuf,
    /// Summary CSV output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BoundArgs {
    /// Database size before deletions.
    #[arg(long)]
    n: f64,
    /// Number of deleted tuples.
    #[arg(long, default_value_t = 0.0)]
    deleted: f64,
    /// Top-k cutoff.
    #[arg(long)]
    k: u32,
    /// Largest attribute domain size.
    #[arg(long, default_value_t = 2)]
    max_domain_size: u64,
    /// Logarithm base: e, 2, or 10 (the ratio term is base-invariant).
    #[arg(long, default_value = "e")]
    base: String,
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Generate(args) => generate(args),
        Command::Run(args) => run(args),
        Command::Summarize(args) => summarize_cmd(args),
        Command::Bound(args) => bound(args),
    }
}

fn generate(args: GenerateArgs) -> Result<(), HarnessError> {
    let dataset = generate_boolean_db(args.n, args.m, 0, args.seed)?;
    let file = File::create(&args.out)?;
    write_csv_db(BufWriter::new(file), &dataset.schema, &dataset.initial)?;
    println!(
        "wrote {} tuples over {} attributes to {}",
        args.n,
        args.m,
        args.out.display()
    );
    Ok(())
}

fn parse_estimators(names: &[String]) -> Result<Vec<harness::EstimatorKind>, HarnessError> {
    names
        .iter()
        .map(|n| match n.trim() {
            "restart" => Ok(harness::EstimatorKind::Restart),
            "reissue" => Ok(harness::EstimatorKind::Reissue),
            "rs" => Ok(harness::EstimatorKind::Rs),
            other => Err(HarnessError::InvalidConfig(format!(
                "unknown estimator `{other}` (expected restart, reissue, or rs)"
            ))),
        })
        .collect()
}

/// Builds the configuration from flags, then lets the config file's fields
/// override them.
fn effective_config(args: &RunArgs) -> Result<ExperimentConfig, HarnessError> {
    let schema = match (&args.csv, args.initial_count, args.initial_fraction) {
        (Some(path), count, fraction) => {
            let initial = match (count, fraction) {
                (Some(c), None) => InitialSize::Count(c),
                (None, Some(f)) => InitialSize::Fraction(f),
                (None, None) => InitialSize::Fraction(0.9),
                (Some(_), Some(_)) => {
                    return Err(HarnessError::InvalidConfig(
                        "give either --initial-count or --initial-fraction, not both".into(),
                    ))
                }
            };
            SchemaSource::Csv {
                path: path.clone(),
                initial,
            }
        }
        (None, _, _) => SchemaSource::Boolean {
            n0: args.n0,
            m: args.m,
            pool: None,
        },
    };
    let mode = match args.mode.as_str() {
        "round" => hidden_agg::sim::UpdateMode::Round,
        "constant" => hidden_agg::sim::UpdateMode::Constant,
        other => {
            return Err(HarnessError::InvalidConfig(format!(
                "unknown mode `{other}` (expected round or constant)"
            )))
        }
    };
    let mut config = ExperimentConfig {
        schema,
        schedule: harness::ScheduleConfig {
            inserts_per_round: args.inserts_per_round,
            delete_fraction: args.delete_fraction,
            mode,
        },
        k: args.k,
        budget: args.budget,
        rounds: args.rounds,
        trials: args.trials,
        estimators: parse_estimators(&args.estimators)?,
        aggregates: serde_json::from_str(r#"[{ "name": "count_all", "agg": "count" }]"#)?,
        varpi: args.varpi,
        scorer: harness::ScorerKind::SeededHash,
        seed: args.seed,
    };

    if let Some(path) = &args.config {
        let file = File::open(path)?;
        let overrides: serde_json::Value = serde_json::from_reader(BufReader::new(file))?;
        let mut base = serde_json::to_value(&config)?;
        if let (Some(base_map), Some(over_map)) = (base.as_object_mut(), overrides.as_object()) {
            for (key, value) in over_map {
                base_map.insert(key.clone(), value.clone());
            }
        }
        config = serde_json::from_value(base)?;
    }
    config.validate()?;
    Ok(config)
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "metrics".into());
    name.push_str(".config.json");
    out.with_file_name(name)
}

fn run(args: RunArgs) -> Result<(), HarnessError> {
    let config = effective_config(&args)?;
    let rows = run_experiment(&config)?;
    let file = File::create(&args.out)?;
    write_metrics_csv(BufWriter::new(file), &rows)?;
    // Sidecar with the fully resolved configuration and seeds.
    let sidecar = sidecar_path(&args.out);
    let mut f = File::create(&sidecar)?;
    serde_json::to_writer_pretty(&mut f, &config)?;
    f.write_all(b"\n")?;
    println!(
        "wrote {} rows to {} (config sidecar: {})",
        rows.len(),
        args.out.display(),
        sidecar.display()
    );
    Ok(())
}

fn summarize_cmd(args: SummarizeArgs) -> Result<(), HarnessError> {
    let file = File::open(&args.input)?;
    let rows = read_metrics_csv(BufReader::new(file))?;
    let summary = summarize(&rows);
    let out = File::create(&args.out)?;
    write_summary_csv(BufWriter::new(out), &summary)?;
    println!(
        "summarized {} rows into {} groups at {}",
        rows.len(),
        summary.len(),
        args.out.display()
    );
    Ok(())
}

fn bound(args: BoundArgs) -> Result<(), HarnessError> {
    if !["e", "2", "10"].contains(&args.base.as_str()) {
        return Err(HarnessError::InvalidConfig(format!(
            "unknown log base `{}`",
            args.base
        )));
    }
    let log = |x: f64| -> f64 {
        match args.base.as_str() {
            "2" => x.log2(),
            "10" => x.log10(),
            _ => x.ln(),
        }
    };
    let value = reissue_error_bound(
        args.n,
        args.deleted,
        args.k,
        log(args.max_domain_size as f64),
        log(args.n) - log(args.k as f64),
    )
    .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
    println!("{value}");
    Ok(())
}
