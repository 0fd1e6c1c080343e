//! Command-line front end for the featsyn pipeline. Every subcommand
//! wraps one library stage and exchanges artifacts through files, so
//! stages can be rerun or inspected independently; `experiment` chains
//! all of them and writes the cross-method comparison table.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use featsyn::pipeline::{
    self, config_hash, ExperimentConfig, FeatureSet, MetricsReport, OperatingPointFile,
};

#[derive(Parser)]
#[command(name = "featsyn", version, about = "Relational feature synthesis and fraud scoring")]
struct Cli {
    /// Worker threads (also honored via FEATSYN_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Experiment configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic card-transaction dataset with fraud reports.
    Generate {
        /// Output directory for the dataset files.
        #[arg(long, default_value = "out/data")]
        out: PathBuf,
        /// Override the generator seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of cards.
        #[arg(long)]
        cards: Option<usize>,
        /// Override the simulated window length in days.
        #[arg(long)]
        days: Option<u32>,
    },
    /// Label transactions from fraud reports, subsample cards, and split.
    Prepare {
        /// Directory holding the generated dataset.
        #[arg(long, default_value = "out/data")]
        data: PathBuf,
        /// Output directory for the prepared artifacts.
        #[arg(long, default_value = "out/prepared")]
        out: PathBuf,
    },
    /// Build one encoded feature matrix from the prepared dataset.
    Synthesize {
        /// Directory written by `prepare`.
        #[arg(long, default_value = "out/prepared")]
        prepared: PathBuf,
        /// Output directory for the feature matrix.
        #[arg(long, default_value = "out/features")]
        out: PathBuf,
        /// transactional, dfs_exact, or dfs_<days>d.
        #[arg(long, default_value = "dfs_exact")]
        feature_set: String,
        /// Comma-separated primitive subset.
        #[arg(long)]
        primitives: Option<String>,
    },
    /// Train a random forest on the training split of a feature matrix.
    Train {
        /// Feature matrix CSV written by `synthesize`.
        #[arg(long)]
        features: PathBuf,
        /// Directory written by `prepare`.
        #[arg(long, default_value = "out/prepared")]
        prepared: PathBuf,
        /// Where to save the model.
        #[arg(long, default_value = "out/model.json")]
        out: PathBuf,
        /// Override the number of trees.
        #[arg(long)]
        trees: Option<usize>,
        /// Override the forest seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Pick the decision threshold on the tune split.
    Tune {
        /// Saved model file.
        #[arg(long, default_value = "out/model.json")]
        model: PathBuf,
        /// Feature matrix CSV the model was trained on.
        #[arg(long)]
        features: PathBuf,
        /// Directory written by `prepare`.
        #[arg(long, default_value = "out/prepared")]
        prepared: PathBuf,
        /// Override the true-positive-rate floor.
        #[arg(long)]
        target_tpr: Option<f64>,
        /// Weight scores by transaction amount before thresholding.
        #[arg(long)]
        weighted: bool,
        /// Where to write the chosen operating point.
        #[arg(long, default_value = "out/operating_point.json")]
        out: PathBuf,
    },
    /// Score the test split at a tuned threshold and price the errors.
    Evaluate {
        /// Saved model file.
        #[arg(long, default_value = "out/model.json")]
        model: PathBuf,
        /// Feature matrix CSV the model was trained on.
        #[arg(long)]
        features: PathBuf,
        /// Directory written by `prepare`.
        #[arg(long, default_value = "out/prepared")]
        prepared: PathBuf,
        /// Operating point written by `tune`.
        #[arg(long, default_value = "out/operating_point.json")]
        operating_point: PathBuf,
        /// transactional, dfs_exact, or dfs_<days>d (for the report).
        #[arg(long, default_value = "dfs_exact")]
        feature_set: String,
        /// Where to write the metrics report.
        #[arg(long, default_value = "out/metrics.json")]
        out: PathBuf,
    },
    /// Run the whole pipeline across feature sets and weighting modes.
    Experiment {
        /// Root output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Measure synthesis throughput on a wide synthetic schema.
    Bench {
        /// Number of event rows to compute features for.
        #[arg(long, default_value_t = 100_000)]
        rows: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Optional JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .downcast_ref::<featsyn::Error>()
                .map(exit_code)
                .unwrap_or(1);
            ExitCode::from(code)
        }
    }
}

/// Stable exit codes: 2 for bad requests, 3 for missing inputs, 4 for
/// inputs that exist but do not fit together, 5 for an unreachable
/// tpr target, 1 for anything else.
fn exit_code(err: &featsyn::Error) -> u8 {
    use featsyn::Error::*;
    match err {
        InvalidArgument(_) | StratumTooSmall(_) => 2,
        MissingInput(_) | Io { .. } => 3,
        SchemaMismatch(_) | UnknownEntity(_) | UnknownColumn { .. } | ColumnMismatch(_)
        | DuplicateKey { .. } | DanglingKey { .. } | RelationshipCycle { .. }
        | ParseFatal { .. } | MalformedArtifact { .. } => 4,
        _ => 1,
    }
}

fn load_config(path: &Option<PathBuf>) -> featsyn::Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::from_file(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn parse_feature_set(s: &str) -> featsyn::Result<FeatureSet> {
    if s == "transactional" {
        return Ok(FeatureSet::Transactional);
    }
    if s == "dfs_exact" {
        return Ok(FeatureSet::Dfs { interval_days: 0 });
    }
    if let Some(days) = s.strip_prefix("dfs_").and_then(|rest| rest.strip_suffix('d')) {
        if let Ok(n) = days.parse::<u32>() {
            if n > 0 {
                return Ok(FeatureSet::Dfs { interval_days: n });
            }
        }
    }
    Err(featsyn::Error::InvalidArgument(format!(
        "unknown feature set '{s}' (expected transactional, dfs_exact, or dfs_<days>d)"
    )))
}

fn init_threads(flag: Option<usize>) -> featsyn::Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("FEATSYN_THREADS") {
            Ok(raw) => Some(raw.parse().map_err(|_| {
                featsyn::Error::InvalidArgument(format!("FEATSYN_THREADS='{raw}' is not a number"))
            })?),
            Err(_) => None,
        },
    };
    match n {
        Some(n) => pipeline::init_thread_pool(n),
        None => Ok(()),
    }
}

macro_rules! print_json {
    ($value:expr) => {
        println!(
            "{}",
            serde_json::to_string_pretty($value).expect("report serializes")
        )
    };
}

fn comparison_lines(reports: &[MetricsReport]) {
    for r in reports {
        let mode = if r.amount_weighted { "weighted" } else { "plain" };
        let pct = |x: Option<f64>| x.map(|v| format!("{:.4}", v)).unwrap_or_else(|| "-".into());
        println!(
            "{:<14} {:<8} gamma={:<10.6} tpr={} precision={} total_cost={:.2} savings={:.2}{}",
            r.feature_set,
            mode,
            r.gamma,
            pct(r.tpr),
            pct(r.precision),
            r.total_cost,
            r.savings,
            if r.feasible { "" } else { "  [tpr target not reached]" },
        );
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    init_threads(cli.threads)?;
    let mut cfg = load_config(&cli.config)?;

    match cli.command {
        Command::Generate {
            out,
            seed,
            cards,
            days,
        } => {
            if let Some(s) = seed {
                cfg.generator.seed = s;
            }
            if let Some(c) = cards {
                cfg.generator.n_cards = c;
            }
            if let Some(d) = days {
                cfg.generator.days = d;
            }
            let summary = pipeline::run_generate(&cfg, &out)?;
            print_json!(&summary);
        }
        Command::Prepare { data, out } => {
            let prepared = pipeline::run_prepare(&cfg, &data, &out)?;
            eprintln!(
                "matched {}/{} reports, kept {} rows ({} fraud)",
                prepared.match_stats.matched,
                prepared.match_stats.reported,
                prepared.labels.len(),
                prepared.labels.iter().filter(|&&l| l).count(),
            );
        }
        Command::Synthesize {
            prepared,
            out,
            feature_set,
            primitives,
        } => {
            if primitives.is_some() {
                cfg.primitives = primitives;
            }
            let kind = parse_feature_set(&feature_set)?;
            let path = pipeline::run_synthesize(&cfg, &prepared, &out, kind)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Train {
            features,
            prepared,
            out,
            trees,
            seed,
        } => {
            if let Some(t) = trees {
                cfg.forest.n_trees = t;
            }
            if let Some(s) = seed {
                cfg.forest.seed = s;
            }
            let report = pipeline::run_train(&cfg, &features, &prepared, &out)?;
            print_json!(&report);
        }
        Command::Tune {
            model,
            features,
            prepared,
            target_tpr,
            weighted,
            out,
        } => {
            if let Some(t) = target_tpr {
                cfg.target_tpr = t;
            }
            let op = pipeline::run_tune(&cfg, &model, &features, &prepared, weighted, &out)?;
            print_json!(&OperatingPointFile {
                config_hash: config_hash(&cfg),
                op: op.clone(),
            });
            if !op.feasible {
                eprintln!(
                    "no threshold reaches tpr {}; best achievable kept in {}",
                    cfg.target_tpr,
                    out.display()
                );
                return Ok(ExitCode::from(5));
            }
        }
        Command::Evaluate {
            model,
            features,
            prepared,
            operating_point,
            feature_set,
            out,
        } => {
            let kind = parse_feature_set(&feature_set)?;
            let report = pipeline::run_evaluate(
                &cfg,
                &model,
                &features,
                &prepared,
                &operating_point,
                kind,
                &out,
            )?;
            print_json!(&report);
        }
        Command::Experiment { out } => {
            let reports = pipeline::run_experiment(&cfg, &out)?;
            comparison_lines(&reports);
            eprintln!("full table: {}", out.join("reports/comparison.csv").display());
            if reports.iter().any(|r| !r.feasible) {
                return Ok(ExitCode::from(5));
            }
        }
        Command::Bench { rows, seed, out } => {
            let report = pipeline::run_bench(rows, seed)?;
            print_json!(&report);
            if let Some(path) = out {
                featsyn::pipeline::artifacts::write_json_report(&path, &report)?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
