//! End-to-end pipeline: generate data, label and split it, build
//! feature matrices, train forests, tune operating points, and price
//! the errors. Each stage reads and writes artifacts so the CLI can
//! run them separately; `run_experiment` chains them in memory and
//! emits the comparison table across feature sets, approximation
//! intervals, and threshold-weighting modes.

pub mod artifacts;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataprep::{
    match_reports, read_reports, relabel, sample_cards, split_grouped, MatchColumns, MatchStats,
    SampleStats, Split,
};
use crate::datagen::{bench_entityset, generate, write_dataset, GenConfig};
use crate::entityset::EntitySet;
use crate::error::{Error, Result};
use crate::evaluation::{
    amount_weight, confusion_at, cost_model, tune_threshold, CostConstants, OperatingPoint,
};
use crate::model::{Hyperparams, ImportanceKind, RandomForest};
use crate::primitives::Registry;
use crate::synthesis::{
    compute_matrix, encode_matrix, encode_transactional, matrix_encoder, read_encoded_csv,
    synthesize, transactional_encoder, write_encoded_csv, CutoffPolicy, EncodedMatrix,
    FeatureDefinition,
};
use artifacts::{
    read_labels, read_split, resolve_rows, write_entity_csv, write_json_report, write_labels,
    write_split, SplitFile,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub generator: GenConfig,
    /// Fraud-free cards kept per compromised card.
    pub sample_ratio: f64,
    pub sample_seed: u64,
    pub split_fractions: (f64, f64, f64),
    pub split_seed: u64,
    /// Split whole cards instead of single transactions.
    pub group_by_card: bool,
    /// Feature-stacking depth for synthesis.
    pub max_depth: usize,
    /// Comma-separated primitive subset; `None` means all of them.
    pub primitives: Option<String>,
    pub approximate_intervals: Vec<u32>,
    pub target_tpr: f64,
    pub forest: Hyperparams,
    pub cost: CostConstants,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            generator: GenConfig::default(),
            sample_ratio: 9.0,
            sample_seed: 13,
            split_fractions: (0.55, 0.07, 0.38),
            split_seed: 17,
            group_by_card: false,
            max_depth: 2,
            primitives: None,
            approximate_intervals: vec![1, 7, 21, 35],
            target_tpr: 0.89,
            forest: Hyperparams {
                n_trees: 100,
                min_samples_leaf: 25,
                seed: 29,
                ..Hyperparams::default()
            },
            cost: CostConstants::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingInput(path.display().to_string())
            } else {
                Error::io(path.display().to_string(), e)
            }
        })?;
        serde_json::from_str(&text).map_err(|e| Error::MalformedArtifact {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn registry(&self) -> Result<Registry> {
        match &self.primitives {
            None => Ok(Registry::full()),
            Some(names) => Registry::from_names(names),
        }
    }
}

/// Cap the global worker pool. Must run before any parallel work;
/// once the pool exists the size cannot change.
pub fn init_thread_pool(threads: usize) -> Result<()> {
    if threads == 0 {
        return Err(Error::InvalidArgument("thread count must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Short hex digest of the canonical JSON form of the configuration;
/// stamped into every artifact this config produces.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    let mut hex = String::with_capacity(16);
    for byte in digest.iter().take(8) {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Which feature family a matrix belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSet {
    /// One-hot transactional attributes only, no history.
    Transactional,
    /// Synthesized historical features; 0 days means exact cutoffs.
    Dfs { interval_days: u32 },
}

impl FeatureSet {
    pub fn tag(&self) -> String {
        match self {
            FeatureSet::Transactional => "transactional".into(),
            FeatureSet::Dfs { interval_days: 0 } => "dfs_exact".into(),
            FeatureSet::Dfs { interval_days } => format!("dfs_{interval_days}d"),
        }
    }

    pub fn approximate_days(&self) -> Option<u32> {
        match self {
            FeatureSet::Transactional => None,
            FeatureSet::Dfs { interval_days } => Some(*interval_days),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub config_hash: String,
    pub cards: usize,
    pub transactions: usize,
    pub reports: usize,
}

/// Stage 1: write the synthetic dataset into `data_dir`.
pub fn run_generate(cfg: &ExperimentConfig, data_dir: &Path) -> Result<GenerateSummary> {
    let hash = config_hash(cfg);
    let data = generate(&cfg.generator)?;
    write_dataset(data_dir, &data, Some(&hash))?;
    let summary = GenerateSummary {
        config_hash: hash,
        cards: data.card_ids.len(),
        transactions: data.txns.len(),
        reports: data.reports.len(),
    };
    write_json_report(&data_dir.join("generate_report.json"), &summary)?;
    Ok(summary)
}

/// In-memory output of the prepare stage.
pub struct Prepared {
    pub es: EntitySet,
    pub labels: Vec<bool>,
    pub amounts: Vec<f64>,
    pub split: Split,
    pub match_stats: MatchStats,
    pub sample_stats: SampleStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub config_hash: String,
    pub match_stats: MatchStats,
    pub sample_stats: SampleStats,
    pub rows: usize,
    pub fraud_rows: usize,
    pub train_rows: usize,
    pub tune_rows: usize,
    pub test_rows: usize,
}

fn transaction_amounts(es: &EntitySet) -> Result<Vec<f64>> {
    let txns = es.entity("transactions")?;
    let amount_col = txns.column_index("amount")?;
    Ok((0..txns.n_rows())
        .map(|r| txns.float_at(amount_col, r).unwrap_or(f64::NAN))
        .collect())
}

/// Stage 2: label transactions from fraud reports, subsample cards,
/// split, and write the prepared artifacts into `prep_dir`.
pub fn run_prepare(cfg: &ExperimentConfig, data_dir: &Path, prep_dir: &Path) -> Result<Prepared> {
    let hash = config_hash(cfg);
    std::fs::create_dir_all(prep_dir)
        .map_err(|e| Error::io(prep_dir.display().to_string(), e))?;

    let es = artifacts::load_card_transaction_set(data_dir)?;
    let reports = read_reports(&data_dir.join("fraud_reports.csv"))?;
    let labeled = match_reports(&es, "transactions", &reports, &MatchColumns::default())?;

    let (sampled, sample_stats) = sample_cards(
        &es,
        "cards",
        "transactions",
        &labeled.labels,
        cfg.sample_ratio,
        cfg.sample_seed,
    )?;

    // Labels must be re-derived for the sampled row order.
    let full_txns = es.entity("transactions")?;
    let by_id: HashMap<String, bool> = (0..full_txns.n_rows())
        .map(|r| (full_txns.row_key(r).to_string(), labeled.labels[r]))
        .collect();
    let txns = sampled.entity("transactions")?;
    let labels = relabel(txns, &by_id);

    let split = if cfg.group_by_card {
        let rel = sampled
            .relationship_index("cards", "transactions")
            .expect("sampled set keeps the relationship");
        let parent_of = &sampled.child_index(rel).parent_of;
        split_grouped(parent_of, &labels, cfg.split_fractions, cfg.split_seed)?
    } else {
        crate::dataprep::split(&labels, cfg.split_fractions, cfg.split_seed)?
    };

    let ids: Vec<String> = (0..txns.n_rows()).map(|r| txns.row_key(r).to_string()).collect();
    let amounts = transaction_amounts(&sampled)?;

    write_entity_csv(&prep_dir.join("cards.csv"), sampled.entity("cards")?, &hash)?;
    write_entity_csv(&prep_dir.join("transactions.csv"), txns, &hash)?;
    write_labels(&prep_dir.join("labels.csv"), &ids, &labels, &amounts, &hash)?;
    let to_ids = |rows: &[usize]| rows.iter().map(|&r| ids[r].clone()).collect();
    write_split(
        &prep_dir.join("split.json"),
        &SplitFile {
            config_hash: hash.clone(),
            train: to_ids(&split.train),
            tune: to_ids(&split.tune),
            test: to_ids(&split.test),
        },
    )?;
    let summary = PrepareSummary {
        config_hash: hash,
        match_stats: labeled.stats,
        sample_stats,
        rows: txns.n_rows(),
        fraud_rows: labels.iter().filter(|&&l| l).count(),
        train_rows: split.train.len(),
        tune_rows: split.tune.len(),
        test_rows: split.test.len(),
    };
    write_json_report(&prep_dir.join("prepare_report.json"), &summary)?;

    Ok(Prepared {
        es: sampled,
        labels,
        amounts,
        split,
        match_stats: summary.match_stats,
        sample_stats: summary.sample_stats,
    })
}

/// Reload the prepared artifacts written by `run_prepare`.
pub fn load_prepared(prep_dir: &Path) -> Result<Prepared> {
    let es = artifacts::load_card_transaction_set(prep_dir)?;
    let label_file = read_labels(&prep_dir.join("labels.csv"))?;
    let txns = es.entity("transactions")?;
    if label_file.ids.len() != txns.n_rows() {
        return Err(Error::ColumnMismatch(format!(
            "labels.csv has {} rows, transactions.csv has {}",
            label_file.ids.len(),
            txns.n_rows()
        )));
    }
    let split_file = read_split(&prep_dir.join("split.json"))?;
    let split = Split {
        train: resolve_rows(&label_file.ids, &split_file.train, "split.json")?,
        tune: resolve_rows(&label_file.ids, &split_file.tune, "split.json")?,
        test: resolve_rows(&label_file.ids, &split_file.test, "split.json")?,
    };
    Ok(Prepared {
        es,
        labels: label_file.labels,
        amounts: label_file.amounts,
        split,
        match_stats: MatchStats {
            reported: 0,
            matched: 0,
            unmatched: 0,
        },
        sample_stats: SampleStats {
            fraud_cards: 0,
            clean_requested: 0,
            clean_taken: 0,
        },
    })
}

/// Stage 3 core: build one encoded feature matrix for all rows, with
/// encoder dictionaries fitted on the training rows only.
pub fn build_features(
    cfg: &ExperimentConfig,
    es: &EntitySet,
    train_rows: &[usize],
    kind: FeatureSet,
) -> Result<(EncodedMatrix, Vec<FeatureDefinition>)> {
    match kind {
        FeatureSet::Transactional => {
            let spec = transactional_encoder(es, "transactions", train_rows)?;
            let encoded = encode_transactional(es, "transactions", &spec)?;
            Ok((encoded, vec![]))
        }
        FeatureSet::Dfs { interval_days } => {
            let registry = cfg.registry()?;
            let features = synthesize(es, "transactions", cfg.max_depth, &registry)?;
            let policy = if interval_days == 0 {
                CutoffPolicy::exact()
            } else {
                // Anchor 0 puts the refresh grid on UTC midnights.
                CutoffPolicy::approximate(interval_days, 0)?
            };
            let matrix = compute_matrix(es, "transactions", &features, &policy)?;
            let spec = matrix_encoder(&matrix, train_rows);
            let encoded = encode_matrix(&matrix, &spec)?;
            Ok((encoded, features))
        }
    }
}

/// Stage 3: write `features_<tag>.csv` (and definitions for DFS sets).
pub fn run_synthesize(
    cfg: &ExperimentConfig,
    prep_dir: &Path,
    features_dir: &Path,
    kind: FeatureSet,
) -> Result<PathBuf> {
    let prepared = load_prepared(prep_dir)?;
    std::fs::create_dir_all(features_dir)
        .map_err(|e| Error::io(features_dir.display().to_string(), e))?;
    let (encoded, defs) = build_features(cfg, &prepared.es, &prepared.split.train, kind)?;
    let path = features_dir.join(format!("features_{}.csv", kind.tag()));
    write_encoded_csv(&path, &encoded, &config_hash(cfg))?;
    if !defs.is_empty() {
        write_json_report(
            &features_dir.join(format!("features_{}.defs.json", kind.tag())),
            &defs,
        )?;
    }
    Ok(path)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub config_hash: String,
    pub n_train_rows: usize,
    pub n_features: usize,
    pub top_features: Vec<(String, f64)>,
}

/// Stage 4 core: fit a forest on the training rows of one matrix.
pub fn fit_model(
    cfg: &ExperimentConfig,
    encoded: &EncodedMatrix,
    labels: &[bool],
    train_rows: &[usize],
) -> Result<RandomForest> {
    let train_matrix = encoded.select_rows(train_rows);
    let train_labels: Vec<bool> = train_rows.iter().map(|&r| labels[r]).collect();
    RandomForest::fit(&train_matrix, &train_labels, &cfg.forest)
}

fn train_report(cfg: &ExperimentConfig, forest: &RandomForest, n_train: usize) -> TrainReport {
    let importances = forest.importances(ImportanceKind::SeparatedExamples);
    let mut ranked: Vec<(String, f64)> = forest
        .feature_names()
        .iter()
        .cloned()
        .zip(importances.iter().copied())
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(10);
    TrainReport {
        config_hash: config_hash(cfg),
        n_train_rows: n_train,
        n_features: forest.feature_names().len(),
        top_features: ranked,
    }
}

/// Stage 4: train from artifact files and save the model.
pub fn run_train(
    cfg: &ExperimentConfig,
    features_csv: &Path,
    prep_dir: &Path,
    model_path: &Path,
) -> Result<TrainReport> {
    let (encoded, _hash) = read_encoded_csv(features_csv)?;
    let label_file = read_labels(&prep_dir.join("labels.csv"))?;
    if encoded.row_ids != label_file.ids {
        return Err(Error::ColumnMismatch(
            "feature matrix rows do not line up with labels.csv".into(),
        ));
    }
    let split_file = read_split(&prep_dir.join("split.json"))?;
    let train_rows = resolve_rows(&label_file.ids, &split_file.train, "split.json")?;
    let forest = fit_model(cfg, &encoded, &label_file.labels, &train_rows)?;
    if let Some(parent) = model_path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    forest.save(model_path)?;
    let report = train_report(cfg, &forest, train_rows.len());
    write_json_report(&model_path.with_extension("train.json"), &report)?;
    Ok(report)
}

/// Stage 5 core: choose the operating point on the tune rows.
pub fn tune_model(
    cfg: &ExperimentConfig,
    forest: &RandomForest,
    encoded: &EncodedMatrix,
    labels: &[bool],
    amounts: &[f64],
    tune_rows: &[usize],
    weighted: bool,
) -> Result<OperatingPoint> {
    let tune_matrix = encoded.select_rows(tune_rows);
    let scores = forest.predict_proba(&tune_matrix)?;
    let tune_labels: Vec<bool> = tune_rows.iter().map(|&r| labels[r]).collect();
    let scores = if weighted {
        let tune_amounts: Vec<f64> = tune_rows.iter().map(|&r| amounts[r]).collect();
        amount_weight(&scores, &tune_amounts)?
    } else {
        scores
    };
    let mut op = tune_threshold(&scores, &tune_labels, cfg.target_tpr)?;
    op.amount_weighted = weighted;
    Ok(op)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatingPointFile {
    pub config_hash: String,
    #[serde(flatten)]
    pub op: OperatingPoint,
}

/// Stage 5: tune from artifact files; errors if infeasible targets
/// must be surfaced by the caller via the `feasible` flag.
pub fn run_tune(
    cfg: &ExperimentConfig,
    model_path: &Path,
    features_csv: &Path,
    prep_dir: &Path,
    weighted: bool,
    out_path: &Path,
) -> Result<OperatingPoint> {
    let forest = RandomForest::load(model_path)?;
    let (encoded, _hash) = read_encoded_csv(features_csv)?;
    let label_file = read_labels(&prep_dir.join("labels.csv"))?;
    if encoded.row_ids != label_file.ids {
        return Err(Error::ColumnMismatch(
            "feature matrix rows do not line up with labels.csv".into(),
        ));
    }
    let split_file = read_split(&prep_dir.join("split.json"))?;
    let tune_rows = resolve_rows(&label_file.ids, &split_file.tune, "split.json")?;
    let op = tune_model(
        cfg,
        &forest,
        &encoded,
        &label_file.labels,
        &label_file.amounts,
        &tune_rows,
        weighted,
    )?;
    write_json_report(
        out_path,
        &OperatingPointFile {
            config_hash: config_hash(cfg),
            op: op.clone(),
        },
    )?;
    Ok(op)
}

/// The full per-run metrics block emitted as JSON and as one row of
/// the comparison table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config_hash: String,
    pub feature_set: String,
    pub approximate_days: Option<u32>,
    pub amount_weighted: bool,
    pub gamma: f64,
    pub feasible: bool,
    pub tune_tpr: Option<f64>,
    pub tune_precision: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    pub fp_count: u64,
    pub fn_count: u64,
    pub cost_fp: f64,
    pub cost_fn: f64,
    pub total_cost: f64,
    /// Cost of running no model at all (every fraud goes through).
    pub baseline_cost: f64,
    pub savings: f64,
}

/// Stage 6 core: apply the tuned threshold to the test rows and price
/// the resulting errors.
pub fn evaluate_model(
    cfg: &ExperimentConfig,
    forest: &RandomForest,
    encoded: &EncodedMatrix,
    labels: &[bool],
    amounts: &[f64],
    test_rows: &[usize],
    op: &OperatingPoint,
    kind: FeatureSet,
) -> Result<MetricsReport> {
    let test_matrix = encoded.select_rows(test_rows);
    let mut scores = forest.predict_proba(&test_matrix)?;
    let test_labels: Vec<bool> = test_rows.iter().map(|&r| labels[r]).collect();
    let test_amounts: Vec<f64> = test_rows.iter().map(|&r| amounts[r]).collect();
    if op.amount_weighted {
        scores = amount_weight(&scores, &test_amounts)?;
    }
    let conf = confusion_at(&scores, &test_labels, op.gamma)?;
    let predictions: Vec<bool> = scores.iter().map(|&s| s >= op.gamma).collect();
    let costs = cost_model(&predictions, &test_labels, &test_amounts, &cfg.cost)?;
    let no_model = vec![false; test_labels.len()];
    let baseline = cost_model(&no_model, &test_labels, &test_amounts, &cfg.cost)?;
    Ok(MetricsReport {
        config_hash: config_hash(cfg),
        feature_set: kind.tag(),
        approximate_days: kind.approximate_days(),
        amount_weighted: op.amount_weighted,
        gamma: op.gamma,
        feasible: op.feasible,
        tune_tpr: op.tpr,
        tune_precision: op.precision,
        tpr: conf.tpr,
        fpr: conf.fpr,
        precision: conf.precision,
        f1: conf.f1,
        fp_count: conf.fp,
        fn_count: conf.fn_,
        cost_fp: costs.cost_fp,
        cost_fn: costs.cost_fn,
        total_cost: costs.total,
        baseline_cost: baseline.total,
        savings: baseline.total - costs.total,
    })
}

/// Stage 6: evaluate from artifact files.
pub fn run_evaluate(
    cfg: &ExperimentConfig,
    model_path: &Path,
    features_csv: &Path,
    prep_dir: &Path,
    op_path: &Path,
    kind: FeatureSet,
    out_path: &Path,
) -> Result<MetricsReport> {
    let forest = RandomForest::load(model_path)?;
    let (encoded, _hash) = read_encoded_csv(features_csv)?;
    let label_file = read_labels(&prep_dir.join("labels.csv"))?;
    let split_file = read_split(&prep_dir.join("split.json"))?;
    let test_rows = resolve_rows(&label_file.ids, &split_file.test, "split.json")?;
    let op_file: OperatingPointFile = {
        let text = std::fs::read_to_string(op_path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingInput(op_path.display().to_string())
            } else {
                Error::io(op_path.display().to_string(), e)
            }
        })?;
        serde_json::from_str(&text).map_err(|e| Error::MalformedArtifact {
            path: op_path.display().to_string(),
            message: e.to_string(),
        })?
    };
    let report = evaluate_model(
        cfg,
        &forest,
        &encoded,
        &label_file.labels,
        &label_file.amounts,
        &test_rows,
        &op_file.op,
        kind,
    )?;
    write_json_report(out_path, &report)?;
    Ok(report)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Write the cross-method comparison table.
pub fn write_comparison_csv(path: &Path, reports: &[MetricsReport], hash: &str) -> Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = std::io::BufWriter::new(file);
    let werr = |e: std::io::Error| Error::io(path.display().to_string(), e);
    writeln!(out, "{}{hash}", artifacts::HASH_PREFIX).map_err(werr)?;
    writeln!(
        out,
        "feature_set,approximate_days,amount_weighted,gamma,feasible,tune_tpr,tune_precision,\
         test_tpr,test_fpr,test_precision,test_f1,fp_count,fn_count,cost_fp,cost_fn,total_cost,\
         baseline_cost,savings"
    )
    .map_err(werr)?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.feature_set,
            r.approximate_days.map(|d| d.to_string()).unwrap_or_default(),
            r.amount_weighted,
            r.gamma,
            r.feasible,
            fmt_opt(r.tune_tpr),
            fmt_opt(r.tune_precision),
            fmt_opt(r.tpr),
            fmt_opt(r.fpr),
            fmt_opt(r.precision),
            fmt_opt(r.f1),
            r.fp_count,
            r.fn_count,
            r.cost_fp,
            r.cost_fn,
            r.total_cost,
            r.baseline_cost,
            r.savings
        )
        .map_err(werr)?;
    }
    out.flush().map_err(werr)
}

/// Run everything: generate, prepare, then for each feature family
/// train once and evaluate under both threshold-weighting modes.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<MetricsReport>> {
    let hash = config_hash(cfg);
    let data_dir = out_dir.join("data");
    let prep_dir = out_dir.join("prepared");
    let features_dir = out_dir.join("features");
    let models_dir = out_dir.join("models");
    let reports_dir = out_dir.join("reports");
    for dir in [&features_dir, &models_dir, &reports_dir] {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }

    run_generate(cfg, &data_dir)?;
    let prepared = run_prepare(cfg, &data_dir, &prep_dir)?;

    let mut kinds = vec![FeatureSet::Transactional, FeatureSet::Dfs { interval_days: 0 }];
    for &days in &cfg.approximate_intervals {
        kinds.push(FeatureSet::Dfs {
            interval_days: days,
        });
    }

    let mut all_reports = Vec::new();
    for kind in kinds {
        let (encoded, defs) =
            build_features(cfg, &prepared.es, &prepared.split.train, kind)?;
        let tag = kind.tag();
        write_encoded_csv(
            &features_dir.join(format!("features_{tag}.csv")),
            &encoded,
            &hash,
        )?;
        if !defs.is_empty() {
            write_json_report(
                &features_dir.join(format!("features_{tag}.defs.json")),
                &defs,
            )?;
        }
        let forest = fit_model(cfg, &encoded, &prepared.labels, &prepared.split.train)?;
        forest.save(&models_dir.join(format!("model_{tag}.json")))?;
        write_json_report(
            &models_dir.join(format!("model_{tag}.train.json")),
            &train_report(cfg, &forest, prepared.split.train.len()),
        )?;

        for weighted in [false, true] {
            let mode = if weighted { "weighted" } else { "plain" };
            let op = tune_model(
                cfg,
                &forest,
                &encoded,
                &prepared.labels,
                &prepared.amounts,
                &prepared.split.tune,
                weighted,
            )?;
            write_json_report(
                &reports_dir.join(format!("operating_point_{tag}_{mode}.json")),
                &OperatingPointFile {
                    config_hash: hash.clone(),
                    op: op.clone(),
                },
            )?;
            let report = evaluate_model(
                cfg,
                &forest,
                &encoded,
                &prepared.labels,
                &prepared.amounts,
                &prepared.split.test,
                &op,
                kind,
            )?;
            write_json_report(
                &reports_dir.join(format!("metrics_{tag}_{mode}.json")),
                &report,
            )?;
            all_reports.push(report);
        }
    }

    write_comparison_csv(&reports_dir.join("comparison.csv"), &all_reports, &hash)?;
    Ok(all_reports)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: usize,
    pub features: usize,
    pub seconds: f64,
    pub rows_per_sec: f64,
    pub threads: usize,
}

/// Throughput measurement for the synthesis engine on a wide schema.
pub fn run_bench(rows: usize, seed: u64) -> Result<BenchReport> {
    let rows_per_parent = 100;
    let n_parents = rows.div_ceil(rows_per_parent).max(1);
    let es = bench_entityset(n_parents, rows_per_parent, seed)?;
    let features = synthesize(&es, "events", 2, &Registry::full())?;
    let start = std::time::Instant::now();
    let matrix = compute_matrix(&es, "events", &features, &CutoffPolicy::exact())?;
    let seconds = start.elapsed().as_secs_f64();
    let n = matrix.n_rows();
    Ok(BenchReport {
        rows: n,
        features: features.len(),
        seconds,
        rows_per_sec: n as f64 / seconds.max(1e-9),
        threads: rayon::current_num_threads(),
    })
}
