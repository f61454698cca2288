//! The experiment harness: repeated seeded runs of split → normalize →
//! select → fit → evaluate, with incremental persistence and aggregation.
//!
//! The protocol per (dataset, regularization value, repetition):
//! 1. derive the repetition seed from (base seed, dataset name, repetition);
//! 2. draw one 80/20 split and fit z-score statistics on the training pool —
//!    every strategy in this repetition sees the identical split and
//!    normalization (paired comparison);
//! 3. run each strategy from `M0 = d+1` to `M_max = d+21` labels, refitting
//!    the ridge model at each step;
//! 4. evaluate each of the 21 models on the held-out test set (RMSE and CC).
//!
//! Repetitions run in parallel; records are journaled as they complete, so an
//! interrupted run resumes without recomputing, and the final per-(dataset, r)
//! CSVs are written in a fixed sort order so reruns are byte-identical.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{find_registry_entry, load_csv, DataIoError, Dataset, DatasetManifest};
use crate::metrics::{
    auc, normalize_and_improve, pearson_cc, rmse, ttest_one_tailed, AucSummary, AucValues, Curve,
    Improvement, MetricsError, Tail,
};
use crate::preprocess::{
    encode_dataset, split_train_test, take_rows, zscore_apply, zscore_fit, PreprocessError,
};
use crate::regression::predict;
use crate::seeding::{mix, mix_str};
use crate::strategies::{run_strategy, Pool, RunParams, StrategyError, StrategyId};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("dataset '{0}' is not available in the data directory")]
    DatasetUnavailable(String),
    #[error("dataset '{dataset}': training pool of {pool} samples cannot cover M up to {needed}")]
    PoolTooSmall { dataset: String, pool: usize, needed: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no results found under {0}")]
    MissingResults(PathBuf),
    #[error(transparent)]
    Data(#[from] DataIoError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("failed to read or write CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("journal entry corrupt: {0}")]
    Journal(#[from] serde_json::Error),
}

/// Full description of an experiment; everything downstream derives from it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub datasets: Vec<String>,
    pub strategies: Vec<StrategyId>,
    pub repetitions: usize,
    /// Ridge regularization coefficients to sweep.
    pub reg_values: Vec<f64>,
    pub committee_size: usize,
    pub base_seed: u64,
    pub data_dir: PathBuf,
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses the rayon default.
    pub jobs: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(data_dir: PathBuf, output_dir: PathBuf) -> Self {
        ExperimentConfig {
            datasets: Vec::new(),
            strategies: StrategyId::ALL.to_vec(),
            repetitions: 100,
            reg_values: vec![0.01],
            committee_size: 4,
            base_seed: 1,
            data_dir,
            output_dir,
            jobs: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.datasets.is_empty() {
            return Err(HarnessError::InvalidConfig("no datasets selected".into()));
        }
        if self.strategies.is_empty() {
            return Err(HarnessError::InvalidConfig("no strategies selected".into()));
        }
        if self.repetitions < 1 {
            return Err(HarnessError::InvalidConfig("repetitions must be >= 1".into()));
        }
        if self.reg_values.is_empty() || self.reg_values.iter().any(|r| *r <= 0.0) {
            return Err(HarnessError::InvalidConfig(
                "every regularization coefficient must be positive".into(),
            ));
        }
        if self.committee_size < 2 {
            return Err(HarnessError::InvalidConfig("committee size must be >= 2".into()));
        }
        Ok(())
    }
}

/// On-disk config file layout: `key = value` entries in named sections.
#[derive(Debug, Default, Deserialize)]
struct ConfigFile {
    #[serde(default)]
    experiment: ConfigExperiment,
    #[serde(default)]
    paths: ConfigPaths,
}

#[derive(Debug, Default, Deserialize)]
struct ConfigExperiment {
    datasets: Option<Vec<String>>,
    strategies: Option<Vec<String>>,
    repetitions: Option<usize>,
    r: Option<Vec<f64>>,
    committee: Option<usize>,
    seed: Option<u64>,
    jobs: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
struct ConfigPaths {
    data_dir: Option<PathBuf>,
    output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses a config file, filling unset keys with defaults.
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        let mut config = ExperimentConfig::new(
            file.paths.data_dir.unwrap_or_else(|| PathBuf::from("data")),
            file.paths.output_dir.unwrap_or_else(|| PathBuf::from("results")),
        );
        if let Some(datasets) = file.experiment.datasets {
            config.datasets = datasets;
        }
        if let Some(strategies) = file.experiment.strategies {
            config.strategies = parse_strategies(&strategies)?;
        }
        if let Some(reps) = file.experiment.repetitions {
            config.repetitions = reps;
        }
        if let Some(r) = file.experiment.r {
            config.reg_values = r;
        }
        if let Some(p) = file.experiment.committee {
            config.committee_size = p;
        }
        if let Some(seed) = file.experiment.seed {
            config.base_seed = seed;
        }
        config.jobs = file.experiment.jobs;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}

/// Parses strategy names; the single entry `all` selects every strategy.
pub fn parse_strategies(names: &[String]) -> Result<Vec<StrategyId>, HarnessError> {
    if names.len() == 1 && names[0].eq_ignore_ascii_case("all") {
        return Ok(StrategyId::ALL.to_vec());
    }
    names
        .iter()
        .map(|s| s.parse::<StrategyId>().map_err(HarnessError::InvalidConfig))
        .collect()
}

/// One repetition of one strategy on one dataset at one regularization value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub strategy: StrategyId,
    pub rep: usize,
    pub reg: f64,
    /// The per-repetition seed shared by all strategies of this repetition.
    pub seed: u64,
    pub rmse_curve: Curve,
    pub cc_curve: Curve,
    pub selection_order: Vec<usize>,
    pub wall_time: Duration,
}

/// Seed of one repetition: stable hash of (base seed, dataset name, rep).
pub fn rep_seed(base_seed: u64, dataset: &str, rep: usize) -> u64 {
    mix(mix_str(base_seed, dataset), rep as u64)
}

const SPLIT_TAG: u64 = 0x5350_4c54; // "SPLT"

/// Seed of the 80/20 split drawn for one repetition.
pub fn split_seed(rep_seed: u64) -> u64 {
    mix(rep_seed, SPLIT_TAG)
}

/// Seed of one strategy's run within a repetition.
pub fn strategy_seed(rep_seed: u64, id: StrategyId) -> u64 {
    mix_str(rep_seed, id.label())
}

/// A dataset loaded, encoded, and admitted to the benchmark.
pub struct PreparedDataset {
    pub dataset: Dataset,
    pub manifest: DatasetManifest,
}

/// Loads and encodes one dataset by registry name (or a path to a manifest
/// file), and checks it is large enough for the full `M` schedule.
pub fn prepare_dataset(name: &str, data_dir: &Path) -> Result<PreparedDataset, HarnessError> {
    let manifest = if name.ends_with(".toml") {
        DatasetManifest::from_path(Path::new(name))?
    } else {
        let entry = find_registry_entry(data_dir, name)
            .ok_or_else(|| HarnessError::DatasetUnavailable(name.to_string()))?;
        if !entry.available {
            return Err(HarnessError::DatasetUnavailable(entry.manifest.name));
        }
        entry.manifest
    };
    let raw = load_csv(&manifest, data_dir)?;
    let (dataset, _) = encode_dataset(&raw)?;

    let pool = dataset.n_samples() * 4 / 5;
    let needed = dataset.dim() + 22;
    if pool < needed {
        return Err(HarnessError::PoolTooSmall {
            dataset: dataset.name.clone(),
            pool,
            needed,
        });
    }
    Ok(PreparedDataset { dataset, manifest })
}

/// Runs every strategy of one repetition on a prepared dataset and returns
/// one record per strategy.
pub fn run_repetition(
    prepared: &Dataset,
    strategies: &[StrategyId],
    rep: usize,
    reg: f64,
    committee_size: usize,
    base_seed: u64,
) -> Result<Vec<RunRecord>, HarnessError> {
    let seed = rep_seed(base_seed, &prepared.name, rep);
    let d = prepared.dim();
    let split = split_train_test(prepared.n_samples(), split_seed(seed))?;

    let x_train = take_rows(&prepared.features.view(), &split.train_indices);
    let x_test = take_rows(&prepared.features.view(), &split.test_indices);
    let stats = zscore_fit(&x_train.view());
    let x_train = zscore_apply(&stats, &x_train.view())?;
    let x_test = zscore_apply(&stats, &x_test.view())?;
    let y_train = Array1::from_iter(split.train_indices.iter().map(|&i| prepared.labels[i]));
    let y_test: Vec<f64> = split.test_indices.iter().map(|&i| prepared.labels[i]).collect();

    let pool = Pool::new(x_train, y_train);
    let m_values: Vec<usize> = (d + 1..=d + 21).collect();

    let mut records = Vec::with_capacity(strategies.len());
    for &id in strategies {
        let started = Instant::now();
        let run = run_strategy(
            id,
            &pool,
            &RunParams {
                m0: d + 1,
                m_max: d + 21,
                reg,
                committee_size,
                seed: strategy_seed(seed, id),
            },
        )?;
        let mut rmse_values = Vec::with_capacity(run.models.len());
        let mut cc_values = Vec::with_capacity(run.models.len());
        for model in &run.models {
            let pred = predict(model, &x_test.view())
                .map_err(StrategyError::Regression)?
                .to_vec();
            rmse_values.push(rmse(&pred, &y_test)?);
            cc_values.push(pearson_cc(&pred, &y_test)?.value);
        }
        records.push(RunRecord {
            dataset: prepared.name.clone(),
            strategy: id,
            rep,
            reg,
            seed,
            rmse_curve: Curve::new(m_values.clone(), rmse_values),
            cc_curve: Curve::new(m_values.clone(), cc_values),
            selection_order: run.selections,
            wall_time: started.elapsed(),
        });
    }
    Ok(records)
}

fn slug(dataset: &str) -> String {
    dataset.to_ascii_lowercase().replace('-', "_")
}

fn journal_path(output_dir: &Path, dataset: &str, reg: f64) -> PathBuf {
    output_dir.join("journal").join(format!("{}_r{}.jsonl", slug(dataset), reg))
}

/// Path of the final results CSV for one (dataset, r).
pub fn results_path(output_dir: &Path, dataset: &str, reg: f64) -> PathBuf {
    output_dir.join(format!("results_{}_r{}.csv", slug(dataset), reg))
}

fn read_journal(path: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    if !path.is_file() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(line)?);
    }
    Ok(records)
}

fn append_journal(file: &Mutex<std::fs::File>, record: &RunRecord) -> Result<(), HarnessError> {
    let line = serde_json::to_string(record)?;
    let mut guard = file.lock().expect("journal lock");
    writeln!(guard, "{line}")?;
    guard.flush()?;
    Ok(())
}

/// Writes the final results CSV for one (dataset, r) in a fixed order:
/// strategy label, then repetition, then M.
pub fn write_results_csv(
    output_dir: &Path,
    dataset: &str,
    reg: f64,
    records: &[&RunRecord],
) -> Result<PathBuf, HarnessError> {
    let mut sorted: Vec<&&RunRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        a.strategy
            .label()
            .cmp(b.strategy.label())
            .then(a.rep.cmp(&b.rep))
    });
    let path = results_path(output_dir, dataset, reg);
    let mut writer = csv::Writer::from_path(&path)?;
    writer.write_record(["dataset", "strategy", "rep", "seed", "M", "rmse", "cc"])?;
    for record in sorted {
        for (pos, &m) in record.rmse_curve.m_values.iter().enumerate() {
            writer.write_record([
                record.dataset.as_str(),
                record.strategy.label(),
                &record.rep.to_string(),
                &record.seed.to_string(),
                &m.to_string(),
                &record.rmse_curve.values[pos].to_string(),
                &record.cc_curve.values[pos].to_string(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(path)
}

/// Runs the whole configured experiment. Work already present in the journal
/// is reused, so an interrupted run resumes where it stopped and still
/// produces identical result files.
pub fn run_all(config: &ExperimentConfig) -> Result<Vec<RunRecord>, HarnessError> {
    config.validate()?;
    std::fs::create_dir_all(&config.output_dir)?;
    std::fs::create_dir_all(config.output_dir.join("journal"))?;

    let prepared: Vec<PreparedDataset> = config
        .datasets
        .iter()
        .map(|name| prepare_dataset(name, &config.data_dir))
        .collect::<Result<_, _>>()?;

    let mut all_records: Vec<RunRecord> = Vec::new();
    for (dataset_idx, p) in prepared.iter().enumerate() {
        for &reg in &config.reg_values {
            let journal = journal_path(&config.output_dir, &p.dataset.name, reg);
            let existing = read_journal(&journal)?;
            let done: BTreeSet<(String, usize)> = existing
                .iter()
                .map(|r| (r.strategy.label().to_string(), r.rep))
                .collect();

            let pending: Vec<usize> = (0..config.repetitions)
                .filter(|rep| {
                    config
                        .strategies
                        .iter()
                        .any(|s| !done.contains(&(s.label().to_string(), *rep)))
                })
                .collect();

            let journal_file = Mutex::new(
                std::fs::OpenOptions::new().create(true).append(true).open(&journal)?,
            );
            let fresh: Mutex<Vec<RunRecord>> = Mutex::new(Vec::new());
            let worker = |rep: &usize| -> Result<(), HarnessError> {
                let todo: Vec<StrategyId> = config
                    .strategies
                    .iter()
                    .filter(|s| !done.contains(&(s.label().to_string(), *rep)))
                    .copied()
                    .collect();
                let records = run_repetition(
                    &p.dataset,
                    &todo,
                    *rep,
                    reg,
                    config.committee_size,
                    config.base_seed,
                )?;
                for record in &records {
                    append_journal(&journal_file, record)?;
                }
                fresh.lock().expect("record lock").extend(records);
                Ok(())
            };

            run_parallel(&pending, config.jobs, worker)?;

            let mut records = existing;
            records.extend(fresh.into_inner().expect("record lock"));
            // Keep only what this configuration asked for; stale journal
            // entries from wider earlier runs stay in the journal but not in
            // the output.
            let selected: Vec<&RunRecord> = records
                .iter()
                .filter(|r| {
                    config.strategies.contains(&r.strategy) && r.rep < config.repetitions
                })
                .collect();
            write_results_csv(&config.output_dir, &p.dataset.name, reg, &selected)?;
            all_records.extend(selected.into_iter().cloned());
        }
        let _ = dataset_idx;
    }
    Ok(all_records)
}

fn run_parallel<E, F>(reps: &[usize], jobs: Option<usize>, worker: F) -> Result<(), E>
where
    E: Send,
    F: Fn(&usize) -> Result<(), E> + Sync,
{
    use rayon::prelude::*;
    match jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .expect("thread pool");
            pool.install(|| reps.par_iter().try_for_each(|rep| worker(rep)))
        }
        None => reps.par_iter().try_for_each(|rep| worker(rep)),
    }
}

/// Mean and variance curves plus AUC summary for one (dataset, r, strategy).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub dataset: String,
    pub reg: f64,
    pub strategy: StrategyId,
    pub reps: usize,
    pub mean_rmse: Curve,
    pub var_rmse: Curve,
    pub mean_cc: Curve,
    pub var_cc: Curve,
    pub summary: AucSummary,
    pub improvement: Improvement,
}

fn pointwise_mean_var(curves: &[&Curve]) -> (Curve, Curve) {
    let m_values = curves[0].m_values.clone();
    let len = m_values.len();
    let n = curves.len() as f64;
    let mut mean = vec![0.0; len];
    for curve in curves {
        for (pos, v) in curve.values.iter().enumerate() {
            mean[pos] += v / n;
        }
    }
    let mut variance = vec![0.0; len];
    for curve in curves {
        for (pos, v) in curve.values.iter().enumerate() {
            variance[pos] += (v - mean[pos]).powi(2) / n;
        }
    }
    (Curve::new(m_values.clone(), mean), Curve::new(m_values, variance))
}

/// Aggregates raw records into per-(dataset, r, strategy) curves and
/// RS-normalized AUC summaries.
pub fn aggregate(records: &[RunRecord]) -> Result<Vec<Aggregate>, HarnessError> {
    use std::collections::BTreeMap;

    // Group keys ordered (dataset, reg-as-string, strategy label) so output
    // order never depends on input order.
    let mut groups: BTreeMap<(String, String, &'static str), Vec<&RunRecord>> = BTreeMap::new();
    for record in records {
        groups
            .entry((record.dataset.clone(), record.reg.to_string(), record.strategy.label()))
            .or_default()
            .push(record);
    }

    let mut aggregates = Vec::new();
    for ((dataset, reg_key, _), group) in &groups {
        let strategy = group[0].strategy;
        let reg = group[0].reg;
        let rmse_curves: Vec<&Curve> = group.iter().map(|r| &r.rmse_curve).collect();
        let cc_curves: Vec<&Curve> = group.iter().map(|r| &r.cc_curve).collect();
        let (mean_rmse, var_rmse) = pointwise_mean_var(&rmse_curves);
        let (mean_cc, var_cc) = pointwise_mean_var(&cc_curves);
        let summary = AucSummary {
            dataset: dataset.clone(),
            strategy,
            raw: AucValues {
                rmse_mean: auc(&mean_rmse)?,
                rmse_var: auc(&var_rmse)?,
                cc_mean: auc(&mean_cc)?,
                cc_var: auc(&var_cc)?,
            },
            normalized: None,
        };
        let _ = reg_key;
        aggregates.push(Aggregate {
            dataset: dataset.clone(),
            reg,
            strategy,
            reps: group.len() / 1,
            mean_rmse,
            var_rmse,
            mean_cc,
            var_cc,
            summary,
            improvement: Improvement {
                rmse_mean_pct: 0.0,
                rmse_var_pct: 0.0,
                cc_mean_pct: 0.0,
                cc_var_pct: 0.0,
            },
        });
    }

    // Normalize within each (dataset, reg) against the RS baseline.
    let mut keys: Vec<(String, String)> = aggregates
        .iter()
        .map(|a| (a.dataset.clone(), a.reg.to_string()))
        .collect();
    keys.sort();
    keys.dedup();
    for (dataset, reg_key) in keys {
        let idx: Vec<usize> = aggregates
            .iter()
            .enumerate()
            .filter(|(_, a)| a.dataset == dataset && a.reg.to_string() == reg_key)
            .map(|(i, _)| i)
            .collect();
        let mut summaries: Vec<AucSummary> =
            idx.iter().map(|&i| aggregates[i].summary.clone()).collect();
        let improvements = normalize_and_improve(&mut summaries)?;
        for ((&i, summary), (_, improvement)) in
            idx.iter().zip(summaries).zip(improvements)
        {
            aggregates[i].summary = summary;
            aggregates[i].improvement = improvement;
        }
    }
    Ok(aggregates)
}

/// Mean percentage improvements across datasets for one regularization value
/// — the grand-mean rows of the improvement table.
pub fn grand_improvements(
    aggregates: &[Aggregate],
    reg: f64,
) -> Vec<(StrategyId, Improvement)> {
    let mut out = Vec::new();
    for id in StrategyId::ALL {
        let rows: Vec<&Aggregate> = aggregates
            .iter()
            .filter(|a| a.strategy == id && a.reg == reg)
            .collect();
        if rows.is_empty() {
            continue;
        }
        let n = rows.len() as f64;
        out.push((
            id,
            Improvement {
                rmse_mean_pct: rows.iter().map(|a| a.improvement.rmse_mean_pct).sum::<f64>() / n,
                rmse_var_pct: rows.iter().map(|a| a.improvement.rmse_var_pct).sum::<f64>() / n,
                cc_mean_pct: rows.iter().map(|a| a.improvement.cc_mean_pct).sum::<f64>() / n,
                cc_var_pct: rows.iter().map(|a| a.improvement.cc_var_pct).sum::<f64>() / n,
            },
        ));
    }
    out
}

/// One row of the pairwise significance table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub reg: f64,
    pub proposed: StrategyId,
    pub baseline: StrategyId,
    /// One-tailed p for "proposed has smaller RMSE AUC than baseline".
    pub p_rmse: f64,
    /// One-tailed p for "proposed has larger CC AUC than baseline".
    pub p_cc: f64,
}

/// Welch t-tests of the proposed strategies against the two strongest
/// baselines, over per-dataset normalized AUCs.
pub fn pairwise_tests(
    aggregates: &[Aggregate],
    reg: f64,
) -> Result<Vec<PairwiseTest>, HarnessError> {
    let proposed = [StrategyId::RdIgs, StrategyId::Rdigs, StrategyId::Rdigsr];
    let baselines = [StrategyId::RdEmcm, StrategyId::Igs];

    let normalized = |id: StrategyId, pick: fn(&AucValues) -> f64| -> Vec<f64> {
        let mut rows: Vec<(&str, f64)> = aggregates
            .iter()
            .filter(|a| a.strategy == id && a.reg == reg)
            .map(|a| {
                let values = a.summary.normalized.expect("aggregates are normalized");
                (a.dataset.as_str(), pick(&values))
            })
            .collect();
        rows.sort_by(|x, y| x.0.cmp(y.0));
        rows.into_iter().map(|(_, v)| v).collect()
    };

    let mut table = Vec::new();
    for p in proposed {
        for b in baselines {
            let p_rmse = ttest_one_tailed(
                &normalized(p, |v| v.rmse_mean),
                &normalized(b, |v| v.rmse_mean),
                Tail::Less,
            )?;
            let p_cc = ttest_one_tailed(
                &normalized(p, |v| v.cc_mean),
                &normalized(b, |v| v.cc_mean),
                Tail::Greater,
            )?;
            table.push(PairwiseTest { reg, proposed: p, baseline: b, p_rmse, p_cc });
        }
    }
    Ok(table)
}

/// Reads all `results_*.csv` files back into records (selection order and
/// wall time are not persisted in the CSVs and come back empty).
pub fn read_results_dir(output_dir: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(output_dir)
        .map_err(|_| HarnessError::MissingResults(output_dir.to_path_buf()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("results_") && n.ends_with(".csv"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(HarnessError::MissingResults(output_dir.to_path_buf()));
    }

    let mut records = Vec::new();
    for path in files {
        let reg = parse_reg_from_name(&path)?;
        let mut reader = csv::Reader::from_path(&path)?;
        // Rows for one record are contiguous (fixed sort order).
        let mut current: Option<RunRecord> = None;
        for row in reader.records() {
            let row = row.map_err(DataIoError::from)?;
            let dataset = row.get(0).unwrap_or_default().to_string();
            let strategy: StrategyId = row
                .get(1)
                .unwrap_or_default()
                .parse()
                .map_err(HarnessError::InvalidConfig)?;
            let parse =
                |s: Option<&str>| s.unwrap_or_default().parse::<f64>().unwrap_or(f64::NAN);
            let rep: usize = row.get(2).unwrap_or_default().parse().unwrap_or(0);
            let seed: u64 = row.get(3).unwrap_or_default().parse().unwrap_or(0);
            let m: usize = row.get(4).unwrap_or_default().parse().unwrap_or(0);
            let rmse_v = parse(row.get(5));
            let cc_v = parse(row.get(6));

            let start_new = current
                .as_ref()
                .map(|r| r.dataset != dataset || r.strategy != strategy || r.rep != rep)
                .unwrap_or(true);
            if start_new {
                if let Some(done) = current.take() {
                    records.push(done);
                }
                current = Some(RunRecord {
                    dataset,
                    strategy,
                    rep,
                    reg,
                    seed,
                    rmse_curve: Curve { m_values: vec![], values: vec![] },
                    cc_curve: Curve { m_values: vec![], values: vec![] },
                    selection_order: vec![],
                    wall_time: Duration::ZERO,
                });
            }
            let record = current.as_mut().expect("just created");
            record.rmse_curve.m_values.push(m);
            record.rmse_curve.values.push(rmse_v);
            record.cc_curve.m_values.push(m);
            record.cc_curve.values.push(cc_v);
        }
        if let Some(done) = current.take() {
            records.push(done);
        }
    }
    Ok(records)
}

fn parse_reg_from_name(path: &Path) -> Result<f64, HarnessError> {
    let name = path
        .file_stem()
        .and_then(|n| n.to_str())
        .ok_or_else(|| HarnessError::MissingResults(path.to_path_buf()))?;
    let reg_part = name
        .rsplit("_r")
        .next()
        .ok_or_else(|| HarnessError::InvalidConfig(format!("bad results file name: {name}")))?;
    reg_part
        .parse::<f64>()
        .map_err(|_| HarnessError::InvalidConfig(format!("bad results file name: {name}")))
}

/// Distinct regularization values present, in ascending order.
pub fn reg_values_in(records: &[RunRecord]) -> Vec<f64> {
    let mut regs: Vec<f64> = records.iter().map(|r| r.reg).collect();
    regs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    regs.dedup();
    regs
}

/// Writes the normalized-AUC summary CSV for one regularization value.
pub fn write_summary_csv(
    output_dir: &Path,
    aggregates: &[Aggregate],
    reg: f64,
) -> Result<PathBuf, HarnessError> {
    let path = output_dir.join(format!("summary_r{reg}.csv"));
    let mut writer = csv::Writer::from_path(&path)?;
    writer.write_record([
        "dataset",
        "strategy",
        "auc_rmse_mean",
        "auc_rmse_var",
        "auc_cc_mean",
        "auc_cc_var",
        "norm_rmse_mean",
        "norm_rmse_var",
        "norm_cc_mean",
        "norm_cc_var",
    ])?;
    for a in aggregates.iter().filter(|a| a.reg == reg) {
        let n = a.summary.normalized.expect("normalized");
        writer.write_record([
            a.dataset.as_str(),
            a.strategy.label(),
            &a.summary.raw.rmse_mean.to_string(),
            &a.summary.raw.rmse_var.to_string(),
            &a.summary.raw.cc_mean.to_string(),
            &a.summary.raw.cc_var.to_string(),
            &n.rmse_mean.to_string(),
            &n.rmse_var.to_string(),
            &n.cc_mean.to_string(),
            &n.cc_var.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(path)
}

/// Writes the grand-mean percentage-improvement table for one
/// regularization value.
pub fn write_improvements_csv(
    output_dir: &Path,
    aggregates: &[Aggregate],
    reg: f64,
) -> Result<PathBuf, HarnessError> {
    let path = output_dir.join(format!("improvements_r{reg}.csv"));
    let mut writer = csv::Writer::from_path(&path)?;
    writer.write_record([
        "strategy",
        "rmse_mean_pct",
        "rmse_var_pct",
        "cc_mean_pct",
        "cc_var_pct",
    ])?;
    for (id, improvement) in grand_improvements(aggregates, reg) {
        writer.write_record([
            id.label(),
            &format!("{:.4}", improvement.rmse_mean_pct),
            &format!("{:.4}", improvement.rmse_var_pct),
            &format!("{:.4}", improvement.cc_mean_pct),
            &format!("{:.4}", improvement.cc_var_pct),
        ])?;
    }
    writer.flush()?;
    Ok(path)
}

/// Writes the pairwise p-value table for one regularization value.
pub fn write_pvalues_csv(
    output_dir: &Path,
    tests: &[PairwiseTest],
    reg: f64,
) -> Result<PathBuf, HarnessError> {
    let path = output_dir.join(format!("pvalues_r{reg}.csv"));
    let mut writer = csv::Writer::from_path(&path)?;
    writer.write_record(["proposed", "baseline", "p_rmse", "p_cc"])?;
    for t in tests.iter().filter(|t| t.reg == reg) {
        writer.write_record([
            t.proposed.label(),
            t.baseline.label(),
            &format!("{:.6}", t.p_rmse),
            &format!("{:.6}", t.p_cc),
        ])?;
    }
    writer.flush()?;
    Ok(path)
}

/// Writes per-dataset mean-curve files (one column per strategy) and the
/// normalized-AUC bar data; returns every file written.
pub fn write_plot_data(
    output_dir: &Path,
    aggregates: &[Aggregate],
    reg: f64,
) -> Result<Vec<PathBuf>, HarnessError> {
    let mut written = Vec::new();
    let mut datasets: Vec<String> = aggregates
        .iter()
        .filter(|a| a.reg == reg)
        .map(|a| a.dataset.clone())
        .collect();
    datasets.sort();
    datasets.dedup();

    for dataset in &datasets {
        let rows: Vec<&Aggregate> = aggregates
            .iter()
            .filter(|a| a.reg == reg && &a.dataset == dataset)
            .collect();
        type CurveOf = for<'a> fn(&'a Aggregate) -> &'a Curve;
        let selectors: [(&str, CurveOf); 2] =
            [("rmse", |a| &a.mean_rmse), ("cc", |a| &a.mean_cc)];
        for (metric, curve_of) in selectors {
            let path =
                output_dir.join(format!("curves_{}_r{}_{}.csv", slug(dataset), reg, metric));
            let mut writer = csv::Writer::from_path(&path)?;
            let mut header = vec!["M".to_string()];
            header.extend(rows.iter().map(|a| a.strategy.label().to_string()));
            writer.write_record(&header)?;
            let m_values = &curve_of(rows[0]).m_values;
            for (pos, m) in m_values.iter().enumerate() {
                let mut record = vec![m.to_string()];
                record.extend(rows.iter().map(|a| curve_of(a).values[pos].to_string()));
                writer.write_record(&record)?;
            }
            writer.flush()?;
            written.push(path);
        }
    }

    let path = output_dir.join(format!("norm_auc_r{reg}.csv"));
    let mut writer = csv::Writer::from_path(&path)?;
    writer.write_record(["dataset", "strategy", "norm_rmse_mean", "norm_cc_mean"])?;
    for a in aggregates.iter().filter(|a| a.reg == reg) {
        let n = a.summary.normalized.expect("normalized");
        writer.write_record([
            a.dataset.as_str(),
            a.strategy.label(),
            &n.rmse_mean.to_string(),
            &n.cc_mean.to_string(),
        ])?;
    }
    writer.flush()?;
    written.push(path);
    Ok(written)
}

/// Writes the run-metadata file pinning every protocol constant.
pub fn write_metadata(output_dir: &Path, config: &ExperimentConfig) -> Result<PathBuf, HarnessError> {
    let path = output_dir.join("run_metadata.toml");
    let strategies: Vec<&str> = config.strategies.iter().map(|s| s.label()).collect();
    let text = format!(
        r#"# Protocol constants for this run; fixed choices are listed so results
# can be audited and replayed.

[experiment]
datasets = {datasets:?}
strategies = {strategies:?}
repetitions = {reps}
r = {regs:?}
committee = {committee}
seed = {seed}

[protocol]
split = "random permutation, first floor(0.8 N) samples form the training pool"
normalization = "z-score fitted on the training pool, applied to train and test; sample std; columns with std < 1e-12 divide by 1"
m_schedule = "M0 = d+1 labels from initialization, one per iteration up to d+21"
model = "ridge regression, bias unregularized via centering, SPD solve"
curve_metrics = "RMSE and Pearson CC on the held-out test set at every M"
auc = "trapezoidal rule over the M grid"
variance_rows = "AUC of the per-M across-repetition variance curve, normalized by RS (interpretation choice)"
ttest = "Welch two-sample one-tailed t-test over per-dataset normalized AUCs"

[selection]
tie_rule = "every argmax breaks ties toward the smallest pool index"
kmeans = "greedy k-means++ seeding, 10 restarts, 300 iteration cap, farthest-point empty-cluster repair"
committee = "bootstrap resamples of the labeled set, size M, drawn with replacement"
emcm_norm = "|y_p - y_hat| times the Euclidean norm of the feature vector, bias coordinate excluded"
igsr_guard = "R_n clamped below by 1e-12 before division"

[seeding]
scheme = "splitmix64 chains: rep = mix(mix_str(base, dataset), rep); split = mix(rep, SPLT); strategy = mix_str(rep, label); committee = mix(run, M); rd_kmeans = run XOR M"
"#,
        datasets = config.datasets,
        strategies = strategies,
        reps = config.repetitions,
        regs = config.reg_values,
        committee = config.committee_size,
        seed = config.base_seed,
    );
    std::fs::write(&path, text)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::write_stand_ins;

    fn tiny_config(dir: &Path) -> ExperimentConfig {
        let data_dir = dir.join("data");
        write_stand_ins(&data_dir, &["Concrete-CS"], 5).unwrap();
        let mut config = ExperimentConfig::new(data_dir, dir.join("out"));
        config.datasets = vec!["Concrete-CS".into()];
        config.strategies = vec![StrategyId::Rs, StrategyId::Rdigsr];
        config.repetitions = 2;
        config.base_seed = 11;
        config
    }

    #[test]
    fn run_all_produces_expected_record_count() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let records = run_all(&config).unwrap();
        assert_eq!(records.len(), 2 * 2); // strategies x reps

        for record in &records {
            assert_eq!(record.rmse_curve.m_values, (8..=28).collect::<Vec<_>>());
            assert_eq!(record.selection_order.len(), 28);
        }
    }

    #[test]
    fn paired_design_shares_split_and_seed() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let records = run_all(&config).unwrap();
        let rs: Vec<&RunRecord> =
            records.iter().filter(|r| r.strategy == StrategyId::Rs).collect();
        let rdigsr: Vec<&RunRecord> =
            records.iter().filter(|r| r.strategy == StrategyId::Rdigsr).collect();
        for (a, b) in rs.iter().zip(&rdigsr) {
            assert_eq!(a.rep, b.rep);
            assert_eq!(a.seed, b.seed, "strategies of one rep share the rep seed");
        }
    }

    #[test]
    fn rerun_is_byte_identical_and_resumable() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        run_all(&config).unwrap();
        let path = results_path(&config.output_dir, "Concrete-CS", 0.01);
        let first = std::fs::read(&path).unwrap();

        // Second run reuses the journal (nothing recomputed) and must write
        // identical bytes.
        run_all(&config).unwrap();
        let second = std::fs::read(&path).unwrap();
        assert_eq!(first, second);

        // A cold rerun into a fresh directory also matches.
        let dir2 = tempfile::tempdir().unwrap();
        let mut config2 = config.clone();
        config2.output_dir = dir2.path().join("out");
        run_all(&config2).unwrap();
        let third = std::fs::read(results_path(&config2.output_dir, "Concrete-CS", 0.01)).unwrap();
        assert_eq!(first, third);
    }

    #[test]
    fn aggregate_normalizes_rs_to_one() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let records = run_all(&config).unwrap();
        let aggregates = aggregate(&records).unwrap();
        let rs = aggregates.iter().find(|a| a.strategy == StrategyId::Rs).unwrap();
        let n = rs.summary.normalized.unwrap();
        assert_eq!(n.rmse_mean, 1.0);
        assert_eq!(n.cc_mean, 1.0);
        assert_eq!(rs.improvement.rmse_mean_pct, 0.0);
    }

    #[test]
    fn aggregate_single_rep_has_zero_variance() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(dir.path());
        config.repetitions = 1;
        config.strategies = vec![StrategyId::Rs];
        let records = run_all(&config).unwrap();
        let aggregates = aggregate(&records).unwrap();
        assert_eq!(aggregates.len(), 1);
        assert!(aggregates[0].var_rmse.values.iter().all(|v| *v == 0.0));
        assert_eq!(aggregates[0].mean_rmse, records[0].rmse_curve);
    }

    #[test]
    fn results_roundtrip_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let records = run_all(&config).unwrap();
        let read_back = read_results_dir(&config.output_dir).unwrap();
        assert_eq!(read_back.len(), records.len());
        let agg_a = aggregate(&records).unwrap();
        let agg_b = aggregate(&read_back).unwrap();
        for (a, b) in agg_a.iter().zip(&agg_b) {
            assert_eq!(a.dataset, b.dataset);
            assert_eq!(a.strategy, b.strategy);
            assert_eq!(a.summary.raw.rmse_mean, b.summary.raw.rmse_mean);
        }
    }

    #[test]
    fn missing_dataset_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ExperimentConfig::new(dir.path().join("data"), dir.path().join("out"));
        config.datasets = vec!["Yacht".into()];
        assert!(matches!(
            run_all(&config),
            Err(HarnessError::DatasetUnavailable(_))
        ));
    }

    #[test]
    fn config_file_parses_with_overridable_defaults() {
        let text = r#"
            [experiment]
            datasets = ["Concrete-CS", "Yacht"]
            strategies = ["RS", "RDiGSr"]
            repetitions = 5
            r = [0.001, 0.1]
            seed = 99

            [paths]
            data_dir = "d"
            output_dir = "o"
        "#;
        let config = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(config.datasets.len(), 2);
        assert_eq!(config.strategies, vec![StrategyId::Rs, StrategyId::Rdigsr]);
        assert_eq!(config.repetitions, 5);
        assert_eq!(config.reg_values, vec![0.001, 0.1]);
        assert_eq!(config.base_seed, 99);
        assert_eq!(config.committee_size, 4); // default

        let minimal = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(minimal.strategies.len(), 9);
        assert_eq!(minimal.repetitions, 100);
        assert_eq!(minimal.reg_values, vec![0.01]);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ExperimentConfig::new(dir.path().into(), dir.path().into());
        config.datasets = vec!["x".into()];
        config.reg_values = vec![0.0];
        assert!(matches!(
            config.validate(),
            Err(HarnessError::InvalidConfig(_))
        ));
        config.reg_values = vec![0.01];
        config.repetitions = 0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn pairwise_tests_cover_proposed_vs_baselines() {
        let dir = tempfile::tempdir().unwrap();
        let data_dir = dir.path().join("data");
        write_stand_ins(&data_dir, &["Concrete-CS", "Yacht"], 5).unwrap();
        let mut config = ExperimentConfig::new(data_dir, dir.path().join("out"));
        config.datasets = vec!["Concrete-CS".into(), "Yacht".into()];
        config.strategies = StrategyId::ALL.to_vec();
        config.repetitions = 1;
        let records = run_all(&config).unwrap();
        let aggregates = aggregate(&records).unwrap();
        let tests = pairwise_tests(&aggregates, 0.01).unwrap();
        assert_eq!(tests.len(), 6);
        for t in &tests {
            assert!(t.p_rmse > 0.0 && t.p_rmse < 1.0);
            assert!(t.p_cc > 0.0 && t.p_cc < 1.0);
        }
    }
}
