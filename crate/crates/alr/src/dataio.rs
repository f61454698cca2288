//! Dataset ingestion: CSV files described by small manifests.
//!
//! A [`DatasetManifest`] names the CSV file, the target column, and which
//! feature columns are categorical; everything else is a numeric feature.
//! Column kinds come solely from the manifest — nothing is inferred from the
//! data. [`load_csv`] produces an immutable [`RawDataset`]; rows containing a
//! missing value (empty field, `?`, or `NA`) are dropped and counted.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataIoError {
    #[error("dataset file not found: {0}")]
    FileMissing(PathBuf),
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("column not found in CSV header: {0}")]
    UnknownColumn(String),
    #[error("dataset is empty after loading (no rows or no feature columns)")]
    EmptyDataset,
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("failed to read CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// A CSV column referenced either by header name or by 0-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnRef::Index(i) => write!(f, "#{i}"),
            ColumnRef::Name(n) => write!(f, "{n}"),
        }
    }
}

impl ColumnRef {
    fn resolve(&self, header: &[String]) -> Result<usize, DataIoError> {
        match self {
            ColumnRef::Index(i) if *i < header.len() => Ok(*i),
            ColumnRef::Index(_) => Err(DataIoError::UnknownColumn(self.to_string())),
            ColumnRef::Name(n) => header
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| DataIoError::UnknownColumn(n.clone())),
        }
    }
}

/// Description of one benchmark dataset: where its CSV lives and how to
/// interpret the columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub csv_path: String,
    pub target_column: ColumnRef,
    #[serde(default)]
    pub categorical_columns: Vec<ColumnRef>,
    #[serde(default)]
    pub expected_samples: Option<usize>,
    #[serde(default)]
    pub expected_raw_features: Option<usize>,
}

impl DatasetManifest {
    /// Parses a manifest from its on-disk `key = value` form.
    pub fn from_toml_str(text: &str) -> Result<Self, DataIoError> {
        let manifest: DatasetManifest =
            toml::from_str(text).map_err(|e| DataIoError::InvalidManifest(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn from_path(path: &Path) -> Result<Self, DataIoError> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| DataIoError::FileMissing(path.to_path_buf()))?;
        Self::from_toml_str(&text)
    }

    fn validate(&self) -> Result<(), DataIoError> {
        if self.categorical_columns.contains(&self.target_column) {
            return Err(DataIoError::InvalidManifest(format!(
                "target column {} is also listed as categorical",
                self.target_column
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// One feature column as loaded from disk, before any encoding.
#[derive(Debug, Clone)]
pub enum ColumnValues {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl ColumnValues {
    pub fn len(&self) -> usize {
        match self {
            ColumnValues::Numeric(v) => v.len(),
            ColumnValues::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            ColumnValues::Numeric(_) => ColumnKind::Numeric,
            ColumnValues::Categorical(_) => ColumnKind::Categorical,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RawColumn {
    pub name: String,
    pub values: ColumnValues,
}

/// A typed, row-complete dataset straight from CSV: feature columns in file
/// order plus the target vector.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub name: String,
    pub columns: Vec<RawColumn>,
    pub target: Vec<f64>,
    /// Rows removed because a field was missing.
    pub dropped_rows: usize,
    /// Non-fatal observations made while loading (sample-count mismatches,
    /// suspiciously small N).
    pub warnings: Vec<String>,
}

impl RawDataset {
    pub fn n_samples(&self) -> usize {
        self.target.len()
    }

    pub fn n_numeric(&self) -> usize {
        self.columns
            .iter()
            .filter(|c| c.values.kind() == ColumnKind::Numeric)
            .count()
    }

    pub fn n_categorical(&self) -> usize {
        self.columns.len() - self.n_numeric()
    }
}

/// A fully numeric dataset: the output of preprocessing, input to the harness.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub features: Array2<f64>,
    pub labels: Array1<f64>,
}

impl Dataset {
    pub fn new(name: String, features: Array2<f64>, labels: Array1<f64>) -> Self {
        assert_eq!(features.nrows(), labels.len(), "feature/label row mismatch");
        assert!(
            features.iter().all(|v| v.is_finite()) && labels.iter().all(|v| v.is_finite()),
            "dataset contains non-finite entries"
        );
        Dataset { name, features, labels }
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Whether N is large enough for the full benchmark schedule
    /// (initial d+1 labels growing to d+21 inside an 80% training pool).
    pub fn supports_full_run(&self) -> bool {
        (self.n_samples() * 4) / 5 >= self.dim() + 22
    }
}

fn is_missing(field: &str) -> bool {
    let t = field.trim();
    t.is_empty() || t == "?" || t.eq_ignore_ascii_case("na")
}

/// Loads the CSV named by `manifest`, resolving `csv_path` against `data_dir`
/// when it is relative.
pub fn load_csv(manifest: &DatasetManifest, data_dir: &Path) -> Result<RawDataset, DataIoError> {
    manifest.validate()?;
    let path = resolve_csv_path(manifest, data_dir);
    if !path.is_file() {
        return Err(DataIoError::FileMissing(path));
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(&path)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| DataIoError::MalformedRow { line: 1, reason: e.to_string() })?
        .iter()
        .map(str::to_owned)
        .collect();

    let target_idx = manifest.target_column.resolve(&header)?;
    let mut categorical_idx = BTreeSet::new();
    for col in &manifest.categorical_columns {
        let idx = col.resolve(&header)?;
        if idx == target_idx {
            return Err(DataIoError::InvalidManifest(format!(
                "target column {} is also listed as categorical",
                manifest.target_column
            )));
        }
        categorical_idx.insert(idx);
    }

    let feature_idx: Vec<usize> = (0..header.len()).filter(|i| *i != target_idx).collect();
    if feature_idx.is_empty() {
        return Err(DataIoError::EmptyDataset);
    }

    let mut columns: Vec<RawColumn> = feature_idx
        .iter()
        .map(|&i| RawColumn {
            name: header[i].clone(),
            values: if categorical_idx.contains(&i) {
                ColumnValues::Categorical(Vec::new())
            } else {
                ColumnValues::Numeric(Vec::new())
            },
        })
        .collect();
    let mut target = Vec::new();
    let mut dropped = 0usize;

    for (row_no, record) in reader.records().enumerate() {
        let line = row_no + 2; // 1-based, after the header
        let record = record.map_err(|e| DataIoError::MalformedRow { line, reason: e.to_string() })?;
        if record.len() != header.len() {
            return Err(DataIoError::MalformedRow {
                line,
                reason: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        if record.iter().any(is_missing) {
            dropped += 1;
            continue;
        }
        let parse_numeric = |idx: usize| -> Result<f64, DataIoError> {
            let field = record.get(idx).unwrap_or("").trim();
            let value: f64 = field.parse().map_err(|_| DataIoError::MalformedRow {
                line,
                reason: format!("column '{}': not a number: '{field}'", header[idx]),
            })?;
            if !value.is_finite() {
                return Err(DataIoError::MalformedRow {
                    line,
                    reason: format!("column '{}': non-finite value", header[idx]),
                });
            }
            Ok(value)
        };
        target.push(parse_numeric(target_idx)?);
        for (col, &idx) in columns.iter_mut().zip(&feature_idx) {
            match &mut col.values {
                ColumnValues::Numeric(v) => v.push(parse_numeric(idx)?),
                ColumnValues::Categorical(v) => {
                    v.push(record.get(idx).unwrap_or("").trim().to_owned())
                }
            }
        }
    }

    if target.is_empty() {
        return Err(DataIoError::EmptyDataset);
    }

    let mut warnings = Vec::new();
    if let Some(expected) = manifest.expected_samples {
        if expected != target.len() {
            warnings.push(format!(
                "expected {expected} samples, loaded {} ({dropped} dropped for missing values)",
                target.len()
            ));
        }
    }
    if let Some(expected) = manifest.expected_raw_features {
        if expected != columns.len() {
            warnings.push(format!(
                "expected {expected} raw feature columns, found {}",
                columns.len()
            ));
        }
    }

    Ok(RawDataset {
        name: manifest.name.clone(),
        columns,
        target,
        dropped_rows: dropped,
        warnings,
    })
}

fn resolve_csv_path(manifest: &DatasetManifest, data_dir: &Path) -> PathBuf {
    let p = Path::new(&manifest.csv_path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        data_dir.join(p)
    }
}

/// A registry entry: the built-in manifest plus the published feature counts
/// and whether the CSV is actually present in the data directory.
#[derive(Debug, Clone)]
pub struct RegistryEntry {
    pub manifest: DatasetManifest,
    pub numeric_features: usize,
    pub categorical_features: usize,
    /// Feature count after one-hot encoding.
    pub total_features: usize,
    pub available: bool,
}

impl RegistryEntry {
    pub fn raw_features(&self) -> usize {
        self.manifest.expected_raw_features.unwrap_or(0)
    }
}

const BUILTIN_MANIFESTS: &[&str] = &[
    include_str!("../manifests/concrete_cs.toml"),
    include_str!("../manifests/yacht.toml"),
    include_str!("../manifests/auto_mpg.toml"),
    include_str!("../manifests/no2.toml"),
    include_str!("../manifests/pm10.toml"),
    include_str!("../manifests/housing.toml"),
    include_str!("../manifests/cps.toml"),
    include_str!("../manifests/concrete.toml"),
    include_str!("../manifests/airfoil.toml"),
    include_str!("../manifests/wine_red.toml"),
    include_str!("../manifests/wine_white.toml"),
];

/// Post-encoding feature counts for the built-in datasets, keyed by name.
/// Everything without categorical columns keeps its raw width.
fn builtin_total_features(manifest: &DatasetManifest) -> usize {
    match manifest.name.as_str() {
        "autoMPG" => 9,
        "CPS" => 19,
        other => {
            debug_assert!(manifest.categorical_columns.is_empty(), "{other}");
            manifest.expected_raw_features.unwrap_or(0)
        }
    }
}

/// The built-in benchmark manifests, with availability checked against
/// `data_dir`. Missing files mark an entry unavailable; they are not errors.
pub fn dataset_registry(data_dir: &Path) -> Vec<RegistryEntry> {
    BUILTIN_MANIFESTS
        .iter()
        .map(|text| {
            let manifest =
                DatasetManifest::from_toml_str(text).expect("built-in manifest must parse");
            let categorical = manifest.categorical_columns.len();
            let raw = manifest.expected_raw_features.unwrap_or(0);
            let available = resolve_csv_path(&manifest, data_dir).is_file();
            RegistryEntry {
                numeric_features: raw - categorical,
                categorical_features: categorical,
                total_features: builtin_total_features(&manifest),
                available,
                manifest,
            }
        })
        .collect()
}

/// Looks a dataset up by name, case-insensitively and ignoring `-`/`_`.
pub fn find_registry_entry(data_dir: &Path, name: &str) -> Option<RegistryEntry> {
    let canon = |s: &str| s.to_ascii_lowercase().replace(['-', '_'], "");
    dataset_registry(data_dir)
        .into_iter()
        .find(|e| canon(&e.manifest.name) == canon(name))
}
