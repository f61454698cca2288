//! Deterministic synthetic stand-ins for the benchmark datasets.
//!
//! The public benchmark CSVs are distributed by external archives and cannot
//! always be shipped or fetched. This module generates seeded datasets with
//! the same shape (sample count, numeric/categorical feature layout, header
//! names) as the built-in manifests, so the full pipeline — manifests, CSV
//! loading, encoding, the experiment protocol — runs end to end without the
//! originals. Inputs are drawn from an uneven Gaussian mixture (so sample
//! density varies across the space), and targets follow a linear signal with
//! a mild quadratic term, heteroscedastic noise, and a few outliers.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::dataio::{dataset_registry, ColumnRef, DataIoError, DatasetManifest};
use crate::seeding::{mix, mix_str};

/// Shape description for one synthetic dataset.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n: usize,
    pub numeric: usize,
    /// (column name, token count) per categorical column.
    pub categorical: Vec<(String, usize)>,
    pub target_name: String,
}

/// Token counts for the built-in categorical columns.
fn builtin_token_count(dataset: &str, column: &str) -> usize {
    match (dataset, column) {
        ("autoMPG", "origin") => 3,
        ("CPS", "race") => 3,
        ("CPS", "occupation") => 6,
        ("CPS", "sector") => 3,
        _ => 3,
    }
}

/// Builds the synthetic shape for a built-in manifest.
pub fn spec_for(manifest: &DatasetManifest) -> SynthSpec {
    let categorical: Vec<(String, usize)> = manifest
        .categorical_columns
        .iter()
        .map(|c| {
            let name = c.to_string();
            let tokens = builtin_token_count(&manifest.name, &name);
            (name, tokens)
        })
        .collect();
    let raw = manifest.expected_raw_features.unwrap_or(1);
    SynthSpec {
        n: manifest.expected_samples.unwrap_or(100),
        numeric: raw - categorical.len(),
        categorical,
        target_name: match &manifest.target_column {
            ColumnRef::Name(n) => n.clone(),
            ColumnRef::Index(i) => format!("col{i}"),
        },
    }
}

fn gaussian(rng: &mut ChaCha20Rng) -> f64 {
    // Box–Muller; one value per call keeps the stream layout simple.
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Gaussian truncated to ±2.2 standard deviations. Benchmark features are
/// physical quantities with bounded support; unbounded tails would make the
/// stand-ins pathological for distance-based selection in a way the real
/// datasets are not.
fn truncated_gaussian(rng: &mut ChaCha20Rng) -> f64 {
    loop {
        let z = gaussian(rng);
        if z.abs() <= 2.2 {
            return z;
        }
    }
}

/// One generated dataset, ready to be written as CSV.
#[derive(Debug, Clone)]
pub struct SyntheticCsv {
    pub header: Vec<String>,
    /// Row-major fields, already formatted.
    pub rows: Vec<Vec<String>>,
}

/// Generates a dataset of the given shape under the seed.
pub fn synthesize(spec: &SynthSpec, seed: u64) -> SyntheticCsv {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let d = spec.numeric;
    let n_clusters = 5;

    // Uneven weights over broad, overlapping components: density varies
    // across the space (which representativeness-aware selection exploits)
    // without splitting into artificially separated islands.
    let weights: Vec<f64> = (0..n_clusters).map(|i| ((i + 1) * (i + 1)) as f64).collect();
    let total_weight: f64 = weights.iter().sum();
    let centers: Vec<Vec<f64>> = (0..n_clusters)
        .map(|_| (0..d).map(|_| rng.gen::<f64>() * 5.0 - 2.5).collect())
        .collect();
    let base_scales: Vec<f64> = (0..n_clusters).map(|_| 0.7 + rng.gen::<f64>() * 0.8).collect();
    // Features are coarsely quantized, like the integer-coded and
    // repeated-configuration columns of real tabular data; dense regions
    // therefore contain exact duplicates.
    let grid_steps: Vec<f64> = (0..d).map(|_| 0.6 + rng.gen::<f64>() * 0.5).collect();

    let w_linear: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
    // The components behave like regimes: each shifts the response level in a
    // way no linear function of the inputs reproduces exactly.
    let cluster_offsets: Vec<f64> = (0..n_clusters)
        .map(|_| {
            let sign = if rng.gen::<f64>() < 0.5 { -1.0 } else { 1.0 };
            sign * (0.6 + rng.gen::<f64>() * 0.9)
        })
        .collect();
    let global_center: Vec<f64> = (0..d)
        .map(|j| {
            centers
                .iter()
                .zip(&weights)
                .map(|(c, w)| c[j] * w / total_weight)
                .sum()
        })
        .collect();
    // Mild global curvature off the linear trend.
    let v_quad: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
    // Localized smooth structure a linear model cannot capture.
    let n_bumps = 2;
    let bump_centers: Vec<Vec<f64>> = (0..n_bumps)
        .map(|_| (0..d).map(|_| rng.gen::<f64>() * 5.0 - 2.5).collect())
        .collect();
    let bump_heights: Vec<f64> = (0..n_bumps)
        .map(|_| {
            let sign = if rng.gen::<f64>() < 0.5 { -1.0 } else { 1.0 };
            sign * (1.2 + rng.gen::<f64>() * 0.8)
        })
        .collect();
    let token_effects: Vec<Vec<f64>> = spec
        .categorical
        .iter()
        .map(|(_, tokens)| (0..*tokens).map(|_| (rng.gen::<f64>() - 0.5) * 3.0).collect())
        .collect();

    let mut header: Vec<String> = (0..d).map(|j| format!("x{}", j + 1)).collect();
    for (name, _) in &spec.categorical {
        header.push(name.clone());
    }
    header.push(spec.target_name.clone());

    let mut rows = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let mut u = rng.gen::<f64>() * total_weight;
        let mut cluster = n_clusters - 1;
        for (c, w) in weights.iter().enumerate() {
            if u < *w {
                cluster = c;
                break;
            }
            u -= w;
        }
        let x: Vec<f64> = (0..d)
            .map(|j| {
                let raw = centers[cluster][j] + base_scales[cluster] * truncated_gaussian(&mut rng);
                (raw / grid_steps[j]).round() * grid_steps[j]
            })
            .collect();

        // Categorical tokens mostly follow the cluster, with random flips.
        let tokens: Vec<usize> = spec
            .categorical
            .iter()
            .map(|(_, count)| {
                if rng.gen::<f64>() < 0.15 {
                    rng.gen_range(0..*count)
                } else {
                    cluster % count
                }
            })
            .collect();

        let linear: f64 = x.iter().zip(&w_linear).map(|(a, b)| a * b).sum();
        let quad: f64 = x.iter().zip(&v_quad).map(|(a, b)| a * b).sum::<f64>();
        let bumps: f64 = bump_centers
            .iter()
            .zip(&bump_heights)
            .map(|(center, height)| {
                let dist_sq: f64 =
                    x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                height * (-dist_sq / 2.0).exp()
            })
            .sum();
        let cat_effect: f64 = tokens
            .iter()
            .zip(&token_effects)
            .map(|(&t, effects)| effects[t])
            .sum();
        let center_dist: f64 = x
            .iter()
            .zip(&global_center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let gross = if rng.gen::<f64>() < 0.04 { 3.0 } else { 1.0 };
        let noise_scale = 0.25 * gross * (1.0 + 0.18 * center_dist);
        let noise = gaussian(&mut rng) * noise_scale;
        let y = linear
            + 0.04 * quad * quad
            + bumps
            + cluster_offsets[cluster]
            + cat_effect
            + noise;

        let mut row: Vec<String> = x.iter().map(|v| format!("{v:.6}")).collect();
        for (pos, &t) in tokens.iter().enumerate() {
            row.push(format!("{}_{}", spec.categorical[pos].0, t));
        }
        row.push(format!("{y:.6}"));
        rows.push(row);
    }

    SyntheticCsv { header, rows }
}

/// Writes a generated dataset as CSV.
pub fn write_csv(csv: &SyntheticCsv, path: &Path) -> Result<(), DataIoError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(&csv.header)?;
    for row in &csv.rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Generates stand-in CSVs for the named built-in datasets into `data_dir`.
/// Returns the file names written. Seeds derive from `base_seed` and the
/// dataset name, so the same call always writes identical files.
pub fn write_stand_ins(
    data_dir: &Path,
    names: &[&str],
    base_seed: u64,
) -> Result<Vec<String>, DataIoError> {
    std::fs::create_dir_all(data_dir)?;
    let registry = dataset_registry(data_dir);
    let mut written = Vec::new();
    for name in names {
        let entry = registry
            .iter()
            .find(|e| e.manifest.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| DataIoError::InvalidManifest(format!("unknown dataset '{name}'")))?;
        let spec = spec_for(&entry.manifest);
        let seed = mix(mix_str(base_seed, &entry.manifest.name), 0x5359_4e54); // "SYNT"
        let csv = synthesize(&spec, seed);
        let path = data_dir.join(&entry.manifest.csv_path);
        write_csv(&csv, &path)?;
        written.push(entry.manifest.csv_path.clone());
    }
    Ok(written)
}
