//! Feature preprocessing: one-hot encoding, PCA, z-score normalization, and
//! the 80/20 train/test split.
//!
//! The pipeline for a raw dataset is: one-hot encode categorical columns,
//! then (only when categoricals were present) PCA back down to the raw
//! feature count, producing a fully numeric [`Dataset`]. The split and the
//! z-score normalization happen per repetition in the harness, with test
//! statistics always taken from the training pool.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{ColumnValues, Dataset, RawDataset};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid PCA target dimensionality k={k} for {rows}x{cols} input")]
    InvalidK { k: usize, rows: usize, cols: usize },
    #[error("need at least {min} samples to split, got {got}")]
    PoolTooSmall { min: usize, got: usize },
}

/// A fitted linear projection onto the top-`k` principal directions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaTransform {
    /// Column means of the fit data, length `p`.
    pub mean: Vec<f64>,
    /// `p x k` matrix with orthonormal columns, flattened row-major.
    components: Vec<f64>,
    pub p: usize,
    pub k: usize,
    /// Set when some selected direction had (numerically) zero variance; its
    /// component is then an arbitrary orthonormal completion.
    pub rank_deficient: bool,
}

impl PcaTransform {
    pub fn components(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.p, self.k), &self.components).expect("stored shape")
    }
}

/// One-hot encodes the categorical columns of `raw`.
///
/// Output column order: numeric columns in their original order, then one
/// block per categorical column (in original column order), one binary column
/// per distinct token in lexicographic order.
pub fn one_hot(raw: &RawDataset) -> Array2<f64> {
    let n = raw.n_samples();
    let mut encoded: Vec<Vec<f64>> = Vec::new();

    for col in &raw.columns {
        if let ColumnValues::Numeric(values) = &col.values {
            encoded.push(values.clone());
        }
    }
    for col in &raw.columns {
        if let ColumnValues::Categorical(values) = &col.values {
            let mut tokens: Vec<&String> = values.iter().collect();
            tokens.sort();
            tokens.dedup();
            for token in tokens {
                encoded.push(values.iter().map(|v| f64::from(v == token)).collect());
            }
        }
    }

    let d = encoded.len();
    Array2::from_shape_fn((n, d), |(i, j)| encoded[j][i])
}

/// Fits PCA on `x`, keeping the `k` directions of largest variance.
///
/// Components are sign-fixed so the largest-magnitude entry of each one is
/// positive (first such entry on ties). Zero-variance directions are not an
/// error; they yield an arbitrary orthonormal completion and set the
/// `rank_deficient` flag.
pub fn pca_fit(x: &ArrayView2<'_, f64>, k: usize) -> Result<PcaTransform, PreprocessError> {
    let (n, p) = x.dim();
    if k == 0 || k > p || p > n {
        return Err(PreprocessError::InvalidK { k, rows: n, cols: p });
    }

    let mean = x.mean_axis(Axis(0)).expect("n >= 1");
    let centered = x - &mean.view().insert_axis(Axis(0));
    let denom = (n.max(2) - 1) as f64;
    let cov = centered.t().dot(&centered) / denom;

    let cov_na = nalgebra::DMatrix::from_fn(p, p, |i, j| cov[(i, j)]);
    let eigen = cov_na.symmetric_eigen();

    // Order eigenpairs by decreasing eigenvalue, index-stable on ties.
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });

    let max_eig = eigen.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let tol = 1e-12 * max_eig.max(1.0);
    let mut components = vec![0.0; p * k];
    let mut rank_deficient = false;
    for (out_col, &src) in order.iter().take(k).enumerate() {
        if eigen.eigenvalues[src] <= tol {
            rank_deficient = true;
        }
        let col = eigen.eigenvectors.column(src);
        // Sign convention: first entry of maximal magnitude made positive.
        let lead = (0..p)
            .max_by(|&a, &b| {
                col[a]
                    .abs()
                    .partial_cmp(&col[b].abs())
                    .unwrap()
                    .then(b.cmp(&a))
            })
            .expect("p >= 1");
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        for row in 0..p {
            components[row * k + out_col] = sign * col[row];
        }
    }

    Ok(PcaTransform {
        mean: mean.to_vec(),
        components,
        p,
        k,
        rank_deficient,
    })
}

/// Projects `x` through a fitted transform: `(x - mean) * components`.
pub fn pca_apply(
    transform: &PcaTransform,
    x: &ArrayView2<'_, f64>,
) -> Result<Array2<f64>, PreprocessError> {
    if x.ncols() != transform.p {
        return Err(PreprocessError::DimensionMismatch {
            expected: transform.p,
            got: x.ncols(),
        });
    }
    let mean = Array1::from(transform.mean.clone());
    let centered = x - &mean.view().insert_axis(Axis(0));
    Ok(centered.dot(&transform.components()))
}

/// Per-column mean/standard-deviation statistics fitted on training data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZScoreStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Columns whose training std fell below 1e-12; they divide by 1 instead.
    pub degenerate: Vec<bool>,
}

/// Fits z-score statistics (sample standard deviation) on `x_train`.
pub fn zscore_fit(x_train: &ArrayView2<'_, f64>) -> ZScoreStats {
    let n = x_train.nrows();
    assert!(n >= 1, "zscore_fit requires a non-empty matrix");
    let mean = x_train.mean_axis(Axis(0)).expect("n >= 1");
    let mut std = vec![1.0; x_train.ncols()];
    let mut degenerate = vec![false; x_train.ncols()];
    for j in 0..x_train.ncols() {
        let s = if n >= 2 {
            let var = x_train
                .column(j)
                .iter()
                .map(|v| (v - mean[j]).powi(2))
                .sum::<f64>()
                / (n - 1) as f64;
            var.sqrt()
        } else {
            0.0
        };
        if s < 1e-12 {
            degenerate[j] = true;
        } else {
            std[j] = s;
        }
    }
    ZScoreStats {
        mean: mean.to_vec(),
        std,
        degenerate,
    }
}

/// Applies fitted statistics column-wise: `(x - mean) / std`.
pub fn zscore_apply(
    stats: &ZScoreStats,
    x: &ArrayView2<'_, f64>,
) -> Result<Array2<f64>, PreprocessError> {
    if x.ncols() != stats.mean.len() {
        return Err(PreprocessError::DimensionMismatch {
            expected: stats.mean.len(),
            got: x.ncols(),
        });
    }
    let mut out = x.to_owned();
    for (j, mut col) in out.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|v| (v - stats.mean[j]) / stats.std[j]);
    }
    Ok(out)
}

/// A seeded 80/20 partition of `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

/// Randomly permutes `0..n` under the seed and takes the first `floor(0.8 n)`
/// indices as the training pool.
pub fn split_train_test(n: usize, seed: u64) -> Result<Split, PreprocessError> {
    if n < 5 {
        return Err(PreprocessError::PoolTooSmall { min: 5, got: n });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    let n_train = n * 4 / 5;
    let test_indices = indices.split_off(n_train);
    Ok(Split {
        train_indices: indices,
        test_indices,
        seed,
    })
}

/// Runs the encoding pipeline on a raw dataset: one-hot, then — only when
/// categorical columns were present — PCA back to the raw feature count.
pub fn encode_dataset(
    raw: &RawDataset,
) -> Result<(Dataset, Option<PcaTransform>), PreprocessError> {
    let encoded = one_hot(raw);
    let labels = Array1::from(raw.target.clone());
    if raw.n_categorical() == 0 {
        return Ok((Dataset::new(raw.name.clone(), encoded, labels), None));
    }
    let k = raw.columns.len();
    let transform = pca_fit(&encoded.view(), k)?;
    let features = pca_apply(&transform, &encoded.view())?;
    Ok((Dataset::new(raw.name.clone(), features, labels), Some(transform)))
}

/// Selects rows of `x` by index.
pub fn take_rows(x: &ArrayView2<'_, f64>, indices: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((indices.len(), x.ncols()));
    for (row, &i) in indices.iter().enumerate() {
        out.row_mut(row).assign(&x.row(i));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::RawColumn;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;

    // ------------------------------------------------------------------
    // Independent oracle: cyclic Jacobi eigendecomposition of a symmetric
    // matrix. Deliberately separate from the nalgebra path used by pca_fit.
    // ------------------------------------------------------------------
    fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let p = a.len();
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..p {
                for j in (i + 1)..p {
                    off += a[i][j] * a[i][j];
                }
            }
            if off < 1e-24 {
                break;
            }
            for i in 0..p {
                for j in (i + 1)..p {
                    if a[i][j].abs() < 1e-18 {
                        continue;
                    }
                    let theta = (a[j][j] - a[i][i]) / (2.0 * a[i][j]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..p {
                        let aik = a[i][k];
                        let ajk = a[j][k];
                        a[i][k] = c * aik - s * ajk;
                        a[j][k] = s * aik + c * ajk;
                    }
                    for k in 0..p {
                        let aki = a[k][i];
                        let akj = a[k][j];
                        a[k][i] = c * aki - s * akj;
                        a[k][j] = s * aki + c * akj;
                    }
                }
            }
        }
        let mut eig: Vec<f64> = (0..p).map(|i| a[i][i]).collect();
        eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
        eig
    }

    fn covariance(x: &Array2<f64>) -> Vec<Vec<f64>> {
        let n = x.nrows();
        let p = x.ncols();
        let mean = x.mean_axis(Axis(0)).unwrap();
        let mut cov = vec![vec![0.0; p]; p];
        for i in 0..p {
            for j in 0..p {
                let mut s = 0.0;
                for r in 0..n {
                    s += (x[(r, i)] - mean[i]) * (x[(r, j)] - mean[j]);
                }
                cov[i][j] = s / (n - 1) as f64;
            }
        }
        cov
    }

    fn raw_with(
        numeric: Vec<(&str, Vec<f64>)>,
        categorical: Vec<(&str, Vec<&str>)>,
        target: Vec<f64>,
    ) -> RawDataset {
        let mut columns = Vec::new();
        for (name, v) in numeric {
            columns.push(RawColumn {
                name: name.into(),
                values: ColumnValues::Numeric(v),
            });
        }
        for (name, v) in categorical {
            columns.push(RawColumn {
                name: name.into(),
                values: ColumnValues::Categorical(
                    v.into_iter().map(str::to_owned).collect(),
                ),
            });
        }
        RawDataset {
            name: "test".into(),
            columns,
            target,
            dropped_rows: 0,
            warnings: vec![],
        }
    }

    #[test]
    fn one_hot_three_tokens() {
        let raw = raw_with(
            vec![("n", vec![1.0, 2.0, 3.0])],
            vec![("c", vec!["b", "a", "c"])],
            vec![0.0, 0.0, 0.0],
        );
        let x = one_hot(&raw);
        assert_eq!(x.dim(), (3, 4));
        // Tokens a, b, c in sorted order after the numeric column.
        assert_eq!(x.row(0).to_vec(), vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(x.row(1).to_vec(), vec![2.0, 1.0, 0.0, 0.0]);
        assert_eq!(x.row(2).to_vec(), vec![3.0, 0.0, 0.0, 1.0]);
        // Each one-hot block sums to exactly 1 per row.
        for row in x.rows() {
            assert_eq!(row.iter().skip(1).sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn one_hot_without_categoricals_is_identity() {
        let raw = raw_with(
            vec![("a", vec![1.0, 4.0]), ("b", vec![2.0, 5.0])],
            vec![],
            vec![0.0, 0.0],
        );
        let x = one_hot(&raw);
        assert_eq!(x, array![[1.0, 2.0], [4.0, 5.0]]);
    }

    #[test]
    fn one_hot_matches_published_cps_width() {
        // 7 numeric plus categorical blocks of 3 + 6 + 3 tokens = 19 columns.
        let n = 12;
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let numeric: Vec<(&str, Vec<f64>)> = vec!["a", "b", "c", "d", "e", "f", "g"]
            .into_iter()
            .map(|name| (name, (0..n).map(|_| rng.gen::<f64>()).collect()))
            .collect();
        let race = ["w", "h", "o"];
        let occupation = ["mgmt", "sales", "cler", "serv", "manuf", "prof"];
        let sector = ["manu", "cons", "other"];
        let pick = |opts: &[&'static str], rng: &mut ChaCha20Rng| -> Vec<&'static str> {
            // Cycle so every token appears.
            (0..n)
                .map(|i| {
                    if i < opts.len() {
                        opts[i]
                    } else {
                        opts[rng.gen_range(0..opts.len())]
                    }
                })
                .collect()
        };
        let cats = vec![
            ("race", pick(&race, &mut rng)),
            ("occupation", pick(&occupation, &mut rng)),
            ("sector", pick(&sector, &mut rng)),
        ];
        let raw = raw_with(numeric, cats, vec![0.0; n]);
        assert_eq!(one_hot(&raw).ncols(), 19);
    }

    #[test]
    fn pca_full_rank_preserves_pairwise_distances() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((20, 4), |_| rng.gen::<f64>());
        let t = pca_fit(&x.view(), 4).unwrap();
        let y = pca_apply(&t, &x.view()).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                let dx: f64 = (&x.row(i) - &x.row(j)).mapv(|v| v * v).sum().sqrt();
                let dy: f64 = (&y.row(i) - &y.row(j)).mapv(|v| v * v).sum().sqrt();
                assert_abs_diff_eq!(dx, dy, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn pca_rank1_projection_captures_all_variance() {
        // Rank-1 data in 3-D: every row is a multiple of one direction.
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let direction = [0.6, -0.8, 0.0];
        let x = Array2::from_shape_fn((15, 3), |(i, j)| {
            let scale = (i as f64) - 7.0 + rng.gen::<f64>() * 0.0;
            scale * direction[j]
        });
        let t = pca_fit(&x.view(), 1).unwrap();
        let y = pca_apply(&t, &x.view()).unwrap();

        let total_variance: f64 = jacobi_eigenvalues(covariance(&x)).iter().sum();
        let n = y.nrows() as f64;
        let ym = y.column(0).mean().unwrap();
        let projected_variance =
            y.column(0).iter().map(|v| (v - ym).powi(2)).sum::<f64>() / (n - 1.0);
        assert_abs_diff_eq!(projected_variance, total_variance, epsilon = 1e-9);
    }

    #[test]
    fn pca_eigenvalues_match_jacobi_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for _ in 0..10 {
            let x = Array2::from_shape_fn((30, 5), |_| rng.gen::<f64>() * 3.0 - 1.5);
            let t = pca_fit(&x.view(), 5).unwrap();
            let y = pca_apply(&t, &x.view()).unwrap();
            let oracle = jacobi_eigenvalues(covariance(&x));
            // Column variances of the scores are the eigenvalues, in order.
            for j in 0..5 {
                let m = y.column(j).mean().unwrap();
                let var =
                    y.column(j).iter().map(|v| (v - m).powi(2)).sum::<f64>() / (y.nrows() - 1) as f64;
                assert_abs_diff_eq!(var, oracle[j], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn pca_components_are_orthonormal_and_scores_uncorrelated() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((40, 6), |_| rng.gen::<f64>());
        let t = pca_fit(&x.view(), 4).unwrap();
        let c = t.components();
        let gram = c.t().dot(&c);
        for i in 0..4 {
            for j in 0..4 {
                let expect = f64::from(i == j);
                assert_abs_diff_eq!(gram[(i, j)], expect, epsilon = 1e-8);
            }
        }
        let y = pca_apply(&t, &x.view()).unwrap();
        let cov = covariance(&y);
        let leading = cov[0][0];
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(cov[i][j].abs() < 1e-8 * leading);
                }
            }
        }
    }

    #[test]
    fn pca_apply_centers_fit_data() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let x = Array2::from_shape_fn((25, 3), |_| rng.gen::<f64>() + 4.0);
        let t = pca_fit(&x.view(), 2).unwrap();
        let y = pca_apply(&t, &x.view()).unwrap();
        for j in 0..2 {
            assert_abs_diff_eq!(y.column(j).mean().unwrap(), 0.0, epsilon = 1e-9);
        }
        // A single row equal to the mean projects to the zero vector.
        let mean_row = x.mean_axis(Axis(0)).unwrap().insert_axis(Axis(0));
        let z = pca_apply(&t, &mean_row.view()).unwrap();
        assert_abs_diff_eq!(z[(0, 0)], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(z[(0, 1)], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn pca_flags_rank_deficiency() {
        let x = array![[1.0, 2.0], [1.0, 3.0], [1.0, 4.0]]; // first column constant
        let t = pca_fit(&x.view(), 2).unwrap();
        assert!(t.rank_deficient);
        let t1 = pca_fit(&x.view(), 1).unwrap();
        assert!(!t1.rank_deficient);
    }

    #[test]
    fn pca_apply_rejects_wrong_width() {
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.5]];
        let t = pca_fit(&x.view(), 2).unwrap();
        let bad = array![[1.0, 2.0, 3.0]];
        assert!(matches!(
            pca_apply(&t, &bad.view()),
            Err(PreprocessError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zscore_normalizes_fit_data() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let x = Array2::from_shape_fn((30, 4), |_| rng.gen::<f64>() * 10.0 - 3.0);
        let stats = zscore_fit(&x.view());
        let z = zscore_apply(&stats, &x.view()).unwrap();
        for j in 0..4 {
            let m = z.column(j).mean().unwrap();
            let var = z.column(j).iter().map(|v| (v - m).powi(2)).sum::<f64>() / 29.0;
            assert_abs_diff_eq!(m, 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(var.sqrt(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn zscore_constant_column_flagged() {
        let x = array![[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]];
        let stats = zscore_fit(&x.view());
        assert!(stats.degenerate[0]);
        assert!(!stats.degenerate[1]);
        let z = zscore_apply(&stats, &x.view()).unwrap();
        assert!(z.column(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zscore_on_test_data_is_finite() {
        let train = array![[0.0, 1.0], [2.0, 3.0], [4.0, 8.0]];
        let test = array![[100.0, -100.0]];
        let stats = zscore_fit(&train.view());
        let z = zscore_apply(&stats, &test.view()).unwrap();
        assert!(z.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn split_103_gives_82_train() {
        let split = split_train_test(103, 7).unwrap();
        assert_eq!(split.train_indices.len(), 82);
        assert_eq!(split.test_indices.len(), 21);
    }

    #[test]
    fn split_is_deterministic_and_minimal_n() {
        assert_eq!(split_train_test(50, 3).unwrap(), split_train_test(50, 3).unwrap());
        assert_ne!(split_train_test(50, 3).unwrap(), split_train_test(50, 4).unwrap());
        let s = split_train_test(5, 1).unwrap();
        assert_eq!(s.train_indices.len(), 4);
        assert_eq!(s.test_indices.len(), 1);
        assert!(matches!(
            split_train_test(4, 1),
            Err(PreprocessError::PoolTooSmall { .. })
        ));
    }

    #[test]
    fn encode_dataset_hits_raw_dimensionality() {
        // A 9-column one-hot encoding projected back to the 7 raw features.
        let n = 30;
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let numeric: Vec<(&str, Vec<f64>)> = vec!["a", "b", "c", "d", "e", "f"]
            .into_iter()
            .map(|name| (name, (0..n).map(|_| rng.gen::<f64>()).collect()))
            .collect();
        let origin: Vec<&str> = (0..n)
            .map(|i| ["us", "eu", "jp"][i % 3])
            .collect();
        let raw = raw_with(numeric, vec![("origin", origin)], (0..n).map(|i| i as f64).collect());
        let (dataset, transform) = encode_dataset(&raw).unwrap();
        assert_eq!(dataset.dim(), 7);
        assert_eq!(transform.unwrap().k, 7);

        // Without categoricals the matrix passes through untouched.
        let raw2 = raw_with(
            vec![("a", vec![1.0, 2.0, 3.0])],
            vec![],
            vec![1.0, 2.0, 3.0],
        );
        let (dataset2, transform2) = encode_dataset(&raw2).unwrap();
        assert_eq!(dataset2.dim(), 1);
        assert!(transform2.is_none());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn split_is_a_bijection(n in 5usize..200, seed in 0u64..1000) {
                let split = split_train_test(n, seed).unwrap();
                let mut all: Vec<usize> = split
                    .train_indices
                    .iter()
                    .chain(split.test_indices.iter())
                    .copied()
                    .collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                prop_assert_eq!(split.train_indices.len(), n * 4 / 5);
            }
        }
    }
}
