//! Closed-form ridge regression and bootstrap committees.
//!
//! The model under active learning is affine, `f(x) = wᵀx + b`, minimizing
//! `‖Xw + b - y‖² + r‖w‖²` with the bias unregularized. The bias is handled
//! by mean-centering: `w = (XcᵀXc + rI)⁻¹ Xcᵀ yc` solved with a symmetric
//! positive-definite factorization, `b = mean(y) - wᵀ mean(x)`.

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("training data contains non-finite values")]
    NonFiniteInput,
    #[error("dimension mismatch: model has {expected} features, input has {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A fitted affine ridge model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub reg: f64,
}

impl RidgeModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn predict_one(&self, x: &ArrayView1<'_, f64>) -> f64 {
        debug_assert_eq!(x.len(), self.weights.len());
        x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.bias
    }
}

/// Fits ridge regression on `x` (M×d) against `y` (length M) with L2
/// coefficient `reg > 0`.
pub fn fit_ridge(
    x: &ArrayView2<'_, f64>,
    y: &ArrayView1<'_, f64>,
    reg: f64,
) -> Result<RidgeModel, RegressionError> {
    assert!(reg > 0.0, "regularization coefficient must be positive");
    assert_eq!(x.nrows(), y.len(), "row/label count mismatch");
    assert!(x.nrows() >= 1, "need at least one training sample");
    if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(RegressionError::NonFiniteInput);
    }

    let d = x.ncols();
    let x_mean = x.mean_axis(Axis(0)).expect("non-empty");
    let y_mean = y.mean().expect("non-empty");
    let xc = x - &x_mean.view().insert_axis(Axis(0));
    let yc = y.mapv(|v| v - y_mean);

    // Normal equations on centered data; SPD by construction since reg > 0.
    let gram = xc.t().dot(&xc);
    let mut lhs = nalgebra::DMatrix::from_fn(d, d, |i, j| gram[(i, j)]);
    for i in 0..d {
        lhs[(i, i)] += reg;
    }
    let xty = xc.t().dot(&yc);
    let rhs = nalgebra::DVector::from_fn(d, |i, _| xty[i]);

    let solution = match lhs.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        // Cholesky can only fail here through extreme conditioning; LU still
        // produces a usable solution in that case.
        None => lhs
            .lu()
            .solve(&rhs)
            .ok_or(RegressionError::NonFiniteInput)?,
    };

    let weights: Vec<f64> = solution.iter().copied().collect();
    let bias = y_mean
        - weights
            .iter()
            .zip(x_mean.iter())
            .map(|(w, m)| w * m)
            .sum::<f64>();
    Ok(RidgeModel { weights, bias, reg })
}

/// Applies the affine map row-wise.
pub fn predict(
    model: &RidgeModel,
    x: &ArrayView2<'_, f64>,
) -> Result<Array1<f64>, RegressionError> {
    if x.ncols() != model.dim() {
        return Err(RegressionError::DimensionMismatch {
            expected: model.dim(),
            got: x.ncols(),
        });
    }
    let w = ArrayView1::from(&model.weights);
    Ok(x.dot(&w) + model.bias)
}

/// A committee of ridge models trained on bootstrap resamples of the same
/// labeled set.
#[derive(Debug, Clone)]
pub struct Committee {
    pub members: Vec<RidgeModel>,
    pub seed: u64,
}

const BOOTSTRAP_RETRIES: usize = 16;

/// Draws one bootstrap index multiset of size `m`.
fn draw_resample(rng: &mut ChaCha20Rng, m: usize) -> Vec<usize> {
    (0..m).map(|_| rng.gen_range(0..m)).collect()
}

/// Trains `p` ridge models on independent bootstrap resamples.
///
/// A resample whose labels are all identical gives a degenerate (constant)
/// member; such draws are retried a bounded number of times before being
/// accepted as-is.
pub fn bootstrap_committee(
    x: &ArrayView2<'_, f64>,
    y: &ArrayView1<'_, f64>,
    p: usize,
    reg: f64,
    seed: u64,
) -> Result<Committee, RegressionError> {
    assert!(p >= 2, "a committee needs at least two members");
    assert!(x.nrows() >= 2, "bootstrap needs at least two labeled samples");
    let m = x.nrows();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut members = Vec::with_capacity(p);
    for _ in 0..p {
        let mut model = None;
        for _attempt in 0..BOOTSTRAP_RETRIES {
            let idx = draw_resample(&mut rng, m);
            let labels_constant = idx.windows(2).all(|w| y[w[0]] == y[w[1]]);
            let xb = crate::preprocess::take_rows(x, &idx);
            let yb = Array1::from_iter(idx.iter().map(|&i| y[i]));
            match fit_ridge(&xb.view(), &yb.view(), reg) {
                Ok(fit) if !labels_constant => {
                    model = Some(fit);
                    break;
                }
                Ok(fit) => model = Some(fit), // degenerate; keep but retry
                Err(_) => {}
            }
        }
        match model {
            Some(fit) => members.push(fit),
            None => {
                // Every retry failed to fit; fall back to the full labeled set.
                members.push(fit_ridge(x, y, reg)?);
            }
        }
    }
    Ok(Committee { members, seed })
}

/// Per-row population variance of the member predictions.
pub fn committee_variance(
    committee: &Committee,
    x: &ArrayView2<'_, f64>,
) -> Result<Array1<f64>, RegressionError> {
    let p = committee.members.len() as f64;
    let predictions: Vec<Array1<f64>> = committee
        .members
        .iter()
        .map(|m| predict(m, x))
        .collect::<Result<_, _>>()?;
    let n = x.nrows();
    let mut variance = Array1::zeros(n);
    for i in 0..n {
        let mean: f64 = predictions.iter().map(|pr| pr[i]).sum::<f64>() / p;
        variance[i] = predictions.iter().map(|pr| (pr[i] - mean).powi(2)).sum::<f64>() / p;
    }
    Ok(variance)
}
