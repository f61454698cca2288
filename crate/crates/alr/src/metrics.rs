//! Performance measures and statistics: RMSE, Pearson correlation, area under
//! the learning curve, baseline-normalized improvements, and the one-tailed
//! Welch two-sample t-test.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::strategies::StrategyId;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("a curve needs at least two points")]
    TooFewPoints,
    #[error("t-test needs at least two samples per side")]
    TooFewSamples,
    #[error("no random-sampling baseline present for dataset {0}")]
    MissingBaseline(String),
    #[error("random-sampling baseline AUC is zero for dataset {0}")]
    ZeroBaseline(String),
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mse = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64;
    Ok(mse.sqrt())
}

/// Sample Pearson correlation, with a degenerate flag when either side has
/// zero variance (the value is then 0 by convention).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub value: f64,
    pub degenerate: bool,
}

pub fn pearson_cc(pred: &[f64], truth: &[f64]) -> Result<Correlation, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.len() < 2 {
        return Err(MetricsError::TooFewSamples);
    }
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mt = truth.iter().sum::<f64>() / n;
    let mut spt = 0.0;
    let mut spp = 0.0;
    let mut stt = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        spt += (p - mp) * (t - mt);
        spp += (p - mp) * (p - mp);
        stt += (t - mt) * (t - mt);
    }
    if spp <= 0.0 || stt <= 0.0 {
        return Ok(Correlation { value: 0.0, degenerate: true });
    }
    Ok(Correlation {
        value: (spt / (spp * stt).sqrt()).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// A metric traced over the labeled-sample counts `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub m_values: Vec<usize>,
    pub values: Vec<f64>,
}

impl Curve {
    pub fn new(m_values: Vec<usize>, values: Vec<f64>) -> Self {
        assert_eq!(m_values.len(), values.len(), "curve length mismatch");
        assert!(
            m_values.windows(2).all(|w| w[0] < w[1]),
            "m values must be strictly increasing"
        );
        Curve { m_values, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Trapezoidal area under the curve over its `M` grid.
pub fn auc(curve: &Curve) -> Result<f64, MetricsError> {
    if curve.len() < 2 {
        return Err(MetricsError::TooFewPoints);
    }
    let mut area = 0.0;
    for i in 0..curve.len() - 1 {
        let width = (curve.m_values[i + 1] - curve.m_values[i]) as f64;
        area += width * (curve.values[i] + curve.values[i + 1]) / 2.0;
    }
    Ok(area)
}

/// The four AUC figures for one (dataset, strategy) pair: AUC of the mean
/// curve and of the across-repetition variance curve, for RMSE and CC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucValues {
    pub rmse_mean: f64,
    pub rmse_var: f64,
    pub cc_mean: f64,
    pub cc_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    pub dataset: String,
    pub strategy: StrategyId,
    pub raw: AucValues,
    /// Raw values divided by the random-sampling baseline on the same
    /// dataset; populated by [`normalize_and_improve`].
    pub normalized: Option<AucValues>,
}

/// Percentage improvements over the random-sampling baseline. Smaller is
/// better for RMSE and for both variances; larger is better for mean CC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub rmse_mean_pct: f64,
    pub rmse_var_pct: f64,
    pub cc_mean_pct: f64,
    pub cc_var_pct: f64,
}

/// Normalizes every summary of one dataset by its RS baseline and computes
/// the percentage improvements.
pub fn normalize_and_improve(
    summaries: &mut [AucSummary],
) -> Result<Vec<(StrategyId, Improvement)>, MetricsError> {
    let dataset = summaries
        .first()
        .map(|s| s.dataset.clone())
        .ok_or(MetricsError::Empty)?;
    let baseline = summaries
        .iter()
        .find(|s| s.strategy == StrategyId::Rs)
        .map(|s| s.raw)
        .ok_or_else(|| MetricsError::MissingBaseline(dataset.clone()))?;
    if baseline.rmse_mean == 0.0 || baseline.cc_mean == 0.0 {
        return Err(MetricsError::ZeroBaseline(dataset.clone()));
    }
    // Variance baselines can legitimately be zero (a single repetition);
    // 0/0 normalizes to 1, anything else over zero to infinity.
    let var_ratio = |value: f64, base: f64| {
        if base == 0.0 {
            if value == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            value / base
        }
    };

    let mut improvements = Vec::with_capacity(summaries.len());
    for summary in summaries.iter_mut() {
        let normalized = AucValues {
            rmse_mean: summary.raw.rmse_mean / baseline.rmse_mean,
            rmse_var: var_ratio(summary.raw.rmse_var, baseline.rmse_var),
            cc_mean: summary.raw.cc_mean / baseline.cc_mean,
            cc_var: var_ratio(summary.raw.cc_var, baseline.cc_var),
        };
        summary.normalized = Some(normalized);
        improvements.push((
            summary.strategy,
            Improvement {
                rmse_mean_pct: (1.0 - normalized.rmse_mean) * 100.0,
                rmse_var_pct: (1.0 - normalized.rmse_var) * 100.0,
                cc_mean_pct: (normalized.cc_mean - 1.0) * 100.0,
                cc_var_pct: (1.0 - normalized.cc_var) * 100.0,
            },
        ));
    }
    Ok(improvements)
}

/// Direction of the alternative hypothesis for [`ttest_one_tailed`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    /// Alternative: mean(a) < mean(b).
    Less,
    /// Alternative: mean(a) > mean(b).
    Greater,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch two-sample one-tailed t-test.
///
/// Returns the p-value for the chosen alternative, clamped into the open
/// interval (0, 1). Unequal variances are allowed; degrees of freedom follow
/// Welch–Satterthwaite.
pub fn ttest_one_tailed(a: &[f64], b: &[f64], tail: Tail) -> Result<f64, MetricsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(MetricsError::TooFewSamples);
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let se_sq = va / na + vb / nb;

    let p = if se_sq <= 0.0 {
        // Both samples are constant: the statistic degenerates.
        if ma == mb {
            0.5
        } else {
            let favors = match tail {
                Tail::Less => ma < mb,
                Tail::Greater => ma > mb,
            };
            if favors {
                0.0
            } else {
                1.0
            }
        }
    } else {
        let t = (ma - mb) / se_sq.sqrt();
        let df = se_sq * se_sq
            / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
        match tail {
            Tail::Less => student_t_cdf(t, df),
            Tail::Greater => 1.0 - student_t_cdf(t, df),
        }
    };
    Ok(p.clamp(1e-300, 1.0 - 1e-16))
}

/// CDF of Student's t distribution via the regularized incomplete beta
/// function.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    let tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Lanczos approximation of ln Γ(z) for z > 0.
fn ln_gamma(z: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if z < 0.5 {
        // Reflection.
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * z).sin().ln()
            - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut acc = COEFFS[0];
    for (i, c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let g = 7.0;
    let base = z + g + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * base.ln() - base + acc.ln()
}

/// Regularized incomplete beta function I_x(a, b) by continued fraction.
fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front.exp() / a) * beta_continued_fraction(a, b, x)
    } else {
        1.0 - regularized_incomplete_beta(b, a, 1.0 - x)
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Lentz's algorithm for the incomplete-beta continued fraction.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m_f = m as f64;
        let m2 = 2.0 * m_f;
        let aa = m_f * (b - m_f) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m_f) * (qab + m_f) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
