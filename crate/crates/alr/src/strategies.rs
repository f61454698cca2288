//! The nine pool-based sequential sampling strategies.
//!
//! Every strategy is an (initializer, iterator) pair behind one interface:
//! the initializer picks the first `M0` samples without label access, the
//! iterator picks one sample per step given the current ridge model. Label
//! values flow only through [`PoolState`]: a strategy can read labels of
//! already-selected indices and nothing else.
//!
//! Scoring rules, all against the currently labeled set:
//! - `dx`: distance to the nearest labeled sample in input space,
//! - `dy`: distance of the predicted label to the nearest labeled label,
//! - `dxy = dx · dy`: the greedy input×label criterion,
//! - `g`: mean over committee members of `|y_p - ŷ| · ‖x‖` (model change),
//! - `variance`: committee prediction variance,
//! - `R`: sum of distances to every pool sample (representativeness).
//!
//! Every argmax breaks ties toward the smallest pool index, and every random
//! choice flows from an explicit seed, so selection sequences replay exactly.

use std::cell::OnceCell;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::index;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{self, ClusteringError};
use crate::regression::{
    bootstrap_committee, fit_ridge, predict, Committee, RegressionError, RidgeModel,
};
use crate::seeding::mix;

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("not enough unlabeled samples left in the pool")]
    PoolExhausted,
    #[error("no labeled samples yet")]
    NoLabeled,
    #[error("empty candidate set")]
    EmptyCandidateSet,
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

/// Read access to a sample pool. Features are open; labels are revealed one
/// index at a time, when that index is selected for labeling.
pub trait PoolAccess {
    fn features(&self) -> ArrayView2<'_, f64>;
    fn reveal_label(&self, idx: usize) -> f64;
}

/// An in-memory pool holding the hidden labels.
#[derive(Debug, Clone)]
pub struct Pool {
    features: Array2<f64>,
    labels: Array1<f64>,
}

impl Pool {
    pub fn new(features: Array2<f64>, labels: Array1<f64>) -> Self {
        assert_eq!(features.nrows(), labels.len());
        Pool { features, labels }
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl PoolAccess for Pool {
    fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    fn reveal_label(&self, idx: usize) -> f64 {
        self.labels[idx]
    }
}

/// The labeled/unlabeled partition of a pool, in selection order.
pub struct PoolState<'a> {
    pool: &'a dyn PoolAccess,
    labeled: Vec<usize>,
    labeled_y: Vec<f64>,
    is_labeled: Vec<bool>,
    r_cache: OnceCell<Vec<f64>>,
}

impl<'a> PoolState<'a> {
    pub fn new(pool: &'a dyn PoolAccess) -> Self {
        let n = pool.features().nrows();
        PoolState {
            pool,
            labeled: Vec::new(),
            labeled_y: Vec::new(),
            is_labeled: vec![false; n],
            r_cache: OnceCell::new(),
        }
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.pool.features()
    }

    pub fn n_pool(&self) -> usize {
        self.is_labeled.len()
    }

    pub fn n_labeled(&self) -> usize {
        self.labeled.len()
    }

    /// Selected indices in selection order.
    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    /// Labels of the selected indices, parallel to [`Self::labeled`].
    pub fn labeled_labels(&self) -> &[f64] {
        &self.labeled_y
    }

    pub fn is_labeled(&self, idx: usize) -> bool {
        self.is_labeled[idx]
    }

    /// Unlabeled indices in ascending order.
    pub fn unlabeled(&self) -> Vec<usize> {
        (0..self.n_pool()).filter(|&i| !self.is_labeled[i]).collect()
    }

    /// Queries the label of `idx` and moves it to the labeled set.
    pub fn mark_labeled(&mut self, idx: usize) -> Result<(), StrategyError> {
        assert!(!self.is_labeled[idx], "index {idx} selected twice");
        self.is_labeled[idx] = true;
        self.labeled.push(idx);
        self.labeled_y.push(self.pool.reveal_label(idx));
        Ok(())
    }

    /// Feature rows of the labeled set, in selection order.
    pub fn labeled_features(&self) -> Array2<f64> {
        let features = self.features();
        let mut out = Array2::zeros((self.labeled.len(), features.ncols()));
        for (row, &i) in self.labeled.iter().enumerate() {
            out.row_mut(row).assign(&features.row(i));
        }
        out
    }

    /// Representativeness of every pool sample (sum of distances to the whole
    /// pool); computed once per run and cached — it is model-independent.
    pub fn representativeness(&self) -> &[f64] {
        self.r_cache.get_or_init(|| score_representativeness(&self.features()))
    }
}

fn euclid(a: &ArrayView1<'_, f64>, b: &ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Per-candidate scores; exactly the fields the active strategy needs are
/// populated, aligned with `indices`.
#[derive(Debug, Clone, Default)]
pub struct CandidateScores {
    pub indices: Vec<usize>,
    pub dx: Option<Vec<f64>>,
    pub dy: Option<Vec<f64>>,
    pub dxy: Option<Vec<f64>>,
    pub g: Option<Vec<f64>>,
    pub variance: Option<Vec<f64>>,
    pub representativeness: Option<Vec<f64>>,
}

/// First index achieving the maximal score — with candidates in ascending
/// order this is the smallest-index tie rule.
fn argmax(indices: &[usize], scores: &[f64]) -> Option<usize> {
    debug_assert_eq!(indices.len(), scores.len());
    let mut best: Option<(f64, usize)> = None;
    for (&i, &s) in indices.iter().zip(scores) {
        if best.map_or(true, |(b, _)| s > b) {
            best = Some((s, i));
        }
    }
    best.map(|(_, i)| i)
}

fn dx_for(state: &PoolState<'_>, candidates: &[usize]) -> Result<Vec<f64>, StrategyError> {
    if state.n_labeled() == 0 {
        return Err(StrategyError::NoLabeled);
    }
    let features = state.features();
    Ok(candidates
        .iter()
        .map(|&n| {
            state
                .labeled()
                .iter()
                .map(|&m| euclid(&features.row(n), &features.row(m)))
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}

fn dy_for(
    state: &PoolState<'_>,
    model: &RidgeModel,
    candidates: &[usize],
) -> Result<Vec<f64>, StrategyError> {
    if state.n_labeled() == 0 {
        return Err(StrategyError::NoLabeled);
    }
    let features = state.features();
    Ok(candidates
        .iter()
        .map(|&n| {
            let predicted = model.predict_one(&features.row(n));
            state
                .labeled_labels()
                .iter()
                .map(|&y| (predicted - y).abs())
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}

/// Input-space distance scores for all unlabeled samples.
pub fn score_dx(state: &PoolState<'_>) -> Result<CandidateScores, StrategyError> {
    let indices = state.unlabeled();
    let dx = dx_for(state, &indices)?;
    Ok(CandidateScores { indices, dx: Some(dx), ..Default::default() })
}

/// Label-space distance scores for all unlabeled samples.
pub fn score_dy(
    state: &PoolState<'_>,
    model: &RidgeModel,
) -> Result<CandidateScores, StrategyError> {
    let indices = state.unlabeled();
    let dy = dy_for(state, model, &indices)?;
    Ok(CandidateScores { indices, dy: Some(dy), ..Default::default() })
}

fn committee_predictions(
    committee: &Committee,
    features: &ArrayView2<'_, f64>,
    candidates: &[usize],
) -> Result<Vec<Vec<f64>>, RegressionError> {
    let rows = crate::preprocess::take_rows(features, candidates);
    committee
        .members
        .iter()
        .map(|m| Ok(predict(m, &rows.view())?.to_vec()))
        .collect()
}

/// Committee prediction variance for all unlabeled samples.
pub fn score_qbc(
    state: &PoolState<'_>,
    committee: &Committee,
) -> Result<CandidateScores, StrategyError> {
    let indices = state.unlabeled();
    let preds = committee_predictions(committee, &state.features(), &indices)?;
    let p = preds.len() as f64;
    let variance: Vec<f64> = (0..indices.len())
        .map(|i| {
            let mean: f64 = preds.iter().map(|member| member[i]).sum::<f64>() / p;
            preds.iter().map(|member| (member[i] - mean).powi(2)).sum::<f64>() / p
        })
        .collect();
    Ok(CandidateScores { indices, variance: Some(variance), ..Default::default() })
}

fn g_for(
    state: &PoolState<'_>,
    model: &RidgeModel,
    committee: &Committee,
    candidates: &[usize],
) -> Result<Vec<f64>, StrategyError> {
    let features = state.features();
    let preds = committee_predictions(committee, &features, candidates)?;
    let p = preds.len() as f64;
    Ok(candidates
        .iter()
        .enumerate()
        .map(|(pos, &n)| {
            let row = features.row(n);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let predicted = model.predict_one(&row);
            let disagreement: f64 = preds
                .iter()
                .map(|member| (member[pos] - predicted).abs())
                .sum::<f64>();
            disagreement * norm / p
        })
        .collect())
}

/// Expected-model-change scores for all unlabeled samples.
pub fn score_emcm(
    state: &PoolState<'_>,
    model: &RidgeModel,
    committee: &Committee,
) -> Result<CandidateScores, StrategyError> {
    let indices = state.unlabeled();
    let g = g_for(state, model, committee, &indices)?;
    Ok(CandidateScores { indices, g: Some(g), ..Default::default() })
}

/// Representativeness `R` of every pool sample: sum of distances to the
/// entire pool.
pub fn score_representativeness(features: &ArrayView2<'_, f64>) -> Vec<f64> {
    let n = features.nrows();
    let mut r = vec![0.0; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = euclid(&features.row(i), &features.row(j));
            r[i] += d;
            r[j] += d;
        }
    }
    r
}

/// Seeded uniform initialization: `m0` distinct indices.
pub fn init_random(
    state: &mut PoolState<'_>,
    m0: usize,
    seed: u64,
) -> Result<Vec<usize>, StrategyError> {
    let unlabeled = state.unlabeled();
    if m0 > unlabeled.len() {
        return Err(StrategyError::PoolExhausted);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let picks: Vec<usize> = index::sample(&mut rng, unlabeled.len(), m0)
        .into_iter()
        .map(|i| unlabeled[i])
        .collect();
    for &i in &picks {
        state.mark_labeled(i)?;
    }
    Ok(picks)
}

/// One greedy input-space pick: the unlabeled sample farthest (in min
/// distance) from the labeled set.
pub fn next_gsx(state: &PoolState<'_>) -> Result<usize, StrategyError> {
    let candidates = state.unlabeled();
    if candidates.is_empty() {
        return Err(StrategyError::PoolExhausted);
    }
    let dx = dx_for(state, &candidates)?;
    Ok(argmax(&candidates, &dx).expect("non-empty"))
}

/// Greedy input-space initialization: first the sample closest to the pool
/// centroid, then repeated max-min picks. Label-free and deterministic.
pub fn init_gsx(state: &mut PoolState<'_>, m0: usize) -> Result<Vec<usize>, StrategyError> {
    let unlabeled = state.unlabeled();
    if m0 < 1 || m0 > unlabeled.len() {
        return Err(StrategyError::PoolExhausted);
    }
    let features = state.features();
    let n = features.nrows();
    let d = features.ncols();
    let mut centroid = Array1::<f64>::zeros(d);
    for i in 0..n {
        centroid += &features.row(i);
    }
    centroid /= n as f64;

    let mut first = None;
    let mut best = f64::INFINITY;
    for &i in &unlabeled {
        let dist = euclid(&features.row(i), &centroid.view());
        if dist < best {
            best = dist;
            first = Some(i);
        }
    }
    let first = first.expect("non-empty pool");
    state.mark_labeled(first)?;
    let mut picks = vec![first];
    while picks.len() < m0 {
        let next = next_gsx(state)?;
        state.mark_labeled(next)?;
        picks.push(next);
    }
    Ok(picks)
}

/// Representativeness–diversity initialization: k-means with `k = m0`, one
/// representative per cluster (the member closest to its centroid).
pub fn init_rd(
    state: &mut PoolState<'_>,
    m0: usize,
    seed: u64,
) -> Result<Vec<usize>, StrategyError> {
    let features = state.features();
    let clusters = clustering::kmeans(&features, m0, seed)?;
    let mut picks = Vec::with_capacity(m0);
    for cluster_id in 0..m0 {
        picks.push(clustering::closest_to_centroid(&features, &clusters, cluster_id)?);
    }
    for &i in &picks {
        state.mark_labeled(i)?;
    }
    Ok(picks)
}

/// Query-by-committee pick: maximal committee variance.
pub fn next_qbc(state: &PoolState<'_>, committee: &Committee) -> Result<usize, StrategyError> {
    let scores = score_qbc(state, committee)?;
    if scores.indices.is_empty() {
        return Err(StrategyError::PoolExhausted);
    }
    Ok(argmax(&scores.indices, scores.variance.as_ref().expect("populated")).expect("non-empty"))
}

fn emcm_pick(
    state: &PoolState<'_>,
    model: &RidgeModel,
    committee: &Committee,
    candidates: &[usize],
) -> Result<usize, StrategyError> {
    if candidates.is_empty() {
        return Err(StrategyError::PoolExhausted);
    }
    let g = g_for(state, model, committee, candidates)?;
    Ok(argmax(candidates, &g).expect("non-empty"))
}

/// Expected-model-change pick: maximal `g`.
pub fn next_emcm(
    state: &PoolState<'_>,
    model: &RidgeModel,
    committee: &Committee,
) -> Result<usize, StrategyError> {
    emcm_pick(state, model, committee, &state.unlabeled())
}

/// Greedy input×label pick: maximal `dxy`, optionally restricted to a
/// candidate subset (used by the cluster-restricted variants).
///
/// `dx` and `dy` are always computed against the full labeled set; only the
/// candidate set shrinks.
pub fn next_igs(
    state: &PoolState<'_>,
    model: &RidgeModel,
    restrict: Option<&[usize]>,
) -> Result<usize, StrategyError> {
    let candidates: Vec<usize> = match restrict {
        Some(subset) => {
            debug_assert!(subset.iter().all(|&i| !state.is_labeled(i)));
            subset.to_vec()
        }
        None => state.unlabeled(),
    };
    if candidates.is_empty() {
        return Err(StrategyError::EmptyCandidateSet);
    }
    let dx = dx_for(state, &candidates)?;
    let dy = dy_for(state, model, &candidates)?;
    let dxy: Vec<f64> = dx.iter().zip(&dy).map(|(a, b)| a * b).collect();
    Ok(argmax(&candidates, &dxy).expect("non-empty"))
}

/// The inner criterion run inside the largest labeled-free cluster.
pub enum InnerCriterion<'a> {
    Emcm(&'a Committee),
    Igs,
}

/// Representativeness–diversity iteration: cluster the whole pool with
/// `k = M + 1`, take the largest cluster containing no labeled sample, and
/// run the inner criterion on its members. Realizes both the RD-EMCM and the
/// RD-iGS iteration.
pub fn next_rd(
    state: &PoolState<'_>,
    model: &RidgeModel,
    inner: InnerCriterion<'_>,
    seed: u64,
) -> Result<usize, StrategyError> {
    let k = state.n_labeled() + 1;
    let clusters = clustering::kmeans(&state.features(), k, seed)?;
    let cluster_id = clustering::largest_unlabeled_cluster(&clusters, state.labeled())?;
    let members = clusters.members(cluster_id);
    match inner {
        InnerCriterion::Emcm(committee) => emcm_pick(state, model, committee, &members),
        InnerCriterion::Igs => next_igs(state, model, Some(&members)),
    }
}

/// Representativeness-weighted greedy pick: maximal `dxy / R`.
pub fn next_igsr(state: &PoolState<'_>, model: &RidgeModel) -> Result<usize, StrategyError> {
    let candidates = state.unlabeled();
    if candidates.is_empty() {
        return Err(StrategyError::EmptyCandidateSet);
    }
    let dx = dx_for(state, &candidates)?;
    let dy = dy_for(state, model, &candidates)?;
    let r = state.representativeness();
    let scores: Vec<f64> = candidates
        .iter()
        .enumerate()
        .map(|(pos, &n)| dx[pos] * dy[pos] / r[n].max(1e-12))
        .collect();
    Ok(argmax(&candidates, &scores).expect("non-empty"))
}

/// Strategy identifiers, named as in the benchmark literature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyId {
    /// Random sampling baseline.
    Rs,
    /// Greedy sampling in input space only.
    Gsx,
    /// Query by committee.
    Qbc,
    /// Expected model change maximization.
    Emcm,
    /// RD initialization and cluster-restricted EMCM iterations.
    RdEmcm,
    /// GSx initialization, greedy input×label iterations.
    Igs,
    /// RD initialization and cluster-restricted iGS iterations.
    RdIgs,
    /// RD initialization, plain iGS iterations.
    Rdigs,
    /// RD initialization, representativeness-weighted iGS iterations.
    Rdigsr,
}

impl StrategyId {
    pub const ALL: [StrategyId; 9] = [
        StrategyId::Rs,
        StrategyId::Gsx,
        StrategyId::Qbc,
        StrategyId::Emcm,
        StrategyId::RdEmcm,
        StrategyId::Igs,
        StrategyId::RdIgs,
        StrategyId::Rdigs,
        StrategyId::Rdigsr,
    ];

    pub fn label(self) -> &'static str {
        match self {
            StrategyId::Rs => "RS",
            StrategyId::Gsx => "GSx",
            StrategyId::Qbc => "QBC",
            StrategyId::Emcm => "EMCM",
            StrategyId::RdEmcm => "RD-EMCM",
            StrategyId::Igs => "iGS",
            StrategyId::RdIgs => "RD-iGS",
            StrategyId::Rdigs => "RDiGS",
            StrategyId::Rdigsr => "RDiGSr",
        }
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for StrategyId {
    type Err = String;

    /// Case-insensitive, hyphen-sensitive: `RD-iGS` and `RDiGS` are distinct
    /// strategies.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_lowercase();
        StrategyId::ALL
            .iter()
            .find(|id| id.label().to_ascii_lowercase() == wanted)
            .copied()
            .ok_or_else(|| format!("unknown strategy '{s}'"))
    }
}

/// Fixed parameters of one strategy run.
#[derive(Debug, Clone, Copy)]
pub struct RunParams {
    /// Initial number of labeled samples.
    pub m0: usize,
    /// Final number of labeled samples.
    pub m_max: usize,
    /// Ridge regularization coefficient.
    pub reg: f64,
    /// Bootstrap committee size for QBC and EMCM.
    pub committee_size: usize,
    /// Run seed; all internal randomness derives from it.
    pub seed: u64,
}

/// The outcome of one run: the selection order and the model refit after the
/// initialization and after every iteration (one model per `M`).
#[derive(Debug, Clone)]
pub struct StrategyRun {
    pub id: StrategyId,
    pub selections: Vec<usize>,
    pub m_values: Vec<usize>,
    pub models: Vec<RidgeModel>,
}

const INIT_TAG: u64 = 0x494e_4954; // "INIT"
const ITER_TAG: u64 = 0x4954_4552; // "ITER"

/// Seed for the initialization step of a run.
pub fn init_seed(run_seed: u64) -> u64 {
    mix(run_seed, INIT_TAG)
}

/// Seed stream tag for random-sampling iterations.
pub fn iter_seed(run_seed: u64) -> u64 {
    mix(run_seed, ITER_TAG)
}

/// Seed for the bootstrap committee built at labeled-set size `m`.
pub fn committee_seed(run_seed: u64, m: usize) -> u64 {
    mix(run_seed, m as u64)
}

/// Seed for the k-means clustering of an RD iteration at labeled-set size `m`.
pub fn rd_kmeans_seed(run_seed: u64, m: usize) -> u64 {
    run_seed ^ (m as u64)
}

fn fit_on_labeled(state: &PoolState<'_>, reg: f64) -> Result<RidgeModel, StrategyError> {
    let x = state.labeled_features();
    let y = Array1::from(state.labeled_labels().to_vec());
    Ok(fit_ridge(&x.view(), &y.view(), reg)?)
}

/// Runs strategy `id` from an empty labeled set to `m_max` labels, refitting
/// the ridge model after initialization and after every iteration.
pub fn run_strategy(
    id: StrategyId,
    pool: &dyn PoolAccess,
    params: &RunParams,
) -> Result<StrategyRun, StrategyError> {
    let n_pool = pool.features().nrows();
    assert!(params.m0 >= 1 && params.m0 <= params.m_max);
    if params.m_max > n_pool {
        return Err(StrategyError::PoolExhausted);
    }

    let mut state = PoolState::new(pool);
    match id {
        StrategyId::Rs | StrategyId::Qbc | StrategyId::Emcm => {
            init_random(&mut state, params.m0, init_seed(params.seed))?;
        }
        StrategyId::Gsx | StrategyId::Igs => {
            init_gsx(&mut state, params.m0)?;
        }
        StrategyId::RdEmcm | StrategyId::RdIgs | StrategyId::Rdigs | StrategyId::Rdigsr => {
            init_rd(&mut state, params.m0, init_seed(params.seed))?;
        }
    }

    let mut model = fit_on_labeled(&state, params.reg)?;
    let mut models = vec![model.clone()];
    let mut rs_rng = ChaCha20Rng::seed_from_u64(iter_seed(params.seed));

    for m in params.m0..params.m_max {
        let pick = match id {
            StrategyId::Rs => {
                let unlabeled = state.unlabeled();
                if unlabeled.is_empty() {
                    return Err(StrategyError::PoolExhausted);
                }
                unlabeled[rs_rng.gen_range(0..unlabeled.len())]
            }
            StrategyId::Gsx => next_gsx(&state)?,
            StrategyId::Qbc => {
                let committee = build_committee(&state, params, m)?;
                next_qbc(&state, &committee)?
            }
            StrategyId::Emcm => {
                let committee = build_committee(&state, params, m)?;
                next_emcm(&state, &model, &committee)?
            }
            StrategyId::RdEmcm => {
                let committee = build_committee(&state, params, m)?;
                next_rd(
                    &state,
                    &model,
                    InnerCriterion::Emcm(&committee),
                    rd_kmeans_seed(params.seed, m),
                )?
            }
            StrategyId::Igs | StrategyId::Rdigs => next_igs(&state, &model, None)?,
            StrategyId::RdIgs => {
                next_rd(&state, &model, InnerCriterion::Igs, rd_kmeans_seed(params.seed, m))?
            }
            StrategyId::Rdigsr => next_igsr(&state, &model)?,
        };
        state.mark_labeled(pick)?;
        model = fit_on_labeled(&state, params.reg)?;
        models.push(model.clone());
    }

    Ok(StrategyRun {
        id,
        selections: state.labeled().to_vec(),
        m_values: (params.m0..=params.m_max).collect(),
        models,
    })
}

fn build_committee(
    state: &PoolState<'_>,
    params: &RunParams,
    m: usize,
) -> Result<Committee, StrategyError> {
    let x = state.labeled_features();
    let y = Array1::from(state.labeled_labels().to_vec());
    Ok(bootstrap_committee(
        &x.view(),
        &y.view(),
        params.committee_size,
        params.reg,
        committee_seed(params.seed, m),
    )?)
}
