//! Pool-based sequential active learning for regression (ALR).
//!
//! This crate implements nine pool-based query strategies — random sampling,
//! greedy input-space sampling (GSx), query-by-committee (QBC), expected model
//! change maximization (EMCM), their representativeness–diversity variants
//! (RD-EMCM, RD-iGS), improved greedy sampling (iGS), and the combined
//! RDiGS / RDiGSr schemes — together with everything needed to benchmark them:
//! CSV dataset ingestion, one-hot/PCA/z-score preprocessing, closed-form ridge
//! regression, k-means clustering, RMSE/CC/AUC metrics with Welch t-tests, and
//! a seeded, restartable experiment harness.
//!
//! The high-level entry point is [`harness::run_all`]; the individual building
//! blocks live in their own modules and are usable on their own.

pub mod clustering;
pub mod dataio;
pub mod harness;
pub mod metrics;
pub mod preprocess;
pub mod regression;
pub mod seeding;
pub mod strategies;
pub mod synth;
