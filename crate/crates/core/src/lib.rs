//! Robust model-based discriminant analysis with stepwise variable selection.
//!
//! The crate fits Gaussian class models by trimmed maximum likelihood (a
//! fixed fraction of the least plausible labelled rows is excluded from
//! estimation) under six closed-form covariance constraints, and wraps that
//! fit in a greedy add/remove search that scores each move with a trimmed
//! BIC comparison between a "grouping" and a "no grouping" explanation of
//! the candidate variable.
//!
//! Everything here is pure computation over borrowed data. With default
//! features off the crate is `no_std` and only needs `alloc`; the `parallel`
//! feature fans candidate sweeps and restarts out over rayon.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod family;
pub mod fit;
pub mod gaussian;
pub mod regression;
pub mod stepwise;

mod math;
mod par;
mod trimming;

pub use error::{Error, Result};
pub use family::{
    estimate_covariances, estimate_params, parameter_count, select_family, CovarianceFamily,
    FamilySelection, GaussianClassParams,
};
pub use fit::{
    fit_redda, kept_count, marginal_log_density, per_obs_contribution, predict_map, FitConfig,
    OutlierReport, Prediction, RestartTrace, TrimmedFit,
};
pub use gaussian::{
    cholesky_spd, cholesky_with_ridge, class_sufficient_stats, log_mvn_density, log_sum_exp,
    ClassStats, SpdFactor,
};
pub use regression::{
    fit_linear_gaussian, regression_log_density, regression_param_count, select_predictor_subset,
    RegressionFit, SubsetConfig,
};
pub use stepwise::{
    evaluate_candidate, run_stepwise, run_stepwise_with, screen_family, sweep, tbic_grouping,
    tbic_no_grouping, Direction, SelectionConfig, SelectionState, StepRecord, SweepOutcome,
    TbicScore,
};

/// A labelled training set: an `N x P` matrix plus 0-based class indices.
#[derive(Debug, Clone, Copy)]
pub struct Labeled<'a> {
    pub data: ndarray::ArrayView2<'a, f64>,
    pub labels: &'a [usize],
    pub n_classes: usize,
}

impl<'a> Labeled<'a> {
    pub fn new(
        data: ndarray::ArrayView2<'a, f64>,
        labels: &'a [usize],
        n_classes: usize,
    ) -> Result<Self> {
        if labels.len() != data.nrows() {
            return Err(Error::DimensionMismatch {
                expected: data.nrows(),
                found: labels.len(),
            });
        }
        if n_classes == 0 {
            return Err(Error::InvalidInput("at least one class is required".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidInput(alloc::format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(Labeled {
            data,
            labels,
            n_classes,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.data.ncols()
    }
}
