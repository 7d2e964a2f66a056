//! Trimmed maximum-likelihood fitting of the Gaussian classifier, MAP
//! prediction and marginal-density outlier scores.

use alloc::vec;
use alloc::vec::Vec;

use ndarray::{Array2, ArrayView2, CowArray, Ix2};

use crate::family::{estimate_params, CovarianceFamily, GaussianClassParams};
use crate::gaussian::{class_sufficient_stats, log_sum_exp, ClassStats};
use crate::math::exp;
use crate::trimming::{concentrate, TrimModel};
use crate::{Error, Labeled, Result};

/// Tuning for the concentration algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub max_iter: usize,
    pub n_restarts: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iter: 100,
            n_restarts: 10,
            tol: 1e-8,
            seed: 0,
        }
    }
}

/// Trimmed log-likelihood after each estimation step of one restart.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartTrace {
    pub loglik: Vec<f64>,
    /// The restart hit a collapsed class or a singular fit and was dropped.
    pub discarded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrimmedFit {
    pub params: GaussianClassParams,
    pub kept: Vec<bool>,
    pub gamma: f64,
    pub trimmed_loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_star: usize,
    pub restart_traces: Vec<RestartTrace>,
}

/// Number of rows kept at trimming level `gamma`: `ceil(N (1 - gamma))`,
/// i.e. `N - floor(N gamma)`. The floor is taken with a small guard so that
/// `N gamma` landing a rounding error below an integer still counts as it.
pub fn kept_count(n: usize, gamma: f64) -> usize {
    let trimmed = libm::floor(n as f64 * gamma + 1e-9) as usize;
    n - trimmed.min(n)
}

/// `log tau_g + log phi(x_n; mu_g, Sigma_g)` for each row's own class.
pub fn per_obs_contribution(
    params: &GaussianClassParams,
    data: ArrayView2<f64>,
    labels: &[usize],
) -> Result<Vec<f64>> {
    if data.ncols() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            found: data.ncols(),
        });
    }
    if labels.len() != data.nrows() {
        return Err(Error::DimensionMismatch {
            expected: data.nrows(),
            found: labels.len(),
        });
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= params.n_classes()) {
        return Err(Error::InvalidInput(alloc::format!(
            "label {l} out of range"
        )));
    }
    let data = data.as_standard_layout();
    let mut out = vec![0.0; labels.len()];
    contributions_into(params, &data, labels, &mut out);
    Ok(out)
}

pub(crate) fn contributions_into(
    params: &GaussianClassParams,
    data: &CowArray<f64, Ix2>,
    labels: &[usize],
    out: &mut [f64],
) {
    let p = data.ncols();
    let flat = data.as_slice().expect("standard layout");
    let mut work = vec![0.0; p];
    for (n, (o, &g)) in out.iter_mut().zip(labels).enumerate() {
        *o = params.class_log_term(g, &flat[n * p..(n + 1) * p], &mut work);
    }
}

pub(crate) struct ReddaModel<'a> {
    pub data: CowArray<'a, f64, Ix2>,
    pub labels: &'a [usize],
    pub n_classes: usize,
    pub family: CovarianceFamily,
    /// Statistics of all rows, reused by the warm start.
    pub warm: Option<ClassStats>,
}

impl TrimModel for ReddaModel<'_> {
    type Params = GaussianClassParams;

    fn n_rows(&self) -> usize {
        self.labels.len()
    }

    fn estimate(&self, kept: &[bool], all_rows: bool) -> Result<GaussianClassParams> {
        match (&self.warm, all_rows) {
            (Some(stats), true) => estimate_params(stats, self.family),
            _ => {
                let stats =
                    class_sufficient_stats(self.data.view(), self.labels, self.n_classes, kept)?;
                estimate_params(&stats, self.family)
            }
        }
    }

    fn contributions(&self, params: &GaussianClassParams, out: &mut [f64]) {
        contributions_into(params, &self.data, self.labels, out);
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..0.5).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::InvalidInput(alloc::format!(
            "trimming level {gamma} outside [0, 0.5)"
        )))
    }
}

/// Fits the classifier by trimmed maximum likelihood.
///
/// Restart 0 starts from all rows; the others from stratified random
/// subsets of size `N*`. Each restart alternates closed-form estimation on
/// the kept rows with keeping the `N*` rows of largest contribution until
/// the kept set stops changing. With `gamma = 0` this is the one-step
/// supervised MLE.
pub fn fit_redda(
    problem: &Labeled<'_>,
    family: CovarianceFamily,
    gamma: f64,
    config: &FitConfig,
) -> Result<TrimmedFit> {
    fit_redda_warm(problem, family, gamma, config, None)
}

pub(crate) fn fit_redda_warm(
    problem: &Labeled<'_>,
    family: CovarianceFamily,
    gamma: f64,
    config: &FitConfig,
    warm: Option<ClassStats>,
) -> Result<TrimmedFit> {
    check_gamma(gamma)?;
    let n = problem.n_rows();
    let p = problem.n_vars();
    let g = problem.n_classes;
    let n_star = kept_count(n, gamma);
    if p == 0 {
        return Err(Error::Infeasible("no variables to fit".into()));
    }
    if n_star < g * (p + 1) {
        return Err(Error::Infeasible(alloc::format!(
            "{n_star} kept rows cannot support {g} classes in {p} dimensions"
        )));
    }
    let model = ReddaModel {
        data: problem.data.as_standard_layout(),
        labels: problem.labels,
        n_classes: g,
        family,
        warm,
    };
    let out = concentrate(&model, problem.labels, g, n_star, config)?;
    Ok(TrimmedFit {
        params: out.params,
        kept: out.kept,
        gamma,
        trimmed_loglik: out.loglik,
        iterations: out.iterations,
        converged: out.converged,
        n_star,
        restart_traces: out.traces,
    })
}

/// MAP labels with their posterior class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    /// `M x G`, rows sum to one.
    pub posterior: Array2<f64>,
}

/// Assigns each test row to the class of highest posterior probability.
pub fn predict_map(params: &GaussianClassParams, test: ArrayView2<f64>) -> Result<Prediction> {
    if test.ncols() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            found: test.ncols(),
        });
    }
    let g = params.n_classes();
    let m = test.nrows();
    let test = test.as_standard_layout();
    let flat = test.as_slice().expect("standard layout");
    let p = params.dim();
    let mut work = vec![0.0; p];
    let mut terms = vec![0.0; g];
    let mut labels = Vec::with_capacity(m);
    let mut posterior = Array2::<f64>::zeros((m, g));
    for i in 0..m {
        params.class_log_terms(&flat[i * p..(i + 1) * p], &mut work, &mut terms);
        let mut best = 0;
        for k in 1..g {
            if terms[k] > terms[best] {
                best = k;
            }
        }
        labels.push(best);
        let norm = log_sum_exp(&terms);
        for k in 0..g {
            posterior[[i, k]] = exp(terms[k] - norm);
        }
    }
    Ok(Prediction { labels, posterior })
}

/// Per-row mixture log-density over all classes with ascending ranks.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierReport {
    pub log_density: Vec<f64>,
    /// 1-based; rank 1 is the least plausible row.
    pub rank: Vec<usize>,
}

impl OutlierReport {
    /// Row indices ordered from least to most plausible.
    pub fn ascending(&self) -> Vec<usize> {
        let mut order = vec![0; self.rank.len()];
        for (row, &r) in self.rank.iter().enumerate() {
            order[r - 1] = row;
        }
        order
    }
}

/// Marginal log-density `log sum_g tau_g phi(y_F; mu_g, Sigma_g)` of each
/// test row on the selected variables.
///
/// `test` holds either exactly the selected columns or the full spectrum,
/// in which case it is projected onto `selected`.
pub fn marginal_log_density(
    params: &GaussianClassParams,
    test: ArrayView2<f64>,
    selected: &[usize],
) -> Result<OutlierReport> {
    if selected.len() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            found: selected.len(),
        });
    }
    let projected;
    let view = if test.ncols() == selected.len() {
        test
    } else {
        if let Some(&bad) = selected.iter().find(|&&j| j >= test.ncols()) {
            return Err(Error::DimensionMismatch {
                expected: bad + 1,
                found: test.ncols(),
            });
        }
        projected = test.select(ndarray::Axis(1), selected);
        projected.view()
    };
    let view = view.as_standard_layout();
    let p = params.dim();
    let flat = view.as_slice().expect("standard layout");
    let mut work = vec![0.0; p];
    let mut terms = vec![0.0; params.n_classes()];
    let log_density: Vec<f64> = (0..view.nrows())
        .map(|i| {
            params.class_log_terms(&flat[i * p..(i + 1) * p], &mut work, &mut terms);
            log_sum_exp(&terms)
        })
        .collect();
    let mut order: Vec<usize> = (0..log_density.len()).collect();
    order.sort_by(|&a, &b| log_density[a].total_cmp(&log_density[b]).then(a.cmp(&b)));
    let mut rank = vec![0; order.len()];
    for (r, &row) in order.iter().enumerate() {
        rank[row] = r + 1;
    }
    Ok(OutlierReport { log_density, rank })
}
