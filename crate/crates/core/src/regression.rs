//! Gaussian linear regression of one variable on a subset of others,
//! estimated on a kept mask, plus greedy BIC subset search.

use alloc::vec;
use alloc::vec::Vec;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::gaussian::cholesky_spd;
use crate::math::{ln, LN_2PI};
use crate::{Error, Result};

/// Residual variance never drops below this fraction of the response
/// variance on the kept rows.
pub const VARIANCE_FLOOR: f64 = 1e-12;
/// Ridge added to the normal equations, relative to their mean diagonal.
pub const NORMAL_RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    /// Columns of the candidate matrix used as predictors.
    pub subset: Vec<usize>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub variance: f64,
    pub loglik_on_kept: f64,
}

impl RegressionFit {
    pub fn param_count(&self) -> usize {
        regression_param_count(self.subset.len())
    }

    /// `2 loglik - (|r| + 2) log N*`.
    pub fn bic(&self, n_star: usize) -> f64 {
        2.0 * self.loglik_on_kept - self.param_count() as f64 * ln(n_star as f64)
    }
}

/// Intercept, one coefficient per predictor and the variance.
pub fn regression_param_count(subset_size: usize) -> usize {
    subset_size + 2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsetConfig {
    /// Defaults to `min(candidates, 20)`.
    pub max_subset: Option<usize>,
    pub bic_tol: f64,
}

impl Default for SubsetConfig {
    fn default() -> Self {
        SubsetConfig {
            max_subset: None,
            bic_tol: 0.0,
        }
    }
}

/// Kept-row means and centered cross-products of `[candidates | y]`.
struct KeptMoments {
    n: usize,
    means: Vec<f64>,
    cross: Array2<f64>,
}

impl KeptMoments {
    fn new(y: ArrayView1<f64>, x: ArrayView2<f64>, kept: &[bool]) -> Self {
        let k = x.ncols();
        let mut means = vec![0.0; k + 1];
        let mut n = 0usize;
        for (i, &keep) in kept.iter().enumerate() {
            if keep {
                n += 1;
                for j in 0..k {
                    means[j] += x[[i, j]];
                }
                means[k] += y[i];
            }
        }
        for m in means.iter_mut() {
            *m /= n.max(1) as f64;
        }
        let mut cross = Array2::<f64>::zeros((k + 1, k + 1));
        let mut centered = vec![0.0; k + 1];
        for (i, &keep) in kept.iter().enumerate() {
            if !keep {
                continue;
            }
            for j in 0..k {
                centered[j] = x[[i, j]] - means[j];
            }
            centered[k] = y[i] - means[k];
            for a in 0..=k {
                for b in a..=k {
                    cross[[a, b]] += centered[a] * centered[b];
                }
            }
        }
        for a in 0..=k {
            for b in 0..a {
                cross[[a, b]] = cross[[b, a]];
            }
        }
        KeptMoments { n, means, cross }
    }

    fn response(&self) -> usize {
        self.means.len() - 1
    }
}

fn solve_normal(moments: &KeptMoments, subset: &[usize]) -> Result<Vec<f64>> {
    let k = subset.len();
    let yi = moments.response();
    let mut sxx = Array2::<f64>::zeros((k, k));
    for (a, &i) in subset.iter().enumerate() {
        for (b, &j) in subset.iter().enumerate() {
            sxx[[a, b]] = moments.cross[[i, j]];
        }
    }
    let factor = match cholesky_spd(sxx.view()) {
        Ok(f) => f,
        Err(Error::NotPositiveDefinite { .. }) => {
            let trace: f64 = (0..k).map(|i| sxx[[i, i]]).sum();
            let ridge = NORMAL_RIDGE * trace / k as f64;
            if !(ridge > 0.0) {
                return Err(Error::RankDeficient);
            }
            for i in 0..k {
                sxx[[i, i]] += ridge;
            }
            cholesky_spd(sxx.view()).map_err(|_| Error::RankDeficient)?
        }
        Err(e) => return Err(e),
    };
    let l = factor.lower();
    let mut z: Vec<f64> = subset.iter().map(|&i| moments.cross[[i, yi]]).collect();
    for i in 0..k {
        let mut acc = z[i];
        for j in 0..i {
            acc -= l[[i, j]] * z[j];
        }
        z[i] = acc / l[[i, i]];
    }
    for i in (0..k).rev() {
        let mut acc = z[i];
        for j in i + 1..k {
            acc -= l[[j, i]] * z[j];
        }
        z[i] = acc / l[[i, i]];
    }
    Ok(z)
}

fn fit_subset(
    y: ArrayView1<f64>,
    x: ArrayView2<f64>,
    kept: &[bool],
    moments: &KeptMoments,
    subset: &[usize],
) -> Result<RegressionFit> {
    let n = moments.n;
    let k = subset.len();
    if n <= k + 1 {
        return Err(Error::Infeasible(alloc::format!(
            "{n} kept rows cannot support {k} predictors"
        )));
    }
    let yi = moments.response();
    let syy = moments.cross[[yi, yi]];
    if !(syy > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let beta = if k == 0 {
        Vec::new()
    } else {
        solve_normal(moments, subset)?
    };
    let y_mean = moments.means[yi];
    let mut rss = 0.0;
    for (i, &keep) in kept.iter().enumerate() {
        if keep {
            let mut r = y[i] - y_mean;
            for (b, &j) in beta.iter().zip(subset) {
                r -= b * (x[[i, j]] - moments.means[j]);
            }
            rss += r * r;
        }
    }
    let nf = n as f64;
    let variance = (rss / nf).max(VARIANCE_FLOOR * syy / nf);
    let loglik_on_kept = -0.5 * nf * (LN_2PI + ln(variance)) - 0.5 * rss / variance;
    let intercept = y_mean
        - beta
            .iter()
            .zip(subset)
            .map(|(b, &j)| b * moments.means[j])
            .sum::<f64>();
    Ok(RegressionFit {
        subset: subset.to_vec(),
        intercept,
        coefficients: beta,
        variance,
        loglik_on_kept,
    })
}

fn check_shapes(y: ArrayView1<f64>, x: ArrayView2<f64>, kept: &[bool]) -> Result<()> {
    if x.nrows() != y.len() || kept.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: if x.nrows() != y.len() {
                x.nrows()
            } else {
                kept.len()
            },
        });
    }
    Ok(())
}

/// Least squares of `y` on every column of `x` over the kept rows, with the
/// maximum-likelihood variance `RSS / N*`.
pub fn fit_linear_gaussian(
    y: ArrayView1<f64>,
    x: ArrayView2<f64>,
    kept: &[bool],
) -> Result<RegressionFit> {
    check_shapes(y, x, kept)?;
    let moments = KeptMoments::new(y, x, kept);
    let all: Vec<usize> = (0..x.ncols()).collect();
    fit_subset(y, x, kept, &moments, &all)
}

/// Per-row log-density of `y` under the fitted regression. `x` is the same
/// candidate matrix the fit's subset indexes into.
pub fn regression_log_density(
    fit: &RegressionFit,
    y: ArrayView1<f64>,
    x: ArrayView2<f64>,
) -> Result<Vec<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: x.nrows(),
        });
    }
    if let Some(&j) = fit.subset.iter().find(|&&j| j >= x.ncols()) {
        return Err(Error::DimensionMismatch {
            expected: j + 1,
            found: x.ncols(),
        });
    }
    let mut out = vec![0.0; y.len()];
    regression_log_density_into(fit, y, x, &mut out);
    Ok(out)
}

pub(crate) fn regression_log_density_into(
    fit: &RegressionFit,
    y: ArrayView1<f64>,
    x: ArrayView2<f64>,
    out: &mut [f64],
) {
    let norm = -0.5 * (LN_2PI + ln(fit.variance));
    let inv = 0.5 / fit.variance;
    for (i, o) in out.iter_mut().enumerate() {
        let mut mean = fit.intercept;
        for (b, &j) in fit.coefficients.iter().zip(&fit.subset) {
            mean += b * x[[i, j]];
        }
        let r = y[i] - mean;
        *o = norm - r * r * inv;
    }
}

/// Greedy forward selection of predictors by regression BIC on the kept
/// rows, followed by one backward pass. Candidates whose fit fails are
/// skipped.
pub fn select_predictor_subset(
    y: ArrayView1<f64>,
    candidates: ArrayView2<f64>,
    kept: &[bool],
    config: &SubsetConfig,
) -> Result<RegressionFit> {
    check_shapes(y, candidates, kept)?;
    let moments = KeptMoments::new(y, candidates, kept);
    let n_star = moments.n;
    let n_cand = candidates.ncols();
    let cap = config.max_subset.unwrap_or(20).min(n_cand);
    let fit = |subset: &[usize]| fit_subset(y, candidates, kept, &moments, subset);

    let mut current = fit(&[])?;
    let mut current_bic = current.bic(n_star);
    let mut in_subset = vec![false; n_cand];
    while current.subset.len() < cap {
        let mut best: Option<(f64, RegressionFit)> = None;
        for (j, _) in in_subset.iter().enumerate().filter(|(_, &used)| !used) {
            let mut trial = current.subset.clone();
            trial.push(j);
            if let Ok(f) = fit(&trial) {
                let bic = f.bic(n_star);
                if best.as_ref().is_none_or(|(b, _)| bic > *b) {
                    best = Some((bic, f));
                }
            }
        }
        match best {
            Some((bic, f)) if bic > current_bic + config.bic_tol => {
                in_subset[*f.subset.last().expect("nonempty")] = true;
                current = f;
                current_bic = bic;
            }
            _ => break,
        }
    }
    for j in current.subset.clone() {
        let trial: Vec<usize> = current.subset.iter().copied().filter(|&v| v != j).collect();
        if let Ok(f) = fit(&trial) {
            let bic = f.bic(n_star);
            if bic > current_bic {
                current = f;
                current_bic = bic;
            }
        }
    }
    Ok(current)
}
