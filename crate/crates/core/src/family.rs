//! Closed-form constrained covariance estimators and parameter counts.
//!
//! Each family fixes which of volume, shape and orientation are shared
//! across classes in `Sigma_g = lambda_g D_g A_g D_g'`. Only the six members
//! whose maximum-likelihood estimates have a closed form are provided:
//!
//! | code | covariance                        |
//! |------|-----------------------------------|
//! | EII  | `lambda I`, shared                |
//! | VII  | `lambda_g I`                      |
//! | EEI  | diagonal, shared                  |
//! | VVI  | diagonal, per class               |
//! | EEE  | full, shared                      |
//! | VVV  | full, per class                   |

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use ndarray::Array2;

use crate::fit::{fit_redda, kept_count, FitConfig};
use crate::gaussian::{cholesky_spd, cholesky_with_ridge, ClassStats, SpdFactor};
use crate::stepwise::TbicScore;
use crate::{par, Error, Labeled, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CovarianceFamily {
    EII,
    VII,
    EEI,
    VVI,
    EEE,
    VVV,
}

impl CovarianceFamily {
    /// All supported families in their fixed tie-break order.
    pub const ALL: [CovarianceFamily; 6] = [
        CovarianceFamily::EII,
        CovarianceFamily::VII,
        CovarianceFamily::EEI,
        CovarianceFamily::VVI,
        CovarianceFamily::EEE,
        CovarianceFamily::VVV,
    ];

    pub fn code(self) -> &'static str {
        match self {
            CovarianceFamily::EII => "EII",
            CovarianceFamily::VII => "VII",
            CovarianceFamily::EEI => "EEI",
            CovarianceFamily::VVI => "VVI",
            CovarianceFamily::EEE => "EEE",
            CovarianceFamily::VVV => "VVV",
        }
    }

    /// Whether one covariance is shared by all classes.
    pub fn is_shared(self) -> bool {
        matches!(
            self,
            CovarianceFamily::EII | CovarianceFamily::EEI | CovarianceFamily::EEE
        )
    }

    pub fn is_diagonal(self) -> bool {
        !matches!(self, CovarianceFamily::EEE | CovarianceFamily::VVV)
    }

    pub fn is_spherical(self) -> bool {
        matches!(self, CovarianceFamily::EII | CovarianceFamily::VII)
    }

    /// Number of free covariance parameters for `g` classes in `p` dimensions.
    pub fn covariance_params(self, g: usize, p: usize) -> usize {
        match self {
            CovarianceFamily::EII => 1,
            CovarianceFamily::VII => g,
            CovarianceFamily::EEI => p,
            CovarianceFamily::VVI => g * p,
            CovarianceFamily::EEE => p * (p + 1) / 2,
            CovarianceFamily::VVV => g * p * (p + 1) / 2,
        }
    }
}

impl fmt::Display for CovarianceFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for CovarianceFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CovarianceFamily::ALL
            .iter()
            .copied()
            .find(|f| f.code() == s)
            .ok_or_else(|| Error::InvalidInput(alloc::format!("unknown covariance family {s:?}")))
    }
}

/// Total free parameters of a `g`-class, `p`-variable Gaussian classifier:
/// `g - 1` priors, `g * p` means and the family's covariance parameters.
pub fn parameter_count(family: CovarianceFamily, g: usize, p: usize) -> usize {
    (g - 1) + g * p + family.covariance_params(g, p)
}

/// Fitted priors, means and covariance factors of a Gaussian classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianClassParams {
    tau: Vec<f64>,
    means: Array2<f64>,
    sigma: Vec<SpdFactor>,
    family: CovarianceFamily,
}

impl GaussianClassParams {
    /// Builds parameters from stored covariance matrices, validating the
    /// simplex weights, dimensions and the family constraint.
    pub fn from_parts(
        tau: Vec<f64>,
        means: Array2<f64>,
        covariances: &[Array2<f64>],
        family: CovarianceFamily,
    ) -> Result<Self> {
        let g = tau.len();
        let p = means.ncols();
        if g == 0 || means.nrows() != g || covariances.len() != g {
            return Err(Error::DimensionMismatch {
                expected: g,
                found: covariances.len().min(means.nrows()),
            });
        }
        if tau.iter().any(|&t| !(t > 0.0)) || (tau.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(
                "class priors must be positive and sum to one".into(),
            ));
        }
        let mut sigma = Vec::with_capacity(g);
        for cov in covariances {
            if cov.dim() != (p, p) {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: cov.nrows(),
                });
            }
            check_family_shape(cov, family)?;
            sigma.push(cholesky_spd(cov.view())?);
        }
        if family.is_shared() && sigma.iter().any(|s| s.matrix() != sigma[0].matrix()) {
            return Err(Error::InvalidInput(alloc::format!(
                "{family} requires one covariance shared by all classes"
            )));
        }
        Ok(GaussianClassParams {
            tau,
            means,
            sigma,
            family,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.tau.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    pub fn sigma(&self) -> &[SpdFactor] {
        &self.sigma
    }

    pub fn family(&self) -> CovarianceFamily {
        self.family
    }

    pub fn covariances(&self) -> Vec<Array2<f64>> {
        self.sigma.iter().map(|s| s.matrix().clone()).collect()
    }

    pub fn parameter_count(&self) -> usize {
        parameter_count(self.family, self.n_classes(), self.dim())
    }

    /// `log tau_g + log phi(x; mu_g, Sigma_g)` for every class.
    pub(crate) fn class_log_terms(&self, x: &[f64], work: &mut [f64], out: &mut [f64]) {
        for (g, o) in out.iter_mut().enumerate() {
            let mu = self.means.row(g);
            let mu = mu.as_slice().expect("means are contiguous");
            *o = crate::math::ln(self.tau[g]) + self.sigma[g].log_density_raw(x, mu, work);
        }
    }

    pub(crate) fn class_log_term(&self, g: usize, x: &[f64], work: &mut [f64]) -> f64 {
        let mu = self.means.row(g);
        let mu = mu.as_slice().expect("means are contiguous");
        crate::math::ln(self.tau[g]) + self.sigma[g].log_density_raw(x, mu, work)
    }
}

fn check_family_shape(cov: &Array2<f64>, family: CovarianceFamily) -> Result<()> {
    let p = cov.nrows();
    if family.is_diagonal() {
        for i in 0..p {
            for j in 0..p {
                if i != j && cov[[i, j]] != 0.0 {
                    return Err(Error::InvalidInput(alloc::format!(
                        "{family} requires diagonal covariances"
                    )));
                }
            }
        }
    }
    if family.is_spherical() && (1..p).any(|i| cov[[i, i]] != cov[[0, 0]]) {
        return Err(Error::InvalidInput(alloc::format!(
            "{family} requires spherical covariances"
        )));
    }
    Ok(())
}

/// Maximum-likelihood covariances under `family` from kept-row statistics,
/// factored (with the single ridge fallback).
pub fn estimate_covariances(
    stats: &ClassStats,
    family: CovarianceFamily,
    n_total_kept: usize,
) -> Result<Vec<SpdFactor>> {
    if n_total_kept != stats.n_kept() {
        return Err(Error::DimensionMismatch {
            expected: stats.n_kept(),
            found: n_total_kept,
        });
    }
    let g = stats.n_classes();
    let p = stats.dim();
    let n_star = n_total_kept as f64;
    let trace = |m: &Array2<f64>| (0..p).map(|i| m[[i, i]]).sum::<f64>();
    let spherical = |s: f64| Array2::from_diag_elem(p, s);
    let diagonal = |m: &Array2<f64>, n: f64| Array2::from_diag(&m.diag().mapv(|v| v / n));

    if family.is_shared() {
        let cov = match family {
            CovarianceFamily::EII => spherical(trace(&stats.pooled) / (n_star * p as f64)),
            CovarianceFamily::EEI => diagonal(&stats.pooled, n_star),
            _ => stats.pooled.mapv(|v| v / n_star),
        };
        let factor = cholesky_with_ridge(cov.view())?;
        return Ok(alloc::vec![factor; g]);
    }
    stats
        .scatters
        .iter()
        .zip(&stats.counts)
        .map(|(w, &n)| {
            let n = n as f64;
            let cov = match family {
                CovarianceFamily::VII => spherical(trace(w) / (n * p as f64)),
                CovarianceFamily::VVI => diagonal(w, n),
                _ => w.mapv(|v| v / n),
            };
            cholesky_with_ridge(cov.view())
        })
        .collect()
}

/// Priors `n_g / N*`, class means and family-constrained covariances.
pub fn estimate_params(
    stats: &ClassStats,
    family: CovarianceFamily,
) -> Result<GaussianClassParams> {
    let n_star = stats.n_kept();
    let sigma = estimate_covariances(stats, family, n_star)?;
    let tau = stats
        .counts
        .iter()
        .map(|&c| c as f64 / n_star as f64)
        .collect();
    Ok(GaussianClassParams {
        tau,
        means: stats.means.clone(),
        sigma,
        family,
    })
}

/// Outcome of comparing candidate families by trimmed BIC.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilySelection {
    pub family: CovarianceFamily,
    /// Every candidate with its score, or the reason it was skipped.
    pub scores: Vec<(CovarianceFamily, core::result::Result<TbicScore, String>)>,
}

/// Fits every candidate family and returns the one with the highest
/// trimmed BIC. Ties go to fewer parameters, then to the fixed code order.
pub fn select_family(
    problem: &Labeled<'_>,
    gamma: f64,
    candidates: &[CovarianceFamily],
    config: &FitConfig,
) -> Result<FamilySelection> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidate families".into()));
    }
    let g = problem.n_classes;
    let p = problem.n_vars();
    let n_star = kept_count(problem.n_rows(), gamma);
    let scores: Vec<_> = par::map_indexed(candidates.len(), |i| {
        let family = candidates[i];
        let score = fit_redda(problem, family, gamma, config)
            .map(|fit| TbicScore::new(fit.trimmed_loglik, parameter_count(family, g, p), n_star));
        (family, score.map_err(|e| e.to_string()))
    });
    let best = scores
        .iter()
        .filter_map(|(f, s)| s.as_ref().ok().map(|s| (*f, s)))
        .max_by(|(fa, a), (fb, b)| {
            a.value
                .total_cmp(&b.value)
                .then(b.param_count.cmp(&a.param_count))
                .then(fb.cmp(fa))
        })
        .map(|(f, _)| f);
    match best {
        Some(family) => {
            for (f, s) in &scores {
                if let Err(reason) = s {
                    log::warn!("family {f} skipped: {reason}");
                }
            }
            Ok(FamilySelection { family, scores })
        }
        None => Err(Error::AllCandidatesFailed(
            scores
                .iter()
                .filter_map(|(f, s)| s.as_ref().err().map(|e| alloc::format!("{f}: {e}")))
                .collect::<Vec<_>>()
                .join("; "),
        )),
    }
}
