//! Multivariate Gaussian primitives: Cholesky factors, log-densities,
//! log-sum-exp and per-class sufficient statistics.

use alloc::vec;
use alloc::vec::Vec;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::math::{exp, ln, ln_1p, sqrt, LN_2PI};
use crate::{Error, Result};

/// Relative symmetry tolerance accepted by [`cholesky_spd`].
pub const SYMMETRY_TOL: f64 = 1e-9;
/// A pivot at or below this fraction of its own diagonal entry is treated
/// as a numerically singular direction.
pub const PIVOT_FLOOR: f64 = 1e-12;
/// Scale of the ridge `eps * trace / p` added on a failed factorization.
pub const RIDGE_EPS: f64 = 1e-8;

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdFactor {
    matrix: Array2<f64>,
    lower: Array2<f64>,
    log_det: f64,
}

impl SpdFactor {
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &Array2<f64> {
        &self.lower
    }

    /// The (symmetrized, possibly ridged) matrix that was factored.
    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Squared Mahalanobis distance of `x` from `mu`.
    pub fn mahalanobis_sq(&self, x: ArrayView1<f64>, mu: ArrayView1<f64>) -> Result<f64> {
        let p = self.dim();
        check_len(p, x.len())?;
        check_len(p, mu.len())?;
        let mut work: Vec<f64> = x.iter().zip(mu.iter()).map(|(a, b)| a - b).collect();
        Ok(self.solve_sq_in_place(&mut work))
    }

    /// Forward-solves `L z = d` in place and returns `|z|^2`.
    pub(crate) fn solve_sq_in_place(&self, d: &mut [f64]) -> f64 {
        let p = d.len();
        let l = self.lower.as_slice().expect("factor is contiguous");
        let mut total = 0.0;
        for i in 0..p {
            let row = &l[i * p..i * p + i];
            let mut acc = d[i];
            for (lij, zj) in row.iter().zip(d[..i].iter()) {
                acc -= lij * zj;
            }
            let z = acc / l[i * p + i];
            d[i] = z;
            total += z * z;
        }
        total
    }

    /// `log phi(x; mu, Sigma)` without dimension checks; `work` is scratch of
    /// length `p`.
    #[inline]
    pub(crate) fn log_density_raw(&self, x: &[f64], mu: &[f64], work: &mut [f64]) -> f64 {
        for ((w, a), b) in work.iter_mut().zip(x).zip(mu) {
            *w = a - b;
        }
        let d2 = self.solve_sq_in_place(work);
        -0.5 * (self.dim() as f64 * LN_2PI + self.log_det + d2)
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Factors a symmetric positive definite matrix as `L L'`.
///
/// The input is symmetrized by averaging first. Fails with
/// [`Error::NotPositiveDefinite`] when a pivot falls to the floor.
pub fn cholesky_spd(matrix: ArrayView2<f64>) -> Result<SpdFactor> {
    let p = matrix.nrows();
    check_len(p, matrix.ncols())?;
    if p == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    let scale = matrix.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut sym = Array2::<f64>::zeros((p, p));
    let mut max_asym = 0.0f64;
    for i in 0..p {
        for j in 0..=i {
            let a = matrix[[i, j]];
            let b = matrix[[j, i]];
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidInput("non-finite matrix entry".into()));
            }
            max_asym = max_asym.max((a - b).abs());
            let v = 0.5 * (a + b);
            sym[[i, j]] = v;
            sym[[j, i]] = v;
        }
    }
    if max_asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric {
            max_asymmetry: max_asym,
        });
    }
    factor_symmetric(sym)
}

fn factor_symmetric(sym: Array2<f64>) -> Result<SpdFactor> {
    let p = sym.nrows();
    let mut lower = Array2::<f64>::zeros((p, p));
    let mut log_det = 0.0;
    for j in 0..p {
        let mut pivot = sym[[j, j]];
        for k in 0..j {
            pivot -= lower[[j, k]] * lower[[j, k]];
        }
        if !(pivot > PIVOT_FLOOR * sym[[j, j]]) || !(pivot > 0.0) {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: pivot,
            });
        }
        let d = sqrt(pivot);
        lower[[j, j]] = d;
        log_det += 2.0 * ln(d);
        for i in j + 1..p {
            let mut acc = sym[[i, j]];
            for k in 0..j {
                acc -= lower[[i, k]] * lower[[j, k]];
            }
            lower[[i, j]] = acc / d;
        }
    }
    Ok(SpdFactor {
        matrix: sym,
        lower,
        log_det,
    })
}

/// [`cholesky_spd`] with one retry after adding `RIDGE_EPS * trace / p` to
/// the diagonal. A second failure is returned to the caller.
pub fn cholesky_with_ridge(matrix: ArrayView2<f64>) -> Result<SpdFactor> {
    match cholesky_spd(matrix) {
        Err(Error::NotPositiveDefinite { .. }) => {
            let p = matrix.nrows();
            let trace: f64 = (0..p).map(|i| matrix[[i, i]]).sum();
            let ridge = RIDGE_EPS * trace / p as f64;
            if !(ridge > 0.0) {
                return Err(Error::NotPositiveDefinite {
                    pivot: 0,
                    value: trace,
                });
            }
            let mut m = matrix.to_owned();
            for i in 0..p {
                m[[i, i]] += ridge;
            }
            log::trace!("ridge {ridge:e} added to a {p}x{p} covariance");
            cholesky_spd(m.view())
        }
        other => other,
    }
}

/// Log-density of a multivariate normal at `x`.
pub fn log_mvn_density(x: ArrayView1<f64>, mu: ArrayView1<f64>, sigma: &SpdFactor) -> Result<f64> {
    let d2 = sigma.mahalanobis_sq(x, mu)?;
    Ok(-0.5 * (sigma.dim() as f64 * LN_2PI + sigma.log_det() + d2))
}

/// `log(sum(exp(v)))` with the maximum factored out.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let mut rest = 0.0;
    let mut seen_max = false;
    for &v in values {
        if v == max && !seen_max {
            seen_max = true;
            continue;
        }
        rest += exp(v - max);
    }
    max + ln_1p(rest)
}

/// Per-class counts, means and centered scatter matrices over kept rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub counts: Vec<usize>,
    /// `G x p`, one mean per row.
    pub means: Array2<f64>,
    pub scatters: Vec<Array2<f64>>,
    pub pooled: Array2<f64>,
}

impl ClassStats {
    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn n_kept(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Stats for the same rows with one more column appended, reusing the
    /// existing means and scatters. `old` must be the data these stats were
    /// computed from.
    pub fn with_extra_column(
        &self,
        old: ArrayView2<f64>,
        extra: ArrayView1<f64>,
        labels: &[usize],
        kept: &[bool],
    ) -> Result<ClassStats> {
        let g_count = self.n_classes();
        let p = self.dim();
        check_len(p, old.ncols())?;
        check_len(old.nrows(), extra.len())?;
        let q = p + 1;
        let mut sums = vec![0.0; g_count];
        for (n, (&l, &k)) in labels.iter().zip(kept).enumerate() {
            if k {
                sums[l] += extra[n];
            }
        }
        let mut means = Array2::<f64>::zeros((g_count, q));
        let mut cross = Array2::<f64>::zeros((g_count, q));
        for g in 0..g_count {
            for j in 0..p {
                means[[g, j]] = self.means[[g, j]];
            }
            means[[g, p]] = sums[g] / self.counts[g] as f64;
        }
        for (n, (&l, &k)) in labels.iter().zip(kept).enumerate() {
            if !k {
                continue;
            }
            let dy = extra[n] - means[[l, p]];
            for j in 0..p {
                cross[[l, j]] += dy * (old[[n, j]] - means[[l, j]]);
            }
            cross[[l, p]] += dy * dy;
        }
        let mut scatters = Vec::with_capacity(g_count);
        let mut pooled = Array2::<f64>::zeros((q, q));
        for g in 0..g_count {
            let mut s = Array2::<f64>::zeros((q, q));
            for i in 0..p {
                for j in 0..p {
                    s[[i, j]] = self.scatters[g][[i, j]];
                }
                s[[i, p]] = cross[[g, i]];
                s[[p, i]] = cross[[g, i]];
            }
            s[[p, p]] = cross[[g, p]];
            pooled += &s;
            scatters.push(s);
        }
        Ok(ClassStats {
            counts: self.counts.clone(),
            means,
            scatters,
            pooled,
        })
    }
}

/// Class means and scatters over the kept rows, accumulated with centered
/// (Welford) updates.
pub fn class_sufficient_stats(
    data: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    kept: &[bool],
) -> Result<ClassStats> {
    let (n, p) = data.dim();
    check_len(n, labels.len())?;
    check_len(n, kept.len())?;
    let mut counts = vec![0usize; n_classes];
    let mut means = Array2::<f64>::zeros((n_classes, p));
    let mut scatters = vec![Array2::<f64>::zeros((p, p)); n_classes];
    let mut delta = vec![0.0; p];
    for (row, (&g, &k)) in data.outer_iter().zip(labels.iter().zip(kept)) {
        if !k {
            continue;
        }
        if g >= n_classes {
            return Err(Error::InvalidInput(alloc::format!(
                "label {g} out of range for {n_classes} classes"
            )));
        }
        counts[g] += 1;
        let c = counts[g] as f64;
        let mut mean = means.row_mut(g);
        for j in 0..p {
            delta[j] = row[j] - mean[j];
            mean[j] += delta[j] / c;
        }
        let w = (c - 1.0) / c;
        let s = &mut scatters[g];
        for i in 0..p {
            let di = w * delta[i];
            for j in i..p {
                s[[i, j]] += di * delta[j];
            }
        }
    }
    for (g, &c) in counts.iter().enumerate() {
        if c < 2 {
            return Err(Error::ClassCollapsed { class: g, kept: c });
        }
    }
    let mut pooled = Array2::<f64>::zeros((p, p));
    for s in scatters.iter_mut() {
        for i in 0..p {
            for j in 0..i {
                s[[i, j]] = s[[j, i]];
            }
        }
        pooled += &*s;
    }
    Ok(ClassStats {
        counts,
        means,
        scatters,
        pooled,
    })
}
