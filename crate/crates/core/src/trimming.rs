//! Concentration steps for trimmed likelihoods.
//!
//! A model estimates parameters from a kept mask and scores every row; the
//! engine alternates estimation with keeping the `N*` best-scoring rows
//! until the mask is stable, over several starts.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fit::{FitConfig, RestartTrace};
use crate::{par, Error, Result};

pub(crate) trait TrimModel: Sync {
    type Params: Send;

    fn n_rows(&self) -> usize;

    /// Estimates on the kept rows. `all_rows` is set for the warm start on
    /// the full data so implementations may reuse cached statistics.
    fn estimate(&self, kept: &[bool], all_rows: bool) -> Result<Self::Params>;

    /// Per-row log-likelihood contributions under `params`.
    fn contributions(&self, params: &Self::Params, out: &mut [f64]);
}

pub(crate) struct Concentrated<P> {
    pub params: P,
    pub kept: Vec<bool>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub traces: Vec<RestartTrace>,
}

struct RestartResult<P> {
    params: P,
    kept: Vec<bool>,
    loglik: f64,
    iterations: usize,
    converged: bool,
}

fn kept_sum(contrib: &[f64], kept: &[bool]) -> f64 {
    contrib
        .iter()
        .zip(kept)
        .filter(|(_, &k)| k)
        .map(|(c, _)| *c)
        .sum()
}

fn by_contribution(contrib: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| {
        let (ca, cb) = (nan_low(contrib[a]), nan_low(contrib[b]));
        cb.total_cmp(&ca).then(a.cmp(&b))
    }
}

fn nan_low(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Marks the `n_star` largest contributions, ties to the lower row index.
pub(crate) fn top_rows(contrib: &[f64], n_star: usize, kept: &mut [bool]) {
    let n = contrib.len();
    kept.iter_mut().for_each(|k| *k = false);
    if n_star >= n {
        kept.iter_mut().for_each(|k| *k = true);
        return;
    }
    let mut order: Vec<usize> = (0..n).collect();
    if n_star > 0 {
        order.select_nth_unstable_by(n_star - 1, by_contribution(contrib));
    }
    for &i in &order[..n_star] {
        kept[i] = true;
    }
}

/// Random kept mask of size `n_star` that preserves stratum proportions
/// (largest-remainder allocation).
pub(crate) fn stratified_start(
    strata: &[usize],
    n_strata: usize,
    n_star: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<bool> {
    let n = strata.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_strata];
    for (i, &s) in strata.iter().enumerate() {
        members[s].push(i);
    }
    let mut quota: Vec<usize> = members.iter().map(|m| m.len() * n_star / n).collect();
    let mut remainders: Vec<(usize, usize)> = members
        .iter()
        .enumerate()
        .map(|(s, m)| ((m.len() * n_star) % n, s))
        .collect();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut missing = n_star - quota.iter().sum::<usize>();
    for &(_, s) in &remainders {
        if missing == 0 {
            break;
        }
        if quota[s] < members[s].len() {
            quota[s] += 1;
            missing -= 1;
        }
    }
    let mut kept = vec![false; n];
    for (s, m) in members.iter().enumerate() {
        for i in index::sample(rng, m.len(), quota[s]).iter() {
            kept[m[i]] = true;
        }
    }
    kept
}

fn run_restart<M: TrimModel>(
    model: &M,
    restart: usize,
    strata: &[usize],
    n_strata: usize,
    n_star: usize,
    config: &FitConfig,
    trace: &mut Vec<f64>,
) -> Result<RestartResult<M::Params>> {
    let n = model.n_rows();
    let mut contrib = vec![0.0; n];
    let (mut kept, mut params) = if restart == 0 {
        let all = vec![true; n];
        let warm = model.estimate(&all, true)?;
        model.contributions(&warm, &mut contrib);
        if n_star >= n {
            let loglik = kept_sum(&contrib, &all);
            trace.push(loglik);
            return Ok(RestartResult {
                params: warm,
                kept: all,
                loglik,
                iterations: 1,
                converged: true,
            });
        }
        let mut kept = vec![false; n];
        top_rows(&contrib, n_star, &mut kept);
        let params = model.estimate(&kept, false)?;
        (kept, params)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(restart as u64);
        let kept = stratified_start(strata, n_strata, n_star, &mut rng);
        let params = model.estimate(&kept, false)?;
        (kept, params)
    };
    model.contributions(&params, &mut contrib);
    let mut loglik = kept_sum(&contrib, &kept);
    trace.push(loglik);
    let mut iterations = 1;
    let mut converged = false;
    let mut next = vec![false; n];
    while iterations < config.max_iter {
        top_rows(&contrib, n_star, &mut next);
        if next == kept {
            converged = true;
            break;
        }
        let next_params = model.estimate(&next, false)?;
        let mut next_contrib = vec![0.0; n];
        model.contributions(&next_params, &mut next_contrib);
        let next_loglik = kept_sum(&next_contrib, &next);
        iterations += 1;
        trace.push(next_loglik);
        if !(next_loglik >= loglik) {
            // Only reachable when the estimator is not an exact maximizer
            // (ridge fallback, greedy regression subsets): keep the better state.
            converged = true;
            break;
        }
        let gain = next_loglik - loglik;
        core::mem::swap(&mut kept, &mut next);
        params = next_params;
        contrib = next_contrib;
        loglik = next_loglik;
        if gain < config.tol {
            converged = true;
            break;
        }
    }
    Ok(RestartResult {
        params,
        kept,
        loglik,
        iterations,
        converged,
    })
}

/// Runs every restart and returns the best by trimmed log-likelihood, ties
/// to the lower restart index.
pub(crate) fn concentrate<M: TrimModel>(
    model: &M,
    strata: &[usize],
    n_strata: usize,
    n_star: usize,
    config: &FitConfig,
) -> Result<Concentrated<M::Params>> {
    let n = model.n_rows();
    if n_star == 0 || n_star > n {
        return Err(Error::Infeasible(alloc::format!(
            "cannot keep {n_star} of {n} rows"
        )));
    }
    let restarts = if n_star >= n {
        1
    } else {
        config.n_restarts.max(1)
    };
    let results = par::map_indexed(restarts, |r| {
        let mut trace = Vec::new();
        let out = run_restart(model, r, strata, n_strata, n_star, config, &mut trace);
        (out, trace)
    });

    let mut traces = Vec::with_capacity(restarts);
    let mut best: Option<RestartResult<M::Params>> = None;
    let mut first_err = None;
    for (out, loglik) in results {
        let ok = out.is_ok();
        traces.push(RestartTrace {
            loglik,
            discarded: !ok,
        });
        match out {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.loglik > b.loglik) {
                    best = Some(r);
                }
            }
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    match best {
        Some(b) => Ok(Concentrated {
            params: b.params,
            kept: b.kept,
            loglik: b.loglik,
            iterations: b.iterations,
            converged: b.converged,
            traces,
        }),
        None => Err(first_err.unwrap_or(Error::Infeasible("no restart succeeded".into()))),
    }
}
