//! Trimmed-BIC comparison of the Grouping and No-Grouping models and the
//! greedy add/remove variable search built on it.
//!
//! For a proposal variable `p` and the currently included set `c`:
//!
//! * Grouping: a Gaussian classifier on `c ∪ {p}`.
//! * No-Grouping: a Gaussian classifier on `c` times a linear regression of
//!   `p` on a subset of `c`, trimmed with one common mask. With `c` empty the
//!   classifier reduces to the label multinomial.
//!
//! A positive `TBIC(GR) - TBIC(NG)` favours `p` carrying class information.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::family::{
    estimate_params, parameter_count, select_family, CovarianceFamily, FamilySelection,
    GaussianClassParams,
};
use crate::fit::{check_gamma, contributions_into, fit_redda_warm, kept_count, FitConfig};
use crate::gaussian::{class_sufficient_stats, ClassStats};
use crate::math::ln;
use crate::regression::{
    regression_log_density_into, select_predictor_subset, RegressionFit, SubsetConfig,
};
use crate::trimming::{concentrate, TrimModel};
use crate::{par, Error, Labeled, Result};

/// A model's trimmed log-likelihood, its parameter count and the penalized
/// criterion `2 loglik - v log N*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TbicScore {
    pub trimmed_loglik: f64,
    pub param_count: usize,
    pub n_star: usize,
    pub value: f64,
}

impl TbicScore {
    pub fn new(trimmed_loglik: f64, param_count: usize, n_star: usize) -> Self {
        TbicScore {
            trimmed_loglik,
            param_count,
            n_star,
            value: 2.0 * trimmed_loglik - param_count as f64 * ln(n_star as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    pub family: CovarianceFamily,
    pub gamma: f64,
    pub fit: FitConfig,
    pub subset: SubsetConfig,
    /// A move is accepted only when its TBIC difference exceeds this.
    pub min_diff: f64,
    /// Defaults to twice the number of variables.
    pub max_steps: Option<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            family: CovarianceFamily::EEI,
            gamma: 0.0,
            fit: FitConfig::default(),
            subset: SubsetConfig::default(),
            min_diff: 0.0,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Add,
    Remove,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Add => "add",
            Direction::Remove => "remove",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub direction: Direction,
    /// `None` when no candidate could be evaluated.
    pub candidate: Option<usize>,
    pub tbic_diff: f64,
    pub accepted: bool,
    pub family: CovarianceFamily,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectionState {
    pub included: Vec<usize>,
    pub history: Vec<StepRecord>,
    pub terminated: bool,
}

impl SelectionState {
    /// Rebuilds the included set from the accepted steps.
    pub fn replay(&self) -> Vec<usize> {
        let mut included = Vec::new();
        for r in self.history.iter().filter(|r| r.accepted) {
            let Some(c) = r.candidate else { continue };
            match r.direction {
                Direction::Add => included.push(c),
                Direction::Remove => included.retain(|&v| v != c),
            }
        }
        included
    }
}

/// Best candidate of one sweep plus everything evaluated along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub best: Option<(usize, f64)>,
    pub evaluated: Vec<(usize, f64)>,
    pub skipped: Vec<(usize, String)>,
}

/// Row-major copy of the chosen columns.
fn gather(data: ArrayView2<f64>, cols: &[usize]) -> Array2<f64> {
    let picked = data.select(Axis(1), cols);
    if picked.is_standard_layout() {
        picked
    } else {
        picked.as_standard_layout().into_owned()
    }
}

fn column_has_spread(data: ArrayView2<f64>, j: usize) -> bool {
    let col = data.column(j);
    let first = col[0];
    col.iter().any(|&v| v != first)
}

// ---------------------------------------------------------------------------
// No-Grouping model

/// Classifier on `c`, or just the class priors when `c` is empty.
enum ClassPart {
    Priors(Vec<f64>),
    Gaussian(GaussianClassParams),
}

struct NoGroupingParams {
    class: ClassPart,
    regression: RegressionFit,
}

struct NoGroupingModel<'a> {
    c_data: &'a Array2<f64>,
    y: Array1<f64>,
    labels: &'a [usize],
    n_classes: usize,
    family: CovarianceFamily,
    subset: SubsetConfig,
    warm: Option<&'a ClassStats>,
}

impl NoGroupingModel<'_> {
    fn class_part(&self, kept: &[bool], all_rows: bool) -> Result<ClassPart> {
        if self.c_data.ncols() == 0 {
            let mut counts = vec![0usize; self.n_classes];
            for (&l, &k) in self.labels.iter().zip(kept) {
                if k {
                    counts[l] += 1;
                }
            }
            let total: usize = counts.iter().sum();
            if let Some(g) = counts.iter().position(|&c| c == 0) {
                return Err(Error::ClassCollapsed { class: g, kept: 0 });
            }
            return Ok(ClassPart::Priors(
                counts.iter().map(|&c| c as f64 / total as f64).collect(),
            ));
        }
        let params = match (self.warm, all_rows) {
            (Some(stats), true) => estimate_params(stats, self.family)?,
            _ => {
                let stats =
                    class_sufficient_stats(self.c_data.view(), self.labels, self.n_classes, kept)?;
                estimate_params(&stats, self.family)?
            }
        };
        Ok(ClassPart::Gaussian(params))
    }
}

impl TrimModel for NoGroupingModel<'_> {
    type Params = NoGroupingParams;

    fn n_rows(&self) -> usize {
        self.labels.len()
    }

    fn estimate(&self, kept: &[bool], all_rows: bool) -> Result<NoGroupingParams> {
        let class = self.class_part(kept, all_rows)?;
        let regression =
            select_predictor_subset(self.y.view(), self.c_data.view(), kept, &self.subset)?;
        Ok(NoGroupingParams { class, regression })
    }

    fn contributions(&self, params: &NoGroupingParams, out: &mut [f64]) {
        regression_log_density_into(&params.regression, self.y.view(), self.c_data.view(), out);
        match &params.class {
            ClassPart::Priors(tau) => {
                for (o, &l) in out.iter_mut().zip(self.labels) {
                    *o += ln(tau[l]);
                }
            }
            ClassPart::Gaussian(gp) => {
                let mut class = vec![0.0; out.len()];
                let data = ndarray::CowArray::from(self.c_data.view());
                contributions_into(gp, &data, self.labels, &mut class);
                for (o, c) in out.iter_mut().zip(class) {
                    *o += c;
                }
            }
        }
    }
}

fn no_grouping_score(
    problem: &Labeled<'_>,
    c_data: &Array2<f64>,
    warm: Option<&ClassStats>,
    proposal: usize,
    cfg: &SelectionConfig,
) -> Result<TbicScore> {
    check_gamma(cfg.gamma)?;
    let n = problem.n_rows();
    let g = problem.n_classes;
    let k = c_data.ncols();
    let n_star = kept_count(n, cfg.gamma);
    if k > 0 && n_star < g * (k + 1) {
        return Err(Error::Infeasible(alloc::format!(
            "{n_star} kept rows cannot support {g} classes in {k} dimensions"
        )));
    }
    let model = NoGroupingModel {
        c_data,
        y: problem.data.column(proposal).to_owned(),
        labels: problem.labels,
        n_classes: g,
        family: cfg.family,
        subset: cfg.subset,
        warm,
    };
    let out = concentrate(&model, problem.labels, g, n_star, &cfg.fit)?;
    let v_class = if k == 0 {
        g - 1
    } else {
        parameter_count(cfg.family, g, k)
    };
    let v = v_class + out.params.regression.param_count();
    Ok(TbicScore::new(out.loglik, v, n_star))
}

fn grouping_score(
    problem: &Labeled<'_>,
    data: &Array2<f64>,
    warm: Option<ClassStats>,
    cfg: &SelectionConfig,
) -> Result<TbicScore> {
    let sub = Labeled {
        data: data.view(),
        labels: problem.labels,
        n_classes: problem.n_classes,
    };
    let fit = fit_redda_warm(&sub, cfg.family, cfg.gamma, &cfg.fit, warm)?;
    let v = parameter_count(cfg.family, problem.n_classes, data.ncols());
    Ok(TbicScore::new(fit.trimmed_loglik, v, fit.n_star))
}

/// Trimmed BIC of the Grouping model: a trimmed Gaussian classifier on
/// `vars` (the included set plus the proposal).
pub fn tbic_grouping(
    problem: &Labeled<'_>,
    vars: &[usize],
    cfg: &SelectionConfig,
) -> Result<TbicScore> {
    if vars.is_empty() {
        return Err(Error::InvalidInput(
            "grouping model needs a variable".into(),
        ));
    }
    grouping_score(problem, &gather(problem.data, vars), None, cfg)
}

/// Trimmed BIC of the No-Grouping model for proposal `p` given included
/// set `c`.
pub fn tbic_no_grouping(
    problem: &Labeled<'_>,
    c: &[usize],
    p: usize,
    cfg: &SelectionConfig,
) -> Result<TbicScore> {
    if c.contains(&p) {
        return Err(Error::InvalidInput(alloc::format!(
            "proposal {p} is already in the conditioning set"
        )));
    }
    no_grouping_score(problem, &gather(problem.data, c), None, p, cfg)
}

// ---------------------------------------------------------------------------
// Sweeps

/// Data shared by every candidate of one sweep.
struct SweepContext<'a, 'p> {
    problem: &'a Labeled<'p>,
    included: &'a [usize],
    cfg: &'a SelectionConfig,
    c_data: Array2<f64>,
    /// All-row class statistics on `c`, the warm start of every fit.
    c_stats: Option<ClassStats>,
    /// Grouping score on `c`, shared by every removal candidate.
    grouping_current: Option<core::result::Result<TbicScore, String>>,
}

impl<'a, 'p> SweepContext<'a, 'p> {
    fn new(
        problem: &'a Labeled<'p>,
        included: &'a [usize],
        direction: Direction,
        cfg: &'a SelectionConfig,
    ) -> Self {
        let c_data = gather(problem.data, included);
        let all = vec![true; problem.n_rows()];
        let c_stats = if included.is_empty() {
            None
        } else {
            class_sufficient_stats(c_data.view(), problem.labels, problem.n_classes, &all).ok()
        };
        let grouping_current = match direction {
            Direction::Remove if !included.is_empty() => Some(
                grouping_score(problem, &c_data, c_stats.clone(), cfg).map_err(|e| e.to_string()),
            ),
            _ => None,
        };
        SweepContext {
            problem,
            included,
            cfg,
            c_data,
            c_stats,
            grouping_current,
        }
    }

    fn eligible(&self, direction: Direction) -> Vec<usize> {
        match direction {
            Direction::Add => (0..self.problem.n_vars())
                .filter(|j| !self.included.contains(j))
                .collect(),
            Direction::Remove => self.included.to_vec(),
        }
    }

    fn evaluate(
        &self,
        direction: Direction,
        candidate: usize,
    ) -> core::result::Result<f64, String> {
        let problem = self.problem;
        if !column_has_spread(problem.data, candidate) {
            return Err("zero variance".into());
        }
        match direction {
            Direction::Add => {
                let k = self.c_data.ncols();
                let mut joint = Array2::<f64>::zeros((problem.n_rows(), k + 1));
                joint.slice_mut(s![.., ..k]).assign(&self.c_data);
                joint.column_mut(k).assign(&problem.data.column(candidate));
                let all = vec![true; problem.n_rows()];
                let warm = self.c_stats.as_ref().and_then(|st| {
                    st.with_extra_column(
                        self.c_data.view(),
                        problem.data.column(candidate),
                        problem.labels,
                        &all,
                    )
                    .ok()
                });
                let gr = grouping_score(problem, &joint, warm, self.cfg)
                    .map_err(|e| alloc::format!("grouping: {e}"))?;
                let ng = no_grouping_score(
                    problem,
                    &self.c_data,
                    self.c_stats.as_ref(),
                    candidate,
                    self.cfg,
                )
                .map_err(|e| alloc::format!("no grouping: {e}"))?;
                Ok(gr.value - ng.value)
            }
            Direction::Remove => {
                let gr = match &self.grouping_current {
                    Some(Ok(score)) => *score,
                    Some(Err(e)) => return Err(alloc::format!("grouping: {e}")),
                    None => return Err("nothing to remove".into()),
                };
                let rest: Vec<usize> = self
                    .included
                    .iter()
                    .copied()
                    .filter(|&v| v != candidate)
                    .collect();
                let rest_data = gather(problem.data, &rest);
                let ng = no_grouping_score(problem, &rest_data, None, candidate, self.cfg)
                    .map_err(|e| alloc::format!("no grouping: {e}"))?;
                Ok(ng.value - gr.value)
            }
        }
    }
}

/// TBIC difference for one move. Additions score `GR(c ∪ p) - NG(c, p)`;
/// removals score `NG(c \ p, p) - GR(c)`, so positive favours the move in
/// both directions. Failed evaluations return negative infinity.
pub fn evaluate_candidate(
    problem: &Labeled<'_>,
    included: &[usize],
    direction: Direction,
    candidate: usize,
    cfg: &SelectionConfig,
) -> f64 {
    let valid = match direction {
        Direction::Add => candidate < problem.n_vars() && !included.contains(&candidate),
        Direction::Remove => included.contains(&candidate),
    };
    if !valid {
        return f64::NEG_INFINITY;
    }
    let ctx = SweepContext::new(problem, included, direction, cfg);
    ctx.evaluate(direction, candidate)
        .unwrap_or(f64::NEG_INFINITY)
}

/// Evaluates every eligible candidate and returns the largest difference,
/// ties to the lowest variable index.
pub fn sweep(
    problem: &Labeled<'_>,
    included: &[usize],
    direction: Direction,
    cfg: &SelectionConfig,
) -> SweepOutcome {
    let ctx = SweepContext::new(problem, included, direction, cfg);
    let pool = ctx.eligible(direction);
    let results = par::map_indexed(pool.len(), |i| ctx.evaluate(direction, pool[i]));
    let mut evaluated = Vec::new();
    let mut skipped = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for (&cand, res) in pool.iter().zip(results) {
        match res {
            Ok(diff) if !diff.is_nan() => {
                evaluated.push((cand, diff));
                let better = match best {
                    None => true,
                    Some((b, d)) => diff > d || (diff == d && cand < b),
                };
                if better {
                    best = Some((cand, diff));
                }
            }
            Ok(_) => skipped.push((cand, "undefined difference".to_string())),
            Err(reason) => {
                log::debug!("candidate {cand} skipped: {reason}");
                skipped.push((cand, reason));
            }
        }
    }
    SweepOutcome {
        best,
        evaluated,
        skipped,
    }
}

/// Runs the stepwise search from the empty set.
pub fn run_stepwise(problem: &Labeled<'_>, cfg: &SelectionConfig) -> SelectionState {
    run_stepwise_with(problem, cfg, |_| {})
}

/// [`run_stepwise`] with a callback invoked after every sweep.
///
/// Addition and removal sweeps alternate. A sweep is accepted when its best
/// difference exceeds `min_diff`. The search stops after two consecutive
/// rejected sweeps, after a rejected addition on an empty set, or at
/// `max_steps`.
pub fn run_stepwise_with<F>(
    problem: &Labeled<'_>,
    cfg: &SelectionConfig,
    mut on_step: F,
) -> SelectionState
where
    F: FnMut(&StepRecord),
{
    let max_steps = cfg.max_steps.unwrap_or(2 * problem.n_vars());
    let mut state = SelectionState::default();
    let mut previous_rejected = false;
    for step in 0..max_steps {
        let direction = if step % 2 == 0 {
            Direction::Add
        } else {
            Direction::Remove
        };
        let outcome = sweep(problem, &state.included, direction, cfg);
        let (candidate, diff) = match outcome.best {
            Some((c, d)) => (Some(c), d),
            None => (None, f64::NEG_INFINITY),
        };
        let accepted = candidate.is_some() && diff > cfg.min_diff;
        if accepted {
            let c = candidate.expect("accepted move has a candidate");
            match direction {
                Direction::Add => state.included.push(c),
                Direction::Remove => state.included.retain(|&v| v != c),
            }
        }
        let record = StepRecord {
            step: step + 1,
            direction,
            candidate,
            tbic_diff: diff,
            accepted,
            family: cfg.family,
            gamma: cfg.gamma,
        };
        on_step(&record);
        state.history.push(record);
        if accepted {
            previous_rejected = false;
            continue;
        }
        if previous_rejected || (direction == Direction::Add && state.included.is_empty()) {
            state.terminated = true;
            break;
        }
        previous_rejected = true;
    }
    state
}

/// Picks one covariance family for a whole run: the variables are ranked by
/// their first-step addition difference under `cfg.family`, and the families
/// are compared by trimmed BIC on the `top_k` best of them.
pub fn screen_family(
    problem: &Labeled<'_>,
    cfg: &SelectionConfig,
    candidates: &[CovarianceFamily],
    top_k: usize,
) -> Result<FamilySelection> {
    let first = sweep(problem, &[], Direction::Add, cfg);
    let mut ranked = first.evaluated.clone();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut top: Vec<usize> = ranked.iter().take(top_k.max(1)).map(|&(j, _)| j).collect();
    if top.is_empty() {
        return Err(Error::AllCandidatesFailed(
            "no variable could be screened".into(),
        ));
    }
    top.sort_unstable();
    let data = gather(problem.data, &top);
    let sub = Labeled {
        data: data.view(),
        labels: problem.labels,
        n_classes: problem.n_classes,
    };
    select_family(&sub, cfg.gamma, candidates, &cfg.fit)
}
