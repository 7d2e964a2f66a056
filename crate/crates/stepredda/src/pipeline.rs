//! End-to-end operations shared by the command line and library users.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use stepredda_core::{
    fit_redda, marginal_log_density, predict_map, run_stepwise_with, screen_family, select_family,
    CovarianceFamily, FamilySelection, FitConfig, Labeled, OutlierReport, Prediction,
    SelectionConfig, SelectionState, StepRecord, SubsetConfig,
};

use crate::error::{Error, Result};
use crate::model::{ModelArtifact, RunManifest, TOOL_VERSION};
use crate::spectra::LabeledSpectra;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyChoice {
    Fixed(CovarianceFamily),
    /// Compare all six families on the `top` best single variables.
    Auto {
        top: usize,
    },
}

impl fmt::Display for FamilyChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyChoice::Fixed(family) => write!(f, "{family}"),
            FamilyChoice::Auto { .. } => f.write_str("auto"),
        }
    }
}

impl FromStr for FamilyChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(FamilyChoice::Auto { top: 10 });
        }
        s.to_ascii_uppercase()
            .parse()
            .map(FamilyChoice::Fixed)
            .map_err(|_| {
                format!("unknown family {s:?}; expected one of EII, VII, EEI, VVI, EEE, VVV, auto")
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub family: FamilyChoice,
    pub gamma: f64,
    pub fit: FitConfig,
    pub subset: SubsetConfig,
    pub min_diff: f64,
    pub max_steps: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            family: FamilyChoice::Auto { top: 10 },
            gamma: 0.03,
            fit: FitConfig::default(),
            subset: SubsetConfig::default(),
            min_diff: 0.0,
            max_steps: None,
        }
    }
}

impl PipelineConfig {
    pub fn manifest(&self, command: &str) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            seed: self.fit.seed,
            gamma: self.gamma,
            family: self.family.to_string(),
            restarts: self.fit.n_restarts,
            max_iter: self.fit.max_iter,
            tol: self.fit.tol,
            min_diff: self.min_diff,
            max_steps: self.max_steps,
            screen_top: match self.family {
                FamilyChoice::Auto { top } => Some(top),
                FamilyChoice::Fixed(_) => None,
            },
            input: None,
            input_sha256: None,
        }
    }

    fn selection(&self, family: CovarianceFamily) -> SelectionConfig {
        SelectionConfig {
            family,
            gamma: self.gamma,
            fit: self.fit,
            subset: self.subset,
            min_diff: self.min_diff,
            max_steps: self.max_steps,
        }
    }
}

fn problem(spectra: &LabeledSpectra) -> Result<Labeled<'_>> {
    Ok(Labeled::new(
        spectra.data.view(),
        spectra.labels()?,
        spectra.n_classes(),
    )?)
}

#[derive(Debug, Clone)]
pub struct SelectionRun {
    pub family: CovarianceFamily,
    pub screening: Option<FamilySelection>,
    pub state: SelectionState,
    /// `None` when nothing was selected.
    pub artifact: Option<ModelArtifact>,
}

/// Stepwise selection followed by a trimmed fit on the selected channels.
/// `on_step` sees every sweep as it finishes.
pub fn select(
    spectra: &LabeledSpectra,
    cfg: &PipelineConfig,
    manifest: RunManifest,
    on_step: impl FnMut(&StepRecord),
) -> Result<SelectionRun> {
    let problem = problem(spectra)?;
    let (family, screening) = match cfg.family {
        FamilyChoice::Fixed(f) => (f, None),
        FamilyChoice::Auto { top } => {
            let probe = cfg.selection(CovarianceFamily::VVI);
            let screened = screen_family(&problem, &probe, &CovarianceFamily::ALL, top)?;
            log::info!("covariance family {} chosen by screening", screened.family);
            (screened.family, Some(screened))
        }
    };
    let state = run_stepwise_with(&problem, &cfg.selection(family), on_step);
    let artifact = if state.included.is_empty() {
        None
    } else {
        Some(fit_artifact(
            spectra,
            &state.included,
            family,
            cfg,
            manifest,
        )?)
    };
    Ok(SelectionRun {
        family,
        screening,
        state,
        artifact,
    })
}

/// Trimmed fit on a caller-chosen channel list.
pub fn train(
    spectra: &LabeledSpectra,
    vars: &[usize],
    cfg: &PipelineConfig,
    manifest: RunManifest,
) -> Result<ModelArtifact> {
    if vars.is_empty() {
        return Err(Error::EmptySelection);
    }
    if let Some(&bad) = vars.iter().find(|&&j| j >= spectra.n_channels()) {
        return Err(Error::Config(format!(
            "variable {bad} out of range for {} channels",
            spectra.n_channels()
        )));
    }
    let family = match cfg.family {
        FamilyChoice::Fixed(f) => f,
        FamilyChoice::Auto { .. } => {
            let sub = spectra.select_channels(vars);
            select_family(&problem(&sub)?, cfg.gamma, &CovarianceFamily::ALL, &cfg.fit)?.family
        }
    };
    fit_artifact(spectra, vars, family, cfg, manifest)
}

fn fit_artifact(
    spectra: &LabeledSpectra,
    vars: &[usize],
    family: CovarianceFamily,
    cfg: &PipelineConfig,
    manifest: RunManifest,
) -> Result<ModelArtifact> {
    let sub = spectra.select_channels(vars);
    let fit = fit_redda(&problem(&sub)?, family, cfg.gamma, &cfg.fit)?;
    Ok(ModelArtifact::new(
        &fit.params,
        spectra.class_names.clone(),
        vars.to_vec(),
        sub.wavelengths,
        spectra.unit,
        cfg.gamma,
        fit.n_star,
        fit.trimmed_loglik,
        &fit.kept,
        manifest,
    ))
}

/// The model's channels of `spectra`: either the input already holds
/// exactly those channels, or it is a full spectrum to project.
pub fn project(artifact: &ModelArtifact, spectra: &LabeledSpectra) -> Result<Array2<f64>> {
    let p = artifact.selected.len();
    if spectra.n_channels() == p {
        return Ok(spectra.data.clone());
    }
    match artifact.selected.iter().max() {
        Some(&last) if last < spectra.n_channels() => {
            Ok(spectra.data.select(Axis(1), &artifact.selected))
        }
        _ => Err(stepredda_core::Error::DimensionMismatch {
            expected: p,
            found: spectra.n_channels(),
        }
        .into()),
    }
}

pub fn predict(artifact: &ModelArtifact, spectra: &LabeledSpectra) -> Result<Prediction> {
    let x = project(artifact, spectra)?;
    Ok(predict_map(&artifact.params()?, x.view())?)
}

pub fn outliers(artifact: &ModelArtifact, spectra: &LabeledSpectra) -> Result<OutlierReport> {
    let x = project(artifact, spectra)?;
    let all: Vec<usize> = (0..x.ncols()).collect();
    Ok(marginal_log_density(&artifact.params()?, x.view(), &all)?)
}

pub const STEP_LOG_HEADER: &str = "step\tdirection\tindex\twavelength\tdiff\taccepted";

/// One tab-separated progress line; `-` marks a sweep without candidates.
pub fn step_log_line(record: &StepRecord, wavelengths: &[f64]) -> String {
    let (index, wavelength) = match record.candidate {
        Some(j) => (j.to_string(), wavelengths[j].to_string()),
        None => ("-".into(), "-".into()),
    };
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}",
        record.step,
        record.direction.as_str(),
        index,
        wavelength,
        record.tbic_diff,
        record.accepted
    )
}
