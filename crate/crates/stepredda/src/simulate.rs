//! Synthetic labeled spectra with label noise and adulterated test samples.
//!
//! Every channel sits on a smooth baseline. Relevant channels add a class
//! effect; the rest are class independent (optionally noisy copies of a
//! relevant channel). Outliers are appended to the test set, built from a
//! random clean test spectrum.

use ndarray::{Array1, Array2, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use stepredda_core::CovarianceFamily;

use crate::error::{Error, Result};
use crate::spectra::{LabeledSpectra, WavelengthUnit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutlierRecipe {
    /// Drops the first `channels` points and pads the end with the class
    /// mean of the padded channels.
    Shift { channels: usize },
    /// Adds `N(0, sigma^2)` to every channel; `None` uses twice the mean
    /// channel standard deviation of the training set.
    WhiteNoise { sigma: Option<f64> },
    /// Adds `magnitude` channel standard deviations to one channel.
    Spike { channel: usize, magnitude: f64 },
    /// Multiplies the whole spectrum by `factor`.
    Slope { factor: f64 },
}

impl OutlierRecipe {
    /// The four adulterations at default strength, spiking `channel`.
    pub fn standard_set(channel: usize) -> Vec<OutlierRecipe> {
        vec![
            OutlierRecipe::Shift { channels: 15 },
            OutlierRecipe::WhiteNoise { sigma: None },
            OutlierRecipe::Spike {
                channel,
                magnitude: 10.0,
            },
            OutlierRecipe::Slope { factor: 1.2 },
        ]
    }

    fn check(&self, n_channels: usize) -> Result<()> {
        let ok = match *self {
            OutlierRecipe::Shift { channels } => channels > 0 && channels < n_channels,
            OutlierRecipe::WhiteNoise { sigma } => sigma.is_none_or(|s| s.is_finite() && s >= 0.0),
            OutlierRecipe::Spike { channel, magnitude } => {
                channel < n_channels && magnitude.is_finite() && magnitude >= 0.0
            }
            OutlierRecipe::Slope { factor } => factor.is_finite() && factor > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid outlier recipe {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSpec {
    pub label_noise_rate: f64,
    pub outliers: Vec<OutlierRecipe>,
}

impl Default for ContaminationSpec {
    fn default() -> Self {
        ContaminationSpec {
            label_noise_rate: 0.0,
            outliers: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_channels: usize,
    pub n_relevant: usize,
    /// Gap between consecutive class means on a relevant channel, in noise
    /// standard deviations.
    pub separation: f64,
    /// Shape of the within-class noise on relevant channels.
    #[serde(with = "crate::model::family_code")]
    pub family: CovarianceFamily,
    /// Irrelevant channels that copy a relevant one plus noise.
    pub redundant: usize,
    pub contamination: ContaminationSpec,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_classes: 3,
            n_train: 300,
            n_test: 150,
            n_channels: 30,
            n_relevant: 4,
            separation: 3.0,
            family: CovarianceFamily::EEI,
            redundant: 0,
            contamination: ContaminationSpec::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedOutlier {
    /// Row in the test set.
    pub row: usize,
    /// Clean test row the outlier was derived from.
    pub source: usize,
    pub recipe: OutlierRecipe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub relevant: Vec<usize>,
    /// `(redundant channel, relevant channel it copies)`.
    pub redundant: Vec<(usize, usize)>,
    pub noisy_labels: Vec<usize>,
    /// Training labels before label noise.
    pub clean_labels: Vec<usize>,
    pub outliers: Vec<InjectedOutlier>,
    pub config: SimulationConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub train: LabeledSpectra,
    pub test: LabeledSpectra,
    pub truth: GroundTruth,
}

/// Smooth channel offset shared by all classes.
pub fn baseline(j: usize) -> f64 {
    40.0 + 10.0 * (2.0 * std::f64::consts::PI * j as f64 / 23.0).sin()
}

struct Generator<'a> {
    cfg: &'a SimulationConfig,
    /// Relevant position of each channel, if any.
    role: Vec<Option<usize>>,
    copies: Vec<Option<usize>>,
}

impl Generator<'_> {
    fn noise_sd(&self, class: usize) -> f64 {
        if self.cfg.family.is_shared() {
            1.0
        } else {
            1.0 + 0.25 * class as f64
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, labels: &[usize]) -> Array2<f64> {
        let cfg = self.cfg;
        let (g, p) = (cfg.n_classes, cfg.n_channels);
        // Non-diagonal families share one latent factor across relevant channels.
        let loading: f64 = if cfg.family.is_diagonal() { 0.0 } else { 0.6 };
        let own = (1.0 - loading * loading).sqrt();
        let mut data = Array2::<f64>::zeros((labels.len(), p));
        for (mut row, &l) in data.axis_iter_mut(Axis(0)).zip(labels) {
            let factor: f64 = rng.sample(StandardNormal);
            for j in 0..p {
                let z: f64 = rng.sample(StandardNormal);
                row[j] = match self.role[j] {
                    Some(k) => {
                        let effect = cfg.separation * ((l + k) % g) as f64;
                        effect + self.noise_sd(l) * (loading * factor + own * z)
                    }
                    None => z,
                };
            }
            for j in 0..p {
                if let Some(src) = self.copies[j] {
                    row[j] = row[src] + 0.5 * row[j];
                }
            }
            for j in 0..p {
                row[j] += baseline(j);
            }
        }
        data
    }
}

fn check_config(cfg: &SimulationConfig) -> Result<()> {
    let c = &cfg.contamination;
    if cfg.n_classes < 2 || cfg.n_channels == 0 || cfg.n_train < cfg.n_classes || cfg.n_test == 0 {
        return Err(Error::Config(
            "need at least two classes, one channel and rows for each".into(),
        ));
    }
    if cfg.n_relevant > cfg.n_channels || cfg.n_relevant + cfg.redundant > cfg.n_channels {
        return Err(Error::Config(format!(
            "{} relevant and {} redundant channels do not fit in {}",
            cfg.n_relevant, cfg.redundant, cfg.n_channels
        )));
    }
    if cfg.redundant > 0 && cfg.n_relevant == 0 {
        return Err(Error::Config(
            "redundant channels need a relevant channel to copy".into(),
        ));
    }
    if !(cfg.separation.is_finite() && cfg.separation >= 0.0) {
        return Err(Error::Config(
            "separation must be finite and nonnegative".into(),
        ));
    }
    if !(0.0..1.0).contains(&c.label_noise_rate) {
        return Err(Error::Config("label noise rate must lie in [0, 1)".into()));
    }
    for r in &c.outliers {
        r.check(cfg.n_channels)?;
    }
    Ok(())
}

pub fn simulate_contaminated(cfg: &SimulationConfig) -> Result<Simulation> {
    check_config(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (g, p) = (cfg.n_classes, cfg.n_channels);

    let mut relevant = index::sample(&mut rng, p, cfg.n_relevant).into_vec();
    relevant.sort_unstable();
    let mut role = vec![None; p];
    for (k, &j) in relevant.iter().enumerate() {
        role[j] = Some(k);
    }
    let others: Vec<usize> = (0..p).filter(|j| role[*j].is_none()).collect();
    let mut picked = index::sample(&mut rng, others.len(), cfg.redundant).into_vec();
    picked.sort_unstable();
    let mut copies = vec![None; p];
    let mut redundant = Vec::with_capacity(cfg.redundant);
    for (k, i) in picked.into_iter().enumerate() {
        let src = relevant[k % relevant.len()];
        copies[others[i]] = Some(src);
        redundant.push((others[i], src));
    }
    let gen = Generator { cfg, role, copies };

    let train_labels: Vec<usize> = (0..cfg.n_train).map(|i| i % g).collect();
    let test_labels: Vec<usize> = (0..cfg.n_test).map(|i| i % g).collect();
    let train_data = gen.draw(&mut rng, &train_labels);
    let test_data = gen.draw(&mut rng, &test_labels);

    let n_flip = (cfg.contamination.label_noise_rate * cfg.n_train as f64 + 1e-9).floor() as usize;
    let mut noisy_labels = index::sample(&mut rng, cfg.n_train, n_flip).into_vec();
    noisy_labels.sort_unstable();
    let mut observed = train_labels.clone();
    for &i in &noisy_labels {
        observed[i] = (observed[i] + 1 + rng.random_range(0..g - 1)) % g;
    }

    let wavelengths: Vec<f64> = (0..p).map(|j| 1100.0 + 2.0 * j as f64).collect();
    let class_names: Vec<String> = (1..=g).map(|k| format!("c{k}")).collect();
    let train = LabeledSpectra {
        data: train_data,
        labels: Some(observed),
        wavelengths: wavelengths.clone(),
        unit: WavelengthUnit::Nanometer,
        class_names: class_names.clone(),
    };
    let mut test = LabeledSpectra {
        data: test_data,
        labels: Some(test_labels),
        wavelengths,
        unit: WavelengthUnit::Nanometer,
        class_names,
    };
    let reference = channel_sd(&train.data);
    let outliers = inject_outliers(&mut test, &cfg.contamination.outliers, &reference, &mut rng)?;
    Ok(Simulation {
        train,
        test,
        truth: GroundTruth {
            relevant,
            redundant,
            noisy_labels,
            clean_labels: train_labels,
            outliers,
            config: cfg.clone(),
        },
    })
}

/// Sample standard deviation of every column.
pub fn channel_sd(data: &Array2<f64>) -> Array1<f64> {
    data.std_axis(Axis(0), 1.0)
}

/// Appends one adulterated copy of a random labeled row per recipe.
/// `reference_sd` scales spikes and the default white noise.
pub fn inject_outliers(
    test: &mut LabeledSpectra,
    recipes: &[OutlierRecipe],
    reference_sd: &Array1<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<InjectedOutlier>> {
    let (n, p) = test.data.dim();
    if reference_sd.len() != p {
        return Err(Error::Config(
            "reference deviations do not match the channels".into(),
        ));
    }
    let labels = test.labels()?.to_vec();
    let mut class_means = Array2::<f64>::zeros((test.n_classes(), p));
    let mut counts = vec![0usize; test.n_classes()];
    for (row, &l) in test.data.rows().into_iter().zip(&labels) {
        class_means.row_mut(l).scaled_add(1.0, &row);
        counts[l] += 1;
    }
    for (mut m, &c) in class_means.rows_mut().into_iter().zip(&counts) {
        m /= c.max(1) as f64;
    }
    let mean_sd = reference_sd.mean().unwrap_or(1.0);

    let mut injected = Vec::with_capacity(recipes.len());
    let mut new_rows = Vec::with_capacity(recipes.len());
    let mut new_labels = Vec::with_capacity(recipes.len());
    for recipe in recipes {
        recipe.check(p)?;
        let source = rng.random_range(0..n);
        let base = test.data.row(source);
        let class = labels[source];
        let row: Vec<f64> = match *recipe {
            OutlierRecipe::Shift { channels } => (0..p)
                .map(|j| {
                    if j + channels < p {
                        base[j + channels]
                    } else {
                        class_means[[class, j]]
                    }
                })
                .collect(),
            OutlierRecipe::WhiteNoise { sigma } => {
                let s = sigma.unwrap_or(2.0 * mean_sd);
                base.iter()
                    .map(|&v| {
                        let z: f64 = rng.sample(StandardNormal);
                        v + s * z
                    })
                    .collect()
            }
            OutlierRecipe::Spike { channel, magnitude } => {
                let mut r = base.to_vec();
                r[channel] += magnitude * reference_sd[channel];
                r
            }
            OutlierRecipe::Slope { factor } => base.iter().map(|&v| v * factor).collect(),
        };
        injected.push(InjectedOutlier {
            row: n + injected.len(),
            source,
            recipe: *recipe,
        });
        new_rows.push(row);
        new_labels.push(class);
    }
    let extra = Array2::from_shape_vec((new_rows.len(), p), new_rows.concat())
        .expect("rows have one value per channel");
    test.data
        .append(Axis(0), extra.view())
        .expect("column counts agree");
    if let Some(l) = test.labels.as_mut() {
        l.extend(new_labels);
    }
    Ok(injected)
}
