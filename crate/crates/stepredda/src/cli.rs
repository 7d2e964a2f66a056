//! Command-line front end. `run` returns the process exit status: 0 on
//! success, 1 for data errors, 2 for usage errors. Failures print one JSON
//! line on stderr.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use stepredda_core::{CovarianceFamily, FitConfig};

use crate::error::{Error, Result};
use crate::model::{file_digest, load_model, save_model, ModelArtifact, RunManifest, TOOL_VERSION};
use crate::pairs::export_pairs_data;
use crate::pipeline::{self, FamilyChoice, PipelineConfig, STEP_LOG_HEADER};
use crate::simulate::{
    channel_sd, inject_outliers, simulate_contaminated, ContaminationSpec, OutlierRecipe,
    SimulationConfig,
};
use crate::spectra::{read_csv, save_csv, CsvSchema, LabeledSpectra};

#[derive(Debug, Parser)]
#[command(
    name = "stepredda",
    version,
    about = "Robust stepwise variable selection for labeled spectra"
)]
pub struct Cli {
    /// Worker threads (defaults to available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Select channels stepwise, then fit and save a model.
    Select(SelectArgs),
    /// Fit a model on a given list of channels.
    Train(TrainArgs),
    /// MAP class labels and posterior probabilities.
    Predict(ScoreArgs),
    /// Marginal log-density of each row, least plausible first.
    Outliers(OutlierArgs),
    /// Write simulated train/test spectra and their ground truth.
    Simulate(SimulateArgs),
    /// Export selected channels in long format for pairs plots.
    Pairs(PairsArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    /// Name of the label column.
    #[arg(long, default_value = "class")]
    label: String,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

fn parse_gamma(s: &str) -> std::result::Result<f64, String> {
    let g: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..0.5).contains(&g) {
        Ok(g)
    } else {
        Err(format!("{g} is outside [0, 0.5)"))
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Fraction of training rows left out by trimming.
    #[arg(long, default_value = "0.03", value_parser = parse_gamma)]
    gamma: f64,
    /// Covariance family code, or `auto`.
    #[arg(long, default_value = "auto")]
    family: FamilyChoice,
    /// Channels compared when the family is `auto`.
    #[arg(long, default_value_t = 10)]
    screen_top: usize,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    restarts: u32,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl FitArgs {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            family: match self.family {
                FamilyChoice::Auto { .. } => FamilyChoice::Auto {
                    top: self.screen_top,
                },
                fixed => fixed,
            },
            gamma: self.gamma,
            fit: FitConfig {
                max_iter: self.max_iter,
                n_restarts: self.restarts as usize,
                tol: self.tol,
                seed: self.seed,
            },
            ..PipelineConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    fit: FitArgs,
    /// Smallest TBIC difference that accepts a step.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    min_diff: f64,
    /// Defaults to twice the number of channels.
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Tab-separated step log (defaults to `<out>` with a `.steps.tsv` suffix).
    #[arg(long)]
    step_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    fit: FitArgs,
    /// Comma-separated 0-based channel indices.
    #[arg(long, value_delimiter = ',', required = true)]
    vars: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct OutlierArgs {
    #[command(flatten)]
    score: ScoreArgs,
    /// List only the `k` least plausible rows.
    #[arg(long)]
    top: Option<usize>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long = "train", default_value_t = 300)]
    n_train: usize,
    #[arg(long = "test", default_value_t = 150)]
    n_test: usize,
    #[arg(long, default_value_t = 30)]
    channels: usize,
    #[arg(long, default_value_t = 4)]
    relevant: usize,
    #[arg(long, default_value_t = 0)]
    redundant: usize,
    #[arg(long, default_value_t = 3.0)]
    separation: f64,
    #[arg(long, default_value = "EEI")]
    family: CovarianceFamily,
    #[arg(long, default_value_t = 0.0)]
    label_noise: f64,
    /// Append the four adulterated test spectra.
    #[arg(long)]
    outliers: bool,
    /// Spiked channel (defaults to the first relevant one).
    #[arg(long)]
    spike_channel: Option<usize>,
    #[arg(long, default_value_t = 10.0)]
    spike: f64,
    /// White-noise deviation (defaults to twice the mean channel deviation).
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long, default_value_t = 15)]
    shift: usize,
    #[arg(long, default_value_t = 1.2)]
    slope: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct PairsArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Take the channels from a model file.
    #[arg(long, conflicts_with = "vars", required_unless_present = "vars")]
    model: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    vars: Option<Vec<usize>>,
    #[arg(long)]
    out_dir: PathBuf,
}

struct Loaded {
    spectra: LabeledSpectra,
    digest: String,
}

fn delimiter(c: char) -> Result<u8> {
    u8::try_from(c)
        .ok()
        .filter(u8::is_ascii)
        .ok_or_else(|| Error::Config(format!("delimiter {c:?} is not a single ASCII character")))
}

fn load(
    input: &InputArgs,
    require_label: bool,
    class_names: Option<Vec<String>>,
) -> Result<Loaded> {
    let bytes = fs::read(&input.input).map_err(|e| Error::io(&input.input, e))?;
    let schema = CsvSchema {
        label: Some(input.label.clone()),
        delimiter: delimiter(input.delimiter)?,
        unit: None,
        class_names,
        require_label,
    };
    let spectra = read_csv(bytes.as_slice(), &schema)?;
    log::info!(
        "{}: {} rows, {} channels",
        input.input.display(),
        spectra.n_samples(),
        spectra.n_channels()
    );
    Ok(Loaded {
        spectra,
        digest: file_digest(&bytes),
    })
}

fn with_input(mut manifest: RunManifest, input: &InputArgs, digest: String) -> RunManifest {
    manifest.input = Some(input.input.display().to_string());
    manifest.input_sha256 = Some(digest);
    manifest
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_stem().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Schema(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn cmd_select(args: &SelectArgs) -> Result<()> {
    let loaded = load(&args.input, true, None)?;
    let mut cfg = args.fit.config();
    cfg.min_diff = args.min_diff;
    cfg.max_steps = args.max_steps;
    let manifest = with_input(cfg.manifest("select"), &args.input, loaded.digest);

    let log_path = args
        .step_log
        .clone()
        .unwrap_or_else(|| sibling(&args.out, ".steps.tsv"));
    let mut log_file = create(&log_path)?;
    let mut write_err = None;
    writeln!(log_file, "{STEP_LOG_HEADER}").map_err(|e| Error::io(&log_path, e))?;
    let wavelengths = loaded.spectra.wavelengths.clone();
    let run = pipeline::select(&loaded.spectra, &cfg, manifest, |record| {
        let line = pipeline::step_log_line(record, &wavelengths);
        log::info!("{line}");
        if let Err(e) = writeln!(log_file, "{line}").and_then(|_| log_file.flush()) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(Error::io(&log_path, e));
    }
    let artifact = run.artifact.ok_or(Error::EmptySelection)?;
    save_model(&artifact, &args.out)?;
    log::info!(
        "selected {:?} with family {}",
        artifact.selected,
        artifact.family
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let loaded = load(&args.input, true, None)?;
    let cfg = args.fit.config();
    let manifest = with_input(cfg.manifest("train"), &args.input, loaded.digest);
    let artifact = pipeline::train(&loaded.spectra, &args.vars, &cfg, manifest)?;
    save_model(&artifact, &args.out)
}

fn score_manifest(
    command: &str,
    args: &ScoreArgs,
    model_digest: &str,
    input_digest: &str,
) -> serde_json::Value {
    json!({
        "command": command,
        "tool_version": TOOL_VERSION,
        "model": args.model.display().to_string(),
        "model_sha256": model_digest,
        "input": args.input.input.display().to_string(),
        "input_sha256": input_digest,
    })
}

fn load_for_scoring(args: &ScoreArgs) -> Result<(ModelArtifact, String, Loaded)> {
    let bytes = fs::read(&args.model).map_err(|e| Error::io(&args.model, e))?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Schema(e.to_string()))?;
    let artifact = ModelArtifact::from_json(&text)?;
    let loaded = load(&args.input, false, Some(artifact.class_names.clone()))?;
    Ok((artifact, file_digest(text.as_bytes()), loaded))
}

fn cmd_predict(args: &ScoreArgs) -> Result<()> {
    let (artifact, model_digest, loaded) = load_for_scoring(args)?;
    let pred = pipeline::predict(&artifact, &loaded.spectra)?;
    let mut out = create(&args.out)?;
    let io = |e| Error::io(&args.out, e);
    let mut header = vec!["row".to_string(), "label".to_string()];
    header.extend(
        artifact
            .class_names
            .iter()
            .map(|c| format!("posterior_{c}")),
    );
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for (i, &l) in pred.labels.iter().enumerate() {
        let post: Vec<String> = pred
            .posterior
            .row(i)
            .iter()
            .map(|p| p.to_string())
            .collect();
        writeln!(out, "{i},{},{}", artifact.class_names[l], post.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)?;
    let mut manifest = score_manifest("predict", args, &model_digest, &loaded.digest);
    if let Some(truth) = &loaded.spectra.labels {
        let correct = truth
            .iter()
            .zip(&pred.labels)
            .filter(|(a, b)| a == b)
            .count();
        log::info!("{correct} of {} correctly classified", truth.len());
        manifest["correct"] = json!(correct);
        manifest["total"] = json!(truth.len());
    }
    write_json(&sibling(&args.out, ".manifest.json"), &manifest)
}

fn cmd_outliers(args: &OutlierArgs) -> Result<()> {
    let score = &args.score;
    let (artifact, model_digest, loaded) = load_for_scoring(score)?;
    let report = pipeline::outliers(&artifact, &loaded.spectra)?;
    let rows: Vec<usize> = match args.top {
        Some(k) => report.ascending().into_iter().take(k).collect(),
        None => (0..report.rank.len()).collect(),
    };
    let mut out = create(&score.out)?;
    let io = |e| Error::io(&score.out, e);
    writeln!(out, "row,log_density,rank").map_err(io)?;
    for i in rows {
        writeln!(out, "{i},{},{}", report.log_density[i], report.rank[i]).map_err(io)?;
    }
    out.flush().map_err(io)?;
    let mut manifest = score_manifest("outliers", score, &model_digest, &loaded.digest);
    manifest["top"] = json!(args.top);
    write_json(&sibling(&score.out, ".manifest.json"), &manifest)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let cfg = SimulationConfig {
        n_classes: args.classes,
        n_train: args.n_train,
        n_test: args.n_test,
        n_channels: args.channels,
        n_relevant: args.relevant,
        separation: args.separation,
        family: args.family,
        redundant: args.redundant,
        contamination: ContaminationSpec {
            label_noise_rate: args.label_noise,
            outliers: Vec::new(),
        },
        seed: args.seed,
    };
    let mut sim = simulate_contaminated(&cfg)?;
    if args.outliers {
        let channel = args
            .spike_channel
            .or_else(|| sim.truth.relevant.first().copied())
            .unwrap_or(0);
        let recipes = vec![
            OutlierRecipe::Shift {
                channels: args.shift,
            },
            OutlierRecipe::WhiteNoise {
                sigma: args.noise_sigma,
            },
            OutlierRecipe::Spike {
                channel,
                magnitude: args.spike,
            },
            OutlierRecipe::Slope { factor: args.slope },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        rng.set_stream(1);
        let sd = channel_sd(&sim.train.data);
        sim.truth.outliers = inject_outliers(&mut sim.test, &recipes, &sd, &mut rng)?;
        sim.truth.config.contamination.outliers = recipes;
    }
    let dir = &args.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_csv(dir.join("train.csv"), &sim.train, "class", b',')?;
    save_csv(dir.join("test.csv"), &sim.test, "class", b',')?;
    let truth = serde_json::to_value(&sim.truth).map_err(|e| Error::Schema(e.to_string()))?;
    write_json(&dir.join("truth.json"), &truth)?;
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "command": "simulate",
            "tool_version": TOOL_VERSION,
            "seed": args.seed,
            "config": truth["config"],
        }),
    )
}

fn cmd_pairs(args: &PairsArgs) -> Result<()> {
    let loaded = load(&args.input, false, None)?;
    let vars = match (&args.model, &args.vars) {
        (Some(path), _) => load_model(path)?.selected,
        (None, Some(v)) => v.clone(),
        (None, None) => unreachable!("clap requires one of them"),
    };
    let export = export_pairs_data(&loaded.spectra, &vars, &args.out_dir)?;
    log::info!(
        "{} rows x {} channels, {} pairs",
        export.manifest.n_rows,
        vars.len(),
        export.manifest.pairs.len()
    );
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Select(a) => cmd_select(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Outliers(a) => cmd_outliers(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Pairs(a) => cmd_pairs(a),
    }
}

fn error_line(kind: &str, message: &str) -> String {
    json!({ "error": kind, "message": message }).to_string()
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("usage error");
            eprintln!(
                "{}",
                error_line("usage", first.trim_start_matches("error: "))
            );
            return 2;
        }
    };
    let threads = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("{}", error_line("usage", &e.to_string()));
            return 2;
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            1
        }
    }
}
