//! Command-line front end. Every subcommand writes its artifacts under
//! `--out` together with a `run_manifest.json` holding the resolved config.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bayesopt::BoConfig;
use crate::classify::{fit, ClassifierKind, ClassifierSpec, LabeledFeatures};
use crate::error::{Error, Result};
use crate::eval::{
    classifier_space, compute_metrics, loocv_with, render_table, run_pipeline, tune_classifier, tune_snn, write_fold_csv,
    write_json, MetricsReport, Mode, PipelineConfig, PipelineId,
};
use crate::pairing::{balance_pairs, enumerate_pairs, pair_stats};
use crate::seed::derive_seed;
use crate::siamese::{extract_features, load_checkpoint, save_checkpoint, train, write_loss_trace, Pooling, SiameseModel};
use crate::signal::{entry_path, generate_synthetic_cohort, load_dataset, read_channel_names, read_manifest, save_dataset};
use crate::signal::{SubjectInfo, SynthConfig};
use crate::spectral::{compute_images, compute_raw_images, write_image_csv, write_image_pgm, WindowFn};

#[derive(Debug, Parser)]
#[command(name = "eegsiam", version, about = "Siamese spectral-image features for EEG case-control classification")]
pub struct Cli {
    /// Worker threads for folds and batches; 1 keeps runs bit-reproducible.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort (CSV per subject plus manifest).
    Synth(SynthArgs),
    /// Compute normalised spectral images.
    Stft(StftArgs),
    /// Pair-set statistics.
    Pairs(PairsArgs),
    /// Tune the network and normaliser on the tuning partition.
    TuneSnn(TuneSnnArgs),
    /// Train the network on every subject of a manifest.
    TrainSnn(TrainSnnArgs),
    /// Embed every channel with a trained network.
    Extract(ExtractArgs),
    /// Tune a classifier on a feature table.
    TuneClf(TuneClfArgs),
    /// Leave-one-subject-out evaluation on a feature table.
    Loocv(LoocvArgs),
    /// Run a full pipeline end to end.
    Run(RunArgs),
    /// Combine report.json files into one table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, env = "EEGSIAM_OUT", default_value = "eegsiam-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    pub cases: usize,
    #[arg(long, default_value_t = 4)]
    pub controls: usize,
    #[arg(long, default_value_t = 16)]
    pub channels: usize,
    #[arg(long, default_value_t = 60.0)]
    pub duration_s: f64,
    #[arg(long, default_value_t = 128.0)]
    pub sample_rate: f64,
    /// Standard deviation of the additive white noise.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Overrides applied on top of `--config`.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// JSON pipeline config; flags below take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub window_s: Option<f64>,
    #[arg(long)]
    pub hop_s: Option<f64>,
    #[arg(long)]
    pub window_fn: Option<WindowFn>,
    /// Magnitude normaliser U.
    #[arg(long)]
    pub upper_value: Option<f64>,
    /// Crop spectral images to this frequency.
    #[arg(long)]
    pub max_freq_hz: Option<f64>,
    #[arg(long)]
    pub pooling: Option<Pooling>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub kernel_size: Option<usize>,
    #[arg(long)]
    pub output_dim: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub l1_lambda: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    /// Subsample the majority pair class.
    #[arg(long)]
    pub balance: bool,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg: PipelineConfig = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                serde_json::from_str(&text).map_err(|source| Error::Json { path: path.clone(), source })?
            }
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        set!(cfg.stft.window_s, self.window_s);
        set!(cfg.stft.hop_s, self.hop_s);
        set!(cfg.stft.window_fn, self.window_fn);
        set!(cfg.stft.upper_value, self.upper_value);
        if self.max_freq_hz.is_some() {
            cfg.stft.max_freq_hz = self.max_freq_hz;
        }
        set!(cfg.net.pooling, self.pooling);
        set!(cfg.net.epochs, self.epochs);
        set!(cfg.net.kernel_size, self.kernel_size);
        set!(cfg.net.output_dim, self.output_dim);
        set!(cfg.net.learning_rate, self.learning_rate);
        set!(cfg.net.l1_lambda, self.l1_lambda);
        set!(cfg.net.margin, self.margin);
        set!(cfg.mode, self.mode);
        set!(cfg.seed, self.seed);
        cfg.balance_pairs |= self.balance;
        cfg.net.seed = cfg.seed;
        cfg.net.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct StftArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Also write PGM previews.
    #[arg(long)]
    pub pgm: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    /// Only `stats` is available.
    #[arg(value_parser = ["stats"])]
    pub action: String,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub balance: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    /// Acquisitions after the initial design.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Initial design size.
    #[arg(long)]
    pub init: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TuneSnnArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct TrainSnnArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Network checkpoint written by `train-snn`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct TuneClfArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub model: ClassifierKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct LoocvArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub model: ClassifierKind,
    /// Fixed classifier spec as JSON, e.g. '{"kind":"knn","k":3}'.
    #[arg(long)]
    pub spec: Option<String>,
    /// Tune the classifier inside every fold.
    #[arg(long)]
    pub tune: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub pipeline: PipelineId,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub tune_snn: bool,
    #[arg(long)]
    pub tune_clf: bool,
    #[arg(long)]
    pub snn_budget: Option<usize>,
    #[arg(long)]
    pub snn_init: Option<usize>,
    #[arg(long)]
    pub clf_budget: Option<usize>,
    #[arg(long)]
    pub clf_init: Option<usize>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directories or files holding report.json.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Serialize)]
struct StageManifest<'a, T: Serialize> {
    command: &'a str,
    inputs: Vec<String>,
    #[serde(flatten)]
    resolved: T,
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_stage_manifest<T: Serialize>(dir: &Path, command: &str, inputs: &[&Path], resolved: T) -> Result<()> {
    let m = StageManifest { command, inputs: inputs.iter().map(|p| p.display().to_string()).collect(), resolved };
    write_json(&m, &dir.join("run_manifest.json"))
}

fn bo_config(budget: &BudgetArgs, default_init: usize, default_acq: usize, seed: u64) -> BoConfig {
    BoConfig {
        n_init: budget.init.unwrap_or(default_init),
        n_acquisitions: budget.budget.unwrap_or(default_acq),
        seed,
        ..BoConfig::default()
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Stft(a) => stft(a),
        Command::Pairs(a) => pairs(a),
        Command::TuneSnn(a) => tune_snn_cmd(a),
        Command::TrainSnn(a) => train_snn(a),
        Command::Extract(a) => extract(a),
        Command::TuneClf(a) => tune_clf(a),
        Command::Loocv(a) => loocv(a),
        Command::Run(a) => run_cmd(a),
        Command::Report(a) => report(a),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_case: a.cases,
        n_control: a.controls,
        m_channels: a.channels,
        duration_s: a.duration_s,
        sample_rate_hz: a.sample_rate,
        noise_sigma: a.noise,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let dataset = generate_synthetic_cohort(&cfg)?;
    let manifest = save_dataset(&dataset, &a.out.out)?;
    write_stage_manifest(&a.out.out, "synth", &[], &cfg)?;
    eprintln!("wrote {} subjects to {}", dataset.len(), manifest.display());
    Ok(())
}

fn stft(a: StftArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let dataset = load_dataset(&a.manifest)?;
    let store = compute_images(&dataset, &cfg.stft)?;
    let dir = a.out.out.join("images");
    create_out(&dir)?;
    for img in store.images() {
        let stem = format!("{}_ch{:02}", img.subject_id, img.channel_index);
        write_image_csv(img, &dir.join(format!("{stem}.csv")))?;
        if a.pgm {
            write_image_pgm(img, &dir.join(format!("{stem}.pgm")))?;
        }
    }
    write_stage_manifest(&a.out.out, "stft", &[&a.manifest], &cfg.stft)?;
    let (f, w) = store.image_shape();
    eprintln!("wrote {} images of {f}x{w} to {}", store.images().len(), dir.display());
    Ok(())
}

/// Reads only the manifest and one CSV header, so it stays fast on full cohorts.
fn pairs(a: PairsArgs) -> Result<()> {
    let entries = read_manifest(&a.manifest)?;
    let channels = read_channel_names(&entry_path(&a.manifest, &entries[0]))?.len();
    let subjects: Vec<SubjectInfo> =
        entries.iter().map(|e| SubjectInfo { subject_id: e.subject_id.clone(), label: e.label }).collect();
    let mut pairs = enumerate_pairs(&subjects, channels);
    if a.balance {
        pairs = balance_pairs(&pairs, channels, a.seed)?;
    }
    let stats = pair_stats(&subjects, &pairs, channels);
    println!("O = {}", stats.total);
    println!("{}", serde_json::to_string_pretty(&stats).expect("pair stats serialise"));
    Ok(())
}

fn tune_snn_cmd(a: TuneSnnArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let dataset = load_dataset(&a.manifest)?;
    let raw = compute_raw_images(&dataset, &cfg.stft)?;
    let mut subjects = dataset.subjects();
    subjects.sort();
    let holdout = subjects[0].subject_id.clone();
    let part: Vec<usize> = (0..raw.subjects().len()).filter(|&i| raw.subjects()[i].subject_id != holdout).collect();
    let bo = bo_config(&a.budget, cfg.snn_budget.n_init, cfg.snn_budget.n_acquisitions, derive_seed(cfg.seed, "bo-snn", 0));
    let tuned = tune_snn(&raw, &part, &cfg.net, &cfg.stft, &bo, cfg.inner_folds, cfg.balance_pairs)?;
    create_out(&a.out.out)?;
    tuned.state.write_trace_csv(&a.out.out.join("snn_bo_trace.csv"))?;
    let resolved = PipelineConfig { net: tuned.net.clone(), stft: tuned.stft.clone(), ..cfg };
    write_json(&resolved, &a.out.out.join("tuned_config.json"))?;
    #[derive(Serialize)]
    struct Resolved {
        config: PipelineConfig,
        bo: BoConfig,
        tuning_holdout: String,
        best_value: f64,
    }
    write_stage_manifest(
        &a.out.out,
        "tune-snn",
        &[&a.manifest],
        Resolved { config: resolved, bo, tuning_holdout: holdout, best_value: tuned.best_value },
    )?;
    eprintln!("best validation pair accuracy {:.4}", tuned.best_value);
    Ok(())
}

fn train_snn(a: TrainSnnArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let dataset = load_dataset(&a.manifest)?;
    let store = compute_images(&dataset, &cfg.stft)?;
    let c = store.n_channels();
    let mut pairs = enumerate_pairs(store.subjects(), c);
    if cfg.balance_pairs {
        pairs = balance_pairs(&pairs, c, derive_seed(cfg.seed, "pair-balance", 0))?;
    }
    let model = SiameseModel::new(cfg.net.clone(), store.image_shape())?;
    let trained = train(model, &store, &pairs)?;
    create_out(&a.out.out)?;
    save_checkpoint(&trained.model, &a.out.out.join("snn_checkpoint.json"))?;
    write_loss_trace(&trained.loss_trace, &a.out.out.join("loss_trace.csv"))?;
    write_stage_manifest(&a.out.out, "train-snn", &[&a.manifest], &cfg)?;
    eprintln!("trained on {} pairs; final loss {:.6}", pairs.len(), trained.loss_trace.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

fn extract(a: ExtractArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let model = load_checkpoint(&a.checkpoint)?;
    let dataset = load_dataset(&a.manifest)?;
    let store = compute_images(&dataset, &cfg.stft)?;
    let features = extract_features(&model, &store)?;
    create_out(&a.out.out)?;
    features.write_csv(&a.out.out.join("features.csv"))?;
    write_stage_manifest(&a.out.out, "extract", &[&a.manifest, &a.checkpoint], &cfg.stft)?;
    eprintln!("wrote {} feature rows of dimension {}", features.len(), features.dim());
    Ok(())
}

fn tune_clf(a: TuneClfArgs) -> Result<()> {
    let features = LabeledFeatures::read_csv(&a.features)?;
    let bo = bo_config(&a.budget, 5, 10, a.seed);
    let (spec, state) = tune_classifier(&features, a.model, &bo, 5)?;
    create_out(&a.out.out)?;
    if let Some(state) = &state {
        state.write_trace_csv(&a.out.out.join("classifier_bo_trace.csv"))?;
    }
    write_json(&spec, &a.out.out.join("classifier.json"))?;
    #[derive(Serialize)]
    struct Resolved {
        spec: ClassifierSpec,
        bo: BoConfig,
        searched: bool,
    }
    let searched = !classifier_space(a.model).is_empty();
    write_stage_manifest(&a.out.out, "tune-clf", &[&a.features], Resolved { spec: spec.clone(), bo, searched })?;
    eprintln!("selected {spec:?}");
    Ok(())
}

fn loocv(a: LoocvArgs) -> Result<()> {
    let features = LabeledFeatures::read_csv(&a.features)?;
    let fixed: ClassifierSpec = match &a.spec {
        Some(text) => serde_json::from_str(text).map_err(|e| Error::param(format!("bad --spec: {e}")))?,
        None => ClassifierSpec::default_for(a.model),
    };
    if fixed.kind() != a.model {
        return Err(Error::param("--spec kind differs from --model"));
    }
    fixed.validate()?;
    let folds = loocv_with(&features, |fi, train, test| {
        let spec = if a.tune {
            let bo = bo_config(&a.budget, 5, 10, derive_seed(a.seed, "bo-clf", fi as u64));
            tune_classifier(train, a.model, &bo, 5)?.0
        } else {
            fixed.clone()
        };
        let model = fit(&spec, train, derive_seed(a.seed, "clf-fit", fi as u64))?;
        let labels = model.predict(test)?.into_iter().map(|p| p.label).collect();
        Ok((labels, Some(spec)))
    })?;
    let report = compute_metrics(&format!("features-{}", a.model.display()), folds);
    write_report(&report, &a.out.out)?;
    write_stage_manifest(&a.out.out, "loocv", &[&a.features], &fixed)?;
    print!("{}", render_table(std::slice::from_ref(&report)));
    Ok(())
}

fn write_report(report: &MetricsReport, dir: &Path) -> Result<()> {
    create_out(dir)?;
    write_json(report, &dir.join("report.json"))?;
    fs::write(dir.join("report.txt"), render_table(std::slice::from_ref(report)))
        .map_err(|e| Error::io(dir.join("report.txt"), e))?;
    write_fold_csv(report, &dir.join("folds.csv"))
}

fn run_cmd(a: RunArgs) -> Result<()> {
    let mut cfg = a.config.resolve()?;
    cfg.tune_snn |= a.tune_snn;
    cfg.tune_classifier |= a.tune_clf;
    if let Some(v) = a.snn_budget {
        cfg.snn_budget.n_acquisitions = v;
    }
    if let Some(v) = a.snn_init {
        cfg.snn_budget.n_init = v;
    }
    if let Some(v) = a.clf_budget {
        cfg.classifier_budget.n_acquisitions = v;
    }
    if let Some(v) = a.clf_init {
        cfg.classifier_budget.n_init = v;
    }
    let dataset = load_dataset(&a.manifest)?;
    let run = run_pipeline(a.pipeline, &dataset, &cfg, Some(&a.out.out))?;
    print!("{}", render_table(std::slice::from_ref(&run.report)));
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let mut reports = Vec::with_capacity(a.inputs.len());
    for input in &a.inputs {
        let path = if input.is_dir() { input.join("report.json") } else { input.clone() };
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let r: MetricsReport = serde_json::from_str(&text).map_err(|source| Error::Json { path: path.clone(), source })?;
        reports.push(r);
    }
    let table = render_table(&reports);
    create_out(&a.out.out)?;
    let txt = a.out.out.join("report.txt");
    fs::write(&txt, &table).map_err(|e| Error::io(&txt, e))?;
    let inputs: Vec<&Path> = a.inputs.iter().map(PathBuf::as_path).collect();
    let pipelines: Vec<&str> = reports.iter().map(|r| r.pipeline.as_str()).collect();
    write_stage_manifest(&a.out.out, "report", &inputs, serde_json::json!({ "pipelines": pipelines }))?;
    print!("{table}");
    Ok(())
}
